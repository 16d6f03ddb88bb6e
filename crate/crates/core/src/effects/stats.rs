use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::stats::{mean, sample_variance, students_t_two_sided};

/// Signed standardized difference `(mean(b) - mean(a)) / sqrt((var_a + var_b) / 2)`.
///
/// Returns `Ok(None)` when the pooled SD is zero; such cells are flagged and
/// left out of every aggregate.
pub fn pair_cohens_d(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "cohen's d needs two equal-length samples of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let pooled = ((sample_variance(a) + sample_variance(b)) / 2.0).sqrt();
    if pooled == 0.0 || !pooled.is_finite() {
        return Ok(None);
    }
    Ok(Some((mean(b) - mean(a)) / pooled))
}

fn tolerance(diffs: &[f64]) -> f64 {
    1e-9 * diffs.iter().map(|d| d.abs()).sum::<f64>()
}

/// Exact two-sided sign-flip p over all 2^n sign patterns.
pub fn permutation_test_exact(diffs: &[f64]) -> Result<f64> {
    if diffs.is_empty() {
        return Err(Error::InvalidInput(
            "permutation test needs at least one difference".into(),
        ));
    }
    if diffs.len() > 30 {
        return Err(Error::InvalidArgument(format!(
            "exact enumeration over {} differences is infeasible",
            diffs.len()
        )));
    }
    let observed = diffs.iter().sum::<f64>().abs();
    if observed == 0.0 && diffs.iter().all(|&d| d == 0.0) {
        return Ok(1.0);
    }
    let tol = tolerance(diffs);
    let total = 1u64 << diffs.len();
    let mut count = 0u64;
    for mask in 0..total {
        let s: f64 = diffs
            .iter()
            .enumerate()
            .map(|(i, &d)| if mask >> i & 1 == 1 { -d } else { d })
            .sum();
        if s.abs() >= observed - tol {
            count += 1;
        }
    }
    Ok(count as f64 / total as f64)
}

/// Monte-Carlo sign-flip p with the `(count + 1) / (n_iter + 1)` correction.
pub fn permutation_test_sampled(diffs: &[f64], n_iter: usize, seed: u64) -> Result<f64> {
    if diffs.is_empty() {
        return Err(Error::InvalidInput(
            "permutation test needs at least one difference".into(),
        ));
    }
    if n_iter == 0 {
        return Err(Error::InvalidArgument("n_iter must be positive".into()));
    }
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(1.0);
    }
    let observed = diffs.iter().sum::<f64>().abs();
    let tol = tolerance(diffs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0usize;
    for _ in 0..n_iter {
        let mut s = 0.0;
        for chunk in diffs.chunks(64) {
            let bits = rng.next_u64();
            for (i, &d) in chunk.iter().enumerate() {
                s += if bits >> i & 1 == 1 { -d } else { d };
            }
        }
        if s.abs() >= observed - tol {
            count += 1;
        }
    }
    Ok((count + 1) as f64 / (n_iter + 1) as f64)
}

/// Two-sided sign-flip test on the mean of paired differences. Enumerates
/// exactly when `2^n <= n_iter`, otherwise samples `n_iter` sign patterns.
pub fn permutation_test(diffs: &[f64], n_iter: usize, seed: u64) -> Result<f64> {
    let exact = diffs.len() < 64 && (1u64 << diffs.len()) <= n_iter as u64;
    if exact {
        permutation_test_exact(diffs)
    } else {
        permutation_test_sampled(diffs, n_iter, seed)
    }
}

/// Benjamini-Hochberg step-up q-values in input order.
pub fn bh_fdr(pvals: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = pvals.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::InvalidInput(format!("p-value {bad} outside (0, 1]")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(pvals[i] * m as f64 / (rank + 1) as f64);
        q[i] = running.min(1.0);
    }
    Ok(q)
}

/// One-sample t-test of the differences against zero; `None` for zero variance.
pub fn one_sample_t_p(diffs: &[f64]) -> Option<f64> {
    if diffs.len() < 2 {
        return None;
    }
    let sd = sample_variance(diffs).sqrt();
    if sd == 0.0 {
        return None;
    }
    let n = diffs.len() as f64;
    let t = mean(diffs) / (sd / n.sqrt());
    Some(students_t_two_sided(t, n - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cohens_d_fixtures() {
        assert_eq!(
            pair_cohens_d(&[4.0, 5.0, 6.0], &[6.0, 7.0, 8.0]).unwrap(),
            Some(2.0)
        );
        assert_eq!(pair_cohens_d(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), Some(0.0));
        assert_eq!(pair_cohens_d(&[5.0, 5.0], &[5.0, 5.0]).unwrap(), None);
        assert!(pair_cohens_d(&[1.0], &[2.0]).is_err());
        assert!(pair_cohens_d(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn permutation_fixtures() {
        assert_eq!(permutation_test(&[1.0, 1.0, 1.0], 10_000, 1).unwrap(), 0.25);
        assert_eq!(permutation_test(&[0.0, 0.0, 0.0], 10_000, 1).unwrap(), 1.0);
        assert_eq!(permutation_test(&[2.0], 10_000, 1).unwrap(), 1.0);
        assert!(permutation_test(&[], 10, 1).is_err());
    }

    #[test]
    fn auto_mode_switches_on_pattern_count() {
        let diffs: Vec<f64> = (0..14).map(|i| 1.0 + i as f64 * 0.1).collect();
        // 2^14 > 10_000: sampled, so the +1 correction shows up.
        let p = permutation_test(&diffs, 10_000, 7).unwrap();
        assert!((p - 1.0 / 10_001.0).abs() < 1e-3);
        let p = permutation_test(&diffs[..13], 10_000, 7).unwrap();
        assert_eq!(p, 2.0 / 8192.0);
    }

    #[test]
    fn bh_fixtures() {
        let q = bh_fdr(&[0.01, 0.02, 0.03, 0.04]).unwrap();
        for v in q {
            assert!((v - 0.04).abs() < 1e-15);
        }
        assert_eq!(bh_fdr(&[0.5]).unwrap(), vec![0.5]);
        assert!(bh_fdr(&[]).unwrap().is_empty());
        assert!(bh_fdr(&[0.0]).is_err());
        assert!(bh_fdr(&[1.5]).is_err());
    }

    #[test]
    fn t_test_values() {
        // mean 2, sd 1, n 4 gives t = 4 on 3 df; two-sided p = 0.02800...
        let p = one_sample_t_p(&[1.0, 2.0, 3.0, 2.0]).unwrap();
        let sd = (2.0f64 / 3.0).sqrt();
        let t = 2.0 / (sd / 2.0);
        assert!((p - students_t_two_sided(t, 3.0)).abs() < 1e-15);
        assert!(p < 0.05 && p > 0.001);
        assert_eq!(one_sample_t_p(&[1.0, 1.0]), None);
    }
}
