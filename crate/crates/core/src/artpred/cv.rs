use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ridge::{column_stats, hat_fit, ridge_fit, transform, RidgeOptions};
use crate::error::{Error, Result};
use crate::letters::PairClass;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvOptions {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub n_alphas: usize,
    /// Outer folds for consonant contrasts; vowel contrasts use leave-one-out.
    pub cc_folds: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            alpha_min: 1e-3,
            alpha_max: 1e3,
            n_alphas: 50,
            cc_folds: 10,
        }
    }
}

impl CvOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_min > 0.0 && self.alpha_max >= self.alpha_min) || self.n_alphas == 0 {
            return Err(Error::Config(
                "alpha grid needs 0 < alpha_min <= alpha_max and n_alphas > 0".into(),
            ));
        }
        if self.cc_folds < 2 {
            return Err(Error::Config("cc_folds must be at least 2".into()));
        }
        Ok(())
    }

    /// Log-spaced grid from `alpha_min` to `alpha_max` inclusive.
    pub fn alphas(&self) -> Vec<f64> {
        if self.n_alphas == 1 {
            return vec![self.alpha_min];
        }
        let (lo, hi) = (self.alpha_min.log10(), self.alpha_max.log10());
        (0..self.n_alphas)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (self.n_alphas - 1) as f64))
            .collect()
    }
}

/// Fold index per row. Shuffled round-robin for k-fold, identity for leave-one-out.
pub fn fold_assignment(
    n: usize,
    class: PairClass,
    opts: &CvOptions,
    seed: u64,
) -> (Vec<usize>, Option<String>) {
    let loo = || ((0..n).collect(), None);
    match class {
        PairClass::Vv => loo(),
        PairClass::Cc if n < opts.cc_folds => {
            let msg = format!(
                "{n} rows is fewer than {} folds; using leave-one-out",
                opts.cc_folds
            );
            log::warn!("{msg}");
            let (f, _) = loo();
            (f, Some(msg))
        }
        PairClass::Cc => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut folds = vec![0; n];
            for (pos, &row) in order.iter().enumerate() {
                folds[row] = pos % opts.cc_folds;
            }
            (folds, None)
        }
    }
}

/// Picks the alpha with the lowest exact leave-one-out error on the training
/// rows, using the hat-matrix shortcut on centered, standardized features.
pub fn select_alpha(x: &DMatrix<f64>, y: &DVector<f64>, alphas: &[f64]) -> f64 {
    let n = x.nrows();
    let (means, scales) = column_stats(x, true, true);
    let xt = transform(x, &means, &scales);
    let y_mean = y.mean();
    let yc = y.add_scalar(-y_mean);
    let mut best = (f64::INFINITY, alphas[0]);
    for &alpha in alphas {
        let (diag, fitted) = hat_fit(&xt, &yc, alpha);
        let mut sse = 0.0;
        for i in 0..n {
            // The unpenalized intercept adds 1/n to every leverage.
            let h = diag[i] + 1.0 / n as f64;
            let resid = (yc[i] - fitted[i]) / (1.0 - h).max(1e-12);
            sse += resid * resid;
        }
        if sse < best.0 {
            best = (sse, alpha);
        }
    }
    best.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Out-of-fold R² = 1 - SSE/SST over all held-out predictions.
    pub r2: f64,
    pub predictions: Vec<f64>,
    /// Alpha chosen in each outer fold.
    pub fold_alphas: Vec<f64>,
    /// Alpha chosen on all rows, used for the reported coefficients.
    pub alpha: f64,
    /// Standardized coefficients of the all-rows fit.
    pub coefficients: Vec<f64>,
    pub warning: Option<String>,
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Out-of-fold predictions for a fixed fold assignment.
pub fn cv_with_folds(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: &[usize],
    alphas: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_folds = folds.iter().max().map_or(0, |m| m + 1);
    let mut predictions = vec![f64::NAN; y.len()];
    let mut chosen = Vec::with_capacity(n_folds);
    for fold in 0..n_folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != fold).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == fold).collect();
        if test.is_empty() {
            continue;
        }
        let xtr = select_rows(x, &train);
        let ytr = DVector::from_fn(train.len(), |i, _| y[train[i]]);
        let xte = select_rows(x, &test);
        let pred = if x.ncols() == 0 {
            chosen.push(f64::NAN);
            DVector::from_element(test.len(), ytr.mean())
        } else {
            let alpha = select_alpha(&xtr, &ytr, alphas);
            chosen.push(alpha);
            ridge_fit(&xtr, &ytr, alpha, RidgeOptions::default())?.predict(&xte)
        };
        for (k, &i) in test.iter().enumerate() {
            predictions[i] = pred[k];
        }
    }
    Ok((predictions, chosen))
}

pub fn r_squared(y: &DVector<f64>, predictions: &[f64]) -> f64 {
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sse: f64 = y
        .iter()
        .zip(predictions)
        .map(|(v, p)| (v - p).powi(2))
        .sum();
    if sst == 0.0 {
        return f64::NAN;
    }
    1.0 - sse / sst
}

/// Nested cross-validation: outer 10-fold (consonants) or leave-one-out
/// (vowels); each outer training set picks alpha by inner leave-one-out.
pub fn nested_cv(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    class: PairClass,
    seed: u64,
    opts: &CvOptions,
) -> Result<CvResult> {
    opts.validate()?;
    if x.nrows() != y.len() || y.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "nested CV needs matching X/y with at least 3 rows, got {} and {}",
            x.nrows(),
            y.len()
        )));
    }
    let alphas = opts.alphas();
    let (folds, warning) = fold_assignment(y.len(), class, opts, seed);
    let (predictions, fold_alphas) = cv_with_folds(x, y, &folds, &alphas)?;
    let (alpha, coefficients) = if x.ncols() == 0 {
        (f64::NAN, Vec::new())
    } else {
        let alpha = select_alpha(x, y, &alphas);
        let fit = ridge_fit(x, y, alpha, RidgeOptions::default())?;
        (alpha, fit.standardized.iter().copied().collect())
    };
    Ok(CvResult {
        r2: r_squared(y, &predictions),
        predictions,
        fold_alphas,
        alpha,
        coefficients,
        warning,
    })
}

/// ΔR² of dropping `drop` columns, with both models scored on the same folds.
/// Dropping every column leaves an intercept-only baseline.
pub fn ablate(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    drop: &[usize],
    class: PairClass,
    seed: u64,
    opts: &CvOptions,
) -> Result<(f64, f64, f64)> {
    opts.validate()?;
    if drop.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation needs at least one column to drop".into(),
        ));
    }
    if let Some(bad) = drop.iter().find(|&&c| c >= x.ncols()) {
        return Err(Error::InvalidArgument(format!("column {bad} out of range")));
    }
    let alphas = opts.alphas();
    let (folds, _) = fold_assignment(y.len(), class, opts, seed);
    let (full, _) = cv_with_folds(x, y, &folds, &alphas)?;
    let keep: Vec<usize> = (0..x.ncols()).filter(|c| !drop.contains(c)).collect();
    let reduced_x = DMatrix::from_fn(x.nrows(), keep.len(), |i, j| x[(i, keep[j])]);
    let (reduced, _) = cv_with_folds(&reduced_x, y, &folds, &alphas)?;
    let (r_full, r_reduced) = (r_squared(y, &full), r_squared(y, &reduced));
    Ok((r_full, r_reduced, r_full - r_reduced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| f64::from(rng.random_range(-2i32..=2)))
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = CvOptions::default().alphas();
        assert_eq!(g.len(), 50);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[49] - 1e3).abs() < 1e-9);
        let ratio = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-9);
        }
    }

    #[test]
    fn ten_folds_of_twenty_one() {
        let (folds, warn) = fold_assignment(210, PairClass::Cc, &CvOptions::default(), 3);
        assert!(warn.is_none());
        for f in 0..10 {
            assert_eq!(folds.iter().filter(|&&x| x == f).count(), 21);
        }
        let (folds, _) = fold_assignment(10, PairClass::Vv, &CvOptions::default(), 3);
        assert_eq!(folds, (0..10).collect::<Vec<_>>());
        let (folds, warn) = fold_assignment(6, PairClass::Cc, &CvOptions::default(), 3);
        assert!(warn.is_some());
        assert_eq!(folds.len(), 6);
    }

    #[test]
    fn hat_shortcut_matches_refitting() {
        let x = random_design(15, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
        let alpha = 2.5;
        // Brute force: refit without each row, on features standardized over all rows.
        let (means, scales) = column_stats(&x, true, true);
        let xt = transform(&x, &means, &scales);
        let mut brute = 0.0;
        for i in 0..15 {
            let rows: Vec<usize> = (0..15).filter(|&r| r != i).collect();
            let xr = select_rows(&xt, &rows);
            let yr = DVector::from_fn(14, |k, _| y[rows[k]]);
            let fit = ridge_fit(
                &xr,
                &yr,
                alpha,
                RidgeOptions {
                    standardize: false,
                    fit_intercept: true,
                },
            )
            .unwrap();
            let pred = fit.predict(&select_rows(&xt, &[i]))[0];
            brute += (y[i] - pred).powi(2);
        }
        let yc = y.add_scalar(-y.mean());
        let (diag, fitted) = hat_fit(&xt, &yc, alpha);
        let short: f64 = (0..15)
            .map(|i| ((yc[i] - fitted[i]) / (1.0 - diag[i] - 1.0 / 15.0)).powi(2))
            .sum();
        assert!(
            (brute - short).abs() < 1e-9 * brute.max(1.0),
            "{brute} vs {short}"
        );
    }

    #[test]
    fn noiseless_linear_target_is_predicted() {
        let x = random_design(210, 11, 6);
        let beta = DVector::from_fn(11, |i, _| (i as f64 - 5.0) / 3.0);
        let y = &x * beta;
        let res = nested_cv(&x, &y, PairClass::Cc, 1, &CvOptions::default()).unwrap();
        assert!(res.r2 >= 0.99, "r2 {}", res.r2);
        assert_eq!(res.fold_alphas.len(), 10);
    }

    #[test]
    fn deterministic_given_seed() {
        let x = random_design(40, 4, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = DVector::from_fn(40, |_, _| rng.random_range(-1.0..1.0));
        let a = nested_cv(&x, &y, PairClass::Cc, 11, &CvOptions::default()).unwrap();
        let b = nested_cv(&x, &y, PairClass::Cc, 11, &CvOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropping_all_columns_gives_intercept_baseline() {
        let x = random_design(30, 2, 9);
        let y = DVector::from_fn(30, |i, _| x[(i, 0)] * 2.0);
        let (full, reduced, delta) =
            ablate(&x, &y, &[0, 1], PairClass::Cc, 2, &CvOptions::default()).unwrap();
        assert!(full > 0.99);
        assert!(reduced <= 0.0);
        assert!((delta - (full - reduced)).abs() < 1e-15);
    }
}
