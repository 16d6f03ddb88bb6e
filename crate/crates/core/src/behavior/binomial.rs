use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinomialP {
    /// P(X >= k).
    pub greater: f64,
    /// P(X <= k).
    pub less: f64,
    /// Sum of the probabilities of all outcomes no more likely than k.
    pub two_sided: f64,
    /// Natural logs of the above, usable when the p-values underflow.
    pub ln_greater: f64,
    pub ln_two_sided: f64,
}

fn ln_pmf(i: u64, n: u64, ln_p: f64, ln_q: f64) -> f64 {
    let (i_f, n_f) = (i as f64, n as f64);
    let mut v = ln_binomial(n, i);
    if i > 0 {
        v += i_f * ln_p;
    }
    if n > i {
        v += (n_f - i_f) * ln_q;
    }
    v
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Exact binomial tail probabilities, summed in log space.
pub fn exact_binomial_p(k: u64, n: u64, p0: f64) -> Result<BinomialP> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p0 must be in (0, 1), got {p0}"
        )));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds n = {n}")));
    }
    let (ln_p, ln_q) = (p0.ln(), (1.0 - p0).ln());
    let pmf: Vec<f64> = (0..=n).map(|i| ln_pmf(i, n, ln_p, ln_q)).collect();
    let ln_greater = log_sum_exp(&pmf[k as usize..]);
    let ln_less = log_sum_exp(&pmf[..=k as usize]);
    // Relative slack so that outcomes tied with k in probability are included.
    let cutoff = pmf[k as usize] + 1e-7;
    let tail: Vec<f64> = pmf.iter().copied().filter(|&v| v <= cutoff).collect();
    let ln_two = log_sum_exp(&tail).min(0.0);
    Ok(BinomialP {
        greater: ln_greater.exp().min(1.0),
        less: ln_less.exp().min(1.0),
        two_sided: ln_two.exp(),
        ln_greater: ln_greater.min(0.0),
        ln_two_sided: ln_two,
    })
}
