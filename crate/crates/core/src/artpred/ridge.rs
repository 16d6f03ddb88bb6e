use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RidgeOptions {
    /// z-score columns (population SD) before fitting.
    pub standardize: bool,
    /// Center X and y and fit an unpenalized intercept.
    pub fit_intercept: bool,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        RidgeOptions {
            standardize: true,
            fit_intercept: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeFit {
    /// Coefficients on the original column scale.
    pub coefficients: DVector<f64>,
    /// Coefficients on the standardized scale (equal to `coefficients` when
    /// standardization is off).
    pub standardized: DVector<f64>,
    pub intercept: f64,
    /// Set when alpha = 0 met a rank-deficient system.
    pub warning: Option<String>,
}

impl RidgeFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * &self.coefficients + DVector::from_element(x.nrows(), self.intercept)
    }
}

/// Column means and population SDs; zero-SD columns get scale 0 so they drop out.
pub(crate) fn column_stats(
    x: &DMatrix<f64>,
    center: bool,
    standardize: bool,
) -> (DVector<f64>, DVector<f64>) {
    let n = x.nrows() as f64;
    let means = DVector::from_fn(
        x.ncols(),
        |j, _| if center { x.column(j).sum() / n } else { 0.0 },
    );
    let scales = DVector::from_fn(x.ncols(), |j, _| {
        if !standardize {
            return 1.0;
        }
        let m = x.column(j).sum() / n;
        let sd = (x.column(j).iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        if sd <= 1e-12 * (1.0 + m.abs()) {
            0.0
        } else {
            1.0 / sd
        }
    });
    (means, scales)
}

pub(crate) fn transform(
    x: &DMatrix<f64>,
    means: &DVector<f64>,
    scales: &DVector<f64>,
) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        (x[(i, j)] - means[j]) * scales[j]
    })
}

/// Minimizes `||y - Xb||^2 + alpha ||b||^2` in closed form through the SVD:
/// `b = V diag(s / (s^2 + alpha)) U' y`. With alpha = 0 this is the
/// minimum-norm least-squares solution.
pub fn ridge_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
    opts: RidgeOptions,
) -> Result<RidgeFit> {
    if x.nrows() < 2 {
        return Err(Error::InvalidInput(format!(
            "ridge needs at least 2 rows, got {}",
            x.nrows()
        )));
    }
    if x.nrows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "X has {} rows but y has {}",
            x.nrows(),
            y.len()
        )));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    let (means, scales) = column_stats(x, opts.fit_intercept, opts.standardize);
    let xt = transform(x, &means, &scales);
    let y_mean = if opts.fit_intercept { y.mean() } else { 0.0 };
    let yc = y.add_scalar(-y_mean);
    let (beta_s, rank_deficient) = solve(&xt, &yc, alpha);
    let warning = (alpha == 0.0 && rank_deficient).then(|| {
        let msg = "singular system at alpha = 0; using the minimum-norm solution".to_string();
        log::warn!("{msg}");
        msg
    });
    let coefficients = beta_s.component_mul(&scales);
    let intercept = y_mean - means.dot(&coefficients);
    Ok(RidgeFit {
        coefficients,
        standardized: beta_s,
        intercept,
        warning,
    })
}

fn solve(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> (DVector<f64>, bool) {
    if x.ncols() == 0 {
        return (DVector::zeros(0), false);
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let tol = s.max() * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    let uty = u.transpose() * y;
    let mut rank_deficient = s.len() < x.ncols();
    let shrunk = DVector::from_fn(s.len(), |k, _| {
        if s[k] <= tol {
            rank_deficient = true;
            0.0
        } else {
            s[k] / (s[k] * s[k] + alpha) * uty[k]
        }
    });
    (vt.transpose() * shrunk, rank_deficient)
}

/// Diagonal of the ridge hat matrix `X (X'X + alpha I)^-1 X'` for prepared X,
/// together with the fitted values for `y`.
pub(crate) fn hat_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
) -> (DVector<f64>, DVector<f64>) {
    let n = x.nrows();
    if x.ncols() == 0 {
        return (DVector::zeros(n), DVector::zeros(n));
    }
    let svd = x.clone().svd(true, false);
    let u = svd.u.as_ref().expect("u requested");
    let s = &svd.singular_values;
    let shrink = DVector::from_fn(s.len(), |k, _| {
        let s2 = s[k] * s[k];
        if s2 == 0.0 && alpha == 0.0 {
            0.0
        } else {
            s2 / (s2 + alpha)
        }
    });
    let uty = u.transpose() * y;
    let fitted = u * uty.component_mul(&shrink);
    let diag = DVector::from_fn(n, |i, _| {
        (0..s.len()).map(|k| u[(i, k)].powi(2) * shrink[k]).sum()
    });
    (diag, fitted)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RAW: RidgeOptions = RidgeOptions {
        standardize: false,
        fit_intercept: false,
    };

    #[test]
    fn exact_fit_without_penalty() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let fit = ridge_fit(&x, &y, 0.0, RAW).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        let fit = ridge_fit(&x, &y, 0.0, RidgeOptions::default()).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
    }

    #[test]
    fn five_sixths_fixture() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let fit = ridge_fit(&x, &y, 1.0, RAW).unwrap();
        assert!((fit.coefficients[0] - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations() {
        let x =
            DMatrix::from_row_slice(5, 2, &[1.0, 0.5, 2.0, -1.0, 0.0, 3.0, -1.5, 2.0, 4.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 2.5]);
        let alpha = 0.7;
        let fit = ridge_fit(&x, &y, alpha, RAW).unwrap();
        let direct = (x.transpose() * &x + DMatrix::identity(2, 2) * alpha)
            .try_inverse()
            .unwrap()
            * x.transpose()
            * &y;
        assert!((fit.coefficients - direct).abs().max() < 1e-12);
    }

    #[test]
    fn penalty_limit_and_monotone_norm() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 1.0, 3.0, 5.0, 4.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 2.0, 5.0]);
        let mut last = f64::INFINITY;
        for k in -3..=8 {
            let fit = ridge_fit(&x, &y, 10f64.powi(k), RidgeOptions::default()).unwrap();
            let norm = fit.standardized.norm();
            assert!(norm <= last + 1e-12);
            last = norm;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn singular_alpha_zero_warns_and_gives_min_norm() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![2.0, 4.0, 6.0]);
        let fit = ridge_fit(&x, &y, 0.0, RAW).unwrap();
        assert!(fit.warning.is_some());
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let x = DMatrix::from_row_slice(1, 1, &[1.0]);
        let y = DVector::from_vec(vec![1.0]);
        assert!(ridge_fit(&x, &y, 1.0, RAW).is_err());
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(ridge_fit(&x, &y, -1.0, RAW).is_err());
    }
}
