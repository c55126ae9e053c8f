//! Ridge regression auditor.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::{AuditSample, AuditorConfig, Hypothesis};

/// Fits the linear hypothesis minimizing
/// `sum_i (w . x_i + b - t_i)^2 + lambda * ||w||^2`
/// where `t` is the restricted target (zero outside the mask). The intercept
/// is not penalized. With `lambda = 0` and a singular system the minimum-norm
/// solution is returned; the fit never aborts.
pub fn fit_ridge(sample: &AuditSample, cfg: &AuditorConfig) -> Result<Hypothesis> {
    sample.validate()?;
    let m = sample.n();
    let d = sample.features.n_cols();
    if d == 0 {
        return Err(Error::invalid("ridge fit requires at least one feature"));
    }
    let target = sample.restricted_target();
    Ok(solve_ridge(
        |j| sample.feature_row(j),
        m,
        d,
        &target,
        cfg.ridge_lambda,
        cfg.fit_intercept,
        cfg.output_bound,
    ))
}

/// Least-squares solve via SVD on the penalty-stacked design matrix.
/// Stacking `sqrt(lambda) * I` under the design keeps the intercept
/// unpenalized and makes the lambda = 0 singular case fall out of the
/// pseudo-inverse (minimum-norm) behavior of the SVD solve.
pub(crate) fn solve_ridge<'a, F>(
    row: F,
    m: usize,
    d: usize,
    target: &[f64],
    lambda: f64,
    fit_intercept: bool,
    bound: f64,
) -> Hypothesis
where
    F: Fn(usize) -> &'a [f64],
{
    let cols = d + usize::from(fit_intercept);
    let mut a = DMatrix::<f64>::zeros(m + d, cols);
    let mut rhs = DVector::<f64>::zeros(m + d);
    for j in 0..m {
        let x = row(j);
        for k in 0..d {
            a[(j, k)] = x[k];
        }
        if fit_intercept {
            a[(j, d)] = 1.0;
        }
        rhs[j] = target[j];
    }
    let sqrt_lambda = lambda.sqrt();
    for k in 0..d {
        a[(m + k, k)] = sqrt_lambda;
    }

    let svd = a.svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = if sigma_max > 0.0 {
        sigma_max * 1e-12
    } else {
        f64::MIN_POSITIVE
    };
    let sol = svd
        .solve(&rhs, eps)
        .expect("svd solve cannot fail when both factors are computed");

    let w: Vec<f64> = (0..d).map(|k| sol[k]).collect();
    let b = if fit_intercept { sol[d] } else { 0.0 };
    Hypothesis::Linear { w, b, bound }
}
