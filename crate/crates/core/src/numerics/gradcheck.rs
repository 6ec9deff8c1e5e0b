//! Central finite-difference gradient checking.
//!
//! Hard rounding is not differentiable and is never checked here; gradients
//! through quantization are checked with the additive-noise surrogate, whose
//! noise sample is held fixed during differencing.

/// Denominator floor of the relative error, so gradients that are zero
/// analytically do not divide by zero.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Numerical gradient of `f` at `x` by central differences with step `eps`.
pub fn central_difference(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = f(&probe);
        probe[i] = orig - eps;
        let down = f(&probe);
        probe[i] = orig;
        grad.push((up - down) / (2.0 * eps));
    }
    grad
}

/// Worst element-wise `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR))
        .fold(0.0, f64::max)
}

/// Compare an analytic gradient against central differences of `f` at `x`.
pub fn grad_check(f: impl FnMut(&[f64]) -> f64, analytic: &[f64], x: &[f64], eps: f64) -> f64 {
    let numeric = central_difference(x, eps, f);
    max_relative_error(analytic, &numeric)
}
