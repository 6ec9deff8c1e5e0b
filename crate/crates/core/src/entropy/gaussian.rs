//! Discretized Gaussian bin masses and their derivatives.

use std::f64::consts::{LN_2, SQRT_2};

/// Legal range of predicted scales.
pub const SCALE_MIN: f64 = 0.04;
pub const SCALE_MAX: f64 = 64.0;

/// Smallest bin mass used by the training rate, so `-log2 p` stays bounded.
pub const LIKELIHOOD_FLOOR: f64 = 1e-9;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn clamp_scale(s: f64) -> f64 {
    s.clamp(SCALE_MIN, SCALE_MAX)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Mass of the unit bin centred on `y` under `N(mean, scale^2)`.
///
/// Tails are evaluated with `erfc` on the side away from the mean so that far
/// bins keep their relative precision.
pub fn bin_probability(y: f64, mean: f64, scale: f64) -> f64 {
    let a = (y - mean - 0.5) / scale;
    let b = (y - mean + 0.5) / scale;
    if a > 0.0 {
        0.5 * (libm::erfc(a / SQRT_2) - libm::erfc(b / SQRT_2))
    } else if b < 0.0 {
        0.5 * (libm::erfc(-b / SQRT_2) - libm::erfc(-a / SQRT_2))
    } else {
        1.0 - 0.5 * libm::erfc(-a / SQRT_2) - 0.5 * libm::erfc(b / SQRT_2)
    }
}

/// Floored bits of one element plus derivatives with respect to the value,
/// mean and scale. Derivatives are zero where the floor is active.
#[derive(Clone, Copy, Debug)]
pub struct BinCost {
    pub bits: f64,
    pub d_value: f64,
    pub d_mean: f64,
    pub d_scale: f64,
}

pub fn bin_cost(y: f64, mean: f64, scale: f64) -> BinCost {
    let p = bin_probability(y, mean, scale);
    if p <= LIKELIHOOD_FLOOR {
        return BinCost {
            bits: -LIKELIHOOD_FLOOR.log2(),
            d_value: 0.0,
            d_mean: 0.0,
            d_scale: 0.0,
        };
    }
    let a = (y - mean - 0.5) / scale;
    let b = (y - mean + 0.5) / scale;
    let (pa, pb) = (normal_pdf(a), normal_pdf(b));
    let dp_dy = (pb - pa) / scale;
    let dp_ds = -(b * pb - a * pa) / scale;
    let k = -1.0 / (p * LN_2);
    BinCost {
        bits: -p.log2(),
        d_value: k * dp_dy,
        d_mean: -k * dp_dy,
        d_scale: k * dp_ds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::central_difference;

    #[test]
    fn central_bin_of_unit_gaussian() {
        assert!((bin_probability(0.0, 0.0, 1.0) - 0.382925).abs() < 1e-6);
    }

    #[test]
    fn masses_sum_to_one() {
        for &(m, s) in &[(0.0f64, 1.0f64), (0.3, 0.04), (-2.7, 5.0), (10.2, 64.0)] {
            let lo = (m - 20.0 * s).floor() as i64 - 2;
            let hi = (m + 20.0 * s).ceil() as i64 + 2;
            let total: f64 = (lo..=hi).map(|y| bin_probability(y as f64, m, s)).sum();
            assert!((total - 1.0).abs() < 1e-9, "m={m} s={s} total={total}");
        }
    }

    #[test]
    fn symmetric_about_integer_mean() {
        for d in 0..6 {
            let up = bin_probability(3.0 + d as f64, 3.0, 1.7);
            let down = bin_probability(3.0 - d as f64, 3.0, 1.7);
            assert!((up - down).abs() < 1e-15);
        }
    }

    #[test]
    fn far_tail_stays_positive() {
        let p = bin_probability(8.0, 0.0, 0.5);
        assert!(p > 0.0 && p < 1e-40);
    }

    #[test]
    fn cost_derivatives_match_finite_differences() {
        for &(y, m, s) in &[(0.3, 0.1, 1.2), (-1.7, 0.4, 0.6), (2.2, -0.5, 3.0)] {
            let c = bin_cost(y, m, s);
            let num = central_difference(&[y, m, s], 1e-6, |v| bin_cost(v[0], v[1], v[2]).bits);
            for (a, n) in [c.d_value, c.d_mean, c.d_scale].iter().zip(&num) {
                assert!((a - n).abs() / a.abs().max(1e-6) < 1e-5, "{a} vs {n}");
            }
        }
    }
}
