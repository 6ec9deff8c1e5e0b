//! Quantized CDF tables over a finite support plus an escape symbol.

use super::gaussian::{bin_probability, clamp_scale};
use super::prior::logistic_bin_probability;

pub const CDF_PRECISION: u32 = 16;
pub const CDF_TOTAL: u32 = 1 << CDF_PRECISION;

/// Symbols are never tabulated outside this window.
pub const GLOBAL_MIN: i32 = -2048;
pub const GLOBAL_MAX: i32 = 2048;

/// Half-width of a Gaussian support, in scales.
pub const GAUSSIAN_SUPPORT_SCALES: f64 = 8.0;
/// Half-width of a logistic support, in scales; wider than the Gaussian one
/// because logistic tails are heavier.
pub const LOGISTIC_SUPPORT_SCALES: f64 = 25.0;

/// Cumulative counts for symbols `s_min..=s_max` followed by an escape.
///
/// `cum` has one more entry than there are coded symbols; `cum[0] = 0` and the
/// last entry is exactly [`CDF_TOTAL`]. Every symbol, the escape included,
/// has at least one count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CdfTable {
    s_min: i32,
    cum: Vec<u32>,
}

impl CdfTable {
    /// Build from per-symbol masses for `s_min, s_min + 1, ...`; whatever the
    /// floors leave over goes to the escape symbol.
    pub fn from_masses(s_min: i32, masses: &[f64]) -> Self {
        let n = masses.len() as u32 + 1;
        assert!(n <= CDF_TOTAL / 2, "support of {} symbols is too wide", masses.len());
        let budget = f64::from(CDF_TOTAL - n);
        let mut cum = Vec::with_capacity(masses.len() + 2);
        cum.push(0u32);
        let mut acc = 0u32;
        for &p in masses {
            let p = if p.is_finite() { p.clamp(0.0, 1.0) } else { 0.0 };
            acc += 1 + (p * budget).floor() as u32;
            cum.push(acc);
        }
        debug_assert!(acc < CDF_TOTAL);
        cum.push(CDF_TOTAL);
        CdfTable { s_min, cum }
    }

    pub fn s_min(&self) -> i32 {
        self.s_min
    }

    pub fn s_max(&self) -> i32 {
        self.s_min + self.support_len() as i32 - 1
    }

    pub fn support_len(&self) -> usize {
        self.cum.len() - 2
    }

    pub fn escape_index(&self) -> usize {
        self.cum.len() - 2
    }

    pub fn cum(&self) -> &[u32] {
        &self.cum
    }

    /// Table index of `value`, or `None` when it must be escaped.
    pub fn index_of(&self, value: i32) -> Option<usize> {
        if value < self.s_min || value > self.s_max() {
            None
        } else {
            Some((value - self.s_min) as usize)
        }
    }

    pub fn value_of(&self, index: usize) -> i32 {
        self.s_min + index as i32
    }

    /// `(cumulative count, frequency)` of a table index.
    pub fn interval(&self, index: usize) -> (u32, u32) {
        (self.cum[index], self.cum[index + 1] - self.cum[index])
    }

    /// Index whose interval contains `target` in `[0, CDF_TOTAL)`.
    pub fn find(&self, target: u32) -> usize {
        // first entry strictly greater than target, minus one
        self.cum.partition_point(|&c| c <= target) - 1
    }

    pub fn probability(&self, index: usize) -> f64 {
        let (_, f) = self.interval(index);
        f64::from(f) / f64::from(CDF_TOTAL)
    }

    /// Coding probability of `value`, counting the escape for out-of-support
    /// values (the 16 raw bits they add are not included).
    pub fn value_probability(&self, value: i32) -> f64 {
        self.probability(self.index_of(value).unwrap_or_else(|| self.escape_index()))
    }
}

fn support(center: f64, half_width: f64) -> (i32, i32) {
    let lo = (center - half_width).floor().clamp(f64::from(GLOBAL_MIN), f64::from(GLOBAL_MAX)) as i32;
    let hi = (center + half_width).ceil().clamp(f64::from(GLOBAL_MIN), f64::from(GLOBAL_MAX)) as i32;
    (lo, hi.max(lo))
}

/// Support covering `mean ± 8·scale`, clamped to the global window.
pub fn gaussian_support(mean: f64, scale: f64) -> (i32, i32) {
    support(mean, GAUSSIAN_SUPPORT_SCALES * clamp_scale(scale))
}

pub fn build_cdf(mean: f64, scale: f64, support: (i32, i32)) -> CdfTable {
    let (lo, hi) = support;
    let masses: Vec<f64> = (lo..=hi).map(|s| bin_probability(f64::from(s), mean, scale)).collect();
    CdfTable::from_masses(lo, &masses)
}

/// Table for a discretized Gaussian on its default support.
pub fn gaussian_cdf(mean: f64, scale: f64) -> CdfTable {
    build_cdf(mean, scale, gaussian_support(mean, scale))
}

/// Table for a discretized logistic on its default support.
pub fn logistic_cdf(loc: f64, scale: f64) -> CdfTable {
    let (lo, hi) = support(loc, LOGISTIC_SUPPORT_SCALES * scale);
    let masses: Vec<f64> = (lo..=hi).map(|s| logistic_bin_probability(f64::from(s), loc, scale)).collect();
    CdfTable::from_masses(lo, &masses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_invariants(t: &CdfTable) {
        assert_eq!(*t.cum().last().unwrap(), CDF_TOTAL);
        assert_eq!(t.cum()[0], 0);
        assert!(t.cum().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn normalization_and_monotonicity() {
        for &(m, s) in &[(0.0, 1.0), (3.7, 0.04), (-100.2, 64.0), (0.49, 2.5), (5000.0, 1.0)] {
            check_invariants(&gaussian_cdf(m, s));
        }
        check_invariants(&logistic_cdf(0.3, 1.5));
        check_invariants(&CdfTable::from_masses(0, &[0.0, 0.0, 0.0]));
    }

    #[test]
    fn support_covers_eight_scales() {
        let (lo, hi) = gaussian_support(1.3, 2.0);
        assert!(f64::from(lo) <= 1.3 - 16.0 && f64::from(hi) >= 1.3 + 16.0);
    }

    #[test]
    fn minimum_scale_concentrates_on_centre() {
        let t = gaussian_cdf(0.0, 0.04);
        let (_, f) = t.interval(t.index_of(0).unwrap());
        assert!(f64::from(f) >= 0.999 * f64::from(CDF_TOTAL) - t.cum().len() as f64);
    }

    #[test]
    fn find_inverts_interval() {
        let t = gaussian_cdf(0.2, 1.3);
        for i in 0..t.cum().len() - 1 {
            let (c, f) = t.interval(i);
            assert_eq!(t.find(c), i);
            assert_eq!(t.find(c + f - 1), i);
        }
    }
}
