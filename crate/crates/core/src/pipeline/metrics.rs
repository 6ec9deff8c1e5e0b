//! Quality and rate metrics: PSNR, bitrate error and Bjøntegaard deltas.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::numerics::Tensor;
use crate::{Error, Result};

/// PSNR in dB of `b` against `a` on `[0, 1]` pixels; identical frames give
/// `+inf`.
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("PSNR of {:?} against {:?}", a.shape(), b.shape())));
    }
    let mse = a.mse(b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Text form used in CSV files; infinity is written as `inf`.
pub fn format_db(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

/// `|R_out − R_tar| / R_tar · 100`.
pub fn bitrate_error(r_out: f64, r_tar: f64) -> Result<f64> {
    if !(r_tar > 0.0) {
        return Err(Error::invalid(format!("target rate must be positive, got {r_tar}")));
    }
    Ok((r_out - r_tar).abs() / r_tar * 100.0)
}

/// Rate-quality points with strictly increasing rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    /// `(bpp, PSNR dB)`.
    pub points: Vec<(f64, f64)>,
}

impl RdCurve {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.len() < 4 {
            return Err(Error::invalid(format!("an RD curve needs at least 4 points, got {}", points.len())));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid(format!("rates must be distinct, {} repeats", w[0].0)));
            }
        }
        if points.iter().any(|&(r, q)| !(r > 0.0) || !r.is_finite() || !q.is_finite()) {
            return Err(Error::invalid("RD points need positive finite rates and finite PSNR"));
        }
        Ok(RdCurve { points })
    }

    /// Read a CSV with `bpp` and `psnr` columns.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let headers = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Format(format!("{}: missing column {name:?}", path.display())))
        };
        let (ri, qi) = (col("bpp")?, col("psnr")?);
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Format(format!("{}: bad number in row {:?}", path.display(), rec)))
            };
            points.push((num(ri)?, num(qi)?));
        }
        RdCurve::new(points)
    }
}

/// Least-squares cubic `c0 + c1 x + c2 x² + c3 x³`.
fn cubic_fit(xs: &[f64], ys: &[f64]) -> Result<[f64; 4]> {
    let v = DMatrix::from_fn(xs.len(), 4, |i, j| xs[i].powi(j as i32));
    let y = DVector::from_column_slice(ys);
    let c = v
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::NonFinite(format!("cubic fit failed: {e}")))?;
    Ok([c[0], c[1], c[2], c[3]])
}

fn integral(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let p = |x: f64| c[0] * x + c[1] * x * x / 2.0 + c[2] * x.powi(3) / 3.0 + c[3] * x.powi(4) / 4.0;
    p(hi) - p(lo)
}

/// Mean gap `b − a` of the two fits over the shared range of their inputs.
fn mean_gap(xa: &[f64], ya: &[f64], xb: &[f64], yb: &[f64], what: &str) -> Result<f64> {
    let range = |x: &[f64]| (x.iter().cloned().fold(f64::INFINITY, f64::min), x.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let (a_lo, a_hi) = range(xa);
    let (b_lo, b_hi) = range(xb);
    let (lo, hi) = (a_lo.max(b_lo), a_hi.min(b_hi));
    if !(hi > lo) {
        return Err(Error::invalid(format!(
            "{what} ranges do not overlap: [{a_lo}, {a_hi}] vs [{b_lo}, {b_hi}]"
        )));
    }
    // fit around the midpoint to keep the Vandermonde system well conditioned
    let mid = (lo + hi) / 2.0;
    let shift = |x: &[f64]| x.iter().map(|v| v - mid).collect::<Vec<_>>();
    let fa = cubic_fit(&shift(xa), ya)?;
    let fb = cubic_fit(&shift(xb), yb)?;
    Ok((integral(&fb, lo - mid, hi - mid) - integral(&fa, lo - mid, hi - mid)) / (hi - lo))
}

/// Bjøntegaard deltas of `b` relative to `a`: `(BD-Rate %, BD-PSNR dB)`.
/// Negative BD-Rate means `b` needs fewer bits for the same quality.
pub fn bd_metrics(a: &RdCurve, b: &RdCurve) -> Result<(f64, f64)> {
    let split = |c: &RdCurve| -> (Vec<f64>, Vec<f64>) { c.points.iter().map(|&(r, q)| (r.log10(), q)).unzip() };
    let (ra, qa) = split(a);
    let (rb, qb) = split(b);
    let log_gap = mean_gap(&qa, &ra, &qb, &rb, "PSNR")?;
    let bd_psnr = mean_gap(&ra, &qa, &rb, &qb, "log-rate")?;
    Ok(((10f64.powf(log_gap) - 1.0) * 100.0, bd_psnr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> RdCurve {
        RdCurve::new(vec![(0.05, 29.1), (0.09, 31.4), (0.16, 33.2), (0.3, 35.7), (0.5, 37.0)]).unwrap()
    }

    #[test]
    fn psnr_of_one_level_offset() {
        let a = Tensor::full([1, 1, 4, 4], 0.5);
        let b = a.map(|v| v + 1.0 / 255.0);
        assert!((psnr(&a, &b).unwrap() - 20.0 * 255f64.log10()).abs() < 1e-9);
        assert_eq!(psnr(&b, &a).unwrap(), psnr(&a, &b).unwrap());
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(format_db(f64::INFINITY), "inf");
        assert!(psnr(&a, &Tensor::zeros([1, 1, 4, 8])).is_err());
    }

    #[test]
    fn bitrate_error_examples() {
        assert_eq!(bitrate_error(0.1, 0.1).unwrap(), 0.0);
        assert!((bitrate_error(0.102, 0.100).unwrap() - 2.0).abs() < 1e-9);
        assert!(bitrate_error(0.1, 0.0).is_err());
    }

    #[test]
    fn bd_shifts() {
        let a = curve();
        let (r, p) = bd_metrics(&a, &a).unwrap();
        assert!(r.abs() < 1e-9 && p.abs() < 1e-9);
        let cheaper = RdCurve::new(a.points.iter().map(|&(r, q)| (r * 0.9, q)).collect()).unwrap();
        assert!((bd_metrics(&a, &cheaper).unwrap().0 + 10.0).abs() < 1e-6);
        let better = RdCurve::new(a.points.iter().map(|&(r, q)| (r, q + 0.5)).collect()).unwrap();
        assert!((bd_metrics(&a, &better).unwrap().1 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn disjoint_curves_are_rejected() {
        let a = curve();
        let far = RdCurve::new(a.points.iter().map(|&(r, q)| (r * 100.0, q + 20.0)).collect()).unwrap();
        let msg = bd_metrics(&a, &far).unwrap_err().to_string();
        assert!(msg.contains("do not overlap"), "{msg}");
        assert!(RdCurve::new(vec![(0.1, 30.0), (0.1, 31.0), (0.2, 32.0), (0.3, 33.0)]).is_err());
    }
}
