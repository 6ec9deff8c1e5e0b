//! Exhaustive block matching used as the motion input of the rate estimator.

use crate::numerics::Tensor;
use crate::{Error, Result};

pub const BLOCK_SIZE: usize = 8;
pub const SEARCH_RANGE: i32 = 4;

/// Per-block displacement `d` such that `x_t(p) ≈ x_ref(p - d)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotionField {
    pub block: usize,
    pub search: i32,
    pub blocks_y: usize,
    pub blocks_x: usize,
    /// `(dx, dy)` in raster order over blocks.
    pub vectors: Vec<(i32, i32)>,
}

impl MotionField {
    pub fn at(&self, by: usize, bx: usize) -> (i32, i32) {
        self.vectors[by * self.blocks_x + bx]
    }

    /// Euclidean length of each vector divided by the search range.
    pub fn magnitudes(&self) -> Vec<f64> {
        let s = f64::from(self.search.max(1));
        self.vectors
            .iter()
            .map(|&(dx, dy)| f64::from(dx * dx + dy * dy).sqrt() / s)
            .collect()
    }
}

fn to_levels(t: &Tensor) -> Vec<i32> {
    t.data().iter().map(|&v| (v * 255.0).round() as i32).collect()
}

/// Sum-of-absolute-differences block search over `±search`, on 8-bit
/// levels. Candidates reaching outside the reference frame are skipped.
/// Ties go to the smallest `|dx| + |dy|`, then the smallest `dy`, then the
/// smallest `dx`.
pub fn block_motion(x_t: &Tensor, x_ref: &Tensor, block: usize, search: i32) -> Result<MotionField> {
    x_ref.expect_shape(x_t.shape(), "reference frame")?;
    let [n, c, h, w] = x_t.shape();
    if n != 1 || c != 1 {
        return Err(Error::shape(format!("block motion needs one single-channel frame, got {n}x{c}")));
    }
    if block == 0 || h % block != 0 || w % block != 0 {
        return Err(Error::shape(format!("frame {w}x{h} is not a multiple of block size {block}")));
    }
    if search < 0 {
        return Err(Error::invalid(format!("negative search range {search}")));
    }
    let cur = to_levels(x_t);
    let reference = to_levels(x_ref);
    let (blocks_y, blocks_x) = (h / block, w / block);
    let mut candidates: Vec<(i32, i32)> = (-search..=search)
        .flat_map(|dy| (-search..=search).map(move |dx| (dx, dy)))
        .collect();
    candidates.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dy, dx));

    let mut vectors = Vec::with_capacity(blocks_y * blocks_x);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let (y0, x0) = ((by * block) as i32, (bx * block) as i32);
            let mut best: Option<(i64, (i32, i32))> = None;
            for &(dx, dy) in &candidates {
                let (ry, rx) = (y0 - dy, x0 - dx);
                if ry < 0 || rx < 0 || ry as usize + block > h || rx as usize + block > w {
                    continue;
                }
                let mut sad = 0i64;
                for yy in 0..block {
                    let a = &cur[(y0 as usize + yy) * w + x0 as usize..][..block];
                    let b = &reference[(ry as usize + yy) * w + rx as usize..][..block];
                    sad += a.iter().zip(b).map(|(p, q)| i64::from((p - q).abs())).sum::<i64>();
                }
                // candidates are pre-sorted by the tie rule, so strict < keeps the first
                if best.is_none_or(|(b, _)| sad < b) {
                    best = Some((sad, (dx, dy)));
                }
            }
            vectors.push(best.map_or((0, 0), |b| b.1));
        }
    }
    Ok(MotionField {
        block,
        search,
        blocks_y,
        blocks_x,
        vectors,
    })
}
