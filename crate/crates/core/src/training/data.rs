//! Training pairs drawn from frame sequences.

use rand::Rng;

use crate::dra::MID_GRAY;
use crate::numerics::Tensor;
use crate::{Error, Result};

/// A batch of `(x_t, x_ref)` pairs stacked along the batch axis.
#[derive(Clone, Debug)]
pub struct Batch {
    pub x_t: Tensor,
    pub x_ref: Tensor,
    /// Position of the batch in its training run.
    pub id: u64,
}

/// Reference for frame `t`: the previous original frame, mid-gray for the
/// first frame.
pub fn pair_reference(seq: &[Tensor], t: usize) -> Tensor {
    if t == 0 {
        Tensor::full(seq[0].shape(), MID_GRAY)
    } else {
        seq[t - 1].clone()
    }
}

fn crop(t: &Tensor, y0: usize, x0: usize, size: usize) -> Tensor {
    let mut out = Tensor::zeros([1, 1, size, size]);
    for y in 0..size {
        for x in 0..size {
            out.set(0, 0, y, x, t.at(0, 0, y0 + y, x0 + x));
        }
    }
    out
}

/// Frame sequences used for training.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub sequences: Vec<Vec<Tensor>>,
}

impl TrainingSet {
    pub fn new(sequences: Vec<Vec<Tensor>>) -> Result<Self> {
        let sequences: Vec<_> = sequences.into_iter().filter(|s| !s.is_empty()).collect();
        if sequences.is_empty() {
            return Err(Error::EmptyDataset("training set has no frames".into()));
        }
        Ok(TrainingSet { sequences })
    }

    /// Smallest frame side over the set.
    pub fn min_side(&self) -> usize {
        self.sequences
            .iter()
            .flatten()
            .map(|f| f.height().min(f.width()))
            .min()
            .unwrap_or(0)
    }

    /// `batch` random pairs, each cropped to `size x size` at a random offset
    /// shared by the frame and its reference.
    pub fn sample(&self, batch: usize, size: usize, id: u64, rng: &mut impl Rng) -> Result<Batch> {
        if size > self.min_side() {
            return Err(Error::invalid(format!("crop {size} exceeds the smallest frame side {}", self.min_side())));
        }
        let mut xs = Vec::with_capacity(batch);
        let mut refs = Vec::with_capacity(batch);
        for _ in 0..batch {
            let seq = &self.sequences[rng.random_range(0..self.sequences.len())];
            let t = rng.random_range(0..seq.len());
            let x = &seq[t];
            let y0 = rng.random_range(0..=x.height() - size);
            let x0 = rng.random_range(0..=x.width() - size);
            xs.push(crop(x, y0, x0, size));
            refs.push(crop(&pair_reference(seq, t), y0, x0, size));
        }
        Ok(Batch {
            x_t: Tensor::stack_batch(&xs.iter().collect::<Vec<_>>())?,
            x_ref: Tensor::stack_batch(&refs.iter().collect::<Vec<_>>())?,
            id,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeedStream;
    use crate::pipeline::synth::{gen_synthetic, MotionProfile};

    #[test]
    fn batches_pair_frames_with_their_predecessor() {
        let seqs = gen_synthetic(1, 2, 3, 64, 64, MotionProfile::Static).unwrap();
        let set = TrainingSet::new(seqs).unwrap();
        let b = set.sample(5, 32, 0, &mut SeedStream::new(2).stream("b")).unwrap();
        assert_eq!(b.x_t.shape(), [5, 1, 32, 32]);
        for s in 0..5 {
            let same = b.x_t.sample(s).bit_eq(&b.x_ref.sample(s));
            let gray = b.x_ref.sample(s).data().iter().all(|&v| v == MID_GRAY);
            assert!(same || gray);
        }
        assert!(set.sample(1, 128, 0, &mut SeedStream::new(2).stream("b")).is_err());
        assert!(TrainingSet::new(vec![vec![]]).is_err());
    }
}
