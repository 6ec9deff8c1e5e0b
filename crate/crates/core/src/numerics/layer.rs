//! Convolution layers whose weights can be read through channel-prefix views.
//!
//! A [`ConvLayer`] owns one weight tensor sized for its widest configuration
//! and a table of `(in_width, out_width)` pairs, one per selector value. Running
//! with selector `s` reads only the leading `in_width x out_width` block of the
//! weights and the first `out_width` biases. A fixed-width layer is simply a
//! table whose entries are all equal.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::activation::{leaky_relu, leaky_relu_backward, LEAKY_SLOPE};
use super::conv::{conv2d, conv2d_backward, tconv2d, tconv2d_backward};
use super::{Parameter, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvKind {
    Conv,
    Transposed,
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub kind: ConvKind,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Parameter,
    pub bias: Parameter,
    widths: Vec<(usize, usize)>,
}

impl ConvLayer {
    /// He-initialized layer. `widths[s]` is the `(in, out)` pair for selector `s`.
    pub fn new(
        id: &str,
        kind: ConvKind,
        widths: Vec<(usize, usize)>,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(!widths.is_empty(), "layer {id} needs at least one width entry");
        let in_max = widths.iter().map(|w| w.0).max().unwrap();
        let out_max = widths.iter().map(|w| w.1).max().unwrap();
        let shape = match kind {
            ConvKind::Conv => [out_max, in_max, kernel, kernel],
            ConvKind::Transposed => [in_max, out_max, kernel, kernel],
        };
        let fan_in = match kind {
            ConvKind::Conv => in_max * kernel * kernel,
            ConvKind::Transposed => (in_max * kernel * kernel / (stride * stride)).max(1),
        };
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| normal.sample(rng)).collect();
        ConvLayer {
            kind,
            kernel,
            stride,
            pad,
            weight: Parameter::new(format!("{id}.weight"), Tensor::from_vec(shape, data).unwrap()),
            bias: Parameter::new(format!("{id}.bias"), Tensor::zeros([1, out_max, 1, 1])),
            widths,
        }
    }

    pub fn selectors(&self) -> usize {
        self.widths.len()
    }

    pub fn widths(&self, sel: usize) -> Result<(usize, usize)> {
        self.widths.get(sel).copied().ok_or_else(|| {
            Error::invalid(format!(
                "selector {sel} out of range for {} (has {})",
                self.weight.id,
                self.widths.len()
            ))
        })
    }

    pub fn max_widths(&self) -> (usize, usize) {
        let s = self.weight.value.shape();
        match self.kind {
            ConvKind::Conv => (s[1], s[0]),
            ConvKind::Transposed => (s[0], s[1]),
        }
    }

    /// Multiply all weights by `factor`; `0.0` gives a zero-initialized layer.
    pub fn scale_weights(&mut self, factor: f64) {
        for w in self.weight.value.data_mut() {
            *w *= factor;
        }
    }

    /// Leading `(a, b)` block over the first two weight axes.
    fn weight_block(&self, sel: usize) -> Result<(Tensor, Vec<f64>)> {
        let (cin, cout) = self.widths(sel)?;
        let [d0, d1, k, _] = self.weight.value.shape();
        let (a, b) = match self.kind {
            ConvKind::Conv => (cout, cin),
            ConvKind::Transposed => (cin, cout),
        };
        let bias = self.bias.value.data()[..cout].to_vec();
        if a == d0 && b == d1 {
            return Ok((self.weight.value.clone(), bias));
        }
        let kk = k * k;
        let src = self.weight.value.data();
        let mut data = Vec::with_capacity(a * b * kk);
        for i in 0..a {
            let start = i * d1 * kk;
            data.extend_from_slice(&src[start..start + b * kk]);
        }
        Ok((Tensor::from_vec([a, b, k, k], data)?, bias))
    }

    pub fn forward(&self, x: &Tensor, sel: usize) -> Result<Tensor> {
        let (cin, _) = self.widths(sel)?;
        if x.channels() != cin {
            return Err(Error::shape(format!(
                "{}: input has {} channels, selector {sel} expects {cin}",
                self.weight.id,
                x.channels()
            )));
        }
        let (w, b) = self.weight_block(sel)?;
        match self.kind {
            ConvKind::Conv => conv2d(x, &w, &b, self.stride, self.pad),
            ConvKind::Transposed => tconv2d(x, &w, &b, self.stride, self.pad),
        }
    }

    /// Accumulate parameter gradients for the selected block and return the
    /// gradient with respect to `x`.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor, sel: usize) -> Result<Tensor> {
        let (w, _) = self.weight_block(sel)?;
        let grads = match self.kind {
            ConvKind::Conv => conv2d_backward(x, &w, grad_out, self.stride, self.pad)?,
            ConvKind::Transposed => tconv2d_backward(x, &w, grad_out, self.stride, self.pad)?,
        };
        let [a, b, k, _] = grads.grad_w.shape();
        let d1 = self.weight.grad.shape()[1];
        let kk = k * k;
        let dst = self.weight.grad.data_mut();
        let src = grads.grad_w.data();
        for i in 0..a {
            let d = &mut dst[i * d1 * kk..i * d1 * kk + b * kk];
            for (t, s) in d.iter_mut().zip(&src[i * b * kk..(i + 1) * b * kk]) {
                *t += s;
            }
        }
        for (t, s) in self.bias.grad.data_mut().iter_mut().zip(&grads.grad_b) {
            *t += s;
        }
        Ok(grads.grad_x)
    }

    /// Zero every gradient entry outside the block read by selector `sel`.
    pub fn mask_grad_to(&mut self, sel: usize) -> Result<()> {
        let (cin, cout) = self.widths(sel)?;
        let (a, b) = match self.kind {
            ConvKind::Conv => (cout, cin),
            ConvKind::Transposed => (cin, cout),
        };
        let [d0, d1, k, _] = self.weight.grad.shape();
        let kk = k * k;
        let g = self.weight.grad.data_mut();
        for i in 0..d0 {
            for j in 0..d1 {
                if i >= a || j >= b {
                    g[(i * d1 + j) * kk..(i * d1 + j + 1) * kk].fill(0.0);
                }
            }
        }
        self.bias.grad.data_mut()[cout..].fill(0.0);
        Ok(())
    }

    pub fn params(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Saved activations of one [`Stack`] forward pass.
#[derive(Clone, Debug)]
pub struct StackTrace {
    inputs: Vec<Tensor>,
    preacts: Vec<Tensor>,
}

/// Layers applied in sequence with leaky-ReLU between them.
#[derive(Clone, Debug)]
pub struct Stack {
    pub layers: Vec<ConvLayer>,
    /// Apply the activation after the last layer as well.
    pub final_activation: bool,
}

impl Stack {
    pub fn new(layers: Vec<ConvLayer>, final_activation: bool) -> Self {
        Stack {
            layers,
            final_activation,
        }
    }

    fn activated(&self, i: usize) -> bool {
        i + 1 < self.layers.len() || self.final_activation
    }

    pub fn forward(&self, x: &Tensor, sel: usize) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h, sel)?;
            if self.activated(i) {
                h = leaky_relu(&h, LEAKY_SLOPE);
            }
        }
        Ok(h)
    }

    pub fn forward_traced(&self, x: &Tensor, sel: usize) -> Result<(Tensor, StackTrace)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = layer.forward(&h, sel)?;
            inputs.push(h);
            h = if self.activated(i) {
                leaky_relu(&pre, LEAKY_SLOPE)
            } else {
                pre.clone()
            };
            preacts.push(pre);
        }
        Ok((h, StackTrace { inputs, preacts }))
    }

    pub fn backward(&mut self, trace: &StackTrace, grad_out: &Tensor, sel: usize) -> Result<Tensor> {
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            if self.activated(i) {
                g = leaky_relu_backward(&trace.preacts[i], &g, LEAKY_SLOPE);
            }
            g = self.layers[i].backward(&trace.inputs[i], &g, sel)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{central_difference, max_relative_error};
    use crate::numerics::rng::SeedStream;

    fn random(shape: [usize; 4], rng: &mut impl Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn stack_gradient_matches_finite_differences() {
        let mut rng = SeedStream::new(11).stream("stack");
        let mut stack = Stack::new(
            vec![
                ConvLayer::new("a", ConvKind::Conv, vec![(2, 3), (2, 4)], 3, 2, 1, &mut rng),
                ConvLayer::new("b", ConvKind::Transposed, vec![(3, 2), (4, 3)], 4, 2, 1, &mut rng),
            ],
            false,
        );
        for b in stack.layers.iter_mut() {
            for v in b.bias.value.data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let x = random([1, 2, 6, 6], &mut rng);
        for sel in 0..2 {
            let (y, trace) = stack.forward_traced(&x, sel).unwrap();
            let probe = random(y.shape(), &mut rng);
            let gx = stack.backward(&trace, &probe, sel).unwrap();
            let num = central_difference(x.data(), 1e-5, |v| {
                let t = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
                let y = stack.forward(&t, sel).unwrap();
                y.data().iter().zip(probe.data()).map(|(a, p)| a * p).sum()
            });
            assert!(max_relative_error(gx.data(), &num) < 1e-4);
        }
    }

    #[test]
    fn backward_touches_only_the_selected_block() {
        let mut rng = SeedStream::new(12).stream("block");
        let mut layer = ConvLayer::new("l", ConvKind::Conv, vec![(2, 2), (4, 5)], 3, 1, 1, &mut rng);
        let x = random([1, 2, 4, 4], &mut rng);
        let y = layer.forward(&x, 0).unwrap();
        layer.backward(&x, &Tensor::full(y.shape(), 1.0), 0).unwrap();
        let g = &layer.weight.grad;
        for co in 0..5 {
            for ci in 0..4 {
                let touched = (0..3).any(|ky| (0..3).any(|kx| g.at(co, ci, ky, kx) != 0.0));
                assert_eq!(touched, co < 2 && ci < 2, "co={co} ci={ci}");
            }
        }
        assert!(layer.bias.grad.data()[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn narrower_output_is_a_channel_prefix_bitwise() {
        let mut rng = SeedStream::new(13).stream("prefix");
        for trial in 0..40 {
            let kind = if trial % 2 == 0 { ConvKind::Conv } else { ConvKind::Transposed };
            let (kernel, stride) = match kind {
                ConvKind::Conv => (3, 1 + trial % 3 / 2),
                ConvKind::Transposed => (if trial % 4 == 1 { 3 } else { 4 }, if trial % 4 == 1 { 1 } else { 2 }),
            };
            let cin = rng.random_range(1..6);
            let mut outs: Vec<usize> = (0..4).map(|_| rng.random_range(1..20)).collect();
            outs.sort();
            outs.dedup();
            let layer = ConvLayer::new("p", kind, outs.iter().map(|&o| (cin, o)).collect(), kernel, stride, 1, &mut rng);
            let x = random([2, cin, 8, 8], &mut rng);
            let top = outs.len() - 1;
            let wide = layer.forward(&x, top).unwrap();
            for (j, &o) in outs.iter().enumerate() {
                let narrow = layer.forward(&x, j).unwrap();
                assert!(wide.slice_channels(0..o).unwrap().bit_eq(&narrow), "trial {trial} route {j}");
            }
        }
    }
}
