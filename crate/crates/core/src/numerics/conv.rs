//! 2-D convolution and transposed convolution with hand-written gradients.
//!
//! Weight layouts follow the usual convention: `[c_out, c_in, k, k]` for
//! convolution and `[c_in, c_out, k, k]` for the transposed variant. Both are
//! lowered to im2col plus a single-threaded matrix product with a fixed
//! blocking, so results are bit-identical across runs.

use super::Tensor;
use crate::{Error, Result};

/// Gradients of a convolution-like map.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub grad_x: Tensor,
    pub grad_w: Tensor,
    pub grad_b: Vec<f64>,
}

/// Range of output positions `o` for which `o * stride + offset - pad` lands
/// inside `[0, in_len)`.
#[inline]
fn valid_range(offset: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let offset = offset as isize;
    let pad = pad as isize;
    let s = stride as isize;
    // smallest o with o*s + offset - pad >= 0
    let need = pad - offset;
    let lo = if need <= 0 { 0 } else { (need + s - 1) / s };
    // largest o with o*s + offset - pad <= in_len - 1
    let top = in_len as isize - 1 + pad - offset;
    if top < 0 {
        return (0, 0);
    }
    let hi = (top / s + 1).min(out_len as isize);
    let lo = lo.min(hi);
    (lo as usize, hi as usize)
}

pub fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::shape("stride must be positive"));
    }
    if input + 2 * pad < k {
        return Err(Error::shape(format!(
            "input extent {input} with padding {pad} is smaller than kernel {k}"
        )));
    }
    Ok((input + 2 * pad - k) / stride + 1)
}

pub fn tconv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || input == 0 {
        return Err(Error::shape("stride and input extent must be positive"));
    }
    let full = (input - 1) * stride + k;
    if full <= 2 * pad {
        return Err(Error::shape(format!(
            "transposed conv output would be empty (input {input}, kernel {k}, stride {stride}, pad {pad})"
        )));
    }
    Ok(full - 2 * pad)
}

fn check_conv(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Result<[usize; 4]> {
    let [n, c_in, h, wd] = x.shape();
    let [c_out, w_in, k, k2] = w.shape();
    if k != k2 {
        return Err(Error::shape(format!("kernel must be square, got {k}x{k2}")));
    }
    if k % 2 == 0 {
        return Err(Error::shape(format!("conv kernel size must be odd, got {k}")));
    }
    if w_in != c_in {
        return Err(Error::shape(format!(
            "input channels: x has {c_in}, weight expects {w_in}"
        )));
    }
    if b.len() != c_out {
        return Err(Error::shape(format!(
            "bias length {} does not match output channels {c_out}",
            b.len()
        )));
    }
    let oh = conv_out_dim(h, k, stride, pad)?;
    let ow = conv_out_dim(wd, k, stride, pad)?;
    Ok([n, c_out, oh, ow])
}

fn check_tconv(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Result<[usize; 4]> {
    let [n, c_in, h, wd] = x.shape();
    let [w_in, c_out, k, k2] = w.shape();
    if k != k2 {
        return Err(Error::shape(format!("kernel must be square, got {k}x{k2}")));
    }
    if w_in != c_in {
        return Err(Error::shape(format!(
            "input channels: x has {c_in}, weight expects {w_in}"
        )));
    }
    if b.len() != c_out {
        return Err(Error::shape(format!(
            "bias length {} does not match output channels {c_out}",
            b.len()
        )));
    }
    let oh = tconv_out_dim(h, k, stride, pad)?;
    let ow = tconv_out_dim(wd, k, stride, pad)?;
    Ok([n, c_out, oh, ow])
}

/// Geometry shared by a convolution and its transpose: a large grid sampled
/// by a small grid through a `k x k` window with the given stride and padding.
struct Window {
    big: (usize, usize),
    small: (usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
}

impl Window {
    /// `col[(c, ky, kx), (oy, ox)] = img[c, oy*s + ky - p, ox*s + kx - p]`,
    /// zero outside the image.
    fn im2col(&self, img: &[f64], channels: usize, col: &mut [f64]) {
        let (h, w) = self.big;
        let (oh, ow) = self.small;
        let n = oh * ow;
        col.fill(0.0);
        for c in 0..channels {
            let plane = &img[c * h * w..(c + 1) * h * w];
            for ky in 0..self.k {
                let (oy_lo, oy_hi) = valid_range(ky, self.pad, self.stride, h, oh);
                for kx in 0..self.k {
                    let (ox_lo, ox_hi) = valid_range(kx, self.pad, self.stride, w, ow);
                    let row = &mut col[((c * self.k + ky) * self.k + kx) * n..][..n];
                    for oy in oy_lo..oy_hi {
                        let iy = oy * self.stride + ky - self.pad;
                        let src = &plane[iy * w..(iy + 1) * w];
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        if self.stride == 1 {
                            let start = ox_lo + kx - self.pad;
                            dst[ox_lo..ox_hi].copy_from_slice(&src[start..start + ox_hi - ox_lo]);
                        } else {
                            for ox in ox_lo..ox_hi {
                                dst[ox] = src[ox * self.stride + kx - self.pad];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Window::im2col`]: scatter-add columns back onto the image.
    fn col2im(&self, col: &[f64], channels: usize, img: &mut [f64]) {
        let (h, w) = self.big;
        let (oh, ow) = self.small;
        let n = oh * ow;
        for c in 0..channels {
            let plane = &mut img[c * h * w..(c + 1) * h * w];
            for ky in 0..self.k {
                let (oy_lo, oy_hi) = valid_range(ky, self.pad, self.stride, h, oh);
                for kx in 0..self.k {
                    let (ox_lo, ox_hi) = valid_range(kx, self.pad, self.stride, w, ow);
                    let row = &col[((c * self.k + ky) * self.k + kx) * n..][..n];
                    for oy in oy_lo..oy_hi {
                        let iy = oy * self.stride + ky - self.pad;
                        let dst = &mut plane[iy * w..(iy + 1) * w];
                        let src = &row[oy * ow..(oy + 1) * ow];
                        for ox in ox_lo..ox_hi {
                            dst[ox * self.stride + kx - self.pad] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Row-major `c[m x n] = a[m x k] * b[k x n]` (`beta = 0`) or `+=` (`beta = 1`).
/// `ta`/`tb` read the stored operand transposed.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides above address exactly the m*k, k*n and m*n
    // elements whose presence the debug assertion documents, and the
    // three slices do not alias.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn add_bias(out: &mut [f64], b: &[f64], plane: usize) {
    for (co, &bv) in b.iter().enumerate() {
        out[co * plane..(co + 1) * plane].iter_mut().for_each(|v| *v += bv);
    }
}

fn bias_grad(g: &[f64], grad_b: &mut [f64], plane: usize) {
    for (co, gb) in grad_b.iter_mut().enumerate() {
        *gb += g[co * plane..(co + 1) * plane].iter().sum::<f64>();
    }
}

/// Cross-correlation of `x` with `w`, plus bias.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Result<Tensor> {
    let out_shape = check_conv(x, w, b, stride, pad)?;
    let [n, c_in, h, wd] = x.shape();
    let [_, c_out, oh, ow] = out_shape;
    let k = w.shape()[2];
    let win = Window { big: (h, wd), small: (oh, ow), k, stride, pad };
    let rows = c_in * k * k;
    let mut col = vec![0.0; rows * oh * ow];
    let mut out = Tensor::zeros(out_shape);
    let per_in = c_in * h * wd;
    let per_out = c_out * oh * ow;
    for s in 0..n {
        win.im2col(&x.data()[s * per_in..(s + 1) * per_in], c_in, &mut col);
        let o = &mut out.data_mut()[s * per_out..(s + 1) * per_out];
        gemm(c_out, rows, oh * ow, w.data(), false, &col, false, 0.0, o);
        add_bias(o, b, oh * ow);
    }
    Ok(out)
}

/// Analytic gradients of [`conv2d`] given the output cotangent.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<ConvGrads> {
    let c_out = w.shape()[0];
    let out_shape = check_conv(x, w, &vec![0.0; c_out], stride, pad)?;
    grad_out.expect_shape(out_shape, "conv2d_backward grad_out")?;
    let [n, c_in, h, wd] = x.shape();
    let [_, _, oh, ow] = out_shape;
    let k = w.shape()[2];
    let win = Window { big: (h, wd), small: (oh, ow), k, stride, pad };
    let rows = c_in * k * k;
    let np = oh * ow;
    let mut col = vec![0.0; rows * np];
    let mut grad_x = Tensor::zeros(x.shape());
    let mut grad_w = Tensor::zeros(w.shape());
    let mut grad_b = vec![0.0; c_out];
    let per_in = c_in * h * wd;
    let per_out = c_out * np;
    for s in 0..n {
        let g = &grad_out.data()[s * per_out..(s + 1) * per_out];
        bias_grad(g, &mut grad_b, np);
        win.im2col(&x.data()[s * per_in..(s + 1) * per_in], c_in, &mut col);
        // grad_w += g * col^T
        gemm(c_out, np, rows, g, false, &col, true, 1.0, grad_w.data_mut());
        // grad_col = w^T * g
        gemm(rows, c_out, np, w.data(), true, g, false, 0.0, &mut col);
        win.col2im(&col, c_in, &mut grad_x.data_mut()[s * per_in..(s + 1) * per_in]);
    }
    Ok(ConvGrads { grad_x, grad_w, grad_b })
}

/// Transposed convolution (the adjoint of [`conv2d`] in `x`), plus bias.
pub fn tconv2d(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Result<Tensor> {
    let out_shape = check_tconv(x, w, b, stride, pad)?;
    let [n, c_in, h, wd] = x.shape();
    let [_, c_out, oh, ow] = out_shape;
    let k = w.shape()[2];
    let win = Window { big: (oh, ow), small: (h, wd), k, stride, pad };
    let rows = c_out * k * k;
    let np = h * wd;
    let mut col = vec![0.0; rows * np];
    let mut out = Tensor::zeros(out_shape);
    let per_in = c_in * np;
    let per_out = c_out * oh * ow;
    for s in 0..n {
        // col = w^T * x, with w viewed as [c_in, c_out*k*k]
        gemm(rows, c_in, np, w.data(), true, &x.data()[s * per_in..(s + 1) * per_in], false, 0.0, &mut col);
        let o = &mut out.data_mut()[s * per_out..(s + 1) * per_out];
        win.col2im(&col, c_out, o);
        add_bias(o, b, oh * ow);
    }
    Ok(out)
}

/// Analytic gradients of [`tconv2d`] given the output cotangent.
pub fn tconv2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<ConvGrads> {
    let c_out = w.shape()[1];
    let out_shape = check_tconv(x, w, &vec![0.0; c_out], stride, pad)?;
    grad_out.expect_shape(out_shape, "tconv2d_backward grad_out")?;
    let [n, c_in, h, wd] = x.shape();
    let [_, _, oh, ow] = out_shape;
    let k = w.shape()[2];
    let win = Window { big: (oh, ow), small: (h, wd), k, stride, pad };
    let rows = c_out * k * k;
    let np = h * wd;
    let mut col = vec![0.0; rows * np];
    let mut grad_x = Tensor::zeros(x.shape());
    let mut grad_w = Tensor::zeros(w.shape());
    let mut grad_b = vec![0.0; c_out];
    let per_in = c_in * np;
    let per_out = c_out * oh * ow;
    for s in 0..n {
        let g = &grad_out.data()[s * per_out..(s + 1) * per_out];
        bias_grad(g, &mut grad_b, oh * ow);
        win.im2col(g, c_out, &mut col);
        let xs = &x.data()[s * per_in..(s + 1) * per_in];
        // grad_x = w * gcol, grad_w += x * gcol^T
        gemm(c_in, rows, np, w.data(), false, &col, false, 0.0, &mut grad_x.data_mut()[s * per_in..(s + 1) * per_in]);
        gemm(c_in, np, rows, xs, false, &col, true, 1.0, grad_w.data_mut());
    }
    Ok(ConvGrads { grad_x, grad_w, grad_b })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{central_difference, max_relative_error};
    use crate::numerics::rng::SeedStream;
    use rand::Rng;

    fn random(shape: [usize; 4], rng: &mut impl Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Straight quadruple loop over output positions; independent of the
    /// row-range bookkeeping used by `conv2d`.
    fn naive_conv(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Tensor {
        let [n, c_in, h, wd] = x.shape();
        let [c_out, _, k, _] = w.shape();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros([n, c_out, oh, ow]);
        for s in 0..n {
            for co in 0..c_out {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[co];
                        for ci in 0..c_in {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.at(s, ci, iy as usize, ix as usize) * w.at(co, ci, ky, kx);
                                }
                            }
                        }
                        out.set(s, co, oy, ox, acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = SeedStream::new(1).stream("conv-identity");
        let x = random([2, 1, 5, 7], &mut rng);
        let w = Tensor::full([1, 1, 1, 1], 1.0);
        let y = conv2d(&x, &w, &[0.0], 1, 0).unwrap();
        assert!(y.bit_eq(&x));
    }

    #[test]
    fn bias_only_response() {
        let mut rng = SeedStream::new(2).stream("conv-bias");
        let x = Tensor::zeros([1, 2, 4, 4]);
        let w = random([1, 2, 3, 3], &mut rng);
        let y = conv2d(&x, &w, &[3.0], 1, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn matches_nested_loop_reference() {
        let mut rng = SeedStream::new(3).stream("conv-ref");
        let x = random([1, 2, 5, 5], &mut rng);
        let w = random([3, 2, 3, 3], &mut rng);
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = conv2d(&x, &w, &b, 1, 1).unwrap();
        let r = naive_conv(&x, &w, &b, 1, 1);
        for (a, e) in y.data().iter().zip(r.data()) {
            assert!((a - e).abs() <= 1e-12);
        }
    }

    #[test]
    fn matches_reference_on_random_shapes() {
        let mut rng = SeedStream::new(4).stream("conv-shapes");
        for _ in 0..50 {
            let k = [1, 3, 5][rng.random_range(0..3)];
            let stride = rng.random_range(1..=3);
            let pad = rng.random_range(0..=k / 2 + 1);
            let h = rng.random_range(k.max(2)..9);
            let wd = rng.random_range(k.max(2)..9);
            let c_in = rng.random_range(1..4);
            let c_out = rng.random_range(1..4);
            let n = rng.random_range(1..3);
            let x = random([n, c_in, h, wd], &mut rng);
            let w = random([c_out, c_in, k, k], &mut rng);
            let b: Vec<f64> = (0..c_out).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = conv2d(&x, &w, &b, stride, pad).unwrap();
            let r = naive_conv(&x, &w, &b, stride, pad);
            assert_eq!(y.shape(), r.shape());
            for (a, e) in y.data().iter().zip(r.data()) {
                assert!((a - e).abs() <= 1e-12, "k={k} s={stride} p={pad}");
            }
        }
    }

    #[test]
    fn shape_mismatch_names_the_dimension() {
        let x = Tensor::zeros([1, 2, 4, 4]);
        let w = Tensor::zeros([1, 3, 3, 3]);
        let err = conv2d(&x, &w, &[0.0], 1, 1).unwrap_err().to_string();
        assert!(err.contains("input channels"), "{err}");
        let w = Tensor::zeros([1, 2, 2, 2]);
        assert!(conv2d(&x, &w, &[0.0], 1, 1).is_err());
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut rng = SeedStream::new(5).stream("conv-zero");
        let x = random([1, 2, 5, 5], &mut rng);
        let w = random([3, 2, 3, 3], &mut rng);
        let g = conv2d_backward(&x, &w, &Tensor::zeros([1, 3, 3, 3]), 2, 1).unwrap();
        assert!(g.grad_x.data().iter().all(|&v| v == 0.0));
        assert!(g.grad_w.data().iter().all(|&v| v == 0.0));
        assert!(g.grad_b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_gradient_is_channel_sum() {
        let mut rng = SeedStream::new(6).stream("conv-bias-grad");
        let x = random([2, 2, 5, 5], &mut rng);
        let w = random([3, 2, 3, 3], &mut rng);
        let go = random([2, 3, 5, 5], &mut rng);
        let g = conv2d_backward(&x, &w, &go, 1, 1).unwrap();
        for co in 0..3 {
            let s: f64 = (0..2).map(|n| go.plane(n, co).iter().sum::<f64>()).sum();
            assert!((g.grad_b[co] - s).abs() < 1e-12);
        }
    }

    fn check_conv_grads(transposed: bool, seed: u64) {
        let mut rng = SeedStream::new(seed).stream("conv-fd");
        let stride = rng.random_range(1..=2);
        let (k, pad) = if transposed { (4, 1) } else { (3, 1) };
        let x = random([2, 2, 4, 5], &mut rng);
        let w = if transposed {
            random([2, 3, k, k], &mut rng)
        } else {
            random([3, 2, k, k], &mut rng)
        };
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fwd = |x: &Tensor, w: &Tensor, b: &[f64]| {
            if transposed {
                tconv2d(x, w, b, stride, pad).unwrap()
            } else {
                conv2d(x, w, b, stride, pad).unwrap()
            }
        };
        let y = fwd(&x, &w, &b);
        let probe = random(y.shape(), &mut rng);
        let loss = |y: &Tensor| y.data().iter().zip(probe.data()).map(|(a, p)| a * p).sum::<f64>();
        let grads = if transposed {
            tconv2d_backward(&x, &w, &probe, stride, pad).unwrap()
        } else {
            conv2d_backward(&x, &w, &probe, stride, pad).unwrap()
        };

        let num_x = central_difference(x.data(), 1e-5, |v| {
            loss(&fwd(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), &w, &b))
        });
        let num_w = central_difference(w.data(), 1e-5, |v| {
            loss(&fwd(&x, &Tensor::from_vec(w.shape(), v.to_vec()).unwrap(), &b))
        });
        let num_b = central_difference(&b, 1e-5, |v| loss(&fwd(&x, &w, v)));
        assert!(max_relative_error(grads.grad_x.data(), &num_x) < 1e-4);
        assert!(max_relative_error(grads.grad_w.data(), &num_w) < 1e-4);
        assert!(max_relative_error(&grads.grad_b, &num_b) < 1e-4);
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        for seed in 0..5 {
            check_conv_grads(false, 100 + seed);
        }
    }

    #[test]
    fn tconv_gradients_match_finite_differences() {
        for seed in 0..5 {
            check_conv_grads(true, 200 + seed);
        }
    }

    #[test]
    fn tconv_equals_conv_with_flipped_swapped_kernel() {
        let mut rng = SeedStream::new(7).stream("duality");
        for _ in 0..10 {
            let k = [1, 3, 5][rng.random_range(0..3)];
            let pad = rng.random_range(0..k);
            let (c_in, c_out) = (rng.random_range(1..4), rng.random_range(1..4));
            let x = random([1, c_in, 6, 5], &mut rng);
            let w = random([c_in, c_out, k, k], &mut rng);
            let b: Vec<f64> = (0..c_out).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut flipped = Tensor::zeros([c_out, c_in, k, k]);
            for ci in 0..c_in {
                for co in 0..c_out {
                    for ky in 0..k {
                        for kx in 0..k {
                            flipped.set(co, ci, k - 1 - ky, k - 1 - kx, w.at(ci, co, ky, kx));
                        }
                    }
                }
            }
            let t = tconv2d(&x, &w, &b, 1, pad).unwrap();
            let c = conv2d(&x, &flipped, &b, 1, k - 1 - pad).unwrap();
            assert_eq!(t.shape(), c.shape());
            for (a, e) in t.data().iter().zip(c.data()) {
                assert!((a - e).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn tconv_identity_kernel() {
        let mut rng = SeedStream::new(8).stream("tconv-identity");
        let x = random([1, 1, 3, 4], &mut rng);
        let y = tconv2d(&x, &Tensor::full([1, 1, 1, 1], 1.0), &[0.0], 1, 0).unwrap();
        assert!(y.bit_eq(&x));
    }

    #[test]
    fn tconv_output_extent() {
        assert_eq!(tconv_out_dim(4, 4, 2, 1).unwrap(), 8);
        assert_eq!(tconv_out_dim(1, 4, 2, 1).unwrap(), 2);
        assert_eq!(tconv_out_dim(4, 3, 1, 1).unwrap(), 4);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let mut rng = SeedStream::new(9).stream("det");
        let x = random([2, 3, 8, 8], &mut rng);
        let w = random([4, 3, 3, 3], &mut rng);
        let b = vec![0.1, 0.2, 0.3, 0.4];
        let a = conv2d(&x, &w, &b, 2, 1).unwrap();
        let c = conv2d(&x, &w, &b, 2, 1).unwrap();
        assert!(a.bit_eq(&c));
    }
}
