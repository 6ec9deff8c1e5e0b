use super::Tensor;

/// Negative-side slope used throughout the codec networks.
pub const LEAKY_SLOPE: f64 = 0.01;

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| if v >= 0.0 { v } else { slope * v })
}

/// Gradient of [`leaky_relu`] with respect to its input `x`.
pub fn leaky_relu_backward(x: &Tensor, grad_out: &Tensor, slope: f64) -> Tensor {
    debug_assert_eq!(x.shape(), grad_out.shape());
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v >= 0.0 { g } else { slope * g })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("shapes checked")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::full([1, 1, 1, 1], v)
    }

    #[test]
    fn forward_values() {
        assert_eq!(leaky_relu(&scalar(2.0), 0.1).data()[0], 2.0);
        assert!((leaky_relu(&scalar(-2.0), 0.1).data()[0] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn backward_on_negative_side_is_slope() {
        let g = leaky_relu_backward(&scalar(-1.0), &scalar(1.0), 0.1);
        assert_eq!(g.data()[0], 0.1);
        let g = leaky_relu_backward(&scalar(1.5), &scalar(2.0), 0.1);
        assert_eq!(g.data()[0], 2.0);
    }
}
