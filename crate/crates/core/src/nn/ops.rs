const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

/// Tanh-approximation GELU.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub fn gelu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| gelu_scalar(v)).collect()
}

/// `dx = dy * gelu'(x)`.
pub fn gelu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter().zip(dy).map(|(&v, &g)| g * gelu_grad_scalar(v)).collect()
}

/// In-place numerically stable softmax over each row of a `rows × cols`
/// matrix.
pub fn softmax_rows(x: &mut [f64], cols: usize) {
    for row in x.chunks_exact_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    #[test]
    fn gelu_values() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        let g = gelu_scalar(10.0);
        assert!((9.99..=10.0).contains(&g), "gelu(10) = {g}");
        assert!(gelu_scalar(-10.0).abs() < 1e-10);
    }

    #[test]
    fn gelu_gradient_matches_finite_differences() {
        let theta: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.17).collect();
        let err = grad_check(
            |x| {
                let y = gelu(x);
                let f = y.iter().enumerate().map(|(i, v)| (1.0 + 0.1 * i as f64) * v).sum();
                let dy: Vec<f64> = (0..x.len()).map(|i| 1.0 + 0.1 * i as f64).collect();
                (f, gelu_backward(x, &dy))
            },
            &theta,
        );
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut x = vec![1.0, 2.0, 3.0, 1000.0, 1000.0, -5.0];
        softmax_rows(&mut x, 3);
        assert!((x[..3].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((x[3] - 0.5).abs() < 1e-12);
    }
}
