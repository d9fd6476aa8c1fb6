/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-4;

/// Relative error between analytic and numeric gradients, per coordinate.
///
/// The denominator is floored at `1e-3` of the largest analytic component
/// (and `1e-8` absolutely) so coordinates whose true gradient is ~0 are
/// judged against the gradient's overall scale rather than against noise.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Compares the analytic gradient returned by `f` at `theta` with central
/// finite differences (`h = 1e-4`) and returns the maximum relative error.
pub fn grad_check<F>(mut f: F, theta: &[f64]) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(theta);
    assert_eq!(analytic.len(), theta.len(), "gradient length must match parameter length");
    let mut x = theta.to_vec();
    let numeric: Vec<f64> = (0..theta.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let fp = f(&x).0;
            x[i] = orig - FD_STEP;
            let fm = f(&x).0;
            x[i] = orig;
            (fp - fm) / (2.0 * FD_STEP)
        })
        .collect();
    relative_error(&analytic, &numeric)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let c = [0.5, -1.25, 3.0, 0.0];
        let err = grad_check(|x| (x.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() + 2.0, c.to_vec()), &[1.0, 2.0, -3.0, 0.5]);
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let err = grad_check(|x| (7.0, vec![0.0; x.len()]), &[1.0, 2.0]);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let err = grad_check(|x| (x[0] * x[0], vec![x[0]]), &[1.5]);
        assert!(err > 0.4);
    }
}
