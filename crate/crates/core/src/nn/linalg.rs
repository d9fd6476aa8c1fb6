//! Thin wrappers over `matrixmultiply::dgemm` for row-major matrices.

/// `c = alpha * op(a) * op(b) + beta * c` where `op(a)` is `m × k` and
/// `op(b)` is `k × n`. `ta`/`tb` read the stored matrices transposed.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides describe in-bounds row-major layouts checked above.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

/// Row-major `m × k` times `k × n`.
pub fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    gemm(m, k, n, a, false, b, false, &mut c, 0.0);
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2,3],[4,5,6]], b = [[1,0],[0,1],[1,1]]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(matmul(2, 3, 2, &a, &b), vec![4.0, 5.0, 10.0, 11.0]);
        // aᵀ a, 3×3
        let mut c = vec![0.0; 9];
        gemm(3, 2, 3, &a, true, &a, false, &mut c, 0.0);
        assert_eq!(c, vec![17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
        // a aᵀ, 2×2, accumulated onto ones
        let mut c = vec![1.0; 4];
        gemm(2, 3, 2, &a, false, &a, true, &mut c, 1.0);
        assert_eq!(c, vec![15.0, 33.0, 33.0, 78.0]);
    }
}
