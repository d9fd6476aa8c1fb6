use super::RewardError;

const NORM_FLOOR: f64 = 1e-12;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity, 0 when either vector is (numerically) zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na < NORM_FLOOR || nb < NORM_FLOOR {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Reward for a music/flow projection pair.
pub fn reward(z_m: &[f64], z_o: &[f64]) -> Result<f64, RewardError> {
    if z_m.len() != z_o.len() {
        return Err(RewardError::Dim { got: z_o.len(), expected: z_m.len() });
    }
    Ok(cosine(z_m, z_o))
}

fn normalized(z: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let norms: Vec<f64> = z.iter().map(|v| norm(v).max(NORM_FLOOR)).collect();
    (z.iter().zip(&norms).map(|(v, n)| v.iter().map(|x| x / n).collect()).collect(), norms)
}

fn log_softmax_diag_loss(logits: &[f64], b: usize, transpose: bool, probs: &mut [f64]) -> f64 {
    let at = |i: usize, j: usize| if transpose { logits[j * b + i] } else { logits[i * b + j] };
    let mut loss = 0.0;
    for i in 0..b {
        let m = (0..b).map(|j| at(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..b).map(|j| (at(i, j) - m).exp()).sum();
        let lse = m + sum.ln();
        loss += lse - at(i, i);
        for j in 0..b {
            let p = (at(i, j) - lse).exp();
            if transpose {
                probs[j * b + i] = p;
            } else {
                probs[i * b + j] = p;
            }
        }
    }
    loss / b as f64
}

/// Symmetric InfoNCE loss over L2-normalised embeddings and its gradients
/// with respect to the raw (unnormalised) `z_o` and `z_m`.
pub fn info_nce_grad(z_o: &[Vec<f64>], z_m: &[Vec<f64>], tau: f64) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>), RewardError> {
    let b = z_o.len();
    if b < 2 {
        return Err(RewardError::BatchTooSmall(b));
    }
    if z_m.len() != b {
        return Err(RewardError::Dim { got: z_m.len(), expected: b });
    }
    if !(tau > 0.0) {
        return Err(RewardError::InvalidConfig(format!("temperature must be positive, got {tau}")));
    }
    let d = z_o[0].len();
    if z_o.iter().chain(z_m).any(|v| v.len() != d) {
        return Err(RewardError::Dim { got: z_m[0].len(), expected: d });
    }
    let (uo, no) = normalized(z_o);
    let (um, nm) = normalized(z_m);
    let mut logits = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            logits[i * b + j] = uo[i].iter().zip(&um[j]).map(|(x, y)| x * y).sum::<f64>() / tau;
        }
    }
    let mut p_row = vec![0.0; b * b];
    let mut p_col = vec![0.0; b * b];
    let l_row = log_softmax_diag_loss(&logits, b, false, &mut p_row);
    let l_col = log_softmax_diag_loss(&logits, b, true, &mut p_col);
    let loss = 0.5 * (l_row + l_col);

    // dL/dlogits, then through the cosine matrix and the normalisation.
    let mut dl = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            let eye = if i == j { 1.0 } else { 0.0 };
            dl[i * b + j] = 0.5 * ((p_row[i * b + j] - eye) + (p_col[i * b + j] - eye)) / b as f64 / tau;
        }
    }
    let mut du_o = vec![vec![0.0; d]; b];
    let mut du_m = vec![vec![0.0; d]; b];
    for i in 0..b {
        for j in 0..b {
            let g = dl[i * b + j];
            for k in 0..d {
                du_o[i][k] += g * um[j][k];
                du_m[j][k] += g * uo[i][k];
            }
        }
    }
    let back = |u: &[Vec<f64>], du: Vec<Vec<f64>>, n: &[f64]| -> Vec<Vec<f64>> {
        du.into_iter()
            .enumerate()
            .map(|(i, g)| {
                let dot: f64 = g.iter().zip(&u[i]).map(|(a, b)| a * b).sum();
                g.iter().zip(&u[i]).map(|(gk, uk)| (gk - uk * dot) / n[i]).collect()
            })
            .collect()
    };
    let g_o = back(&uo, du_o, &no);
    let g_m = back(&um, du_m, &nm);
    Ok((loss, g_o, g_m))
}

pub fn info_nce(z_o: &[Vec<f64>], z_m: &[Vec<f64>], tau: f64) -> Result<f64, RewardError> {
    info_nce_grad(z_o, z_m, tau).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    #[test]
    fn orthonormal_pair_at_unit_temperature() {
        let z = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let l = info_nce(&z, &z, 1.0).unwrap();
        assert!((l - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn identical_embeddings_give_log_b() {
        for b in [2usize, 8, 16] {
            let z = vec![vec![0.3, -1.2, 0.5]; b];
            assert!((info_nce(&z, &z, 0.1).unwrap() - (b as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_invariance_and_errors() {
        let zo = vec![vec![1.0, 2.0, 0.0], vec![0.5, -1.0, 2.0], vec![-1.0, 0.2, 0.3]];
        let zm = vec![vec![0.9, 2.1, 0.1], vec![0.4, -1.0, 1.5], vec![-0.2, 0.2, 0.9]];
        let l = info_nce(&zo, &zm, 0.1).unwrap();
        let mut scaled = zo.clone();
        scaled[1].iter_mut().for_each(|x| *x *= 37.0);
        assert!((info_nce(&scaled, &zm, 0.1).unwrap() - l).abs() < 1e-12);
        assert!(info_nce(&zo[..1], &zm[..1], 0.1).is_err());
        assert!(l >= 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let zo: Vec<f64> = (0..12).map(|i| (i as f64 * 0.77).sin()).collect();
        let zm: Vec<f64> = (0..12).map(|i| (i as f64 * 0.31).cos()).collect();
        let mut theta = zo.clone();
        theta.extend(zm);
        let err = grad_check(
            |p| {
                let o: Vec<Vec<f64>> = p[..12].chunks(3).map(|c| c.to_vec()).collect();
                let m: Vec<Vec<f64>> = p[12..].chunks(3).map(|c| c.to_vec()).collect();
                let (l, go, gm) = info_nce_grad(&o, &m, 0.5).unwrap();
                (l, go.into_iter().chain(gm).flatten().collect())
            },
            &theta,
        );
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-15);
        assert!((cosine(&[1.0, 2.0], &[-1.0, -2.0]) + 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 3.0]), 0.0);
        assert!(reward(&[1.0], &[1.0, 0.0]).is_err());
    }
}
