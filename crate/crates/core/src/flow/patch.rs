use rand::Rng;

use super::{FlowError, FlowField};

pub const MIN_CROP_FRACTION: f64 = 0.7;

/// Square `p × p` flow patch cut from a field, vectors rescaled to the
/// patch's pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPatch {
    pub size: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub origin: (f64, f64),
    pub crop: (f64, f64),
}

impl FlowPatch {
    /// Channel-major `[2, p, p]` buffer.
    pub fn to_channels(&self) -> Vec<f64> {
        self.u.iter().chain(&self.v).map(|&x| x as f64).collect()
    }
}

fn bilinear(ch: &[f32], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let at = |xx: usize, yy: usize| ch[yy * w + xx] as f64;
    let a = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let b = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    a * (1.0 - fy) + b * fy
}

fn resample(flow: &FlowField, origin: (f64, f64), crop: (f64, f64), p: usize) -> Result<FlowPatch, FlowError> {
    if p < 8 {
        return Err(FlowError::PatchSize(p));
    }
    let (sx, sy) = (crop.0 / p as f64, crop.1 / p as f64);
    let (ku, kv) = (p as f64 / crop.0, p as f64 / crop.1);
    let mut u = vec![0.0; p * p];
    let mut v = vec![0.0; p * p];
    for i in 0..p {
        let y = origin.1 + (i as f64 + 0.5) * sy - 0.5;
        for j in 0..p {
            let x = origin.0 + (j as f64 + 0.5) * sx - 0.5;
            u[i * p + j] = (bilinear(&flow.u, flow.width, flow.height, x, y) * ku) as f32;
            v[i * p + j] = (bilinear(&flow.v, flow.width, flow.height, x, y) * kv) as f32;
        }
    }
    Ok(FlowPatch { size: p, u, v, origin, crop })
}

/// Random square crop with side uniform in `[0.7, 1] · min(w, h)`, resized
/// bilinearly to `p × p`.
pub fn crop_resize<R: Rng>(flow: &FlowField, rng: &mut R, p: usize) -> Result<FlowPatch, FlowError> {
    let min_side = flow.width.min(flow.height) as f64;
    let side = rng.random_range(MIN_CROP_FRACTION..=1.0) * min_side;
    let ox = rng.random_range(0.0..=(flow.width as f64 - side).max(0.0));
    let oy = rng.random_range(0.0..=(flow.height as f64 - side).max(0.0));
    resample(flow, (ox, oy), (side, side), p)
}

/// Whole field resized to `p × p` (no crop), used at inference time.
pub fn resize_full(flow: &FlowField, p: usize) -> Result<FlowPatch, FlowError> {
    resample(flow, (0.0, 0.0), (flow.width as f64, flow.height as f64), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn half_crop_doubles_uniform_flow() {
        let f = FlowField::uniform(32, 32, 1.0, 1.0);
        let p = resample(&f, (8.0, 8.0), (16.0, 16.0), 32).unwrap();
        assert!(p.u.iter().chain(&p.v).all(|&x| (x - 2.0).abs() < 1e-5));
    }

    #[test]
    fn identity_crop_is_unchanged() {
        let mut f = FlowField::zeros(16, 16);
        for (k, x) in f.u.iter_mut().enumerate() {
            *x = (k as f32 * 0.37).sin();
        }
        for (k, x) in f.v.iter_mut().enumerate() {
            *x = (k as f32 * 0.11).cos();
        }
        let p = resize_full(&f, 16).unwrap();
        for (a, b) in p.u.iter().zip(&f.u).chain(p.v.iter().zip(&f.v)) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn crop_is_seed_deterministic_and_in_range() {
        let f = FlowField::uniform(40, 30, 0.5, -0.25);
        let a = crop_resize(&f, &mut ChaCha8Rng::seed_from_u64(5), 24).unwrap();
        let b = crop_resize(&f, &mut ChaCha8Rng::seed_from_u64(5), 24).unwrap();
        assert_eq!(a, b);
        let side = a.crop.0;
        assert!((0.7 * 30.0..=30.0).contains(&side));
        assert!(a.origin.0 + side <= 40.0 + 1e-9 && a.origin.1 + side <= 30.0 + 1e-9);
        let k = 24.0 / side;
        assert!(a.u.iter().all(|&x| (x as f64 - 0.5 * k).abs() < 1e-5));
    }

    #[test]
    fn tiny_patch_rejected() {
        assert!(resize_full(&FlowField::zeros(16, 16), 4).is_err());
    }
}
