use super::{FlowError, FlowField};
use crate::frame::Frame;

/// Horn–Schunck settings. Intensities are rescaled to `[0, 255]` before
/// solving so that `alpha` has its customary magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HornSchunck {
    pub alpha: f32,
    pub iterations: usize,
    pub levels: usize,
    /// Gaussian pre-smoothing; 0 disables it.
    pub sigma: f32,
}

impl Default for HornSchunck {
    fn default() -> Self {
        Self { alpha: 10.0, iterations: 100, levels: 2, sigma: 1.0 }
    }
}

pub fn estimate_flow(prev: &Frame, next: &Frame) -> Result<FlowField, FlowError> {
    estimate_flow_with(prev, next, &HornSchunck::default())
}

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    d: Vec<f32>,
}

impl Plane {
    fn from_frame(f: &Frame) -> Self {
        Self { w: f.width, h: f.height, d: f.data.iter().map(|v| v * 255.0).collect() }
    }

    #[inline]
    fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.d[y * self.w + x]
    }

    fn sample(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.w - 1) as f32);
        let y = y.clamp(0.0, (self.h - 1) as f32);
        let x0 = x.floor() as isize;
        let y0 = y.floor() as isize;
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let a = self.at(x0, y0) * (1.0 - fx) + self.at(x0 + 1, y0) * fx;
        let b = self.at(x0, y0 + 1) * (1.0 - fx) + self.at(x0 + 1, y0 + 1) * fx;
        a * (1.0 - fy) + b * fy
    }

    fn downsample(&self) -> Self {
        let (w, h) = ((self.w / 2).max(1), (self.h / 2).max(1));
        let mut d = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = (2 * x as isize, 2 * y as isize);
                d[y * w + x] = 0.25 * (self.at(sx, sy) + self.at(sx + 1, sy) + self.at(sx, sy + 1) + self.at(sx + 1, sy + 1));
            }
        }
        Self { w, h, d }
    }

    fn blur(&self, sigma: f32) -> Self {
        if sigma <= 0.0 {
            return self.clone();
        }
        let r = (3.0 * sigma).ceil() as isize;
        let mut k: Vec<f32> = (-r..=r).map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp()).collect();
        let s: f32 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= s);
        let mut tmp = vec![0.0; self.d.len()];
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                tmp[y as usize * self.w + x as usize] = (-r..=r).map(|i| k[(i + r) as usize] * self.at(x + i, y)).sum();
            }
        }
        let t = Plane { w: self.w, h: self.h, d: tmp };
        let mut d = vec![0.0; self.d.len()];
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                d[y as usize * self.w + x as usize] = (-r..=r).map(|i| k[(i + r) as usize] * t.at(x, y + i)).sum();
            }
        }
        Plane { w: self.w, h: self.h, d }
    }
}

/// Weighted neighbourhood average of the classic scheme (1/6 edge, 1/12
/// corner neighbours) with replicated borders.
fn local_average(src: &[f32], w: usize, h: usize, dst: &mut [f32]) {
    let avg = |rm: &[f32], r0: &[f32], rp: &[f32], xm: usize, x: usize, xp: usize| {
        let edge = r0[xm] + r0[xp] + rm[x] + rp[x];
        let corner = rm[xm] + rm[xp] + rp[xm] + rp[xp];
        edge / 6.0 + corner / 12.0
    };
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        let (rm, r0, rp) = (&src[ym * w..ym * w + w], &src[y * w..y * w + w], &src[yp * w..yp * w + w]);
        let out = &mut dst[y * w..y * w + w];
        out[0] = avg(rm, r0, rp, 0, 0, 1.min(w - 1));
        if w > 1 {
            out[w - 1] = avg(rm, r0, rp, w - 2, w - 1, w - 1);
        }
        // Interior columns without clamping, written so the loop vectorises.
        if w > 2 {
            let n = w - 2;
            let (a, b, c) = (&r0[..n], &r0[2..], &rm[1..n + 1]);
            let (d, e, f) = (&rp[1..n + 1], &rm[..n], &rm[2..]);
            let (g, k) = (&rp[..n], &rp[2..]);
            for (i, o) in out[1..w - 1].iter_mut().enumerate() {
                let edge = a[i] + b[i] + c[i] + d[i];
                let corner = e[i] + f[i] + g[i] + k[i];
                *o = edge / 6.0 + corner / 12.0;
            }
        }
    }
}

/// Solves for the flow at one pyramid level, linearised around `(u0, v0)`.
fn solve_level(i1: &Plane, i2: &Plane, u0: &[f32], v0: &[f32], cfg: &HornSchunck) -> (Vec<f32>, Vec<f32>) {
    let (w, h) = (i1.w, i1.h);
    let n = w * h;
    let mut warped = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            warped[k] = i2.sample(x as f32 + u0[k], y as f32 + v0[k]);
        }
    }
    let i2w = Plane { w, h, d: warped };
    let mut ix = vec![0.0; n];
    let mut iy = vec![0.0; n];
    let mut it = vec![0.0; n];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let k = y as usize * w + x as usize;
            let dx = |p: &Plane| 0.5 * (p.at(x + 1, y) - p.at(x - 1, y));
            let dy = |p: &Plane| 0.5 * (p.at(x, y + 1) - p.at(x, y - 1));
            ix[k] = 0.5 * (dx(i1) + dx(&i2w));
            iy[k] = 0.5 * (dy(i1) + dy(&i2w));
            it[k] = i2w.d[k] - i1.d[k];
        }
    }
    let a2 = cfg.alpha * cfg.alpha;
    // Residual of the linearised constraint at the initial flow is `it`;
    // precompute the per-pixel normaliser once.
    let denom: Vec<f32> = ix.iter().zip(&iy).map(|(a, b)| 1.0 / (a2 + a * a + b * b)).collect();
    let mut u = u0.to_vec();
    let mut v = v0.to_vec();
    let mut ub = vec![0.0; n];
    let mut vb = vec![0.0; n];
    for _ in 0..cfg.iterations {
        local_average(&u, w, h, &mut ub);
        local_average(&v, w, h, &mut vb);
        for k in 0..n {
            let r = ix[k] * (ub[k] - u0[k]) + iy[k] * (vb[k] - v0[k]) + it[k];
            let s = r * denom[k];
            u[k] = ub[k] - ix[k] * s;
            v[k] = vb[k] - iy[k] * s;
        }
    }
    (u, v)
}

fn upsample(u: &[f32], cw: usize, ch: usize, w: usize, h: usize) -> Vec<f32> {
    let p = Plane { w: cw, h: ch, d: u.iter().map(|x| x * 2.0).collect() };
    let sx = cw as f32 / w as f32;
    let sy = ch as f32 / h as f32;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = p.sample((x as f32 + 0.5) * sx - 0.5, (y as f32 + 0.5) * sy - 0.5);
        }
    }
    out
}

/// Coarse-to-fine Horn–Schunck flow from `prev` to `next`.
pub fn estimate_flow_with(prev: &Frame, next: &Frame, cfg: &HornSchunck) -> Result<FlowField, FlowError> {
    if (prev.width, prev.height) != (next.width, next.height) {
        return Err(FlowError::SizeMismatch { a: (prev.width, prev.height), b: (next.width, next.height) });
    }
    if prev.width < 2 || prev.height < 2 {
        return Err(FlowError::TooSmall(prev.width, prev.height));
    }
    let mut p1 = vec![Plane::from_frame(prev).blur(cfg.sigma)];
    let mut p2 = vec![Plane::from_frame(next).blur(cfg.sigma)];
    for _ in 1..cfg.levels.max(1) {
        let (a, b) = (p1.last().unwrap(), p2.last().unwrap());
        if a.w < 8 || a.h < 8 {
            break;
        }
        let (da, db) = (a.downsample(), b.downsample());
        p1.push(da);
        p2.push(db);
    }
    let top = p1.len() - 1;
    let mut u = vec![0.0; p1[top].w * p1[top].h];
    let mut v = u.clone();
    for lvl in (0..=top).rev() {
        let (a, b) = (&p1[lvl], &p2[lvl]);
        if lvl < top {
            let c = &p1[lvl + 1];
            u = upsample(&u, c.w, c.h, a.w, a.h);
            v = upsample(&v, c.w, c.h, a.w, a.h);
        }
        let (nu, nv) = solve_level(a, b, &u, &v, cfg);
        u = nu;
        v = nv;
    }
    Ok(FlowField { width: prev.width, height: prev.height, u, v })
}
