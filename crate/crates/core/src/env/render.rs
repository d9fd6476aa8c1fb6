//! Anti-aliased rasterisation of capsules and boxes onto grayscale frames.

use crate::frame::Frame;

/// Maps a world rectangle onto a frame. World `y` points up, pixel rows down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub center: (f64, f64),
    /// World units spanned by the frame width.
    pub span: f64,
}

pub struct Canvas {
    pub frame: Frame,
    view: View,
    scale: f64,
}

impl Canvas {
    pub fn new(width: usize, height: usize, view: View, background: f32) -> Self {
        Self { frame: Frame::filled(width, height, background), view, scale: width as f64 / view.span }
    }

    /// World units to pixels.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// World point to continuous pixel coordinates (pixel centres at `.5`).
    pub fn to_pixel(&self, p: (f64, f64)) -> (f64, f64) {
        let w = self.frame.width as f64;
        let h = self.frame.height as f64;
        ((p.0 - self.view.center.0) * self.scale + w / 2.0, h / 2.0 - (p.1 - self.view.center.1) * self.scale)
    }

    /// Rasterises a shape given by its signed distance (in pixels) at pixel
    /// centres, using `0.5 - d` as coverage. Overlaps keep the brighter
    /// intensity.
    fn fill<F: Fn(f64, f64) -> f64>(&mut self, bbox: (f64, f64, f64, f64), intensity: f32, sdf: F) {
        let (w, h) = (self.frame.width, self.frame.height);
        let x0 = (bbox.0 - 1.0).floor().max(0.0) as usize;
        let y0 = (bbox.1 - 1.0).floor().max(0.0) as usize;
        let x1 = ((bbox.2 + 1.0).ceil().max(0.0) as usize).min(w);
        let y1 = ((bbox.3 + 1.0).ceil().max(0.0) as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let d = sdf(x as f64 + 0.5, y as f64 + 0.5);
                let cov = (0.5 - d).clamp(0.0, 1.0) as f32;
                if cov > 0.0 {
                    let v = cov * intensity;
                    let px = &mut self.frame.data[y * w + x];
                    *px = px.max(v);
                }
            }
        }
    }

    /// Segment from `a` to `b` thickened by `radius` (world units).
    pub fn capsule(&mut self, a: (f64, f64), b: (f64, f64), radius: f64, intensity: f32) {
        let pa = self.to_pixel(a);
        let pb = self.to_pixel(b);
        let r = radius * self.scale;
        let bbox = (pa.0.min(pb.0) - r, pa.1.min(pb.1) - r, pa.0.max(pb.0) + r, pa.1.max(pb.1) + r);
        let (dx, dy) = (pb.0 - pa.0, pb.1 - pa.1);
        let len2 = dx * dx + dy * dy;
        self.fill(bbox, intensity, |x, y| {
            let t = if len2 > 0.0 { (((x - pa.0) * dx + (y - pa.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let (cx, cy) = (pa.0 + t * dx, pa.1 + t * dy);
            ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - r
        });
    }

    /// Axis-aligned box centred at `c` with half extents `half` (world units).
    pub fn rect(&mut self, c: (f64, f64), half: (f64, f64), intensity: f32) {
        let pc = self.to_pixel(c);
        let (hx, hy) = (half.0 * self.scale, half.1 * self.scale);
        self.fill((pc.0 - hx, pc.1 - hy, pc.0 + hx, pc.1 + hy), intensity, |x, y| {
            let qx = (x - pc.0).abs() - hx;
            let qy = (y - pc.1).abs() - hy;
            let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
            outside + qx.max(qy).min(0.0)
        });
    }

    pub fn into_frame(self) -> Frame {
        self.frame
    }
}

/// Intensity-weighted centroid in pixel coordinates.
pub fn centroid(frame: &Frame) -> (f64, f64) {
    let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
    for y in 0..frame.height {
        for x in 0..frame.width {
            let v = frame.get(x, y) as f64;
            sx += v * (x as f64 + 0.5);
            sy += v * (y as f64 + 0.5);
            s += v;
        }
    }
    if s == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    (sx / s, sy / s)
}
