use std::fs::File;
use std::path::Path;

use rhythmotion::frame::Frame;
use rhythmotion::FPS;

/// Delay in hundredths of a second before frame `k + 1`. The running sum
/// tracks `k / FPS` exactly up to rounding, so the total is `n / FPS`.
pub fn frame_delay(k: usize) -> u16 {
    let at = |i: usize| (100 * i + FPS / 2) / FPS;
    (at(k + 1) - at(k)) as u16
}

/// Writes the frames as a looping grayscale GIF, each pixel scaled up by
/// `scale`.
pub fn write_gif(path: &Path, frames: &[Frame], scale: usize) -> std::io::Result<()> {
    let Some(first) = frames.first() else {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "no frames to encode"));
    };
    let scale = scale.max(1);
    let (w, h) = (first.width * scale, first.height * scale);
    if w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "GIF dimensions exceed 65535"));
    }
    let palette: Vec<u8> = (0..=255u8).flat_map(|v| [v, v, v]).collect();
    let file = File::create(path)?;
    let mut enc = gif::Encoder::new(file, w as u16, h as u16, &palette).map_err(std::io::Error::other)?;
    enc.set_repeat(gif::Repeat::Infinite).map_err(std::io::Error::other)?;
    for (k, f) in frames.iter().enumerate() {
        let mut px = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                px[y * w + x] = (f.get(x / scale, y / scale).clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        let mut g = gif::Frame::from_indexed_pixels(w as u16, h as u16, px, None);
        g.delay = frame_delay(k);
        enc.write_frame(&g).map_err(std::io::Error::other)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delays_sum_to_duration() {
        for n in [1usize, 2, 3, 59, 60, 61, 1000, 3541] {
            let total: usize = (0..n).map(|k| frame_delay(k) as usize).sum();
            let exact = 100.0 * n as f64 / FPS as f64;
            assert!((total as f64 - exact).abs() <= 0.5 + 1e-9, "{n}: {total} vs {exact}");
        }
        assert!((0..600).all(|k| matches!(frame_delay(k), 1 | 2)));
    }
}
