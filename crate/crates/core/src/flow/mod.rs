//! Dense optical flow between consecutive grayscale frames.

mod horn_schunck;
mod patch;
mod rfl;

use thiserror::Error;

use crate::container::ContainerError;

pub use horn_schunck::{estimate_flow, estimate_flow_with, HornSchunck};
pub use patch::{crop_resize, resize_full, FlowPatch, MIN_CROP_FRACTION};
pub use rfl::{decode_flows, encode_flows, read_flows, write_flows, RFL_MAGIC};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("frame size mismatch: {a:?} vs {b:?}")]
    SizeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("frames must be at least 2x2, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("patch size {0} is below the minimum of 8")]
    PatchSize(usize),
    #[error(transparent)]
    Container(#[from] ContainerError),
}

/// Per-pixel displacement in pixels/frame, row-major channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, u: vec![0.0; width * height], v: vec![0.0; width * height] }
    }

    pub fn uniform(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self { width, height, u: vec![u; width * height], v: vec![v; width * height] }
    }

    pub fn max_abs(&self) -> f32 {
        self.u.iter().chain(&self.v).fold(0.0f32, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// Mean absolute difference over both channels.
pub fn flow_l1_distance(a: &FlowField, b: &FlowField) -> Result<f64, FlowError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(FlowError::SizeMismatch { a: (a.width, a.height), b: (b.width, b.height) });
    }
    let n = 2 * a.width * a.height;
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a.u.iter().zip(&b.u).chain(a.v.iter().zip(&b.v)).map(|(x, y)| (x - y).abs() as f64).sum();
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_examples() {
        let a = FlowField::uniform(6, 5, 1.0, 0.0);
        let z = FlowField::zeros(6, 5);
        assert_eq!(flow_l1_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(flow_l1_distance(&a, &z).unwrap(), 0.5);
        assert_eq!(flow_l1_distance(&z, &a).unwrap(), 0.5);
        assert!(flow_l1_distance(&a, &FlowField::zeros(5, 6)).is_err());
    }
}
