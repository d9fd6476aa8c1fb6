use serde::{Deserialize, Serialize};

use super::render::{Canvas, View};
use crate::frame::Frame;

pub const ARM_LINKS: usize = 3;
pub const ACTION_LIMIT: f64 = 0.9;

/// Planar 3-link arm on a fixed base, joint angles relative to the previous
/// link and measured from vertical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmParams {
    pub lengths: [f64; ARM_LINKS],
    /// Physical joint rate (rad/s) per unit of commanded velocity.
    pub speed_scale: f64,
    /// Largest change of a commanded velocity component per step.
    pub max_velocity_change: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self { lengths: [0.45, 0.35, 0.25], speed_scale: 4.0, max_velocity_change: 0.6 }
    }
}

impl ArmParams {
    /// Base followed by the end point of each link.
    pub fn points(&self, q: &[f64]) -> [(f64, f64); ARM_LINKS + 1] {
        let mut pts = [(0.0, 0.0); ARM_LINKS + 1];
        let mut phi = 0.0;
        for i in 0..ARM_LINKS {
            phi += q[i];
            pts[i + 1] = (pts[i].0 + self.lengths[i] * phi.sin(), pts[i].1 + self.lengths[i] * phi.cos());
        }
        pts
    }

    /// True when any link point lies below the base.
    pub fn below_base(&self, q: &[f64]) -> bool {
        self.points(q)[1..].iter().any(|p| p.1 < 0.0)
    }

    pub fn view(&self) -> View {
        let reach: f64 = self.lengths.iter().sum();
        View { center: (0.0, 0.35 * reach), span: 2.3 * reach }
    }

    pub fn render(&self, q: &[f64], width: usize, height: usize) -> Frame {
        let mut c = Canvas::new(width, height, self.view(), 0.0);
        c.rect((0.0, -0.06), (0.12, 0.06), 0.35);
        let pts = self.points(q);
        let shades = [0.7, 0.85, 1.0];
        let radii = [0.06, 0.05, 0.04];
        for i in 0..ARM_LINKS {
            c.capsule(pts[i], pts[i + 1], radii[i], shades[i]);
        }
        c.into_frame()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_up_points() {
        let p = ArmParams::default();
        let pts = p.points(&[0.0, 0.0, 0.0]);
        assert!((pts[3].1 - 1.05).abs() < 1e-12 && pts[3].0.abs() < 1e-12);
        assert!(!p.below_base(&[0.0, 0.0, 0.0]));
        assert!(p.below_base(&[std::f64::consts::PI, 0.0, 0.0]));
    }
}
