use serde::{Deserialize, Serialize};

use super::render::{Canvas, View};
use crate::frame::Frame;

/// Classic cart-pole constants; friction terms follow Barto et al. and
/// default to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force: f64,
    pub cart_friction: f64,
    pub pole_friction: f64,
    /// Camera half-width; leaving it ends the episode.
    pub x_view: f64,
    /// Semi-implicit Euler substeps per frame.
    pub substeps: usize,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force: 10.0,
            cart_friction: 0.0,
            pole_friction: 0.0,
            x_view: 2.4,
            substeps: 8,
        }
    }
}

impl CartPoleParams {
    /// Accelerations `(ẍ, θ̈)` for state `(x, θ, ẋ, θ̇)` under horizontal force `f`.
    pub fn accel(&self, theta: f64, xdot: f64, thetadot: f64, f: f64) -> (f64, f64) {
        let total = self.cart_mass + self.pole_mass;
        let ml = self.pole_mass * self.half_length;
        let (s, c) = theta.sin_cos();
        let sgn = if xdot == 0.0 { 0.0 } else { xdot.signum() };
        let temp = (f + ml * thetadot * thetadot * s - self.cart_friction * sgn) / total;
        let thetaacc = (self.gravity * s - c * temp - self.pole_friction * thetadot / ml)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * c * c / total));
        let xacc = temp - ml * thetaacc * c / total;
        (xacc, thetaacc)
    }

    /// Advances `[x, θ, ẋ, θ̇]` by `dt` under a constant force.
    pub fn integrate(&self, s: [f64; 4], f: f64, dt: f64) -> [f64; 4] {
        let n = self.substeps.max(1);
        let h = dt / n as f64;
        let [mut x, mut th, mut xd, mut thd] = s;
        for _ in 0..n {
            let (xa, ta) = self.accel(th, xd, thd, f);
            xd += h * xa;
            thd += h * ta;
            x += h * xd;
            th += h * thd;
        }
        [x, th, xd, thd]
    }

    /// Kinetic plus potential energy of the rigid-rod model.
    pub fn energy(&self, theta: f64, xdot: f64, thetadot: f64) -> f64 {
        let l = self.half_length;
        let mp = self.pole_mass;
        0.5 * (self.cart_mass + mp) * xdot * xdot
            + mp * l * xdot * thetadot * theta.cos()
            + (2.0 / 3.0) * mp * l * l * thetadot * thetadot
            + mp * self.gravity * l * theta.cos()
    }

    pub fn view(&self) -> View {
        View { center: (0.0, 0.0), span: 2.0 * (self.x_view + 0.3) }
    }

    pub fn render(&self, x: f64, theta: f64, width: usize, height: usize) -> Frame {
        let mut c = Canvas::new(width, height, self.view(), 0.0);
        let track_y = -0.25;
        c.rect((x, track_y), (0.25, 0.12), 0.6);
        let top = (x, track_y + 0.12);
        let tip = (x + 2.0 * self.half_length * theta.sin(), top.1 + 2.0 * self.half_length * theta.cos());
        c.capsule(top, tip, 0.07, 1.0);
        c.into_frame()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_at_rest_is_equilibrium() {
        let p = CartPoleParams::default();
        assert_eq!(p.accel(0.0, 0.0, 0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn push_right_accelerates_cart_right_and_tips_pole_left() {
        let p = CartPoleParams::default();
        let (xa, ta) = p.accel(0.0, 0.0, 0.0, 10.0);
        assert!(xa > 0.0 && ta < 0.0);
    }
}
