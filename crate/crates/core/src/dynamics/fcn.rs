use super::{step_count, Trajectory};
use crate::error::{Error, Result};

pub const LORENZ_SIGMA: f64 = 10.0;
pub const LORENZ_RHO: f64 = 28.0;
pub const LORENZ_BETA: f64 = 8.0 / 3.0;

/// Slow variable driven by a fast Lorenz system:
///
/// ```text
/// x'  = a x - b x³ + (λ/ε) y₂
/// y₁' = 10 (y₂ - y₁) / ε²
/// y₂' = (28 y₁ - y₂ - y₁ y₃) / ε²
/// y₃' = (y₁ y₂ - 8/3 y₃) / ε²
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcnSpec {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub eps: f64,
}

impl FcnSpec {
    #[inline]
    pub fn rhs(&self, s: &[f64; 4]) -> [f64; 4] {
        let [x, y1, y2, y3] = *s;
        let fast = 1.0 / (self.eps * self.eps);
        [
            self.a * x - self.b * x * x * x + self.lambda / self.eps * y2,
            fast * LORENZ_SIGMA * (y2 - y1),
            fast * (LORENZ_RHO * y1 - y2 - y1 * y3),
            fast * (y1 * y2 - LORENZ_BETA * y3),
        ]
    }

    /// Largest admissible RK4 step, `ε² / 10`.
    pub fn max_step(&self) -> f64 {
        0.1 * self.eps * self.eps
    }
}

/// `(dt, stride)` with `dt <= min(1e-3, ε²/10)` dividing `obs_dt`.
pub fn fcn_step(eps: f64, obs_dt: f64) -> (f64, usize) {
    let dt_max = (0.1 * eps * eps).min(1e-3);
    let stride = ((obs_dt / dt_max) - 1e-9).ceil().max(1.0) as usize;
    (obs_dt / stride as f64, stride)
}

fn axpy(s: &[f64; 4], k: &[f64; 4], h: f64) -> [f64; 4] {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2], s[3] + h * k[3]]
}

/// Classical RK4 on the full system, storing the slow coordinate every
/// `stride` steps.
pub fn rk4_fcn(spec: &FcnSpec, x0: [f64; 4], horizon: f64, dt: f64, stride: usize) -> Result<Trajectory> {
    if !(spec.eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {}", spec.eps)));
    }
    let limit = spec.max_step();
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt, limit });
    }
    let m = step_count(horizon, dt)?;
    if stride == 0 || m % stride != 0 {
        return Err(Error::InvalidParameter(format!("stride {stride} does not divide {m} steps")));
    }
    let mut xs = Vec::with_capacity(m / stride + 1);
    xs.push(x0[0]);
    let mut s = x0;
    for k in 1..=m {
        let k1 = spec.rhs(&s);
        let k2 = spec.rhs(&axpy(&s, &k1, 0.5 * dt));
        let k3 = spec.rhs(&axpy(&s, &k2, 0.5 * dt));
        let k4 = spec.rhs(&axpy(&s, &k3, dt));
        for i in 0..4 {
            s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !s.iter().all(|v| v.is_finite() && v.abs() < 1e100) {
            return Err(Error::BlowUp { step: k });
        }
        if k % stride == 0 {
            xs.push(s[0]);
        }
    }
    Trajectory::scalar(dt * stride as f64, 0, xs)
}
