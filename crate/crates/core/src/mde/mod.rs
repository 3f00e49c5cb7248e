//! Minimum distance estimation from the empirical characteristic function.
//!
//! The estimator minimizes `D(θ, X) = ‖C^T(X, ·) - C_θ‖²` in `L²(φ)` with the
//! Gaussian weight `φ = N(0, β² I)`. Expanding the square leaves a term that
//! does not depend on `θ`; it is never computed, so every objective value in
//! this module is `D` minus that constant.

mod distance;
mod estimate;
mod optimize;

pub use distance::{
    distance_closed_form, distance_closed_form_matrix, distance_fft, distance_fft_with, population_distance,
    DistanceEvaluator, DistanceMode, Family,
};
pub use estimate::{estimate, EstimateResult, Problem, ThetaHat, QUARTIC_RESTARTS};
pub use optimize::{
    constraints, minimize_matrix_constrained, minimize_scalar, MatrixOptions, Minimum, ScalarOptions,
    BARRIER_WEIGHTS,
};

use num_complex::Complex64;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// Gaussian weight `φ = N(0, β² I)` and its kernel `k(x) = exp(-β² |x|² / 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightKernel {
    beta: f64,
}

impl WeightKernel {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (-0.5 * self.beta * self.beta * x * x).exp()
    }

    /// Half-width beyond which `k < 1e-12`.
    pub fn support_radius(&self) -> f64 {
        (2.0 * 1e12f64.ln()).sqrt() / self.beta
    }
}

/// `C^T(X, u) = (1/T) ∫ exp(i uᵀ X(t)) dt` by the trapezoid rule over the
/// stored states.
pub fn empirical_cf(traj: &Trajectory, u: &[f64]) -> Complex64 {
    assert_eq!(u.len(), traj.dim(), "frequency dimension must match the trajectory");
    if u.iter().all(|&v| v == 0.0) {
        return Complex64::new(1.0, 0.0);
    }
    let re = traj.time_average(|x| x.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().cos());
    let im = traj.time_average(|x| x.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().sin());
    Complex64::new(re, im)
}
