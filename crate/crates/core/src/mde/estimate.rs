use std::time::Instant;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::optimize::{minimize_matrix_constrained, minimize_scalar, MatrixOptions, Minimum, ScalarOptions};
use super::{DistanceEvaluator, DistanceMode, Family, WeightKernel};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::gibbs::Potential;

/// Initial points of the non-Gaussian drift fit, as multiples of the
/// configured init; later entries are only tried when earlier ones fail to
/// converge.
pub const QUARTIC_RESTARTS: [f64; 3] = [1.0, 0.25, 0.05];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaHat {
    Scalar(f64),
    /// Row-major.
    Matrix([[f64; 2]; 2]),
}

impl ThetaHat {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            ThetaHat::Scalar(v) => Some(*v),
            ThetaHat::Matrix(_) => None,
        }
    }

    pub fn matrix(&self) -> Option<Matrix2<f64>> {
        match self {
            ThetaHat::Scalar(_) => None,
            ThetaHat::Matrix(m) => Some(Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])),
        }
    }

    /// Entries in row-major order.
    pub fn entries(&self) -> Vec<f64> {
        match self {
            ThetaHat::Scalar(v) => vec![*v],
            ThetaHat::Matrix(m) => vec![m[0][0], m[0][1], m[1][0], m[1][1]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub theta_hat: ThetaHat,
    /// Final objective, without the dropped trajectory-only term.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    /// Seconds spent in the optimizer.
    pub wall_time: f64,
}

/// What is estimated from a trajectory.
#[derive(Debug, Clone)]
pub enum Problem {
    /// `θ` of `-θ V'` with `σ̄` known.
    Langevin1dDrift { sigma_bar: f64, potential: Potential, beta: f64, init: f64 },
    /// Drift matrix of a 2D OU process with diagonal `Σ` known.
    Langevin2dDrift { sigma: [f64; 2], beta: f64, init: Matrix2<f64> },
    /// `σ̄` of the Gibbs law `exp(-V/σ̄)`, `V = B x⁴/4 - A x²/2`.
    FcnDiffusion { a: f64, b: f64, beta: f64, init: f64 },
}

impl Problem {
    /// Distance evaluator for this problem on `traj`.
    pub fn evaluator(&self, traj: Trajectory) -> Result<DistanceEvaluator> {
        let (family, beta) = match self {
            Problem::Langevin1dDrift { sigma_bar, potential, beta, .. } => {
                (Family::Drift { sigma_bar: *sigma_bar, potential: potential.clone() }, *beta)
            }
            Problem::Langevin2dDrift { sigma, beta, .. } => (Family::Matrix { sigma: *sigma }, *beta),
            Problem::FcnDiffusion { a, b, beta, .. } => {
                (Family::Diffusion { theta: 1.0, potential: Potential::Landau { a: *a, b: *b } }, *beta)
            }
        };
        let mode = match &family {
            Family::Drift { potential, .. } | Family::Diffusion { potential, .. }
                if potential.gaussian_curvature().is_none() =>
            {
                DistanceMode::FftConvolution
            }
            _ => DistanceMode::GaussianClosedForm,
        };
        DistanceEvaluator::new(traj, WeightKernel::new(beta)?, family, mode)
    }
}

fn scalar_fit(eval: &DistanceEvaluator, init: f64) -> Result<Minimum<f64>> {
    minimize_scalar(|t| eval.distance(t).unwrap_or(f64::INFINITY), init, 0.0, ScalarOptions::default())
}

/// Minimum distance estimate for `problem` from `traj`.
pub fn estimate(problem: &Problem, traj: &Trajectory) -> Result<EstimateResult> {
    let start = Instant::now();
    let eval = problem.evaluator(traj.clone())?;
    let (theta_hat, objective, iterations, converged) = match problem {
        Problem::Langevin1dDrift { init, .. } | Problem::FcnDiffusion { init, .. } => {
            if !(*init > 0.0) {
                return Err(Error::InvalidParameter(format!("initial point must be positive, got {init}")));
            }
            let restarts: &[f64] = if eval.mode() == DistanceMode::FftConvolution { &QUARTIC_RESTARTS } else { &[1.0] };
            let mut best: Option<Minimum<f64>> = None;
            let mut iterations = 0;
            for factor in restarts {
                let m = scalar_fit(&eval, init * factor)?;
                iterations += m.iterations;
                let better = match &best {
                    None => true,
                    Some(b) => (m.converged && !b.converged) || (m.converged == b.converged && m.value < b.value),
                };
                if better {
                    best = Some(m);
                }
                if m.converged {
                    break;
                }
            }
            let m = best.expect("at least one start");
            (ThetaHat::Scalar(m.argmin), m.value, iterations, m.converged)
        }
        Problem::Langevin2dDrift { sigma, init, .. } => {
            let m = minimize_matrix_constrained(
                |a| eval.distance_matrix(a).unwrap_or(f64::INFINITY),
                *sigma,
                init,
                MatrixOptions::default(),
            )?;
            let a = m.argmin;
            (ThetaHat::Matrix([[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]]), m.value, m.iterations, m.converged)
        }
    };
    Ok(EstimateResult {
        theta_hat,
        objective,
        iterations,
        converged,
        seed: traj.seed(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}
