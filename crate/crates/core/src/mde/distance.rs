use nalgebra::Matrix2;

use super::WeightKernel;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::gibbs::{truncation_window, GibbsDensity, Potential, TAIL_WIDENING};
use crate::numerics::{self, fft_convolve, interp_at, Grid1D, DEFAULT_GRID_NODES};

/// How `D` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    /// Gaussian invariant law, Gaussian integrals done by hand.
    GaussianClosedForm,
    /// `μ(θ) * k` on a grid by FFT, then interpolated at the data.
    FftConvolution,
}

/// Parametric invariant family and which parameter is free.
#[derive(Debug, Clone)]
pub enum Family {
    /// `μ ∝ exp(-θ V / σ̄)`, `σ̄` known, `θ` free.
    Drift { sigma_bar: f64, potential: Potential },
    /// `μ ∝ exp(-θ V / σ̄)`, `θ` known, `σ̄` free.
    Diffusion { theta: f64, potential: Potential },
    /// Two-dimensional OU law `N(0, A⁻¹ Σ)` with `Σ` diagonal, `A` free.
    Matrix { sigma: [f64; 2] },
}

impl Family {
    fn dim(&self) -> usize {
        match self {
            Family::Matrix { .. } => 2,
            _ => 1,
        }
    }

    /// `(θ, σ̄, V)` for a scalar free parameter.
    fn resolve(&self, param: f64) -> Result<(f64, f64, &Potential)> {
        if !(param > 0.0 && param.is_finite()) {
            return Err(Error::InvalidParameter(format!("parameter must be positive, got {param}")));
        }
        match self {
            Family::Drift { sigma_bar, potential } => Ok((param, *sigma_bar, potential)),
            Family::Diffusion { theta, potential } => Ok((*theta, param, potential)),
            Family::Matrix { .. } => {
                Err(Error::InvalidParameter("matrix family takes a 2x2 parameter".into()))
            }
        }
    }
}

/// Objective `θ ↦ D(θ, X)` for one trajectory, up to the dropped constant.
#[derive(Debug, Clone)]
pub struct DistanceEvaluator {
    traj: Trajectory,
    weights: Vec<f64>,
    kernel: WeightKernel,
    family: Family,
    mode: DistanceMode,
    grid_nodes: usize,
}

impl DistanceEvaluator {
    pub fn new(traj: Trajectory, kernel: WeightKernel, family: Family, mode: DistanceMode) -> Result<Self> {
        if traj.dim() != family.dim() {
            return Err(Error::InvalidParameter(format!(
                "{}-dimensional trajectory for a {}-dimensional family",
                traj.dim(),
                family.dim()
            )));
        }
        match (&family, mode) {
            (Family::Matrix { sigma }, DistanceMode::GaussianClosedForm) => {
                if !sigma.iter().all(|s| *s > 0.0 && s.is_finite()) {
                    return Err(Error::InvalidParameter(format!("Sigma diagonal must be positive, got {sigma:?}")));
                }
            }
            (Family::Matrix { .. }, DistanceMode::FftConvolution) => {
                return Err(Error::InvalidParameter("FFT distance is one-dimensional".into()));
            }
            (Family::Drift { potential, .. } | Family::Diffusion { potential, .. }, DistanceMode::GaussianClosedForm) => {
                if potential.gaussian_curvature().is_none() {
                    return Err(Error::InvalidParameter(
                        "closed form needs a quadratic potential; use the FFT mode".into(),
                    ));
                }
            }
            _ => {}
        }
        let weights = traj.time_weights();
        Ok(Self { traj, weights, kernel, family, mode, grid_nodes: DEFAULT_GRID_NODES + 1 })
    }

    /// Node count of the FFT density grid; rounded up to an odd number so
    /// that zero is a node.
    pub fn with_grid_nodes(mut self, n: usize) -> Self {
        self.grid_nodes = n | 1;
        self
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn kernel(&self) -> WeightKernel {
        self.kernel
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn mode(&self) -> DistanceMode {
        self.mode
    }

    /// Objective at a scalar parameter, in the evaluator's mode.
    pub fn distance(&self, param: f64) -> Result<f64> {
        match self.mode {
            DistanceMode::GaussianClosedForm => distance_closed_form(self, param),
            DistanceMode::FftConvolution => distance_fft(self, param),
        }
    }

    /// Objective at a matrix parameter.
    pub fn distance_matrix(&self, a: &Matrix2<f64>) -> Result<f64> {
        distance_closed_form_matrix(self, a)
    }

    /// Density of the scalar family on a symmetric window wide enough for
    /// both `μ` and the kernel.
    pub fn fft_density(&self, param: f64) -> Result<GibbsDensity> {
        let (theta, sigma_bar, potential) = self.family.resolve(param)?;
        let scale = theta / sigma_bar;
        let (lo, hi) = truncation_window(|x| scale * potential.value(x))?;
        let half = lo.abs().max(hi.abs()) + (1.0 + TAIL_WIDENING) * self.kernel.support_radius();
        GibbsDensity::on_window(theta, sigma_bar, potential.clone(), -half, half, self.grid_nodes)
    }
}

/// Gaussian closed form for a scalar family with variance `σ̄ / (θ c)`:
/// `-2/√(1+β²s) · mean_t exp(-β² X² / (2(1+β²s))) + 1/√(1+2β²s)`.
pub fn distance_closed_form(eval: &DistanceEvaluator, param: f64) -> Result<f64> {
    let (theta, sigma_bar, potential) = eval.family.resolve(param)?;
    let c = potential
        .gaussian_curvature()
        .ok_or_else(|| Error::InvalidParameter("closed form needs a quadratic potential".into()))?;
    let s = sigma_bar / (theta * c);
    let b2 = eval.kernel.beta() * eval.kernel.beta();
    let a = 1.0 + b2 * s;
    let rate = -0.5 * b2 / a;
    let mean: f64 = eval.traj.raw().iter().zip(&eval.weights).map(|(x, w)| w * (rate * x * x).exp()).sum();
    Ok(-2.0 / a.sqrt() * mean + 1.0 / (1.0 + 2.0 * b2 * s).sqrt())
}

/// Two-dimensional closed form with `S = A⁻¹ Σ`:
/// `-2/√det(I+β²S) · mean_t exp(-β²/2 Xᵀ(I+β²S)⁻¹X) + 1/√det(I+2β²S)`.
pub fn distance_closed_form_matrix(eval: &DistanceEvaluator, a: &Matrix2<f64>) -> Result<f64> {
    let Family::Matrix { sigma } = eval.family else {
        return Err(Error::InvalidParameter("matrix parameter needs the matrix family".into()));
    };
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("A = {a:?} is singular")))?;
    let s = inv * Matrix2::from_diagonal(&nalgebra::Vector2::new(sigma[0], sigma[1]));
    let asym = (s[(0, 1)] - s[(1, 0)]).abs();
    if !(asym <= 1e-8 * s.norm()) {
        return Err(Error::NotPositiveDefinite(format!("A⁻¹Σ is not symmetric (defect {asym:e})")));
    }
    let s = 0.5 * (s + s.transpose());
    if !(s[(0, 0)] > 0.0 && s.determinant() > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("A⁻¹Σ = {s:?}")));
    }
    let b2 = eval.kernel.beta() * eval.kernel.beta();
    let m = Matrix2::identity() + b2 * s;
    let minv = m.try_inverse().expect("I + β²S is positive definite");
    let (q11, q12, q22) = (-0.5 * b2 * minv[(0, 0)], -b2 * minv[(0, 1)], -0.5 * b2 * minv[(1, 1)]);
    let mean: f64 = eval
        .traj
        .raw()
        .chunks_exact(2)
        .zip(&eval.weights)
        .map(|(x, w)| w * (q11 * x[0] * x[0] + q12 * x[0] * x[1] + q22 * x[1] * x[1]).exp())
        .sum();
    let third = (Matrix2::identity() + 2.0 * b2 * s).determinant();
    Ok(-2.0 / m.determinant().sqrt() * mean + 1.0 / third.sqrt())
}

/// FFT path on the evaluator's default density grid.
pub fn distance_fft(eval: &DistanceEvaluator, param: f64) -> Result<f64> {
    let density = eval.fft_density(param)?;
    distance_fft_with(eval, &density)
}

/// `-2 mean_t (μ*k)(X) + ∫ (μ*k) μ` for a given density grid. Trajectory
/// points off the grid see `μ*k = 0`, so the grid must extend one kernel
/// radius beyond the support of `μ`.
pub fn distance_fft_with(eval: &DistanceEvaluator, density: &GibbsDensity) -> Result<f64> {
    if eval.traj.dim() != 1 {
        return Err(Error::InvalidParameter("FFT distance is one-dimensional".into()));
    }
    let mu = density.grid();
    let r = eval.kernel.support_radius();
    if mu.lo() > -r || mu.hi() < r {
        return Err(Error::GridMismatch(format!(
            "density grid [{}, {}] does not contain the kernel support [-{r}, {r}]",
            mu.lo(),
            mu.hi()
        )));
    }
    let k = Grid1D::from_fn(mu.lo(), mu.hi(), mu.len(), |x| eval.kernel.eval(x))?;
    let conv = fft_convolve(mu, &k)?;
    let mean: f64 = eval.traj.raw().iter().zip(&eval.weights).map(|(&x, w)| w * interp_at(&conv, x)).sum();
    let prod: Vec<f64> = conv.values().iter().zip(mu.values()).map(|(a, b)| a * b).collect();
    Ok(-2.0 * mean + numerics::trapezoid(&prod, mu.dx()))
}

/// `‖C_θ - C_θ₀‖²` in `L²(φ)` for centred Gaussian laws with variances `s`
/// and `s0`.
pub fn population_distance(s: f64, s0: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    1.0 / (1.0 + 2.0 * b2 * s).sqrt() + 1.0 / (1.0 + 2.0 * b2 * s0).sqrt() - 2.0 / (1.0 + b2 * (s + s0)).sqrt()
}
