use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{step_count, Trajectory};
use crate::error::{Error, Result};
use crate::gibbs::{PeriodicPerturbation, Potential};

type DriftFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Fraction of `ε³` used as the automatic multiscale step.
pub const MULTISCALE_STEP_FRACTION: f64 = 0.025;

/// Autonomous SDE `dX = b(X) dt + S dW` with constant `S`.
#[derive(Clone)]
pub struct SdeSpec {
    drift: DriftFn,
    /// Row-major `dim × dim`.
    noise_scale: Vec<f64>,
    dim: usize,
    /// Scale separation of a multiscale drift; enforces `dt < ε³`.
    eps: Option<f64>,
}

impl fmt::Debug for SdeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeSpec")
            .field("dim", &self.dim)
            .field("noise_scale", &self.noise_scale)
            .field("eps", &self.eps)
            .finish_non_exhaustive()
    }
}

impl SdeSpec {
    pub fn new(
        dim: usize,
        drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        noise_scale: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || noise_scale.len() != dim * dim {
            return Err(Error::InvalidParameter(format!(
                "noise scale needs {} entries for dim {dim}, got {}",
                dim * dim,
                noise_scale.len()
            )));
        }
        if noise_scale.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("noise scale must be finite".into()));
        }
        Ok(Self { drift: Arc::new(drift), noise_scale, dim, eps: None })
    }

    /// Marks the drift as multiscale with separation `eps`.
    pub fn with_scale_separation(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eps(&self) -> Option<f64> {
        self.eps
    }

    pub fn noise_scale(&self) -> &[f64] {
        &self.noise_scale
    }

    pub fn drift_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.drift)(x, &mut out);
        out
    }
}

/// Potential part of a Langevin drift.
#[derive(Debug, Clone)]
pub enum LangevinPotential {
    Scalar(Potential),
    /// `V(x) = ½ xᵀ M x` on ℝ².
    QuadraticForm(Matrix2<f64>),
}

impl LangevinPotential {
    fn dim(&self) -> usize {
        match self {
            Self::Scalar(_) => 1,
            Self::QuadraticForm(_) => 2,
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// `dX = -α ∇V(X) - (1/ε) ∇p(X/ε) dt + √(2σ) dW`, with `p` acting
/// coordinatewise in two dimensions.
pub fn multiscale_langevin(
    alpha: f64,
    sigma: f64,
    eps: f64,
    potential: &LangevinPotential,
    perturbations: &[PeriodicPerturbation],
) -> Result<SdeSpec> {
    check_positive("alpha", alpha)?;
    check_positive("sigma", sigma)?;
    check_positive("eps", eps)?;
    let dim = potential.dim();
    if perturbations.len() != dim {
        return Err(Error::InvalidParameter(format!(
            "{dim}-dimensional potential needs {dim} perturbations, got {}",
            perturbations.len()
        )));
    }
    let noise = (2.0 * sigma).sqrt();
    let inv_eps = 1.0 / eps;
    let spec = match potential.clone() {
        LangevinPotential::Scalar(v) => {
            let p = perturbations[0].clone();
            SdeSpec::new(
                1,
                move |x, out| out[0] = -alpha * v.derivative(x[0]) - inv_eps * p.derivative(x[0] * inv_eps),
                vec![noise],
            )?
        }
        LangevinPotential::QuadraticForm(m) => {
            let (p1, p2) = (perturbations[0].clone(), perturbations[1].clone());
            SdeSpec::new(
                2,
                move |x, out| {
                    out[0] = -alpha * (m[(0, 0)] * x[0] + m[(0, 1)] * x[1]) - inv_eps * p1.derivative(x[0] * inv_eps);
                    out[1] = -alpha * (m[(1, 0)] * x[0] + m[(1, 1)] * x[1]) - inv_eps * p2.derivative(x[1] * inv_eps);
                },
                vec![noise, 0.0, 0.0, noise],
            )?
        }
    };
    Ok(spec.with_scale_separation(eps))
}

/// `dX = -θ V'(X) dt + √(2σ̄) dW`.
pub fn homogenized_langevin(theta: f64, sigma_bar: f64, potential: Potential) -> Result<SdeSpec> {
    check_positive("theta", theta)?;
    if !(sigma_bar >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_bar must be non-negative, got {sigma_bar}")));
    }
    SdeSpec::new(1, move |x, out| out[0] = -theta * potential.derivative(x[0]), vec![(2.0 * sigma_bar).sqrt()])
}

/// `dX = -ϑ X dt + √(2Σ) dW` with diagonal `Σ`.
pub fn homogenized_langevin_2d(theta: Matrix2<f64>, sigma: [f64; 2]) -> Result<SdeSpec> {
    for s in sigma {
        check_positive("Sigma diagonal", s)?;
    }
    SdeSpec::new(
        2,
        move |x, out| {
            out[0] = -(theta[(0, 0)] * x[0] + theta[(0, 1)] * x[1]);
            out[1] = -(theta[(1, 0)] * x[0] + theta[(1, 1)] * x[1]);
        },
        vec![(2.0 * sigma[0]).sqrt(), 0.0, 0.0, (2.0 * sigma[1]).sqrt()],
    )
}

/// Automatic `(dt, stride)` for a multiscale run: the largest
/// `dt <= MULTISCALE_STEP_FRACTION · ε³` dividing `obs_dt`.
pub fn multiscale_step(eps: f64, obs_dt: f64) -> (f64, usize) {
    let dt_max = MULTISCALE_STEP_FRACTION * eps * eps * eps;
    let stride = ((obs_dt / dt_max) - 1e-9).ceil().max(1.0) as usize;
    (obs_dt / stride as f64, stride)
}

/// Euler–Maruyama storing every step.
pub fn euler_maruyama(spec: &SdeSpec, x0: &[f64], horizon: f64, dt: f64, seed: u64) -> Result<Trajectory> {
    euler_maruyama_strided(spec, x0, horizon, dt, 1, seed)
}

/// Euler–Maruyama `X_{k+1} = X_k + b(X_k) dt + S √dt ξ_k`, keeping every
/// `stride`-th state. The Gaussian increments come from a ChaCha8 stream
/// seeded with `seed`, so equal inputs give bit-identical paths.
pub fn euler_maruyama_strided(
    spec: &SdeSpec,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    stride: usize,
    seed: u64,
) -> Result<Trajectory> {
    let d = spec.dim;
    if x0.len() != d {
        return Err(Error::InvalidParameter(format!("x0 has {} entries, expected {d}", x0.len())));
    }
    if let Some(eps) = spec.eps {
        let limit = eps * eps * eps;
        if dt >= limit * (1.0 - 1e-12) {
            return Err(Error::StepTooLarge { dt, limit });
        }
    }
    let m = step_count(horizon, dt)?;
    if stride == 0 || m % stride != 0 {
        return Err(Error::InvalidParameter(format!("stride {stride} does not divide {m} steps")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_dt = dt.sqrt();
    let scale: Vec<f64> = spec.noise_scale.iter().map(|s| s * sqrt_dt).collect();
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || spec.noise_scale[i * d + j] == 0.0));

    let mut states = Vec::with_capacity((m / stride + 1) * d);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut b = vec![0.0; d];
    let mut xi = vec![0.0; d];
    for k in 1..=m {
        (spec.drift)(&x, &mut b);
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if diagonal {
            for i in 0..d {
                x[i] += b[i] * dt + scale[i * d + i] * xi[i];
            }
        } else {
            for i in 0..d {
                let noise: f64 = (0..d).map(|j| scale[i * d + j] * xi[j]).sum();
                x[i] += b[i] * dt + noise;
            }
        }
        if !x.iter().all(|v| v.is_finite() && v.abs() < 1e150) {
            return Err(Error::BlowUp { step: k });
        }
        if k % stride == 0 {
            states.extend_from_slice(&x);
        }
    }
    Trajectory::new(dt * stride as f64, d, seed, states)
}
