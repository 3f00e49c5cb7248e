//! Potentials, periodic perturbations and the parametric invariant densities
//! `μ(θ, x) ∝ exp(-θ V(x) / σ̄)` together with their multiscale counterparts.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{self, Grid1D, DEFAULT_GRID_NODES};

/// Relative density level at which the tails are cut off.
pub const TAIL_CUTOFF: f64 = 1e-12;
/// Extra width added to the cut-off window.
pub const TAIL_WIDENING: f64 = 0.2;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User supplied potential with its derivative.
#[derive(Clone)]
pub struct CustomPotential {
    pub v: ScalarFn,
    pub dv: ScalarFn,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomPotential")
    }
}

/// Confining one-dimensional potential with `V(0) = 0`.
#[derive(Debug, Clone)]
pub enum Potential {
    /// `x² / 2`
    Quadratic,
    /// `x⁴ / 4 - x² / 2`
    Quartic,
    /// `b x⁴ / 4 - a x² / 2`, the drift `a x - b x³` written as a gradient.
    Landau { a: f64, b: f64 },
    Custom(CustomPotential),
}

impl Potential {
    pub fn custom(
        v: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Potential::Custom(CustomPotential { v: Arc::new(v), dv: Arc::new(dv) })
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Potential::Quadratic => 0.5 * x * x,
            Potential::Quartic => {
                let x2 = x * x;
                0.25 * x2 * x2 - 0.5 * x2
            }
            Potential::Landau { a, b } => {
                let x2 = x * x;
                0.25 * b * x2 * x2 - 0.5 * a * x2
            }
            Potential::Custom(c) => (c.v)(x),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Potential::Quadratic => x,
            Potential::Quartic => x * x * x - x,
            Potential::Landau { a, b } => b * x * x * x - a * x,
            Potential::Custom(c) => (c.dv)(x),
        }
    }

    /// Curvature `c` when `V(x) = c x² / 2`; the Gibbs family is then Gaussian
    /// with variance `σ̄ / (θ c)`.
    pub fn gaussian_curvature(&self) -> Option<f64> {
        match *self {
            Potential::Quadratic => Some(1.0),
            Potential::Landau { a, b } if b == 0.0 && a < 0.0 => Some(-a),
            _ => None,
        }
    }

    /// Fits constants `a, b > 0` with `-V'(x) x <= a - b x²` on `[-radius, radius]`.
    ///
    /// `b` is half the smallest ratio `V'(x) x / x²` over the outer half of the
    /// window; `None` when that ratio is not positive.
    pub fn dissipativity(&self, radius: f64) -> Option<(f64, f64)> {
        let n = 4001;
        let xs: Vec<f64> = (0..n).map(|i| -radius + 2.0 * radius * i as f64 / (n - 1) as f64).collect();
        let b = 0.5
            * xs.iter()
                .filter(|x| x.abs() >= 0.5 * radius)
                .map(|&x| self.derivative(x) * x / (x * x))
                .fold(f64::INFINITY, f64::min);
        if !(b > 0.0) {
            return None;
        }
        let a = xs
            .iter()
            .map(|&x| -self.derivative(x) * x + b * x * x)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(f64::EPSILON);
        Some((a, b))
    }
}

/// Periodic function `p` with period `L` and its derivative.
#[derive(Clone)]
pub enum PeriodicPerturbation {
    /// `p ≡ value`
    Constant { value: f64 },
    /// `amplitude · sin(2π y / period)`
    Sine { amplitude: f64, period: f64 },
    Custom { p: ScalarFn, dp: ScalarFn, period: f64 },
}

impl fmt::Debug for PeriodicPerturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { value } => write!(f, "Constant({value})"),
            Self::Sine { amplitude, period } => write!(f, "Sine(amplitude={amplitude}, period={period})"),
            Self::Custom { period, .. } => write!(f, "Custom(period={period})"),
        }
    }
}

impl PeriodicPerturbation {
    pub fn zero() -> Self {
        Self::Constant { value: 0.0 }
    }

    /// `sin(2π y)`, the one-periodic perturbation of the scalar experiments.
    pub fn unit_sine() -> Self {
        Self::Sine { amplitude: 1.0, period: 1.0 }
    }

    pub fn custom(
        p: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dp: impl Fn(f64) -> f64 + Send + Sync + 'static,
        period: f64,
    ) -> Self {
        Self::Custom { p: Arc::new(p), dp: Arc::new(dp), period }
    }

    pub fn period(&self) -> f64 {
        match self {
            Self::Constant { .. } => 1.0,
            Self::Sine { period, .. } | Self::Custom { period, .. } => *period,
        }
    }

    #[inline]
    pub fn value(&self, y: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Sine { amplitude, period } => amplitude * (2.0 * PI * y / period).sin(),
            Self::Custom { p, .. } => p(y),
        }
    }

    #[inline]
    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::Sine { amplitude, period } => {
                let w = 2.0 * PI / period;
                amplitude * w * (w * y).cos()
            }
            Self::Custom { dp, .. } => dp(y),
        }
    }

    /// Largest `|p(y + L) - p(y)|` over a sample of points.
    pub fn periodicity_defect(&self) -> f64 {
        let l = self.period();
        (0..257)
            .map(|i| {
                let y = -3.0 * l + 6.0 * l * i as f64 / 256.0;
                (self.value(y + l) - self.value(y)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `Σ_l |p̂(l)|` for the unit-period Fourier coefficients, when known in
    /// closed form.
    pub fn fourier_abs_sum(&self) -> Option<f64> {
        match self {
            Self::Constant { value } => Some(value.abs()),
            Self::Sine { amplitude, .. } => Some(amplitude.abs()),
            Self::Custom { .. } => None,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Smallest window outside of which `exp(-energy)` is below `TAIL_CUTOFF`
/// times its maximum, widened by `TAIL_WIDENING` of its width.
pub fn truncation_window(energy: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    truncation_window_at(energy, -TAIL_CUTOFF.ln())
}

/// As [`truncation_window`], cutting where the energy exceeds its minimum by
/// `log_cut`.
pub fn truncation_window_at(energy: impl Fn(f64) -> f64, log_cut: f64) -> Result<(f64, f64)> {
    let n = 4001;
    let mut radius = 4.0f64;
    let node = |radius: f64, i: usize| -radius + 2.0 * radius * i as f64 / (n - 1) as f64;
    let (emin, samples) = loop {
        let samples: Vec<f64> = (0..n).map(|i| energy(node(radius, i))).collect();
        let emin = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        if !emin.is_finite() {
            return Err(Error::InvalidParameter("energy has no finite minimum".into()));
        }
        if samples[0] - emin > log_cut && samples[n - 1] - emin > log_cut {
            break (emin, samples);
        }
        radius *= 2.0;
        if radius > 1e7 {
            return Err(Error::InvalidParameter("density does not decay".into()));
        }
    };
    let inside = |x: f64| energy(x) - emin <= log_cut;
    // Outermost sampled nodes inside the level set, refined against their
    // outer neighbours.
    let first = samples.iter().position(|e| e - emin <= log_cut).unwrap_or(n / 2);
    let last = samples.iter().rposition(|e| e - emin <= log_cut).unwrap_or(n / 2);
    let refine = |mut ins: f64, mut out: f64| {
        for _ in 0..80 {
            let mid = 0.5 * (ins + out);
            if inside(mid) {
                ins = mid;
            } else {
                out = mid;
            }
        }
        out
    };
    let lo = refine(node(radius, first), node(radius, first.saturating_sub(1)));
    let hi = refine(node(radius, last), node(radius, (last + 1).min(n - 1)));
    let pad = 0.5 * TAIL_WIDENING * (hi - lo);
    Ok((lo - pad, hi + pad))
}

/// Normalized invariant density `μ(θ, ·)` sampled on a truncated grid.
#[derive(Debug, Clone)]
pub struct GibbsDensity {
    theta: f64,
    sigma_bar: f64,
    potential: Potential,
    normalization: f64,
    grid: Grid1D,
}

impl GibbsDensity {
    /// Density on its default window with `DEFAULT_GRID_NODES` nodes.
    pub fn new(theta: f64, sigma_bar: f64, potential: Potential) -> Result<Self> {
        Self::with_nodes(theta, sigma_bar, potential, DEFAULT_GRID_NODES)
    }

    pub fn with_nodes(theta: f64, sigma_bar: f64, potential: Potential, n: usize) -> Result<Self> {
        positive("theta", theta)?;
        positive("sigma_bar", sigma_bar)?;
        let scale = theta / sigma_bar;
        let (lo, hi) = truncation_window(|x| scale * potential.value(x))?;
        Self::on_window(theta, sigma_bar, potential, lo, hi, n)
    }

    /// Density on a caller-chosen window; fails if the window cuts off mass.
    pub fn on_window(
        theta: f64,
        sigma_bar: f64,
        potential: Potential,
        lo: f64,
        hi: f64,
        n: usize,
    ) -> Result<Self> {
        positive("theta", theta)?;
        positive("sigma_bar", sigma_bar)?;
        let scale = theta / sigma_bar;
        let mut grid = Grid1D::from_fn(lo, hi, n, |x| (-scale * potential.value(x)).exp())?;
        let max = grid.values().iter().cloned().fold(0.0, f64::max);
        if !(max > 0.0 && max.is_finite()) {
            return Err(Error::InvalidParameter("unnormalizable density on window".into()));
        }
        let edge = grid.values()[0].max(grid.values()[n - 1]) / max;
        if edge > 1e-10 {
            return Err(Error::Truncation { ratio: edge, limit: 1e-10 });
        }
        let z = grid.integral();
        for v in grid.values_mut() {
            *v /= z;
        }
        Ok(Self { theta, sigma_bar, potential, normalization: z, grid })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sigma_bar(&self) -> f64 {
        self.sigma_bar
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// `Z(θ) = ∫ exp(-θ V / σ̄)`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// `E_μ[V]`, which equals `-σ̄ ∂_θ Z / Z`.
    pub fn mean_potential(&self) -> f64 {
        let dx = self.grid.dx();
        let w: Vec<f64> = self
            .grid
            .nodes()
            .zip(self.grid.values())
            .map(|(x, m)| self.potential.value(x) * m)
            .collect();
        numerics::trapezoid(&w, dx)
    }

    /// `∂_θ μ(θ, x) = -μ (V(x) - E_μ V) / σ̄` on the grid.
    pub fn theta_derivative(&self) -> Grid1D {
        let ev = self.mean_potential();
        let values = self
            .grid
            .nodes()
            .zip(self.grid.values())
            .map(|(x, m)| -m * (self.potential.value(x) - ev) / self.sigma_bar)
            .collect();
        Grid1D::new(self.grid.lo(), self.grid.hi(), values).expect("same window")
    }
}

/// `Z(θ)` on the default truncated window.
pub fn normalization(theta: f64, sigma_bar: f64, potential: &Potential) -> Result<f64> {
    Ok(GibbsDensity::new(theta, sigma_bar, potential.clone())?.normalization())
}

/// Cell-problem constant `K = 1 / (Z⁺ Z⁻)` with period averages
/// `Z^± = (1/L) ∫₀ᴸ exp(±p(y)/σ) dy`.
pub fn homogenization_factor(p: &PeriodicPerturbation, sigma: f64) -> Result<f64> {
    positive("sigma", sigma)?;
    let l = p.period();
    let n = 4097;
    let zp = numerics::integrate(|y| (p.value(y) / sigma).exp(), 0.0, l, n)? / l;
    let zm = numerics::integrate(|y| (-p.value(y) / sigma).exp(), 0.0, l, n)? / l;
    Ok((1.0 / (zp * zm)).min(1.0))
}

/// `C_θ(u) = ∫ exp(iux) μ(θ, x) dx`.
pub fn char_fn(density: &GibbsDensity, u: f64) -> Complex64 {
    fourier(density.grid(), u)
}

/// `∂_θ C_θ(u)`, by quadrature of `exp(iux) ∂_θ μ(θ, x)`.
pub fn char_fn_grad(density: &GibbsDensity, u: f64) -> Complex64 {
    fourier(&density.theta_derivative(), u)
}

/// Trapezoid Fourier integral `∫ exp(iux) g(x) dx` of grid samples.
pub fn fourier(g: &Grid1D, u: f64) -> Complex64 {
    if u == 0.0 {
        return Complex64::new(g.integral(), 0.0);
    }
    let n = g.len();
    let (mut re, mut im) = (0.0, 0.0);
    for (i, (x, v)) in g.nodes().zip(g.values()).enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let (s, c) = (u * x).sin_cos();
        re += w * v * c;
        im += w * v * s;
    }
    Complex64::new(re, im) * g.dx()
}

/// Multiscale Langevin parameter set `(α, σ, V, p)`.
#[derive(Debug, Clone)]
pub struct MultiscaleModel {
    pub alpha: f64,
    pub sigma: f64,
    pub potential: Potential,
    pub perturbation: PeriodicPerturbation,
}

/// Nodes per period required to resolve `p(x/ε)`.
pub const NODES_PER_PERIOD: f64 = 64.0;

impl MultiscaleModel {
    pub fn new(alpha: f64, sigma: f64, potential: Potential, perturbation: PeriodicPerturbation) -> Result<Self> {
        positive("alpha", alpha)?;
        positive("sigma", sigma)?;
        Ok(Self { alpha, sigma, potential, perturbation })
    }

    /// `K` of the perturbation at this `σ`.
    pub fn homogenization_factor(&self) -> Result<f64> {
        homogenization_factor(&self.perturbation, self.sigma)
    }

    /// Homogenized drift parameter `θ₀ = α K`.
    pub fn theta0(&self) -> Result<f64> {
        Ok(self.alpha * self.homogenization_factor()?)
    }

    /// Homogenized diffusion `σ̄ = σ K`.
    pub fn sigma_bar(&self) -> Result<f64> {
        Ok(self.sigma * self.homogenization_factor()?)
    }

    /// Limit density `μ(θ₀, ·)`, which equals the `α/σ` Gibbs density.
    pub fn limit_density(&self) -> Result<GibbsDensity> {
        GibbsDensity::new(self.alpha, self.sigma, self.potential.clone())
    }

    fn window(&self) -> Result<(f64, f64)> {
        let ratio = self.alpha / self.sigma;
        // exp(-p/σ) can lift the tails by at most exp(osc(p)/σ).
        let l = self.perturbation.period();
        let (mn, mx) = (0..1024)
            .map(|i| self.perturbation.value(l * i as f64 / 1024.0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let osc = (mx - mn) / self.sigma;
        truncation_window_at(|x| ratio * self.potential.value(x), -TAIL_CUTOFF.ln() + osc)
    }

    /// Smallest node count satisfying `dx <= ε L / 64` on the default window.
    pub fn required_nodes(&self, eps: f64) -> Result<usize> {
        positive("eps", eps)?;
        let (lo, hi) = self.window()?;
        let max_dx = eps * self.perturbation.period() / NODES_PER_PERIOD;
        Ok((((hi - lo) / max_dx).ceil() as usize + 1).max(DEFAULT_GRID_NODES))
    }

    /// Normalized `μ_ε ∝ exp(-(α/σ) V(x) - p(x/ε)/σ)` on the default window.
    pub fn density(&self, eps: f64) -> Result<Grid1D> {
        let n = self.required_nodes(eps)?;
        self.density_with_nodes(eps, n)
    }

    pub fn density_with_nodes(&self, eps: f64, n: usize) -> Result<Grid1D> {
        positive("eps", eps)?;
        let (lo, hi) = self.window()?;
        self.density_on(eps, lo, hi, n)
    }

    pub fn density_on(&self, eps: f64, lo: f64, hi: f64, n: usize) -> Result<Grid1D> {
        positive("eps", eps)?;
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 nodes, got {n}")));
        }
        let dx = (hi - lo) / (n - 1) as f64;
        let max_dx = eps * self.perturbation.period() / NODES_PER_PERIOD;
        if dx > max_dx * (1.0 + 1e-12) {
            return Err(Error::GridTooCoarse { dx, max_dx });
        }
        let ratio = self.alpha / self.sigma;
        let mut g = Grid1D::from_fn(lo, hi, n, |x| {
            (-ratio * self.potential.value(x) - self.perturbation.value(x / eps) / self.sigma).exp()
        })?;
        let z = g.integral();
        for v in g.values_mut() {
            *v /= z;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn k_paper() -> f64 {
        homogenization_factor(&PeriodicPerturbation::unit_sine(), 1.0).unwrap()
    }

    #[test]
    fn normalization_gaussian_cases() {
        assert_abs_diff_eq!(
            normalization(0.7, 0.7, &Potential::Quadratic).unwrap(),
            (2.0 * PI).sqrt(),
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            normalization(1.248, 0.624, &Potential::Quadratic).unwrap(),
            PI.sqrt(),
            epsilon = 1e-5
        );
    }

    #[test]
    fn normalization_quartic_matches_fine_oracle() {
        let oracle = numerics::integrate(|x| (-Potential::Quartic.value(x)).exp(), -12.0, 12.0, 1 << 20)
            .unwrap();
        let z = normalization(1.0, 1.0, &Potential::Quartic).unwrap();
        assert_abs_diff_eq!(z, oracle, epsilon = 1e-8);
    }

    #[test]
    fn narrow_window_is_rejected() {
        let err = GibbsDensity::on_window(1.0, 1.0, Potential::Quadratic, -2.0, 2.0, 1001).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
    }

    #[test]
    fn homogenization_constants() {
        assert_abs_diff_eq!(homogenization_factor(&PeriodicPerturbation::Constant { value: 3.0 }, 0.7).unwrap(), 1.0, epsilon = 1e-12);
        let k = k_paper();
        let i0 = numerics::bessel_i0(1.0).unwrap();
        assert_abs_diff_eq!(k, 1.0 / (i0 * i0), epsilon = 1e-12);
        assert_abs_diff_eq!(k, 0.62386, epsilon = 1e-5);
        assert_abs_diff_eq!(2.0 * k, 1.248, epsilon = 1e-3);

        let k1 = homogenization_factor(&PeriodicPerturbation::Sine { amplitude: 1.0, period: 2.0 * PI }, 1.5)
            .unwrap();
        assert_abs_diff_eq!(k1, 0.8055, epsilon = 1e-4);
        assert_abs_diff_eq!(1.5 * k1, 1.208, epsilon = 1e-3);
    }

    #[test]
    fn homogenization_shift_invariant() {
        let p = PeriodicPerturbation::custom(|y| (2.0 * PI * y).sin() + 0.3 * (4.0 * PI * y).cos(), |_| 0.0, 1.0);
        let q = PeriodicPerturbation::custom(
            |y| (2.0 * PI * y).sin() + 0.3 * (4.0 * PI * y).cos() + 5.0,
            |_| 0.0,
            1.0,
        );
        let a = homogenization_factor(&p, 0.8).unwrap();
        let b = homogenization_factor(&q, 0.8).unwrap();
        assert!(a > 0.0 && a < 1.0);
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_density_is_gaussian() {
        let d = GibbsDensity::new(1.248, 0.624, Potential::Quadratic).unwrap();
        assert_abs_diff_eq!(d.grid().integral(), 1.0, epsilon = 1e-8);
        let var = 0.5;
        for (x, m) in d.grid().nodes().zip(d.grid().values()) {
            let exact = (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
            assert_abs_diff_eq!(*m, exact, epsilon = 1e-8);
        }
        let interior = &d.grid().values()[1..d.grid().len() - 1];
        assert!(interior.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn char_fn_values() {
        let d = GibbsDensity::new(1.248, 0.624, Potential::Quadratic).unwrap();
        assert_eq!(char_fn(&d, 0.0).re, d.grid().integral());
        assert_eq!(char_fn(&d, 0.0).im, 0.0);
        assert_abs_diff_eq!(char_fn(&d, 1.0).re, (-0.25f64).exp(), epsilon = 1e-10);

        let q = GibbsDensity::new(1.0, 1.0, Potential::Quartic).unwrap();
        let oracle = {
            let z = numerics::integrate(|x| (-Potential::Quartic.value(x)).exp(), -10.0, 10.0, 1 << 18).unwrap();
            numerics::integrate(|x| (2.0 * x).cos() * (-Potential::Quartic.value(x)).exp(), -10.0, 10.0, 1 << 18)
                .unwrap()
                / z
        };
        let c = char_fn(&q, 2.0);
        assert_abs_diff_eq!(c.re, oracle, epsilon = 1e-7);
        assert_abs_diff_eq!(c.im, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn char_fn_grad_values() {
        let (theta, sb, u) = (1.248, 0.624, 1.0);
        let d = GibbsDensity::new(theta, sb, Potential::Quadratic).unwrap();
        assert_abs_diff_eq!(char_fn_grad(&d, 0.0).norm(), 0.0, epsilon = 1e-10);
        let c = (-sb * u * u / (2.0 * theta)).exp();
        let exact = sb * u * u / (2.0 * theta * theta) * c;
        assert_abs_diff_eq!(exact, 0.15601, epsilon = 1e-5);
        assert_abs_diff_eq!(char_fn_grad(&d, u).re, exact, epsilon = 1e-9);
    }

    #[test]
    fn char_fn_grad_matches_finite_difference() {
        let delta = 1e-5;
        for (potential, theta, sb, u) in [
            (Potential::Quadratic, 1.248, 0.624, 1.3),
            (Potential::Quartic, 1.0, 1.0, 2.0),
            (Potential::Quartic, 2.5, 0.624, 0.7),
            (Potential::Landau { a: 1.0, b: 1.0 }, 1.0, 0.127, 1.0),
        ] {
            let g = char_fn_grad(&GibbsDensity::new(theta, sb, potential.clone()).unwrap(), u);
            let plus = char_fn(&GibbsDensity::new(theta + delta, sb, potential.clone()).unwrap(), u);
            let minus = char_fn(&GibbsDensity::new(theta - delta, sb, potential.clone()).unwrap(), u);
            let fd = (plus - minus) / (2.0 * delta);
            assert!((g - fd).norm() < 1e-6, "{potential:?}: {g} vs {fd}");
        }
    }

    #[test]
    fn multiscale_density_reduces_without_perturbation() {
        let m = MultiscaleModel::new(2.0, 1.0, Potential::Quadratic, PeriodicPerturbation::zero()).unwrap();
        let g = m.density(0.1).unwrap();
        let var = 0.5;
        for (x, v) in g.nodes().zip(g.values()) {
            let exact = (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
            assert_abs_diff_eq!(*v, exact, epsilon = 1e-10);
        }
    }

    #[test]
    fn multiscale_density_matches_oversampled_oracle() {
        let eps = 0.25;
        let m = MultiscaleModel::new(2.0, 1.0, Potential::Quadratic, PeriodicPerturbation::unit_sine()).unwrap();
        let g = m.density(eps).unwrap();
        assert_abs_diff_eq!(g.integral(), 1.0, epsilon = 1e-8);
        let unnorm = |x: f64| (-x * x - (2.0 * PI * x / eps).sin()).exp();
        let n_fine = 16 * (g.len() - 1) + 1;
        let z = numerics::integrate(unnorm, g.lo(), g.hi(), n_fine).unwrap();
        for (x, v) in g.nodes().zip(g.values()).step_by(37) {
            assert_abs_diff_eq!(*v, unnorm(x) / z, epsilon = 1e-6);
        }
    }

    #[test]
    fn multiscale_density_rejects_coarse_grid() {
        let m = MultiscaleModel::new(2.0, 1.0, Potential::Quadratic, PeriodicPerturbation::unit_sine()).unwrap();
        assert!(matches!(m.density_with_nodes(0.05, 512), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn dissipativity_diagnostic() {
        let (a, b) = Potential::Quartic.dissipativity(10.0).unwrap();
        assert!(a > 0.0 && b > 0.0);
        for i in 0..200 {
            let x = -10.0 + 0.1 * i as f64;
            assert!(-Potential::Quartic.derivative(x) * x <= a - b * x * x + 1e-9);
        }
        assert!(Potential::custom(|x| -x * x, |x| -2.0 * x).dissipativity(10.0).is_none());
    }

    #[test]
    fn perturbation_periodicity() {
        assert!(PeriodicPerturbation::unit_sine().periodicity_defect() < 1e-12);
        let p2 = PeriodicPerturbation::Sine { amplitude: 0.5, period: 2.0 * PI };
        assert!(p2.periodicity_defect() < 1e-12);
        assert_abs_diff_eq!(p2.derivative(0.0), 0.5, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn char_fn_is_hermitian(u in -6.0..6.0f64, theta in 0.3..4.0f64) {
            let d = GibbsDensity::with_nodes(theta, 0.624, Potential::Quartic, 1024).unwrap();
            let a = char_fn(&d, u);
            let b = char_fn(&d, -u);
            prop_assert!((a - b.conj()).norm() <= 1e-12);
            prop_assert!(a.norm() <= 1.0 + 1e-12);
        }
    }
}
