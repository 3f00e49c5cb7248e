//! Limit variance of `√T (θ̂ - θ₀)` for the scalar quadratic model, and
//! numerical checks of the weak convergence rates.
//!
//! For `V(x) = x²/2` the limit law is `N(0, τ²/J²)` where `J = ‖∂_θ C_θ₀‖²`
//! in `L²(φ)` and `τ² = 2σ̄ ∫ Φ'² μ` with `Φ` solving the Poisson equation
//! `θ₀ V' Φ' - σ̄ Φ'' = h` for the centred function `h`.

mod rates;

pub use rates::{
    cf_gap, cf_gap_ln_series, fit_order, oscillatory_bound, oscillatory_gap, oscillatory_gap_ln_series,
    rate_ladder, sobolev_norm, GapKind, RateReport, RateRow, TestFunction, STANDARD_LADDER,
};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::{char_fn, fourier, truncation_window, GibbsDensity, Potential};
use crate::numerics::{self, cumulative_trapezoid, Grid1D};

/// Node count of the default Poisson grid; odd so that zero is a node.
pub const PHI_GRID_NODES: usize = 8193;
/// Inner integrals below this magnitude are treated as zero.
pub const INNER_CUTOFF: f64 = 1e-14;
/// Allowed value of the inner integral at the right boundary.
pub const CENTERING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticStats {
    #[serde(rename = "J")]
    pub j: f64,
    pub tau_sq: f64,
    /// `τ² / J²`, the asymptotic variance of `√T (θ̂ - θ₀)`.
    pub ratio: f64,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
}

fn check_positive(params: &[(&str, f64)]) -> Result<()> {
    for (name, v) in params {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// `σ₁² = β²θ₀ / (θ₀ + σ̄β²)`.
pub fn sigma1_sq(theta0: f64, sigma_bar: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    b2 * theta0 / (theta0 + sigma_bar * b2)
}

/// `σ₂² = β²θ₀ / (θ₀ + 2σ̄β²)`.
pub fn sigma2_sq(theta0: f64, sigma_bar: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    b2 * theta0 / (theta0 + 2.0 * sigma_bar * b2)
}

/// `J = (3 / (4β)) (σ̄/θ₀²)² σ₂⁵`.
pub fn j_scalar(theta0: f64, sigma_bar: f64, beta: f64) -> f64 {
    let s2 = sigma2_sq(theta0, sigma_bar, beta);
    let r = sigma_bar / (theta0 * theta0);
    0.75 / beta * r * r * s2 * s2 * s2.sqrt()
}

/// Frequency grid for `φ = N(0, β²)` integrals; the weight is below
/// `1e-31` beyond `12β`.
fn frequency_grid(beta: f64) -> (f64, f64, usize) {
    (-12.0 * beta, 12.0 * beta, 2401)
}

fn weight(u: f64, beta: f64) -> f64 {
    (-0.5 * u * u / (beta * beta)).exp() / (beta * (2.0 * std::f64::consts::PI).sqrt())
}

/// `∫ |∂_θ C_θ(u)|² φ(u) du` with `∂_θ C` from quadrature of `∂_θ μ`.
pub fn j_quadrature(density: &GibbsDensity, beta: f64) -> Result<f64> {
    check_positive(&[("beta", beta)])?;
    let dmu = density.theta_derivative();
    let (lo, hi, n) = frequency_grid(beta);
    numerics::integrate(|u| fourier(&dmu, u).norm_sqr() * weight(u, beta), lo, hi, n)
}

/// `h(z) = (σ̄ / (2θ₀²β)) [σ₁³ (1 - σ₁² z²) exp(-σ₁² z² / 2) - σ₂³]`.
pub fn h_closed_form(z: f64, theta0: f64, sigma_bar: f64, beta: f64) -> f64 {
    let s1 = sigma1_sq(theta0, sigma_bar, beta);
    let s2 = sigma2_sq(theta0, sigma_bar, beta);
    let pre = sigma_bar / (2.0 * theta0 * theta0 * beta);
    pre * (s1 * s1.sqrt() * (1.0 - s1 * z * z) * (-0.5 * s1 * z * z).exp() - s2 * s2.sqrt())
}

/// `h(z) = Re ∫ (exp(iuz) - C_θ₀(u)) conj(∂_θ C_θ₀(u)) φ(u) du` by
/// quadrature, at each of `zs`.
pub fn h_quadrature(density: &GibbsDensity, beta: f64, zs: &[f64]) -> Result<Vec<f64>> {
    check_positive(&[("beta", beta)])?;
    let dmu = density.theta_derivative();
    let (lo, hi, n) = frequency_grid(beta);
    let du = (hi - lo) / (n - 1) as f64;
    let table: Vec<(f64, Complex64, Complex64)> = (0..n)
        .map(|i| {
            let u = lo + i as f64 * du;
            (u, char_fn(density, u), fourier(&dmu, u))
        })
        .collect();
    Ok(zs
        .iter()
        .map(|&z| {
            let values: Vec<f64> = table
                .iter()
                .map(|&(u, c, dc)| {
                    ((Complex64::from_polar(1.0, u * z) - c) * dc.conj()).re * weight(u, beta)
                })
                .collect();
            numerics::trapezoid(&values, du)
        })
        .collect())
}

/// Poisson solution on a grid, with the inputs it was built from.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub theta0: f64,
    pub sigma_bar: f64,
    pub mu: Grid1D,
    pub h: Grid1D,
    /// `∫_{-∞}^y h μ`, taken from the nearer tail.
    pub inner: Grid1D,
    pub dphi: Grid1D,
    pub phi: Grid1D,
}

impl PoissonSolution {
    /// `2σ̄ ∫ Φ'² μ`.
    pub fn tau_sq(&self) -> f64 {
        let v: Vec<f64> = self.dphi.values().iter().zip(self.mu.values()).map(|(d, m)| d * d * m).collect();
        2.0 * self.sigma_bar * numerics::trapezoid(&v, self.mu.dx())
    }

    /// `(1/σ̄) ∫ Φ h μ`, which equals `τ² / (2σ̄)` by integration by parts.
    pub fn dirichlet_form(&self) -> f64 {
        let v: Vec<f64> = self
            .phi
            .values()
            .iter()
            .zip(self.h.values())
            .zip(self.mu.values())
            .map(|((p, h), m)| p * h * m)
            .collect();
        numerics::trapezoid(&v, self.mu.dx()) / self.sigma_bar
    }

    /// Largest `|θ₀ V' Φ' - σ̄ Φ'' - h|` over the nodes where the inner
    /// integral is resolved, with `Φ''` by central differences.
    pub fn residual_sup(&self, potential: &Potential) -> f64 {
        let n = self.mu.len();
        let dx = self.mu.dx();
        let d = self.dphi.values();
        let resolved = |i: usize| self.inner.values()[i].abs() >= INNER_CUTOFF;
        (1..n - 1)
            .filter(|&i| resolved(i - 1) && resolved(i) && resolved(i + 1))
            .map(|i| {
                let x = self.mu.node(i);
                let d2 = (d[i + 1] - d[i - 1]) / (2.0 * dx);
                (self.theta0 * potential.derivative(x) * d[i] - self.sigma_bar * d2 - self.h.values()[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Default Poisson density: `μ(θ₀)` for `V = x²/2` on a symmetric window
/// with [`PHI_GRID_NODES`] nodes.
pub fn phi_density(theta0: f64, sigma_bar: f64) -> Result<GibbsDensity> {
    check_positive(&[("theta0", theta0), ("sigma_bar", sigma_bar)])?;
    let ratio = theta0 / sigma_bar;
    let (lo, hi) = truncation_window(|x| ratio * Potential::Quadratic.value(x))?;
    let half = lo.abs().max(hi.abs());
    GibbsDensity::on_window(theta0, sigma_bar, Potential::Quadratic, -half, half, PHI_GRID_NODES)
}

/// `Φ` for the closed-form `h` on the default grid.
pub fn phi_solve(theta0: f64, sigma_bar: f64, beta: f64) -> Result<PoissonSolution> {
    check_positive(&[("beta", beta)])?;
    let density = phi_density(theta0, sigma_bar)?;
    phi_solve_on(&density, |z| h_closed_form(z, theta0, sigma_bar, beta))
}

/// Solves `θ₀ V' Φ' - σ̄ Φ'' = h` with `Φ(0) = 0` on the density's grid:
/// `Φ'(y) = -(1/(σ̄ μ(y))) ∫_{-∞}^y h μ` and `Φ = ∫_0^x Φ'`.
///
/// Left of the origin the inner integral is summed from the left tail, to
/// the right as `-∫_y^∞ h μ`; the two agree when `h` is centred, and each
/// avoids cancellation where `μ` is tiny. Inner values below
/// [`INNER_CUTOFF`] give `Φ' = 0`.
pub fn phi_solve_on(density: &GibbsDensity, h: impl Fn(f64) -> f64) -> Result<PoissonSolution> {
    let mu = density.grid().clone();
    let (lo, hi, n) = (mu.lo(), mu.hi(), mu.len());
    let dx = mu.dx();
    let origin = -lo / dx;
    if (origin - origin.round()).abs() > 1e-9 || origin < 0.0 || origin.round() as usize >= n {
        return Err(Error::InvalidGrid(format!("zero is not a node of [{lo}, {hi}] with {n} nodes")));
    }
    let origin = origin.round() as usize;
    let hg = Grid1D::from_fn(lo, hi, n, &h)?;
    let hmu: Vec<f64> = hg.values().iter().zip(mu.values()).map(|(a, b)| a * b).collect();

    let left = cumulative_trapezoid(&hmu, dx);
    let total = *left.last().expect("non-empty grid");
    if total.abs() > CENTERING_TOLERANCE {
        return Err(Error::Centering { residual: total });
    }
    let reversed: Vec<f64> = hmu.iter().rev().cloned().collect();
    let right: Vec<f64> = cumulative_trapezoid(&reversed, dx).into_iter().rev().collect();
    let inner: Vec<f64> = (0..n).map(|i| if i < origin { left[i] } else { -right[i] }).collect();

    let sigma_bar = density.sigma_bar();
    let dphi: Vec<f64> = inner
        .iter()
        .zip(mu.values())
        .map(|(&i, &m)| if i.abs() < INNER_CUTOFF || m <= 0.0 { 0.0 } else { -i / (sigma_bar * m) })
        .collect();

    let mut phi = vec![0.0; n];
    for i in origin + 1..n {
        phi[i] = phi[i - 1] + 0.5 * dx * (dphi[i - 1] + dphi[i]);
    }
    for i in (0..origin).rev() {
        phi[i] = phi[i + 1] - 0.5 * dx * (dphi[i + 1] + dphi[i]);
    }

    Ok(PoissonSolution {
        theta0: density.theta(),
        sigma_bar,
        inner: mu.with_values(inner)?,
        dphi: mu.with_values(dphi)?,
        phi: mu.with_values(phi)?,
        h: hg,
        mu,
    })
}

/// `J`, `τ²` and `τ²/J²` for the quadratic model.
pub fn tau_squared(theta0: f64, sigma_bar: f64, beta: f64) -> Result<AsymptoticStats> {
    let sol = phi_solve(theta0, sigma_bar, beta)?;
    let j = j_scalar(theta0, sigma_bar, beta);
    let tau_sq = sol.tau_sq();
    Ok(AsymptoticStats {
        j,
        tau_sq,
        ratio: tau_sq / (j * j),
        sigma1_sq: sigma1_sq(theta0, sigma_bar, beta),
        sigma2_sq: sigma2_sq(theta0, sigma_bar, beta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn paper_params() -> (f64, f64) {
        let k = 1.0 / numerics::bessel_i0(1.0).unwrap().powi(2);
        (2.0 * k, k)
    }

    #[test]
    fn auxiliary_scales_are_rational() {
        let (t, s) = paper_params();
        assert_abs_diff_eq!(sigma1_sq(t, s, 1.0), 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sigma2_sq(t, s, 1.0), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn j_value_and_oracle() {
        let j = j_scalar(1.24772, 0.62386, 1.0);
        // 0.75 (0.62386 / 1.24772²)² 0.5^2.5, evaluated independently.
        assert_abs_diff_eq!(j, 0.0212908, epsilon = 1e-6);
        let d = GibbsDensity::new(1.24772, 0.62386, Potential::Quadratic).unwrap();
        let q = j_quadrature(&d, 1.0).unwrap();
        assert!((q - j).abs() < 1e-6 * j, "{q} vs {j}");
    }

    #[test]
    fn j_vanishes_like_beta_to_the_fourth() {
        let r = j_scalar(1.0, 0.5, 1e-2) / j_scalar(1.0, 0.5, 1e-3);
        assert!((r / 1e4 - 1.0).abs() < 1e-3, "{r}");
    }

    #[test]
    fn h_centred_and_matches_quadrature() {
        let (t, s) = paper_params();
        let d = GibbsDensity::new(t, s, Potential::Quadratic).unwrap();
        let hm: Vec<f64> =
            d.grid().nodes().zip(d.grid().values()).map(|(x, m)| h_closed_form(x, t, s, 1.0) * m).collect();
        assert!(numerics::trapezoid(&hm, d.grid().dx()).abs() < 1e-8);
        let zs = [-2.0, 0.0, 1.0];
        let q = h_quadrature(&d, 1.0, &zs).unwrap();
        for (z, v) in zs.iter().zip(q) {
            assert_abs_diff_eq!(v, h_closed_form(*z, t, s, 1.0), epsilon = 1e-7);
        }
    }

    #[test]
    fn poisson_solution_properties() {
        let (t, s) = paper_params();
        let sol = phi_solve(t, s, 1.0).unwrap();
        let n = sol.phi.len();
        assert_eq!(n, PHI_GRID_NODES);
        assert_eq!(sol.phi.values()[n / 2], 0.0);
        let hmax = sol.h.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(sol.residual_sup(&Potential::Quadratic) <= 1e-3 * hmax);
        // Even μ and even h: Φ' odd, Φ even.
        for i in 0..n {
            let j = n - 1 - i;
            assert!((sol.dphi.values()[i] + sol.dphi.values()[j]).abs() < 1e-8);
            assert!((sol.phi.values()[i] - sol.phi.values()[j]).abs() < 1e-8);
        }
        let tau = sol.tau_sq();
        assert!((tau / (2.0 * s) - sol.dirichlet_form()).abs() < 1e-4 * tau / (2.0 * s));
    }

    #[test]
    fn variance_ratio() {
        let (t, s) = paper_params();
        let st = tau_squared(t, s, 1.0).unwrap();
        assert!((st.ratio - 2.670).abs() < 0.01 * 2.670, "{}", st.ratio);
        assert_abs_diff_eq!(st.ratio, st.tau_sq / (st.j * st.j), epsilon = 1e-12);
    }

    #[test]
    fn zero_h_gives_zero_variance() {
        let d = phi_density(1.0, 0.5).unwrap();
        let sol = phi_solve_on(&d, |_| 0.0).unwrap();
        assert_eq!(sol.tau_sq(), 0.0);
    }

    #[test]
    fn uncentred_h_is_rejected() {
        let d = phi_density(1.0, 0.5).unwrap();
        assert!(matches!(phi_solve_on(&d, |_| 1.0), Err(Error::Centering { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(5))]
        #[test]
        fn j_closed_form_matches_quadrature(theta0 in 0.5..3.0f64, sigma_bar in 0.2..2.0f64, beta in 0.5..2.0f64) {
            let d = GibbsDensity::new(theta0, sigma_bar, Potential::Quadratic).unwrap();
            let j = j_scalar(theta0, sigma_bar, beta);
            prop_assert!((j_quadrature(&d, beta).unwrap() - j).abs() < 1e-6 * j);
        }

        #[test]
        fn h_is_centred(theta0 in 0.5..3.0f64, sigma_bar in 0.2..2.0f64, beta in 0.5..2.0f64) {
            let d = GibbsDensity::new(theta0, sigma_bar, Potential::Quadratic).unwrap();
            let hm: Vec<f64> = d.grid().nodes().zip(d.grid().values())
                .map(|(x, m)| h_closed_form(x, theta0, sigma_bar, beta) * m).collect();
            prop_assert!(numerics::trapezoid(&hm, d.grid().dx()).abs() < 1e-8);
        }
    }
}
