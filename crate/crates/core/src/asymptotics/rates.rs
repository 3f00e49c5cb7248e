use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gibbs::{char_fn, fourier, MultiscaleModel, PeriodicPerturbation};
use crate::numerics::{self, bessel_in};

/// The ε-ladder of the rate checks.
pub const STANDARD_LADDER: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

/// Highest Fourier–Bessel order kept in the series routes.
const SERIES_ORDER: i32 = 20;

/// Smooth, rapidly decaying weight `f` of the oscillatory integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// Centred normal density with standard deviation `sd`.
    Gaussian { sd: f64 },
}

impl TestFunction {
    pub fn standard_normal() -> Self {
        TestFunction::Gaussian { sd: 1.0 }
    }

    pub fn value(&self, x: f64) -> f64 {
        let TestFunction::Gaussian { sd } = *self;
        let t = x / sd;
        (-0.5 * t * t).exp() / (sd * (2.0 * PI).sqrt())
    }

    /// `f⁽ʲ⁾(x) = (-1)ʲ sd⁻ʲ Heⱼ(x/sd) f(x)` with probabilists' Hermite
    /// polynomials.
    pub fn derivative(&self, order: u32, x: f64) -> f64 {
        let TestFunction::Gaussian { sd } = *self;
        let t = x / sd;
        let (mut prev, mut he) = (0.0, 1.0);
        for k in 0..order {
            let next = t * he - k as f64 * prev;
            prev = he;
            he = next;
        }
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        sign * he * self.value(x) / sd.powi(order as i32)
    }

    /// `ln |f̂(w)|` for `f̂(w) = ∫ exp(iwx) f(x) dx`.
    fn ln_fourier(&self, w: f64) -> f64 {
        let TestFunction::Gaussian { sd } = *self;
        -0.5 * sd * sd * w * w
    }

    fn window(&self) -> (f64, f64) {
        let TestFunction::Gaussian { sd } = *self;
        (-12.0 * sd, 12.0 * sd)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")))
    }
}

/// Sum of `sign · exp(ln_mag) · phase` terms, returned as `ln |Σ|`.
fn ln_abs_sum(terms: &[(f64, Complex64)]) -> f64 {
    let m = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: Complex64 = terms.iter().map(|&(l, w)| w * (l - m).exp()).sum();
    s.norm().ln() + m
}

/// `ln |expm1(t)|` without overflow.
fn ln_abs_expm1(t: f64) -> f64 {
    if t > 30.0 {
        t + (-(-t).exp()).ln_1p()
    } else {
        t.exp_m1().abs().ln()
    }
}

fn i_pow(n: i32) -> Complex64 {
    match n.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// `|∫ exp(iux) μ_ε(x) dx - C_θ₀(u)|` by quadrature on the ε-resolved
/// density grid.
pub fn cf_gap(eps: f64, u: f64, model: &MultiscaleModel) -> Result<f64> {
    check_eps(eps)?;
    if matches!(model.perturbation, PeriodicPerturbation::Constant { .. }) {
        return Ok(0.0);
    }
    let mu_eps = model.density(eps)?;
    let limit = model.limit_density()?;
    Ok((fourier(&mu_eps, u) - char_fn(&limit, u)).norm())
}

/// `ln` of the characteristic-function gap from its Fourier–Bessel series,
/// for a Gaussian limit law and `p = a sin(2πy/L)`.
///
/// With `v = σ/(αc)`, `z = a/σ`, `ω = 2π/(εL)`, `G(w) = exp(-v w²/2)` and
/// `r_n = iⁿ I_n(z)/I₀(z)`,
/// `C_ε(u) - G(u) = Σ_{n≠0} r_n G(u) G(nω) (exp(-v u n ω) - 1) / (1 + Σ_{n≠0} r_n G(nω))`.
/// Terms are combined in the log domain, so gaps far below `f64` range are
/// still resolved. Returns `-∞` when the gap is exactly zero.
pub fn cf_gap_ln_series(eps: f64, u: f64, model: &MultiscaleModel) -> Result<f64> {
    check_eps(eps)?;
    let c = model.potential.gaussian_curvature().ok_or_else(|| {
        Error::InvalidParameter("series route needs a quadratic potential".into())
    })?;
    let (a, period) = match model.perturbation {
        PeriodicPerturbation::Constant { .. } => return Ok(f64::NEG_INFINITY),
        PeriodicPerturbation::Sine { amplitude, period } => (amplitude, period),
        PeriodicPerturbation::Custom { .. } => {
            return Err(Error::InvalidParameter("series route needs a sine perturbation".into()))
        }
    };
    if u == 0.0 || a == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let v = model.sigma / (model.alpha * c);
    let z = a / model.sigma;
    let omega = 2.0 * PI / (eps * period);
    let ln_i0 = bessel_in(0, z)?.ln();

    let mut terms = Vec::with_capacity(2 * SERIES_ORDER as usize);
    let mut denom = Complex64::new(1.0, 0.0);
    for n in (-SERIES_ORDER..=SERIES_ORDER).filter(|&n| n != 0) {
        let i_n = bessel_in(n.unsigned_abs(), z)?;
        if i_n == 0.0 {
            continue;
        }
        let nw = n as f64 * omega;
        let phase = i_pow(n) * i_n.signum();
        let ln_r = i_n.abs().ln() - ln_i0;
        let t = -v * u * nw;
        let ln_mag = ln_r - 0.5 * v * u * u - 0.5 * v * nw * nw + ln_abs_expm1(t);
        terms.push((ln_mag, phase * t.signum()));
        denom += phase * (ln_r - 0.5 * v * nw * nw).exp();
    }
    Ok(ln_abs_sum(&terms) - denom.norm().ln())
}

/// Period average `(1/L) ∫₀ᴸ exp(p)`.
fn torus_mean_exp(p: &PeriodicPerturbation) -> Result<f64> {
    let l = p.period();
    Ok(numerics::integrate(|y| p.value(y).exp(), 0.0, l, 4097)? / l)
}

/// `|∫ f(x) [exp(p(x/ε)) - (1/L)∫₀ᴸ exp(p)] dx|` by quadrature.
pub fn oscillatory_gap(f: &TestFunction, p: &PeriodicPerturbation, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if let PeriodicPerturbation::Constant { .. } = p {
        return Ok(0.0);
    }
    let mean = torus_mean_exp(p)?;
    let (lo, hi) = f.window();
    let max_dx = eps * p.period() / 64.0;
    let n = (((hi - lo) / max_dx).ceil() as usize + 1).max(4097);
    Ok(numerics::integrate(|x| f.value(x) * ((p.value(x / eps)).exp() - mean), lo, hi, n)?.abs())
}

/// `ln` of the oscillatory gap from the series
/// `Σ_{n≠0} I_n(a) (-i)ⁿ f̂(2πn/(εL))` for `p = a sin(2πy/L)`.
pub fn oscillatory_gap_ln_series(f: &TestFunction, p: &PeriodicPerturbation, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let (a, period) = match *p {
        PeriodicPerturbation::Constant { .. } => return Ok(f64::NEG_INFINITY),
        PeriodicPerturbation::Sine { amplitude, period } => (amplitude, period),
        PeriodicPerturbation::Custom { .. } => {
            return Err(Error::InvalidParameter("series route needs a sine perturbation".into()))
        }
    };
    let omega = 2.0 * PI / (eps * period);
    // Pairing n with -n gives I_n(a) ((-i)ⁿ + iⁿ), which vanishes for odd n.
    let mut terms = Vec::new();
    for n in (2..=SERIES_ORDER).step_by(2) {
        let i_n = bessel_in(n as u32, a)?;
        if i_n == 0.0 {
            continue;
        }
        let sign = if n % 4 == 0 { 1.0 } else { -1.0 } * i_n.signum();
        terms.push(((2.0 * i_n.abs()).ln() + f.ln_fourier(n as f64 * omega), Complex64::new(sign, 0.0)));
    }
    Ok(ln_abs_sum(&terms))
}

/// `‖f‖_{W^{k,1}} = Σ_{j≤k} ∫ |f⁽ʲ⁾|` by quadrature.
pub fn sobolev_norm(f: &TestFunction, k: u32) -> Result<f64> {
    let (lo, hi) = f.window();
    (0..=k).map(|j| numerics::integrate(|x| f.derivative(j, x).abs(), lo, hi, 40001)).sum()
}

/// Right-hand side `(εL/(2π))ᵏ exp(Σ|p̂|) ‖f‖_{W^{k,1}}` of the
/// oscillatory-integral bound.
pub fn oscillatory_bound(f: &TestFunction, p: &PeriodicPerturbation, eps: f64, k: u32) -> Result<f64> {
    check_eps(eps)?;
    let coeffs = p.fourier_abs_sum().ok_or_else(|| {
        Error::InvalidParameter("bound needs the Fourier coefficients of p".into())
    })?;
    Ok((eps * p.period() / (2.0 * PI)).powi(k as i32) * coeffs.exp() * sobolev_norm(f, k)?)
}

/// Least-squares slope of `ln gap` against `ln(1/ε)`, so that a gap
/// shrinking like `εʳ` as `ε → 0` has slope `-r`. Decay of order `r` means
/// a slope of at most `-r + 0.2`.
pub fn fit_order(eps: &[f64], ln_gap: &[f64]) -> f64 {
    let x: Vec<f64> = eps.iter().map(|e| -e.ln()).collect();
    numerics::ls_slope(&x, ln_gap)
}

/// Which gap a ladder measures.
#[derive(Debug, Clone)]
pub enum GapKind {
    CharacteristicFunction { model: MultiscaleModel, u: f64 },
    Oscillatory { f: TestFunction, p: PeriodicPerturbation },
}

impl GapKind {
    pub fn name(&self) -> &'static str {
        match self {
            GapKind::CharacteristicFunction { .. } => "cf_gap",
            GapKind::Oscillatory { .. } => "oscillatory_gap",
        }
    }

    pub fn ln_series(&self, eps: f64) -> Result<f64> {
        match self {
            GapKind::CharacteristicFunction { model, u } => cf_gap_ln_series(eps, *u, model),
            GapKind::Oscillatory { f, p } => oscillatory_gap_ln_series(f, p, eps),
        }
    }

    pub fn quadrature(&self, eps: f64) -> Result<f64> {
        match self {
            GapKind::CharacteristicFunction { model, u } => cf_gap(eps, *u, model),
            GapKind::Oscillatory { f, p } => oscillatory_gap(f, p, eps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub eps: f64,
    /// `exp(ln_gap)`; zero when that underflows.
    pub gap: f64,
    pub ln_gap: f64,
    /// The same gap by direct quadrature, which bottoms out near `1e-16`.
    pub quadrature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub fitted_slope: f64,
}

impl RateReport {
    /// CSV with header `eps,gap,fitted_slope,ln_gap,quadrature_gap`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "eps,gap,fitted_slope,ln_gap,quadrature_gap")?;
        for r in &self.rows {
            writeln!(w, "{},{:e},{},{},{:e}", r.eps, r.gap, self.fitted_slope, r.ln_gap, r.quadrature)?;
        }
        Ok(())
    }
}

/// Gap at each `ε` (series value, with the quadrature value alongside) and
/// the fitted log-log slope of the series values.
pub fn rate_ladder(kind: &GapKind, ladder: &[f64]) -> Result<RateReport> {
    let rows = ladder
        .iter()
        .map(|&eps| {
            let ln_gap = kind.ln_series(eps)?;
            Ok(RateRow { eps, gap: ln_gap.exp(), ln_gap, quadrature: kind.quadrature(eps)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let ln: Vec<f64> = rows.iter().map(|r| r.ln_gap).collect();
    Ok(RateReport { fitted_slope: fit_order(ladder, &ln), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::Potential;
    use approx::assert_abs_diff_eq;

    fn model() -> MultiscaleModel {
        MultiscaleModel::new(2.0, 1.0, Potential::Quadratic, PeriodicPerturbation::unit_sine()).unwrap()
    }

    #[test]
    fn hermite_derivatives() {
        let f = TestFunction::standard_normal();
        let x = 0.7;
        let h = 1e-4;
        let fd = (f.derivative(2, x + h) - f.derivative(2, x - h)) / (2.0 * h);
        assert_abs_diff_eq!(f.derivative(3, x), fd, epsilon = 1e-7);
        assert_abs_diff_eq!(f.derivative(1, x), -x * f.value(x), epsilon = 1e-15);
    }

    #[test]
    fn sobolev_norm_of_standard_normal() {
        let f = TestFunction::standard_normal();
        let phi0 = 1.0 / (2.0 * PI).sqrt();
        assert_abs_diff_eq!(sobolev_norm(&f, 1).unwrap(), 1.0 + 2.0 * phi0, epsilon = 1e-6);
        assert_abs_diff_eq!(1.0 + 2.0 * phi0, 1.7979, epsilon = 1e-4);
    }

    #[test]
    fn trivial_gaps() {
        let m = model();
        assert!(cf_gap(0.3, 0.0, &m).unwrap() < 1e-10);
        let flat = MultiscaleModel::new(2.0, 1.0, Potential::Quadratic, PeriodicPerturbation::zero()).unwrap();
        for (eps, u) in [(0.4, 1.0), (0.1, 3.0)] {
            assert!(cf_gap(eps, u, &flat).unwrap() < 1e-10);
            assert_eq!(cf_gap_ln_series(eps, u, &flat).unwrap(), f64::NEG_INFINITY);
        }
        let f = TestFunction::standard_normal();
        assert!(oscillatory_gap(&f, &PeriodicPerturbation::zero(), 0.2).unwrap() < 1e-12);
        assert_eq!(cf_gap_ln_series(0.2, 0.0, &m).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn cf_series_matches_quadrature_where_resolvable() {
        let m = model();
        for eps in [1.0, 1.5, 2.0, 4.0] {
            let q = cf_gap(eps, 1.0, &m).unwrap();
            let s = cf_gap_ln_series(eps, 1.0, &m).unwrap().exp();
            assert!((q - s).abs() < 1e-6 * s, "ε = {eps}: {q} vs {s}");
        }
    }

    #[test]
    fn oscillatory_series_matches_quadrature_where_resolvable() {
        let f = TestFunction::standard_normal();
        let p = PeriodicPerturbation::unit_sine();
        for eps in [2.0, 3.0, 4.0] {
            let q = oscillatory_gap(&f, &p, eps).unwrap();
            let s = oscillatory_gap_ln_series(&f, &p, eps).unwrap().exp();
            assert!((q - s).abs() < 1e-5 * s + 1e-14, "ε = {eps}: {q} vs {s}");
        }
        // Leading term: the n = ±1 contributions cancel, leaving 2 I₂(1) f̂(2ω).
        let eps = 0.4;
        let lead = (2.0 * bessel_in(2, 1.0).unwrap()).ln() - 8.0 * PI * PI / (eps * eps);
        assert_abs_diff_eq!(oscillatory_gap_ln_series(&f, &p, eps).unwrap(), lead, epsilon = 1e-9);
    }

    #[test]
    fn ladders_decay_fast_and_respect_the_bound() {
        let cf = rate_ladder(&GapKind::CharacteristicFunction { model: model(), u: 1.0 }, &STANDARD_LADDER).unwrap();
        assert!(cf.fitted_slope <= -1.8, "{}", cf.fitted_slope);
        let f = TestFunction::standard_normal();
        let p = PeriodicPerturbation::unit_sine();
        let osc = rate_ladder(&GapKind::Oscillatory { f, p: p.clone() }, &STANDARD_LADDER).unwrap();
        assert!(osc.fitted_slope <= -2.0, "{}", osc.fitted_slope);
        for r in &osc.rows {
            let rhs = oscillatory_bound(&f, &p, r.eps, 1).unwrap();
            assert!(r.gap <= rhs && r.quadrature <= rhs);
        }
    }

    #[test]
    fn fit_order_sign() {
        let eps = STANDARD_LADDER;
        let ln: Vec<f64> = eps.iter().map(|e| 2.0 * e.ln() + 0.3).collect();
        assert_abs_diff_eq!(fit_order(&eps, &ln), -2.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_layout() {
        let report = RateReport {
            rows: vec![RateRow { eps: 0.4, gap: 1e-20, ln_gap: -46.0, quadrature: 1e-17 }],
            fitted_slope: -3.5,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "eps,gap,fitted_slope,ln_gap,quadrature_gap\n0.4,1e-20,-3.5,-46,1e-17\n"
        );
    }
}
