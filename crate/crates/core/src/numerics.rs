//! Quadrature, uniform grids, FFT convolution, interpolation and the
//! modified Bessel functions used throughout the crate.
//!
//! Every routine here is a pure function of its arguments.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Default node count for density and convolution grids.
pub const DEFAULT_GRID_NODES: usize = 4096;

/// Real samples on a uniform grid `lo + i * dx`, `dx = (hi - lo) / (n - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        check_window(lo, hi, values.len())?;
        Ok(Self { lo, hi, values })
    }

    /// Samples `f` at the `n` nodes of `[lo, hi]`.
    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        check_window(lo, hi, n)?;
        let dx = (hi - lo) / (n - 1) as f64;
        let values = (0..n).map(|i| f(lo + i as f64 * dx)).collect();
        Ok(Self { lo, hi, values })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let dx = self.dx();
        (0..self.values.len()).map(move |i| self.lo + i as f64 * dx)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same nodes, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.lo, self.hi, values)
    }

    /// Trapezoid integral of the stored samples.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.dx())
    }

    pub fn same_nodes(&self, other: &Grid1D) -> bool {
        self.values.len() == other.values.len()
            && (self.lo - other.lo).abs() <= 1e-12 * (1.0 + self.lo.abs())
            && (self.hi - other.hi).abs() <= 1e-12 * (1.0 + self.hi.abs())
    }
}

fn check_window(lo: f64, hi: f64, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidGrid(format!("need at least 2 nodes, got {n}")));
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::InvalidGrid(format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    Ok(())
}

/// Composite trapezoid sum of uniformly spaced samples.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => dx * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Running trapezoid integral; `out[0] = 0`.
pub fn cumulative_trapezoid(values: &[f64], dx: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * dx * (w[0] + w[1]);
        out.push(acc);
    }
    out.truncate(values.len());
    out
}

/// Composite trapezoid rule for `f` on `[lo, hi]` with `n` nodes.
pub fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<f64> {
    check_window(lo, hi, n)?;
    let dx = (hi - lo) / (n - 1) as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let x = lo + i as f64 * dx;
        let value = f(x);
        if !value.is_finite() {
            return Err(Error::NonFinite { index: i, x, value });
        }
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += w * value;
    }
    Ok(acc * dx)
}

/// Complex-valued trapezoid rule, used for characteristic functions.
pub fn integrate_complex(
    f: impl Fn(f64) -> Complex64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Complex64> {
    check_window(lo, hi, n)?;
    let dx = (hi - lo) / (n - 1) as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let x = lo + i as f64 * dx;
        let value = f(x);
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(Error::NonFinite { index: i, x, value: value.norm() });
        }
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += value * w;
    }
    Ok(acc * dx)
}

/// Linear convolution `(f * g)(x_i) ≈ Σ_j f(x_j) g(x_i - x_j) dx` on the
/// shared grid of `f` and `g`.
///
/// Both inputs are zero padded to the next power of two `>= 2n - 1`, so no
/// circular wrap-around occurs. The full product lives on the nodes
/// `2 lo + k dx`; when `-lo / dx` is not an integer the aligned window sits
/// between those nodes and is recovered with a spectral (phase-ramp) shift.
pub fn fft_convolve(f: &Grid1D, g: &Grid1D) -> Result<Grid1D> {
    if !f.same_nodes(g) {
        return Err(Error::GridMismatch(format!(
            "[{}, {}] x {} vs [{}, {}] x {}",
            f.lo,
            f.hi,
            f.len(),
            g.lo,
            g.hi,
            g.len()
        )));
    }
    let n = f.len();
    if n < 8 {
        return Err(Error::InvalidGrid(format!("convolution needs at least 8 nodes, got {n}")));
    }
    let dx = f.dx();
    let size = (2 * n - 1).next_power_of_two();

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);

    let pad = |v: &[f64]| {
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for (b, &x) in buf.iter_mut().zip(v) {
            b.re = x;
        }
        buf
    };
    let mut a = pad(&f.values);
    let mut b = pad(&g.values);
    forward.process(&mut a);
    forward.process(&mut b);

    let shift = -f.lo / dx;
    let mut base = shift.floor();
    let mut frac = shift - base;
    if frac < 1e-9 {
        frac = 0.0;
    } else if frac > 1.0 - 1e-9 {
        frac = 0.0;
        base += 1.0;
    }
    let scale = dx / size as f64;
    for (m, (x, y)) in a.iter_mut().zip(&b).enumerate() {
        *x *= *y * scale;
        if frac != 0.0 {
            let freq = if m < size / 2 { m as f64 } else { m as f64 - size as f64 };
            *x *= Complex64::from_polar(1.0, 2.0 * PI * frac * freq / size as f64);
        }
    }
    inverse.process(&mut a);

    let base = base as i64;
    let values = (0..n as i64)
        .map(|i| a[(i + base).rem_euclid(size as i64) as usize].re)
        .collect();
    Grid1D::new(f.lo, f.hi, values)
}

/// Piecewise-linear interpolation of `g` at `xs`; zero outside `[lo, hi]`.
pub fn linear_interp(g: &Grid1D, xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| interp_at(g, x)).collect()
}

#[inline]
pub fn interp_at(g: &Grid1D, x: f64) -> f64 {
    if !(x >= g.lo && x <= g.hi) {
        return 0.0;
    }
    let n = g.values.len();
    let t = (x - g.lo) / g.dx();
    let i = (t.floor() as usize).min(n - 2);
    let w = t - i as f64;
    (1.0 - w) * g.values[i] + w * g.values[i + 1]
}

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> Result<f64> {
    bessel_in(0, x)
}

/// Modified Bessel function `I_n(x)` for integer order, by its power series
/// `Σ (x/2)^(2k+n) / (k! (k+n)!)`.
pub fn bessel_in(order: u32, x: f64) -> Result<f64> {
    if !(x.abs() <= 50.0) {
        return Err(Error::InvalidParameter(format!(
            "Bessel series is only used for |x| <= 50, got {x}"
        )));
    }
    let half = 0.5 * x;
    let mut term = 1.0;
    for j in 1..=order {
        term *= half / j as f64;
    }
    let mut sum = term;
    let q = half * half;
    for k in 1..500u32 {
        term *= q / (k as f64 * (k + order) as f64);
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
    }
    Ok(sum)
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
