use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Stopping rules of [`minimize_scalar`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarOptions {
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
}

impl Default for ScalarOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-8, step_tol: 1e-10, max_iter: 500 }
    }
}

/// Outcome of a minimization, before the seed and timing are attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum<P> {
    pub argmin: P,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const FEASIBILITY_MARGIN: f64 = 1e-8;
const ARMIJO: f64 = 1e-4;

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Central difference with step `1e-6 max(1, |θ|)`, one-sided where the
/// left point would leave the feasible set.
fn scalar_gradient(f: &mut impl FnMut(f64) -> f64, theta: f64, f0: f64, floor: f64) -> f64 {
    let h = 1e-6 * theta.abs().max(1.0);
    let right = finite_or_inf(f(theta + h));
    if theta - h >= floor {
        let left = finite_or_inf(f(theta - h));
        if left.is_finite() && right.is_finite() {
            return (right - left) / (2.0 * h);
        }
    }
    (right - f0) / h
}

/// Projected one-dimensional quasi-Newton descent on `θ >= lower`.
///
/// The inverse curvature is updated from successive gradients (the
/// one-dimensional BFGS update) and trial points are projected onto
/// `θ >= lower + 1e-8` before an Armijo backtracking test. Infeasible or
/// non-finite objective values count as `+∞`.
pub fn minimize_scalar(
    mut objective: impl FnMut(f64) -> f64,
    init: f64,
    lower: f64,
    opts: ScalarOptions,
) -> Result<Minimum<f64>> {
    if !(lower >= 0.0) {
        return Err(Error::InvalidParameter(format!("lower bound must be non-negative, got {lower}")));
    }
    let floor = lower + FEASIBILITY_MARGIN;
    let mut theta = init.max(floor);
    let mut f = finite_or_inf(objective(theta));
    if !f.is_finite() {
        return Err(Error::Infeasible(format!("objective is not finite at the initial point {theta}")));
    }
    let mut g = scalar_gradient(&mut objective, theta, f, floor);
    // First trial step moves θ by a tenth of its scale.
    let mut hinv = 0.1 * theta.abs().max(1.0) / g.abs().max(f64::MIN_POSITIVE);
    for iter in 1..=opts.max_iter {
        let projected = if theta <= floor && g > 0.0 { 0.0 } else { g };
        if projected.abs() < opts.grad_tol {
            return Ok(Minimum { argmin: theta, value: f, iterations: iter - 1, converged: true });
        }
        let dir = -hinv * g;
        let mut alpha: f64 = 1.0;
        let accepted = loop {
            let trial = (theta + alpha * dir).max(floor);
            let step = trial - theta;
            if step.abs() <= opts.step_tol * theta.abs().max(1.0) {
                break None;
            }
            let ft = finite_or_inf(objective(trial));
            if ft <= f + ARMIJO * g * step {
                break Some((trial, ft));
            }
            alpha *= 0.5;
        };
        let Some((next, f_next)) = accepted else {
            return Ok(Minimum { argmin: theta, value: f, iterations: iter, converged: true });
        };
        let g_next = scalar_gradient(&mut objective, next, f_next, floor);
        let s = next - theta;
        let y = g_next - g;
        if s * y > 0.0 {
            hinv = s / y;
        } else {
            // Non-convex stretch: keep the direction, lengthen the step while
            // full steps are accepted.
            let grow = if alpha == 1.0 { 2.0 } else { 1.0 };
            hinv = grow * (s / g_next).abs().max(1e-12);
        }
        let rel_step = s.abs() / theta.abs().max(1.0);
        theta = next;
        f = f_next;
        g = g_next;
        if rel_step < opts.step_tol {
            return Ok(Minimum { argmin: theta, value: f, iterations: iter, converged: true });
        }
    }
    Ok(Minimum { argmin: theta, value: f, iterations: opts.max_iter, converged: false })
}

/// Barrier weights of the interior-point stages.
pub const BARRIER_WEIGHTS: [f64; 6] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

/// Stopping rules of [`minimize_matrix_constrained`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixOptions {
    pub grad_tol: f64,
    pub step_tol: f64,
    /// Newton iterations per barrier stage.
    pub max_iter: usize,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-8, step_tol: 1e-12, max_iter: 100 }
    }
}

/// `A(z)` for `z = (A₁₁, A₂₂, A₁₂)`, with `A₂₁ = A₁₂ Σ₂₂ / Σ₁₁`.
fn assemble(z: &Vector3<f64>, sigma: [f64; 2]) -> Matrix2<f64> {
    Matrix2::new(z[0], z[2], z[2] * sigma[1] / sigma[0], z[1])
}

/// `(c₁, c₂, c₃) = (A₁₁, det A, A₁₂/Σ₁₁ - A₂₁/Σ₂₂)`.
pub fn constraints(a: &Matrix2<f64>, sigma: [f64; 2]) -> [f64; 3] {
    [a[(0, 0)], a.determinant(), a[(0, 1)] / sigma[0] - a[(1, 0)] / sigma[1]]
}

/// Step along coordinate `i`, shrunk until both `z ± h eᵢ` are finite.
fn safe_step(f: &mut impl FnMut(&Vector3<f64>) -> f64, z: &Vector3<f64>, i: usize, h0: f64) -> (f64, f64, f64) {
    let mut h = h0;
    loop {
        let mut zp = *z;
        let mut zm = *z;
        zp[i] += h;
        zm[i] -= h;
        let (fp, fm) = (f(&zp), f(&zm));
        if (fp.is_finite() && fm.is_finite()) || h < 1e-6 * h0 {
            return (h, fp, fm);
        }
        h *= 0.1;
    }
}

fn gradient3(f: &mut impl FnMut(&Vector3<f64>) -> f64, z: &Vector3<f64>) -> Vector3<f64> {
    let mut g = Vector3::zeros();
    for i in 0..3 {
        let (h, fp, fm) = safe_step(f, z, i, 1e-6 * z[i].abs().max(1.0));
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

fn hessian3(f: &mut impl FnMut(&Vector3<f64>) -> f64, z: &Vector3<f64>, f0: f64) -> Matrix3<f64> {
    let mut h = [0.0; 3];
    let mut hess = Matrix3::zeros();
    for i in 0..3 {
        let (hi, fp, fm) = safe_step(f, z, i, 1e-4 * z[i].abs().max(1.0));
        h[i] = hi;
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
    }
    for i in 0..3 {
        for j in 0..i {
            let mut corners = [0.0; 4];
            for (c, (si, sj)) in corners.iter_mut().zip([(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]) {
                let mut w = *z;
                w[i] += si * h[i];
                w[j] += sj * h[j];
                *c = f(&w);
            }
            let v = (corners[0] - corners[1] - corners[2] + corners[3]) / (4.0 * h[i] * h[j]);
            let v = if v.is_finite() { v } else { 0.0 };
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Minimizes `objective(A)` over 2×2 matrices with `A₁₁ > 0`, `det A > 0`
/// and `A⁻¹Σ` symmetric.
///
/// The equality constraint is removed by parameterizing `A` through
/// `(A₁₁, A₂₂, A₁₂)`. The two inequalities enter the barrier
/// `μ Σ ln(1 + 1/cᵢ)`, which behaves like `-μ ln cᵢ` at the boundary but stays
/// bounded for large `cᵢ` (the plain `-ln c` would reward `A → ∞`, where the
/// distance flattens out). The weight runs through [`BARRIER_WEIGHTS`] times
/// `‖∇f‖ ‖z‖` at the initial point; each
/// stage takes damped Newton steps with a finite-difference Hessian. If the plain objective is already
/// stationary at a feasible point the barrier is skipped.
pub fn minimize_matrix_constrained(
    mut objective: impl FnMut(&Matrix2<f64>) -> f64,
    sigma: [f64; 2],
    init: &Matrix2<f64>,
    opts: MatrixOptions,
) -> Result<Minimum<Matrix2<f64>>> {
    if !sigma.iter().all(|s| *s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("Sigma diagonal must be positive, got {sigma:?}")));
    }
    let [c1, c2, c3] = constraints(init, sigma);
    let scale = init.abs().max().max(1.0);
    if !(c1 > 0.0 && c2 > 0.0) || c3.abs() > 1e-9 * scale {
        return Err(Error::Infeasible(format!("c = ({c1}, {c2}, {c3}) at {init:?}")));
    }
    let feasible = |z: &Vector3<f64>| {
        let a = assemble(z, sigma);
        a[(0, 0)] > 0.0 && a.determinant() > 0.0
    };
    let mut plain = |z: &Vector3<f64>| {
        if feasible(z) {
            finite_or_inf(objective(&assemble(z, sigma)))
        } else {
            f64::INFINITY
        }
    };

    let mut z = Vector3::new(init[(0, 0)], init[(1, 1)], init[(0, 1)]);
    if !plain(&z).is_finite() {
        return Err(Error::Infeasible("objective is not finite at the initial point".into()));
    }
    let g0 = gradient3(&mut plain, &z).norm();
    if g0 < opts.grad_tol {
        let value = plain(&z);
        return Ok(Minimum { argmin: assemble(&z, sigma), value, iterations: 0, converged: true });
    }
    // Barrier weights are relative to the objective's own scale at the start.
    let weight_scale = g0 * z.norm().max(1.0);

    let mut iterations = 0;
    let mut converged = true;
    for mu in BARRIER_WEIGHTS.map(|w| w * weight_scale) {
        let mut barrier = |z: &Vector3<f64>| {
            let a = assemble(z, sigma);
            let (c1, c2) = (a[(0, 0)], a.determinant());
            if c1 > 0.0 && c2 > 0.0 {
                plain(z) + mu * ((1.0 / c1).ln_1p() + (1.0 / c2).ln_1p())
            } else {
                f64::INFINITY
            }
        };
        let mut f = barrier(&z);
        let mut stage_done = false;
        for _ in 0..opts.max_iter {
            iterations += 1;
            let g = gradient3(&mut barrier, &z);
            if g.norm() < opts.grad_tol {
                stage_done = true;
                break;
            }
            let h = hessian3(&mut barrier, &z, f);
            let step = newton_direction(&h, &g);
            let mut t = 1.0;
            let mut moved = false;
            while t * step.norm() > opts.step_tol * z.norm().max(1.0) {
                let trial = z + t * step;
                let ft = barrier(&trial);
                if ft <= f + ARMIJO * t * g.dot(&step) {
                    let small = (trial - z).norm() <= opts.step_tol * z.norm().max(1.0) * 1e2;
                    z = trial;
                    f = ft;
                    moved = true;
                    if small {
                        stage_done = true;
                    }
                    break;
                }
                t *= 0.5;
            }
            if !moved || stage_done {
                stage_done = true;
                break;
            }
        }
        converged &= stage_done;
    }
    let value = plain(&z);
    Ok(Minimum { argmin: assemble(&z, sigma), value, iterations, converged })
}

/// Newton direction with Levenberg damping until the Hessian is positive
/// definite.
fn newton_direction(h: &Matrix3<f64>, g: &Vector3<f64>) -> Vector3<f64> {
    let sym = 0.5 * (h + h.transpose());
    let mut lambda = 0.0;
    let base = sym.diagonal().abs().max().max(1e-12);
    for _ in 0..60 {
        let damped = sym + Matrix3::identity() * lambda;
        if let Some(ch) = damped.cholesky() {
            return -ch.solve(g);
        }
        lambda = if lambda == 0.0 { 1e-8 * base } else { lambda * 10.0 };
    }
    -g
}
