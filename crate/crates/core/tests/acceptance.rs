//! End-to-end acceptance suite. Runs every criterion, prints one
//! `PASS`/`FAIL` line each and exits nonzero if any fails.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use mde::asymptotics::{
    h_closed_form, j_quadrature, phi_density, phi_solve, rate_ladder, tau_squared, oscillatory_bound, GapKind,
    TestFunction, STANDARD_LADDER,
};
use mde::dynamics::{euler_maruyama_strided, multiscale_langevin, multiscale_step, LangevinPotential, Trajectory};
use mde::experiment::{homogenized, replay, run, ExperimentConfig, ExperimentKind, RunOutcome};
use mde::gibbs::{char_fn, homogenization_factor, GibbsDensity, MultiscaleModel, PeriodicPerturbation, Potential};
use mde::mde::{
    distance_closed_form, distance_fft, empirical_cf, minimize_scalar, DistanceEvaluator, DistanceMode, Family,
    ScalarOptions, WeightKernel,
};
use mde::numerics::{bessel_i0, fft_convolve, trapezoid, Grid1D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn config(kind: &str, extra: &str, dir: &std::path::Path) -> Result<ExperimentConfig, String> {
    ExperimentConfig::parse(&format!("experiment = {kind}\noutput_dir = {}\n{extra}", dir.display())).map_err(err)
}

fn converged_mean(o: &RunOutcome) -> Result<f64, String> {
    o.summary.converged.mean.first().copied().ok_or_else(|| "no converged replication".to_string())
}

fn homogenization_constants() -> Check {
    let k = homogenization_factor(&PeriodicPerturbation::unit_sine(), 1.0).map_err(err)?;
    let oracle = 1.0 / bessel_i0(1.0).map_err(err)?.powi(2);
    let h2 = homogenized(&ExperimentConfig::defaults(ExperimentKind::Langevin2d)).map_err(err)?;
    let theta_ok = h2.theta0.iter().zip([3.222, 1.611, 1.893, 2.839]).all(|(a, b)| (a - b).abs() <= 5e-3);
    let sigma_ok = (h2.sigma_bar[0] - 1.208).abs() <= 5e-3 && (h2.sigma_bar[1] - 1.419).abs() <= 5e-3;
    ensure(
        (k - oracle).abs() <= 1e-4 && (k - 0.62386).abs() <= 1e-4 && (2.0 * k - 1.248).abs() <= 1e-3 && theta_ok && sigma_ok,
        format!("K = {k:.6}, theta0 = {:.5}, 2D theta0 = {:.4?}, Sigma = {:.4?}", 2.0 * k, h2.theta0, h2.sigma_bar),
    )
}

fn distance_path_equivalence() -> Check {
    let k = homogenization_factor(&PeriodicPerturbation::unit_sine(), 1.0).map_err(err)?;
    let spec = multiscale_langevin(
        2.0,
        1.0,
        0.1,
        &LangevinPotential::Scalar(Potential::Quadratic),
        &[PeriodicPerturbation::unit_sine()],
    )
    .map_err(err)?;
    let (dt, stride) = multiscale_step(0.1, 1e-2);
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let traj = euler_maruyama_strided(&spec, &[10.0], 100.0, dt, stride, 1000 + seed).map_err(err)?;
        let family = Family::Drift { sigma_bar: k, potential: Potential::Quadratic };
        let kernel = WeightKernel::new(1.0).map_err(err)?;
        let closed =
            DistanceEvaluator::new(traj.clone(), kernel, family.clone(), DistanceMode::GaussianClosedForm).map_err(err)?;
        let fft = DistanceEvaluator::new(traj, kernel, family, DistanceMode::FftConvolution).map_err(err)?;
        for theta in [0.5, 1.248, 5.0] {
            let a = distance_closed_form(&closed, theta).map_err(err)?;
            let b = distance_fft(&fft, theta).map_err(err)?;
            worst = worst.max((a - b).abs() / (1.0 + a.abs()));
        }
    }
    ensure(worst < 1e-4, format!("max |fft - closed| / (1 + |closed|) = {worst:.2e} over 10 paths x 3 thetas"))
}

fn robustness_quadratic() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let fine = run(&config("langevin1d", "eps = 0.1\nT = 2000\nreplications = 50\n", &dir.path().join("fine"))?, None)
        .map_err(err)?;
    let coarse =
        run(&config("langevin1d", "eps = 0.25\nT = 250\nreplications = 50\n", &dir.path().join("coarse"))?, None)
            .map_err(err)?;
    let theta0 = fine.summary.reference.as_ref().map(|r| r[0]).unwrap_or(f64::NAN);
    let (m_fine, m_coarse) = (converged_mean(&fine)?, converged_mean(&coarse)?);
    let (e_fine, e_coarse) = ((m_fine - 1.248).abs(), (m_coarse - theta0).abs());
    ensure(
        e_fine < 0.125 && (m_fine - theta0).abs() < e_coarse,
        format!(
            "mean(eps=0.1, T=2000) = {m_fine:.4} (|err| {e_fine:.4}, {} converged); mean(eps=0.25, T=250) = {m_coarse:.4} (|err| {e_coarse:.4})",
            fine.summary.converged.count
        ),
    )
}

fn robustness_quartic() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let o = run(&config("langevin1d_quartic", "eps = 0.1\nT = 2000\nreplications = 30\n", dir.path())?, None)
        .map_err(err)?;
    let m = converged_mean(&o)?;
    ensure(
        (m - 1.248).abs() < 0.19,
        format!("mean = {m:.4} over {} converged of 30 (|err| {:.4})", o.summary.converged.count, (m - 1.248).abs()),
    )
}

fn asymptotic_variance() -> Check {
    let k = homogenization_factor(&PeriodicPerturbation::unit_sine(), 1.0).map_err(err)?;
    let (theta0, sigma_bar) = (2.0 * k, k);
    let stats = tau_squared(theta0, sigma_bar, 1.0).map_err(err)?;
    let density = GibbsDensity::new(theta0, sigma_bar, Potential::Quadratic).map_err(err)?;
    let jq = j_quadrature(&density, 1.0).map_err(err)?;
    let sol = phi_solve(theta0, sigma_bar, 1.0).map_err(err)?;
    let sup_h = sol.h.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let residual = sol.residual_sup(&Potential::Quadratic);
    let rel_j = (stats.j - jq).abs() / jq;
    ensure(
        (stats.ratio - 2.670).abs() <= 0.01 * 2.670 && rel_j <= 1e-6 && residual <= 1e-3 * sup_h,
        format!(
            "tau^2/J^2 = {:.5}, J = {:.9} (quadrature rel. diff {rel_j:.1e}), residual {residual:.2e} vs sup|h| {sup_h:.2e}",
            stats.ratio, stats.j
        ),
    )
}

fn normality() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let o = run(&config("normality", "eps = 0.1\nT = 1000\nreplications = 200\n", dir.path())?, None).map_err(err)?;
    let n = o.summary.normality.as_ref().ok_or("normality statistics missing")?;
    let overlay = fs::read_to_string(dir.path().join("overlay.csv")).map_err(err)?;
    let pts: Vec<(f64, f64)> = overlay
        .lines()
        .skip(1)
        .map(|l| {
            let (x, y) = l.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect();
    let area = trapezoid(&pts.iter().map(|p| p.1).collect::<Vec<_>>(), pts[1].0 - pts[0].0);
    let se = (2.670f64 / n.samples as f64).sqrt();
    ensure(
        (n.sample_variance - 2.670).abs() <= 0.3 * 2.670 && n.sample_mean.abs() <= 3.0 * se && (area - 1.0).abs() <= 1e-6,
        format!(
            "{} samples: variance {:.4} (predicted {:.4}), mean {:.4} (3 s.e. = {:.4}), overlay area {area:.8}",
            n.samples,
            n.sample_variance,
            n.predicted_variance,
            n.sample_mean,
            3.0 * se
        ),
    )
}

fn fast_chaotic_noise() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let a = run(&config("fcn", "a = -1\nb = 0\nT = 500\n", &dir.path().join("a"))?, None).map_err(err)?;
    let b = run(&config("fcn", "a = 1\nb = 1\nT = 500\n", &dir.path().join("b"))?, None).map_err(err)?;
    let sa = a.rows[0].theta_hat.and_then(|t| t.scalar()).unwrap_or(f64::NAN);
    let sb = b.rows[0].theta_hat.and_then(|t| t.scalar()).unwrap_or(f64::NAN);
    ensure(
        (0.09..=0.15).contains(&sa) && (0.09..=0.16).contains(&sb) && a.rows[0].converged && b.rows[0].converged,
        format!("sigma_hat(A=-1, B=0) = {sa:.4}, sigma_hat(A=1, B=1) = {sb:.4}"),
    )
}

fn rate_verification() -> Check {
    let model = MultiscaleModel::new(2.0, 1.0, Potential::Quadratic, PeriodicPerturbation::unit_sine()).map_err(err)?;
    let cf = rate_ladder(&GapKind::CharacteristicFunction { model, u: 1.0 }, &STANDARD_LADDER).map_err(err)?;
    let f = TestFunction::standard_normal();
    let p = PeriodicPerturbation::unit_sine();
    let osc = rate_ladder(&GapKind::Oscillatory { f, p: p.clone() }, &STANDARD_LADDER).map_err(err)?;
    let mut bound_ok = true;
    for r in &osc.rows {
        let b = oscillatory_bound(&f, &p, r.eps, 1).map_err(err)?;
        bound_ok &= r.gap.max(r.quadrature) <= b;
    }
    ensure(
        cf.fitted_slope <= -1.8 && osc.fitted_slope <= -2.0 && bound_ok,
        format!(
            "cf_gap slope {:.1}, oscillatory_gap slope {:.1}, first-order bound holds at every eps: {bound_ok}",
            cf.fitted_slope, osc.fitted_slope
        ),
    )
}

fn property_suites() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut notes = Vec::new();

    let mut fft_err = 0.0f64;
    for _ in 0..20 {
        let half = rng.random_range(4..256usize);
        let n = 2 * half + 1;
        let l = rng.random_range(1.0..10.0);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fg = Grid1D::new(-l, l, f.clone()).map_err(err)?;
        let gg = Grid1D::new(-l, l, g.clone()).map_err(err)?;
        let out = fft_convolve(&fg, &gg).map_err(err)?;
        let dx = fg.dx();
        for i in 0..n {
            // Node i sits at x_i = (i - half) dx; g is evaluated at x_i - y_j.
            let direct: f64 = (0..n)
                .filter_map(|j| {
                    let k = i as i64 + half as i64 - j as i64;
                    (0..n as i64).contains(&k).then(|| f[j] * g[k as usize])
                })
                .sum::<f64>()
                * dx;
            fft_err = fft_err.max((out.values()[i] - direct).abs());
        }
    }
    notes.push(format!("fft vs direct {fft_err:.1e}"));

    let mut herm = 0.0f64;
    for _ in 0..20 {
        let theta = rng.random_range(0.2..5.0);
        let d = GibbsDensity::new(theta, 0.62386, Potential::Quartic).map_err(err)?;
        let u = rng.random_range(-10.0..10.0);
        herm = herm.max((char_fn(&d, -u) - char_fn(&d, u).conj()).norm());
    }
    notes.push(format!("hermitian {herm:.1e}"));

    let mut modulus = 0.0f64;
    for _ in 0..50 {
        let xs: Vec<f64> = (0..rng.random_range(1..300)).map(|_| rng.random_range(-50.0..50.0)).collect();
        let t = Trajectory::scalar(0.01, 0, xs).map_err(err)?;
        modulus = modulus.max(empirical_cf(&t, &[rng.random_range(-20.0..20.0)]).norm());
    }
    notes.push(format!("max |C^T| {modulus:.12}"));

    let mut centering = 0.0f64;
    for _ in 0..20 {
        let theta0 = rng.random_range(0.3..4.0);
        let sigma_bar = rng.random_range(0.2..2.0);
        let beta = rng.random_range(0.3..3.0);
        let mu = phi_density(theta0, sigma_bar).map_err(err)?;
        let g = mu.grid();
        let hm: Vec<f64> =
            g.nodes().zip(g.values()).map(|(x, m)| h_closed_form(x, theta0, sigma_bar, beta) * m).collect();
        centering = centering.max(trapezoid(&hm, g.dx()).abs());
    }
    notes.push(format!("h centering {centering:.1e}"));

    let xs: Vec<f64> = (0..2000).map(|_| rng.random_range(-2.0..2.0)).collect();
    let traj = Trajectory::scalar(0.01, 0, xs).map_err(err)?;
    let eval = DistanceEvaluator::new(
        traj,
        WeightKernel::new(1.0).map_err(err)?,
        Family::Drift { sigma_bar: 0.62386, potential: Potential::Quadratic },
        DistanceMode::GaussianClosedForm,
    )
    .map_err(err)?;
    let mut shift = 0.0f64;
    for c in [-3.0, 0.25, 17.0] {
        let plain = minimize_scalar(|t| eval.distance(t).unwrap(), 10.0, 0.0, ScalarOptions::default()).map_err(err)?;
        let moved =
            minimize_scalar(|t| eval.distance(t).unwrap() + c, 10.0, 0.0, ScalarOptions::default()).map_err(err)?;
        shift = shift.max((plain.argmin - moved.argmin).abs() / plain.argmin);
    }
    notes.push(format!("argmin shift {shift:.1e}"));

    let dir = tempfile::tempdir().map_err(err)?;
    let first = run(&config("langevin1d", "eps = 0.25\nT = 100\nreplications = 4\nmaster_seed = 3\n", dir.path())?, Some(2))
        .map_err(err)?;
    let again = dir.path().join("replay");
    replay(first.out_dir.join("manifest.json"), Some(&again), Some(1)).map_err(err)?;
    let identical = ["estimates.csv", "summary.json"]
        .iter()
        .all(|f| fs::read(first.out_dir.join(f)).ok() == fs::read(again.join(f)).ok());
    notes.push(format!("replay identical {identical}"));

    ensure(
        fft_err <= 1e-10 && herm <= 1e-12 && modulus <= 1.0 + 1e-12 && centering <= 1e-8 && shift <= 1e-6 && identical,
        notes.join(", "),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("homogenization constants", homogenization_constants),
        ("distance-path equivalence", distance_path_equivalence),
        ("robustness, quadratic potential", robustness_quadratic),
        ("robustness, quartic potential", robustness_quartic),
        ("asymptotic-variance pipeline", asymptotic_variance),
        ("normality study", normality),
        ("fast chaotic noise", fast_chaotic_noise),
        ("rate verification", rate_verification),
        ("property suites", property_suites),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {}: FAIL  {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
