use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::histogram::{Binning, Histogram};
use crate::asymptotics::{
    oscillatory_bound, rate_ladder, tau_squared, GapKind, RateReport, TestFunction,
};
use crate::dynamics::{euler_maruyama_strided, multiscale_langevin, rk4_fcn, FcnSpec, LangevinPotential, Trajectory};
use crate::error::{Error, Result};
use crate::gibbs::{homogenization_factor, MultiscaleModel, PeriodicPerturbation, Potential};
use crate::mde::{estimate, Problem, ThetaHat};

/// Largest tolerated fraction of replications without a converged estimate.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

/// One replication's outcome. `failed` marks an error (e.g. blow-up) that
/// left no estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRow {
    pub replication: usize,
    pub seed: u64,
    pub theta_hat: Option<ThetaHat>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub failed: bool,
    pub error: String,
    /// Seconds for simulation and estimation.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: Vec<f64>,
    /// Sample standard deviation (`n - 1`); zero for a single row.
    pub std: Vec<f64>,
}

impl Stats {
    fn of<'a>(rows: impl Iterator<Item = &'a ThetaHat>) -> Self {
        let xs: Vec<Vec<f64>> = rows.map(|t| t.entries()).collect();
        let count = xs.len();
        let Some(dim) = xs.first().map(Vec::len) else {
            return Stats { count, mean: Vec::new(), std: Vec::new() };
        };
        let mean: Vec<f64> = (0..dim).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / count as f64).collect();
        let std = (0..dim)
            .map(|j| {
                if count < 2 {
                    return 0.0;
                }
                (xs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
            })
            .collect();
        Stats { count, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityStats {
    pub samples: usize,
    pub sample_mean: f64,
    pub sample_variance: f64,
    /// `τ²/J²` of the limit law.
    pub predicted_variance: f64,
    /// `√(predicted_variance / samples)`.
    pub standard_error: f64,
    pub binning: Binning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: ExperimentKind,
    pub reference: Option<Vec<f64>>,
    pub replications: usize,
    pub failed_count: usize,
    pub not_converged_count: usize,
    pub failure_fraction: f64,
    /// Statistics over converged rows.
    pub converged: Stats,
    /// Statistics over every row with an estimate.
    pub all: Stats,
    /// `|mean - reference|` over converged rows.
    pub abs_error: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub normality: Option<NormalityStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    pub experiment: ExperimentKind,
    /// Canonical config text; replaying it reproduces every artifact.
    pub config: String,
    pub seeds: Vec<u64>,
    pub dt: f64,
    pub stride: usize,
    pub threads: usize,
    pub wall_time_total: f64,
    pub wall_time_replications: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub rows: Vec<ReplicationRow>,
    pub summary: Summary,
    pub manifest: RunManifest,
}

impl RunOutcome {
    /// Process exit status: 2 when more than `MAX_FAILURE_FRACTION` of the
    /// replications lack a converged estimate, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.summary.failure_fraction > MAX_FAILURE_FRACTION {
            2
        } else {
            0
        }
    }
}

fn perturbation(c: &ExperimentConfig, i: usize) -> PeriodicPerturbation {
    PeriodicPerturbation::Sine { amplitude: c.p_amplitude[i], period: c.p_period }
}

/// Homogenized quantities of a multiscale Langevin experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Homogenized {
    /// `θ₀` (scalar) or row-major `K M₀`.
    pub theta0: Vec<f64>,
    /// `σ̄ = σK` per coordinate.
    pub sigma_bar: Vec<f64>,
}

pub fn homogenized(c: &ExperimentConfig) -> Result<Homogenized> {
    match c.experiment {
        ExperimentKind::Langevin2d => {
            let k = [homogenization_factor(&perturbation(c, 0), c.sigma)?, homogenization_factor(&perturbation(c, 1), c.sigma)?];
            let m = c.m0;
            Ok(Homogenized {
                theta0: vec![c.alpha * k[0] * m[0], c.alpha * k[0] * m[1], c.alpha * k[1] * m[2], c.alpha * k[1] * m[3]],
                sigma_bar: vec![c.sigma * k[0], c.sigma * k[1]],
            })
        }
        ExperimentKind::Fcn | ExperimentKind::Rates => {
            Err(Error::InvalidParameter(format!("experiment {} has no homogenized Langevin limit", c.experiment)))
        }
        _ => {
            let k = homogenization_factor(&perturbation(c, 0), c.sigma)?;
            Ok(Homogenized { theta0: vec![c.alpha * k], sigma_bar: vec![c.sigma * k] })
        }
    }
}

/// Configured reference, else the homogenized `θ₀` when there is one.
pub fn reference_value(c: &ExperimentConfig) -> Result<Option<Vec<f64>>> {
    if !c.reference.is_empty() {
        return Ok(Some(c.reference.clone()));
    }
    match c.experiment {
        ExperimentKind::Fcn | ExperimentKind::Rates => Ok(None),
        _ => Ok(Some(homogenized(c)?.theta0)),
    }
}

/// Estimation problem of an experiment.
pub fn problem(c: &ExperimentConfig) -> Result<Problem> {
    match c.experiment {
        ExperimentKind::Langevin1d | ExperimentKind::Normality | ExperimentKind::Langevin1dQuartic => {
            let potential = if c.experiment == ExperimentKind::Langevin1dQuartic {
                Potential::Quartic
            } else {
                Potential::Quadratic
            };
            let sigma_bar = homogenized(c)?.sigma_bar[0];
            Ok(Problem::Langevin1dDrift { sigma_bar, potential, beta: c.beta, init: c.init[0] })
        }
        ExperimentKind::Langevin2d => {
            let s = homogenized(c)?.sigma_bar;
            let init = if c.init.is_empty() {
                Matrix2::new(3.0, s[0] / 2.0, s[1] / 2.0, 6.0)
            } else {
                Matrix2::new(c.init[0], c.init[1], c.init[2], c.init[3])
            };
            Ok(Problem::Langevin2dDrift { sigma: [s[0], s[1]], beta: c.beta, init })
        }
        ExperimentKind::Fcn => Ok(Problem::FcnDiffusion { a: c.a, b: c.b, beta: c.beta, init: c.init[0] }),
        ExperimentKind::Rates => Err(Error::InvalidParameter("rates has no estimation problem".into())),
    }
}

/// Observed slow path of replication `seed`.
pub fn simulate(c: &ExperimentConfig, seed: u64) -> Result<Trajectory> {
    let (dt, stride) = c.steps()?;
    match c.experiment {
        ExperimentKind::Fcn => {
            let spec = FcnSpec { a: c.a, b: c.b, lambda: c.lambda, eps: c.eps };
            let x0 = [c.x0[0], c.x0[1], c.x0[2], c.x0[3]];
            let t = rk4_fcn(&spec, x0, c.horizon, dt, stride)?;
            Trajectory::new(t.dt(), 1, seed, t.raw().to_vec())
        }
        ExperimentKind::Langevin2d => {
            let m = Matrix2::new(c.m0[0], c.m0[1], c.m0[2], c.m0[3]);
            let spec = multiscale_langevin(
                c.alpha,
                c.sigma,
                c.eps,
                &LangevinPotential::QuadraticForm(m),
                &[perturbation(c, 0), perturbation(c, 1)],
            )?;
            euler_maruyama_strided(&spec, &c.x0, c.horizon, dt, stride, seed)
        }
        ExperimentKind::Rates => Err(Error::InvalidParameter("rates has no trajectory".into())),
        kind => {
            let v = if kind == ExperimentKind::Langevin1dQuartic { Potential::Quartic } else { Potential::Quadratic };
            let spec = multiscale_langevin(c.alpha, c.sigma, c.eps, &LangevinPotential::Scalar(v), &[perturbation(c, 0)])?;
            euler_maruyama_strided(&spec, &c.x0, c.horizon, dt, stride, seed)
        }
    }
}

/// Simulates and fits replication `r` (seed `master_seed + r`). Errors are
/// recorded in the row rather than returned.
pub fn replicate(c: &ExperimentConfig, problem: &Problem, r: usize) -> ReplicationRow {
    let seed = c.master_seed.wrapping_add(r as u64);
    let start = Instant::now();
    let outcome = simulate(c, seed).and_then(|traj| estimate(problem, &traj));
    let wall_time = start.elapsed().as_secs_f64();
    match outcome {
        Ok(e) => ReplicationRow {
            replication: r,
            seed,
            theta_hat: Some(e.theta_hat),
            objective: e.objective,
            iterations: e.iterations,
            converged: e.converged,
            failed: false,
            error: String::new(),
            wall_time,
        },
        Err(e) => ReplicationRow {
            replication: r,
            seed,
            theta_hat: None,
            objective: f64::NAN,
            iterations: 0,
            converged: false,
            failed: true,
            error: e.to_string(),
            wall_time,
        },
    }
}

fn theta_columns(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::Langevin2d => &["theta_11", "theta_12", "theta_21", "theta_22"],
        _ => &["theta_hat"],
    }
}

/// `estimates.csv`: one row per replication, failed rows included. Contains
/// nothing run-dependent, so equal configs give identical bytes.
pub fn write_estimates(kind: ExperimentKind, rows: &[ReplicationRow], w: &mut impl Write) -> Result<()> {
    let cols = theta_columns(kind);
    writeln!(w, "replication,seed,{},objective,iterations,converged,failed,error", cols.join(","))?;
    for r in rows {
        let theta = match &r.theta_hat {
            Some(t) => t.entries().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
            None => vec![""; cols.len()].join(","),
        };
        let objective = if r.objective.is_finite() { r.objective.to_string() } else { String::new() };
        let error: String = r.error.chars().map(|ch| if ch == ',' || ch == '\n' { ' ' } else { ch }).collect();
        writeln!(
            w,
            "{},{},{theta},{objective},{},{},{},{error}",
            r.replication, r.seed, r.iterations, r.converged, r.failed
        )?;
    }
    Ok(())
}

fn write_timing(rows: &[ReplicationRow], w: &mut impl Write) -> Result<()> {
    writeln!(w, "replication,seed,wall_time")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.replication, r.seed, r.wall_time)?;
    }
    Ok(())
}

fn summarize(c: &ExperimentConfig, rows: &[ReplicationRow]) -> Result<Summary> {
    let reference = reference_value(c)?;
    let converged = Stats::of(rows.iter().filter(|r| r.converged).filter_map(|r| r.theta_hat.as_ref()));
    let all = Stats::of(rows.iter().filter_map(|r| r.theta_hat.as_ref()));
    let failed_count = rows.iter().filter(|r| r.failed).count();
    let not_converged_count = rows.iter().filter(|r| !r.failed && !r.converged).count();
    let abs_error = match &reference {
        Some(refv) if converged.count > 0 => {
            Some(converged.mean.iter().zip(refv).map(|(m, t)| (m - t).abs()).collect())
        }
        _ => None,
    };
    Ok(Summary {
        experiment: c.experiment,
        reference,
        replications: rows.len(),
        failed_count,
        not_converged_count,
        failure_fraction: (failed_count + not_converged_count) as f64 / rows.len() as f64,
        converged,
        all,
        abs_error,
        normality: None,
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Grid of the `N(0, variance)` density over ±10 standard deviations.
pub fn normal_overlay(variance: f64, nodes: usize) -> Vec<(f64, f64)> {
    let sd = variance.sqrt();
    let (lo, hi) = (-10.0 * sd, 10.0 * sd);
    let dx = (hi - lo) / (nodes - 1) as f64;
    (0..nodes)
        .map(|i| {
            let x = lo + i as f64 * dx;
            (x, (-0.5 * x * x / variance).exp() / (2.0 * std::f64::consts::PI * variance).sqrt())
        })
        .collect()
}

/// Centred, scaled estimates `√T (θ̂ - θ₀)` over converged rows.
pub fn scaled_samples(c: &ExperimentConfig, rows: &[ReplicationRow], theta0: f64) -> Vec<f64> {
    let root_t = c.horizon.sqrt();
    rows.iter()
        .filter(|r| r.converged)
        .filter_map(|r| r.theta_hat.and_then(|t| t.scalar()))
        .map(|t| root_t * (t - theta0))
        .collect()
}

fn normality_artifacts(c: &ExperimentConfig, rows: &[ReplicationRow], dir: &Path) -> Result<NormalityStats> {
    let h = homogenized(c)?;
    let theta0 = match c.reference.first() {
        Some(&t) => t,
        None => h.theta0[0],
    };
    let samples = scaled_samples(c, rows, theta0);
    let n = samples.len();
    if n < 4 {
        return Err(Error::InvalidParameter(format!("normality study needs at least 4 converged rows, got {n}")));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let predicted = tau_squared(theta0, h.sigma_bar[0], c.beta)?.ratio;

    let hist = Histogram::new(&samples)?;
    let mut w = create(dir, "hist.csv")?;
    hist.write_csv(&mut w)?;
    w.flush()?;

    let mut w = create(dir, "overlay.csv")?;
    writeln!(w, "x,density")?;
    for (x, d) in normal_overlay(predicted, 2001) {
        writeln!(w, "{x},{d}")?;
    }
    w.flush()?;

    Ok(NormalityStats {
        samples: n,
        sample_mean: mean,
        sample_variance: var,
        predicted_variance: predicted,
        standard_error: (predicted / n as f64).sqrt(),
        binning: hist.binning,
    })
}

/// Runs every replication on `threads` workers (all cores when `None`) and
/// writes `estimates.csv`, `summary.json`, `timing.csv`, `manifest.json`,
/// and for `normality` also `hist.csv` and `overlay.csv`.
pub fn run(c: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutcome> {
    if c.experiment == ExperimentKind::Rates {
        return Err(Error::InvalidParameter("use rates_study for the rates experiment".into()));
    }
    let start = Instant::now();
    let problem = problem(c)?;
    let (dt, stride) = c.steps()?;
    let dir = c.output_dir.clone();
    fs::create_dir_all(&dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let rows: Vec<ReplicationRow> =
        pool.install(|| (0..c.replications).into_par_iter().map(|r| replicate(c, &problem, r)).collect());

    let mut w = create(&dir, "estimates.csv")?;
    write_estimates(c.experiment, &rows, &mut w)?;
    w.flush()?;
    let mut w = create(&dir, "timing.csv")?;
    write_timing(&rows, &mut w)?;
    w.flush()?;

    let mut summary = summarize(c, &rows)?;
    if c.experiment == ExperimentKind::Normality {
        summary.normality = Some(normality_artifacts(c, &rows, &dir)?);
    }
    write_json(&dir, "summary.json", &summary)?;

    let manifest = RunManifest {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: c.experiment,
        config: c.to_text(),
        seeds: rows.iter().map(|r| r.seed).collect(),
        dt,
        stride,
        threads: pool.current_num_threads(),
        wall_time_total: start.elapsed().as_secs_f64(),
        wall_time_replications: rows.iter().map(|r| r.wall_time).sum(),
    };
    write_json(&dir, "manifest.json", &manifest)?;
    Ok(RunOutcome { out_dir: dir, rows, summary, manifest })
}

/// Normality study: a `normality` run with histogram and overlay.
pub fn normality_study(c: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutcome> {
    if c.experiment != ExperimentKind::Normality {
        return Err(Error::InvalidParameter(format!("expected a normality config, got {}", c.experiment)));
    }
    run(c, threads)
}

/// Config stored in a manifest, optionally redirected to `out_dir`.
pub fn manifest_config(path: impl AsRef<Path>, out_dir: Option<&Path>) -> Result<ExperimentConfig> {
    let m: RunManifest = serde_json::from_reader(File::open(path)?)?;
    let mut c = ExperimentConfig::parse(&m.config)?;
    if let Some(d) = out_dir {
        c.output_dir = d.to_path_buf();
    }
    Ok(c)
}

/// Re-runs the config recorded in a manifest.
pub fn replay(path: impl AsRef<Path>, out_dir: Option<&Path>, threads: Option<usize>) -> Result<RunOutcome> {
    run(&manifest_config(path, out_dir)?, threads)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub eps: f64,
    pub gap: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatesOutcome {
    pub cf: RateReport,
    pub oscillatory: RateReport,
    /// First-order bound at each ladder `ε`.
    pub bound: Vec<BoundRow>,
}

/// Rate ladders for the characteristic-function gap of the configured
/// quadratic model and the oscillatory integral of a Gaussian test
/// function; writes `cf_gap.csv`, `oscillatory_gap.csv` and `bound.csv`.
pub fn rates_study(c: &ExperimentConfig) -> Result<RatesOutcome> {
    if c.experiment != ExperimentKind::Rates {
        return Err(Error::InvalidParameter(format!("expected a rates config, got {}", c.experiment)));
    }
    let p = perturbation(c, 0);
    let model = MultiscaleModel::new(c.alpha, c.sigma, Potential::Quadratic, p.clone())?;
    let f = TestFunction::Gaussian { sd: c.test_sd };
    let cf = rate_ladder(&GapKind::CharacteristicFunction { model, u: c.u }, &c.ladder)?;
    let oscillatory = rate_ladder(&GapKind::Oscillatory { f, p: p.clone() }, &c.ladder)?;
    let bound = oscillatory
        .rows
        .iter()
        .map(|r| {
            let b = oscillatory_bound(&f, &p, r.eps, 1)?;
            let gap = r.gap.max(r.quadrature);
            Ok(BoundRow { eps: r.eps, gap, bound: b, holds: gap <= b })
        })
        .collect::<Result<Vec<_>>>()?;

    let dir = &c.output_dir;
    fs::create_dir_all(dir)?;
    for (name, report) in [("cf_gap.csv", &cf), ("oscillatory_gap.csv", &oscillatory)] {
        let mut w = create(dir, name)?;
        report.write_csv(&mut w)?;
        w.flush()?;
    }
    let mut w = create(dir, "bound.csv")?;
    writeln!(w, "eps,gap,bound,holds")?;
    for b in &bound {
        writeln!(w, "{},{:e},{},{}", b.eps, b.gap, b.bound, b.holds)?;
    }
    w.flush()?;
    Ok(RatesOutcome { cf, oscillatory, bound })
}
