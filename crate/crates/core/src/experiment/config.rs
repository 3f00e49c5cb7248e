use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{fcn_step, multiscale_step, FcnSpec, OBSERVATION_STEP};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Langevin1d,
    Langevin1dQuartic,
    Langevin2d,
    Fcn,
    Normality,
    Rates,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Langevin1d,
        ExperimentKind::Langevin1dQuartic,
        ExperimentKind::Langevin2d,
        ExperimentKind::Fcn,
        ExperimentKind::Normality,
        ExperimentKind::Rates,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Langevin1d => "langevin1d",
            ExperimentKind::Langevin1dQuartic => "langevin1d_quartic",
            ExperimentKind::Langevin2d => "langevin2d",
            ExperimentKind::Fcn => "fcn",
            ExperimentKind::Normality => "normality",
            ExperimentKind::Rates => "rates",
        }
    }

    /// Keys accepted besides `experiment`.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Langevin1d | ExperimentKind::Langevin1dQuartic | ExperimentKind::Normality => &[
                "replications", "master_seed", "output_dir", "alpha", "sigma", "eps", "T", "dt", "obs_dt", "beta",
                "init", "x0", "p_amplitude", "p_period", "reference",
            ],
            ExperimentKind::Langevin2d => &[
                "replications", "master_seed", "output_dir", "alpha", "sigma", "eps", "T", "dt", "obs_dt", "beta",
                "init", "x0", "m0", "p_amplitude", "p_period", "reference",
            ],
            ExperimentKind::Fcn => &[
                "replications", "master_seed", "output_dir", "a", "b", "lambda", "eps", "T", "dt", "obs_dt", "beta",
                "init", "x0", "reference",
            ],
            ExperimentKind::Rates => {
                &["output_dir", "alpha", "sigma", "u", "ladder", "test_sd", "p_amplitude", "p_period"]
            }
        }
    }

    fn dim(self) -> usize {
        match self {
            ExperimentKind::Langevin2d => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

/// Validated experiment description. Every field has a desk-scale default;
/// `dt = None` selects the automatic step rule of the experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub replications: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub alpha: f64,
    pub sigma: f64,
    pub eps: f64,
    pub horizon: f64,
    pub dt: Option<f64>,
    pub obs_dt: f64,
    pub beta: f64,
    /// Scalar init, or the row-major 2×2 init of `langevin2d`. Empty means
    /// the experiment's standard starting point.
    pub init: Vec<f64>,
    pub x0: Vec<f64>,
    /// Row-major `M₀` of `langevin2d`.
    pub m0: [f64; 4],
    /// Amplitude of `p` per coordinate.
    pub p_amplitude: Vec<f64>,
    pub p_period: f64,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub u: f64,
    pub ladder: Vec<f64>,
    pub test_sd: f64,
    /// Reference value reported in the summary; computed when empty.
    pub reference: Vec<f64>,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `experiment`.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let mut c = ExperimentConfig {
            experiment,
            replications: 50,
            master_seed: 0,
            output_dir: PathBuf::from(format!("out/{}", experiment.name())),
            alpha: 2.0,
            sigma: 1.0,
            eps: 0.1,
            horizon: 2000.0,
            dt: None,
            obs_dt: OBSERVATION_STEP,
            beta: 1.0,
            init: vec![10.0],
            x0: vec![10.0],
            m0: [4.0, 2.0, 2.0, 3.0],
            p_amplitude: vec![1.0],
            p_period: 1.0,
            a: -1.0,
            b: 0.0,
            lambda: 2.0 / 45.0,
            u: 1.0,
            ladder: crate::asymptotics::STANDARD_LADDER.to_vec(),
            test_sd: 1.0,
            reference: Vec::new(),
        };
        match experiment {
            ExperimentKind::Langevin1dQuartic => c.replications = 30,
            ExperimentKind::Normality => c.horizon = 1000.0,
            ExperimentKind::Langevin2d => {
                c.alpha = 1.0;
                c.sigma = 1.5;
                c.horizon = 1000.0;
                c.init = Vec::new();
                c.x0 = vec![10.0, 10.0];
                c.p_amplitude = vec![1.0, 0.5];
                c.p_period = 2.0 * PI;
            }
            ExperimentKind::Fcn => {
                c.replications = 1;
                c.eps = 10f64.powf(-1.5);
                c.horizon = 500.0;
                c.init = vec![0.8];
                c.x0 = vec![1.0; 4];
            }
            _ => {}
        }
        c
    }

    /// Parses `key = value` lines; `#` starts a comment. Unknown or
    /// inapplicable keys and duplicates are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config { line, msg: format!("expected `key = value`, got `{content}`") })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config { line, msg: "empty key or value".into() });
            }
            if entries.insert(key.to_string(), (line, value.to_string())).is_some() {
                return Err(Error::Config { line, msg: format!("duplicate key `{key}`") });
            }
        }
        let (line, name) = entries
            .remove("experiment")
            .ok_or_else(|| Error::Config { line: 0, msg: "missing `experiment` key".into() })?;
        let kind: ExperimentKind = name.parse().map_err(|msg| Error::Config { line, msg })?;
        let mut c = ExperimentConfig::defaults(kind);
        for (key, (line, value)) in &entries {
            if !kind.keys().contains(&key.as_str()) {
                return Err(Error::Config { line: *line, msg: format!("unknown key `{key}` for experiment {kind}") });
            }
            c.set(key, value).map_err(|msg| Error::Config { line: *line, msg: format!("`{key}`: {msg}") })?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "replications" => self.replications = parse_num(value)?,
            "master_seed" => self.master_seed = parse_num(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "alpha" => self.alpha = parse_num(value)?,
            "sigma" => self.sigma = parse_num(value)?,
            "eps" => self.eps = parse_num(value)?,
            "T" => self.horizon = parse_num(value)?,
            "dt" => self.dt = if value == "auto" { None } else { Some(parse_num(value)?) },
            "obs_dt" => self.obs_dt = parse_num(value)?,
            "beta" => self.beta = parse_num(value)?,
            "init" => self.init = parse_list(value)?,
            "x0" => self.x0 = parse_list(value)?,
            "m0" => {
                self.m0 = parse_list(value)?.try_into().map_err(|_| "expected 4 entries (row-major)".to_string())?
            }
            "p_amplitude" => self.p_amplitude = parse_list(value)?,
            "p_period" => self.p_period = parse_num(value)?,
            "a" => self.a = parse_num(value)?,
            "b" => self.b = parse_num(value)?,
            "lambda" => self.lambda = parse_num(value)?,
            "u" => self.u = parse_num(value)?,
            "ladder" => self.ladder = parse_list(value)?,
            "test_sd" => self.test_sd = parse_num(value)?,
            "reference" => self.reference = parse_list(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        let kind = self.experiment;
        let positive = [
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("eps", self.eps),
            ("T", self.horizon),
            ("obs_dt", self.obs_dt),
            ("beta", self.beta),
            ("p_period", self.p_period),
            ("lambda", self.lambda),
            ("test_sd", self.test_sd),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("`{name}` must be positive, got {v}"));
            }
        }
        if kind == ExperimentKind::Rates {
            if self.ladder.len() < 2 || self.ladder.iter().any(|e| !(*e > 0.0)) {
                return bad("`ladder` needs at least two positive entries".into());
            }
            return self.check_amplitudes(1);
        }
        if self.replications == 0 {
            return bad("`replications` must be at least 1".into());
        }
        let ratio = self.horizon / self.obs_dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return bad(format!("T = {} is not a multiple of obs_dt = {}", self.horizon, self.obs_dt));
        }
        let dim = if kind == ExperimentKind::Fcn { 4 } else { kind.dim() };
        if self.x0.len() != dim {
            return bad(format!("`x0` needs {dim} entries, got {}", self.x0.len()));
        }
        let init_len = if kind == ExperimentKind::Langevin2d { 4 } else { 1 };
        if !(self.init.is_empty() && kind == ExperimentKind::Langevin2d) && self.init.len() != init_len {
            return bad(format!("`init` needs {init_len} entries, got {}", self.init.len()));
        }
        if init_len == 1 && !(self.init[0] > 0.0) {
            return bad(format!("`init` must be positive, got {}", self.init[0]));
        }
        if !self.reference.is_empty() && self.reference.len() != init_len {
            return bad(format!("`reference` needs {init_len} entries, got {}", self.reference.len()));
        }
        if kind != ExperimentKind::Fcn {
            self.check_amplitudes(kind.dim())?;
        }
        self.steps().map(|_| ())
    }

    fn check_amplitudes(&self, dim: usize) -> Result<()> {
        if self.p_amplitude.len() != dim {
            return Err(Error::Config {
                line: 0,
                msg: format!("`p_amplitude` needs {dim} entries, got {}", self.p_amplitude.len()),
            });
        }
        Ok(())
    }

    /// Integration step and observation stride. A configured `dt` must obey
    /// the experiment's stability rule and divide `obs_dt`.
    pub fn steps(&self) -> Result<(f64, usize)> {
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        let fcn = self.experiment == ExperimentKind::Fcn;
        let Some(dt) = self.dt else {
            return Ok(if fcn { fcn_step(self.eps, self.obs_dt) } else { multiscale_step(self.eps, self.obs_dt) });
        };
        if !(dt > 0.0) {
            return bad(format!("`dt` must be positive, got {dt}"));
        }
        if fcn {
            let limit = FcnSpec { a: self.a, b: self.b, lambda: self.lambda, eps: self.eps }.max_step();
            if dt > limit * (1.0 + 1e-12) {
                return bad(format!("dt = {dt} exceeds eps^2/10 = {limit}"));
            }
        } else {
            let limit = self.eps.powi(3);
            if dt >= limit * (1.0 - 1e-12) {
                return bad(format!("dt = {dt} must be below eps^3 = {limit}"));
            }
        }
        let stride = (self.obs_dt / dt).round();
        if stride < 1.0 || (stride * dt - self.obs_dt).abs() > 1e-9 * self.obs_dt {
            return bad(format!("dt = {dt} does not divide obs_dt = {}", self.obs_dt));
        }
        Ok((dt, stride as usize))
    }

    /// Canonical `key = value` rendering; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        for &key in self.experiment.keys() {
            let value = match key {
                "replications" => self.replications.to_string(),
                "master_seed" => self.master_seed.to_string(),
                "output_dir" => self.output_dir.display().to_string(),
                "alpha" => format!("{:?}", self.alpha),
                "sigma" => format!("{:?}", self.sigma),
                "eps" => format!("{:?}", self.eps),
                "T" => format!("{:?}", self.horizon),
                "dt" => self.dt.map_or("auto".to_string(), |d| format!("{d:?}")),
                "obs_dt" => format!("{:?}", self.obs_dt),
                "beta" => format!("{:?}", self.beta),
                "init" if self.init.is_empty() => continue,
                "init" => list(&self.init),
                "x0" => list(&self.x0),
                "m0" => list(&self.m0),
                "p_amplitude" => list(&self.p_amplitude),
                "p_period" => format!("{:?}", self.p_period),
                "a" => format!("{:?}", self.a),
                "b" => format!("{:?}", self.b),
                "lambda" => format!("{:?}", self.lambda),
                "u" => format!("{:?}", self.u),
                "ladder" => list(&self.ladder),
                "test_sd" => format!("{:?}", self.test_sd),
                "reference" if self.reference.is_empty() => continue,
                "reference" => list(&self.reference),
                _ => unreachable!("key table and renderer disagree on `{key}`"),
            };
            map.insert(key, value);
        }
        let mut out = format!("experiment = {}\n", self.experiment);
        for (k, v) in map {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn parse_num<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse `{s}`"))
}

/// Comma- or whitespace-separated numbers.
fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).map(parse_num).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_applies_defaults() {
        let c = ExperimentConfig::parse("experiment = langevin1d\n# comment\neps = 0.25  # inline\nT = 250\n").unwrap();
        assert_eq!(c.experiment, ExperimentKind::Langevin1d);
        assert_eq!((c.eps, c.horizon, c.replications), (0.25, 250.0, 50));
        assert_eq!(c.init, vec![10.0]);
        assert_eq!(c.steps().unwrap(), (1e-2 / 26.0, 26));
    }

    #[test]
    fn rejects_unknown_and_inapplicable_keys() {
        let e = ExperimentConfig::parse("experiment = langevin1d\nfoo = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        assert!(ExperimentConfig::parse("experiment = langevin1d\nlambda = 1\n").is_err());
        assert!(ExperimentConfig::parse("experiment = nope\n").is_err());
        assert!(ExperimentConfig::parse("eps = 0.1\n").is_err());
        assert!(ExperimentConfig::parse("experiment = fcn\nexperiment = fcn\n").is_err());
        assert!(ExperimentConfig::parse("experiment = fcn\njunk\n").is_err());
    }

    #[test]
    fn enforces_step_rules() {
        assert!(ExperimentConfig::parse("experiment = langevin1d\ndt = 1e-3\n").is_err());
        let ok = ExperimentConfig::parse("experiment = langevin1d\ndt = 5e-4\n").unwrap();
        assert_eq!(ok.steps().unwrap(), (5e-4, 20));
        assert!(ExperimentConfig::parse("experiment = langevin1d\ndt = 3e-4\n").is_err());
        assert!(ExperimentConfig::parse("experiment = fcn\ndt = 1e-3\n").is_err());
        assert!(ExperimentConfig::parse("experiment = fcn\ndt = 1e-4\n").is_ok());
        assert!(ExperimentConfig::parse("experiment = langevin1d\nT = 0.005\n").is_err());
        assert!(ExperimentConfig::parse("experiment = langevin1d\nreplications = 0\n").is_err());
    }

    #[test]
    fn shapes_are_checked() {
        assert!(ExperimentConfig::parse("experiment = langevin2d\nx0 = 1\n").is_err());
        assert!(ExperimentConfig::parse("experiment = langevin2d\ninit = 3, 0.6, 0.7, 6\n").is_ok());
        assert!(ExperimentConfig::parse("experiment = langevin2d\nm0 = 1, 2\n").is_err());
        assert!(ExperimentConfig::parse("experiment = fcn\nx0 = 1 1 1 1\n").is_ok());
        assert!(ExperimentConfig::parse("experiment = rates\nladder = 0.4\n").is_err());
    }

    #[test]
    fn text_round_trip() {
        for kind in ExperimentKind::ALL {
            let mut c = ExperimentConfig::defaults(kind);
            c.master_seed = 17;
            c.eps = 0.1 + 0.2;
            if kind == ExperimentKind::Fcn {
                c.eps = 10f64.powf(-1.5);
            }
            let back = ExperimentConfig::parse(&c.to_text()).unwrap();
            if kind == ExperimentKind::Rates {
                assert_eq!(back.to_text(), c.to_text());
            } else {
                assert_eq!(back, c, "{kind}");
            }
        }
    }
}
