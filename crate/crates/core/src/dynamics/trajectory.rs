use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Uniformly sampled path `X(0), X(dt), ..., X(m dt)` in `dim` dimensions.
///
/// States are stored row-major: state `k` occupies `states[k*dim..(k+1)*dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    dim: usize,
    seed: u64,
    states: Vec<f64>,
}

const HEADER_LEN: usize = 4 + 8 + 8 + 8;

impl Trajectory {
    pub fn new(dt: f64, dim: usize, seed: u64, states: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if dim == 0 || states.len() < dim || states.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form whole {dim}-dimensional states",
                states.len()
            )));
        }
        if let Some(k) = states.iter().position(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: k / dim });
        }
        Ok(Self { dt, dim, seed, states })
    }

    /// Scalar path from a slice of positions.
    pub fn scalar(dt: f64, seed: u64, xs: Vec<f64>) -> Result<Self> {
        Self::new(dt, 1, seed, xs)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of stored states, `m + 1`.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of intervals `m`.
    pub fn steps(&self) -> usize {
        self.len() - 1
    }

    /// Observation horizon `T = m dt`.
    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.states.chunks_exact(self.dim)
    }

    pub fn raw(&self) -> &[f64] {
        &self.states
    }

    /// Values of coordinate `j` along the path.
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.states().map(|s| s[j]).collect()
    }

    /// Time-averaging weights of the stored points: trapezoid weights
    /// normalized by `T`, so they sum to one. A single state gets weight one.
    pub fn time_weights(&self) -> Vec<f64> {
        let n = self.len();
        if n == 1 {
            return vec![1.0];
        }
        let m = (n - 1) as f64;
        let mut w = vec![1.0 / m; n];
        w[0] = 0.5 / m;
        w[n - 1] = 0.5 / m;
        w
    }

    /// Trapezoid time average `(1/T) ∫ f(X(t)) dt`.
    pub fn time_average(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let n = self.len();
        if n == 1 {
            return f(self.state(0));
        }
        let mut acc = 0.0;
        for (k, s) in self.states().enumerate() {
            let v = f(s);
            acc += if k == 0 || k == n - 1 { 0.5 * v } else { v };
        }
        acc / (n - 1) as f64
    }

    /// Little-endian binary: `dim: u32, m: u64, dt: f64, seed: u64`, then
    /// `(m + 1) * dim` f64 values.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.steps() as u64).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.states {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header).map_err(|e| Error::Format(format!("header: {e}")))?;
        let dim = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let m = u64::from_le_bytes(header[4..12].try_into().unwrap()) as usize;
        let dt = f64::from_le_bytes(header[12..20].try_into().unwrap());
        let seed = u64::from_le_bytes(header[20..28].try_into().unwrap());
        let count = m
            .checked_add(1)
            .and_then(|c| c.checked_mul(dim))
            .ok_or_else(|| Error::Format("state count overflows".into()))?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != count * 8 {
            return Err(Error::Format(format!("expected {} payload bytes, found {}", count * 8, body.len())));
        }
        let states = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::new(dt, dim, seed, states)
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_binary(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_binary(&mut BufReader::new(File::open(path)?))
    }

    /// CSV with header `t,x1[,x2...]`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dim).map(|j| format!("x{j}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (k, s) in self.states().enumerate() {
            write!(w, "{}", k as f64 * self.dt)?;
            for v in s {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}
