//! Brownian increments `(dW, dZ)` with `dZ = int (W_s - W_t) ds` over a step.
//!
//! Each path draws from its own ChaCha20 stream (same key, stream id = path
//! index), so rows can be generated independently and in parallel.

use std::io::{Read, Write};

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const TABLE_MAGIC: &[u8; 4] = b"LSDE";
pub const TABLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseIncrement {
    pub dw: f64,
    pub dz: f64,
    pub dt: f64,
}

impl NoiseIncrement {
    /// `dW = u1 sqrt(dt)`, `dZ = dt (dW + u2 sqrt(dt/3)) / 2` for independent standard normals.
    pub fn from_normals(u1: f64, u2: f64, dt: f64) -> Self {
        let dw = u1 * dt.sqrt();
        let dz = 0.5 * dt * (dw + u2 * (dt / 3.0).sqrt());
        Self { dw, dz, dt }
    }

    pub fn zero(dt: f64) -> Self {
        Self { dw: 0.0, dz: 0.0, dt }
    }
}

/// Joins two consecutive increments into one over the union interval.
pub fn aggregate(first: NoiseIncrement, second: NoiseIncrement) -> NoiseIncrement {
    NoiseIncrement {
        dw: first.dw + second.dw,
        dz: first.dz + second.dz + second.dt * first.dw,
        dt: first.dt + second.dt,
    }
}

/// Standard normal variates from a counter-based stream by inverse-CDF transform.
pub struct NormalStream {
    rng: ChaCha20Rng,
    normal: Normal,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            normal: Normal::standard(),
        }
    }

    /// Uniform in the open interval (0, 1) with 53 random bits.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        let u = self.next_uniform();
        self.normal.inverse_cdf(u)
    }
}

/// Draws one increment of length `dt > 0`.
pub fn sample_increment(stream: &mut NormalStream, dt: f64) -> NoiseIncrement {
    let u1 = stream.next_normal();
    let u2 = stream.next_normal();
    NoiseIncrement::from_normals(u1, u2, dt)
}

/// The `n_steps` increments of path `path` under `seed`.
pub fn path_increments(seed: u64, path: u64, dt: f64, n_steps: usize) -> Vec<NoiseIncrement> {
    let mut stream = NormalStream::new(seed, path);
    (0..n_steps).map(|_| sample_increment(&mut stream, dt)).collect()
}

/// Folds consecutive groups of `factor` increments. Power-of-two factors are
/// folded pairwise, so coarsening by 4 equals coarsening by 2 twice.
pub fn coarsen_row(row: &[NoiseIncrement], factor: usize) -> Result<Vec<NoiseIncrement>> {
    if factor == 0 || !row.len().is_multiple_of(factor) {
        return Err(Error::IndivisibleSteps {
            steps: row.len(),
            factor,
        });
    }
    if factor.is_power_of_two() {
        let mut cur = row.to_vec();
        let mut f = factor;
        while f > 1 {
            cur = cur.chunks_exact(2).map(|p| aggregate(p[0], p[1])).collect();
            f /= 2;
        }
        return Ok(cur);
    }
    Ok(row
        .chunks_exact(factor)
        .map(|c| c[1..].iter().fold(c[0], |acc, x| aggregate(acc, *x)))
        .collect())
}

/// Per-path increments on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianTable {
    pub seed: u64,
    pub dt: f64,
    pub n_steps: usize,
    rows: Vec<Vec<NoiseIncrement>>,
}

impl BrownianTable {
    pub fn build(seed: u64, dt_fine: f64, n_steps: usize, n_paths: usize) -> Result<Self> {
        if !(dt_fine > 0.0 && dt_fine.is_finite()) {
            return Err(Error::ZeroStepSize(dt_fine));
        }
        let rows = (0..n_paths as u64)
            .into_par_iter()
            .map(|p| path_increments(seed, p, dt_fine, n_steps))
            .collect();
        Ok(Self {
            seed,
            dt: dt_fine,
            n_steps,
            rows,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, path: usize) -> &[NoiseIncrement] {
        &self.rows[path]
    }

    pub fn rows(&self) -> &[Vec<NoiseIncrement>] {
        &self.rows
    }

    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let rows = self
            .rows
            .iter()
            .map(|r| coarsen_row(r, factor))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            seed: self.seed,
            dt: self.dt * factor as f64,
            n_steps: self.n_steps / factor,
            rows,
        })
    }

    /// Little-endian dump: magic, version, seed, n_paths, n_steps, dt, then `(dW, dZ)` pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&TABLE_VERSION.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.n_paths() as u64).to_le_bytes())?;
        w.write_all(&(self.n_steps as u64).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        for row in &self.rows {
            for inc in row {
                w.write_all(&inc.dw.to_le_bytes())?;
                w.write_all(&inc.dz.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != TABLE_MAGIC {
            return Err(Error::MalformedTable("bad magic".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != TABLE_VERSION {
            return Err(Error::MalformedTable(format!("unsupported version {version}")));
        }
        let seed = u64::from_le_bytes(read_array(&mut r)?);
        let n_paths = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let n_steps = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let dt = f64::from_le_bytes(read_array(&mut r)?);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::MalformedTable(format!("invalid step size {dt}")));
        }
        let mut rows = Vec::with_capacity(n_paths);
        for _ in 0..n_paths {
            let mut row = Vec::with_capacity(n_steps);
            for _ in 0..n_steps {
                let dw = f64::from_le_bytes(read_array(&mut r)?);
                let dz = f64::from_le_bytes(read_array(&mut r)?);
                row.push(NoiseIncrement { dw, dz, dt });
            }
            rows.push(row);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::MalformedTable("trailing bytes".into()));
        }
        Ok(Self {
            seed,
            dt,
            n_steps,
            rows,
        })
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::MalformedTable("truncated".into())
        } else {
            Error::Io(e)
        }
    })?;
    Ok(buf)
}
