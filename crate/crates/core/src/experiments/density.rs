//! Gaussian kernel density estimates and the scalar calibration search.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrators::csv_io;

pub const MIN_KDE_SAMPLES: usize = 10;
/// Bandwidth used when every sample coincides.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    /// `L2` distance to another estimate on the same grid.
    pub fn l2_distance(&self, other: &DensityEstimate) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::IncompatibleGrids("densities live on different grids".into()));
        }
        let sq: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).powi(2))
            .collect();
        Ok(trapezoid(&self.grid, &sq).sqrt())
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// `n` equally spaced points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && hi > lo, "grid needs two points and hi > lo");
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * h })
        .collect()
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^(-1/5)`, falling back to the
/// standard deviation when the IQR vanishes and to [`BANDWIDTH_FLOOR`] when both do.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        _ => return BANDWIDTH_FLOOR,
    };
    (0.9 * spread * n.powf(-0.2)).max(f64::MIN_POSITIVE)
}

fn finite_samples(samples: &[f64]) -> Result<Vec<f64>> {
    let xs: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    if xs.len() < MIN_KDE_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_KDE_SAMPLES,
            got: xs.len(),
        });
    }
    Ok(xs)
}

/// Kernel contributions beyond this many bandwidths are dropped (below `e^-32`).
const KERNEL_CUTOFF: f64 = 8.0;

fn evaluate(centres: &mut [f64], weight: f64, h: f64, grid: &[f64]) -> Vec<f64> {
    centres.sort_by(f64::total_cmp);
    let norm = weight / (h * (2.0 * std::f64::consts::PI).sqrt());
    let reach = KERNEL_CUTOFF * h;
    grid.iter()
        .map(|x| {
            let lo = centres.partition_point(|c| *c < x - reach);
            let hi = centres.partition_point(|c| *c <= x + reach);
            centres[lo..hi]
                .iter()
                .map(|c| {
                    let u = (x - c) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect()
}

/// Gaussian kernel density estimate on `grid`. Non-finite samples are skipped.
pub fn kde(samples: &[f64], grid: &[f64]) -> Result<DensityEstimate> {
    let mut xs = finite_samples(samples)?;
    let h = silverman_bandwidth(&xs);
    let weight = 1.0 / xs.len() as f64;
    let values = evaluate(&mut xs, weight, h, grid);
    Ok(DensityEstimate {
        grid: grid.to_vec(),
        values,
        bandwidth: h,
    })
}

/// Like [`kde`] but reflects kernel mass at the edges of `[lo, hi]` so the
/// estimate integrates to one on that interval.
pub fn kde_reflected(samples: &[f64], grid: &[f64], lo: f64, hi: f64) -> Result<DensityEstimate> {
    let xs = finite_samples(samples)?;
    let h = silverman_bandwidth(&xs);
    let mut centres = Vec::with_capacity(3 * xs.len());
    for x in &xs {
        centres.extend([*x, 2.0 * lo - x, 2.0 * hi - x]);
    }
    let values = evaluate(&mut centres, 1.0 / xs.len() as f64, h, grid);
    Ok(DensityEstimate {
        grid: grid.to_vec(),
        values,
        bandwidth: h,
    })
}

/// Writes `x,<name>...` columns for densities sharing one grid.
pub fn write_density_csv<W: Write>(w: W, columns: &[(&str, &DensityEstimate)]) -> Result<()> {
    let grid = &columns
        .first()
        .ok_or_else(|| Error::InvalidConfig("no densities to write".into()))?
        .1
        .grid;
    if columns.iter().any(|(_, d)| &d.grid != grid) {
        return Err(Error::IncompatibleGrids("densities live on different grids".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["x".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    out.write_record(&header).map_err(csv_io)?;
    for (i, x) in grid.iter().enumerate() {
        let mut rec = vec![format!("{x:.6}")];
        rec.extend(columns.iter().map(|(_, d)| format!("{:.10e}", d.values[i])));
        out.write_record(&rec).map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub parameter: f64,
    pub distance: f64,
    /// Every `(parameter, distance)` probe in evaluation order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Golden-section search for the parameter whose density is closest in `L2`
/// to `target`. `objective` maps a parameter to its density on the target grid.
/// Uses at most `budget` evaluations and returns the best probe.
pub fn calibrate(
    target: &DensityEstimate,
    mut objective: impl FnMut(f64) -> Result<DensityEstimate>,
    bounds: (f64, f64),
    budget: usize,
) -> Result<CalibrationResult> {
    let (mut a, mut b) = bounds;
    if a.is_nan() || b.is_nan() || a >= b || budget == 0 {
        return Err(Error::InvalidConfig(format!(
            "calibration needs lo < hi and a positive budget, got {bounds:?} and {budget}"
        )));
    }
    let mut evaluations = Vec::with_capacity(budget);
    let mut eval = |c: f64, log: &mut Vec<(f64, f64)>| -> Result<f64> {
        let d = target.l2_distance(&objective(c)?)?;
        log.push((c, d));
        Ok(d)
    };
    if budget == 1 {
        let c = 0.5 * (a + b);
        let d = eval(c, &mut evaluations)?;
        return Ok(CalibrationResult {
            parameter: c,
            distance: d,
            evaluations,
        });
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = eval(x1, &mut evaluations)?;
    let mut f2 = eval(x2, &mut evaluations)?;
    while evaluations.len() < budget {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1, &mut evaluations)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2, &mut evaluations)?;
        }
    }
    let (parameter, distance) = evaluations
        .iter()
        .copied()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .expect("at least one evaluation");
    Ok(CalibrationResult {
        parameter,
        distance,
        evaluations,
    })
}
