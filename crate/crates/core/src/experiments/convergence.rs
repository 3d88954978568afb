//! Strong convergence measurement on coupled Brownian paths.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrators::{csv_io, step_count, terminal_state, SchemeConfig};
use crate::lie::Parametrization;
use crate::matops::SquareMatrix;
use crate::model::LieSdeModel;
use crate::noise::{coarsen_row, path_increments};

/// Where the reference terminal state comes from.
#[derive(Debug, Clone)]
pub enum Reference {
    /// The tested scheme rerun on the finest grid with this parametrization.
    SameScheme(Parametrization),
    /// A specific configuration on the finest grid.
    Scheme(SchemeConfig),
    /// A known terminal state (deterministic problems only).
    Exact(SquareMatrix),
}

impl Reference {
    fn config_for(&self, tested: &SchemeConfig) -> Option<SchemeConfig> {
        match self {
            Reference::SameScheme(p) => {
                let mut cfg = *tested;
                cfg.param = *p;
                Some(cfg)
            }
            Reference::Scheme(cfg) => Some(*cfg),
            Reference::Exact(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceSetup {
    pub t_end: f64,
    /// Step sizes to test, each a power-of-two multiple of `dt_ref`.
    pub step_sizes: Vec<f64>,
    pub dt_ref: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub reference: Reference,
}

impl ConvergenceSetup {
    /// `M = 200`, `T = 1`, steps `2^-10 .. 2^-6`, reference at `2^-13` with the Cayley map.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            t_end: 1.0,
            step_sizes: (6..=10).rev().map(|l| 2f64.powi(-l)).collect(),
            dt_ref: 2f64.powi(-13),
            n_paths: 200,
            seed,
            reference: Reference::SameScheme(Parametrization::Cayley),
        }
    }

    /// `M = 1000`, steps `2^-14 .. 2^-9`, reference at `2^-16`.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            t_end: 1.0,
            step_sizes: (9..=14).rev().map(|l| 2f64.powi(-l)).collect(),
            dt_ref: 2f64.powi(-16),
            n_paths: 1000,
            seed,
            reference: Reference::SameScheme(Parametrization::Cayley),
        }
    }

    fn factors(&self) -> Result<Vec<usize>> {
        if self.n_paths < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 paths, got {}",
                self.n_paths
            )));
        }
        self.step_sizes
            .iter()
            .map(|&dt| {
                let f = (dt / self.dt_ref).round();
                if f < 1.0 || (f * self.dt_ref - dt).abs() > 1e-12 * dt || !(f as usize).is_power_of_two() {
                    return Err(Error::IncompatibleGrids(format!(
                        "step {dt} is not a power-of-two multiple of reference step {}",
                        self.dt_ref
                    )));
                }
                Ok(f as usize)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub label: String,
    pub scheme: SchemeConfig,
    pub reference: String,
    pub step_sizes: Vec<f64>,
    pub mean_errors: Vec<f64>,
    /// Least-squares slope of `log2 error` against `log2 dt`; needs three or more step sizes.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub t_end: f64,
    pub dt_ref: f64,
}

impl ConvergenceReport {
    /// Writes `dt,mean_error`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["dt", "mean_error"]).map_err(csv_io)?;
        for (dt, e) in self.step_sizes.iter().zip(&self.mean_errors) {
            out.write_record([format!("{dt:e}"), format!("{e:.17e}")])
                .map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Ordinary least squares through `(x, y)` points; returns `(slope, intercept)`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints { needed: 2, got: 1 });
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Runs one study per configuration on a shared set of Brownian paths.
///
/// Each path's fine increments are generated once, the reference solution is
/// computed on them, and every tested step size uses the coarsened path.
pub fn convergence_study_many(
    model: &LieSdeModel,
    configs: &[SchemeConfig],
    setup: &ConvergenceSetup,
) -> Result<Vec<ConvergenceReport>> {
    for cfg in configs {
        cfg.validate()?;
    }
    let factors = setup.factors()?;
    let n_fine = step_count(setup.t_end, setup.dt_ref)?;
    for f in &factors {
        if n_fine % f != 0 {
            return Err(Error::IndivisibleSteps {
                steps: n_fine,
                factor: *f,
            });
        }
    }
    let ref_cfgs: Vec<Option<SchemeConfig>> = configs.iter().map(|c| setup.reference.config_for(c)).collect();
    // distinct reference configurations, solved once per path
    let mut unique_refs: Vec<SchemeConfig> = Vec::new();
    for r in ref_cfgs.iter().flatten() {
        if !unique_refs.contains(r) {
            unique_refs.push(*r);
        }
    }

    // errors[path][config][step]
    let per_path: Vec<Vec<Vec<f64>>> = (0..setup.n_paths as u64)
        .into_par_iter()
        .map(|path| -> Result<Vec<Vec<f64>>> {
            let fine = path_increments(setup.seed, path, setup.dt_ref, n_fine);
            let refs = unique_refs
                .iter()
                .map(|r| terminal_state(model, r, setup.dt_ref, &fine))
                .collect::<Result<Vec<_>>>()?;
            let coarse = factors
                .iter()
                .map(|f| coarsen_row(&fine, *f))
                .collect::<Result<Vec<_>>>()?;
            configs
                .iter()
                .zip(&ref_cfgs)
                .map(|(cfg, rc)| {
                    let q_ref = match (rc, &setup.reference) {
                        (Some(rc), _) => &refs[unique_refs.iter().position(|u| u == rc).expect("collected")],
                        (None, Reference::Exact(q)) => q,
                        (None, _) => unreachable!("only exact references lack a configuration"),
                    };
                    coarse
                        .iter()
                        .zip(&setup.step_sizes)
                        .map(|(row, dt)| {
                            let q = terminal_state(model, cfg, *dt, row)?;
                            Ok((&q - q_ref).frobenius_norm())
                        })
                        .collect()
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let m = setup.n_paths as f64;
    configs
        .iter()
        .enumerate()
        .map(|(ci, cfg)| {
            let mut sums = vec![0.0; setup.step_sizes.len()];
            for path in &per_path {
                for (s, e) in sums.iter_mut().zip(&path[ci]) {
                    *s += e;
                }
            }
            let mean_errors: Vec<f64> = sums.iter().map(|s| s / m).collect();
            let (slope, intercept) = if mean_errors.len() >= 3 && mean_errors.iter().all(|e| *e > 0.0) {
                let pts: Vec<_> = setup
                    .step_sizes
                    .iter()
                    .zip(&mean_errors)
                    .map(|(dt, e)| (dt.log2(), e.log2()))
                    .collect();
                let (s, i) = fit_slope(&pts)?;
                (Some(s), Some(i))
            } else {
                (None, None)
            };
            let reference = match &ref_cfgs[ci] {
                Some(r) => format!("{} {} dt={:e}", r.scheme, r.param, setup.dt_ref),
                None => "exact".to_string(),
            };
            Ok(ConvergenceReport {
                label: format!("{} {}", cfg.scheme, cfg.param),
                scheme: *cfg,
                reference,
                step_sizes: setup.step_sizes.clone(),
                mean_errors,
                slope,
                intercept,
                n_paths: setup.n_paths,
                seed: setup.seed,
                t_end: setup.t_end,
                dt_ref: setup.dt_ref,
            })
        })
        .collect()
}

/// Mean terminal error against the reference for each step size, with fitted slope.
pub fn convergence_study(
    model: &LieSdeModel,
    cfg: &SchemeConfig,
    setup: &ConvergenceSetup,
) -> Result<ConvergenceReport> {
    Ok(convergence_study_many(model, std::slice::from_ref(cfg), setup)?
        .pop()
        .expect("one report per configuration"))
}
