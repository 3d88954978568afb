//! Stochastic free rigid body: a geometric run and a flat Euler-Maruyama run
//! on the same noise.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrators::{csv_io, fmt_f64, simulate_path, Scheme, SchemeConfig, Trajectory};
use crate::lie::Parametrization;
use crate::model::{make_rigid_body_model, rigid_body_default_y0, RIGID_BODY_DEFAULT_INERTIA};
use crate::noise::{path_increments, NoiseIncrement};

/// Distances below this are written as this value on the log scale.
pub const LOG_DRIFT_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, Serialize)]
pub struct RigidBodyConfig {
    pub inertia: [f64; 3],
    pub y0: [f64; 3],
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: SchemeConfig,
    /// Replaces every increment by zero.
    pub zero_noise: bool,
}

impl Default for RigidBodyConfig {
    fn default() -> Self {
        Self {
            inertia: RIGID_BODY_DEFAULT_INERTIA,
            y0: rigid_body_default_y0(),
            dt: 0.03,
            n_steps: 200,
            seed: 0,
            scheme: SchemeConfig::new(Scheme::Gem, Parametrization::Cayley),
            zero_noise: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RigidBodyRun {
    pub geometric: Trajectory,
    pub flat: Trajectory,
}

impl RigidBodyRun {
    /// Writes `step,t,log10_geometric,log10_flat`.
    pub fn write_drift_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "t", "log10_geometric", "log10_flat"])
            .map_err(csv_io)?;
        let log = |d: f64| d.max(LOG_DRIFT_FLOOR).log10();
        for (j, t) in self.geometric.times.iter().enumerate() {
            out.write_record([
                j.to_string(),
                fmt_f64(*t),
                fmt_f64(log(self.geometric.drift_series[j])),
                fmt_f64(log(self.flat.drift_series[j])),
            ])
            .map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn rigid_body_run(config: &RigidBodyConfig) -> Result<RigidBodyRun> {
    if config.n_steps == 0 {
        return Err(Error::InvalidConfig("rigid body run needs at least one step".into()));
    }
    if config.scheme.scheme == Scheme::FlatEm {
        return Err(Error::InvalidConfig(
            "the geometric run needs a geometric scheme; the flat run is always included".into(),
        ));
    }
    let model = make_rigid_body_model(config.inertia, config.y0)?;
    let row = if config.zero_noise {
        vec![NoiseIncrement::zero(config.dt); config.n_steps]
    } else {
        path_increments(config.seed, 0, config.dt, config.n_steps)
    };
    let t_end = config.dt * config.n_steps as f64;
    let geometric = simulate_path(&model, &config.scheme, t_end, config.dt, &row)?;
    let flat_cfg = SchemeConfig::new(Scheme::FlatEm, config.scheme.param);
    let flat = simulate_path(&model, &flat_cfg, t_end, config.dt, &row)?;
    Ok(RigidBodyRun { geometric, flat })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm_defect(y: &[f64; 3]) -> f64 {
        (y.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs()
    }

    #[test]
    fn geometric_run_stays_on_sphere() {
        for seed in 0..5 {
            let run = rigid_body_run(&RigidBodyConfig {
                seed,
                ..Default::default()
            })
            .unwrap();
            let c = run.geometric.carrier.as_ref().unwrap();
            assert_eq!(c.len(), 201);
            assert!(c.iter().map(norm_defect).fold(0.0, f64::max) <= 1e-10);
            assert!(run.flat.max_drift() > 0.0);
        }
    }

    #[test]
    fn flat_run_leaves_sphere_for_most_seeds() {
        let leaving = (0..50)
            .filter(|&seed| {
                let run = rigid_body_run(&RigidBodyConfig {
                    seed,
                    ..Default::default()
                })
                .unwrap();
                run.flat.max_drift() > 1e-3
            })
            .count();
        assert!(leaving >= 45, "{leaving} of 50");
    }

    #[test]
    fn zero_noise_conserves_norm() {
        let cfg = RigidBodyConfig {
            zero_noise: true,
            ..Default::default()
        };
        let run = rigid_body_run(&cfg).unwrap();
        assert!(run.geometric.max_drift() <= 1e-12);
        // The flat map loses O(dt) of norm per unit time through the Ito drift.
        let first = run.flat.drift_series[1];
        assert!(first > 0.0 && first <= cfg.dt);
        assert!(run.flat.max_drift() <= cfg.dt * cfg.n_steps as f64);
    }

    #[test]
    fn both_runs_share_noise() {
        let cfg = RigidBodyConfig {
            seed: 3,
            n_steps: 1,
            ..Default::default()
        };
        let run = rigid_body_run(&cfg).unwrap();
        // One step from the identity agrees to second order in the increment.
        let d = (run.geometric.terminal() - run.flat.terminal()).frobenius_norm();
        assert!(d < 0.05, "{d}");
    }

    #[test]
    fn drift_csv_floors_logs() {
        let run = rigid_body_run(&RigidBodyConfig::default()).unwrap();
        let mut buf = Vec::new();
        run.write_drift_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,t,log10_geometric,log10_flat"));
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(first[2], -20.0);
        assert_eq!(text.lines().count(), 202);
    }

    #[test]
    fn rejects_flat_geometric_scheme() {
        let cfg = RigidBodyConfig {
            scheme: SchemeConfig::new(Scheme::FlatEm, Parametrization::Cayley),
            ..Default::default()
        };
        assert!(matches!(rigid_body_run(&cfg), Err(Error::InvalidConfig(_))));
    }
}
