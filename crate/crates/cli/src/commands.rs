use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use liesde::experiments::correlation::{
    correlation_matrix, load_prices_csv, rolling_correlation, so2_flow_samples, synthetic_gbm_pair,
    write_correlation_csv, CorrelationFlowConfig, GbmPairConfig,
};
use liesde::experiments::density::{calibrate, kde_reflected, uniform_grid, write_density_csv};
use liesde::experiments::{convergence_study, rigid_body_run, ConvergenceSetup, Reference, RigidBodyConfig};
use liesde::integrators::{advance, algebra_step, manifold_distance};
use liesde::lie::{dpsi_inv, dpsi_inv_d1, dpsi_inv_d2, son_generators};
use liesde::model::{model_by_name, rigid_body_default_y0, RIGID_BODY_DEFAULT_INERTIA};
use liesde::noise::{path_increments, NormalStream};
use liesde::{Error, Parametrization, Result, Scheme, SchemeConfig, SquareMatrix};
use serde::Serialize;
use serde_json::json;

use crate::args::{
    parametrization, ConvergenceArgs, CorrFlowArgs, ParamArg, RigidBodyArgs, SchemeArg, SchemeArgs, StepCheckArgs,
    INTERFACE_VERSION,
};

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    interface: u32,
    subcommand: &'a str,
    config: &'a C,
    outputs: &'a [&'a str],
}

fn write_manifest<C: Serialize>(out: &Path, subcommand: &str, config: &C, outputs: &[&str]) -> Result<()> {
    let manifest = RunManifest {
        tool: "liesde",
        version: env!("CARGO_PKG_VERSION"),
        interface: INTERFACE_VERSION,
        subcommand,
        config,
        outputs,
    };
    write_json(&out.join("manifest.json"), &manifest)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn prepare_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn scheme_config(args: &SchemeArgs, scheme: SchemeArg, param: ParamArg) -> SchemeConfig {
    let scheme = args.scheme.unwrap_or(scheme);
    let param = args.param.unwrap_or(param);
    SchemeConfig::new(scheme.into(), parametrization(param, args.q)).allowing_underresolved(args.allow_underresolved)
}

pub fn convergence(args: &ConvergenceArgs) -> Result<()> {
    let cfg = scheme_config(&args.scheme, SchemeArg::Gem, ParamArg::Cay);
    cfg.validate()?;
    let model = model_by_name(&args.model)?;
    let mut setup = if args.full_scale {
        ConvergenceSetup::full_scale(args.seed)
    } else {
        ConvergenceSetup::desk_scale(args.seed)
    };
    setup.t_end = args.t_end;
    if !args.dt.is_empty() {
        setup.step_sizes = args.dt.clone();
    }
    if let Some(dt_ref) = args.dt_ref {
        setup.dt_ref = dt_ref;
    }
    if let Some(m) = args.paths {
        setup.n_paths = m;
    }
    let reference_param = parametrization(args.reference_param, args.scheme.q);
    setup.reference = Reference::SameScheme(reference_param);

    let report = convergence_study(&model, &cfg, &setup)?;
    prepare_dir(&args.out)?;
    report.write_csv(create(&args.out.join("convergence.csv"))?)?;
    let resolved = json!({
        "model": args.model,
        "scheme": cfg,
        "reference_param": reference_param,
        "step_sizes": setup.step_sizes,
        "dt_ref": setup.dt_ref,
        "t_end": setup.t_end,
        "n_paths": setup.n_paths,
        "seed": setup.seed,
    });
    write_json(
        &args.out.join("report.json"),
        &json!({ "config": resolved, "result": report }),
    )?;
    write_manifest(&args.out, "convergence", &resolved, &["convergence.csv", "report.json"])?;
    match report.slope {
        Some(s) => println!(
            "{} {}: slope {s:.4} over {} paths",
            cfg.scheme, cfg.param, setup.n_paths
        ),
        None => println!("{} {}: fewer than three step sizes, no slope", cfg.scheme, cfg.param),
    }
    Ok(())
}

fn triple(v: &[f64], default: [f64; 3]) -> [f64; 3] {
    match v {
        [a, b, c] => [*a, *b, *c],
        _ => default,
    }
}

pub fn rigid_body(args: &RigidBodyArgs) -> Result<()> {
    let config = RigidBodyConfig {
        inertia: triple(&args.inertia, RIGID_BODY_DEFAULT_INERTIA),
        y0: triple(&args.y0, rigid_body_default_y0()),
        dt: args.dt,
        n_steps: args.steps,
        seed: args.seed,
        scheme: scheme_config(&args.scheme, SchemeArg::Gem, ParamArg::Cay),
        zero_noise: args.zero_noise,
    };
    config.scheme.validate()?;
    let run = rigid_body_run(&config)?;
    prepare_dir(&args.out)?;
    run.geometric
        .write_csv(create(&args.out.join("trajectory_geometric.csv"))?, None, true)?;
    run.flat
        .write_csv(create(&args.out.join("trajectory_flat.csv"))?, None, true)?;
    run.write_drift_csv(create(&args.out.join("drift.csv"))?)?;
    write_manifest(
        &args.out,
        "rigid-body",
        &config,
        &["trajectory_geometric.csv", "trajectory_flat.csv", "drift.csv"],
    )?;
    println!(
        "max distance from the sphere: geometric {:.3e}, flat {:.3e}",
        run.geometric.max_drift(),
        run.flat.max_drift()
    );
    Ok(())
}

pub fn corr_flow(args: &CorrFlowArgs) -> Result<()> {
    let scheme = scheme_config(&args.scheme, SchemeArg::Gsrk15, ParamArg::Exp);
    scheme.validate()?;
    if args.grid_points < 2 {
        return Err(Error::InvalidConfig("grid needs at least two points".into()));
    }
    prepare_dir(&args.out)?;
    let mut outputs = vec!["correlation.csv", "density.csv", "report.json"];
    let (prices, gbm) = match &args.input_csv {
        Some(path) => (load_prices_csv(path)?, None),
        None => {
            let gbm = GbmPairConfig {
                n_days: args.synthetic_days,
                correlation: args.synthetic_correlation,
                seed: args.seed,
                ..Default::default()
            };
            let prices = synthetic_gbm_pair(&gbm)?;
            prices.write_csv(create(&args.out.join("prices.csv"))?)?;
            outputs.push("prices.csv");
            (prices, Some(gbm))
        }
    };
    let rolling = rolling_correlation(&prices.a, &prices.b, args.window)?;
    write_correlation_csv(create(&args.out.join("correlation.csv"))?, &rolling)?;
    let hist_samples: Vec<f64> = rolling.iter().flatten().copied().collect();
    let grid = uniform_grid(-1.0, 1.0, args.grid_points);
    let hist = kde_reflected(&hist_samples, &grid, -1.0, 1.0)?;

    let r0_value = match args.r0 {
        Some(r) => r,
        None => rolling
            .iter()
            .flatten()
            .copied()
            .next()
            .ok_or_else(|| Error::InvalidConfig("every rolling window is degenerate".into()))?,
    };
    let r0 = correlation_matrix(r0_value)?;
    let flow = CorrelationFlowConfig {
        scheme,
        t_end: args.t_end,
        dt: args.dt,
        n_paths: args.paths,
        seed: args.seed,
        variance_ratio: args.variance_ratio,
    };
    let bounds = (args.bounds[0], args.bounds[1]);
    let fit = calibrate(
        &hist,
        |c| kde_reflected(&so2_flow_samples(c, &r0, &flow)?, &grid, -1.0, 1.0),
        bounds,
        args.budget,
    )?;
    let model = kde_reflected(&so2_flow_samples(fit.parameter, &r0, &flow)?, &grid, -1.0, 1.0)?;
    write_density_csv(
        create(&args.out.join("density.csv"))?,
        &[("hist", &hist), ("model", &model)],
    )?;

    let resolved = json!({
        "input_csv": args.input_csv,
        "synthetic": gbm,
        "window": args.window,
        "r0": r0_value,
        "flow": flow,
        "bounds": args.bounds,
        "budget": args.budget,
        "grid_points": args.grid_points,
    });
    let result = json!({
        "amplitude": fit.parameter,
        "l2_distance": fit.distance,
        "evaluations": fit.evaluations,
        "hist_samples": hist_samples.len(),
        "hist_bandwidth": hist.bandwidth,
        "model_bandwidth": model.bandwidth,
    });
    write_json(
        &args.out.join("report.json"),
        &json!({ "config": resolved, "result": result }),
    )?;
    write_manifest(&args.out, "corr-flow", &resolved, &outputs)?;
    println!(
        "calibrated amplitude {:.4} (L2 distance {:.4e}, r0 {r0_value:.4})",
        fit.parameter, fit.distance
    );
    Ok(())
}

fn fd_check(p: Parametrization, s: &mut NormalStream, n: usize) -> Result<(f64, f64)> {
    let g = son_generators(n)?;
    let mut random = |scale: f64| {
        let mut m = SquareMatrix::zeros(n);
        for gi in &g {
            m.add_scaled(scale * s.next_normal(), gi);
        }
        m
    };
    let (om, h, x) = (random(0.1), random(1.0), random(1.0));
    let p = match p {
        Parametrization::Exponential { .. } => Parametrization::Exponential { q: 4 },
        other => other,
    };
    let at = |eps: f64| -> Result<SquareMatrix> {
        let mut o = om.clone();
        o.add_scaled(eps, &x);
        dpsi_inv(p, &o, &h)
    };
    let e1 = 1e-5;
    let first = (&at(e1)? - &at(-e1)?).scale(0.5 / e1);
    let e2 = 1e-3;
    let mut second = &at(e2)? + &at(-e2)?;
    second.add_scaled(-2.0, &at(0.0)?);
    let second = second.scale(1.0 / (e2 * e2));
    let d1 = (&dpsi_inv_d1(p, &om, &h, &x)? - &first).frobenius_norm();
    let d2 = (&dpsi_inv_d2(p, &om, &h, &x)? - &second).frobenius_norm();
    Ok((d1, d2))
}

pub fn step_check(args: &StepCheckArgs) -> Result<()> {
    let cfg = scheme_config(&args.scheme, SchemeArg::Gsrk15, ParamArg::Exp);
    cfg.validate()?;
    let model = model_by_name(&args.model)?;
    let inc = path_increments(args.seed, 0, args.dt, 1)[0];
    let q0 = SquareMatrix::identity(model.dim);
    let q1 = advance(&model, &cfg, args.t, &q0, &inc).map_err(|e| Error::StepFailure {
        step: 0,
        source: Box::new(e),
    })?;
    let mut report = json!({
        "model": args.model,
        "scheme": cfg,
        "t": args.t,
        "increment": inc,
        "state": q1.as_slice(),
        "manifold_distance": manifold_distance(&q1, &model.group),
    });
    if cfg.scheme.is_geometric() {
        let omega = algebra_step(&model, &cfg, args.t, &q0, &inc)?;
        report["omega_norm"] = json!(omega.frobenius_norm());
        if !model.is_state_dependent() && cfg.scheme != Scheme::Gem {
            let other = if cfg.scheme == Scheme::Git15 {
                Scheme::Gsrk15
            } else {
                Scheme::Git15
            };
            let alt = SchemeConfig { scheme: other, ..cfg };
            let alt_omega = algebra_step(&model, &alt, args.t, &q0, &inc)?;
            report["git15_gsrk15_gap"] = json!((&omega - &alt_omega).frobenius_norm());
        }
        let mut s = NormalStream::new(args.seed, 1);
        let (d1, d2) = fd_check(cfg.param, &mut s, model.dim)?;
        report["first_derivative_fd_error"] = json!(d1);
        report["second_derivative_fd_error"] = json!(d2);
    }
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &report).map_err(|e| Error::Io(e.into()))?;
    writeln!(stdout)?;
    Ok(())
}
