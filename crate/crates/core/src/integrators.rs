//! One-step methods for the algebra equation, projection onto the group, and
//! path simulation.
//!
//! Every step restarts the algebra variable at zero, computes `Omega_1` with
//! one of the schemes below and maps it back with `psi`.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{psi_apply, GroupDescriptor, Parametrization, MAX_TRUNCATION};
use crate::matops::SquareMatrix;
use crate::model::{algebra_coefficients, AlgebraCoefficients, CoefficientOptions, LieSdeModel, Side};
use crate::noise::NoiseIncrement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Geometric Euler-Maruyama.
    Gem,
    /// Geometric Itô-Taylor, strong order 1.5.
    Git15,
    /// Geometric stochastic Runge-Kutta, strong order 1.5.
    Gsrk15,
    /// Euler-Maruyama on the matrix equation itself, no projection.
    FlatEm,
}

impl Scheme {
    pub fn strong_order(self) -> f64 {
        match self {
            Scheme::Gem | Scheme::FlatEm => 1.0,
            Scheme::Git15 | Scheme::Gsrk15 => 1.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Gem => "gem",
            Scheme::Git15 => "git15",
            Scheme::Gsrk15 => "gsrk15",
            Scheme::FlatEm => "em",
        }
    }

    pub fn is_geometric(self) -> bool {
        self != Scheme::FlatEm
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gem" => Ok(Scheme::Gem),
            "git15" => Ok(Scheme::Git15),
            "gsrk15" => Ok(Scheme::Gsrk15),
            "em" => Ok(Scheme::FlatEm),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheme `{other}` (expected gem, git15, gsrk15 or em)"
            ))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub param: Parametrization,
    pub options: CoefficientOptions,
    /// Permit a truncation index below `2 * order - 2`.
    pub allow_underresolved: bool,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, param: Parametrization) -> Self {
        Self {
            scheme,
            param,
            options: CoefficientOptions::default(),
            allow_underresolved: false,
        }
    }

    pub fn with_options(mut self, options: CoefficientOptions) -> Self {
        self.options = options;
        self
    }

    pub fn allowing_underresolved(mut self, allow: bool) -> Self {
        self.allow_underresolved = allow;
        self
    }

    pub fn strong_order(&self) -> f64 {
        self.scheme.strong_order()
    }

    pub fn validate(&self) -> Result<()> {
        if let Parametrization::Exponential { q } = self.param {
            if q > MAX_TRUNCATION {
                return Err(Error::InvalidConfig(format!(
                    "truncation index {q} exceeds {MAX_TRUNCATION}"
                )));
            }
            let gamma = self.strong_order();
            if self.scheme.is_geometric() && (q as f64) < 2.0 * gamma - 2.0 && !self.allow_underresolved {
                return Err(Error::Underresolved { q, gamma });
            }
        }
        Ok(())
    }
}

/// Drift and diffusion of the algebra equation as seen by a one-step method.
/// `offset` is the stage time relative to the left endpoint.
pub trait AlgebraField {
    fn dim(&self) -> usize;
    fn drift(&self, omega: &SquareMatrix, offset: f64) -> Result<SquareMatrix>;
    fn diffusion(&self, omega: &SquareMatrix, offset: f64) -> Result<SquareMatrix>;
}

impl AlgebraField for AlgebraCoefficients<'_> {
    fn dim(&self) -> usize {
        AlgebraCoefficients::dim(self)
    }
    fn drift(&self, omega: &SquareMatrix, offset: f64) -> Result<SquareMatrix> {
        AlgebraCoefficients::drift(self, omega, offset)
    }
    fn diffusion(&self, omega: &SquareMatrix, offset: f64) -> Result<SquareMatrix> {
        AlgebraCoefficients::diffusion(self, omega, offset)
    }
}

/// Coefficients that ignore both `Omega` and time.
#[derive(Debug, Clone)]
pub struct ConstantField {
    pub drift: SquareMatrix,
    pub diffusion: SquareMatrix,
}

impl AlgebraField for ConstantField {
    fn dim(&self) -> usize {
        self.drift.dim()
    }
    fn drift(&self, _: &SquareMatrix, _: f64) -> Result<SquareMatrix> {
        Ok(self.drift.clone())
    }
    fn diffusion(&self, _: &SquareMatrix, _: f64) -> Result<SquareMatrix> {
        Ok(self.diffusion.clone())
    }
}

/// `Omega_1 = A(0) dt + Gamma(0) dW`.
pub fn step_gem<F: AlgebraField + ?Sized>(field: &F, inc: &NoiseIncrement) -> Result<SquareMatrix> {
    let z = SquareMatrix::zeros(field.dim());
    let mut out = field.drift(&z, 0.0)?.scale(inc.dt);
    out.add_scaled(inc.dw, &field.diffusion(&z, 0.0)?);
    Ok(out)
}

/// Itô-Taylor step of strong order 1.5 with derivatives taken at the origin.
pub fn step_git15(coeffs: &AlgebraCoefficients<'_>, inc: &NoiseIncrement) -> Result<SquareMatrix> {
    let t = coeffs.taylor_terms()?;
    let (dt, dw, dz) = (inc.dt, inc.dw, inc.dz);
    let mut out = t.a.scale(dt);
    out.add_scaled(dw, &t.gamma);
    out.add_scaled(0.5 * (dw * dw - dt), &t.dgamma_gamma);
    out.add_scaled(dz, &t.da_gamma);

    let mut l0_a = t.da_a;
    l0_a.add_scaled(0.5, &t.d2a_gamma);
    l0_a += &t.a_rate;
    out.add_scaled(0.5 * dt * dt, &l0_a);

    let mut l0_gamma = t.dgamma_a;
    l0_gamma.add_scaled(0.5, &t.d2gamma_gamma);
    l0_gamma += &t.gamma_rate;
    out.add_scaled(dw * dt - dz, &l0_gamma);

    out.add_scaled(0.5 * (dw * dw / 3.0 - dt) * dw, &t.d_dgamma_gamma_gamma);
    Ok(out)
}

// Stochastic Runge-Kutta tableau of strong order 1.5 for scalar noise.
const DRIFT_WEIGHTS: [f64; 2] = [1.0 / 3.0, 2.0 / 3.0];
const W_WEIGHTS: [f64; 4] = [13.0 / 4.0, -9.0 / 4.0, -9.0 / 4.0, 9.0 / 4.0];
const WW_WEIGHTS: [f64; 4] = [-15.0 / 4.0, 15.0 / 4.0, 3.0 / 4.0, -3.0 / 4.0];
const Z_WEIGHTS: [f64; 4] = [-9.0 / 4.0, 9.0 / 4.0, 9.0 / 4.0, -9.0 / 4.0];
const WWW_WEIGHTS: [f64; 4] = [6.0, -9.0, 0.0, 3.0];
const DIFFUSION_NODES: [f64; 4] = [0.0, 1.0 / 9.0, -2.0 / 9.0, 1.0 / 3.0];
const DRIFT_NODE: f64 = 0.75;

/// Derivative-free stochastic Runge-Kutta step of strong order 1.5.
pub fn step_gsrk15<F: AlgebraField + ?Sized>(field: &F, inc: &NoiseIncrement) -> Result<SquareMatrix> {
    let (dt, dw, dz) = (inc.dt, inc.dw, inc.dz);
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::ZeroStepSize(dt));
    }
    let sq = dt.sqrt();
    let z = SquareMatrix::zeros(field.dim());

    let a1 = field.drift(&z, 0.0)?;
    let g1 = field.diffusion(&z, 0.0)?;

    let mut h2 = a1.scale(0.75 * dt);
    h2.add_scaled(1.5 * dz / dt, &g1);
    let a2 = field.drift(&h2, DRIFT_NODE * dt)?;

    let mut ht2 = a1.scale(dt / 9.0);
    ht2.add_scaled(sq / 3.0, &g1);
    let g2 = field.diffusion(&ht2, DIFFUSION_NODES[1] * dt)?;

    let mut ht3 = a1.scale(-5.0 / 9.0 * dt);
    ht3.add_scaled(dt / 3.0, &a2);
    ht3.add_scaled(-sq / 3.0, &g1);
    ht3.add_scaled(sq, &g2);
    let g3 = field.diffusion(&ht3, DIFFUSION_NODES[2] * dt)?;

    // the third drift stage sits at the origin, so A(H_3) = A(H_1)
    let mut ht4 = a2.scale(dt / 3.0);
    ht4.add_scaled(sq, &(&(&g1 - &g2) + &g3));
    let g4 = field.diffusion(&ht4, DIFFUSION_NODES[3] * dt)?;

    let gs = [&g1, &g2, &g3, &g4];
    let mut out = a1.scale(DRIFT_WEIGHTS[0] * dt);
    out.add_scaled(DRIFT_WEIGHTS[1] * dt, &a2);
    let factors = [
        (W_WEIGHTS, dw),
        (WW_WEIGHTS, (dw * dw - dt) / (2.0 * sq)),
        (Z_WEIGHTS, dz / dt),
        (WWW_WEIGHTS, (dw * dw - 3.0 * dt) * dw / (6.0 * dt)),
    ];
    for (weights, factor) in factors {
        for (w, g) in weights.iter().zip(gs) {
            if *w != 0.0 {
                out.add_scaled(w * factor, g);
            }
        }
    }
    Ok(out)
}

/// Euler-Maruyama on the group equation directly; the result leaves the group.
pub fn step_flat_em(model: &LieSdeModel, t: f64, q: &SquareMatrix, inc: &NoiseIncrement) -> SquareMatrix {
    let k = model.drift(t, q);
    let v = model.diffusion(t, q);
    let (qk, qv) = match model.side {
        Side::Left => (q * &k, q * &v),
        Side::Right => (&k * q, &v * q),
    };
    let mut out = q.clone();
    out.add_scaled(inc.dt, &qk);
    out.add_scaled(inc.dw, &qv);
    out
}

/// Distance of `q` from the model's manifold.
pub fn manifold_distance(q: &SquareMatrix, group: &GroupDescriptor) -> f64 {
    match group {
        GroupDescriptor::SpecialOrthogonal { .. } => GroupDescriptor::orthogonality_defect(q),
        GroupDescriptor::UnitSphereCarrier { y0 } => {
            let y = q.mul_vec(y0);
            (y.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs()
        }
    }
}

/// The algebra increment `Omega_1` of one geometric step from `(t, q)`.
pub fn algebra_step(
    model: &LieSdeModel,
    cfg: &SchemeConfig,
    t: f64,
    q: &SquareMatrix,
    inc: &NoiseIncrement,
) -> Result<SquareMatrix> {
    let coeffs = algebra_coefficients(model, cfg.param, cfg.options, t, q);
    match cfg.scheme {
        Scheme::Gem => step_gem(&coeffs, inc),
        Scheme::Git15 => step_git15(&coeffs, inc),
        Scheme::Gsrk15 => step_gsrk15(&coeffs, inc),
        Scheme::FlatEm => Err(Error::Unsupported("flat Euler-Maruyama has no algebra step".into())),
    }
}

/// Advances the group state by one step.
pub fn advance(
    model: &LieSdeModel,
    cfg: &SchemeConfig,
    t: f64,
    q: &SquareMatrix,
    inc: &NoiseIncrement,
) -> Result<SquareMatrix> {
    if cfg.scheme == Scheme::FlatEm {
        return Ok(step_flat_em(model, t, q, inc));
    }
    let omega = algebra_step(model, cfg, t, q, inc)?;
    if !omega.is_finite() {
        return Err(Error::NonFiniteState { step: 0 });
    }
    let g = psi_apply(cfg.param, &omega)?;
    Ok(model.side.project(q, &g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SquareMatrix>,
    /// `Q_j y0` for models that act on a unit vector.
    pub carrier: Option<Vec<[f64; 3]>>,
    pub drift_series: Vec<f64>,
}

impl Trajectory {
    pub fn terminal(&self) -> &SquareMatrix {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn max_drift(&self) -> f64 {
        self.drift_series.iter().copied().fold(0.0, f64::max)
    }

    /// Writes `t,Q11..Qnn[,y1,y2,y3],drift`, with a leading `path_id` column when given.
    pub fn write_csv<W: Write>(&self, w: W, path_id: Option<usize>, header: bool) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        let n = self.states.first().map_or(0, |s| s.dim());
        if header {
            let mut cols: Vec<String> = Vec::new();
            if path_id.is_some() {
                cols.push("path_id".into());
            }
            cols.push("t".into());
            for i in 1..=n {
                for j in 1..=n {
                    cols.push(format!("Q{i}{j}"));
                }
            }
            if self.carrier.is_some() {
                cols.extend(["y1", "y2", "y3"].map(String::from));
            }
            cols.push("drift".into());
            out.write_record(&cols).map_err(csv_io)?;
        }
        for (idx, (t, q)) in self.times.iter().zip(&self.states).enumerate() {
            let mut rec: Vec<String> = Vec::with_capacity(n * n + 6);
            if let Some(p) = path_id {
                rec.push(p.to_string());
            }
            rec.push(fmt_f64(*t));
            rec.extend(q.as_slice().iter().map(|x| fmt_f64(*x)));
            if let Some(c) = &self.carrier {
                rec.extend(c[idx].iter().map(|x| fmt_f64(*x)));
            }
            rec.push(fmt_f64(self.drift_series[idx]));
            out.write_record(&rec).map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::MalformedCsv(format!("{other:?}")),
    }
}

/// Number of steps of size `dt` in `[0, t_end]`, which must be a whole number.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::ZeroStepSize(dt));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "final time must be positive, got {t_end}"
        )));
    }
    let n = (t_end / dt).round();
    if (n * dt - t_end).abs() > 1e-9 * t_end || n < 1.0 {
        return Err(Error::IncompatibleGrids(format!(
            "final time {t_end} is not a whole number of steps of size {dt}"
        )));
    }
    Ok(n as usize)
}

fn check_row(row: &[NoiseIncrement], dt: f64, n_steps: usize) -> Result<()> {
    if row.len() != n_steps {
        return Err(Error::IncompatibleGrids(format!(
            "noise row has {} increments, need {n_steps}",
            row.len()
        )));
    }
    if let Some(inc) = row.first() {
        if (inc.dt - dt).abs() > 1e-12 * dt {
            return Err(Error::IncompatibleGrids(format!(
                "noise step {} differs from integration step {dt}",
                inc.dt
            )));
        }
    }
    Ok(())
}

fn run_steps(
    model: &LieSdeModel,
    cfg: &SchemeConfig,
    dt: f64,
    row: &[NoiseIncrement],
    mut visit: impl FnMut(usize, &SquareMatrix),
) -> Result<SquareMatrix> {
    cfg.validate()?;
    let mut q = SquareMatrix::identity(model.dim);
    visit(0, &q);
    for (j, inc) in row.iter().enumerate() {
        let t = j as f64 * dt;
        q = advance(model, cfg, t, &q, inc).map_err(|e| match e {
            Error::NonFiniteState { .. } => Error::NonFiniteState { step: j },
            other => Error::StepFailure {
                step: j,
                source: Box::new(other),
            },
        })?;
        if !q.is_finite() {
            return Err(Error::NonFiniteState { step: j });
        }
        visit(j + 1, &q);
    }
    Ok(q)
}

/// `Q_T` from `Q_0 = I` driven by `row`.
pub fn terminal_state(
    model: &LieSdeModel,
    cfg: &SchemeConfig,
    dt: f64,
    row: &[NoiseIncrement],
) -> Result<SquareMatrix> {
    run_steps(model, cfg, dt, row, |_, _| {})
}

/// Simulates `[0, t_end]` from `Q_0 = I`, recording every state.
pub fn simulate_path(
    model: &LieSdeModel,
    cfg: &SchemeConfig,
    t_end: f64,
    dt: f64,
    row: &[NoiseIncrement],
) -> Result<Trajectory> {
    let n = step_count(t_end, dt)?;
    check_row(row, dt, n)?;
    let mut traj = Trajectory {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        carrier: None,
        drift_series: Vec::with_capacity(n + 1),
    };
    let y0 = match model.group {
        GroupDescriptor::UnitSphereCarrier { y0 } => {
            traj.carrier = Some(Vec::with_capacity(n + 1));
            Some(y0)
        }
        GroupDescriptor::SpecialOrthogonal { .. } => None,
    };
    run_steps(model, cfg, dt, row, |j, q| {
        traj.times.push(j as f64 * dt);
        traj.drift_series.push(manifold_distance(q, &model.group));
        if let (Some(y0), Some(c)) = (y0, traj.carrier.as_mut()) {
            let y = q.mul_vec(&y0);
            c.push([y[0], y[1], y[2]]);
        }
        traj.states.push(q.clone());
    })?;
    Ok(traj)
}
