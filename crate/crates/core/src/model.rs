//! SDE problem definitions and the induced Lie-algebra coefficients.
//!
//! A model supplies the group-level coefficients `K(t, Q)` and `V(t, Q)` of
//! `dQ = Q K dt + Q V dW` (left) or `dQ = K Q dt + V Q dW` (right).
//! [`AlgebraCoefficients`] turns them into the drift `A(Omega)` and diffusion
//! `Gamma(Omega)` of the equation for `Omega` over one step.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{
    self, c_coeff_cayley, c_coeff_exp, dpsi_inv, dpsi_inv_d1, dpsi_inv_d2, psi_apply, son_generators, GroupDescriptor,
    Parametrization, DEFAULT_C_ORDER,
};
use crate::matops::SquareMatrix;

/// Coefficient provider `(t, Q) -> matrix`. Must be pure.
pub type CoefficientFn = Arc<dyn Fn(f64, &SquareMatrix) -> SquareMatrix + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `dQ = Q K dt + Q V dW`, projection `Q_{j+1} = Q_j psi(Omega)`.
    Left,
    /// `dQ = K Q dt + V Q dW`, projection `Q_{j+1} = psi(Omega) Q_j`.
    Right,
}

impl Side {
    /// Sign applied to `Omega` before calling the left-convention operators in [`lie`].
    fn index_sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    /// Applies a group increment to the current state.
    pub fn project(self, q: &SquareMatrix, increment: &SquareMatrix) -> SquareMatrix {
        match self {
            Side::Left => q * increment,
            Side::Right => increment * q,
        }
    }
}

/// Which time each stage of a step evaluates `K` and `V` at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSampling {
    /// Every stage uses the left endpoint `t_j`; Taylor schemes drop time derivatives.
    LeftEndpoint,
    /// Stages use their own nodes `t_j + c * dt`; Taylor schemes include `d/dt` terms.
    StageNodes,
}

/// Controls how the algebra coefficients are assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoefficientOptions {
    /// Include the Itô correction `C(Omega)` in the drift.
    pub ito_correction: bool,
    pub time_sampling: TimeSampling,
    /// `p + q` cut-off for the exponential-map correction series.
    pub c_order: usize,
}

impl Default for CoefficientOptions {
    fn default() -> Self {
        Self {
            ito_correction: true,
            time_sampling: TimeSampling::StageNodes,
            c_order: DEFAULT_C_ORDER,
        }
    }
}

#[derive(Clone)]
pub struct LieSdeModel {
    pub label: String,
    pub dim: usize,
    pub side: Side,
    pub group: GroupDescriptor,
    drift: CoefficientFn,
    diffusion: CoefficientFn,
    drift_rate: Option<CoefficientFn>,
    diffusion_rate: Option<CoefficientFn>,
    state_dependent: bool,
    time_dependent: bool,
}

impl fmt::Debug for LieSdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LieSdeModel")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("side", &self.side)
            .field("group", &self.group)
            .field("state_dependent", &self.state_dependent)
            .field("time_dependent", &self.time_dependent)
            .finish_non_exhaustive()
    }
}

const TIME_FD_STEP: f64 = 1e-5;

impl LieSdeModel {
    /// General model with state- and time-dependent coefficients.
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        side: Side,
        group: GroupDescriptor,
        drift: CoefficientFn,
        diffusion: CoefficientFn,
    ) -> Self {
        Self {
            label: label.into(),
            dim,
            side,
            group,
            drift,
            diffusion,
            drift_rate: None,
            diffusion_rate: None,
            state_dependent: true,
            time_dependent: true,
        }
    }

    /// Model whose coefficients depend on time only.
    pub fn time_only(
        label: impl Into<String>,
        dim: usize,
        side: Side,
        drift: impl Fn(f64) -> SquareMatrix + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> SquareMatrix + Send + Sync + 'static,
    ) -> Self {
        let mut m = Self::new(
            label,
            dim,
            side,
            GroupDescriptor::SpecialOrthogonal { dim },
            Arc::new(move |t, _| drift(t)),
            Arc::new(move |t, _| diffusion(t)),
        );
        m.state_dependent = false;
        m
    }

    /// Model with fixed coefficients.
    pub fn constant(label: impl Into<String>, side: Side, k: SquareMatrix, v: SquareMatrix) -> Result<Self> {
        crate::matops::ensure_same_dim(&k, &v)?;
        let dim = k.dim();
        let mut m = Self::time_only(label, dim, side, move |_| k.clone(), move |_| v.clone());
        m.time_dependent = false;
        Ok(m)
    }

    /// `K = V = 0`.
    pub fn zero(dim: usize) -> Self {
        let z = SquareMatrix::zeros(dim);
        Self::constant("zero", Side::Left, z.clone(), z).expect("same dimension")
    }

    /// Attaches exact time derivatives of `K` and `V`.
    pub fn with_time_derivatives(
        mut self,
        drift_rate: impl Fn(f64) -> SquareMatrix + Send + Sync + 'static,
        diffusion_rate: impl Fn(f64) -> SquareMatrix + Send + Sync + 'static,
    ) -> Self {
        self.drift_rate = Some(Arc::new(move |t, _| drift_rate(t)));
        self.diffusion_rate = Some(Arc::new(move |t, _| diffusion_rate(t)));
        self
    }

    pub fn with_group(mut self, group: GroupDescriptor) -> Self {
        self.group = group;
        self
    }

    pub fn is_state_dependent(&self) -> bool {
        self.state_dependent
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    pub fn drift(&self, t: f64, q: &SquareMatrix) -> SquareMatrix {
        (self.drift)(t, q)
    }

    pub fn diffusion(&self, t: f64, q: &SquareMatrix) -> SquareMatrix {
        (self.diffusion)(t, q)
    }

    /// `dK/dt`, exact when provided, otherwise a central difference.
    pub fn drift_rate(&self, t: f64, q: &SquareMatrix) -> SquareMatrix {
        if !self.time_dependent {
            return SquareMatrix::zeros(self.dim);
        }
        match &self.drift_rate {
            Some(f) => f(t, q),
            None => central_difference(&self.drift, t, q),
        }
    }

    /// `dV/dt`, exact when provided, otherwise a central difference.
    pub fn diffusion_rate(&self, t: f64, q: &SquareMatrix) -> SquareMatrix {
        if !self.time_dependent {
            return SquareMatrix::zeros(self.dim);
        }
        match &self.diffusion_rate {
            Some(f) => f(t, q),
            None => central_difference(&self.diffusion, t, q),
        }
    }
}

fn central_difference(f: &CoefficientFn, t: f64, q: &SquareMatrix) -> SquareMatrix {
    let h = TIME_FD_STEP * (1.0 + t.abs());
    (&f(t + h, q) - &f(t - h, q)).scale(0.5 / h)
}

/// The scalar functions multiplying the so(3) generators in the test model.
pub fn so3_test_weights(t: f64) -> [f64; 3] {
    [t.cos(), t.sin(), 1.0 + t + t * t + t * t * t]
}

fn so3_test_weight_rates(t: f64) -> [f64; 3] {
    [-t.sin(), t.cos(), 1.0 + 2.0 * t + 3.0 * t * t]
}

fn combine(weights: [f64; 3], g: &[SquareMatrix]) -> SquareMatrix {
    let mut v = SquareMatrix::zeros(3);
    for (w, gi) in weights.iter().zip(g) {
        v.add_scaled(*w, gi);
    }
    v
}

/// Lower-triangular drift for a skew `V`; skips the skew check.
fn lower_half_square(v2: &SquareMatrix) -> SquareMatrix {
    let n = v2.dim();
    let mut k = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..i {
            k[(i, j)] = v2[(i, j)];
        }
        k[(i, i)] = 0.5 * v2[(i, i)];
    }
    k
}

/// Left-multiplied SO(3) model with `V(t) = cos t G1 + sin t G2 + (1 + t + t^2 + t^3) G3`
/// and `K(t)` the lower-triangular solution of `K + K^T = V^2`.
pub fn make_so3_test_model() -> LieSdeModel {
    let g = son_generators(3).expect("n = 3");
    let (g1, g2, g3, g4) = (g.clone(), g.clone(), g.clone(), g);
    let v = move |t: f64| combine(so3_test_weights(t), &g1);
    let k = move |t: f64| {
        let v = combine(so3_test_weights(t), &g2);
        lower_half_square(&(&v * &v))
    };
    let v_rate = move |t: f64| combine(so3_test_weight_rates(t), &g3);
    let k_rate = move |t: f64| {
        let v = combine(so3_test_weights(t), &g4);
        let dv = combine(so3_test_weight_rates(t), &g4);
        lower_half_square(&(&(&dv * &v) + &(&v * &dv)))
    };
    LieSdeModel::time_only("so3-test", 3, Side::Left, k, v).with_time_derivatives(k_rate, v_rate)
}

fn check_inertia(inertia: [f64; 3]) -> Result<()> {
    if inertia.iter().all(|i| *i > 0.0 && i.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInertia(inertia))
    }
}

fn rigid_body_v_unchecked(y: &[f64], inertia: [f64; 3]) -> SquareMatrix {
    let (a, b, c) = (y[0] / inertia[0], y[1] / inertia[1], y[2] / inertia[2]);
    SquareMatrix::from_rows([[0.0, c, -b], [-c, 0.0, a], [b, -a, 0.0]])
}

/// Skew matrix of the free rigid body equations `y' = V(y) y`.
pub fn rigid_body_v(y: [f64; 3], inertia: [f64; 3]) -> Result<SquareMatrix> {
    check_inertia(inertia)?;
    Ok(rigid_body_v_unchecked(&y, inertia))
}

/// Default initial angular momentum `(sin 1.1, 0, cos 1.1)`.
pub fn rigid_body_default_y0() -> [f64; 3] {
    [1.1f64.sin(), 0.0, 1.1f64.cos()]
}

pub const RIGID_BODY_DEFAULT_INERTIA: [f64; 3] = [2.0, 1.0, 2.0 / 3.0];

/// Right-multiplied nonlinear SO(3) model `dQ = K(Q) Q dt + V(Q) Q dW`
/// with `V(Q) = rigid_body_v(Q y0)`.
pub fn make_rigid_body_model(inertia: [f64; 3], y0: [f64; 3]) -> Result<LieSdeModel> {
    check_inertia(inertia)?;
    let norm = y0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm.is_nan() || (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInitial(norm));
    }
    let v = move |_t: f64, q: &SquareMatrix| rigid_body_v_unchecked(&q.mul_vec(&y0), inertia);
    let k = move |_t: f64, q: &SquareMatrix| {
        let v = rigid_body_v_unchecked(&q.mul_vec(&y0), inertia);
        lower_half_square(&(&v * &v))
    };
    let mut m = LieSdeModel::new(
        "rigid-body",
        3,
        Side::Right,
        GroupDescriptor::UnitSphereCarrier { y0 },
        Arc::new(k),
        Arc::new(v),
    );
    m.time_dependent = false;
    Ok(m)
}

/// SO(2) model with constant `V = c J` and `K = -c^2/2 I`, so `K - V^2/2 = 0`.
pub fn make_so2_corr_model(c: f64) -> LieSdeModel {
    let v = lie::so2_generator().scale(c);
    let k = lower_half_square(&(&v * &v));
    LieSdeModel::constant("so2-corr", Side::Left, k, v).expect("2x2")
}

/// Looks a model up by its CLI name.
pub fn model_by_name(name: &str) -> Result<LieSdeModel> {
    match name {
        "so3-test" => Ok(make_so3_test_model()),
        "rigid-body" => make_rigid_body_model(RIGID_BODY_DEFAULT_INERTIA, rigid_body_default_y0()),
        "so2-corr" => Ok(make_so2_corr_model(0.5)),
        other => Err(Error::InvalidConfig(format!(
            "unknown model `{other}` (expected so3-test, rigid-body or so2-corr)"
        ))),
    }
}

/// Derivative data of `A` and `Gamma` at `Omega = 0` used by the Itô-Taylor step.
#[derive(Debug, Clone)]
pub struct TaylorTerms {
    pub a: SquareMatrix,
    pub gamma: SquareMatrix,
    /// `A'(0) A(0)`
    pub da_a: SquareMatrix,
    /// `A'(0) Gamma(0)`
    pub da_gamma: SquareMatrix,
    /// `A''(0)(Gamma(0), Gamma(0))`
    pub d2a_gamma: SquareMatrix,
    /// `Gamma'(0) A(0)`
    pub dgamma_a: SquareMatrix,
    /// `Gamma''(0)(Gamma(0), Gamma(0))`
    pub d2gamma_gamma: SquareMatrix,
    /// `Gamma'(0) Gamma(0)`
    pub dgamma_gamma: SquareMatrix,
    /// `(Gamma' Gamma)'(0) Gamma(0)`
    pub d_dgamma_gamma_gamma: SquareMatrix,
    /// `dA/dt` at `Omega = 0`
    pub a_rate: SquareMatrix,
    /// `dGamma/dt` at `Omega = 0`
    pub gamma_rate: SquareMatrix,
}

/// Drift and diffusion of the algebra equation over one step, anchored at `(t_j, Q_j)`.
#[derive(Clone)]
pub struct AlgebraCoefficients<'a> {
    model: &'a LieSdeModel,
    param: Parametrization,
    options: CoefficientOptions,
    pub anchor_time: f64,
    pub anchor_state: &'a SquareMatrix,
}

impl<'a> AlgebraCoefficients<'a> {
    pub fn parametrization(&self) -> Parametrization {
        self.param
    }

    pub fn options(&self) -> CoefficientOptions {
        self.options
    }

    pub fn dim(&self) -> usize {
        self.model.dim
    }

    fn sign(&self) -> f64 {
        self.model.side.index_sign()
    }

    fn time_at(&self, offset: f64) -> f64 {
        match self.options.time_sampling {
            TimeSampling::LeftEndpoint => self.anchor_time,
            TimeSampling::StageNodes => self.anchor_time + offset,
        }
    }

    fn state_at(&self, omega: &SquareMatrix) -> Result<SquareMatrix> {
        if !self.model.state_dependent || omega.is_zero() {
            return Ok(self.anchor_state.clone());
        }
        let g = psi_apply(self.param, omega)?;
        Ok(self.model.side.project(self.anchor_state, &g))
    }

    /// `dpsi^{-1}` with the index sign of the model's side.
    fn dinv(&self, omega: &SquareMatrix, h: &SquareMatrix) -> Result<SquareMatrix> {
        dpsi_inv(self.param, &omega.scale(self.sign()), h)
    }

    fn dinv_d1(&self, omega: &SquareMatrix, h: &SquareMatrix, dir: &SquareMatrix) -> Result<SquareMatrix> {
        Ok(dpsi_inv_d1(self.param, &omega.scale(self.sign()), h, dir)?.scale(self.sign()))
    }

    fn dinv_d2(&self, omega: &SquareMatrix, h: &SquareMatrix, dir: &SquareMatrix) -> Result<SquareMatrix> {
        dpsi_inv_d2(self.param, &omega.scale(self.sign()), h, dir)
    }

    /// Itô correction `C(Omega)` for group diffusion `v`.
    fn correction(&self, v: &SquareMatrix, omega: &SquareMatrix) -> Result<SquareMatrix> {
        let s = self.sign();
        let so = omega.scale(s);
        let c = match self.param {
            Parametrization::Cayley => c_coeff_cayley(v, &so)?,
            Parametrization::Exponential { q } => {
                let gamma = lie::dexp_inv_trunc(&so, v, q)?;
                c_coeff_exp(&gamma, &so, self.options.c_order)?
            }
        };
        Ok(c.scale(s))
    }

    /// Linearization of `C` at the origin applied to `x`.
    fn correction_slope(&self, v: &SquareMatrix, x: &SquareMatrix) -> Result<SquareMatrix> {
        match self.param {
            Parametrization::Cayley => c_coeff_cayley(v, x),
            Parametrization::Exponential { .. } => c_coeff_exp(v, x, 1),
        }
    }

    /// `(K, V)` at stage time offset `offset` and algebra point `omega`.
    fn group_coefficients(&self, omega: &SquareMatrix, offset: f64) -> Result<(SquareMatrix, SquareMatrix)> {
        let q = self.state_at(omega)?;
        let t = self.time_at(offset);
        Ok((self.model.drift(t, &q), self.model.diffusion(t, &q)))
    }

    fn drift_argument(&self, k: &SquareMatrix, v: &SquareMatrix, omega: &SquareMatrix) -> Result<SquareMatrix> {
        let mut h = k.clone();
        h.add_scaled(-0.5, &(v * v));
        if self.options.ito_correction && !omega.is_zero() {
            h.add_scaled(-0.5, &self.correction(v, omega)?);
        }
        Ok(h)
    }

    /// `A(Omega)` with coefficients sampled at `t_j + offset`.
    pub fn drift(&self, omega: &SquareMatrix, offset: f64) -> Result<SquareMatrix> {
        let (k, v) = self.group_coefficients(omega, offset)?;
        let h = self.drift_argument(&k, &v, omega)?;
        self.dinv(omega, &h)
    }

    /// `Gamma(Omega)` with coefficients sampled at `t_j + offset`.
    pub fn diffusion(&self, omega: &SquareMatrix, offset: f64) -> Result<SquareMatrix> {
        let (_, v) = self.group_coefficients(omega, offset)?;
        self.dinv(omega, &v)
    }

    /// `(A(0), Gamma(0))` at the anchor.
    pub fn at_origin(&self) -> Result<(SquareMatrix, SquareMatrix)> {
        let z = SquareMatrix::zeros(self.dim());
        let (k, v) = self.group_coefficients(&z, 0.0)?;
        let h = self.drift_argument(&k, &v, &z)?;
        Ok((self.dinv(&z, &h)?, self.dinv(&z, &v)?))
    }

    /// Directional derivatives at the origin for the order 1.5 Taylor step.
    /// Only available when `K` and `V` do not depend on the state.
    pub fn taylor_terms(&self) -> Result<TaylorTerms> {
        if self.model.state_dependent {
            return Err(Error::Unsupported(format!(
                "Itô-Taylor step needs state-independent coefficients; model `{}` depends on Q",
                self.model.label
            )));
        }
        let n = self.dim();
        let z = SquareMatrix::zeros(n);
        let t = self.anchor_time;
        let q = self.anchor_state;
        let k = self.model.drift(t, q);
        let v = self.model.diffusion(t, q);
        let mut h_a = k.clone();
        h_a.add_scaled(-0.5, &(&v * &v));
        let a = self.dinv(&z, &h_a)?;
        let gamma = self.dinv(&z, &v)?;
        let ito = self.options.ito_correction;

        // A'(0) x = D'[H_A; x] + D(0)[-C'(0) x / 2]
        let da = |x: &SquareMatrix| -> Result<SquareMatrix> {
            let mut out = self.dinv_d1(&z, &h_a, x)?;
            if ito {
                let c = self.correction_slope(&v, x)?;
                out.add_scaled(-0.5, &self.dinv(&z, &c)?);
            }
            Ok(out)
        };
        // A''(0)(x, x) = D''[H_A; x, x] + 2 D'[-C'(0) x / 2; x]; C''(0) vanishes
        let d2a = |x: &SquareMatrix| -> Result<SquareMatrix> {
            let mut out = self.dinv_d2(&z, &h_a, x)?;
            if ito {
                let c = self.correction_slope(&v, x)?.scale(-0.5);
                out.add_scaled(2.0, &self.dinv_d1(&z, &c, x)?);
            }
            Ok(out)
        };

        let dgamma_gamma = self.dinv_d1(&z, &v, &gamma)?;
        let d_dgamma_gamma_gamma = &self.dinv_d2(&z, &v, &gamma)? + &self.dinv_d1(&z, &v, &dgamma_gamma)?;

        let (a_rate, gamma_rate) = match self.options.time_sampling {
            TimeSampling::LeftEndpoint => (z.clone(), z.clone()),
            TimeSampling::StageNodes => {
                let dk = self.model.drift_rate(t, q);
                let dv = self.model.diffusion_rate(t, q);
                let mut h = dk;
                h.add_scaled(-0.5, &(&(&dv * &v) + &(&v * &dv)));
                (self.dinv(&z, &h)?, self.dinv(&z, &dv)?)
            }
        };

        Ok(TaylorTerms {
            da_a: da(&a)?,
            da_gamma: da(&gamma)?,
            d2a_gamma: d2a(&gamma)?,
            dgamma_a: self.dinv_d1(&z, &v, &a)?,
            d2gamma_gamma: self.dinv_d2(&z, &v, &gamma)?,
            dgamma_gamma,
            d_dgamma_gamma_gamma,
            a_rate,
            gamma_rate,
            a,
            gamma,
        })
    }
}

/// Builds the algebra coefficients for one step anchored at `(t_j, Q_j)`.
pub fn algebra_coefficients<'a>(
    model: &'a LieSdeModel,
    param: Parametrization,
    options: CoefficientOptions,
    t_j: f64,
    q_j: &'a SquareMatrix,
) -> AlgebraCoefficients<'a> {
    AlgebraCoefficients {
        model,
        param,
        options,
        anchor_time: t_j,
        anchor_state: q_j,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(a: &SquareMatrix, b: &SquareMatrix) -> f64 {
        (a - b).frobenius_norm()
    }

    fn gens() -> Vec<SquareMatrix> {
        son_generators(3).unwrap()
    }

    const EXP1: Parametrization = Parametrization::Exponential { q: 1 };

    #[test]
    fn so3_model_examples() {
        let m = make_so3_test_model();
        let g = gens();
        let eye = SquareMatrix::identity(3);
        assert!(dist(&m.diffusion(0.0, &eye), &(&g[0] + &g[2])) < 1e-15);

        let t = std::f64::consts::FRAC_PI_2;
        let f3 = 1.0 + t + t * t / 1.0 + t * t * t;
        let f3_expect =
            1.0 + std::f64::consts::FRAC_PI_2 + std::f64::consts::PI.powi(2) / 4.0 + std::f64::consts::PI.powi(3) / 8.0;
        assert!((f3 - f3_expect).abs() < 1e-12);
        let expect = &g[1] + &g[2].scale(f3_expect);
        assert!(dist(&m.diffusion(t, &eye), &expect) < 1e-12);

        for t in [0.0, 0.5, 1.0] {
            let k = m.drift(t, &eye);
            let v = m.diffusion(t, &eye);
            assert!(dist(&(&k + &k.transpose()), &(&v * &v)) < 1e-13);
        }
    }

    #[test]
    fn so3_model_rates_match_finite_differences() {
        let m = make_so3_test_model();
        let eye = SquareMatrix::identity(3);
        for t in [0.0, 0.3, 0.9] {
            let h = 1e-6;
            let fd_v = (&m.diffusion(t + h, &eye) - &m.diffusion(t - h, &eye)).scale(0.5 / h);
            let fd_k = (&m.drift(t + h, &eye) - &m.drift(t - h, &eye)).scale(0.5 / h);
            assert!(dist(&m.diffusion_rate(t, &eye), &fd_v) < 1e-7);
            assert!(dist(&m.drift_rate(t, &eye), &fd_k) < 1e-7);
        }
    }

    #[test]
    fn rigid_body_v_examples() {
        let inertia = RIGID_BODY_DEFAULT_INERTIA;
        assert!(rigid_body_v([0.0; 3], inertia).unwrap().is_zero());
        let v = rigid_body_v([0.0, 0.0, 1.0], inertia).unwrap();
        assert!((v[(0, 1)] - 1.5).abs() < 1e-15);
        assert!((v[(1, 0)] + 1.5).abs() < 1e-15);
        assert_eq!(v.as_slice().iter().filter(|x| **x != 0.0).count(), 2);
        assert!(matches!(
            rigid_body_v([1.0, 0.0, 0.0], [1.0, 0.0, 1.0]),
            Err(Error::InvalidInertia(_))
        ));
    }

    #[test]
    fn rigid_body_model_examples() {
        let y0 = rigid_body_default_y0();
        let m = make_rigid_body_model(RIGID_BODY_DEFAULT_INERTIA, y0).unwrap();
        assert_eq!(m.side, Side::Right);
        let eye = SquareMatrix::identity(3);
        assert_eq!(
            m.diffusion(0.0, &eye),
            rigid_body_v(y0, RIGID_BODY_DEFAULT_INERTIA).unwrap()
        );
        assert!(matches!(
            make_rigid_body_model(RIGID_BODY_DEFAULT_INERTIA, [1.0, 1.0, 0.0]),
            Err(Error::InvalidInitial(_))
        ));
        assert!(make_rigid_body_model([-1.0, 1.0, 1.0], y0).is_err());
    }

    #[test]
    fn origin_values() {
        let m = make_so3_test_model();
        let eye = SquareMatrix::identity(3);
        let t = 0.4;
        let k = m.drift(t, &eye);
        let v = m.diffusion(t, &eye);
        let mut h = k.clone();
        h.add_scaled(-0.5, &(&v * &v));

        let c = algebra_coefficients(&m, EXP1, CoefficientOptions::default(), t, &eye);
        let (a0, g0) = c.at_origin().unwrap();
        assert!(dist(&a0, &h) < 1e-14);
        assert!(dist(&g0, &v) < 1e-14);

        let c = algebra_coefficients(&m, Parametrization::Cayley, CoefficientOptions::default(), t, &eye);
        let (a0, g0) = c.at_origin().unwrap();
        assert!(dist(&a0, &h.scale(0.5)) < 1e-14);
        assert!(dist(&g0, &v.scale(0.5)) < 1e-14);

        let z = LieSdeModel::zero(3);
        let c = algebra_coefficients(&z, EXP1, CoefficientOptions::default(), 0.0, &eye);
        let om = gens()[0].scale(0.2);
        assert!(c.drift(&om, 0.0).unwrap().is_zero());
        assert!(c.diffusion(&om, 0.0).unwrap().is_zero());
    }

    #[test]
    fn diffusion_at_origin_is_state_free() {
        let m = make_so3_test_model();
        let eye = SquareMatrix::identity(3);
        let rot = gens()[1].scale(0.7).exp();
        for p in [EXP1, Parametrization::Cayley] {
            let a = algebra_coefficients(&m, p, CoefficientOptions::default(), 0.3, &eye);
            let b = algebra_coefficients(&m, p, CoefficientOptions::default(), 0.3, &rot);
            assert_eq!(a.at_origin().unwrap().1, b.at_origin().unwrap().1);
        }
    }

    #[test]
    fn taylor_terms_rejects_state_dependence() {
        let m = make_rigid_body_model(RIGID_BODY_DEFAULT_INERTIA, rigid_body_default_y0()).unwrap();
        let eye = SquareMatrix::identity(3);
        let c = algebra_coefficients(&m, Parametrization::Cayley, CoefficientOptions::default(), 0.0, &eye);
        assert!(matches!(c.taylor_terms(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gamma_gamma_term_vanishes_at_origin() {
        let m = make_so3_test_model();
        let eye = SquareMatrix::identity(3);
        for p in [EXP1, Parametrization::Cayley] {
            let c = algebra_coefficients(&m, p, CoefficientOptions::default(), 0.2, &eye);
            assert!(c.taylor_terms().unwrap().dgamma_gamma.frobenius_norm() < 1e-14);
        }
    }

    // Central differences of A and Gamma in Omega give the oracle for every Taylor term.
    fn check_taylor_terms(model: &LieSdeModel, p: Parametrization, t: f64) {
        let eye = SquareMatrix::identity(model.dim);
        let c = algebra_coefficients(model, p, CoefficientOptions::default(), t, &eye);
        let terms = c.taylor_terms().unwrap();
        let z = SquareMatrix::zeros(model.dim);
        let a = |o: &SquareMatrix| c.drift(o, 0.0).unwrap();
        let g = |o: &SquareMatrix| c.diffusion(o, 0.0).unwrap();
        let d1 = |f: &dyn Fn(&SquareMatrix) -> SquareMatrix, x: &SquareMatrix| {
            let e = 1e-5;
            (&f(&x.scale(e)) - &f(&x.scale(-e))).scale(0.5 / e)
        };
        let d2 = |f: &dyn Fn(&SquareMatrix) -> SquareMatrix, x: &SquareMatrix| {
            let e = 1e-3;
            (&(&f(&x.scale(e)) + &f(&x.scale(-e))) - &f(&z).scale(2.0)).scale(1.0 / (e * e))
        };
        let scale = 1.0 + terms.a.frobenius_norm() + terms.gamma.frobenius_norm();
        let tol1 = 1e-6 * scale.powi(3);
        let tol2 = 1e-4 * scale.powi(4);
        assert!(dist(&terms.da_a, &d1(&a, &terms.a)) < tol1, "A'A");
        assert!(dist(&terms.da_gamma, &d1(&a, &terms.gamma)) < tol1, "A'G");
        assert!(dist(&terms.dgamma_a, &d1(&g, &terms.a)) < tol1, "G'A");
        assert!(dist(&terms.d2a_gamma, &d2(&a, &terms.gamma)) < tol2, "A''GG");
        assert!(dist(&terms.d2gamma_gamma, &d2(&g, &terms.gamma)) < tol2, "G''GG");

        let at = |s: f64| {
            let cs = algebra_coefficients(model, p, CoefficientOptions::default(), t + s, &eye);
            cs.at_origin().unwrap()
        };
        let h = 1e-6;
        let (ap, gp) = at(h);
        let (am, gm) = at(-h);
        assert!(dist(&terms.a_rate, &(&ap - &am).scale(0.5 / h)) < 1e-6 * scale.powi(2));
        assert!(dist(&terms.gamma_rate, &(&gp - &gm).scale(0.5 / h)) < 1e-6 * scale);
    }

    #[test]
    fn taylor_terms_match_finite_differences() {
        let m = make_so3_test_model();
        for p in [Parametrization::Exponential { q: 4 }, Parametrization::Cayley] {
            for t in [0.0, 0.35] {
                check_taylor_terms(&m, p, t);
            }
        }
        let g = gens();
        let k = SquareMatrix::from_rows([[0.1, 0.4, -0.2], [0.0, -0.3, 0.5], [0.2, 0.1, 0.0]]);
        let v = &g[0].scale(0.8) + &g[1].scale(-0.5);
        for side in [Side::Left, Side::Right] {
            let m = LieSdeModel::constant("c", side, k.clone(), v.clone()).unwrap();
            for p in [Parametrization::Exponential { q: 4 }, Parametrization::Cayley] {
                check_taylor_terms(&m, p, 0.0);
            }
        }
    }

    #[test]
    fn so2_model_has_zero_drift() {
        let m = make_so2_corr_model(0.6);
        let eye = SquareMatrix::identity(2);
        let c = algebra_coefficients(&m, EXP1, CoefficientOptions::default(), 0.0, &eye);
        let (a0, g0) = c.at_origin().unwrap();
        assert!(a0.frobenius_norm() < 1e-15);
        assert!(dist(&g0, &lie::so2_generator().scale(0.6)) < 1e-15);
    }

    #[test]
    fn model_lookup() {
        assert_eq!(model_by_name("so3-test").unwrap().label, "so3-test");
        assert_eq!(model_by_name("rigid-body").unwrap().side, Side::Right);
        assert!(matches!(model_by_name("nope"), Err(Error::InvalidConfig(_))));
    }

    proptest! {
        #[test]
        fn rigid_body_v_is_skew(y in proptest::array::uniform3(-5.0..5.0f64)) {
            let v = rigid_body_v(y, RIGID_BODY_DEFAULT_INERTIA).unwrap();
            prop_assert!((&v + &v.transpose()).is_zero());
        }

        #[test]
        fn rigid_body_drift_identity(w in proptest::array::uniform3(-2.0..2.0f64)) {
            let g = gens();
            let om = &(&g[0].scale(w[0]) + &g[1].scale(w[1])) + &g[2].scale(w[2]);
            let q = om.exp();
            let m = make_rigid_body_model(RIGID_BODY_DEFAULT_INERTIA, rigid_body_default_y0()).unwrap();
            let k = m.drift(0.0, &q);
            let v = m.diffusion(0.0, &q);
            prop_assert!(dist(&(&k + &k.transpose()), &(&v * &v)) < 1e-13);
        }
    }
}
