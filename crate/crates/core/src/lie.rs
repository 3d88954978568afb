//! Local parametrizations of matrix Lie groups and their inverse differentials.
//!
//! Conventions follow the left-multiplied SDE: the inverse differential is
//! evaluated at index `-Omega`, so `dexp_inv_trunc(Omega, H, q)` is
//! `sum_k B_k/k! ad_{-Omega}^k(H)` and `dcay_inv(Omega, H)` is
//! `(I + Omega) H (I - Omega) / 2`. Callers integrating right-multiplied
//! equations flip the sign of `Omega` themselves (see `model`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{comm, ensure_same_dim, SquareMatrix};

/// Bernoulli numbers `B_0..=B_8` with `B_1 = -1/2`.
pub const BERNOULLI: [f64; 9] = [
    1.0,
    -0.5,
    1.0 / 6.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    1.0 / 42.0,
    0.0,
    -1.0 / 30.0,
];

/// Largest supported truncation index for the Bernoulli series.
pub const MAX_TRUNCATION: usize = BERNOULLI.len() - 1;

/// Default tolerance for group membership tests.
pub const DEFAULT_DRIFT_TOL: f64 = 1e-8;

/// Default number of `p + q` levels kept in the exponential-map Itô correction.
pub const DEFAULT_C_ORDER: usize = 2;

const SKEW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parametrization {
    /// Matrix exponential; `q` is the truncation index of the `dexp^{-1}` series.
    Exponential {
        q: usize,
    },
    Cayley,
}

impl Parametrization {
    pub fn truncation_q(&self) -> Option<usize> {
        match self {
            Parametrization::Exponential { q } => Some(*q),
            Parametrization::Cayley => None,
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            Parametrization::Exponential { .. } => "exp",
            Parametrization::Cayley => "cay",
        }
    }

    /// Scale of `dpsi^{-1}` at the origin: identity for exp, one half for Cayley.
    pub fn origin_scale(&self) -> f64 {
        match self {
            Parametrization::Exponential { .. } => 1.0,
            Parametrization::Cayley => 0.5,
        }
    }
}

impl std::fmt::Display for Parametrization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Parametrization::Exponential { q } => write!(f, "exp(q={q})"),
            Parametrization::Cayley => write!(f, "cay"),
        }
    }
}

/// Manifold a model's solution is expected to stay on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GroupDescriptor {
    /// SO(n): `Q^T Q = I`, `det Q = 1`.
    SpecialOrthogonal { dim: usize },
    /// SO(3) acting on a fixed unit vector; the carrier `Q y0` lives on the sphere.
    UnitSphereCarrier { y0: [f64; 3] },
}

impl GroupDescriptor {
    pub fn dim(&self) -> usize {
        match self {
            GroupDescriptor::SpecialOrthogonal { dim } => *dim,
            GroupDescriptor::UnitSphereCarrier { .. } => 3,
        }
    }

    /// `|Q^T Q - I|_F`, the orthogonality defect.
    pub fn orthogonality_defect(q: &SquareMatrix) -> f64 {
        (&(&q.transpose() * q) - &SquareMatrix::identity(q.dim())).frobenius_norm()
    }

    pub fn contains(&self, q: &SquareMatrix, drift_tol: f64) -> bool {
        q.dim() == self.dim() && Self::orthogonality_defect(q) <= drift_tol && q.det() > 0.0
    }
}

/// Group element `psi(Omega)`: full matrix exponential or Cayley transform.
pub fn psi_apply(p: Parametrization, omega: &SquareMatrix) -> Result<SquareMatrix> {
    match p {
        Parametrization::Exponential { .. } => Ok(omega.exp()),
        Parametrization::Cayley => cayley(omega),
    }
}

/// `cay(Omega) = (I - Omega)^{-1} (I + Omega)`.
pub fn cayley(omega: &SquareMatrix) -> Result<SquareMatrix> {
    let eye = SquareMatrix::identity(omega.dim());
    Ok(&(&eye - omega).inverse()? * &(&eye + omega))
}

/// Truncated Bernoulli series `sum_{k<=q} B_k/k! ad_{-Omega}^k(H)`.
pub fn dexp_inv_trunc(omega: &SquareMatrix, h: &SquareMatrix, q: usize) -> Result<SquareMatrix> {
    ensure_same_dim(omega, h)?;
    if q > MAX_TRUNCATION {
        return Err(Error::Unsupported(format!(
            "truncation index {q} exceeds {MAX_TRUNCATION}"
        )));
    }
    let norm = omega.frobenius_norm();
    if norm >= std::f64::consts::PI {
        return Err(Error::DomainError(format!(
            "dexp^-1 series needs |Omega|_F < pi, got {norm}"
        )));
    }
    let neg = -omega;
    let mut ad = h.clone();
    let mut out = h.clone();
    let mut fact = 1.0;
    for (k, b) in BERNOULLI.iter().enumerate().take(q + 1).skip(1) {
        ad = comm(&neg, &ad);
        fact *= k as f64;
        if *b != 0.0 {
            out.add_scaled(b / fact, &ad);
        }
    }
    Ok(out)
}

/// Forward series `dexp_{-Omega}(H) = sum_{k<terms} ad_{-Omega}^k(H)/(k+1)!`.
pub fn dexp_trunc(omega: &SquareMatrix, h: &SquareMatrix, terms: usize) -> Result<SquareMatrix> {
    ensure_same_dim(omega, h)?;
    let neg = -omega;
    let mut ad = h.clone();
    let mut out = SquareMatrix::zeros(h.dim());
    let mut fact = 1.0;
    for k in 0..terms {
        if k > 0 {
            ad = comm(&neg, &ad);
        }
        fact *= (k + 1) as f64;
        out.add_scaled(1.0 / fact, &ad);
    }
    Ok(out)
}

/// `dcay_{-Omega}^{-1}(H) = (I + Omega) H (I - Omega) / 2`.
pub fn dcay_inv(omega: &SquareMatrix, h: &SquareMatrix) -> Result<SquareMatrix> {
    ensure_same_dim(omega, h)?;
    let eye = SquareMatrix::identity(omega.dim());
    Ok((&(&(&eye + omega) * h) * &(&eye - omega)).scale(0.5))
}

/// `dcay_{-Omega}(H) = 2 (I + Omega)^{-1} H (I - Omega)^{-1}`.
pub fn dcay(omega: &SquareMatrix, h: &SquareMatrix) -> Result<SquareMatrix> {
    ensure_same_dim(omega, h)?;
    let eye = SquareMatrix::identity(omega.dim());
    let left = (&eye + omega).inverse()?;
    let right = (&eye - omega).inverse()?;
    Ok((&(&left * h) * &right).scale(2.0))
}

pub fn dpsi_inv(p: Parametrization, omega: &SquareMatrix, h: &SquareMatrix) -> Result<SquareMatrix> {
    match p {
        Parametrization::Exponential { q } => dexp_inv_trunc(omega, h, q),
        Parametrization::Cayley => dcay_inv(omega, h),
    }
}

fn chain(ms: &[&SquareMatrix]) -> SquareMatrix {
    let mut acc = ms[0].clone();
    for m in &ms[1..] {
        acc = &acc * *m;
    }
    acc
}

fn check3(a: &SquareMatrix, b: &SquareMatrix, c: &SquareMatrix) -> Result<()> {
    ensure_same_dim(a, b)?;
    ensure_same_dim(a, c)
}

/// Directional derivative of `dcay_inv(., H)` at `Omega` in direction `Ht`.
pub fn ddcayinv_dir(omega: &SquareMatrix, h: &SquareMatrix, ht: &SquareMatrix) -> Result<SquareMatrix> {
    check3(omega, h, ht)?;
    let mut out = &(ht * h) - &(h * ht);
    out -= &chain(&[omega, h, ht]);
    out -= &chain(&[ht, h, omega]);
    Ok(out.scale(0.5))
}

/// Second directional derivative of `dcay_inv(., H)` in direction `Ht`; independent of `Omega`.
pub fn d2cayinv_dir(h: &SquareMatrix, ht: &SquareMatrix) -> Result<SquareMatrix> {
    ensure_same_dim(h, ht)?;
    Ok(-chain(&[ht, h, ht]))
}

/// Directional derivative of `dexp_inv_trunc(., H, 4)` at `Omega` in direction `Ht`.
pub fn ddexpinv_dir(omega: &SquareMatrix, h: &SquareMatrix, ht: &SquareMatrix) -> Result<SquareMatrix> {
    check3(omega, h, ht)?;
    let (o, x) = (omega, ht);
    let o2 = o * o;
    let o3 = &o2 * o;

    let mut out = (&(h * x) - &(x * h)).scale(-0.5);

    let mut g2 = chain(&[o, x, h]) + chain(&[x, o, h]) + chain(&[h, o, x]) + chain(&[h, x, o]);
    g2.add_scaled(-2.0, &chain(&[x, h, o]));
    g2.add_scaled(-2.0, &chain(&[o, h, x]));
    out.add_scaled(1.0 / 12.0, &g2);

    let p0 = chain(&[x, &o3, h]) + chain(&[o, x, &o2, h]) + chain(&[&o2, x, o, h]) + chain(&[&o3, x, h]);
    let p1 = chain(&[o, x, o, h, o]) + chain(&[x, &o2, h, o]) + chain(&[&o2, x, h, o]) + chain(&[&o3, h, x]);
    let p2 = chain(&[&o2, h, o, x]) + chain(&[&o2, h, x, o]) + chain(&[o, x, h, &o2]) + chain(&[x, o, h, &o2]);
    let p3 = chain(&[o, h, o, x, o]) + chain(&[o, h, x, &o2]) + chain(&[o, h, &o2, x]) + chain(&[x, h, &o3]);
    let p4 = chain(&[h, x, &o3]) + chain(&[h, o, x, &o2]) + chain(&[h, &o2, x, o]) + chain(&[h, &o3, x]);
    let mut g4 = p0;
    g4.add_scaled(-4.0, &p1);
    g4.add_scaled(6.0, &p2);
    g4.add_scaled(-4.0, &p3);
    g4 += &p4;
    out.add_scaled(-1.0 / 720.0, &g4);
    Ok(out)
}

/// Second directional derivative of `dexp_inv_trunc(., H, 4)` at `Omega` in direction `Ht`.
pub fn d2dexpinv_dir(omega: &SquareMatrix, h: &SquareMatrix, ht: &SquareMatrix) -> Result<SquareMatrix> {
    check3(omega, h, ht)?;
    let (o, x) = (omega, ht);
    let o2 = o * o;
    let x2 = x * x;

    let mut g2 = &(&x2 * h) + &(h * &x2);
    g2.add_scaled(-2.0, &chain(&[x, h, x]));
    let mut out = g2.scale(1.0 / 6.0);

    let p0 = chain(&[o, x, o, x, h])
        + chain(&[o, &x2, o, h])
        + chain(&[&x2, &o2, h])
        + chain(&[&o2, &x2, h])
        + chain(&[x, o, x, o, h])
        + chain(&[x, &o2, x, h]);
    let p1 = chain(&[o, x, o, h, x])
        + chain(&[o, &x2, h, o])
        + chain(&[&x2, o, h, o])
        + chain(&[x, &o2, h, x])
        + chain(&[x, o, x, h, o])
        + chain(&[&o2, x, h, x]);
    let p2 = chain(&[&o2, h, &x2])
        + chain(&[o, x, h, o, x])
        + chain(&[x, o, h, o, x])
        + chain(&[o, x, h, x, o])
        + chain(&[x, o, h, x, o])
        + chain(&[&x2, h, &o2]);
    let p3 = chain(&[o, h, o, &x2])
        + chain(&[o, h, &x2, o])
        + chain(&[x, h, o, x, o])
        + chain(&[o, h, x, o, x])
        + chain(&[x, h, x, &o2])
        + chain(&[x, h, &o2, x]);
    let p4 = chain(&[h, x, o, x, o])
        + chain(&[h, &x2, &o2])
        + chain(&[h, x, &o2, x])
        + chain(&[h, o, x, o, x])
        + chain(&[h, o, &x2, o])
        + chain(&[h, &o2, &x2]);
    let mut g4 = p0;
    g4.add_scaled(-4.0, &p1);
    g4.add_scaled(6.0, &p2);
    g4.add_scaled(-4.0, &p3);
    g4 += &p4;
    out.add_scaled(-1.0 / 360.0, &g4);
    Ok(out)
}

/// First directional derivative of `dpsi_inv(p, ., H)`. The exponential map
/// uses the `k <= 4` truncation whatever `q` is.
pub fn dpsi_inv_d1(
    p: Parametrization,
    omega: &SquareMatrix,
    h: &SquareMatrix,
    dir: &SquareMatrix,
) -> Result<SquareMatrix> {
    match p {
        Parametrization::Exponential { .. } => ddexpinv_dir(omega, h, dir),
        Parametrization::Cayley => ddcayinv_dir(omega, h, dir),
    }
}

/// Second directional derivative of `dpsi_inv(p, ., H)`.
pub fn dpsi_inv_d2(
    p: Parametrization,
    omega: &SquareMatrix,
    h: &SquareMatrix,
    dir: &SquareMatrix,
) -> Result<SquareMatrix> {
    match p {
        Parametrization::Exponential { .. } => d2dexpinv_dir(omega, h, dir),
        Parametrization::Cayley => d2cayinv_dir(h, dir),
    }
}

/// Itô correction for the Cayley map, `V Omega V`.
pub fn c_coeff_cayley(v: &SquareMatrix, omega: &SquareMatrix) -> Result<SquareMatrix> {
    ensure_same_dim(v, omega)?;
    Ok(chain(&[v, omega, v]))
}

/// Itô correction for the exponential map, double series truncated at
/// `p + q <= order`. `gamma` is the algebra diffusion `Gamma(Omega)`.
pub fn c_coeff_exp(gamma: &SquareMatrix, omega: &SquareMatrix, order: usize) -> Result<SquareMatrix> {
    ensure_same_dim(gamma, omega)?;
    let n = gamma.dim();
    let mut out = SquareMatrix::zeros(n);
    // ad_Omega^q(Gamma) for q = 0..=order
    let mut inner = Vec::with_capacity(order + 1);
    inner.push(gamma.clone());
    for q in 1..=order {
        let next = comm(omega, &inner[q - 1]);
        inner.push(next);
    }
    let mut fact = vec![1.0; order + 2];
    for k in 1..order + 2 {
        fact[k] = fact[k - 1] * k as f64;
    }
    for (q, ad_q) in inner.iter().enumerate() {
        let mut term = comm(gamma, ad_q);
        for p in 0..=order - q {
            if p > 0 {
                term = comm(omega, &term);
            }
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            let coeff = sign / ((p + q + 2) as f64 * fact[p] * fact[q + 1]);
            out.add_scaled(coeff, &term);
        }
    }
    Ok(out)
}

/// Basis `E_ji - E_ij` of so(n). For n = 3 the order is the rotation
/// generators about the z, y and x axes.
pub fn son_generators(n: usize) -> Result<Vec<SquareMatrix>> {
    if n < 2 {
        return Err(Error::Unsupported(format!("so({n}) has no generators")));
    }
    if n == 3 {
        return Ok(vec![
            SquareMatrix::from_rows([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
            SquareMatrix::from_rows([[0.0, 0.0, -1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
            SquareMatrix::from_rows([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
        ]);
    }
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let mut g = SquareMatrix::zeros(n);
            g[(i, j)] = -1.0;
            g[(j, i)] = 1.0;
            out.push(g);
        }
    }
    Ok(out)
}

/// The 2x2 rotation generator `[[0, -1], [1, 0]]`.
pub fn so2_generator() -> SquareMatrix {
    SquareMatrix::from_rows([[0.0, -1.0], [1.0, 0.0]])
}

/// Checks that `v` is skew-symmetric to working precision.
pub fn ensure_skew(v: &SquareMatrix) -> Result<()> {
    let residual = v.skew_residual();
    if residual > SKEW_TOL * (1.0 + v.frobenius_norm()) {
        return Err(Error::NotSkew { residual });
    }
    Ok(())
}

/// Drift `K` with `K + K^T = V^2`: strict lower triangle of `V^2` plus half its diagonal.
pub fn drift_from_diffusion(v: &SquareMatrix) -> Result<SquareMatrix> {
    ensure_skew(v)?;
    let v2 = v * v;
    Ok(SquareMatrix::from_fn(v.dim(), |i, j| {
        if i > j {
            v2[(i, j)]
        } else if i == j {
            0.5 * v2[(i, i)]
        } else {
            0.0
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gens() -> Vec<SquareMatrix> {
        son_generators(3).unwrap()
    }

    fn dist(a: &SquareMatrix, b: &SquareMatrix) -> f64 {
        (a - b).frobenius_norm()
    }

    fn j2() -> SquareMatrix {
        so2_generator()
    }

    fn skew_from(v: &[f64], n: usize) -> SquareMatrix {
        let m = SquareMatrix::new(n, v.to_vec()).unwrap();
        (&m - &m.transpose()).scale(0.5)
    }

    fn arb_skew(n: usize, scale: f64) -> impl Strategy<Value = SquareMatrix> {
        proptest::collection::vec(-scale..scale, n * n).prop_map(move |v| skew_from(&v, n))
    }

    fn arb_any(n: usize, scale: f64) -> impl Strategy<Value = SquareMatrix> {
        proptest::collection::vec(-scale..scale, n * n).prop_map(move |v| SquareMatrix::new(n, v).unwrap())
    }

    #[test]
    fn psi_examples() {
        let z = SquareMatrix::zeros(3);
        let eye = SquareMatrix::identity(3);
        assert!(dist(&psi_apply(Parametrization::Cayley, &z).unwrap(), &eye) < 1e-15);
        assert!(dist(&psi_apply(Parametrization::Exponential { q: 1 }, &z).unwrap(), &eye) < 1e-15);

        let a = 0.5;
        let got = psi_apply(Parametrization::Cayley, &j2().scale(a)).unwrap();
        let expect =
            SquareMatrix::from_rows([[1.0 - a * a, -2.0 * a], [2.0 * a, 1.0 - a * a]]).scale(1.0 / (1.0 + a * a));
        assert!(dist(&got, &expect) < 1e-15);
    }

    #[test]
    fn cayley_pole_is_singular() {
        // I - Omega singular when Omega has eigenvalue 1
        let om = SquareMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(
            psi_apply(Parametrization::Cayley, &om),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn dexp_inv_examples() {
        let g = gens();
        let h = SquareMatrix::from_rows([[1.0, 2.0, 0.0], [0.0, 3.0, 1.0], [4.0, 0.0, 1.0]]);
        assert_eq!(dexp_inv_trunc(&g[0], &h, 0).unwrap(), h);

        let expect1 = &g[1] + &g[2].scale(0.5);
        assert!(dist(&dexp_inv_trunc(&g[0], &g[1], 1).unwrap(), &expect1) < 1e-15);

        let expect2 = &g[1].scale(11.0 / 12.0) + &g[2].scale(0.5);
        assert!(dist(&dexp_inv_trunc(&g[0], &g[1], 2).unwrap(), &expect2) < 1e-15);
    }

    #[test]
    fn dexp_inv_domain_and_range() {
        let big = gens()[0].scale(3.0);
        assert!(matches!(
            dexp_inv_trunc(&big, &gens()[1], 2),
            Err(Error::DomainError(_))
        ));
        assert!(matches!(
            dexp_inv_trunc(&gens()[0], &gens()[1], 9),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            dexp_inv_trunc(&gens()[0], &j2(), 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dcay_inv_examples() {
        let h = SquareMatrix::from_rows([[1.0, 2.0], [3.0, 4.0]]);
        let z = SquareMatrix::zeros(2);
        assert!(dist(&dcay_inv(&z, &h).unwrap(), &h.scale(0.5)) < 1e-15);
        assert!(dist(&dcay_inv(&j2(), &j2()).unwrap(), &j2()) < 1e-15);
        let om = SquareMatrix::from_rows([[0.1, -0.3], [0.2, 0.05]]);
        let lhs = dcay_inv(&om, &h.scale(2.0)).unwrap();
        let rhs = dcay_inv(&om, &h).unwrap().scale(2.0);
        assert!(dist(&lhs, &rhs) < 1e-15);
        assert!(dcay_inv(&om, &gens()[0]).is_err());
    }

    #[test]
    fn dpsi_inv_examples() {
        let g = gens();
        let h = SquareMatrix::from_rows([[1.0, 2.0, 0.0], [0.0, 3.0, 1.0], [4.0, 0.0, 1.0]]);
        let exp0 = Parametrization::Exponential { q: 0 };
        assert_eq!(dpsi_inv(exp0, &g[0], &h).unwrap(), h);
        let z = SquareMatrix::zeros(3);
        assert!(dist(&dpsi_inv(Parametrization::Cayley, &z, &h).unwrap(), &h.scale(0.5)) < 1e-15);
        let got = dpsi_inv(Parametrization::Exponential { q: 1 }, &g[0], &g[1]).unwrap();
        assert!(dist(&got, &(&g[1] + &g[2].scale(0.5))) < 1e-15);
    }

    #[test]
    fn cay_derivative_examples() {
        let h = SquareMatrix::from_rows([[1.0, 2.0], [3.0, 4.0]]);
        let ht = SquareMatrix::from_rows([[0.5, -1.0], [0.25, 2.0]]);
        let om = SquareMatrix::from_rows([[0.1, -0.3], [0.2, 0.05]]);
        let z = SquareMatrix::zeros(2);
        assert!(ddcayinv_dir(&om, &h, &z).unwrap().is_zero());
        let expect = (&(&ht * &h) - &(&h * &ht)).scale(0.5);
        assert!(dist(&ddcayinv_dir(&z, &h, &ht).unwrap(), &expect) < 1e-15);

        assert!(d2cayinv_dir(&h, &z).unwrap().is_zero());
        assert!(dist(&d2cayinv_dir(&j2(), &j2()).unwrap(), &j2()) < 1e-15);
    }

    #[test]
    fn exp_derivative_examples() {
        let g = gens();
        let z = SquareMatrix::zeros(3);
        let h = SquareMatrix::from_rows([[1.0, 2.0, 0.0], [0.0, 3.0, 1.0], [4.0, 0.0, 1.0]]);
        let ht = &g[0] + &g[2].scale(0.3);
        let expect = (&(&ht * &h) - &(&h * &ht)).scale(0.5);
        assert!(dist(&ddexpinv_dir(&z, &h, &ht).unwrap(), &expect) < 1e-15);
        assert!(ddexpinv_dir(&z, &g[1], &g[1]).unwrap().frobenius_norm() < 1e-15);

        let (x, y) = (&g[0], &g[1]);
        let mut expect = &(&(x * x) * y) + &(&(y * x) * x);
        expect.add_scaled(-2.0, &(&(x * y) * x));
        let expect = expect.scale(1.0 / 6.0);
        assert!(dist(&d2dexpinv_dir(&z, y, x).unwrap(), &expect) < 1e-15);
    }

    #[test]
    fn c_coeff_examples() {
        let z = SquareMatrix::zeros(2);
        assert!(c_coeff_cayley(&j2(), &z).unwrap().is_zero());
        assert!(dist(&c_coeff_cayley(&j2(), &j2()).unwrap(), &(-&j2())) < 1e-15);
        let g = gens();
        assert!(c_coeff_exp(&g[0], &SquareMatrix::zeros(3), 2).unwrap().is_zero());
    }

    #[test]
    fn generators() {
        let g = gens();
        assert_eq!(g.len(), 3);
        assert_eq!(
            g[0],
            SquareMatrix::from_rows([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        );
        assert_eq!(
            g[1],
            SquareMatrix::from_rows([[0.0, 0.0, -1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        );
        assert_eq!(
            g[2],
            SquareMatrix::from_rows([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
        );
        assert_eq!(son_generators(2).unwrap(), vec![j2()]);
        assert_eq!(son_generators(4).unwrap().len(), 6);
        for n in 2..6 {
            for m in son_generators(n).unwrap() {
                assert!((&m + &m.transpose()).is_zero());
            }
        }
        assert!(matches!(son_generators(1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn drift_examples() {
        assert!(drift_from_diffusion(&SquareMatrix::zeros(3)).unwrap().is_zero());
        let k = drift_from_diffusion(&gens()[0]).unwrap();
        assert!(dist(&k, &SquareMatrix::from_diagonal(&[-0.5, -0.5, 0.0])) < 1e-15);
        let not_skew = SquareMatrix::from_rows([[0.0, 1.0], [1.0, 0.0]]);
        assert!(matches!(drift_from_diffusion(&not_skew), Err(Error::NotSkew { .. })));
    }

    #[test]
    fn group_membership() {
        let so3 = GroupDescriptor::SpecialOrthogonal { dim: 3 };
        assert!(so3.contains(&SquareMatrix::identity(3), DEFAULT_DRIFT_TOL));
        let refl = SquareMatrix::from_diagonal(&[1.0, 1.0, -1.0]);
        assert!(!so3.contains(&refl, DEFAULT_DRIFT_TOL));
        assert!(!so3.contains(&SquareMatrix::identity(3).scale(2.0), DEFAULT_DRIFT_TOL));
    }

    // --- finite-difference oracles ---

    fn fd1(f: impl Fn(&SquareMatrix) -> SquareMatrix, om: &SquareMatrix, dir: &SquareMatrix) -> SquareMatrix {
        let eps = 1e-6;
        let plus = f(&(om + &dir.scale(eps)));
        let minus = f(&(om - &dir.scale(eps)));
        (&plus - &minus).scale(0.5 / eps)
    }

    fn fd2(f: impl Fn(&SquareMatrix) -> SquareMatrix, om: &SquareMatrix, dir: &SquareMatrix) -> SquareMatrix {
        let eps = 1e-3;
        let plus = f(&(om + &dir.scale(eps)));
        let mid = f(om);
        let minus = f(&(om - &dir.scale(eps)));
        (&(&plus + &minus) - &mid.scale(2.0)).scale(1.0 / (eps * eps))
    }

    fn scaled_to(m: SquareMatrix, norm: f64) -> SquareMatrix {
        let n = m.frobenius_norm();
        if n == 0.0 {
            m
        } else {
            m.scale(norm / n)
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ddcayinv_matches_fd(om in arb_any(3, 0.3), h in arb_any(3, 1.0), x in arb_any(3, 1.0)) {
            let got = ddcayinv_dir(&om, &h, &x).unwrap();
            let fd = fd1(|o| dcay_inv(o, &h).unwrap(), &om, &x);
            prop_assert!(dist(&got, &fd) <= 1e-8);
        }

        #[test]
        fn d2cayinv_matches_fd(om in arb_any(3, 0.3), h in arb_any(3, 1.0), x in arb_any(3, 1.0)) {
            let got = d2cayinv_dir(&h, &x).unwrap();
            let fd = fd2(|o| dcay_inv(o, &h).unwrap(), &om, &x);
            prop_assert!(dist(&got, &fd) <= 1e-5);
        }

        #[test]
        fn ddexpinv_matches_fd(om in arb_any(3, 1.0), h in arb_any(3, 1.0), x in arb_any(3, 1.0), r in 0.0..0.3f64) {
            let om = scaled_to(om, r);
            let got = ddexpinv_dir(&om, &h, &x).unwrap();
            let fd = fd1(|o| dexp_inv_trunc(o, &h, 4).unwrap(), &om, &x);
            prop_assert!(dist(&got, &fd) <= 1e-7, "err {:e}", dist(&got, &fd));
        }

        #[test]
        fn d2dexpinv_matches_fd(om in arb_any(3, 1.0), h in arb_any(3, 1.0), x in arb_any(3, 1.0), r in 0.0..0.3f64) {
            let om = scaled_to(om, r);
            let got = d2dexpinv_dir(&om, &h, &x).unwrap();
            let fd = fd2(|o| dexp_inv_trunc(o, &h, 4).unwrap(), &om, &x);
            prop_assert!(dist(&got, &fd) <= 1e-4, "err {:e}", dist(&got, &fd));
        }

        #[test]
        fn cayley_correction_matches_forward_composition(om in arb_skew(3, 0.3), v in arb_skew(3, 1.0)) {
            let gamma = dcay_inv(&om, &v).unwrap();
            let fd = fd1(|o| dcay(o, &gamma).unwrap(), &om, &gamma);
            let got = c_coeff_cayley(&v, &om).unwrap();
            prop_assert!(dist(&got, &fd) <= 1e-6);
        }

        #[test]
        fn exp_correction_matches_forward_composition(om in arb_skew(3, 1.0), v in arb_skew(3, 1.0)) {
            let om = scaled_to(om, 0.05);
            let gamma = dexp_inv_trunc(&om, &v, 8).unwrap();
            let fd = fd1(|o| dexp_trunc(o, &gamma, 20).unwrap(), &om, &gamma);
            let got = c_coeff_exp(&gamma, &om, 4).unwrap();
            prop_assert!(dist(&got, &fd) <= 1e-7, "err {:e}", dist(&got, &fd));
        }

        #[test]
        fn dexp_round_trip_order(om in arb_skew(3, 1.0), h in arb_skew(3, 1.0), q in 1usize..=3) {
            let err_at = |r: f64| {
                let o = scaled_to(om.clone(), r);
                let fwd = dexp_trunc(&o, &h, q + 1).unwrap();
                dist(&dexp_inv_trunc(&o, &fwd, q).unwrap(), &h)
            };
            let (e1, e2) = (err_at(0.1), err_at(0.05));
            prop_assume!(e1 > 1e-12);
            let ratio = e1 / e2;
            let target = 2f64.powi(q as i32 + 1);
            prop_assert!(ratio > 0.7 * target && ratio < 1.4 * target, "ratio {ratio}, q {q}");
        }

        #[test]
        fn cayley_inverse_is_exact(om in arb_any(3, 0.5), h in arb_any(3, 1.0)) {
            let back = dcay_inv(&om, &dcay(&om, &h).unwrap()).unwrap();
            prop_assert!(dist(&back, &h) <= 1e-12);
        }

        #[test]
        fn psi_maps_skew_into_son(om in arb_skew(4, 1.0)) {
            for p in [Parametrization::Cayley, Parametrization::Exponential { q: 2 }] {
                let q = psi_apply(p, &om).unwrap();
                prop_assert!(GroupDescriptor::orthogonality_defect(&q) <= 1e-12);
                prop_assert!((q.det() - 1.0).abs() <= 1e-10);
            }
        }

        #[test]
        fn dpsi_inv_is_linear(om in arb_skew(3, 0.5), h1 in arb_any(3, 1.0), h2 in arb_any(3, 1.0),
                              a in -2.0..2.0f64, b in -2.0..2.0f64) {
            for p in [Parametrization::Cayley, Parametrization::Exponential { q: 4 }] {
                let lhs = dpsi_inv(p, &om, &(&h1.scale(a) + &h2.scale(b))).unwrap();
                let rhs = &dpsi_inv(p, &om, &h1).unwrap().scale(a) + &dpsi_inv(p, &om, &h2).unwrap().scale(b);
                prop_assert!(dist(&lhs, &rhs) <= 1e-13);
            }
        }

        #[test]
        fn drift_identity(v in arb_skew(4, 2.0)) {
            let k = drift_from_diffusion(&v).unwrap();
            prop_assert!(dist(&(&k + &k.transpose()), &(&v * &v)) <= 1e-14);
        }
    }
}
