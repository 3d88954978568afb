//! Dense real square matrices sized at runtime.
//!
//! Every matrix in this crate (group elements, algebra elements, SDE
//! coefficients) is a [`SquareMatrix`]. Storage is row-major and stays on the
//! stack up to 4x4, which covers SO(2) and SO(3).

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use smallvec::SmallVec;

use crate::error::{Error, Result};

type Storage = SmallVec<[f64; 16]>;

/// Relative accuracy targeted by [`SquareMatrix::exp`].
pub const TOL_EXP: f64 = 1e-13;
/// Relative accuracy targeted by [`SquareMatrix::inverse`].
pub const TOL_INV: f64 = 1e-10;
/// Pivots below this fraction of the largest entry are treated as zero.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-12;

const EXP_TAYLOR_DEGREE: usize = 18;
const EXP_SCALED_NORM: f64 = 0.5;

#[derive(Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Storage,
}

impl SquareMatrix {
    /// Validated constructor: `entries` is row-major, length `dim * dim`, all finite.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMatrix("dimension must be at least 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if let Some(pos) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "entry ({}, {}) is not finite",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            dim,
            data: Storage::from_vec(entries),
        })
    }

    /// Builds a matrix from literal rows.
    ///
    /// Panics if an entry is not finite; use [`SquareMatrix::new`] for
    /// untrusted input.
    pub fn from_rows<const N: usize>(rows: [[f64; N]; N]) -> Self {
        assert!(N > 0, "empty matrix");
        let data: Storage = rows.iter().flat_map(|r| r.iter().copied()).collect();
        assert!(data.iter().all(|x| x.is_finite()), "non-finite literal");
        Self { dim: N, data }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be at least 1");
        Self {
            dim,
            data: smallvec::smallvec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub(crate) fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Storage::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entries.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: f64, other: &SquareMatrix) {
        check_same(self, other);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    /// Square root of the sum of squared entries.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "vector length must equal matrix dimension");
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Residual of skew-symmetry, `|M + M^T|_F`.
    pub fn skew_residual(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let s = self[(i, j)] + self[(j, i)];
                acc += s * s;
            }
        }
        acc.sqrt()
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.dim;
        let scale = self.max_abs();
        let threshold = SINGULAR_PIVOT_RATIO * scale;
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::SingularMatrix { pivot: 0.0, threshold });
        }
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let (piv_row, piv_abs) =
                (col..n)
                    .map(|r| (r, a[(r, col)].abs()))
                    .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if piv_abs <= threshold {
                return Err(Error::SingularMatrix {
                    pivot: piv_abs,
                    threshold,
                });
            }
            if piv_row != col {
                a.swap_rows(piv_row, col);
                inv.swap_rows(piv_row, col);
            }
            let p = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= p;
                inv[(col, j)] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[(r, j)] -= f * a[(col, j)];
                    inv[(r, j)] -= f * inv[(col, j)];
                }
            }
        }
        Ok(inv)
    }

    /// Determinant via LU with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.dim;
        let mut a = self.clone();
        let mut det = 1.0;
        for col in 0..n {
            let piv_row = (col..n)
                .max_by(|&x, &y| a[(x, col)].abs().total_cmp(&a[(y, col)].abs()))
                .unwrap_or(col);
            if a[(piv_row, col)] == 0.0 {
                return 0.0;
            }
            if piv_row != col {
                a.swap_rows(piv_row, col);
                det = -det;
            }
            let p = a[(col, col)];
            det *= p;
            for r in col + 1..n {
                let f = a[(r, col)] / p;
                for j in col..n {
                    a[(r, j)] -= f * a[(col, j)];
                }
            }
        }
        det
    }

    /// Matrix exponential by scaling and squaring around a fixed-degree
    /// Taylor polynomial. Non-finite input yields a non-finite result.
    pub fn exp(&self) -> Self {
        let n = self.dim;
        let norm = self.one_norm();
        if !norm.is_finite() {
            return Self::from_fn(n, |_, _| f64::NAN);
        }
        let squarings = if norm > EXP_SCALED_NORM {
            ((norm / EXP_SCALED_NORM).log2().ceil() as i32).clamp(0, 1100)
        } else {
            0
        };
        let x = self.scale(0.5f64.powi(squarings));
        let eye = Self::identity(n);
        // Horner: I + X (I + X/2 (I + X/3 ( ... )))
        let mut r = eye.clone();
        for k in (1..=EXP_TAYLOR_DEGREE).rev() {
            r = &eye + &(&x * &r).scale(1.0 / k as f64);
        }
        for _ in 0..squarings {
            r = &r * &r;
        }
        r
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        let n = self.dim;
        for j in 0..n {
            self.data.swap(a * n + j, b * n + j);
        }
    }
}

/// Frobenius norm, `sqrt(sum m_ij^2)`.
pub fn frobenius_norm(m: &SquareMatrix) -> f64 {
    m.frobenius_norm()
}

pub fn mat_inverse(m: &SquareMatrix) -> Result<SquareMatrix> {
    m.inverse()
}

pub fn mat_exp(m: &SquareMatrix) -> SquareMatrix {
    m.exp()
}

pub(crate) fn ensure_same_dim(a: &SquareMatrix, b: &SquareMatrix) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            left: a.dim,
            right: b.dim,
        });
    }
    Ok(())
}

/// `[A, B] = AB - BA`
pub fn commutator(a: &SquareMatrix, b: &SquareMatrix) -> Result<SquareMatrix> {
    ensure_same_dim(a, b)?;
    Ok(comm(a, b))
}

#[inline]
pub(crate) fn comm(a: &SquareMatrix, b: &SquareMatrix) -> SquareMatrix {
    &(a * b) - &(b * a)
}

/// `ad_Omega^k(H)`: `k` nested commutators `[Omega, [Omega, ... [Omega, H]]]`.
pub fn adjoint_power(omega: &SquareMatrix, h: &SquareMatrix, k: usize) -> Result<SquareMatrix> {
    ensure_same_dim(omega, h)?;
    let mut acc = h.clone();
    for _ in 0..k {
        acc = comm(omega, &acc);
    }
    Ok(acc)
}

#[inline]
fn check_same(a: &SquareMatrix, b: &SquareMatrix) {
    assert_eq!(
        a.dim, b.dim,
        "dimension mismatch: {}x{} vs {}x{}",
        a.dim, a.dim, b.dim, b.dim
    );
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl<'a> Add<&'a SquareMatrix> for &'a SquareMatrix {
    type Output = SquareMatrix;
    fn add(self, rhs: &SquareMatrix) -> SquareMatrix {
        check_same(self, rhs);
        SquareMatrix {
            dim: self.dim,
            data: self.data.iter().zip(rhs.data.iter()).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a SquareMatrix> for &'a SquareMatrix {
    type Output = SquareMatrix;
    fn sub(self, rhs: &SquareMatrix) -> SquareMatrix {
        check_same(self, rhs);
        SquareMatrix {
            dim: self.dim,
            data: self.data.iter().zip(rhs.data.iter()).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<'a> Mul<&'a SquareMatrix> for &'a SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, rhs: &SquareMatrix) -> SquareMatrix {
        check_same(self, rhs);
        let n = self.dim;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Mul<f64> for &SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, s: f64) -> SquareMatrix {
        self.scale(s)
    }
}

impl Neg for &SquareMatrix {
    type Output = SquareMatrix;
    fn neg(self) -> SquareMatrix {
        self.scale(-1.0)
    }
}

impl AddAssign<&SquareMatrix> for SquareMatrix {
    fn add_assign(&mut self, rhs: &SquareMatrix) {
        self.add_scaled(1.0, rhs);
    }
}

impl SubAssign<&SquareMatrix> for SquareMatrix {
    fn sub_assign(&mut self, rhs: &SquareMatrix) {
        self.add_scaled(-1.0, rhs);
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr<SquareMatrix> for SquareMatrix {
            type Output = SquareMatrix;
            fn $m(self, rhs: SquareMatrix) -> SquareMatrix {
                (&self).$m(&rhs)
            }
        }
        impl<'a> $tr<&'a SquareMatrix> for SquareMatrix {
            type Output = SquareMatrix;
            fn $m(self, rhs: &SquareMatrix) -> SquareMatrix {
                (&self).$m(rhs)
            }
        }
        impl<'a> $tr<SquareMatrix> for &'a SquareMatrix {
            type Output = SquareMatrix;
            fn $m(self, rhs: SquareMatrix) -> SquareMatrix {
                self.$m(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Mul<f64> for SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, s: f64) -> SquareMatrix {
        self.scale(s)
    }
}

impl Neg for SquareMatrix {
    type Output = SquareMatrix;
    fn neg(self) -> SquareMatrix {
        self.scale(-1.0)
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.dim {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.dim {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:.6e}", self[(i, j)])?;
            }
        }
        write!(f, "]")
    }
}
