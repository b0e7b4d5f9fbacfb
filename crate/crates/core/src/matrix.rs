//! Dense small-matrix arithmetic over ℝ or ℂ.
//!
//! Every matrix stores complex entries. A real matrix is one whose imaginary
//! parts are zero; the [`ScalarKind`] tag travels alongside in the places where
//! the distinction matters (orthogonal vs. unitary, serialization).

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FactorError, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// The ground field of a bundle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    Real,
    Complex,
}

/// Square matrix with row-major complex storage.
#[derive(Clone, PartialEq)]
pub struct Mat {
    n: usize,
    data: Vec<C64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat({}x{})", self.n, self.n)?;
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n)
                .map(|j| {
                    let z = self[(i, j)];
                    if z.im == 0.0 {
                        format!("{:.6}", z.re)
                    } else {
                        format!("{:.6}{:+.6}i", z.re, z.im)
                    }
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be positive");
        Mat {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a real matrix from rows. Panics on ragged input.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        Mat::from_fn(n, |i, j| {
            assert_eq!(rows[i].len(), n, "row {i} has wrong length");
            C64::new(rows[i][j], 0.0)
        })
    }

    /// Builds a matrix from complex rows, checking squareness.
    pub fn try_from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(FactorError::Parse("empty matrix".into()));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(FactorError::Parse("matrix is not square".into()));
        }
        let data: Vec<C64> = rows.into_iter().flatten().collect();
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(FactorError::Parse("non-finite matrix entry".into()));
        }
        Ok(Mat { n, data })
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = Mat::zeros(entries.len());
        for (i, &d) in entries.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn real_diag(entries: &[f64]) -> Self {
        let d: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Mat::diag(&d)
    }

    /// Matrix unit E_ij (zero-based).
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Mat::zeros(n);
        m[(i, j)] = ONE;
        m
    }

    /// Outer product v·wᵀ (no conjugation).
    pub fn outer(v: &[C64], w: &[C64]) -> Self {
        assert_eq!(v.len(), w.len());
        Mat::from_fn(v.len(), |i, j| v[i] * w[j])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn row(&self, i: usize) -> Vec<C64> {
        self.data[i * self.n..(i + 1) * self.n].to_vec()
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.data.iter().all(|z| z.im.abs() <= tol)
    }

    pub fn scale(&self, c: C64) -> Mat {
        Mat {
            n: self.n,
            data: self.data.iter().map(|&z| z * c).collect(),
        }
    }

    pub fn scale_real(&self, c: f64) -> Mat {
        self.scale(C64::new(c, 0.0))
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.n, |i, j| self[(j, i)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Mat {
        Mat::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn conj(&self) -> Mat {
        Mat {
            n: self.n,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Copy of the `size`×`size` block starting at (`row`, `col`).
    pub fn block(&self, row: usize, col: usize, size: usize) -> Mat {
        Mat::from_fn(size, |i, j| self[(row + i, col + j)])
    }

    pub fn set_block(&mut self, row: usize, col: usize, b: &Mat) {
        for i in 0..b.n {
            for j in 0..b.n {
                self[(row + i, col + j)] = b[(i, j)];
            }
        }
    }

    /// Block-diagonal matrix diag(a, b).
    pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
        let mut m = Mat::zeros(a.n + b.n);
        m.set_block(0, 0, a);
        m.set_block(a.n, a.n, b);
        m
    }

    /// Embeds `self` into the top-left corner of an identity of size `n`.
    pub fn embed(&self, n: usize) -> Mat {
        assert!(n >= self.n);
        let mut m = Mat::identity(n);
        m.set_block(0, 0, self);
        m
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self[(i, j)])
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<C64>) -> Mat {
        assert_eq!(m.nrows(), m.ncols());
        Mat::from_fn(m.nrows(), |i, j| m[(i, j)])
    }

    /// Singular values in non-increasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let svd = self.to_nalgebra().svd(false, false);
        let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    pub fn determinant(&self) -> C64 {
        self.to_nalgebra().lu().determinant()
    }

    pub fn inverse(&self) -> Option<Mat> {
        self.to_nalgebra()
            .try_inverse()
            .map(|m| Mat::from_nalgebra(&m))
    }

    /// ‖MᴴM − I‖ in operator norm: zero exactly for orthogonal/unitary M.
    pub fn unitarity_residual(&self) -> f64 {
        (&(&self.adjoint() * self) - &Mat::identity(self.n)).operator_norm()
    }

    pub fn operator_norm(&self) -> f64 {
        operator_norm(self)
    }

    pub fn exp(&self) -> Mat {
        matrix_exp(self)
    }

    /// Number of singular values above `tol · σ_max`.
    pub fn numerical_rank(&self, tol: f64) -> usize {
        let s = self.singular_values();
        let smax = s.first().copied().unwrap_or(0.0);
        if smax <= tol {
            return 0;
        }
        s.iter().filter(|&&x| x > tol * smax).count()
    }

    /// Polar decomposition M = U·P with U unitary and P Hermitian positive.
    /// Returns (U, P⁻¹) which is what the compact reductions consume.
    pub fn polar_unitary_and_inverse_positive(&self) -> Option<(Mat, Mat)> {
        let svd = self.to_nalgebra().svd(true, true);
        let u = svd.u?;
        let v_t = svd.v_t?;
        let s = &svd.singular_values;
        if s.iter().any(|&x| x <= 0.0) {
            return None;
        }
        let unitary = &u * &v_t;
        // M·Mᴴ = U Σ² Uᴴ, so (M Mᴴ)^{-1/2} = U Σ⁻¹ Uᴴ and M = (M Mᴴ)^{1/2} · U Vᴴ.
        let n = self.n;
        let mut sinv = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            sinv[(i, i)] = C64::new(1.0 / s[i], 0.0);
        }
        let pinv = &u * sinv * u.adjoint();
        Some((Mat::from_nalgebra(&unitary), Mat::from_nalgebra(&pinv)))
    }
}

impl<'a> Mul<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn mul(self, rhs: &'a Mat) -> Mat {
        assert_eq!(self.n, rhs.n, "dimension mismatch in product");
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
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

impl Mul for Mat {
    type Output = Mat;
    fn mul(self, rhs: Mat) -> Mat {
        &self * &rhs
    }
}

impl<'a> Add<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn add(self, rhs: &'a Mat) -> Mat {
        assert_eq!(self.n, rhs.n);
        Mat {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn sub(self, rhs: &'a Mat) -> Mat {
        assert_eq!(self.n, rhs.n);
        Mat {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale_real(-1.0)
    }
}

/// Product of a sequence of matrices in application order: the returned matrix
/// is `ms[last] · … · ms[0]`.
pub fn compose_in_order<'a>(n: usize, ms: impl IntoIterator<Item = &'a Mat>) -> Mat {
    let mut acc = Mat::identity(n);
    for m in ms {
        acc = m * &acc;
    }
    acc
}

/// Largest singular value.
pub fn operator_norm(m: &Mat) -> f64 {
    m.singular_values().first().copied().unwrap_or(0.0)
}

pub fn determinant(m: &Mat) -> C64 {
    m.determinant()
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn matrix_exp(a: &Mat) -> Mat {
    let n = a.dim();
    let norm = a.norm_one();
    if norm == 0.0 {
        return Mat::identity(n);
    }
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.scale_real(0.5f64.powi(squarings as i32));
    // ‖scaled‖₁ ≤ 1/4, so 18 terms are far below one ulp.
    let mut term = Mat::identity(n);
    let mut sum = Mat::identity(n);
    for k in 1..=18 {
        term = (&term * &scaled).scale_real(1.0 / k as f64);
        sum = &sum + &term;
        if term.max_abs() < 1e-18 * sum.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// True iff ‖(M−I)²‖ ≤ tol and the numerical rank of M−I at threshold tol is ≤ r.
pub fn is_unipotent_rank_le(m: &Mat, r: usize, tol: f64) -> bool {
    if !m.is_finite() {
        return false;
    }
    let nil = m - &Mat::identity(m.dim());
    if (&nil * &nil).operator_norm() > tol {
        return false;
    }
    if nil.operator_norm() <= tol {
        return true;
    }
    nil.numerical_rank(tol) <= r
}

/// Bilinear pairing Σ aᵢbᵢ (no conjugation).
pub fn pair(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn basis_vector(n: usize, i: usize) -> Vec<C64> {
    let mut v = vec![ZERO; n];
    v[i] = ONE;
    v
}

/// Relative tolerance for α(v) before the nilpotency correction is refused.
pub const NILPOTENT_PAIR_TOL: f64 = 1e-12;

/// Elementary map u ↦ u + α(u)·v with α(v) = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ShearFactor {
    direction: Vec<C64>,
    functional: Vec<C64>,
}

impl ShearFactor {
    /// Builds the shear, projecting α so that α(v) = 0 holds exactly.
    pub fn new(v: Vec<C64>, alpha: Vec<C64>) -> Result<Self> {
        assert_eq!(v.len(), alpha.len(), "direction/functional length mismatch");
        let av = pair(&alpha, &v);
        let scale = vec_norm(&alpha) * vec_norm(&v);
        if av.norm() > NILPOTENT_PAIR_TOL * scale.max(f64::MIN_POSITIVE) && av.norm() > 0.0 {
            return Err(FactorError::NotNilpotentPair(av.norm() / scale));
        }
        let vv: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let alpha = if av != ZERO && vv > 0.0 {
            let c = av / vv;
            alpha
                .iter()
                .zip(&v)
                .map(|(a, vi)| a - c * vi.conj())
                .collect()
        } else {
            alpha
        };
        Ok(ShearFactor {
            direction: v,
            functional: alpha,
        })
    }

    /// Standard elementary matrix I + c·E_ij, i ≠ j.
    pub fn elementary(n: usize, i: usize, j: usize, c: C64) -> Self {
        assert_ne!(i, j, "elementary shear needs distinct indices");
        let mut alpha = vec![ZERO; n];
        alpha[j] = c;
        ShearFactor {
            direction: basis_vector(n, i),
            functional: alpha,
        }
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn direction(&self) -> &[C64] {
        &self.direction
    }

    pub fn functional(&self) -> &[C64] {
        &self.functional
    }

    /// The nilpotent part v·αᵀ.
    pub fn nilpotent(&self) -> Mat {
        Mat::outer(&self.direction, &self.functional)
    }

    pub fn matrix(&self) -> Mat {
        &Mat::identity(self.dim()) + &self.nilpotent()
    }

    pub fn inverse(&self) -> ShearFactor {
        ShearFactor {
            direction: self.direction.clone(),
            functional: self.functional.iter().map(|a| -a).collect(),
        }
    }

    /// Size of the shear parameter, ‖v‖·‖α‖ = ‖E − I‖.
    pub fn magnitude(&self) -> f64 {
        vec_norm(&self.direction) * vec_norm(&self.functional)
    }

    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        let a = pair(&self.functional, u);
        u.iter().zip(&self.direction).map(|(x, v)| x + a * v).collect()
    }
}

/// Shear constructor mirroring E(u) = u + α(u)·v.
pub fn elementary_shear(v: Vec<C64>, alpha: Vec<C64>) -> Result<ShearFactor> {
    ShearFactor::new(v, alpha)
}

pub fn real_vec(xs: &[f64]) -> Vec<C64> {
    xs.iter().map(|&x| C64::new(x, 0.0)).collect()
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use rand::Rng;

    pub fn random_mat(rng: &mut impl Rng, n: usize, kind: ScalarKind, scale: f64) -> Mat {
        Mat::from_fn(n, |_, _| {
            let re = rng.gen_range(-1.0..1.0) * scale;
            let im = match kind {
                ScalarKind::Real => 0.0,
                ScalarKind::Complex => rng.gen_range(-1.0..1.0) * scale,
            };
            C64::new(re, im)
        })
    }

    pub fn random_vec(rng: &mut impl Rng, n: usize, kind: ScalarKind) -> Vec<C64> {
        (0..n)
            .map(|_| {
                let im = match kind {
                    ScalarKind::Real => 0.0,
                    ScalarKind::Complex => rng.gen_range(-1.0..1.0),
                };
                C64::new(rng.gen_range(-1.0..1.0), im)
            })
            .collect()
    }

    /// Hand-rolled triple loop, kept apart from `Mul` so tests can use it as an oracle.
    pub fn naive_mul(a: &Mat, b: &Mat) -> Mat {
        let n = a.dim();
        Mat::from_fn(n, |i, j| {
            let mut s = ZERO;
            for k in 0..n {
                s += a[(i, k)] * b[(k, j)];
            }
            s
        })
    }
}
