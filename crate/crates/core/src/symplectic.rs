//! Symplectic linear algebra: the standard form, transvections, and
//! symplectic versions of the Gram-Schmidt and near-identity Gauss-Jordan
//! processes.
//!
//! Every factor emitted here is block unit-triangular with respect to the
//! splitting into the first and last k coordinates, i.e. its vectors v, w lie
//! in a common Lagrangian.

use crate::error::{FactorError, Result};
use crate::matrix::{basis_vector, pair, vec_norm, Mat, C64, ONE, ZERO};
use crate::pointwise::{ldu_no_pivot, PointFactorization, UnipotentFactor, FIXED_POINT_TOL, PIVOT_GUARD};

/// Accepted relative defect |ω(v, w)| before correction.
pub const ISOTROPIC_PAIR_TOL: f64 = 1e-12;
/// Symplecticity tolerance required of inputs.
pub const SYMPLECTIC_INPUT_TOL: f64 = 1e-8;

/// The standard form Ω = [[0, I], [−I, 0]] on 2k-space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymplecticForm {
    pub half_dim: usize,
}

impl SymplecticForm {
    pub fn new(half_dim: usize) -> Self {
        Self { half_dim }
    }

    pub fn dim(&self) -> usize {
        2 * self.half_dim
    }

    pub fn matrix(&self) -> Mat {
        let k = self.half_dim;
        Mat::from_fn(2 * k, |i, j| {
            if i < k && j == i + k {
                ONE
            } else if i >= k && j + k == i {
                -ONE
            } else {
                ZERO
            }
        })
    }

    /// Ω·u.
    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        let k = self.half_dim;
        (0..2 * k)
            .map(|i| if i < k { u[i + k] } else { -u[i - k] })
            .collect()
    }

    /// ω(u, v) = uᵀΩv.
    pub fn eval(&self, u: &[C64], v: &[C64]) -> C64 {
        pair(u, &self.apply(v))
    }
}

/// u ↦ u + ω(u, v)·w + ω(u, w)·v with ω(v, w) = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TransvectionFactor {
    v: Vec<C64>,
    w: Vec<C64>,
}

impl TransvectionFactor {
    /// Builds the factor, correcting w so that ω(v, w) = 0 exactly.
    pub fn new(v: Vec<C64>, w: Vec<C64>) -> Result<Self> {
        let n = v.len();
        if n != w.len() || n % 2 != 0 {
            return Err(FactorError::OddDimension(n));
        }
        let form = SymplecticForm::new(n / 2);
        let nv = vec_norm(&v);
        let nw = vec_norm(&w);
        let defect = form.eval(&v, &w);
        if defect.norm() > ISOTROPIC_PAIR_TOL * (nv * nw).max(f64::MIN_POSITIVE) {
            return Err(FactorError::NotIsotropicPair(defect.norm()));
        }
        let mut w = w;
        if defect != ZERO && nv > 0.0 {
            // ω(v, w) = −(Ωv)ᵀw; remove the component along conj(Ωv).
            let a = form.apply(&v);
            let c = pair(&a, &w) / (nv * nv);
            for (x, y) in w.iter_mut().zip(&a) {
                *x -= c * y.conj();
            }
        }
        Ok(Self { v, w })
    }

    pub fn v(&self) -> &[C64] {
        &self.v
    }

    pub fn w(&self) -> &[C64] {
        &self.w
    }

    /// Image of u.
    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        let form = SymplecticForm::new(self.v.len() / 2);
        let a = form.eval(u, &self.v);
        let b = form.eval(u, &self.w);
        u.iter()
            .zip(self.w.iter().zip(&self.v))
            .map(|(x, (wi, vi))| x + a * wi + b * vi)
            .collect()
    }
}

impl UnipotentFactor for TransvectionFactor {
    fn dim(&self) -> usize {
        self.v.len()
    }

    /// w(Ωv)ᵀ + v(Ωw)ᵀ.
    fn nilpotent(&self) -> Mat {
        let form = SymplecticForm::new(self.v.len() / 2);
        let a = form.apply(&self.v);
        let b = form.apply(&self.w);
        &Mat::outer(&self.w, &a) + &Mat::outer(&self.v, &b)
    }

    fn magnitude(&self) -> f64 {
        vec_norm(&self.v) * vec_norm(&self.w)
    }

    fn scaled(&self, c: f64) -> Self {
        Self {
            v: self.v.clone(),
            w: self.w.iter().map(|x| x * c).collect(),
        }
    }
}

/// Builds a transvection; see [`TransvectionFactor::new`].
pub fn transvection(v: Vec<C64>, w: Vec<C64>) -> Result<TransvectionFactor> {
    TransvectionFactor::new(v, w)
}

/// V = L₁ ⊕ L₂ with L₁ the first k coordinates and L₂ the last k.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LagrangianSplitting {
    pub half_dim: usize,
}

impl LagrangianSplitting {
    pub fn new(half_dim: usize) -> Self {
        Self { half_dim }
    }

    pub fn first(&self) -> std::ops::Range<usize> {
        0..self.half_dim
    }

    pub fn second(&self) -> std::ops::Range<usize> {
        self.half_dim..2 * self.half_dim
    }

    fn inside(&self, u: &[C64], range: std::ops::Range<usize>, tol: f64) -> bool {
        let scale = vec_norm(u);
        u.iter()
            .enumerate()
            .all(|(i, x)| range.contains(&i) || x.norm() <= tol * scale)
    }

    /// Both vectors lie in L₁, or both in L₂.
    pub fn respects(&self, t: &TransvectionFactor) -> bool {
        let tol = 1e-14;
        let in_first = |u: &[C64]| self.inside(u, self.first(), tol);
        let in_second = |u: &[C64]| self.inside(u, self.second(), tol);
        (in_first(&t.v) && in_first(&t.w)) || (in_second(&t.v) && in_second(&t.w))
    }
}

/// ‖MᵀΩM − Ω‖_op.
pub fn symplectic_residual(m: &Mat) -> Result<f64> {
    let n = m.dim();
    if n % 2 != 0 {
        return Err(FactorError::OddDimension(n));
    }
    let omega = SymplecticForm::new(n / 2).matrix();
    Ok((&(&(&m.transpose() * &omega) * m) - &omega).operator_norm())
}

pub fn is_symplectic(m: &Mat, tol: f64) -> Result<bool> {
    Ok(symplectic_residual(m)? <= tol)
}

/// Membership in Sp ∩ O (real) or Sp ∩ U (complex).
pub fn in_compact_subgroup(m: &Mat, tol: f64) -> Result<bool> {
    Ok(symplectic_residual(m)? <= tol && m.unitarity_residual() <= tol)
}

/// Sum over i ≤ j of transvections realizing [[I, B], [0, I]] (upper) or
/// [[I, 0], [B, I]] (lower) for symmetric B. Fixed length k(k+1)/2.
fn block_triangular_factors(b: &Mat, upper: bool) -> Vec<TransvectionFactor> {
    let k = b.dim();
    let n = 2 * k;
    let offset = if upper { 0 } else { k };
    // upper block of (p,0),(q,0) is −(qpᵀ + pqᵀ); lower block of (0,p),(0,q) is +(qpᵀ + pqᵀ)
    let sign = if upper { -ONE } else { ONE };
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in i..k {
            let v = basis_vector(n, offset + i);
            let mut w = vec![ZERO; n];
            if i == j {
                w[offset + i] = sign * b[(i, i)] * 0.5;
            } else {
                w[offset + j] = sign * (b[(i, j)] + b[(j, i)]) * 0.5;
            }
            out.push(TransvectionFactor { v, w });
        }
    }
    out
}

/// Transvection [[I, B], [0, I]] (upper) or [[I, 0], [B, I]] (lower) with
/// B = qpᵀ + pqᵀ, both vectors given in k-space.
fn rank_two_block(p: &[C64], q: &[C64], upper: bool) -> TransvectionFactor {
    let k = p.len();
    let offset = if upper { 0 } else { k };
    let sign = if upper { -ONE } else { ONE };
    let mut v = vec![ZERO; 2 * k];
    let mut w = vec![ZERO; 2 * k];
    for i in 0..k {
        v[offset + i] = p[i];
        w[offset + i] = sign * q[i];
    }
    TransvectionFactor { v, w }
}

/// Transvections (application order) with product diag(M, M⁻ᵀ), M = I + e_i yᵀ, y_i = 0.
///
/// diag(M, M⁻ᵀ) = L(−C′)·U(B)·L(C)·U(−B) with B = β e_i e_iᵀ,
/// C = γ(e_i yᵀ + y e_iᵀ), C′ = C − γ y yᵀ, βγ = 1 and β = √‖y‖.
fn lift_row_shear(k: usize, i: usize, y: &[C64]) -> Vec<TransvectionFactor> {
    let norm = vec_norm(y);
    let (beta, gamma) = if norm == 0.0 {
        (0.0, 0.0)
    } else {
        (norm.sqrt(), 1.0 / norm.sqrt())
    };
    let ei = basis_vector(k, i);
    let zero = vec![ZERO; k];
    let half_b: Vec<C64> = ei.iter().map(|x| x * (beta * 0.5)).collect();
    let neg_half_b: Vec<C64> = half_b.iter().map(|x| -x).collect();
    let gy: Vec<C64> = y.iter().map(|x| x * gamma).collect();
    // −C′ = γ y yᵀ − γ(e_i yᵀ + y e_iᵀ) = p qᵀ + q pᵀ with p = y, q = γ(y/2 − e_i)
    let q: Vec<C64> = y
        .iter()
        .zip(&ei)
        .map(|(a, e)| (a * 0.5 - e) * gamma)
        .collect();
    let (p_last, q_last) = if norm == 0.0 { (&zero[..], &zero[..]) } else { (y, &q[..]) };
    vec![
        rank_two_block(&ei, &neg_half_b, true),
        rank_two_block(&ei, &gy, false),
        rank_two_block(&ei, &half_b, true),
        rank_two_block(p_last, q_last, false),
    ]
}

/// Transvections (application order) with product diag(d, 1/d) in the plane (i, k+i).
fn lift_diagonal_entry(k: usize, i: usize, d: C64) -> Vec<TransvectionFactor> {
    // diag(d, 1/d) = U(a)L(b)U(c)L(e), ab = d−1, c = −a/d, e = −bd
    let x = d - ONE;
    let a = x.norm().sqrt();
    let (a, b) = if a == 0.0 {
        (ZERO, ZERO)
    } else {
        (C64::new(a, 0.0), x / a)
    };
    let c = -a / d;
    let e = -b * d;
    let ei = basis_vector(k, i);
    let half = |s: C64| -> Vec<C64> { ei.iter().map(|z| z * s * 0.5).collect() };
    vec![
        rank_two_block(&ei, &half(e), false),
        rank_two_block(&ei, &half(c), true),
        rank_two_block(&ei, &half(b), false),
        rank_two_block(&ei, &half(a), true),
    ]
}

/// Transvections (application order) with product diag(G, G⁻ᵀ) for G unit lower
/// triangular, written as row shears R₁R₂⋯R_{k−1} (R_{k−1} acts first).
fn lift_unit_lower(g: &Mat) -> Vec<TransvectionFactor> {
    let k = g.dim();
    let mut out = Vec::new();
    for i in (1..k).rev() {
        let y: Vec<C64> = (0..k).map(|j| if j < i { g[(i, j)] } else { ZERO }).collect();
        out.extend(lift_row_shear(k, i, &y));
    }
    out
}

/// Same for G unit upper triangular, G = R_{k−2}⋯R₀ (R₀ acts first).
fn lift_unit_upper(g: &Mat) -> Vec<TransvectionFactor> {
    let k = g.dim();
    let mut out = Vec::new();
    for i in 0..k.saturating_sub(1) {
        let y: Vec<C64> = (0..k).map(|j| if j > i { g[(i, j)] } else { ZERO }).collect();
        out.extend(lift_row_shear(k, i, &y));
    }
    out
}

fn symmetrize(m: &Mat) -> Mat {
    (&*m + &m.transpose()).scale_real(0.5)
}

fn unit_triangular_inverse(m: &Mat) -> Mat {
    m.inverse().expect("unit triangular matrices are invertible")
}

/// Structured block elimination: transvections with E_N ⋯ E₁ · S = I.
///
/// S = L(X)·diag(A, A⁻ᵀ)·U(Y) with A = S₁₁, Y = A⁻¹S₁₂, X = S₂₁A⁻¹, and
/// A = L_A·D·U_A pivot-free with the given guard.
pub(crate) fn symplectic_elimination_factors(s: &Mat, guard: f64) -> Result<Vec<TransvectionFactor>> {
    let n = s.dim();
    if n % 2 != 0 {
        return Err(FactorError::OddDimension(n));
    }
    let k = n / 2;
    let a = s.block(0, 0, k);
    let (la, d, ua) = ldu_no_pivot(&a, guard)?;
    let a_inv = a
        .inverse()
        .ok_or_else(|| FactorError::NotNearIdentity("singular leading block".into()))?;
    let y = symmetrize(&(&a_inv * &s.block(0, k, k)));
    let x = symmetrize(&(&s.block(k, 0, k) * &a_inv));

    let mut out = block_triangular_factors(&x.scale_real(-1.0), false);
    // diag(A⁻¹, Aᵀ) = diag(U_A⁻¹,·)·diag(D⁻¹,·)·diag(L_A⁻¹,·)
    out.extend(lift_unit_lower(&unit_triangular_inverse(&la)));
    for (i, di) in d.iter().enumerate() {
        out.extend(lift_diagonal_entry(k, i, ONE / di));
    }
    out.extend(lift_unit_upper(&unit_triangular_inverse(&ua)));
    out.extend(block_triangular_factors(&y.scale_real(-1.0), true));
    Ok(out)
}

fn check_symplectic_input(s: &Mat) -> Result<()> {
    let r = symplectic_residual(s)?;
    if !(r <= SYMPLECTIC_INPUT_TOL) {
        return Err(FactorError::NotSymplectic(r));
    }
    Ok(())
}

/// Structured near-identity symplectic Gauss-Jordan (fixed factor count).
pub fn symplectic_gauss_jordan_factors(s: &Mat) -> Result<Vec<TransvectionFactor>> {
    check_symplectic_input(s)?;
    symplectic_elimination_factors(s, PIVOT_GUARD)
}

/// Near-identity symplectic Gauss-Jordan; the residual is the identity.
pub fn symplectic_gauss_jordan_near_identity(s: &Mat) -> Result<PointFactorization<TransvectionFactor>> {
    let factors = symplectic_gauss_jordan_factors(s)?;
    Ok(PointFactorization {
        factors,
        residual: Mat::identity(s.dim()),
    }
    .pruned())
}

/// Structured symplectic Gram-Schmidt: transvections with E_N ⋯ E₁ · S in the
/// compact subgroup. Uses the polar decomposition S = P·Q, whose positive
/// part P is symplectic; P⁻¹ is then eliminated blockwise (its leading block
/// is positive definite, so no pivot can vanish).
pub fn symplectic_gram_schmidt_factors(s: &Mat) -> Result<Vec<TransvectionFactor>> {
    check_symplectic_input(s)?;
    let sv = s.singular_values();
    let kappa = sv[0] / sv[sv.len() - 1];
    if !(kappa <= crate::pointwise::CONDITION_BOUND) {
        return Err(FactorError::IllConditioned(kappa));
    }
    let (_, p_inv) = s
        .polar_unitary_and_inverse_positive()
        .ok_or(FactorError::IllConditioned(kappa))?;
    let factors = symplectic_elimination_factors(&p_inv.inverse().unwrap(), 0.0)?;
    // factors reduce P to I, so their product is P⁻¹
    if in_compact_subgroup(s, FIXED_POINT_TOL)? {
        return Ok(factors.iter().map(|f| f.scaled(0.0)).collect());
    }
    Ok(factors)
}

/// Symplectic Gram-Schmidt reduction to Sp ∩ O / Sp ∩ U.
pub fn symplectic_gram_schmidt_reduce(s: &Mat) -> Result<PointFactorization<TransvectionFactor>> {
    let factors = symplectic_gram_schmidt_factors(s)?;
    if factors.iter().all(|f| f.magnitude() == 0.0) {
        return Ok(PointFactorization {
            factors: Vec::new(),
            residual: s.clone(),
        });
    }
    let mut out = PointFactorization {
        factors,
        residual: Mat::identity(s.dim()),
    };
    out.residual = &out.compose() * s;
    Ok(out.pruned())
}

/// The embedding U(k) → Sp(2k, ℝ) ∩ O(2k), X + iY ↦ [[X, Y], [−Y, X]].
pub fn unitary_to_real_symplectic(z: &Mat) -> Mat {
    let k = z.dim();
    Mat::from_fn(2 * k, |i, j| {
        let (bi, bj) = (i / k, j / k);
        let e = z[(i % k, j % k)];
        let v = match (bi, bj) {
            (0, 0) | (1, 1) => e.re,
            (0, 1) => e.im,
            _ => -e.im,
        };
        C64::new(v, 0.0)
    })
}
