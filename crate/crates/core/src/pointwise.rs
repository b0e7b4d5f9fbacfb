//! Single-matrix factorizations into elementary shears.
//!
//! All routines come in a *structured* form that returns a fixed-length factor
//! list whose i-th entry always plays the same role (so a factor can be masked
//! and glued across points), and a public form that prunes the identity
//! factors for presentation.

use crate::error::{FactorError, Result};
use crate::matrix::{basis_vector, compose_in_order, Mat, ShearFactor, C64, ONE, ZERO};

/// Modulus below which an elimination pivot counts as unsafe.
pub const PIVOT_GUARD: f64 = 0.5;
/// Accepted deviation of a determinant from one.
pub const DET_TOL: f64 = 1e-10;
/// Largest condition number accepted by the Gram-Schmidt reduction.
pub const CONDITION_BOUND: f64 = 1e8;
/// Orthogonality/unitarity residual under which an input is returned unchanged.
pub const FIXED_POINT_TOL: f64 = 1e-10;

/// Which kind of shear the algorithms emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShearStyle {
    /// Column/row shears plus two general shears per diagonal block.
    /// Parameters are rational in the entries (Lipschitz near the identity).
    Compact,
    /// Only single-entry shears I + c·E_ij. Needed when the frame comes from a
    /// line splitting; diagonal parameters are continuous but only Hölder-½.
    LineElementary,
}

/// A unipotent factor usable in a [`PointFactorization`].
pub trait UnipotentFactor: Clone {
    fn dim(&self) -> usize;
    /// E − I.
    fn nilpotent(&self) -> Mat;
    /// Size of the factor's parameters; zero exactly for the identity.
    fn magnitude(&self) -> f64;
    /// The factor with its nilpotent part multiplied by `c` (I + c·N).
    fn scaled(&self, c: f64) -> Self;

    fn matrix(&self) -> Mat {
        &Mat::identity(self.dim()) + &self.nilpotent()
    }

    /// I − N, the inverse of a square-zero unipotent.
    fn inverse(&self) -> Self {
        self.scaled(-1.0)
    }
}

impl UnipotentFactor for ShearFactor {
    fn dim(&self) -> usize {
        ShearFactor::dim(self)
    }
    fn nilpotent(&self) -> Mat {
        ShearFactor::nilpotent(self)
    }
    fn magnitude(&self) -> f64 {
        ShearFactor::magnitude(self)
    }
    fn scaled(&self, c: f64) -> Self {
        let alpha = self.functional().iter().map(|a| a * c).collect();
        ShearFactor::new(self.direction().to_vec(), alpha).expect("scaling keeps the pair nilpotent")
    }
}

/// Factors E₁, …, E_N (application order) with E_N ⋯ E₁ · input = residual.
#[derive(Clone, Debug)]
pub struct PointFactorization<F = ShearFactor> {
    pub factors: Vec<F>,
    pub residual: Mat,
}

impl<F: UnipotentFactor> PointFactorization<F> {
    /// E_N ⋯ E₁.
    pub fn compose(&self) -> Mat {
        let n = self.residual.dim();
        let ms: Vec<Mat> = self.factors.iter().map(|f| f.matrix()).collect();
        compose_in_order(n, &ms)
    }

    /// Drops factors that are exactly the identity.
    pub fn pruned(mut self) -> Self {
        self.factors.retain(|f| f.magnitude() > 0.0);
        self
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

fn check_special(s: &Mat) -> Result<()> {
    let det = s.determinant();
    if (det - ONE).norm() > DET_TOL {
        return Err(FactorError::NotSpecial(format!("{det}")));
    }
    Ok(())
}

/// Pivot-free LDU: S = L·diag(d)·U with L unit lower and U unit upper.
pub(crate) fn ldu_no_pivot(s: &Mat, guard: f64) -> Result<(Mat, Vec<C64>, Mat)> {
    let n = s.dim();
    let mut a = s.clone();
    let mut l = Mat::identity(n);
    for j in 0..n {
        let p = a[(j, j)];
        if p.norm() < guard {
            return Err(FactorError::NotNearIdentity(format!(
                "pivot {j} has modulus {:.3e} < {guard}",
                p.norm()
            )));
        }
        for i in j + 1..n {
            let m = a[(i, j)] / p;
            l[(i, j)] = m;
            for c in j..n {
                let t = a[(j, c)];
                a[(i, c)] -= m * t;
            }
            a[(i, j)] = ZERO;
        }
    }
    let d: Vec<C64> = (0..n).map(|i| a[(i, i)]).collect();
    let u = Mat::from_fn(n, |i, j| {
        if j > i {
            a[(i, j)] / d[i]
        } else if i == j {
            ONE
        } else {
            ZERO
        }
    });
    Ok((l, d, u))
}

/// Factors (application order) of L⁻¹ for unit lower triangular L.
fn unit_lower_inverse_factors(l: &Mat, style: ShearStyle) -> Vec<ShearFactor> {
    let n = l.dim();
    let mut out = Vec::new();
    // L = C₀C₁⋯C_{n−2} with C_j = I + l_j e_jᵀ, so C₀⁻¹ acts first.
    for j in 0..n.saturating_sub(1) {
        match style {
            ShearStyle::Compact => {
                let v: Vec<C64> = (0..n).map(|i| if i > j { -l[(i, j)] } else { ZERO }).collect();
                out.push(column_shear(v, j, n));
            }
            ShearStyle::LineElementary => {
                for i in j + 1..n {
                    out.push(ShearFactor::elementary(n, i, j, -l[(i, j)]));
                }
            }
        }
    }
    out
}

/// Factors (application order) of U⁻¹ for unit upper triangular U.
fn unit_upper_inverse_factors(u: &Mat, style: ShearStyle) -> Vec<ShearFactor> {
    let n = u.dim();
    let mut out = Vec::new();
    // U = R_{n−2}⋯R₀ with R_i = I + e_i u_iᵀ, so R_{n−2}⁻¹ acts first.
    for i in (0..n.saturating_sub(1)).rev() {
        match style {
            ShearStyle::Compact => {
                let alpha: Vec<C64> = (0..n).map(|j| if j > i { -u[(i, j)] } else { ZERO }).collect();
                out.push(row_shear(i, alpha, n));
            }
            ShearStyle::LineElementary => {
                for j in i + 1..n {
                    out.push(ShearFactor::elementary(n, i, j, -u[(i, j)]));
                }
            }
        }
    }
    out
}

fn column_shear(v: Vec<C64>, j: usize, n: usize) -> ShearFactor {
    ShearFactor::new(v, basis_vector(n, j)).expect("column shear is nilpotent by support")
}

fn row_shear(i: usize, alpha: Vec<C64>, n: usize) -> ShearFactor {
    ShearFactor::new(basis_vector(n, i), alpha).expect("row shear is nilpotent by support")
}

/// Embeds a 2-vector into coordinates (i, i+1) of an n-vector.
fn plane_vec(n: usize, i: usize, a: C64, b: C64) -> Vec<C64> {
    let mut v = vec![ZERO; n];
    v[i] = a;
    v[i + 1] = b;
    v
}

/// Shears (application order) whose product is diag(λ, 1/λ) on coordinates (i, i+1).
///
/// Compact: diag(λ, 1/λ) = E₁E₂ with
/// E₂ = I + r·(1,1)(−1,1)ᵀ and E₁ = I − r·(1, −1/λ)(1, λ)ᵀ, r = (1−λ)/(1+λ).
///
/// LineElementary: diag(λ, 1/λ) = U(a)L(b)U(c)L(d) with ab = λ−1,
/// c = −a/λ, d = −bλ and a = √|λ−1|.
pub(crate) fn plane_diagonal_factors(
    n: usize,
    i: usize,
    lambda: C64,
    style: ShearStyle,
) -> Result<Vec<ShearFactor>> {
    if lambda.norm() < 1e-12 {
        return Err(FactorError::SingularDiagonal {
            index: i,
            modulus: lambda.norm(),
        });
    }
    match style {
        ShearStyle::Compact => {
            let denom = ONE + lambda;
            if denom.norm() < PIVOT_GUARD {
                return Err(FactorError::NotNearIdentity(format!(
                    "diagonal block value {lambda} too close to -1"
                )));
            }
            let r = (ONE - lambda) / denom;
            let e2 = ShearFactor::new(
                plane_vec(n, i, ONE, ONE),
                plane_vec(n, i, -r, r),
            )?;
            let e1 = ShearFactor::new(
                plane_vec(n, i, ONE, -ONE / lambda),
                plane_vec(n, i, -r, -r * lambda),
            )?;
            Ok(vec![e2, e1])
        }
        ShearStyle::LineElementary => {
            let x = lambda - ONE;
            let a = x.norm().sqrt();
            let (a, b) = if a == 0.0 {
                (ZERO, ZERO)
            } else {
                (C64::new(a, 0.0), x / a)
            };
            let c = -a / lambda;
            let d = -b * lambda;
            Ok(vec![
                ShearFactor::elementary(n, i + 1, i, d),
                ShearFactor::elementary(n, i, i + 1, c),
                ShearFactor::elementary(n, i + 1, i, b),
                ShearFactor::elementary(n, i, i + 1, a),
            ])
        }
    }
}

/// Shears (application order) whose product is diag(δ) for det(δ) = 1.
///
/// Always returns 2(n−1) (Compact) or 4(n−1) (LineElementary) factors.
pub(crate) fn dissolve_diagonal(delta: &[C64], style: ShearStyle) -> Result<Vec<ShearFactor>> {
    let n = delta.len();
    for (index, d) in delta.iter().enumerate() {
        if d.norm() < 1e-12 {
            return Err(FactorError::SingularDiagonal {
                index,
                modulus: d.norm(),
            });
        }
    }
    let mut out = Vec::new();
    let mut lambda = ONE;
    // diag(δ) = Π_i B_i(λ_i), λ_i = δ₁⋯δ_i; the blocks commute.
    for i in 0..n.saturating_sub(1) {
        lambda *= delta[i];
        out.extend(plane_diagonal_factors(n, i, lambda, style)?);
    }
    Ok(out)
}

/// Whitehead-style dissolution of a determinant-one diagonal matrix into
/// single-entry shears, four per 2×2 block.
pub fn diagonal_to_elementary(d: &Mat) -> Result<Vec<ShearFactor>> {
    let n = d.dim();
    for i in 0..n {
        for j in 0..n {
            if i != j && d[(i, j)] != ZERO {
                return Err(FactorError::BadParameter("matrix is not diagonal".into()));
            }
        }
    }
    let delta: Vec<C64> = (0..n).map(|i| d[(i, i)]).collect();
    for (index, x) in delta.iter().enumerate() {
        if x.norm() < 1e-12 {
            return Err(FactorError::SingularDiagonal {
                index,
                modulus: x.norm(),
            });
        }
    }
    check_special(d)?;
    let mut factors = dissolve_diagonal(&delta, ShearStyle::LineElementary)?;
    factors.retain(|f| f.magnitude() > 0.0);
    Ok(factors)
}

/// Structured near-identity Gauss-Jordan: E_N ⋯ E₁ · S = I with no pivoting.
///
/// Length is 4(n−1) for Compact and n(n−1) + 4(n−1) for LineElementary.
pub fn gauss_jordan_factors(s: &Mat, style: ShearStyle) -> Result<Vec<ShearFactor>> {
    check_special(s)?;
    let (l, d, u) = ldu_no_pivot(s, PIVOT_GUARD)?;
    let inv_d: Vec<C64> = d.iter().map(|x| ONE / x).collect();
    let mut factors = unit_lower_inverse_factors(&l, style);
    factors.extend(dissolve_diagonal(&inv_d, style)?);
    factors.extend(unit_upper_inverse_factors(&u, style));
    debug_assert_eq!(factors.len(), structured_gj_len(s.dim(), style));
    Ok(factors)
}

/// Near-identity Gauss-Jordan; the residual is the identity.
pub fn gauss_jordan_near_identity(s: &Mat, style: ShearStyle) -> Result<PointFactorization> {
    let factors = gauss_jordan_factors(s, style)?;
    Ok(PointFactorization {
        factors,
        residual: Mat::identity(s.dim()),
    }
    .pruned())
}

/// Row-wise modified Gram-Schmidt: S = L·Q with L lower triangular with
/// positive diagonal and Q orthogonal/unitary.
pub(crate) fn row_gram_schmidt(s: &Mat) -> (Mat, Mat) {
    let n = s.dim();
    let mut l = Mat::zeros(n);
    let mut q: Vec<Vec<C64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = s.row(i);
        for (j, qj) in q.iter().enumerate() {
            let c: C64 = r.iter().zip(qj).map(|(a, b)| a * b.conj()).sum();
            for (x, y) in r.iter_mut().zip(qj) {
                *x -= c * y;
            }
            l[(i, j)] += c;
        }
        let norm = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        l[(i, i)] = C64::new(norm, 0.0);
        q.push(r.iter().map(|z| z / norm).collect());
    }
    let qm = Mat::from_fn(n, |i, j| q[i][j]);
    (l, qm)
}

fn condition_number(s: &Mat) -> f64 {
    let sv = s.singular_values();
    let smin = *sv.last().unwrap();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sv[0] / smin
    }
}

/// Structured Gram-Schmidt reduction: returns factors with
/// E_N ⋯ E₁ · S orthogonal/unitary of determinant one.
///
/// Orthogonal/unitary inputs (to [`FIXED_POINT_TOL`]) yield all-identity factors.
pub fn gram_schmidt_factors(s: &Mat, style: ShearStyle) -> Result<Vec<ShearFactor>> {
    check_special(s)?;
    let n = s.dim();
    let kappa = condition_number(s);
    if kappa > CONDITION_BOUND {
        return Err(FactorError::IllConditioned(kappa));
    }
    let len = structured_gs_len(n, style);
    if s.unitarity_residual() <= FIXED_POINT_TOL {
        return Ok(identity_factors(n, len));
    }
    let factors = match style {
        ShearStyle::LineElementary => {
            // S = L·Q, and L⁻¹ = diag(d)⁻¹ · L_u⁻¹ with L = L_u · diag(d).
            let (l, _q) = row_gram_schmidt(s);
            let d: Vec<C64> = (0..n).map(|i| l[(i, i)]).collect();
            let lu = Mat::from_fn(n, |i, j| l[(i, j)] / d[j]);
            let inv_d: Vec<C64> = d.iter().map(|x| ONE / x).collect();
            let mut factors = unit_lower_inverse_factors(&lu, style);
            factors.extend(dissolve_diagonal(&inv_d, style)?);
            factors
        }
        ShearStyle::Compact => {
            // S = Q·R with R = diag(d)·U_u, so Q = S·U_u⁻¹·diag(d)⁻¹; each
            // right factor F becomes the left factor S·F·S⁻¹.
            let (lt, _q) = row_gram_schmidt(&s.transpose());
            let r = lt.transpose();
            let d: Vec<C64> = (0..n).map(|i| r[(i, i)]).collect();
            let uu = Mat::from_fn(n, |i, j| r[(i, j)] / d[i]);
            let inv_d: Vec<C64> = d.iter().map(|x| ONE / x).collect();
            let mut right = dissolve_diagonal(&inv_d, style)?;
            right.extend(unit_upper_inverse_factors(&uu, style));
            let s_inv_t = s
                .inverse()
                .ok_or(FactorError::IllConditioned(f64::INFINITY))?
                .transpose();
            right
                .iter()
                .map(|f| ShearFactor::new(s.mul_vec(f.direction()), s_inv_t.mul_vec(f.functional())))
                .collect::<Result<Vec<_>>>()?
        }
    };
    debug_assert_eq!(factors.len(), len);
    Ok(factors)
}

pub(crate) fn structured_gs_len(n: usize, style: ShearStyle) -> usize {
    match style {
        ShearStyle::Compact => 3 * (n - 1),
        ShearStyle::LineElementary => n * (n - 1) / 2 + 4 * (n - 1),
    }
}

pub(crate) fn structured_gj_len(n: usize, style: ShearStyle) -> usize {
    match style {
        ShearStyle::Compact => 4 * (n - 1),
        ShearStyle::LineElementary => n * (n - 1) + 4 * (n - 1),
    }
}

fn identity_factors(n: usize, len: usize) -> Vec<ShearFactor> {
    (0..len)
        .map(|_| ShearFactor::new(basis_vector(n, 0), vec![ZERO; n]).unwrap())
        .collect()
}

/// Gram-Schmidt reduction to an orthogonal/unitary residual.
pub fn gram_schmidt_reduce(s: &Mat, style: ShearStyle) -> Result<PointFactorization> {
    let factors = gram_schmidt_factors(s, style)?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::test_util::*;
    use crate::matrix::{is_unipotent_rank_le, ScalarKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn product(factors: &[ShearFactor], n: usize) -> Mat {
        let mut acc = Mat::identity(n);
        for f in factors {
            acc = naive_mul(&f.matrix(), &acc);
        }
        acc
    }

    fn traceless(m: &Mat) -> Mat {
        let n = m.dim();
        let t = m.trace() / n as f64;
        m - &Mat::identity(n).scale(t)
    }

    #[test]
    fn gauss_jordan_identity_is_empty() {
        let f = gauss_jordan_near_identity(&Mat::identity(3), ShearStyle::Compact).unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn gauss_jordan_single_shear() {
        let mut s = Mat::identity(3);
        s[(0, 1)] = C64::new(0.05, 0.0);
        let f = gauss_jordan_near_identity(&s, ShearStyle::Compact).unwrap();
        assert_eq!(f.len(), 1);
        let mut expected = Mat::identity(3);
        expected[(0, 1)] = C64::new(-0.05, 0.0);
        assert_eq!(f.factors[0].matrix(), expected);
        assert_eq!(&f.compose() * &s, Mat::identity(3));
    }

    #[test]
    fn gauss_jordan_random_exp_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [ScalarKind::Real, ScalarKind::Complex] {
            let b = traceless(&random_mat(&mut rng, 3, kind, 1.0));
            let a = b.scale_real(0.05 / b.operator_norm());
            let s = a.exp();
            let f = gauss_jordan_near_identity(&s, ShearStyle::Compact).unwrap();
            assert!(f.len() <= 9);
            let rec = naive_mul(&product(&f.factors, 3), &s);
            assert!((&rec - &Mat::identity(3)).max_abs() <= 1e-11);
        }
    }

    #[test]
    fn gauss_jordan_line_elementary_is_single_entry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = traceless(&random_mat(&mut rng, 4, ScalarKind::Complex, 1.0));
        let s = b.scale_real(0.08 / b.operator_norm()).exp();
        let f = gauss_jordan_factors(&s, ShearStyle::LineElementary).unwrap();
        for e in &f {
            let nil = e.nilpotent();
            let nonzero = nil.entries().iter().filter(|z| z.norm() > 0.0).count();
            assert!(nonzero <= 1);
            for i in 0..4 {
                assert_eq!(nil[(i, i)], ZERO);
            }
        }
        let rec = &product(&f, 4) * &s;
        assert!((&rec - &Mat::identity(4)).max_abs() <= 1e-11);
    }

    #[test]
    fn gauss_jordan_rejects_far_and_non_special() {
        let s = Mat::from_real_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]);
        assert_eq!(
            gauss_jordan_near_identity(&s, ShearStyle::Compact).unwrap_err().name(),
            "NotNearIdentity"
        );
        let s = Mat::real_diag(&[1.1, 1.0]);
        assert_eq!(
            gauss_jordan_near_identity(&s, ShearStyle::Compact).unwrap_err().name(),
            "NotSpecial"
        );
    }

    #[test]
    fn gauss_jordan_parameters_vanish_continuously() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = traceless(&random_mat(&mut rng, 3, ScalarKind::Real, 1.0));
        let a = b.scale_real(0.05 / b.operator_norm());
        let params = |t: f64| -> Vec<f64> {
            gauss_jordan_factors(&a.scale_real(t).exp(), ShearStyle::Compact)
                .unwrap()
                .iter()
                .map(|f| f.nilpotent().max_abs())
                .collect()
        };
        let mut lipschitz: f64 = 0.0;
        let steps = 200;
        let mut prev = params(0.0);
        assert!(prev.iter().all(|&p| p == 0.0));
        for s in 1..=steps {
            let t = s as f64 / steps as f64;
            let cur = params(t);
            for (x, y) in cur.iter().zip(&prev) {
                lipschitz = lipschitz.max((x - y).abs() * steps as f64);
            }
            prev = cur;
        }
        assert!(lipschitz < 1.0, "empirical Lipschitz constant {lipschitz}");
    }

    #[test]
    fn gram_schmidt_fixed_point() {
        let theta: f64 = 0.3;
        let r = Mat::from_real_rows(&[
            vec![theta.cos(), -theta.sin(), 0.0],
            vec![theta.sin(), theta.cos(), 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let f = gram_schmidt_reduce(&r, ShearStyle::Compact).unwrap();
        assert!(f.is_empty());
        assert_eq!(f.residual, r);
    }

    #[test]
    fn gram_schmidt_unit_upper_triangular_goes_to_identity() {
        let mut s = Mat::identity(3);
        s[(0, 1)] = C64::new(2.0, 0.0);
        let f = gram_schmidt_reduce(&s, ShearStyle::Compact).unwrap();
        assert!((&f.residual - &Mat::identity(3)).max_abs() < 1e-14);
    }

    #[test]
    fn line_elementary_gram_schmidt_sends_unit_lower_to_identity() {
        let mut s = Mat::identity(3);
        s[(1, 0)] = C64::new(2.0, 0.0);
        let f = gram_schmidt_reduce(&s, ShearStyle::LineElementary).unwrap();
        assert!((&f.residual - &Mat::identity(3)).max_abs() < 1e-14);
    }

    #[test]
    fn line_elementary_gram_schmidt_reduces_unit_upper() {
        let mut s = Mat::identity(3);
        s[(0, 1)] = C64::new(2.0, 0.0);
        let f = gram_schmidt_reduce(&s, ShearStyle::LineElementary).unwrap();
        assert!(f.residual.unitarity_residual() < 1e-12);
        assert!((&(&f.compose() * &s) - &f.residual).max_abs() < 1e-12);
    }

    #[test]
    fn gram_schmidt_random_reduces() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in [ScalarKind::Real, ScalarKind::Complex] {
            for style in [ShearStyle::Compact, ShearStyle::LineElementary] {
                let m = random_mat(&mut rng, 4, kind, 1.0);
                let det = m.determinant();
                let s = m.scale(ONE / det.powf(0.25));
                let f = gram_schmidt_reduce(&s, style).unwrap();
                let q = &f.residual;
                assert!(naive_mul(&q.adjoint(), q).entries().len() == 16);
                assert!((&naive_mul(&q.adjoint(), q) - &Mat::identity(4)).max_abs() < 1e-10);
                assert!((q.determinant() - ONE).norm() < 1e-10);
                for e in &f.factors {
                    assert!(is_unipotent_rank_le(&e.matrix(), 1, 1e-10));
                }
                let again = gram_schmidt_reduce(q, style).unwrap();
                assert!(again.is_empty());
            }
        }
    }

    #[test]
    fn gram_schmidt_rejects_ill_conditioned() {
        let s = Mat::real_diag(&[1e5, 1e-5]);
        assert_eq!(
            gram_schmidt_reduce(&s, ShearStyle::Compact).unwrap_err().name(),
            "IllConditioned"
        );
    }

    #[test]
    fn diagonal_identity_is_empty() {
        assert!(diagonal_to_elementary(&Mat::identity(3)).unwrap().is_empty());
    }

    #[test]
    fn diagonal_two_by_two() {
        let d = Mat::real_diag(&[2.0, 0.5]);
        let f = diagonal_to_elementary(&d).unwrap();
        assert_eq!(f.len(), 4);
        let params: Vec<f64> = f
            .iter()
            .map(|e| e.nilpotent().entries().iter().map(|z| z.re).sum())
            .collect();
        // application order L(d), U(c), L(b), U(a) with (a, b, c, d) = (1, 1, −½, −2)
        assert_eq!(params, vec![-2.0, -0.5, 1.0, 1.0]);
        assert!((&product(&f, 2) - &d).max_abs() < 1e-12);
    }

    #[test]
    fn diagonal_three_embedded() {
        let d = Mat::real_diag(&[3.0, 1.0 / 3.0, 1.0]);
        let f = diagonal_to_elementary(&d).unwrap();
        assert_eq!(f.len(), 4);
        for e in &f {
            let nil = e.nilpotent();
            for i in 0..3 {
                assert_eq!(nil[(2, i)], ZERO);
                assert_eq!(nil[(i, 2)], ZERO);
            }
        }
        assert!((&product(&f, 3) - &d).max_abs() < 1e-12);
    }

    #[test]
    fn diagonal_errors() {
        let d = Mat::real_diag(&[1e-13, 1e13]);
        assert_eq!(diagonal_to_elementary(&d).unwrap_err().name(), "SingularDiagonal");
        let d = Mat::real_diag(&[2.0, 1.0]);
        assert_eq!(diagonal_to_elementary(&d).unwrap_err().name(), "NotSpecial");
    }

    #[test]
    fn compact_plane_factors_reconstruct() {
        for lambda in [C64::new(1.7, 0.0), C64::new(0.3, 0.0), C64::new(0.9, 0.4)] {
            let f = plane_diagonal_factors(2, 0, lambda, ShearStyle::Compact).unwrap();
            let p = product(&f, 2);
            let d = Mat::diag(&[lambda, ONE / lambda]);
            assert!((&p - &d).max_abs() < 1e-14);
        }
    }
}
