//! Metric charts, Levi-Civita connection and curvature by central finite
//! differences, the curvature automorphism exp(R(U, V)) and Kähler checks.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bundle::{AtlasSpec, BundleAtlas, Field, Homotopy, MatrixClass, Structure, Twist};
use crate::error::{FactorError, Result};
use crate::matrix::{Mat, ScalarKind, C64};
use crate::mesh::{Point, Shape, SimplicialComplex};
use crate::symplectic::SymplecticForm;

type RMat = DMatrix<f64>;

/// Central-difference step.
pub const MAX_METRIC_DIM: usize = 16;
pub const FD_STEP: f64 = 1e-4;
/// Smallest admissible metric eigenvalue.
pub const PD_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricGenerator {
    Euclidean,
    /// (θ, φ) chart, g = r²·diag(1, sin²θ).
    RoundSphere,
    FlatTorus,
    KahlerTorus,
    /// g = I + Σ coeff·Π x^powers in entries (i, j) and (j, i).
    CustomPolynomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub i: usize,
    pub j: usize,
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<PolyTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ComplexStructure {
    /// [[0, −I], [I, 0]] on flat charts; the quarter turn on the sphere.
    Standard,
    Constant { matrix: Vec<Vec<f64>> },
    /// R·J₀·Rᵀ with R the rotation by rate·x₀ in coordinates (0, 3).
    Rotating { rate: f64 },
}

/// A metric on a single coordinate chart, optionally with a complex structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricChart {
    pub dim: usize,
    pub generator: MetricGenerator,
    #[serde(default)]
    pub params: MetricParams,
    #[serde(default, rename = "J", skip_serializing_if = "Option::is_none")]
    pub j: Option<ComplexStructure>,
}

impl MetricChart {
    pub fn new(dim: usize, generator: MetricGenerator, params: MetricParams, j: Option<ComplexStructure>) -> Result<Self> {
        let m = Self {
            dim,
            generator,
            params,
            j,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(dim, MetricGenerator::Euclidean, MetricParams::default(), None).unwrap()
    }

    pub fn round_sphere(radius: f64) -> Self {
        let params = MetricParams {
            radius: Some(radius),
            terms: Vec::new(),
        };
        Self::new(2, MetricGenerator::RoundSphere, params, None).unwrap()
    }

    pub fn flat_torus() -> Self {
        Self::new(2, MetricGenerator::FlatTorus, MetricParams::default(), None).unwrap()
    }

    pub fn kahler_torus(dim: usize) -> Self {
        Self::new(dim, MetricGenerator::KahlerTorus, MetricParams::default(), Some(ComplexStructure::Standard)).unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FactorError::BadParameter(m.to_string()));
        if self.dim == 0 || self.dim > MAX_METRIC_DIM {
            return bad("metric dimension must lie in 1..=16");
        }
        match self.generator {
            MetricGenerator::RoundSphere if self.dim != 2 => return bad("round_sphere is two-dimensional"),
            MetricGenerator::RoundSphere if !(self.radius() > 0.0) => return bad("radius must be positive"),
            MetricGenerator::KahlerTorus if self.dim % 2 != 0 => return bad("kahler_torus needs even dimension"),
            _ => {}
        }
        for t in &self.params.terms {
            if t.i >= self.dim || t.j >= self.dim || t.powers.len() > self.dim || !t.coeff.is_finite() {
                return bad("polynomial term out of range");
            }
        }
        match &self.j {
            Some(ComplexStructure::Constant { matrix }) => {
                if matrix.len() != self.dim || matrix.iter().any(|r| r.len() != self.dim) {
                    return bad("J must be dim×dim");
                }
            }
            Some(ComplexStructure::Rotating { .. }) if self.dim < 4 || self.dim % 2 != 0 => {
                return bad("rotating J needs even dimension at least 4");
            }
            Some(_) if self.dim % 2 != 0 => return bad("a complex structure needs even dimension"),
            _ => {}
        }
        Ok(())
    }

    fn radius(&self) -> f64 {
        self.params.radius.unwrap_or(1.0)
    }

    pub fn metric(&self, x: &[f64]) -> RMat {
        let d = self.dim;
        match self.generator {
            MetricGenerator::RoundSphere => {
                let r2 = self.radius().powi(2);
                RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![r2, r2 * x[0].sin().powi(2)]))
            }
            MetricGenerator::CustomPolynomial => {
                let mut g = RMat::identity(d, d);
                for t in &self.params.terms {
                    let mono: f64 = t.powers.iter().zip(x).map(|(&p, xi)| xi.powi(p as i32)).product();
                    g[(t.i, t.j)] += t.coeff * mono;
                    if t.i != t.j {
                        g[(t.j, t.i)] += t.coeff * mono;
                    }
                }
                g
            }
            _ => RMat::identity(d, d),
        }
    }

    /// J at x, if the chart carries one.
    pub fn complex_structure(&self, x: &[f64]) -> Option<RMat> {
        let d = self.dim;
        let k = d / 2;
        let standard = || {
            let mut j = RMat::zeros(d, d);
            for a in 0..k {
                j[(k + a, a)] = 1.0;
                j[(a, k + a)] = -1.0;
            }
            j
        };
        let spec = match (&self.j, self.generator) {
            (Some(s), _) => s.clone(),
            (None, MetricGenerator::KahlerTorus) => ComplexStructure::Standard,
            (None, _) => return None,
        };
        Some(match spec {
            ComplexStructure::Standard if self.generator == MetricGenerator::RoundSphere => {
                let s = x[0].sin();
                RMat::from_row_slice(2, 2, &[0.0, -s, 1.0 / s, 0.0])
            }
            ComplexStructure::Standard => standard(),
            ComplexStructure::Constant { matrix } => RMat::from_fn(d, d, |a, b| matrix[a][b]),
            ComplexStructure::Rotating { rate } => {
                let a = rate * x[0];
                let mut r = RMat::identity(d, d);
                r[(0, 0)] = a.cos();
                r[(3, 3)] = a.cos();
                r[(0, 3)] = -a.sin();
                r[(3, 0)] = a.sin();
                &r * standard() * r.transpose()
            }
        })
    }
}

fn check_positive_definite(g: &RMat) -> Result<()> {
    let sym = (g + g.transpose()) * 0.5;
    let min = sym.symmetric_eigenvalues().min();
    if !(min > PD_FLOOR) {
        return Err(FactorError::NotPositiveDefinite(min));
    }
    Ok(())
}

fn shifted(x: &[f64], a: usize, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[a] += h;
    y
}

/// Γ^k_ij stored as data[(k·d + i)·d + j].
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    pub dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub fn christoffel(m: &MetricChart, x: &[f64]) -> Result<Christoffel> {
    christoffel_with_step(m, x, FD_STEP)
}

/// Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij).
pub fn christoffel_with_step(m: &MetricChart, x: &[f64], h: f64) -> Result<Christoffel> {
    let d = m.dim;
    let g = m.metric(x);
    check_positive_definite(&g)?;
    let ginv = g.try_inverse().ok_or(FactorError::NotPositiveDefinite(0.0))?;
    let dg: Vec<RMat> = (0..d)
        .map(|l| (m.metric(&shifted(x, l, h)) - m.metric(&shifted(x, l, -h))) / (2.0 * h))
        .collect();
    let mut data = vec![0.0; d * d * d];
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for l in 0..d {
                    s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                data[(k * d + i) * d + j] = 0.5 * s;
            }
        }
    }
    Ok(Christoffel { dim: d, data })
}

/// R(∂_i, ∂_j) for all i, j at x, indexed i·d + j; entry (l, k) is
/// ∂_iΓ^l_jk − ∂_jΓ^l_ik + Γ^l_im Γ^m_jk − Γ^l_jm Γ^m_ik.
pub fn riemann_coordinate(m: &MetricChart, x: &[f64], h: f64) -> Result<Vec<RMat>> {
    let d = m.dim;
    let gamma = christoffel_with_step(m, x, h)?;
    let mut dgamma = Vec::with_capacity(d);
    for a in 0..d {
        let p = christoffel_with_step(m, &shifted(x, a, h), h)?;
        let q = christoffel_with_step(m, &shifted(x, a, -h), h)?;
        dgamma.push(
            p.data
                .iter()
                .zip(&q.data)
                .map(|(u, v)| (u - v) / (2.0 * h))
                .collect::<Vec<f64>>(),
        );
    }
    let at = |v: &[f64], k: usize, i: usize, j: usize| v[(k * d + i) * d + j];
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            out.push(RMat::from_fn(d, d, |l, k| {
                let mut s = at(&dgamma[i], l, j, k) - at(&dgamma[j], l, i, k);
                for mm in 0..d {
                    s += gamma.get(l, i, mm) * gamma.get(mm, j, k) - gamma.get(l, j, mm) * gamma.get(mm, i, k);
                }
                s
            }));
        }
    }
    Ok(out)
}

/// A vector field given in chart coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VectorField {
    /// ∂_index.
    Coordinate { index: usize },
    Constant { components: Vec<f64> },
    /// x ↦ axis × x on the round sphere, in (θ, φ) components.
    Killing { axis: [f64; 3] },
}

impl VectorField {
    pub fn eval(&self, m: &MetricChart, x: &[f64]) -> Result<Vec<f64>> {
        let d = m.dim;
        match self {
            VectorField::Coordinate { index } if *index < d => {
                let mut v = vec![0.0; d];
                v[*index] = 1.0;
                Ok(v)
            }
            VectorField::Constant { components } if components.len() == d => Ok(components.clone()),
            VectorField::Killing { axis } if m.generator == MetricGenerator::RoundSphere => {
                Ok(killing_components(axis, x[0], x[1]))
            }
            _ => Err(FactorError::BadParameter(format!("vector field {self:?} does not fit the chart"))),
        }
    }
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn killing_components(axis: &[f64; 3], theta: f64, phi: f64) -> Vec<f64> {
    let (st, ct, sp, cp) = (theta.sin(), theta.cos(), phi.sin(), phi.cos());
    let x = [st * cp, st * sp, ct];
    let dtheta = [ct * cp, ct * sp, -st];
    let dphi = [-st * sp, st * cp, 0.0];
    let u = cross(axis, &x);
    vec![dot(&u, &dtheta), dot(&u, &dphi) / (st * st)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldPair {
    pub u: VectorField,
    pub v: VectorField,
}

/// Matrix of R(U(x), V(x)) in the coordinate frame.
pub fn riemann_endomorphism(m: &MetricChart, pair: &VectorFieldPair, x: &[f64]) -> Result<Mat> {
    Ok(to_mat(&riemann_real(m, pair, x, FD_STEP)?))
}

fn riemann_real(m: &MetricChart, pair: &VectorFieldPair, x: &[f64], h: f64) -> Result<RMat> {
    let d = m.dim;
    let u = pair.u.eval(m, x)?;
    let v = pair.v.eval(m, x)?;
    let r = riemann_coordinate(m, x, h)?;
    let mut out = RMat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let c = u[i] * v[j];
            if c != 0.0 {
                out += &r[i * d + j] * c;
            }
        }
    }
    Ok(out)
}

fn to_mat(r: &RMat) -> Mat {
    Mat::from_fn(r.nrows(), |i, j| C64::new(r[(i, j)], 0.0))
}

/// Cholesky factor L (g = L·Lᵀ); Lᵀ maps coordinate components to
/// orthonormal ones.
fn cholesky(g: &RMat) -> Result<RMat> {
    check_positive_definite(g)?;
    Ok(nalgebra::Cholesky::new(g.clone())
        .ok_or(FactorError::NotPositiveDefinite(0.0))?
        .l())
}

/// An endomorphism written in the g-orthonormal frame from Cholesky.
fn orthonormal(g: &RMat, a: &RMat) -> Result<RMat> {
    let l = cholesky(g)?;
    let lt = l.transpose();
    let lt_inv = lt.clone().try_inverse().ok_or(FactorError::NotPositiveDefinite(0.0))?;
    Ok(&lt * a * lt_inv)
}

/// Matrix of R(U, V) in a g-orthonormal frame.
pub fn riemann_orthonormal(m: &MetricChart, pair: &VectorFieldPair, x: &[f64]) -> Result<Mat> {
    Ok(to_mat(&orthonormal(&m.metric(x), &riemann_real(m, pair, x, FD_STEP)?)?))
}

/// exp(R(U, V)) in the coordinate frame.
pub fn curvature_automorphism(m: &MetricChart, pair: &VectorFieldPair, x: &[f64]) -> Result<Mat> {
    Ok(riemann_endomorphism(m, pair, x)?.exp())
}

/// |tr R| and ‖A + Aᵀ‖ for the orthonormal-frame matrix A of R(U, V).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvatureResiduals {
    pub trace: f64,
    pub skew: f64,
}

pub fn curvature_residuals(m: &MetricChart, pair: &VectorFieldPair, x: &[f64]) -> Result<CurvatureResiduals> {
    let r = riemann_real(m, pair, x, FD_STEP)?;
    let a = orthonormal(&m.metric(x), &r)?;
    Ok(CurvatureResiduals {
        trace: r.trace().abs(),
        skew: (&a + a.transpose()).norm(),
    })
}

/// Orthonormal frame (f₁, …, f_k, −Jf₁, …, −Jf_k) in which J = Ω, as the
/// columns of an orthogonal matrix acting on orthonormal components.
fn kahler_frame(j_on: &RMat) -> RMat {
    let d = j_on.nrows();
    let k = d / 2;
    let mut fs: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(k);
    for c in 0..d {
        if fs.len() == k {
            break;
        }
        let mut w = nalgebra::DVector::from_fn(d, |i, _| if i == c { 1.0 } else { 0.0 });
        for f in &fs {
            let jf = j_on * f;
            w -= f * f.dot(&w);
            w -= &jf * jf.dot(&w);
        }
        let n = w.norm();
        if n > 1e-6 {
            fs.push(w / n);
        }
    }
    let mut frame = RMat::zeros(d, d);
    for (a, f) in fs.iter().enumerate() {
        frame.set_column(a, f);
        frame.set_column(k + a, &(-(j_on * f)));
    }
    frame
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KahlerReport {
    /// ‖R·J − J·R‖.
    pub commutation: f64,
    /// ‖ΩA + AᵀΩ‖ in a frame with J = Ω and g = I.
    pub symplectic: f64,
    pub pass: bool,
}

/// Validates J (J² = −I, g-compatible, parallel) and reports the curvature
/// residuals.
pub fn kahler_checks(m: &MetricChart, pair: &VectorFieldPair, x: &[f64]) -> Result<KahlerReport> {
    let d = m.dim;
    let j = m
        .complex_structure(x)
        .ok_or_else(|| FactorError::NotKahler("no complex structure".into()))?;
    check_complex_structure(m, x, &j)?;
    let r = riemann_real(m, pair, x, FD_STEP)?;
    let commutation = (&r * &j - &j * &r).norm();
    let g = m.metric(x);
    let a_on = orthonormal(&g, &r)?;
    let j_on = orthonormal(&g, &j)?;
    let frame = kahler_frame(&j_on);
    let a = frame.transpose() * a_on * &frame;
    let omega = RMat::from_fn(d, d, |i, c| SymplecticForm::new(d / 2).matrix()[(i, c)].re);
    let symplectic = (&omega * &a + a.transpose() * &omega).norm();
    Ok(KahlerReport {
        commutation,
        symplectic,
        pass: commutation <= 1e-5 && symplectic <= 1e-5,
    })
}

fn check_complex_structure(m: &MetricChart, x: &[f64], j: &RMat) -> Result<()> {
    let d = m.dim;
    let id = RMat::identity(d, d);
    let square = (j * j + &id).norm();
    if square > 1e-8 {
        return Err(FactorError::NotKahler(format!("J² + I has norm {square:e}")));
    }
    let g = m.metric(x);
    let compat = (j.transpose() * &g * j - &g).norm();
    if compat > 1e-8 {
        return Err(FactorError::NotKahler(format!("g(J·, J·) differs from g by {compat:e}")));
    }
    // (∇_i J)^a_b = ∂_i J^a_b + Γ^a_ic J^c_b − Γ^c_ib J^a_c
    let h = FD_STEP;
    let gamma = christoffel(m, x)?;
    let mut worst: f64 = 0.0;
    for i in 0..d {
        let jp = m.complex_structure(&shifted(x, i, h)).expect("J present");
        let jm = m.complex_structure(&shifted(x, i, -h)).expect("J present");
        let dj = (jp - jm) / (2.0 * h);
        for a in 0..d {
            for b in 0..d {
                let mut s = dj[(a, b)];
                for c in 0..d {
                    s += gamma.get(a, i, c) * j[(c, b)] - gamma.get(c, i, b) * j[(a, c)];
                }
                worst = worst.max(s.abs());
            }
        }
    }
    if worst > 1e-4 {
        return Err(FactorError::NotKahler(format!("J is not parallel (|∇J| = {worst:e})")));
    }
    Ok(())
}

/// Which group the curvature automorphism is fed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureMode {
    Orthogonal,
    Symplectic,
}

/// x ↦ exp(t²·A(x)) with A the curvature endomorphism R(U, V) in an
/// orthonormal (or Kähler) frame, projected onto so (resp. sp) to remove
/// finite-difference noise. Surfaces get a trivial line added in orthogonal
/// mode so that the rank is 3.
///
/// On the sphere the tangent bundle is glued from the two caps by a rotation
/// of degree 2, and A is a rotation generator by angle f computed in a
/// spherical chart whose poles are far from the point.
#[derive(Clone, Debug)]
pub struct CurvatureField {
    complex: Arc<SimplicialComplex>,
    metric: MetricChart,
    pair: VectorFieldPair,
    mode: CurvatureMode,
    rank: usize,
}

impl CurvatureField {
    pub fn new(
        complex: Arc<SimplicialComplex>,
        metric: MetricChart,
        pair: VectorFieldPair,
        mode: CurvatureMode,
    ) -> Result<(Arc<BundleAtlas>, Self)> {
        metric.validate()?;
        let d = metric.dim;
        let sphere = *complex.shape() == Shape::Sphere;
        let bad = |m: &str| Err(FactorError::BadParameter(m.to_string()));
        if sphere {
            if metric.generator != MetricGenerator::RoundSphere {
                return bad("the icosphere carries the round metric");
            }
            if ![&pair.u, &pair.v].iter().all(|f| matches!(f, VectorField::Killing { .. })) {
                return bad("sphere curvature fields need Killing vector fields");
            }
        } else {
            let coords = match complex.shape() {
                Shape::Circle { .. } | Shape::Torus { .. } => {
                    if metric.generator == MetricGenerator::CustomPolynomial {
                        return bad("polynomial metrics are not periodic");
                    }
                    complex.angle_factors()
                }
                _ => complex.vertices()[0].len(),
            };
            if coords != d || metric.generator == MetricGenerator::RoundSphere {
                return bad("metric dimension does not match the complex coordinates");
            }
        }
        if mode == CurvatureMode::Symplectic && d % 2 != 0 {
            return Err(FactorError::OddDimension(d));
        }
        let rank = if mode == CurvatureMode::Orthogonal && d == 2 { 3 } else { d };
        let twist = if sphere {
            Twist::Clutching { degree: 2, plane: [0, 1] }
        } else {
            Twist::None
        };
        let structure = match mode {
            CurvatureMode::Orthogonal => Structure::Orthogonal,
            CurvatureMode::Symplectic => Structure::Symplectic,
        };
        let atlas = Arc::new(BundleAtlas::new(
            complex.clone(),
            AtlasSpec {
                rank,
                scalar: ScalarKind::Real,
                structure,
                twist,
                transition_scale: 1.0,
            },
        )?);
        Ok((
            atlas,
            Self {
                complex,
                metric,
                pair,
                mode,
                rank,
            },
        ))
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn class(&self) -> MatrixClass {
        match self.mode {
            CurvatureMode::Orthogonal => MatrixClass::Compact,
            CurvatureMode::Symplectic => MatrixClass::Symplectic,
        }
    }

    /// Chart coordinates used for the metric at p (and the rotation applied
    /// to the Killing axes on the sphere).
    fn chart_point(&self, chart: usize, p: &Point) -> (Vec<f64>, Option<[[f64; 3]; 2]>) {
        if *self.complex.shape() != Shape::Sphere {
            let x = match self.complex.shape() {
                Shape::Circle { .. } | Shape::Torus { .. } => self.complex.local_coords(chart, p),
                _ => self.complex.ambient(p),
            };
            return (x, None);
        }
        let x = self.complex.manifold_point(p);
        // cyclic relabelling puts the smallest coordinate on the polar axis
        let pole = (0..3).min_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs())).unwrap();
        let perm = |v: &[f64]| [v[(pole + 1) % 3], v[(pole + 2) % 3], v[pole]];
        let y = perm(&x);
        let axes = [&self.pair.u, &self.pair.v].map(|f| match f {
            VectorField::Killing { axis } => perm(axis),
            _ => unreachable!("checked in new"),
        });
        let theta = y[2].clamp(-1.0, 1.0).acos();
        let phi = y[1].atan2(y[0]);
        (vec![theta, phi], Some(axes))
    }

    fn local_pair(&self, axes: Option<[[f64; 3]; 2]>) -> VectorFieldPair {
        match axes {
            Some([a, b]) => VectorFieldPair {
                u: VectorField::Killing { axis: a },
                v: VectorField::Killing { axis: b },
            },
            None => self.pair.clone(),
        }
    }

    /// The curvature endomorphism at p in the bundle frame, before projection.
    fn raw_generator(&self, chart: usize, p: &Point) -> Result<RMat> {
        let (x, axes) = self.chart_point(chart, p);
        let pair = self.local_pair(axes);
        let r = riemann_real(&self.metric, &pair, &x, FD_STEP)?;
        let g = self.metric.metric(&x);
        let a_on = orthonormal(&g, &r)?;
        if axes.is_some() {
            // the sphere chart frame (∂θ, ∂φ) is oriented, so the skew part
            // is the rotation generator in any oriented frame
            return Ok(a_on);
        }
        match self.mode {
            CurvatureMode::Orthogonal => Ok(a_on),
            CurvatureMode::Symplectic => {
                let j = self
                    .metric
                    .complex_structure(&x)
                    .ok_or_else(|| FactorError::NotKahler("no complex structure".into()))?;
                let frame = kahler_frame(&orthonormal(&g, &j)?);
                Ok(frame.transpose() * a_on * &frame)
            }
        }
    }

    /// Projected generator (in so or sp, before stabilization) and the size
    /// of the projection.
    pub fn generator(&self, chart: usize, p: &Point) -> Result<(Mat, f64)> {
        let a = self.raw_generator(chart, p)?;
        let d = a.nrows();
        let sphere = *self.complex.shape() == Shape::Sphere;
        let projected = match self.mode {
            _ if sphere => (&a - a.transpose()) * 0.5,
            CurvatureMode::Orthogonal => (&a - a.transpose()) * 0.5,
            CurvatureMode::Symplectic => {
                // A ∈ sp iff ΩA is symmetric
                let omega = RMat::from_fn(d, d, |i, c| SymplecticForm::new(d / 2).matrix()[(i, c)].re);
                let oa = &omega * &a;
                let sym = (&oa + oa.transpose()) * 0.5;
                -(&omega * sym)
            }
        };
        let residual = (&a - &projected).norm();
        Ok((to_mat(&projected), residual))
    }

    /// Largest trace and skew residuals over the vertices.
    pub fn vertex_residuals(&self) -> Result<CurvatureResiduals> {
        let mut out = CurvatureResiduals { trace: 0.0, skew: 0.0 };
        for v in 0..self.complex.vertices().len() {
            let p = self.complex.vertex_point(v);
            let chart = self.complex.chart_assignment()[p.simplex];
            let (x, axes) = self.chart_point(chart, &p);
            let pair = self.local_pair(axes);
            let r = curvature_residuals(&self.metric, &pair, &x)?;
            out.trace = out.trace.max(r.trace);
            out.skew = out.skew.max(r.skew);
        }
        Ok(out)
    }

    /// Kähler checks at every vertex, worst case.
    pub fn vertex_kahler(&self) -> Result<KahlerReport> {
        let mut out = KahlerReport {
            commutation: 0.0,
            symplectic: 0.0,
            pass: true,
        };
        for v in 0..self.complex.vertices().len() {
            let p = self.complex.vertex_point(v);
            let chart = self.complex.chart_assignment()[p.simplex];
            let (x, axes) = self.chart_point(chart, &p);
            let r = kahler_checks(&self.metric, &self.local_pair(axes), &x)?;
            out.commutation = out.commutation.max(r.commutation);
            out.symplectic = out.symplectic.max(r.symplectic);
            out.pass &= r.pass;
        }
        Ok(out)
    }

    /// Largest projection residual over the vertices.
    pub fn projection_residual(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for v in 0..self.complex.vertices().len() {
            let p = self.complex.vertex_point(v);
            let chart = self.complex.chart_assignment()[p.simplex];
            worst = worst.max(self.generator(chart, &p)?.1);
        }
        Ok(worst)
    }

    pub fn homotopy(self, atlas: Arc<BundleAtlas>) -> Homotopy {
        let class = self.class();
        Homotopy::new(atlas, Arc::new(self), class, true)
    }
}

impl Field for CurvatureField {
    fn eval(&self, t: f64, chart: usize, p: &Point) -> Mat {
        match self.generator(chart, p) {
            Ok((a, _)) => {
                let e = a.scale_real(t * t).exp();
                if self.rank > e.dim() {
                    e.embed(self.rank)
                } else {
                    e
                }
            }
            Err(_) => Mat::identity(self.rank).scale_real(f64::NAN),
        }
    }
}

/// Closed-form curvature angle on the unit sphere: −⟨U×V, x⟩.
pub fn sphere_curvature_angle(u_axis: &[f64; 3], v_axis: &[f64; 3], x: &[f64; 3]) -> f64 {
    let u = cross(u_axis, x);
    let v = cross(v_axis, x);
    -dot(&cross(&u, &v), x)
}

/// Point of the (θ, φ) chart with θ away from the poles.
pub fn random_sphere_chart_point(rng: &mut impl rand::Rng) -> [f64; 2] {
    [rng.gen_range(0.2..PI - 0.2), rng.gen_range(-PI..PI)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{validate_homotopy, validate_atlas};
    use crate::mesh::{build_standard_complex, StandardKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coord_pair(i: usize, j: usize) -> VectorFieldPair {
        VectorFieldPair {
            u: VectorField::Coordinate { index: i },
            v: VectorField::Coordinate { index: j },
        }
    }

    #[test]
    fn flat_metrics_have_no_christoffel_symbols() {
        for m in [MetricChart::euclidean(3), MetricChart::flat_torus()] {
            let x = vec![0.3; m.dim];
            assert!(christoffel(&m, &x).unwrap().max_abs() < 1e-12);
            assert!(riemann_endomorphism(&m, &coord_pair(0, 1), &x).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn sphere_christoffel_closed_forms() {
        let m = MetricChart::round_sphere(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let [th, ph] = random_sphere_chart_point(&mut rng);
            let g = christoffel(&m, &[th, ph]).unwrap();
            assert!((g.get(0, 1, 1) + th.sin() * th.cos()).abs() < 1e-6);
            assert!((g.get(1, 0, 1) - th.cos() / th.sin()).abs() < 1e-6);
            assert!((g.get(1, 1, 0) - th.cos() / th.sin()).abs() < 1e-6);
            assert!(g.get(0, 0, 0).abs() < 1e-6 && g.get(1, 1, 1).abs() < 1e-6);
        }
    }

    #[test]
    fn sphere_curvature_at_sixty_degrees() {
        let m = MetricChart::round_sphere(1.0);
        let th = PI / 3.0;
        let r = riemann_endomorphism(&m, &coord_pair(0, 1), &[th, 0.4]).unwrap();
        // R(∂θ, ∂φ)∂φ = sin²θ ∂θ
        assert!((r[(0, 1)].re - 0.75).abs() < 1e-5);
        assert!(r[(1, 1)].re.abs() < 1e-5);
        let res = curvature_residuals(&m, &coord_pair(0, 1), &[th, 0.4]).unwrap();
        assert!(res.trace < 1e-6 && res.skew < 1e-6);
        let e = curvature_automorphism(&m, &coord_pair(0, 1), &[th, 0.4]).unwrap();
        assert!((e.determinant().re - 1.0).abs() < 1e-8);
        assert!(riemann_endomorphism(&m, &coord_pair(1, 1), &[th, 0.4]).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn antisymmetry_and_linearity() {
        let m = MetricChart::round_sphere(1.3);
        let x = [1.1, -0.7];
        let pair = VectorFieldPair {
            u: VectorField::Constant { components: vec![0.3, 1.2] },
            v: VectorField::Constant { components: vec![-0.8, 0.5] },
        };
        let swapped = VectorFieldPair {
            u: pair.v.clone(),
            v: pair.u.clone(),
        };
        let a = riemann_endomorphism(&m, &pair, &x).unwrap();
        let b = riemann_endomorphism(&m, &swapped, &x).unwrap();
        assert!((&a + &b).max_abs() < 1e-8);
        let scaled = VectorFieldPair {
            u: VectorField::Constant { components: vec![0.6, 2.4] },
            v: pair.v.clone(),
        };
        let c = riemann_endomorphism(&m, &scaled, &x).unwrap();
        assert!((&c - &a.scale_real(2.0)).max_abs() < 1e-6);
    }

    #[test]
    fn finite_difference_convergence() {
        let m = MetricChart::round_sphere(1.0);
        let (th, ph) = (0.9, 0.2);
        let err = |h: f64| (christoffel_with_step(&m, &[th, ph], h).unwrap().get(0, 1, 1) + th.sin() * th.cos()).abs();
        let ratio = err(1e-2) / err(5e-3);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn kahler_flat_torus_and_sphere() {
        let m = MetricChart::kahler_torus(2);
        let r = kahler_checks(&m, &coord_pair(0, 1), &[0.4, 1.0]).unwrap();
        assert_eq!((r.commutation, r.symplectic), (0.0, 0.0));
        assert!(r.pass);
        let s = MetricChart::new(2, MetricGenerator::RoundSphere, MetricParams::default(), Some(ComplexStructure::Standard)).unwrap();
        let r = kahler_checks(&s, &coord_pair(0, 1), &[1.0, 0.3]).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn non_kahler_structures_are_rejected() {
        let incompatible = MetricChart::new(
            2,
            MetricGenerator::CustomPolynomial,
            MetricParams {
                radius: None,
                terms: vec![PolyTerm { i: 1, j: 1, coeff: 1.0, powers: vec![2, 0] }],
            },
            Some(ComplexStructure::Standard),
        )
        .unwrap();
        let e = kahler_checks(&incompatible, &coord_pair(0, 1), &[0.5, 0.0]).unwrap_err();
        assert_eq!(e.name(), "NotKahler");
        let rotating = MetricChart::new(4, MetricGenerator::Euclidean, MetricParams::default(), Some(ComplexStructure::Rotating { rate: 1.0 })).unwrap();
        let e = kahler_checks(&rotating, &coord_pair(0, 1), &[0.5, 0.0, 0.0, 0.0]).unwrap_err();
        assert_eq!(e.name(), "NotKahler");
    }

    #[test]
    fn indefinite_metric_is_rejected() {
        let m = MetricChart::new(
            2,
            MetricGenerator::CustomPolynomial,
            MetricParams {
                radius: None,
                terms: vec![PolyTerm { i: 0, j: 0, coeff: -2.0, powers: vec![] }],
            },
            None,
        )
        .unwrap();
        assert_eq!(christoffel(&m, &[0.0, 0.0]).unwrap_err().name(), "NotPositiveDefinite");
    }

    #[test]
    fn sphere_curvature_field_matches_closed_form() {
        let c = Arc::new(build_standard_complex(StandardKind::Icosphere(1)).unwrap());
        let (ua, va) = ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]);
        let pair = VectorFieldPair {
            u: VectorField::Killing { axis: ua },
            v: VectorField::Killing { axis: va },
        };
        let (atlas, field) = CurvatureField::new(c.clone(), MetricChart::round_sphere(1.0), pair, CurvatureMode::Orthogonal).unwrap();
        assert!(validate_atlas(&atlas, 2).pass);
        for v in 0..c.vertices().len() {
            let p = c.vertex_point(v);
            let x = c.manifold_point(&p);
            let (a, _) = field.generator(0, &p).unwrap();
            let f = sphere_curvature_angle(&ua, &va, &[x[0], x[1], x[2]]);
            assert!((a[(1, 0)].re - f).abs() < 1e-6, "{} vs {f}", a[(1, 0)].re);
        }
        assert!(field.projection_residual().unwrap() < 1e-6);
        let h = field.homotopy(atlas);
        validate_homotopy(&h, 2).unwrap();
    }

    #[test]
    fn flat_torus_field_is_identity() {
        let c = Arc::new(build_standard_complex(StandardKind::TorusGrid(4)).unwrap());
        let (atlas, field) = CurvatureField::new(c.clone(), MetricChart::flat_torus(), coord_pair(0, 1), CurvatureMode::Orthogonal).unwrap();
        assert_eq!(atlas.rank(), 3);
        for p in c.sample_points(2) {
            assert_eq!(field.eval(1.0, atlas.home_chart(&p), &p), Mat::identity(3));
        }
        let (atlas, field) = CurvatureField::new(c.clone(), MetricChart::kahler_torus(2), coord_pair(0, 1), CurvatureMode::Symplectic).unwrap();
        assert_eq!(atlas.rank(), 2);
        validate_homotopy(&field.homotopy(atlas), 2).unwrap();
    }
}
