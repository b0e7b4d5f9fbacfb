//! Bundle atlases, matrix-valued sections over a complex, the sup distance
//! d_W and homotopy subdivision.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FactorError, Result};
use crate::matrix::{Mat, ScalarKind, C64, ONE, ZERO};
use crate::mesh::{Point, Shape, SimplicialComplex};
use crate::symplectic::{symplectic_residual, SymplecticForm};

/// Structure group of the transition cocycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Orthogonal,
    Unitary,
    DiagonalSplit,
    Symplectic,
}

/// How the charts are glued.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Twist {
    None,
    /// Diagonal ±1 matrix per circle factor, applied across the overlap
    /// component where the chart angles differ by a full turn.
    Signs { signs: Vec<Vec<f64>> },
    /// Sphere clutching: rotation by degree·φ in the fiber plane (a, b).
    Clutching { degree: i32, plane: [usize; 2] },
}

/// Serializable description of an atlas over a given complex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtlasSpec {
    pub rank: usize,
    pub scalar: ScalarKind,
    pub structure: Structure,
    #[serde(default = "no_twist")]
    pub twist: Twist,
    /// Multiplies ψ₀₁ (and divides ψ₁₀); 1 for a genuine cocycle.
    #[serde(default = "unit_scale")]
    pub transition_scale: f64,
}

fn no_twist() -> Twist {
    Twist::None
}

fn unit_scale() -> f64 {
    1.0
}

pub const MAX_RANK: usize = 64;

#[derive(Clone, Debug)]
pub struct BundleAtlas {
    complex: Arc<SimplicialComplex>,
    spec: AtlasSpec,
}

impl BundleAtlas {
    pub fn new(complex: Arc<SimplicialComplex>, spec: AtlasSpec) -> Result<Self> {
        let bad = |m: String| Err(FactorError::InvalidAtlas(m));
        if spec.rank == 0 || spec.rank > MAX_RANK {
            return bad(format!("rank must lie in 1..={MAX_RANK}"));
        }
        if spec.structure == Structure::Symplectic && spec.rank % 2 != 0 {
            return Err(FactorError::OddDimension(spec.rank));
        }
        if !(spec.transition_scale.is_finite() && spec.transition_scale != 0.0) {
            return bad("transition_scale must be finite and nonzero".into());
        }
        match &spec.twist {
            Twist::None => {}
            Twist::Signs { signs } => {
                if signs.len() != complex.angle_factors() {
                    return bad(format!(
                        "sign twist needs one sign vector per circle factor ({})",
                        complex.angle_factors()
                    ));
                }
                if signs.iter().any(|s| s.len() != spec.rank || s.iter().any(|&x| x != 1.0 && x != -1.0)) {
                    return bad("sign vectors must have rank entries equal to ±1".into());
                }
                if spec.structure == Structure::Symplectic {
                    let k = spec.rank / 2;
                    if signs.iter().any(|s| (0..k).any(|i| s[i] != s[i + k])) {
                        return bad("symplectic sign twists must repeat the same signs on both Lagrangians".into());
                    }
                }
            }
            Twist::Clutching { plane, .. } => {
                if *complex.shape() != Shape::Sphere || complex.chart_count() != 2 {
                    return bad("clutching needs the two-cap sphere".into());
                }
                if plane[0] == plane[1] || plane.iter().any(|&a| a >= spec.rank) {
                    return bad("clutching plane must be two distinct fiber coordinates".into());
                }
                if spec.structure == Structure::DiagonalSplit
                    || (spec.structure == Structure::Symplectic && spec.rank != 2)
                {
                    return bad("clutching rotations are neither diagonal nor symplectic here".into());
                }
            }
        }
        Ok(Self { complex, spec })
    }

    pub fn complex(&self) -> &SimplicialComplex {
        &self.complex
    }

    pub fn complex_arc(&self) -> &Arc<SimplicialComplex> {
        &self.complex
    }

    pub fn spec(&self) -> &AtlasSpec {
        &self.spec
    }

    pub fn rank(&self) -> usize {
        self.spec.rank
    }

    pub fn scalar(&self) -> ScalarKind {
        self.spec.scalar
    }

    pub fn structure(&self) -> Structure {
        self.spec.structure
    }

    pub fn twist(&self) -> &Twist {
        &self.spec.twist
    }

    /// Same complex (by identity or content) and same description.
    pub fn same_as(&self, other: &BundleAtlas) -> bool {
        self.spec == other.spec
            && (Arc::ptr_eq(&self.complex, &other.complex) || self.complex.to_file() == other.complex.to_file())
    }

    /// Chart used to report values at p.
    pub fn home_chart(&self, p: &Point) -> usize {
        self.complex.chart_assignment()[p.simplex]
    }

    /// Charts containing p's simplex.
    pub fn charts_at(&self, p: &Point) -> Vec<usize> {
        (0..self.complex.chart_count())
            .filter(|&c| self.complex.chart_contains(c, p.simplex))
            .collect()
    }

    /// ψ_ij(p): maps frame j to frame i, so A_i = ψ_ij·A_j·ψ_ji.
    pub fn transition(&self, i: usize, j: usize, p: &Point) -> Mat {
        let n = self.spec.rank;
        if i == j {
            return Mat::identity(n);
        }
        let mut m = match &self.spec.twist {
            Twist::None => Mat::identity(n),
            Twist::Signs { signs } => {
                let ai = self.complex.local_coords(i, p);
                let aj = self.complex.local_coords(j, p);
                let mut d = vec![1.0; n];
                for (f, s) in signs.iter().enumerate() {
                    let turns = ((ai[f] - aj[f]) / (2.0 * PI)).round() as i64;
                    if turns.rem_euclid(2) == 1 {
                        for (x, y) in d.iter_mut().zip(s) {
                            *x *= y;
                        }
                    }
                }
                Mat::real_diag(&d)
            }
            Twist::Clutching { degree, plane } => {
                let x = self.complex.manifold_point(p);
                let phi = x[1].atan2(x[0]);
                // ψ₀₁ = R(dφ), ψ₁₀ = R(−dφ)
                let sign = if i == 0 { 1.0 } else { -1.0 };
                plane_rotation(n, plane[0], plane[1], sign * *degree as f64 * phi)
            }
        };
        if (i, j) == (0, 1) {
            m = m.scale_real(self.spec.transition_scale);
        } else if (i, j) == (1, 0) {
            m = m.scale_real(1.0 / self.spec.transition_scale);
        }
        m
    }

    /// Value given in chart `from` expressed in chart `to`.
    pub fn transport(&self, m: &Mat, to: usize, from: usize, p: &Point) -> Mat {
        if to == from {
            return m.clone();
        }
        let a = self.transition(to, from, p);
        let b = self.transition(from, to, p);
        &(&a * m) * &b
    }

    fn membership_residual(&self, m: &Mat) -> f64 {
        let unitary = m.unitarity_residual();
        match self.spec.structure {
            Structure::Orthogonal => unitary + m.entries().iter().map(|z| z.im.abs()).fold(0.0, f64::max),
            Structure::Unitary => unitary,
            Structure::DiagonalSplit => {
                let n = m.dim();
                let off = (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .filter(|(i, j)| i != j)
                    .map(|(i, j)| m[(i, j)].norm())
                    .fold(0.0, f64::max);
                unitary + off
            }
            Structure::Symplectic => unitary + symplectic_residual(m).unwrap_or(f64::INFINITY),
        }
    }
}

/// Rotation by angle a in coordinates (p, q) of n-space.
pub fn plane_rotation(n: usize, p: usize, q: usize, a: f64) -> Mat {
    let mut m = Mat::identity(n);
    m[(p, p)] = C64::new(a.cos(), 0.0);
    m[(q, q)] = C64::new(a.cos(), 0.0);
    m[(p, q)] = C64::new(-a.sin(), 0.0);
    m[(q, p)] = C64::new(a.sin(), 0.0);
    m
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtlasReport {
    pub membership_residual: f64,
    pub cocycle_residual: f64,
    pub overlap_points: usize,
    pub pass: bool,
}

/// Group membership and cocycle residuals over sampled overlap points.
pub fn validate_atlas(atlas: &BundleAtlas, order: usize) -> AtlasReport {
    let mut membership: f64 = 0.0;
    let mut cocycle: f64 = 0.0;
    let mut count = 0;
    for p in atlas.complex.sample_points(order.max(1)) {
        let charts = atlas.charts_at(&p);
        if charts.len() < 2 {
            continue;
        }
        count += 1;
        for &i in &charts {
            for &j in &charts {
                let psi = atlas.transition(i, j, &p);
                membership = membership.max(atlas.membership_residual(&psi));
                for &k in &charts {
                    let lhs = &psi * &atlas.transition(j, k, &p);
                    let rhs = atlas.transition(i, k, &p);
                    cocycle = cocycle.max((&lhs - &rhs).operator_norm());
                }
            }
        }
    }
    let tol = 1e-9;
    AtlasReport {
        membership_residual: membership,
        cocycle_residual: cocycle,
        overlap_points: count,
        pass: membership <= tol && cocycle <= tol,
    }
}

/// Pointwise class of a section's values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixClass {
    #[serde(rename = "GL")]
    General,
    #[serde(rename = "SL")]
    Special,
    /// SO (real) or SU (complex).
    #[serde(rename = "SO", alias = "SU")]
    Compact,
    #[serde(rename = "unipotent")]
    Unipotent,
    #[serde(rename = "symplectic")]
    Symplectic,
}

impl MatrixClass {
    /// Distance of m from the class (0 when inside).
    pub fn residual(&self, m: &Mat) -> f64 {
        match self {
            MatrixClass::General => {
                if m.determinant().norm() > 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            MatrixClass::Special => (m.determinant() - ONE).norm(),
            MatrixClass::Compact => m.unitarity_residual() + (m.determinant() - ONE).norm(),
            MatrixClass::Unipotent => {
                let n = &*m - &Mat::identity(m.dim());
                (&n * &n).operator_norm()
            }
            MatrixClass::Symplectic => symplectic_residual(m).unwrap_or(f64::INFINITY),
        }
    }
}

/// A matrix field evaluable at (time, chart, point); time-independent fields
/// ignore the time argument.
pub trait Field: Send + Sync {
    fn eval(&self, t: f64, chart: usize, p: &Point) -> Mat;
}

impl<F: Fn(f64, usize, &Point) -> Mat + Send + Sync> Field for F {
    fn eval(&self, t: f64, chart: usize, p: &Point) -> Mat {
        self(t, chart, p)
    }
}

/// A section of the endomorphism bundle (or a homotopy of them).
#[derive(Clone)]
pub struct Section {
    pub atlas: Arc<BundleAtlas>,
    pub field: Arc<dyn Field>,
    pub class: MatrixClass,
}

/// A one-parameter family of sections; `nullhomotopy` marks S₀ = I.
#[derive(Clone)]
pub struct Homotopy {
    pub atlas: Arc<BundleAtlas>,
    pub field: Arc<dyn Field>,
    pub class: MatrixClass,
    pub nullhomotopy: bool,
}

impl std::fmt::Debug for Section {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Section").field("atlas", self.atlas.spec()).field("class", &self.class).finish()
    }
}

impl std::fmt::Debug for Homotopy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Homotopy")
            .field("atlas", self.atlas.spec())
            .field("class", &self.class)
            .field("nullhomotopy", &self.nullhomotopy)
            .finish()
    }
}

impl Section {
    pub fn new(atlas: Arc<BundleAtlas>, field: Arc<dyn Field>, class: MatrixClass) -> Self {
        Self { atlas, field, class }
    }

    pub fn eval(&self, chart: usize, p: &Point) -> Mat {
        self.field.eval(1.0, chart, p)
    }

    pub fn eval_home(&self, p: &Point) -> Mat {
        self.eval(self.atlas.home_chart(p), p)
    }

    pub fn identity(atlas: Arc<BundleAtlas>) -> Self {
        let n = atlas.rank();
        Self::new(atlas, Arc::new(move |_t: f64, _c: usize, _p: &Point| Mat::identity(n)), MatrixClass::Unipotent)
    }
}

impl Homotopy {
    pub fn new(atlas: Arc<BundleAtlas>, field: Arc<dyn Field>, class: MatrixClass, nullhomotopy: bool) -> Self {
        Self {
            atlas,
            field,
            class,
            nullhomotopy,
        }
    }

    pub fn eval(&self, t: f64, chart: usize, p: &Point) -> Mat {
        self.field.eval(t, chart, p)
    }

    /// The section S_t.
    pub fn slice(&self, t: f64) -> Section {
        let f = self.field.clone();
        Section::new(
            self.atlas.clone(),
            Arc::new(move |_s: f64, c: usize, p: &Point| f.eval(t, c, p)),
            self.class,
        )
    }

    /// The constant homotopy at a section.
    pub fn constant(s: &Section) -> Self {
        let f = s.field.clone();
        Self::new(
            s.atlas.clone(),
            Arc::new(move |_t: f64, c: usize, p: &Point| f.eval(1.0, c, p)),
            s.class,
            false,
        )
    }
}

/// Compatibility across overlaps and class membership at sample points.
pub fn validate_section(s: &Section, order: usize) -> Result<()> {
    validate_field(&s.atlas, &*s.field, s.class, &[1.0], order)
}

pub fn validate_homotopy(h: &Homotopy, order: usize) -> Result<()> {
    let times: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
    validate_field(&h.atlas, &*h.field, h.class, &times, order)?;
    if h.nullhomotopy {
        for p in h.atlas.complex().sample_points(order) {
            let m = h.eval(0.0, h.atlas.home_chart(&p), &p);
            if (&m - &Mat::identity(m.dim())).max_abs() > 1e-9 {
                return Err(FactorError::InvalidSection("nullhomotopy does not start at the identity".into()));
            }
        }
    }
    Ok(())
}

fn validate_field(atlas: &BundleAtlas, f: &dyn Field, class: MatrixClass, times: &[f64], order: usize) -> Result<()> {
    for p in atlas.complex().sample_points(order) {
        let charts = atlas.charts_at(&p);
        for &t in times {
            let base = f.eval(t, charts[0], &p);
            if base.dim() != atlas.rank() || !base.is_finite() {
                return Err(FactorError::InvalidSection("value has wrong size or is not finite".into()));
            }
            if atlas.scalar() == ScalarKind::Real && !base.is_real(0.0) {
                return Err(FactorError::InvalidSection("complex value in a real bundle".into()));
            }
            let r = class.residual(&base);
            if r > 1e-9 {
                return Err(FactorError::InvalidSection(format!("class residual {r:e} at t = {t}")));
            }
            for &c in &charts[1..] {
                let other = f.eval(t, c, &p);
                let moved = atlas.transport(&base, c, charts[0], &p);
                let gap = (&other - &moved).operator_norm();
                if gap > 1e-9 {
                    return Err(FactorError::InvalidSection(format!(
                        "charts {} and {c} disagree by {gap:e}",
                        charts[0]
                    )));
                }
            }
        }
    }
    Ok(())
}

/// sup over samples of the fiber operator norm of f − g.
pub fn dw_distance(f: &Section, g: &Section, points: &[Point]) -> Result<f64> {
    if !f.atlas.same_as(&g.atlas) {
        return Err(FactorError::AtlasMismatch("sections live on different atlases".into()));
    }
    Ok(points
        .iter()
        .map(|p| {
            let c = f.atlas.home_chart(p);
            (&f.eval(c, p) - &g.eval(c, p)).operator_norm()
        })
        .fold(0.0, f64::max))
}

/// Pointwise product f·g.
pub fn compose_sections(f: &Section, g: &Section) -> Result<Section> {
    if !f.atlas.same_as(&g.atlas) {
        return Err(FactorError::AtlasMismatch("sections live on different atlases".into()));
    }
    let (a, b) = (f.field.clone(), g.field.clone());
    let class = match (f.class, g.class) {
        (x, y) if x == y && x != MatrixClass::Unipotent => x,
        (MatrixClass::General, _) | (_, MatrixClass::General) => MatrixClass::General,
        (MatrixClass::Symplectic, MatrixClass::Symplectic) => MatrixClass::Symplectic,
        _ => MatrixClass::Special,
    };
    Ok(Section::new(
        f.atlas.clone(),
        Arc::new(move |t: f64, c: usize, p: &Point| &a.eval(t, c, p) * &b.eval(t, c, p)),
        class,
    ))
}

/// Pointwise inverse.
pub fn invert_section(f: &Section) -> Section {
    let a = f.field.clone();
    Section::new(
        f.atlas.clone(),
        Arc::new(move |t: f64, c: usize, p: &Point| {
            a.eval(t, c, p).inverse().expect("section values are invertible")
        }),
        f.class,
    )
}

/// Greedy subdivision 0 = t₀ < … < t_m = 1 with
/// sup_p ‖F(t_{j+1})·F(t_j)⁻¹ − I‖ < ε, using bisection for each step.
pub fn subdivide<F>(eval: F, points: &[Point], charts: &[usize], eps: f64, max_steps: usize) -> Result<Vec<f64>>
where
    F: Fn(f64, usize, &Point) -> Mat,
{
    if !(eps > 0.0) {
        return Err(FactorError::BadParameter("epsilon must be positive".into()));
    }
    let residual = |inv: &[Mat], t: f64| -> f64 {
        points
            .iter()
            .zip(charts)
            .zip(inv)
            .map(|((p, &c), i)| {
                let step = &eval(t, c, p) * i;
                (&step - &Mat::identity(step.dim())).operator_norm()
            })
            .fold(0.0, f64::max)
    };
    let mut ts = vec![0.0];
    let mut t = 0.0;
    while t < 1.0 {
        if ts.len() > max_steps {
            return Err(FactorError::SubdivisionOverflow(max_steps));
        }
        let inv: Vec<Mat> = points
            .iter()
            .zip(charts)
            .map(|(p, &c)| eval(t, c, p).inverse().ok_or(FactorError::IllConditioned(f64::INFINITY)))
            .collect::<Result<_>>()?;
        let next = if residual(&inv, 1.0) < eps {
            1.0
        } else {
            let (mut lo, mut hi) = (t, 1.0);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if residual(&inv, mid) < eps {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-9 {
                    break;
                }
            }
            lo
        };
        if next <= t {
            return Err(FactorError::SubdivisionOverflow(max_steps));
        }
        ts.push(next);
        t = next;
    }
    if ts.len() - 1 > max_steps {
        return Err(FactorError::SubdivisionOverflow(max_steps));
    }
    Ok(ts)
}

/// Subdivision of a homotopy at its home-chart sample values.
pub fn subdivide_homotopy(h: &Homotopy, eps: f64, max_steps: usize, points: &[Point]) -> Result<Vec<f64>> {
    let charts: Vec<usize> = points.iter().map(|p| h.atlas.home_chart(p)).collect();
    subdivide(|t, c, p| h.eval(t, c, p), points, &charts, eps, max_steps)
}

// ---------------------------------------------------------------------------
// Generators

/// Which Lie algebra a random generator is projected to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algebra {
    /// Traceless.
    Sl,
    /// Skew-symmetric (real) or skew-Hermitian (complex).
    Skew,
    /// Hamiltonian: ΩH + HᵀΩ = 0.
    Sp,
    /// Hamiltonian and block-diagonal: diag(G, −Gᵀ).
    SpLagrangian,
    /// Strictly upper triangular.
    Nilpotent,
}

/// A product of cosines Π cos(freq_i·x_i + phase_i) in chart-local coordinates.
#[derive(Clone, Debug, PartialEq)]
struct Mode {
    freqs: Vec<f64>,
    phases: Vec<f64>,
}

impl Mode {
    fn eval(&self, x: &[f64]) -> f64 {
        self.freqs
            .iter()
            .zip(&self.phases)
            .zip(x)
            .map(|((f, ph), xi)| (f * xi + ph).cos())
            .product()
    }
}

/// Random smooth scalar functions whose behaviour across twisted overlaps is
/// prescribed: per circle factor, parity −1 means the function changes sign
/// over a full turn (half-integer frequencies).
#[derive(Clone, Debug)]
struct ModeSum {
    terms: Vec<(C64, Mode)>,
}

impl ModeSum {
    fn random(rng: &mut ChaCha8Rng, shape: &Shape, coords: usize, parity: &[f64], kind: ScalarKind, terms: usize) -> Self {
        let mut out = Vec::with_capacity(terms);
        for _ in 0..terms {
            let mut freqs = Vec::with_capacity(coords);
            let mut phases = Vec::with_capacity(coords);
            for i in 0..coords {
                let f = match shape {
                    Shape::Circle { .. } | Shape::Torus { .. } => {
                        let base = rng.gen_range(0..2) as f64;
                        if parity.get(i).copied().unwrap_or(1.0) < 0.0 {
                            base + 0.5
                        } else {
                            base
                        }
                    }
                    _ => rng.gen_range(0.0..2.0),
                };
                freqs.push(f);
                phases.push(rng.gen_range(0.0..2.0 * PI));
            }
            let c = match kind {
                ScalarKind::Real => C64::new(rng.gen_range(-1.0..1.0), 0.0),
                ScalarKind::Complex => C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            };
            out.push((c, Mode { freqs, phases }));
        }
        Self { terms: out }
    }

    fn eval(&self, x: &[f64]) -> C64 {
        self.terms.iter().map(|(c, m)| c * m.eval(x)).sum()
    }
}

/// Per-coordinate sign across a full turn of each circle factor.
fn twist_signs(atlas: &BundleAtlas) -> Vec<Vec<f64>> {
    let n = atlas.rank();
    match atlas.twist() {
        Twist::Signs { signs } => signs.clone(),
        _ => vec![vec![1.0; n]; atlas.complex().angle_factors()],
    }
}

fn entry_parity(signs: &[Vec<f64>], a: usize, b: usize) -> Vec<f64> {
    signs.iter().map(|s| s[a] * s[b]).collect()
}

fn coordinate_count(atlas: &BundleAtlas) -> usize {
    match atlas.complex().shape() {
        Shape::Circle { .. } => 1,
        Shape::Torus { .. } => 2,
        _ => atlas.complex().vertices()[0].len(),
    }
}

/// Keeps only the part of m commuting with rotations in the clutching plane.
fn clutching_commutant(m: &Mat, plane: [usize; 2]) -> Mat {
    let n = m.dim();
    let [a, b] = plane;
    let mut out = m.clone();
    for i in 0..n {
        for &p in &plane {
            if i != a && i != b {
                out[(i, p)] = ZERO;
                out[(p, i)] = ZERO;
            }
        }
    }
    let s = (m[(a, a)] + m[(b, b)]) * 0.5;
    let r = (m[(b, a)] - m[(a, b)]) * 0.5;
    out[(a, a)] = s;
    out[(b, b)] = s;
    out[(b, a)] = r;
    out[(a, b)] = -r;
    out
}

fn project(m: &Mat, algebra: Algebra, kind: ScalarKind) -> Mat {
    let n = m.dim();
    match algebra {
        Algebra::Sl => {
            let t = m.trace() / n as f64;
            m - &Mat::identity(n).scale(t)
        }
        Algebra::Skew => {
            let other = if kind == ScalarKind::Real { m.transpose() } else { m.adjoint() };
            let skew = (m - &other).scale_real(0.5);
            let t = skew.trace() / n as f64;
            &skew - &Mat::identity(n).scale(t)
        }
        Algebra::Sp => {
            let sym = (m + &m.transpose()).scale_real(0.5);
            let omega = SymplecticForm::new(n / 2).matrix();
            &omega.scale_real(-1.0) * &sym
        }
        Algebra::SpLagrangian => {
            let k = n / 2;
            let g = m.block(0, 0, k);
            Mat::block_diag(&g, &g.transpose().scale_real(-1.0))
        }
        Algebra::Nilpotent => Mat::from_fn(n, |i, j| if j > i { m[(i, j)] } else { ZERO }),
    }
}

/// Random twist-compatible Lie-algebra field A(x), normalized so that the
/// largest operator norm over the vertices equals `amplitude`.
#[derive(Clone, Debug)]
pub struct AlgebraField {
    atlas: Arc<BundleAtlas>,
    entries: Vec<ModeSum>,
    algebra: Algebra,
    scale: f64,
}

impl AlgebraField {
    pub fn random(atlas: Arc<BundleAtlas>, algebra: Algebra, amplitude: f64, seed: u64) -> Result<Self> {
        let n = atlas.rank();
        if matches!(algebra, Algebra::Sp | Algebra::SpLagrangian) && n % 2 != 0 {
            return Err(FactorError::OddDimension(n));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signs = twist_signs(&atlas);
        let coords = coordinate_count(&atlas);
        let shape = atlas.complex().shape().clone();
        let mut entries = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let parity = entry_parity(&signs, a, b);
                entries.push(ModeSum::random(&mut rng, &shape, coords, &parity, atlas.scalar(), 3));
            }
        }
        let mut f = Self {
            atlas,
            entries,
            algebra,
            scale: 1.0,
        };
        let c = f.atlas.complex();
        let peak = (0..c.vertices().len())
            .map(|v| {
                let p = c.vertex_point(v);
                f.eval_at(f.atlas.home_chart(&p), &p).operator_norm()
            })
            .fold(0.0, f64::max);
        f.scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
        Ok(f)
    }

    /// A(x) in the given chart.
    pub fn eval_at(&self, chart: usize, p: &Point) -> Mat {
        let n = self.atlas.rank();
        let x = self.atlas.complex().local_coords(chart, p);
        let raw = Mat::from_fn(n, |a, b| self.entries[a * n + b].eval(&x));
        let mut m = project(&raw, self.algebra, self.atlas.scalar());
        if let Twist::Clutching { plane, .. } = self.atlas.twist() {
            m = clutching_commutant(&m, *plane);
        }
        m.scale_real(self.scale)
    }
}

/// exp(t·A(x)).
impl Field for AlgebraField {
    fn eval(&self, t: f64, chart: usize, p: &Point) -> Mat {
        self.eval_at(chart, p).scale_real(t).exp()
    }
}

/// Π_m (I + t·c_m(x)·v_m(Ωv_m)ᵀ): each factor is the transvection along v_m
/// with w = c_m·v_m/2, so the family is a nullhomotopy through Sp.
#[derive(Clone, Debug)]
pub struct TransvectionProductField {
    atlas: Arc<BundleAtlas>,
    vectors: Vec<Vec<ModeSum>>,
    scale: f64,
}

impl TransvectionProductField {
    pub fn random(atlas: Arc<BundleAtlas>, count: usize, amplitude: f64, seed: u64) -> Result<Self> {
        let n = atlas.rank();
        if n % 2 != 0 {
            return Err(FactorError::OddDimension(n));
        }
        if matches!(atlas.twist(), Twist::Clutching { .. }) {
            return Err(FactorError::InvalidAtlas("transvection fields need a sign-twisted or trivial atlas".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signs = twist_signs(&atlas);
        let coords = coordinate_count(&atlas);
        let shape = atlas.complex().shape().clone();
        let vectors = (0..count)
            .map(|_| {
                (0..n)
                    .map(|a| {
                        let parity: Vec<f64> = signs.iter().map(|s| s[a]).collect();
                        ModeSum::random(&mut rng, &shape, coords, &parity, atlas.scalar(), 2)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            atlas,
            vectors,
            scale: amplitude,
        })
    }
}

impl Field for TransvectionProductField {
    fn eval(&self, t: f64, chart: usize, p: &Point) -> Mat {
        let n = self.atlas.rank();
        let x = self.atlas.complex().local_coords(chart, p);
        let form = SymplecticForm::new(n / 2);
        let mut acc = Mat::identity(n);
        for vm in &self.vectors {
            let v: Vec<C64> = vm.iter().map(|m| m.eval(&x)).collect();
            let ov = form.apply(&v);
            let e = &Mat::identity(n) + &Mat::outer(&v, &ov).scale_real(t * self.scale);
            acc = &e * &acc;
        }
        acc
    }
}

/// The loop θ ↦ diag(A(θ), A(θ)) ∈ Sp(4, ℝ) ∩ O(4), with A(θ) the plane
/// rotation, together with an explicit nullhomotopy through SU(2) ⊂ Sp(4, ℝ).
///
/// Writing (a, b) ↦ [[a, −b̄], [b, ā]]: for t ≤ ½, a = e^{iπt}, b = 0; for
/// t ≥ ½, with s = π(1 − t): a = cos s·cos θ + i·sin s, b = cos s·sin θ.
#[derive(Clone, Debug)]
pub struct RotationLoopField {
    atlas: Arc<BundleAtlas>,
}

impl RotationLoopField {
    pub fn new(atlas: Arc<BundleAtlas>) -> Result<Self> {
        if atlas.rank() != 4 || atlas.scalar() != ScalarKind::Real {
            return Err(FactorError::InvalidAtlas("rotation loop needs a real rank-4 bundle".into()));
        }
        if !matches!(atlas.complex().shape(), Shape::Circle { .. }) || *atlas.twist() != Twist::None {
            return Err(FactorError::InvalidAtlas("rotation loop lives on an untwisted circle".into()));
        }
        Ok(Self { atlas })
    }
}

/// X + iY ↦ [[X, Y], [−Y, X]] for a 2×2 unitary given by (a, b).
fn su2_to_sp4(a: C64, b: C64) -> Mat {
    let z = [[a, -b.conj()], [b, a.conj()]];
    Mat::from_fn(4, |i, j| {
        let e = z[i % 2][j % 2];
        let v = match (i / 2, j / 2) {
            (0, 0) | (1, 1) => e.re,
            (0, 1) => e.im,
            _ => -e.im,
        };
        C64::new(v, 0.0)
    })
}

impl Field for RotationLoopField {
    fn eval(&self, t: f64, _chart: usize, p: &Point) -> Mat {
        let x = self.atlas.complex().manifold_point(p);
        let theta = x[1].atan2(x[0]);
        let t = t.clamp(0.0, 1.0);
        let (a, b) = if t <= 0.5 {
            (C64::from_polar(1.0, PI * t), ZERO)
        } else {
            let s = PI * (1.0 - t);
            (
                C64::new(s.cos() * theta.cos(), s.sin()),
                C64::new(s.cos() * theta.sin(), 0.0),
            )
        };
        su2_to_sp4(a, b)
    }
}

/// Vertex samples (per time sample) interpolated linearly in space and time,
/// then retracted to the declared class. Each vertex value is given in the
/// vertex's home chart.
#[derive(Clone, Debug)]
pub struct SampledField {
    atlas: Arc<BundleAtlas>,
    times: Vec<f64>,
    values: Vec<Vec<Mat>>,
    class: MatrixClass,
}

impl SampledField {
    pub fn new(atlas: Arc<BundleAtlas>, times: Vec<f64>, values: Vec<Vec<Mat>>, class: MatrixClass) -> Result<Self> {
        let nv = atlas.complex().vertices().len();
        if times.is_empty() || times.len() != values.len() || times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(FactorError::InvalidSection("time samples must be increasing and match the values".into()));
        }
        for vs in &values {
            if vs.len() != nv || vs.iter().any(|m| m.dim() != atlas.rank() || !m.is_finite()) {
                return Err(FactorError::InvalidSection("need one finite rank×rank value per vertex".into()));
            }
        }
        Ok(Self {
            atlas,
            times,
            values,
            class,
        })
    }

    fn at_time_index(&self, k: usize, chart: usize, p: &Point) -> Mat {
        let c = self.atlas.complex();
        let n = self.atlas.rank();
        let mut acc = Mat::zeros(n);
        for (&v, &b) in c.simplices()[p.simplex].iter().zip(&p.bary) {
            if b == 0.0 {
                continue;
            }
            let home = c.home_chart(0, v);
            let moved = self.atlas.transport(&self.values[k][v], chart, home, p);
            acc = &acc + &moved.scale_real(b);
        }
        acc
    }
}

/// Nearest point of the class used after interpolation.
pub fn retract(m: &Mat, class: MatrixClass) -> Mat {
    match class {
        MatrixClass::Special => {
            let n = m.dim() as f64;
            let d = m.determinant();
            m.scale(ONE / d.powf(1.0 / n))
        }
        MatrixClass::Compact => match m.polar_unitary_and_inverse_positive() {
            Some((u, _)) => {
                let n = u.dim() as f64;
                let d = u.determinant();
                u.scale(ONE / d.powf(1.0 / n))
            }
            None => m.clone(),
        },
        _ => m.clone(),
    }
}

impl Field for SampledField {
    fn eval(&self, t: f64, chart: usize, p: &Point) -> Mat {
        let k = self.times.partition_point(|&s| s <= t);
        let raw = if k == 0 {
            self.at_time_index(0, chart, p)
        } else if k == self.times.len() {
            self.at_time_index(k - 1, chart, p)
        } else {
            let (t0, t1) = (self.times[k - 1], self.times[k]);
            let w = (t - t0) / (t1 - t0);
            let a = self.at_time_index(k - 1, chart, p);
            let b = self.at_time_index(k, chart, p);
            &a.scale_real(1.0 - w) + &b.scale_real(w)
        };
        retract(&raw, self.class)
    }
}
