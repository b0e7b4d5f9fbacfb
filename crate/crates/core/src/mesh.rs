//! Simplicial complexes, their chart covers, sample points and cutoff functions.
//!
//! A complex is stored by its top simplices (sorted vertex tuples) together
//! with ambient vertex coordinates. Charts are sets of top simplices; a point
//! is a top simplex plus barycentric coordinates.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FactorError, Result};

/// Which standard space a complex triangulates; drives retraction and chart
/// coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Interval,
    Circle { n: usize },
    Torus { n: usize },
    Sphere,
    Custom,
}

/// Parameters of the generated standard complexes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StandardKind {
    Interval(usize),
    Circle(usize),
    TorusGrid(usize),
    Icosphere(usize),
}

impl StandardKind {
    /// Parses names like `interval`, `circle`, `torus_grid`, `icosphere`.
    pub fn from_name(name: &str, size: usize) -> Result<Self> {
        match name {
            "interval" => Ok(Self::Interval(size)),
            "circle" => Ok(Self::Circle(size)),
            "torus_grid" | "torus" => Ok(Self::TorusGrid(size)),
            "icosphere" | "sphere" => Ok(Self::Icosphere(size)),
            other => Err(FactorError::BadParameter(format!("unknown complex kind {other:?}"))),
        }
    }
}

/// A point of the realized complex.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub simplex: usize,
    pub bary: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SimplicialComplex {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    simplices: Vec<Vec<usize>>,
    charts: Vec<Vec<usize>>,
    chart_assignment: Vec<usize>,
    shape: Shape,
    faces: Vec<Vec<Vec<usize>>>,
    stars: Vec<Vec<Vec<usize>>>,
    home_charts: Vec<Vec<usize>>,
    closed: bool,
}

/// Serialized form: `simplices` maps each dimension to its face list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexFile {
    pub vertices: Vec<Vec<f64>>,
    pub simplices: BTreeMap<String, Vec<Vec<usize>>>,
    pub charts: Vec<Vec<usize>>,
    pub chart_assignment: Vec<usize>,
    #[serde(default = "custom_shape")]
    pub shape: Shape,
}

fn custom_shape() -> Shape {
    Shape::Custom
}

fn subsets(s: &[usize], size: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(s: &[usize], size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..s.len() {
            cur.push(s[i]);
            rec(s, size, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(s, size, 0, &mut Vec::new(), out);
}

/// Wraps an angle into (c − π, c + π].
pub fn lift_angle(angle: f64, center: f64) -> f64 {
    let mut d = (angle - center).rem_euclid(2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    }
    center + d
}

/// The two arcs covering an n-gon: edge sets and the center angle of each arc.
///
/// Edge e_i joins vertices i and i+1. Arc A = e_0..e_h, arc B = e_h..e_{n−1}, e_0
/// with h = ⌊n/2⌋; every vertex star lies in one arc and the overlap {e_0, e_h}
/// has two components.
pub(crate) fn circle_arcs(n: usize) -> [(Vec<usize>, f64); 2] {
    let h = n / 2;
    let step = 2.0 * PI / n as f64;
    let a: Vec<usize> = (0..=h).collect();
    let mut b: Vec<usize> = (h..n).collect();
    b.insert(0, 0);
    let center_a = (h as f64 + 1.0) * step / 2.0;
    let center_b = (h as f64 + n as f64 + 1.0) * step / 2.0;
    [(a, center_a), (b, center_b)]
}

impl SimplicialComplex {
    /// Builds and validates a complex from raw parts.
    pub fn new(
        vertices: Vec<Vec<f64>>,
        simplices: Vec<Vec<usize>>,
        charts: Vec<Vec<usize>>,
        chart_assignment: Vec<usize>,
        shape: Shape,
    ) -> Result<Self> {
        let invalid = |m: String| FactorError::InvalidComplex(m);
        if simplices.is_empty() {
            return Err(invalid("no simplices".into()));
        }
        let dim = simplices[0].len().checked_sub(1).ok_or_else(|| invalid("empty simplex".into()))?;
        let ambient = vertices.first().map(|v| v.len()).unwrap_or(0);
        if ambient == 0 || vertices.iter().any(|v| v.len() != ambient || v.iter().any(|x| !x.is_finite())) {
            return Err(invalid("vertex coordinates must be finite with a common dimension".into()));
        }
        let mut seen = BTreeSet::new();
        let mut simplices = simplices;
        for s in simplices.iter_mut() {
            if s.len() != dim + 1 {
                return Err(invalid("top simplices must share one dimension".into()));
            }
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) || s.iter().any(|&v| v >= vertices.len()) {
                return Err(invalid(format!("bad simplex {s:?}")));
            }
            if !seen.insert(s.clone()) {
                return Err(invalid(format!("duplicate simplex {s:?}")));
            }
        }
        let mut faces = Vec::with_capacity(dim + 1);
        let mut stars = Vec::with_capacity(dim + 1);
        for q in 0..=dim {
            let mut map: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
            for (si, s) in simplices.iter().enumerate() {
                let mut subs = Vec::new();
                subsets(s, q + 1, &mut subs);
                for f in subs {
                    map.entry(f).or_default().push(si);
                }
            }
            let (fs, ss): (Vec<_>, Vec<_>) = map.into_iter().unzip();
            faces.push(fs);
            stars.push(ss);
        }
        if faces[0].len() != vertices.len() {
            return Err(invalid("every vertex must belong to a simplex".into()));
        }
        let closed = if dim == 0 {
            false
        } else {
            let mut closed = true;
            for st in &stars[dim - 1] {
                if st.len() > 2 {
                    return Err(invalid("a codimension-one face lies in more than two simplices".into()));
                }
                closed &= st.len() == 2;
            }
            closed
        };
        let mut c = Self {
            dim,
            vertices,
            simplices,
            charts,
            chart_assignment,
            shape,
            faces,
            stars,
            home_charts: Vec::new(),
            closed,
        };
        c.validate_geometry()?;
        c.home_charts = c.compute_home_charts()?;
        Ok(c)
    }

    fn validate_geometry(&self) -> Result<()> {
        let invalid = |m: String| FactorError::InvalidComplex(m);
        for (si, s) in self.simplices.iter().enumerate() {
            // Gram determinant of edge vectors must be positive.
            let base = &self.vertices[s[0]];
            let edges: Vec<Vec<f64>> = s[1..]
                .iter()
                .map(|&v| self.vertices[v].iter().zip(base).map(|(a, b)| a - b).collect())
                .collect();
            let m = edges.len();
            let gram = nalgebra::DMatrix::from_fn(m, m, |i, j| {
                edges[i].iter().zip(&edges[j]).map(|(a, b)| a * b).sum::<f64>()
            });
            if m > 0 && gram.determinant() <= 1e-14 {
                return Err(invalid(format!("simplex {si} is degenerate")));
            }
        }
        if self.chart_assignment.len() != self.simplices.len() {
            return Err(invalid("chart_assignment needs one entry per top simplex".into()));
        }
        if self.charts.is_empty() {
            return Err(invalid("at least one chart is required".into()));
        }
        for chart in &self.charts {
            if chart.iter().any(|&s| s >= self.simplices.len()) || chart.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("chart simplex lists must be sorted, distinct and in range".into()));
            }
        }
        for (s, &c) in self.chart_assignment.iter().enumerate() {
            if c >= self.charts.len() || self.charts[c].binary_search(&s).is_err() {
                return Err(invalid(format!("simplex {s} is not inside its assigned chart")));
            }
        }
        Ok(())
    }

    fn compute_home_charts(&self) -> Result<Vec<Vec<usize>>> {
        let mut out = Vec::with_capacity(self.dim + 1);
        for q in 0..=self.dim {
            let mut hs = Vec::with_capacity(self.faces[q].len());
            for (fi, star) in self.stars[q].iter().enumerate() {
                let contains = |c: usize| star.iter().all(|s| self.charts[c].binary_search(s).is_ok());
                let preferred = self.chart_assignment[star[0]];
                let home = if contains(preferred) {
                    Some(preferred)
                } else {
                    (0..self.charts.len()).find(|&c| contains(c))
                };
                match home {
                    Some(h) => hs.push(h),
                    None => {
                        return Err(FactorError::InvalidComplex(format!(
                            "no chart contains the star of face {:?}",
                            self.faces[q][fi]
                        )))
                    }
                }
            }
            out.push(hs);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn simplices(&self) -> &[Vec<usize>] {
        &self.simplices
    }

    pub fn charts(&self) -> &[Vec<usize>] {
        &self.charts
    }

    pub fn chart_count(&self) -> usize {
        self.charts.len()
    }

    pub fn chart_assignment(&self) -> &[usize] {
        &self.chart_assignment
    }

    /// True when every codimension-one face is shared by exactly two simplices.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn chart_contains(&self, chart: usize, simplex: usize) -> bool {
        self.charts[chart].binary_search(&simplex).is_ok()
    }

    /// Faces of dimension q in lexicographic order.
    pub fn faces_by_dimension(&self, q: usize) -> Result<&[Vec<usize>]> {
        if q > self.dim {
            return Err(FactorError::DimensionOutOfRange {
                q: q as i64,
                max: self.dim as i64,
            });
        }
        Ok(&self.faces[q])
    }

    /// Top simplices containing the given face.
    pub fn star(&self, q: usize, face: usize) -> &[usize] {
        &self.stars[q][face]
    }

    /// The chart in which the given face is processed.
    pub fn home_chart(&self, q: usize, face: usize) -> usize {
        self.home_charts[q][face]
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.faces
            .iter()
            .enumerate()
            .map(|(q, f)| if q % 2 == 0 { f.len() as i64 } else { -(f.len() as i64) })
            .sum()
    }

    /// The vertex as a point of its lowest-index incident simplex.
    pub fn vertex_point(&self, v: usize) -> Point {
        let simplex = self.stars[0][v][0];
        let bary = self.simplices[simplex].iter().map(|&u| if u == v { 1.0 } else { 0.0 }).collect();
        Point { simplex, bary }
    }

    /// Ambient (piecewise-linear) position.
    pub fn ambient(&self, p: &Point) -> Vec<f64> {
        let m = self.vertices[0].len();
        let mut x = vec![0.0; m];
        for (&v, &b) in self.simplices[p.simplex].iter().zip(&p.bary) {
            for (xi, vi) in x.iter_mut().zip(&self.vertices[v]) {
                *xi += b * vi;
            }
        }
        x
    }

    /// Position retracted onto the smooth model space.
    pub fn manifold_point(&self, p: &Point) -> Vec<f64> {
        let mut x = self.ambient(p);
        match self.shape {
            Shape::Circle { .. } => normalize(&mut x[0..2]),
            Shape::Torus { .. } => {
                normalize(&mut x[0..2]);
                normalize(&mut x[2..4]);
            }
            Shape::Sphere => normalize(&mut x[..]),
            Shape::Interval | Shape::Custom => {}
        }
        x
    }

    /// Chart-local coordinates: lifted angles on circles and tori, the
    /// retracted ambient point otherwise.
    pub fn local_coords(&self, chart: usize, p: &Point) -> Vec<f64> {
        let x = self.manifold_point(p);
        match self.shape {
            Shape::Circle { n } => {
                let arcs = circle_arcs(n);
                vec![lift_angle(x[1].atan2(x[0]), arcs[chart].1)]
            }
            Shape::Torus { n } => {
                let arcs = circle_arcs(n);
                vec![
                    lift_angle(x[1].atan2(x[0]), arcs[chart / 2].1),
                    lift_angle(x[3].atan2(x[2]), arcs[chart % 2].1),
                ]
            }
            _ => x,
        }
    }

    /// Number of circle factors carrying lifted angles (0, 1 or 2).
    pub fn angle_factors(&self) -> usize {
        match self.shape {
            Shape::Circle { .. } => 1,
            Shape::Torus { .. } => 2,
            _ => 0,
        }
    }

    /// Hat-function values of the face's vertices and the largest value of
    /// any other vertex, at p. None when p is outside the closed star.
    fn face_gap(&self, face: &[usize], p: &Point) -> f64 {
        let s = &self.simplices[p.simplex];
        let mut min_in = f64::INFINITY;
        let mut max_out: f64 = 0.0;
        for (&v, &b) in s.iter().zip(&p.bary) {
            if face.binary_search(&v).is_ok() {
                min_in = min_in.min(b);
            } else {
                max_out = max_out.max(b);
            }
        }
        if face.iter().any(|v| s.binary_search(v).is_err()) {
            return -1.0;
        }
        min_in - max_out
    }

    /// Stage cutoff for a q-face; see [`StageCutoffs`].
    pub fn stage_cutoffs(&self) -> StageCutoffs {
        StageCutoffs::for_dimension(self.dim)
    }

    /// Vertices plus, per top simplex, the barycentric lattice points of the
    /// given order that are not vertices.
    pub fn sample_points(&self, order: usize) -> Vec<Point> {
        let mut out: Vec<Point> = (0..self.vertices.len()).map(|v| self.vertex_point(v)).collect();
        if order < 2 {
            return out;
        }
        let lattice = lattice_points(self.dim + 1, order);
        for s in 0..self.simplices.len() {
            for l in &lattice {
                if l.iter().filter(|&&c| c > 0).count() < 2 {
                    continue;
                }
                out.push(Point {
                    simplex: s,
                    bary: l.iter().map(|&c| c as f64 / order as f64).collect(),
                });
            }
        }
        out
    }

    pub fn to_file(&self) -> ComplexFile {
        let simplices = self
            .faces
            .iter()
            .enumerate()
            .map(|(q, f)| {
                let list = if q == self.dim { self.simplices.clone() } else { f.clone() };
                (q.to_string(), list)
            })
            .collect();
        ComplexFile {
            vertices: self.vertices.clone(),
            simplices,
            charts: self.charts.clone(),
            chart_assignment: self.chart_assignment.clone(),
            shape: self.shape.clone(),
        }
    }

    pub fn from_file(file: ComplexFile) -> Result<Self> {
        let mut dims = Vec::new();
        for key in file.simplices.keys() {
            let q: usize = key
                .parse()
                .map_err(|_| FactorError::InvalidComplex(format!("bad dimension key {key:?}")))?;
            dims.push(q);
        }
        let top = *dims.iter().max().ok_or_else(|| FactorError::InvalidComplex("no simplices".into()))?;
        let top_list = file.simplices[&top.to_string()].clone();
        let c = Self::new(file.vertices, top_list, file.charts, file.chart_assignment, file.shape)?;
        for q in dims {
            let mut listed: Vec<Vec<usize>> = file.simplices[&q.to_string()]
                .iter()
                .map(|f| {
                    let mut f = f.clone();
                    f.sort_unstable();
                    f
                })
                .collect();
            listed.sort();
            listed.dedup();
            if listed != c.faces[q] {
                return Err(FactorError::InvalidComplex(format!(
                    "listed {q}-faces do not match the faces of the top simplices"
                )));
            }
        }
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("complex serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ComplexFile = serde_json::from_str(s).map_err(|e| FactorError::Parse(e.to_string()))?;
        Self::from_file(file)
    }
}

fn normalize(x: &mut [f64]) {
    let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        for a in x.iter_mut() {
            *a /= n;
        }
    }
}

/// All nonnegative integer tuples of the given length summing to `order`.
fn lattice_points(len: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(len: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() + 1 == len {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for c in (0..=left).rev() {
            cur.push(c);
            rec(len, left - c, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(len, order, &mut Vec::new(), &mut out);
    out
}

/// The C¹ step 3s² − 2s³ on [0, 1], clamped outside.
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Distance-style cutoff around a face: 1 within barycentric distance r₁,
/// 0 beyond r₂. Barycentric distance is 1 minus the summed hat functions of
/// the face's vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct CutoffFunction {
    pub face: Vec<usize>,
    pub r1: f64,
    pub r2: f64,
}

pub fn cutoff(c: &SimplicialComplex, face: &[usize], r1: f64, r2: f64) -> Result<CutoffFunction> {
    if !(r1 > 0.0 && r1 < r2 && r2.is_finite()) {
        return Err(FactorError::BadRadii { r1, r2 });
    }
    let mut face = face.to_vec();
    face.sort_unstable();
    let q = face.len().checked_sub(1).ok_or_else(|| FactorError::BadParameter("empty face".into()))?;
    let faces = c.faces_by_dimension(q)?;
    if faces.binary_search(&face).is_err() {
        return Err(FactorError::BadParameter(format!("{face:?} is not a face of the complex")));
    }
    Ok(CutoffFunction { face, r1, r2 })
}

impl CutoffFunction {
    pub fn distance(&self, c: &SimplicialComplex, p: &Point) -> f64 {
        let s = &c.simplices()[p.simplex];
        let mass: f64 = s
            .iter()
            .zip(&p.bary)
            .filter(|(v, _)| self.face.binary_search(v).is_ok())
            .map(|(_, b)| b)
            .sum();
        (1.0 - mass).max(0.0)
    }

    pub fn evaluate(&self, c: &SimplicialComplex, p: &Point) -> f64 {
        evaluate_cutoff(self, c, p)
    }
}

pub fn evaluate_cutoff(chi: &CutoffFunction, c: &SimplicialComplex, p: &Point) -> f64 {
    let d = chi.distance(c, p);
    1.0 - smoothstep((d - chi.r1) / (chi.r2 - chi.r1))
}

/// Cutoffs used by the gluing stages.
///
/// For a q-face F the gap m_F(p) = min_{v∈F} φ_v(p) − max_{u∉F} φ_u(p) is
/// positive exactly when F's vertices carry the q+1 largest hat values, so
/// cutoffs supported in {m_F > 0} have pairwise disjoint supports within one
/// dimension. Since Σ_q (q+1)·g_q = 1 for the sorted gaps g_q, every point
/// has some q with g_q ≥ 2/((n+1)(n+2)); taking that as the plateau level
/// makes the plateaus of all stages cover the complex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageCutoffs {
    pub plateau: f64,
    pub edge: f64,
}

impl StageCutoffs {
    pub fn for_dimension(n: usize) -> Self {
        let plateau = 2.0 / ((n as f64 + 1.0) * (n as f64 + 2.0));
        Self {
            plateau,
            edge: plateau / 2.0,
        }
    }

    pub fn value_from_gap(&self, gap: f64) -> f64 {
        smoothstep((gap - self.edge) / (self.plateau - self.edge))
    }

    /// χ_F(p).
    pub fn evaluate(&self, c: &SimplicialComplex, face: &[usize], p: &Point) -> f64 {
        self.value_from_gap(c.face_gap(face, p))
    }

    /// The unique q-face whose cutoff is positive at p, with its value.
    pub fn active_face(&self, c: &SimplicialComplex, q: usize, p: &Point) -> Option<(usize, f64)> {
        let s = &c.simplices()[p.simplex];
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| p.bary[b].total_cmp(&p.bary[a]).then(a.cmp(&b)));
        let mut face: Vec<usize> = order[..=q].iter().map(|&i| s[i]).collect();
        face.sort_unstable();
        let value = self.evaluate(c, &face, p);
        if value <= 0.0 {
            return None;
        }
        let idx = c.faces[q].binary_search(&face).expect("sub-tuple of a simplex is a face");
        Some((idx, value))
    }
}

/// Builds one of the standard complexes with its chart cover.
/// Largest accepted size parameter per standard family.
pub const MAX_LINEAR_SIZE: usize = 1_000_000;
pub const MAX_TORUS_SIZE: usize = 1_000;
pub const MAX_ICOSPHERE_LEVEL: usize = 6;

pub fn build_standard_complex(kind: StandardKind) -> Result<SimplicialComplex> {
    let (size, cap) = match kind {
        StandardKind::Interval(n) | StandardKind::Circle(n) => (n, MAX_LINEAR_SIZE),
        StandardKind::TorusGrid(n) => (n, MAX_TORUS_SIZE),
        StandardKind::Icosphere(s) => (s, MAX_ICOSPHERE_LEVEL),
    };
    if size > cap {
        return Err(FactorError::BadParameter(format!("complex size {size} exceeds the limit {cap}")));
    }
    match kind {
        StandardKind::Interval(n) => interval(n),
        StandardKind::Circle(n) => circle(n),
        StandardKind::TorusGrid(n) => torus_grid(n),
        StandardKind::Icosphere(s) => icosphere(s),
    }
}

fn assign_lowest(charts: &[Vec<usize>], count: usize) -> Vec<usize> {
    (0..count)
        .map(|s| charts.iter().position(|c| c.binary_search(&s).is_ok()).expect("charts cover"))
        .collect()
}

fn interval(n: usize) -> Result<SimplicialComplex> {
    if n < 1 {
        return Err(FactorError::BadParameter("interval needs at least one edge".into()));
    }
    let vertices = (0..=n).map(|i| vec![i as f64 / n as f64]).collect();
    let simplices = (0..n).map(|i| vec![i, i + 1]).collect();
    let charts = vec![(0..n).collect()];
    SimplicialComplex::new(vertices, simplices, charts, vec![0; n], Shape::Interval)
}

fn circle(n: usize) -> Result<SimplicialComplex> {
    if n < 4 {
        return Err(FactorError::BadParameter("circle needs at least 4 vertices for its two-chart cover".into()));
    }
    let vertices = (0..n)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / n as f64;
            vec![a.cos(), a.sin()]
        })
        .collect();
    let simplices = (0..n).map(|i| vec![i, (i + 1) % n]).collect();
    let charts: Vec<Vec<usize>> = circle_arcs(n)
        .into_iter()
        .map(|(mut e, _)| {
            e.sort_unstable();
            e
        })
        .collect();
    let assignment = assign_lowest(&charts, n);
    SimplicialComplex::new(vertices, simplices, charts, assignment, Shape::Circle { n })
}

fn torus_grid(n: usize) -> Result<SimplicialComplex> {
    if n < 4 {
        return Err(FactorError::BadParameter("torus grid needs n ≥ 4 for its four-chart cover".into()));
    }
    let idx = |i: usize, j: usize| (i % n) * n + (j % n);
    let mut vertices = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let a = 2.0 * PI * i as f64 / n as f64;
            let b = 2.0 * PI * j as f64 / n as f64;
            vertices.push(vec![a.cos(), a.sin(), b.cos(), b.sin()]);
        }
    }
    let mut simplices = Vec::with_capacity(2 * n * n);
    let mut cell = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            simplices.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            simplices.push(vec![idx(i, j), idx(i, j + 1), idx(i + 1, j + 1)]);
            cell.push((i, j));
            cell.push((i, j));
        }
    }
    let arcs = circle_arcs(n);
    let mut charts = Vec::with_capacity(4);
    for a in 0..2 {
        for b in 0..2 {
            let chart: Vec<usize> = (0..simplices.len())
                .filter(|&s| arcs[a].0.contains(&cell[s].0) && arcs[b].0.contains(&cell[s].1))
                .collect();
            charts.push(chart);
        }
    }
    let assignment = assign_lowest(&charts, simplices.len());
    SimplicialComplex::new(vertices, simplices, charts, assignment, Shape::Torus { n })
}

fn icosphere(subdiv: usize) -> Result<SimplicialComplex> {
    if subdiv < 1 {
        return Err(FactorError::BadParameter("icosphere needs at least one subdivision for its two caps".into()));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec<f64>> = vec![
        vec![-1.0, t, 0.0],
        vec![1.0, t, 0.0],
        vec![-1.0, -t, 0.0],
        vec![1.0, -t, 0.0],
        vec![0.0, -1.0, t],
        vec![0.0, 1.0, t],
        vec![0.0, -1.0, -t],
        vec![0.0, 1.0, -t],
        vec![t, 0.0, -1.0],
        vec![t, 0.0, 1.0],
        vec![-t, 0.0, -1.0],
        vec![-t, 0.0, 1.0],
    ];
    for v in vertices.iter_mut() {
        normalize(v);
    }
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut midpoint = |a: usize, b: usize, vs: &mut Vec<Vec<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let mut m: Vec<f64> = vs[a].iter().zip(&vs[b]).map(|(x, y)| (x + y) / 2.0).collect();
                normalize(&mut m);
                vs.push(m);
                vs.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    let simplices: Vec<Vec<usize>> = tris.iter().map(|t| t.to_vec()).collect();
    // Caps: all vertices above −c (north) or below c (south), c just above the
    // longest edge chord so every vertex star fits in one cap.
    let longest = simplices
        .iter()
        .flat_map(|s| [(s[0], s[1]), (s[1], s[2]), (s[0], s[2])])
        .map(|(a, b)| {
            vertices[a].iter().zip(&vertices[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max);
    let c = 1.1 * longest;
    let north: Vec<usize> = (0..simplices.len())
        .filter(|&s| simplices[s].iter().all(|&v| vertices[v][2] > -c))
        .collect();
    let south: Vec<usize> = (0..simplices.len())
        .filter(|&s| simplices[s].iter().all(|&v| vertices[v][2] < c))
        .collect();
    let charts = vec![north, south];
    let assignment = assign_lowest(&charts, simplices.len());
    SimplicialComplex::new(vertices, simplices, charts, assignment, Shape::Sphere)
}

/// Full structural check of a complex (already enforced at construction);
/// returns the Euler characteristic for convenience.
pub fn validate_complex(c: &SimplicialComplex) -> Result<i64> {
    SimplicialComplex::from_file(c.to_file())?;
    Ok(c.euler_characteristic())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_one() {
        let c = build_standard_complex(StandardKind::Interval(1)).unwrap();
        assert_eq!(c.vertices().len(), 2);
        assert_eq!(c.simplices().len(), 1);
        assert_eq!(c.chart_count(), 1);
        assert!(!c.is_closed());
    }

    #[test]
    fn circle_six() {
        let c = build_standard_complex(StandardKind::Circle(6)).unwrap();
        assert_eq!(c.vertices().len(), 6);
        assert_eq!(c.faces_by_dimension(1).unwrap().len(), 6);
        assert_eq!(c.euler_characteristic(), 0);
        assert!(c.is_closed());
        assert_eq!(c.chart_count(), 2);
    }

    #[test]
    fn icosphere_one() {
        let c = build_standard_complex(StandardKind::Icosphere(1)).unwrap();
        assert_eq!(c.vertices().len(), 42);
        assert_eq!(c.simplices().len(), 80);
        assert_eq!(c.faces_by_dimension(1).unwrap().len(), 120);
        assert_eq!(c.euler_characteristic(), 2);
        assert_eq!(c.chart_count(), 2);
    }

    #[test]
    fn faces_by_dimension_counts() {
        let c = build_standard_complex(StandardKind::Interval(2)).unwrap();
        assert_eq!(c.faces_by_dimension(0).unwrap().len(), 3);
        let t = build_standard_complex(StandardKind::TorusGrid(4)).unwrap();
        // 3n² edges on the diagonal-split n×n periodic grid
        assert_eq!(t.faces_by_dimension(1).unwrap().len(), 48);
        assert_eq!(t.euler_characteristic(), 0);
        assert_eq!(
            t.faces_by_dimension(3).unwrap_err(),
            FactorError::DimensionOutOfRange { q: 3, max: 2 }
        );
        let f = t.faces_by_dimension(1).unwrap();
        assert!(f.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn small_sizes_rejected() {
        for kind in [
            StandardKind::Interval(0),
            StandardKind::Circle(3),
            StandardKind::TorusGrid(2),
            StandardKind::Icosphere(0),
        ] {
            assert_eq!(build_standard_complex(kind).unwrap_err().name(), "BadParameter");
        }
    }

    #[test]
    fn circle_overlap_has_two_components() {
        for n in [4, 5, 6, 8] {
            let c = build_standard_complex(StandardKind::Circle(n)).unwrap();
            let overlap: Vec<usize> = c.charts()[0]
                .iter()
                .copied()
                .filter(|s| c.chart_contains(1, *s))
                .collect();
            assert_eq!(overlap.len(), 2);
            let (a, b) = (&c.simplices()[overlap[0]], &c.simplices()[overlap[1]]);
            assert!(a.iter().all(|v| !b.contains(v)));
        }
    }

    #[test]
    fn local_angles_differ_by_full_turn_on_one_component() {
        let c = build_standard_complex(StandardKind::Circle(8)).unwrap();
        let mut diffs = Vec::new();
        for &s in &c.charts()[0] {
            if c.chart_contains(1, s) {
                let p = Point { simplex: s, bary: vec![0.5, 0.5] };
                diffs.push(c.local_coords(1, &p)[0] - c.local_coords(0, &p)[0]);
            }
        }
        diffs.sort_by(f64::total_cmp);
        assert!(diffs[0].abs() < 1e-12);
        assert!((diffs[1] - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        for kind in [StandardKind::Circle(5), StandardKind::TorusGrid(4), StandardKind::Icosphere(1)] {
            let c = build_standard_complex(kind).unwrap();
            let back = SimplicialComplex::from_json(&c.to_json()).unwrap();
            assert_eq!(back.to_file(), c.to_file());
            assert_eq!(validate_complex(&back).unwrap(), c.euler_characteristic());
        }
    }

    #[test]
    fn json_rejects_inconsistent_faces() {
        let c = build_standard_complex(StandardKind::Circle(5)).unwrap();
        let mut f = c.to_file();
        f.simplices.get_mut("0").unwrap().pop();
        assert_eq!(SimplicialComplex::from_file(f).unwrap_err().name(), "InvalidComplex");
        let mut f = c.to_file();
        f.chart_assignment[0] = 7;
        assert_eq!(SimplicialComplex::from_file(f).unwrap_err().name(), "InvalidComplex");
    }

    #[test]
    fn cutoff_examples() {
        let c = build_standard_complex(StandardKind::Interval(2)).unwrap();
        let chi = cutoff(&c, &[1], 0.2, 0.6).unwrap();
        assert_eq!(chi.evaluate(&c, &c.vertex_point(1)), 1.0);
        assert_eq!(chi.evaluate(&c, &c.vertex_point(0)), 0.0);
        // barycentric distance 0.4 = (r₁ + r₂)/2 from vertex 1 inside edge [0, 1]
        let p = Point { simplex: 0, bary: vec![0.4, 0.6] };
        assert!((chi.distance(&c, &p) - 0.4).abs() < 1e-15);
        let expected = 1.0 - (3.0 * 0.25 - 2.0 * 0.125);
        assert!((chi.evaluate(&c, &p) - expected).abs() < 1e-15);
        assert_eq!(expected, 0.5);
        assert_eq!(cutoff(&c, &[1], 0.5, 0.5).unwrap_err().name(), "BadRadii");
        assert_eq!(cutoff(&c, &[1], 0.0, 0.5).unwrap_err().name(), "BadRadii");
    }

    #[test]
    fn stage_cutoffs_are_disjoint_and_cover() {
        for kind in [StandardKind::Circle(6), StandardKind::TorusGrid(4), StandardKind::Icosphere(1)] {
            let c = build_standard_complex(kind).unwrap();
            let sc = c.stage_cutoffs();
            for p in c.sample_points(5) {
                let mut plateau = false;
                for q in 0..=c.dim() {
                    let faces = c.faces_by_dimension(q).unwrap();
                    let active: Vec<f64> = faces
                        .iter()
                        .map(|f| sc.evaluate(&c, f, &p))
                        .filter(|&v| v > 0.0)
                        .collect();
                    assert!(active.len() <= 1);
                    plateau |= active.first() == Some(&1.0);
                    let found = sc.active_face(&c, q, &p).map(|x| x.1);
                    assert_eq!(found, active.first().copied());
                }
                assert!(plateau);
            }
        }
    }

    #[test]
    fn sample_points_count() {
        let c = build_standard_complex(StandardKind::TorusGrid(4)).unwrap();
        assert_eq!(c.sample_points(3).len(), 16 + 32 * 7);
        assert_eq!(c.sample_points(1).len(), 16);
        let s = build_standard_complex(StandardKind::Circle(8)).unwrap();
        for p in s.sample_points(3) {
            let x = s.manifold_point(&p);
            assert!((x[0].hypot(x[1]) - 1.0).abs() < 1e-12);
        }
    }
}
