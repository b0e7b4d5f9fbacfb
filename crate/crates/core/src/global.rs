//! Gluing pointwise factorizations over a complex with face cutoffs, the
//! homotopy pipelines built on top, and the factorization verifier.
//!
//! A sweep processes faces by increasing dimension. At a point p and face
//! dimension d, the unique active d-face F (cutoff χ > 0) is looked up, the
//! current value is moved into F's home chart, factored pointwise, each factor
//! is masked to I + χ·N and moved back. Since the pointwise routines return
//! identity factors on their target set, regions finished by earlier faces
//! are left alone.

use std::cell::RefCell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bundle::{subdivide, BundleAtlas, Field, Homotopy, MatrixClass, Section, Structure};
use crate::error::{FactorError, Result};
use crate::matrix::{Mat, ScalarKind, ShearFactor};
use crate::mesh::{Point, SimplicialComplex};
use crate::pointwise::{gauss_jordan_factors, gram_schmidt_factors, ShearStyle, UnipotentFactor};
use crate::symplectic::{
    symplectic_gauss_jordan_factors, symplectic_gram_schmidt_factors, symplectic_residual, LagrangianSplitting,
    TransvectionFactor,
};

/// Largest d_W(S, I) accepted by the near-identity gluing.
pub const NEAR_IDENTITY_BOUND: f64 = 0.5;
/// Factors whose parameters stay below this at every sample are dropped.
pub const PRUNE_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GramSchmidt,
    GaussJordan,
}

/// Which factor shapes a pipeline emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Compact,
    LineElementary,
    Symplectic,
}

impl Family {
    pub fn rank_bound(self) -> usize {
        match self {
            Family::Symplectic => 2,
            _ => 1,
        }
    }

    fn style(self) -> ShearStyle {
        match self {
            Family::LineElementary => ShearStyle::LineElementary,
            _ => ShearStyle::Compact,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainTag {
    GramSchmidtStage,
    GaussJordanStage,
    ReduceToCompact,
    NearIdentity,
    SpecialAutomorphism,
    LineSplitting,
    Symplectic,
}

/// A single factor value at a point.
#[derive(Clone, Debug, PartialEq)]
pub enum FactorValue {
    Shear(ShearFactor),
    Transvection(TransvectionFactor),
}

impl FactorValue {
    pub fn matrix(&self) -> Mat {
        match self {
            FactorValue::Shear(f) => f.matrix(),
            FactorValue::Transvection(f) => f.matrix(),
        }
    }

    pub fn nilpotent(&self) -> Mat {
        match self {
            FactorValue::Shear(f) => f.nilpotent(),
            FactorValue::Transvection(f) => f.nilpotent(),
        }
    }

    pub fn magnitude(&self) -> f64 {
        match self {
            FactorValue::Shear(f) => f.magnitude(),
            FactorValue::Transvection(f) => f.magnitude(),
        }
    }

    fn scaled(&self, c: f64) -> Self {
        match self {
            FactorValue::Shear(f) => FactorValue::Shear(f.scaled(c)),
            FactorValue::Transvection(f) => FactorValue::Transvection(f.scaled(c)),
        }
    }

    pub fn inverse(&self) -> Self {
        self.scaled(-1.0)
    }

    /// ψ·E·ψ⁻¹ for a transition ψ (and its inverse).
    fn transported(self, psi: &Mat, psi_inv: &Mat) -> Result<Self> {
        Ok(match self {
            FactorValue::Shear(f) => FactorValue::Shear(ShearFactor::new(
                psi.mul_vec(f.direction()),
                psi_inv.transpose().mul_vec(f.functional()),
            )?),
            FactorValue::Transvection(f) => {
                FactorValue::Transvection(TransvectionFactor::new(psi.mul_vec(f.v()), psi.mul_vec(f.w()))?)
            }
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FactorValue::Shear(_) => "shear",
            FactorValue::Transvection(_) => "transvection",
        }
    }
}

fn pointwise(method: Method, family: Family, s: &Mat) -> Result<Vec<FactorValue>> {
    let shears = |v: Vec<ShearFactor>| v.into_iter().map(FactorValue::Shear).collect();
    let transvections = |v: Vec<TransvectionFactor>| v.into_iter().map(FactorValue::Transvection).collect();
    Ok(match (method, family) {
        (Method::GramSchmidt, Family::Symplectic) => transvections(symplectic_gram_schmidt_factors(s)?),
        (Method::GaussJordan, Family::Symplectic) => transvections(symplectic_gauss_jordan_factors(s)?),
        (Method::GramSchmidt, f) => shears(gram_schmidt_factors(s, f.style())?),
        (Method::GaussJordan, f) => shears(gauss_jordan_factors(s, f.style())?),
    })
}

/// One pass over the faces of the listed dimensions.
#[derive(Clone, Debug)]
struct Sweep {
    method: Method,
    family: Family,
    dims: Vec<usize>,
    slots: usize,
    offsets: Vec<usize>,
    face_counts: Vec<usize>,
    len: usize,
}

impl Sweep {
    fn new(c: &SimplicialComplex, rank: usize, method: Method, family: Family, dims: Vec<usize>) -> Result<Self> {
        let slots = pointwise(method, family, &Mat::identity(rank))?.len();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut face_counts = Vec::with_capacity(dims.len());
        let mut len = 0;
        for &d in &dims {
            let faces = c.faces_by_dimension(d)?.len();
            offsets.push(len);
            face_counts.push(faces);
            len += faces * slots;
        }
        Ok(Self {
            method,
            family,
            dims,
            slots,
            offsets,
            face_counts,
            len,
        })
    }

    /// Non-identity factors (sweep index, value in `chart`) in application
    /// order, and the reduced value.
    fn run(&self, atlas: &BundleAtlas, s: Mat, chart: usize, p: &Point) -> Result<(Vec<(usize, FactorValue)>, Mat)> {
        let c = atlas.complex();
        let cut = c.stage_cutoffs();
        let mut cur = s;
        let mut out = Vec::new();
        for (di, &d) in self.dims.iter().enumerate() {
            let Some((face, chi)) = cut.active_face(c, d, p) else {
                continue;
            };
            let home = c.home_chart(d, face);
            let local = atlas.transport(&cur, home, chart, p);
            let factors = pointwise(self.method, self.family, &local)?;
            let psi = atlas.transition(chart, home, p);
            let psi_inv = atlas.transition(home, chart, p);
            let base = self.offsets[di] + face * self.slots;
            for (j, f) in factors.into_iter().enumerate() {
                if f.magnitude() == 0.0 {
                    continue;
                }
                let g = f.scaled(chi).transported(&psi, &psi_inv)?;
                cur = &g.matrix() * &cur;
                out.push((base + j, g));
            }
        }
        Ok((out, cur))
    }

    /// (face dimension, face index, slot) of a sweep index.
    fn decode(&self, idx: usize) -> (usize, usize, usize) {
        let di = self.offsets.partition_point(|&o| o <= idx) - 1;
        let local = idx - self.offsets[di];
        debug_assert!(local / self.slots < self.face_counts[di]);
        (self.dims[di], local / self.slots, local % self.slots)
    }
}

#[derive(Clone)]
enum BlockInput {
    Field(Arc<dyn Field>),
    /// T(t_{j+1})·T(t_j)⁻¹ for the chain's reduction.
    Step(usize),
}

#[derive(Clone)]
struct Block {
    input: BlockInput,
    sweep: Arc<Sweep>,
    inverted: bool,
    offset: usize,
}

/// The compact reduction T_t of a homotopy plus the time partition.
#[derive(Clone)]
struct Reduction {
    source: Arc<dyn Field>,
    sweep: Arc<Sweep>,
    partition: Vec<f64>,
}

/// Where a factor comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorMeta {
    pub kind: String,
    pub block: usize,
    pub method: Method,
    /// Stage index q: the stage that processes (q+1)-faces.
    pub stage: i64,
    pub face: Vec<usize>,
    pub chart: usize,
    pub slot: usize,
    pub inverted: bool,
}

/// An ordered list of factor fields E₁, …, E_N (application order), each
/// evaluable anywhere on the complex.
#[derive(Clone)]
pub struct FactorChain {
    atlas: Arc<BundleAtlas>,
    tag: ChainTag,
    family: Family,
    blocks: Vec<Block>,
    reduction: Option<Reduction>,
    kept: Vec<usize>,
    history: Vec<String>,
}

impl std::fmt::Debug for FactorChain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FactorChain")
            .field("tag", &self.tag)
            .field("family", &self.family)
            .field("len", &self.kept.len())
            .field("history", &self.history)
            .finish()
    }
}

impl FactorChain {
    fn new(atlas: Arc<BundleAtlas>, tag: ChainTag, family: Family) -> Self {
        Self {
            atlas,
            tag,
            family,
            blocks: Vec::new(),
            reduction: None,
            kept: Vec::new(),
            history: Vec::new(),
        }
    }

    fn total(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.sweep.len)
    }

    fn push(&mut self, input: BlockInput, sweep: Arc<Sweep>, inverted: bool) {
        let offset = self.total();
        self.blocks.push(Block {
            input,
            sweep,
            inverted,
            offset,
        });
    }

    pub fn atlas(&self) -> &Arc<BundleAtlas> {
        &self.atlas
    }

    pub fn tag(&self) -> ChainTag {
        self.tag
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn history(&self) -> &[String] {
        &self.history
    }

    /// Time partition of the underlying homotopy (empty for section chains).
    pub fn partition(&self) -> &[f64] {
        self.reduction.as_ref().map_or(&[], |r| &r.partition)
    }

    fn reduced(&self, cache: &mut [Option<Mat>], j: usize, t: f64, chart: usize, p: &Point) -> Result<Mat> {
        if let Some(m) = &cache[j] {
            return Ok(m.clone());
        }
        let r = self.reduction.as_ref().expect("step blocks need a reduction");
        let s = r.source.eval(t * r.partition[j], chart, p);
        let m = r.sweep.run(&self.atlas, s, chart, p)?.1;
        cache[j] = Some(m.clone());
        Ok(m)
    }

    /// All non-identity factors as (raw position, value) in application order.
    fn raw_at(&self, t: f64, chart: usize, p: &Point) -> Result<Vec<(usize, FactorValue)>> {
        let mut cache = vec![None; self.partition().len()];
        let mut out = Vec::new();
        for b in &self.blocks {
            let s = match &b.input {
                BlockInput::Field(f) => f.eval(t, chart, p),
                BlockInput::Step(j) => {
                    let next = self.reduced(&mut cache, j + 1, t, chart, p)?;
                    let prev = self.reduced(&mut cache, *j, t, chart, p)?;
                    &next * &prev.inverse().ok_or(FactorError::IllConditioned(f64::INFINITY))?
                }
            };
            let (fs, _) = b.sweep.run(&self.atlas, s, chart, p)?;
            if b.inverted {
                for (i, f) in fs.into_iter().rev() {
                    out.push((b.offset + b.sweep.len - 1 - i, f.inverse()));
                }
            } else {
                out.extend(fs.into_iter().map(|(i, f)| (b.offset + i, f)));
            }
        }
        Ok(out)
    }

    /// Non-identity factors (chain index, value) at time t, in application order.
    pub fn factors_at(&self, t: f64, chart: usize, p: &Point) -> Result<Vec<(usize, FactorValue)>> {
        Ok(self
            .raw_at(t, chart, p)?
            .into_iter()
            .filter_map(|(pos, f)| self.kept.binary_search(&pos).ok().map(|i| (i, f)))
            .collect())
    }

    /// E_N ⋯ E₁ at time t.
    pub fn compose_at(&self, t: f64, chart: usize, p: &Point) -> Result<Mat> {
        let mut acc = Mat::identity(self.atlas.rank());
        for (_, f) in self.factors_at(t, chart, p)? {
            acc = &f.matrix() * &acc;
        }
        Ok(acc)
    }

    pub fn compose(&self, chart: usize, p: &Point) -> Result<Mat> {
        self.compose_at(1.0, chart, p)
    }

    /// Matrix of factor i at p.
    pub fn factor_matrix(&self, i: usize, t: f64, chart: usize, p: &Point) -> Result<Mat> {
        Ok(self
            .factors_at(t, chart, p)?
            .into_iter()
            .find(|(j, _)| *j == i)
            .map_or_else(|| Mat::identity(self.atlas.rank()), |(_, f)| f.matrix()))
    }

    /// Factor i as a unipotent section.
    pub fn factor_section(&self, i: usize) -> Section {
        let chain = self.clone();
        let n = self.atlas.rank();
        Section::new(
            self.atlas.clone(),
            Arc::new(move |t: f64, c: usize, p: &Point| {
                chain.factor_matrix(i, t, c, p).unwrap_or_else(|_| Mat::identity(n))
            }),
            MatrixClass::Unipotent,
        )
    }

    pub fn meta(&self, i: usize) -> FactorMeta {
        let pos = self.kept[i];
        let bi = self.blocks.partition_point(|b| b.offset <= pos) - 1;
        let b = &self.blocks[bi];
        let local = pos - b.offset;
        let idx = if b.inverted { b.sweep.len - 1 - local } else { local };
        let (d, face, slot) = b.sweep.decode(idx);
        let c = self.atlas.complex();
        FactorMeta {
            kind: if self.family == Family::Symplectic { "transvection" } else { "shear" }.to_string(),
            block: bi,
            method: b.sweep.method,
            stage: d as i64 - 1,
            face: c.faces_by_dimension(d).expect("sweep dimension exists")[face].clone(),
            chart: c.home_chart(d, face),
            slot,
            inverted: b.inverted,
        }
    }

    /// Keeps the factors whose parameters reach PRUNE_TOL at some sample.
    fn prune(&mut self, points: &[Point]) -> Result<()> {
        let mut used = vec![false; self.total()];
        for p in points {
            for (pos, f) in self.raw_at(1.0, self.atlas.home_chart(p), p)? {
                if f.magnitude() >= PRUNE_TOL {
                    used[pos] = true;
                }
            }
        }
        self.kept = (0..used.len()).filter(|&i| used[i]).collect();
        Ok(())
    }
}

/// Tolerances and sampling for the pipelines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub epsilon: f64,
    pub max_steps: usize,
    pub quadrature_order: usize,
    pub tol_point: f64,
    pub tol_stage: f64,
    pub tol_final: f64,
    pub lagrangian: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_steps: 256,
            quadrature_order: 3,
            tol_point: 1e-10,
            tol_stage: 1e-8,
            tol_final: 1e-7,
            lagrangian: false,
        }
    }
}

fn stage_dimension(c: &SimplicialComplex, q: i64) -> Result<usize> {
    let max = c.dim() as i64 - 1;
    if q < -1 || q > max {
        return Err(FactorError::DimensionOutOfRange { q, max });
    }
    Ok((q + 1) as usize)
}

/// Points in the plateau (χ = 1) of some face of dimension d.
fn plateau_points(c: &SimplicialComplex, d: usize, points: &[Point]) -> Vec<Point> {
    let cut = c.stage_cutoffs();
    points
        .iter()
        .filter(|p| matches!(cut.active_face(c, d, p), Some((_, v)) if v >= 1.0))
        .cloned()
        .collect()
}

fn compact_residual(m: &Mat, family: Family) -> f64 {
    let u = m.unitarity_residual();
    match family {
        Family::Symplectic => u + symplectic_residual(m).unwrap_or(f64::INFINITY),
        _ => u + (m.determinant() - crate::matrix::ONE).norm(),
    }
}

fn default_family(atlas: &BundleAtlas) -> Family {
    match atlas.structure() {
        Structure::Symplectic => Family::Symplectic,
        Structure::DiagonalSplit => Family::LineElementary,
        _ => Family::Compact,
    }
}

fn sweep_section(chain: &FactorChain, sweep: Arc<Sweep>, input: Arc<dyn Field>, class: MatrixClass) -> Section {
    let atlas = chain.atlas.clone();
    Section::new(
        atlas.clone(),
        Arc::new(move |t: f64, c: usize, p: &Point| {
            sweep
                .run(&atlas, input.eval(t, c, p), c, p)
                .map(|x| x.1)
                .unwrap_or_else(|_| Mat::identity(atlas.rank()).scale_real(f64::NAN))
        }),
        class,
    )
}

/// One Gram-Schmidt gluing stage over the (q+1)-faces: returns the chain and
/// compose(chain)·S, which is orthogonal/unitary near every (q+1)-face.
pub fn glue_gram_schmidt_stage(s: &Section, q: i64, opts: &PipelineOptions) -> Result<(FactorChain, Section)> {
    let c = s.atlas.complex();
    let d = stage_dimension(c, q)?;
    let family = default_family(&s.atlas);
    let points = c.sample_points(opts.quadrature_order);
    if d > 0 {
        for p in plateau_points(c, d - 1, &points) {
            let r = compact_residual(&s.eval_home(&p), family);
            if r > opts.tol_stage {
                return Err(FactorError::HypothesisViolated(format!(
                    "not compact near the {}-faces (residual {r:e})",
                    d - 1
                )));
            }
        }
    }
    let sweep = Arc::new(Sweep::new(c, s.atlas.rank(), Method::GramSchmidt, family, vec![d])?);
    let mut chain = FactorChain::new(s.atlas.clone(), ChainTag::GramSchmidtStage, family);
    chain.push(BlockInput::Field(s.field.clone()), sweep.clone(), false);
    chain.history.push(format!("gram-schmidt stage q = {q}"));
    chain.prune(&points)?;
    let class = if family == Family::Symplectic { MatrixClass::Symplectic } else { s.class };
    let out = sweep_section(&chain, sweep, s.field.clone(), class);
    Ok((chain, out))
}

fn check_near_identity(s: &Section, points: &[Point]) -> Result<()> {
    let n = s.atlas.rank();
    let dist = points
        .iter()
        .map(|p| (&s.eval_home(p) - &Mat::identity(n)).operator_norm())
        .fold(0.0, f64::max);
    if !(dist < NEAR_IDENTITY_BOUND) {
        return Err(FactorError::NotNearIdentity(format!("d_W(S, I) = {dist}")));
    }
    Ok(())
}

/// One Gauss-Jordan gluing stage over the (q+1)-faces. The chain reconstructs
/// S near those faces; the returned section compose(chain)⁻¹·S is the
/// identity there.
pub fn glue_gauss_jordan_stage(s: &Section, q: i64, opts: &PipelineOptions) -> Result<(FactorChain, Section)> {
    let c = s.atlas.complex();
    let d = stage_dimension(c, q)?;
    let points = c.sample_points(opts.quadrature_order);
    check_near_identity(s, &points)?;
    let n = s.atlas.rank();
    if d > 0 {
        for p in plateau_points(c, d - 1, &points) {
            let r = (&s.eval_home(&p) - &Mat::identity(n)).max_abs();
            if r > 1e-9 {
                return Err(FactorError::HypothesisViolated(format!(
                    "not the identity near the {}-faces (residual {r:e})",
                    d - 1
                )));
            }
        }
    }
    let family = default_family(&s.atlas);
    let sweep = Arc::new(Sweep::new(c, n, Method::GaussJordan, family, vec![d])?);
    let mut chain = FactorChain::new(s.atlas.clone(), ChainTag::GaussJordanStage, family);
    chain.push(BlockInput::Field(s.field.clone()), sweep.clone(), true);
    chain.history.push(format!("gauss-jordan stage q = {q}"));
    chain.prune(&points)?;
    let out = sweep_section(&chain, sweep, s.field.clone(), s.class);
    Ok((chain, out))
}

/// Full Gram-Schmidt sweep q = −1, …, n−1 over a homotopy: the chain at time
/// t reduces S_t into the compact group, and the returned homotopy is the
/// reduced family. Factors vanish wherever S_t is already compact, so a
/// nullhomotopy gives identity factors at t = 0.
pub fn reduce_to_compact(h: &Homotopy, opts: &PipelineOptions) -> Result<(FactorChain, Homotopy)> {
    let c = h.atlas.complex();
    let family = default_family(&h.atlas);
    let dims: Vec<usize> = (0..=c.dim()).collect();
    let sweep = Arc::new(Sweep::new(c, h.atlas.rank(), Method::GramSchmidt, family, dims)?);
    let mut chain = FactorChain::new(h.atlas.clone(), ChainTag::ReduceToCompact, family);
    chain.push(BlockInput::Field(h.field.clone()), sweep.clone(), false);
    chain.history.push(format!("gram-schmidt sweep q = -1..{}", c.dim() as i64 - 1));
    chain.prune(&c.sample_points(opts.quadrature_order))?;
    let class = if family == Family::Symplectic {
        MatrixClass::Symplectic
    } else {
        MatrixClass::Compact
    };
    let s = sweep_section(&chain, sweep, h.field.clone(), class);
    Ok((chain, Homotopy::new(h.atlas.clone(), s.field, class, h.nullhomotopy)))
}

/// Section version of [`reduce_to_compact`].
pub fn reduce_section_to_compact(s: &Section, opts: &PipelineOptions) -> Result<(FactorChain, Section)> {
    let (chain, h) = reduce_to_compact(&Homotopy::constant(s), opts)?;
    Ok((chain, h.slice(1.0)))
}

fn near_identity_chain(s: &Section, opts: &PipelineOptions, inverted: bool) -> Result<FactorChain> {
    let c = s.atlas.complex();
    let points = c.sample_points(opts.quadrature_order);
    check_near_identity(s, &points)?;
    let family = default_family(&s.atlas);
    let dims: Vec<usize> = (0..=c.dim()).collect();
    let sweep = Arc::new(Sweep::new(c, s.atlas.rank(), Method::GaussJordan, family, dims)?);
    let mut chain = FactorChain::new(s.atlas.clone(), ChainTag::NearIdentity, family);
    chain.push(BlockInput::Field(s.field.clone()), sweep, inverted);
    chain.history.push(format!("gauss-jordan sweep q = -1..{}", c.dim() as i64 - 1));
    chain.prune(&points)?;
    Ok(chain)
}

/// Full Gauss-Jordan sweep: compose(chain)·S = I.
pub fn factor_near_identity_global(s: &Section, opts: &PipelineOptions) -> Result<FactorChain> {
    near_identity_chain(s, opts, false)
}

/// Factors a near-identity section directly: compose(chain) = S.
pub fn factor_near_identity_section(s: &Section, opts: &PipelineOptions) -> Result<FactorChain> {
    near_identity_chain(s, opts, true)
}

fn check_rank(atlas: &BundleAtlas) -> Result<()> {
    let k = atlas.rank();
    match atlas.scalar() {
        ScalarKind::Real if k < 3 => Err(FactorError::UnsupportedRank(format!(
            "real bundles need rank at least 3, got {k}"
        ))),
        ScalarKind::Complex if k < 2 => Err(FactorError::UnsupportedRank(format!(
            "complex bundles need rank at least 2, got {k}"
        ))),
        _ => Ok(()),
    }
}

/// Reduce to compact, subdivide the reduced homotopy into ε-steps, factor
/// every step by Gauss-Jordan and undo the reduction:
/// S = P⁻¹ · G_{m−1}⁻¹ ⋯ G₀⁻¹ with P the Gram-Schmidt product at t = 1.
fn homotopy_pipeline(
    h: &Homotopy,
    family: Family,
    tag: ChainTag,
    opts: &PipelineOptions,
    partition: Option<Vec<f64>>,
) -> Result<FactorChain> {
    if !h.nullhomotopy {
        return Err(FactorError::HypothesisViolated("a nullhomotopy (S₀ = I) is required".into()));
    }
    if !(opts.epsilon > 0.0 && opts.epsilon <= NEAR_IDENTITY_BOUND) {
        return Err(FactorError::BadParameter(format!(
            "epsilon must lie in (0, {NEAR_IDENTITY_BOUND}]"
        )));
    }
    let atlas = h.atlas.clone();
    let c = atlas.complex();
    let rank = atlas.rank();
    let dims: Vec<usize> = (0..=c.dim()).collect();
    let gs = Arc::new(Sweep::new(c, rank, Method::GramSchmidt, family, dims.clone())?);
    let gj = Arc::new(Sweep::new(c, rank, Method::GaussJordan, family, dims)?);
    let points = c.sample_points(opts.quadrature_order);
    let charts: Vec<usize> = points.iter().map(|p| atlas.home_chart(p)).collect();

    let failure = RefCell::new(None);
    let reduced = |t: f64, chart: usize, p: &Point| -> Mat {
        match gs.run(&atlas, h.eval(t, chart, p), chart, p) {
            Ok((_, m)) => m,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Mat::identity(rank).scale_real(f64::NAN)
            }
        }
    };
    let partition = match partition {
        Some(ts) => {
            let ok = ts.len() >= 2
                && ts[0] == 0.0
                && *ts.last().unwrap() == 1.0
                && ts.windows(2).all(|w| w[0] < w[1]);
            if !ok {
                return Err(FactorError::BadParameter("partition must increase from 0 to 1".into()));
            }
            ts
        }
        None => {
            let ts = subdivide(reduced, &points, &charts, opts.epsilon, opts.max_steps);
            if let Some(e) = failure.borrow_mut().take() {
                return Err(e);
            }
            ts?
        }
    };
    let mut chain = FactorChain::new(atlas.clone(), tag, family);
    chain.reduction = Some(Reduction {
        source: h.field.clone(),
        sweep: gs.clone(),
        partition: partition.clone(),
    });
    for j in 0..partition.len() - 1 {
        chain.push(BlockInput::Step(j), gj.clone(), true);
    }
    chain.push(BlockInput::Field(h.field.clone()), gs, true);
    chain.history.push(format!("gram-schmidt sweep q = -1..{}", c.dim() as i64 - 1));
    chain.history.push(format!(
        "subdivision into {} steps at epsilon = {}",
        partition.len() - 1,
        opts.epsilon
    ));
    chain.history.push("gauss-jordan sweep per step".into());
    chain.prune(&points)?;
    Ok(chain)
}

/// Factorization of a nullhomotopic special automorphism into shears.
pub fn factor_special_automorphism(h: &Homotopy, opts: &PipelineOptions) -> Result<FactorChain> {
    check_rank(&h.atlas)?;
    homotopy_pipeline(h, Family::Compact, ChainTag::SpecialAutomorphism, opts, None)
}

/// As [`factor_special_automorphism`], with every factor a single-entry shear
/// in the frame of the line splitting.
pub fn factor_with_line_splitting(h: &Homotopy, opts: &PipelineOptions) -> Result<FactorChain> {
    if h.atlas.structure() != Structure::DiagonalSplit {
        return Err(FactorError::NotDiagonalAtlas(format!(
            "structure is {:?}",
            h.atlas.structure()
        )));
    }
    check_rank(&h.atlas)?;
    homotopy_pipeline(h, Family::LineElementary, ChainTag::LineSplitting, opts, None)
}

/// Factorization of a nullhomotopic symplectic automorphism into transvections.
pub fn factor_symplectic(h: &Homotopy, opts: &PipelineOptions) -> Result<FactorChain> {
    let atlas = &h.atlas;
    if atlas.structure() != Structure::Symplectic {
        return Err(FactorError::InvalidAtlas("symplectic factorization needs a symplectic atlas".into()));
    }
    if atlas.scalar() == ScalarKind::Real && !atlas.complex().is_closed() {
        return Err(FactorError::NotCompactDomain(
            "real symplectic factorization needs a closed complex".into(),
        ));
    }
    let points = atlas.complex().sample_points(opts.quadrature_order);
    let k = atlas.rank() / 2;
    for p in &points {
        for t in [0.5, 1.0] {
            let m = h.eval(t, atlas.home_chart(p), p);
            let r = symplectic_residual(&m)?;
            if r > 1e-8 {
                return Err(FactorError::NotSymplectic(r));
            }
            if opts.lagrangian {
                let off = m.block(0, k, k).max_abs().max(m.block(k, 0, k).max_abs());
                if off > 1e-12 {
                    return Err(FactorError::HypothesisViolated(
                        "Lagrangian mode needs block-diagonal input".into(),
                    ));
                }
            }
        }
    }
    homotopy_pipeline(h, Family::Symplectic, ChainTag::Symplectic, opts, None)
}

/// Rebuilds a homotopy chain for a known partition (no subdivision search).
pub fn rebuild_homotopy_chain(h: &Homotopy, tag: ChainTag, partition: Vec<f64>, opts: &PipelineOptions) -> Result<FactorChain> {
    let family = match tag {
        ChainTag::LineSplitting => Family::LineElementary,
        ChainTag::Symplectic => Family::Symplectic,
        _ => Family::Compact,
    };
    homotopy_pipeline(h, family, tag, opts, Some(partition))
}

/// Verification outcome; `failing_factors` lists chain indices that break a
/// per-factor check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub theorem: ChainTag,
    pub factor_count: usize,
    pub steps: usize,
    pub sample_points: usize,
    pub reconstruction_residual: f64,
    pub start_residual: f64,
    pub unipotency_residual: f64,
    pub max_rank: usize,
    pub rank_bound: usize,
    pub symplectic_residual: Option<f64>,
    pub line_elementary_violations: Option<usize>,
    pub lagrangian_violations: Option<usize>,
    pub max_factor_norm: f64,
    pub factor_unipotency: Vec<f64>,
    pub failing_factors: Vec<usize>,
    pub pass: bool,
}

/// Checks compose(chain) against S and every factor's shape at the samples.
pub fn verify_factorization(chain: &FactorChain, s: &Section, opts: &PipelineOptions, points: &[Point]) -> VerifyReport {
    let n = chain.atlas.rank();
    let symplectic = chain.family == Family::Symplectic;
    let line = chain.family == Family::LineElementary;
    let split = LagrangianSplitting::new(n / 2);
    let mut report = VerifyReport {
        theorem: chain.tag,
        factor_count: chain.len(),
        steps: chain.partition().len().saturating_sub(1),
        sample_points: points.len(),
        reconstruction_residual: 0.0,
        start_residual: 0.0,
        unipotency_residual: 0.0,
        max_rank: 0,
        rank_bound: chain.family.rank_bound(),
        symplectic_residual: symplectic.then_some(0.0),
        line_elementary_violations: line.then_some(0),
        lagrangian_violations: (symplectic && opts.lagrangian).then_some(0),
        max_factor_norm: 0.0,
        factor_unipotency: vec![0.0; chain.len()],
        failing_factors: Vec::new(),
        pass: false,
    };
    let mut failing = vec![false; chain.len()];
    let mut broken = !chain.atlas.same_as(&s.atlas);
    for p in points {
        let c = chain.atlas.home_chart(p);
        let factors = match chain.factors_at(1.0, c, p) {
            Ok(f) => f,
            Err(_) => {
                broken = true;
                continue;
            }
        };
        let mut acc = Mat::identity(n);
        for (i, f) in &factors {
            let e = f.matrix();
            acc = &e * &acc;
            let nil = f.nilpotent();
            let unip = (&nil * &nil).operator_norm();
            let rank = nil.numerical_rank(opts.tol_point);
            report.factor_unipotency[*i] = report.factor_unipotency[*i].max(unip);
            report.unipotency_residual = report.unipotency_residual.max(unip);
            report.max_rank = report.max_rank.max(rank);
            report.max_factor_norm = report.max_factor_norm.max(e.operator_norm());
            let mut bad = unip > opts.tol_point || rank > report.rank_bound;
            if symplectic {
                let r = symplectic_residual(&e).unwrap_or(f64::INFINITY);
                let worst = report.symplectic_residual.get_or_insert(0.0);
                *worst = worst.max(r);
                bad |= r > opts.tol_point;
                if let (Some(count), FactorValue::Transvection(t)) = (report.lagrangian_violations.as_mut(), f) {
                    if !split.respects(t) {
                        *count += 1;
                        bad = true;
                    }
                }
            }
            if let Some(count) = report.line_elementary_violations.as_mut() {
                let nonzero = (0..n)
                    .flat_map(|a| (0..n).map(move |b| (a, b)))
                    .filter(|&(a, b)| nil[(a, b)].norm() > 1e-12)
                    .collect::<Vec<_>>();
                if nonzero.len() > 1 || nonzero.iter().any(|(a, b)| a == b) {
                    *count += 1;
                    bad = true;
                }
            }
            if bad {
                failing[*i] = true;
            }
        }
        let r = (&acc - &s.eval(c, p)).operator_norm();
        report.reconstruction_residual = report.reconstruction_residual.max(r);
        if !chain.partition().is_empty() {
            match chain.factors_at(0.0, c, p) {
                Ok(f0) => {
                    for (_, f) in f0 {
                        report.start_residual = report.start_residual.max(f.nilpotent().operator_norm());
                    }
                }
                Err(_) => broken = true,
            }
        }
    }
    report.failing_factors = (0..failing.len()).filter(|&i| failing[i]).collect();
    report.pass = !broken
        && report.failing_factors.is_empty()
        && report.reconstruction_residual <= opts.tol_final
        && report.start_residual <= opts.tol_point;
    report
}
