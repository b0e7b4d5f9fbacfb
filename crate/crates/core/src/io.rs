//! JSON artifacts: atlas, field, metric, factor-chain and report files.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bundle::{
    validate_homotopy, validate_section, Algebra, AlgebraField, AtlasSpec, BundleAtlas, Homotopy, MatrixClass,
    RotationLoopField, SampledField, Section, TransvectionProductField,
};
use crate::curvature::{
    CurvatureField, CurvatureMode, KahlerReport, MetricChart, MetricGenerator, VectorField, VectorFieldPair,
};
use crate::error::{FactorError, Result};
use crate::global::{
    factor_near_identity_section, rebuild_homotopy_chain, ChainTag, Family, FactorChain, FactorMeta, FactorValue,
    PipelineOptions, VerifyReport,
};
use crate::matrix::{Mat, ScalarKind, C64};
use crate::mesh::{build_standard_complex, ComplexFile, SimplicialComplex, StandardKind};

/// Sample order used when validating loaded fields.
pub const LOAD_ORDER: usize = 2;
/// Absolute tolerance when comparing stored factor samples with a rebuild.
pub const SAMPLE_TOL: f64 = 1e-9;

fn parse<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| FactorError::Parse(e.to_string()))
}

fn from_value<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| FactorError::Parse(e.to_string()))
}

pub fn to_json<T: Serialize>(x: &T) -> String {
    let mut s = serde_json::to_string_pretty(x).expect("artifacts serialize");
    s.push('\n');
    s
}

/// A real number or a [re, im] pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(self) -> C64 {
        match self {
            Entry::Real(x) => C64::new(x, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }

    fn of(z: C64, scalar: ScalarKind) -> Self {
        match scalar {
            ScalarKind::Real => Entry::Real(z.re),
            ScalarKind::Complex => Entry::Complex([z.re, z.im]),
        }
    }
}

fn matrix_from(rows: &[Vec<Entry>], n: usize) -> Result<Mat> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(FactorError::InvalidSection(format!("expected a {n}×{n} matrix")));
    }
    let m = Mat::from_fn(n, |i, j| rows[i][j].value());
    if m.entries().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(FactorError::InvalidSection("non-finite matrix entry".into()));
    }
    Ok(m)
}

fn vector_of(v: &[C64], scalar: ScalarKind) -> Vec<Entry> {
    v.iter().map(|&z| Entry::of(z, scalar)).collect()
}

/// A standard complex by name, or an inline complex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexSource {
    Standard { standard: String, size: usize },
    Inline(ComplexFile),
}

impl ComplexSource {
    pub fn build(&self) -> Result<SimplicialComplex> {
        match self {
            ComplexSource::Standard { standard, size } => {
                build_standard_complex(StandardKind::from_name(standard, *size)?)
            }
            ComplexSource::Inline(f) => SimplicialComplex::from_file(f.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtlasFile {
    pub complex: ComplexSource,
    #[serde(flatten)]
    pub spec: AtlasSpec,
}

impl AtlasFile {
    pub fn of(atlas: &BundleAtlas) -> Self {
        Self {
            complex: ComplexSource::Inline(atlas.complex().to_file()),
            spec: atlas.spec().clone(),
        }
    }

    pub fn build(&self) -> Result<Arc<BundleAtlas>> {
        let c = Arc::new(self.complex.build()?);
        Ok(Arc::new(BundleAtlas::new(c, self.spec.clone())?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorName {
    Identity,
    AlgebraExp,
    TransvectionProduct,
    RotationLoop,
    Curvature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    /// Parametric generator; the homotopy parameter t is built in.
    Generator {
        name: GeneratorName,
        #[serde(default)]
        params: Value,
    },
    /// Vertex values in each vertex's home chart, per time sample when
    /// `time_samples` is present.
    Samples {
        vertex_values: Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        time_samples: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    pub atlas: AtlasFile,
    pub class: MatrixClass,
    pub field: FieldSpec,
    /// Defaults to true for generators and time-sampled fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nullhomotopy: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AlgebraParams {
    algebra: Algebra,
    #[serde(default = "one")]
    amplitude: f64,
    #[serde(default)]
    seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TransvectionParams {
    #[serde(default = "three")]
    count: usize,
    #[serde(default = "half")]
    amplitude: f64,
    #[serde(default)]
    seed: u64,
}

/// Parameters of the `curvature` generator (also the extended metric file).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureParams {
    pub metric: MetricChart,
    pub pair: VectorFieldPair,
    pub mode: CurvatureMode,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn three() -> usize {
    3
}

/// Curvature diagnostics attached to fields built from a metric.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvatureSummary {
    pub trace_residual: f64,
    pub skew_residual: f64,
    pub projection_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kahler: Option<KahlerReport>,
}

/// A parsed and validated field file.
#[derive(Clone, Debug)]
pub struct LoadedField {
    pub atlas: Arc<BundleAtlas>,
    pub section: Section,
    pub homotopy: Option<Homotopy>,
    pub curvature: Option<CurvatureSummary>,
}

pub fn load_field(json: &str) -> Result<LoadedField> {
    load_field_file(parse(json)?)
}

pub fn load_field_file(file: FieldFile) -> Result<LoadedField> {
    let atlas = file.atlas.build()?;
    let mut curvature = None;
    let (field, default_null): (Arc<dyn crate::bundle::Field>, bool) = match file.field {
        FieldSpec::Generator { name, params } => {
            let params = if params.is_null() { Value::Object(Default::default()) } else { params };
            let f: Arc<dyn crate::bundle::Field> = match name {
                GeneratorName::Identity => {
                    let n = atlas.rank();
                    Arc::new(move |_t: f64, _c: usize, _p: &crate::mesh::Point| Mat::identity(n))
                }
                GeneratorName::AlgebraExp => {
                    let p: AlgebraParams = from_value(params)?;
                    Arc::new(AlgebraField::random(atlas.clone(), p.algebra, p.amplitude, p.seed)?)
                }
                GeneratorName::TransvectionProduct => {
                    let p: TransvectionParams = from_value(params)?;
                    Arc::new(TransvectionProductField::random(atlas.clone(), p.count, p.amplitude, p.seed)?)
                }
                GeneratorName::RotationLoop => Arc::new(RotationLoopField::new(atlas.clone())?),
                GeneratorName::Curvature => {
                    let p: CurvatureParams = from_value(params)?;
                    let (derived, field) = CurvatureField::new(atlas.complex_arc().clone(), p.metric, p.pair, p.mode)?;
                    if derived.spec() != atlas.spec() {
                        return Err(FactorError::InvalidAtlas(
                            "atlas does not match the bundle the metric defines".into(),
                        ));
                    }
                    let r = field.vertex_residuals()?;
                    curvature = Some(CurvatureSummary {
                        trace_residual: r.trace,
                        skew_residual: r.skew,
                        projection_residual: field.projection_residual()?,
                        kahler: match p.mode {
                            CurvatureMode::Symplectic => Some(field.vertex_kahler()?),
                            CurvatureMode::Orthogonal => None,
                        },
                    });
                    Arc::new(field)
                }
            };
            (f, true)
        }
        FieldSpec::Samples {
            vertex_values,
            time_samples,
        } => {
            let n = atlas.rank();
            let parse_vertices = |v: Value| -> Result<Vec<Mat>> {
                let rows: Vec<Vec<Vec<Entry>>> = from_value(v)?;
                rows.iter().map(|m| matrix_from(m, n)).collect()
            };
            let (times, values) = match time_samples {
                Some(ts) => {
                    let per_time: Vec<Value> = from_value(vertex_values)?;
                    let values = per_time.into_iter().map(parse_vertices).collect::<Result<Vec<_>>>()?;
                    (ts, values)
                }
                None => (vec![1.0], vec![parse_vertices(vertex_values)?]),
            };
            let timed = times.len() > 1;
            (Arc::new(SampledField::new(atlas.clone(), times, values, file.class)?), timed)
        }
    };
    let null = file.nullhomotopy.unwrap_or(default_null);
    let section = Section::new(atlas.clone(), field.clone(), file.class);
    let homotopy = if default_null || null {
        let h = Homotopy::new(atlas.clone(), field, file.class, null);
        validate_homotopy(&h, LOAD_ORDER)?;
        Some(h)
    } else {
        validate_section(&section, LOAD_ORDER)?;
        None
    };
    Ok(LoadedField {
        atlas,
        section,
        homotopy,
        curvature,
    })
}

/// Metric file, optionally extended with the complex, the vector fields and
/// the target group of the curvature field it defines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricFile {
    #[serde(flatten)]
    pub metric: MetricChart,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complex: Option<ComplexSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<VectorFieldPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<CurvatureMode>,
}

impl MetricFile {
    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = parse(s)?;
        m.metric.validate()?;
        Ok(m)
    }

    /// The curvature field file this metric defines, with defaults filled in.
    pub fn field_file(&self) -> Result<FieldFile> {
        let sphere = self.metric.generator == MetricGenerator::RoundSphere;
        let complex = match (&self.complex, self.metric.generator) {
            (Some(c), _) => c.clone(),
            (None, MetricGenerator::RoundSphere) => standard("icosphere", 1),
            (None, MetricGenerator::FlatTorus | MetricGenerator::KahlerTorus) => standard("torus_grid", 4),
            (None, _) if self.metric.dim == 1 => standard("interval", 4),
            (None, _) => {
                return Err(FactorError::BadParameter(
                    "this metric needs an explicit complex".into(),
                ))
            }
        };
        let pair = self.pair.clone().unwrap_or(if sphere {
            VectorFieldPair {
                u: VectorField::Killing { axis: [0.0, 0.0, 1.0] },
                v: VectorField::Killing { axis: [1.0, 0.0, 0.0] },
            }
        } else {
            VectorFieldPair {
                u: VectorField::Coordinate { index: 0 },
                v: VectorField::Coordinate {
                    index: 1.min(self.metric.dim - 1),
                },
            }
        });
        let kahler = self.metric.j.is_some() || self.metric.generator == MetricGenerator::KahlerTorus;
        let mode = self.mode.unwrap_or(if kahler {
            CurvatureMode::Symplectic
        } else {
            CurvatureMode::Orthogonal
        });
        let built = Arc::new(complex.build()?);
        let (atlas, field) = CurvatureField::new(built, self.metric.clone(), pair.clone(), mode)?;
        let params = CurvatureParams {
            metric: self.metric.clone(),
            pair,
            mode,
        };
        Ok(FieldFile {
            atlas: AtlasFile {
                complex,
                spec: atlas.spec().clone(),
            },
            class: field.class(),
            field: FieldSpec::Generator {
                name: GeneratorName::Curvature,
                params: serde_json::to_value(params).expect("params serialize"),
            },
            nullhomotopy: None,
        })
    }
}

fn standard(name: &str, size: usize) -> ComplexSource {
    ComplexSource::Standard {
        standard: name.into(),
        size,
    }
}

/// Parameter data of one factor at one vertex (vertex home chart).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexSample {
    pub vertex: usize,
    pub v: Vec<Entry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<Entry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<Entry>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorRecord {
    pub index: usize,
    #[serde(flatten)]
    pub meta: FactorMeta,
    /// Vertices where the factor is not the identity.
    pub samples: Vec<VertexSample>,
}

/// Serialized chain: the pipeline recipe (tag, options, partition, atlas)
/// and, per factor, its origin and vertex samples. The recipe determines the
/// factor fields everywhere; the samples pin them down for comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    pub tag: ChainTag,
    pub family: Family,
    pub options: PipelineOptions,
    pub partition: Vec<f64>,
    pub atlas: AtlasFile,
    pub history: Vec<String>,
    pub factors: Vec<FactorRecord>,
}

impl ChainFile {
    pub fn of(chain: &FactorChain, options: &PipelineOptions) -> Result<Self> {
        let atlas = chain.atlas();
        let scalar = atlas.scalar();
        let c = atlas.complex();
        let mut factors: Vec<FactorRecord> = (0..chain.len())
            .map(|i| FactorRecord {
                index: i,
                meta: chain.meta(i),
                samples: Vec::new(),
            })
            .collect();
        for vertex in 0..c.vertices().len() {
            let p = c.vertex_point(vertex);
            for (i, f) in chain.factors_at(1.0, atlas.home_chart(&p), &p)? {
                let s = match &f {
                    FactorValue::Shear(e) => VertexSample {
                        vertex,
                        v: vector_of(e.direction(), scalar),
                        alpha: Some(vector_of(e.functional(), scalar)),
                        w: None,
                    },
                    FactorValue::Transvection(e) => VertexSample {
                        vertex,
                        v: vector_of(e.v(), scalar),
                        alpha: None,
                        w: Some(vector_of(e.w(), scalar)),
                    },
                };
                factors[i].samples.push(s);
            }
        }
        Ok(Self {
            tag: chain.tag(),
            family: chain.family(),
            options: options.clone(),
            partition: chain.partition().to_vec(),
            atlas: AtlasFile::of(atlas),
            history: chain.history().to_vec(),
            factors,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        parse(s)
    }

    /// Recomputes the chain from its recipe against a loaded field.
    pub fn rebuild(&self, field: &LoadedField) -> Result<FactorChain> {
        let stored = self.atlas.build()?;
        if !stored.same_as(&field.atlas) {
            return Err(FactorError::AtlasMismatch("chain and field atlases differ".into()));
        }
        match self.tag {
            ChainTag::NearIdentity => factor_near_identity_section(&field.section, &self.options),
            ChainTag::SpecialAutomorphism | ChainTag::LineSplitting | ChainTag::Symplectic => {
                let h = field
                    .homotopy
                    .as_ref()
                    .ok_or_else(|| FactorError::HypothesisViolated("the chain needs a homotopy".into()))?;
                rebuild_homotopy_chain(h, self.tag, self.partition.clone(), &self.options)
            }
            other => Err(FactorError::BadParameter(format!("chains tagged {other:?} are not stored"))),
        }
    }

    /// Indices of stored factors that differ from `other` (including any
    /// beyond the shorter list).
    pub fn mismatches(&self, other: &ChainFile) -> Vec<usize> {
        let close = |a: &[Entry], b: &[Entry]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x.value() - y.value()).norm() <= SAMPLE_TOL)
        };
        let opt_close = |a: &Option<Vec<Entry>>, b: &Option<Vec<Entry>>| match (a, b) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            _ => false,
        };
        let n = self.factors.len().max(other.factors.len());
        (0..n)
            .filter(|&i| match (self.factors.get(i), other.factors.get(i)) {
                (Some(a), Some(b)) => {
                    a.index != b.index
                        || a.meta != b.meta
                        || a.samples.len() != b.samples.len()
                        || !a.samples.iter().zip(&b.samples).all(|(x, y)| {
                            x.vertex == y.vertex && close(&x.v, &y.v) && opt_close(&x.alpha, &y.alpha) && opt_close(&x.w, &y.w)
                        })
                }
                _ => true,
            })
            .collect()
    }
}

/// Report file written next to a chain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportFile {
    pub verification: VerifyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curvature: Option<CurvatureSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub mismatched_factors: Vec<usize>,
}

/// Residual table printed by the CLI.
pub fn residual_table(r: &ReportFile) -> String {
    let v = &r.verification;
    let mut rows = vec![
        ("theorem".to_string(), format!("{:?}", v.theorem)),
        ("factors".into(), v.factor_count.to_string()),
        ("homotopy steps".into(), v.steps.to_string()),
        ("sample points".into(), v.sample_points.to_string()),
        ("reconstruction residual".into(), format!("{:.3e}", v.reconstruction_residual)),
        ("start residual".into(), format!("{:.3e}", v.start_residual)),
        ("unipotency residual".into(), format!("{:.3e}", v.unipotency_residual)),
        ("max rank / bound".into(), format!("{} / {}", v.max_rank, v.rank_bound)),
        ("max factor norm".into(), format!("{:.3e}", v.max_factor_norm)),
    ];
    if let Some(s) = v.symplectic_residual {
        rows.push(("symplectic residual".into(), format!("{s:.3e}")));
    }
    if let Some(n) = v.line_elementary_violations {
        rows.push(("line-elementary violations".into(), n.to_string()));
    }
    if let Some(n) = v.lagrangian_violations {
        rows.push(("lagrangian violations".into(), n.to_string()));
    }
    if let Some(c) = &r.curvature {
        rows.push(("curvature trace residual".into(), format!("{:.3e}", c.trace_residual)));
        rows.push(("curvature skew residual".into(), format!("{:.3e}", c.skew_residual)));
        rows.push(("projection residual".into(), format!("{:.3e}", c.projection_residual)));
        if let Some(k) = &c.kahler {
            rows.push(("R·J − J·R".into(), format!("{:.3e}", k.commutation)));
            rows.push(("ΩA + AᵀΩ".into(), format!("{:.3e}", k.symplectic)));
        }
    }
    rows.push(("pass".into(), v.pass.to_string()));
    let w = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, val)| format!("{k:<w$}  {val}\n", w = w))
        .collect()
}
