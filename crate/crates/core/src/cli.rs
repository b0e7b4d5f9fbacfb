//! Batch front end: commands, flags and exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bundle::{dw_distance, AtlasSpec, MatrixClass, Section, Structure, Twist};
use crate::curvature::{MetricChart, MetricGenerator, MetricParams};
use crate::error::{FactorError, Result};
use crate::global::{
    factor_near_identity_section, factor_special_automorphism, factor_symplectic, factor_with_line_splitting,
    verify_factorization, FactorChain, PipelineOptions, NEAR_IDENTITY_BOUND,
};
use crate::io::{
    load_field, residual_table, to_json, AtlasFile, ChainFile, ComplexSource, FieldFile, FieldSpec, GeneratorName,
    LoadedField, MetricFile, ReportFile,
};
use crate::matrix::ScalarKind;
use crate::mesh::{build_standard_complex, StandardKind};

#[derive(Parser, Debug)]
#[command(name = "bundlefactor", version, about = "Unipotent factorization of bundle automorphisms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Factor a field file; writes chain.json and report.json.
    Factor { field: PathBuf },
    /// Check a chain file against a field file.
    Verify { chain: PathBuf, field: PathBuf },
    /// Generate a bundled input and factor it.
    Demo { name: Demo },
    /// Emit a standard complex.
    Mesh {
        kind: String,
        #[arg(long, default_value_t = 4)]
        size: usize,
    },
    /// Emit the curvature field file of a metric file.
    Metric { metric: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Real,
    Complex,
    SymplecticReal,
    SymplecticComplex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    Sl3Torus,
    Su2Sphere,
    SpRotationCircle,
    CurvatureSphere,
    KahlerTorus,
}

#[derive(Args, Debug, Clone)]
pub struct Flags {
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol_point: f64,
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol_stage: f64,
    #[arg(long, global = true, default_value_t = 1e-7)]
    pub tol_final: f64,
    #[arg(long, global = true, default_value_t = 3)]
    pub quadrature_order: usize,
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// Output directory (factor, verify, demo) or file (mesh, metric).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Keep every transvection inside one Lagrangian.
    #[arg(long, global = true)]
    pub lagrangian: bool,
}

impl Flags {
    pub fn options(&self) -> PipelineOptions {
        PipelineOptions {
            epsilon: self.epsilon,
            quadrature_order: self.quadrature_order,
            tol_point: self.tol_point,
            tol_stage: self.tol_stage,
            tol_final: self.tol_final,
            lagrangian: self.lagrangian,
            ..PipelineOptions::default()
        }
    }
}

/// Exit status for a failure.
pub fn exit_code(e: &FactorError) -> i32 {
    match e {
        FactorError::NotNearIdentity(_) | FactorError::SubdivisionOverflow(_) => 3,
        FactorError::UnsupportedRank(_) | FactorError::NotCompactDomain(_) => 4,
        _ => 2,
    }
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    let flags = &cli.flags;
    let out = match &cli.command {
        Command::Factor { field } => read(field).and_then(|s| cmd_factor(&s, flags, None)),
        Command::Verify { chain, field } => {
            read(chain).and_then(|c| read(field).and_then(|f| cmd_verify(&c, &f, flags)))
        }
        Command::Demo { name } => cmd_demo(*name, flags),
        Command::Mesh { kind, size } => cmd_mesh(kind, *size, flags),
        Command::Metric { metric } => read(metric).and_then(|m| cmd_metric(&m, flags)),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            exit_code(&e)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| FactorError::Parse(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| FactorError::Parse(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| FactorError::Parse(format!("{}: {e}", path.display())))
}

fn out_dir(flags: &Flags, default: &str) -> PathBuf {
    flags.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn check_mode(field: &LoadedField, flags: &Flags) -> Result<Mode> {
    let atlas = &field.atlas;
    let k = atlas.rank();
    if let Some(want) = flags.k {
        if want != k {
            return Err(FactorError::BadParameter(format!("--k {want} but the field has rank {k}")));
        }
    }
    let symplectic = atlas.structure() == Structure::Symplectic;
    let mode = flags.mode.unwrap_or(match (symplectic, atlas.scalar()) {
        (false, ScalarKind::Real) => Mode::Real,
        (false, ScalarKind::Complex) => Mode::Complex,
        (true, ScalarKind::Real) => Mode::SymplecticReal,
        (true, ScalarKind::Complex) => Mode::SymplecticComplex,
    });
    let scalar = match mode {
        Mode::Real | Mode::SymplecticReal => ScalarKind::Real,
        Mode::Complex | Mode::SymplecticComplex => ScalarKind::Complex,
    };
    if scalar != atlas.scalar() {
        return Err(FactorError::BadParameter(format!("--mode {mode:?} does not match a {:?} bundle", atlas.scalar())));
    }
    match mode {
        Mode::Real if k < 3 => Err(FactorError::UnsupportedRank(format!("real bundles need rank at least 3, got {k}"))),
        Mode::Complex if k < 2 => Err(FactorError::UnsupportedRank(format!("complex bundles need rank at least 2, got {k}"))),
        Mode::SymplecticReal | Mode::SymplecticComplex if k % 2 != 0 => Err(FactorError::OddDimension(k)),
        _ => Ok(mode),
    }
}

/// Runs the pipeline the field and mode call for.
pub fn factor_field(field: &LoadedField, flags: &Flags) -> Result<FactorChain> {
    let mode = check_mode(field, flags)?;
    let opts = flags.options();
    let symplectic = matches!(mode, Mode::SymplecticReal | Mode::SymplecticComplex);
    match &field.homotopy {
        Some(h) if symplectic => factor_symplectic(h, &opts),
        Some(h) if field.atlas.structure() == Structure::DiagonalSplit => factor_with_line_splitting(h, &opts),
        Some(h) => factor_special_automorphism(h, &opts),
        None => {
            let points = field.atlas.complex().sample_points(opts.quadrature_order);
            let d = dw_distance(&field.section, &Section::identity(field.atlas.clone()), &points)?;
            if d >= NEAR_IDENTITY_BOUND {
                return Err(FactorError::NotNearIdentity(format!(
                    "no homotopy given and the section is {d:.3} from the identity"
                )));
            }
            factor_near_identity_section(&field.section, &opts)
        }
    }
}

/// Factors the field in `field_json`, writes chain and report, prints the
/// residual table.
pub fn cmd_factor(field_json: &str, flags: &Flags, dir: Option<&Path>) -> Result<i32> {
    let field = load_field(field_json)?;
    let chain = factor_field(&field, flags)?;
    let opts = flags.options();
    let points = field.atlas.complex().sample_points(opts.quadrature_order);
    let report = ReportFile {
        verification: verify_factorization(&chain, &field.section, &opts, &points),
        curvature: field.curvature.clone(),
        mismatched_factors: Vec::new(),
    };
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| out_dir(flags, "."));
    write(&dir.join("chain.json"), &to_json(&ChainFile::of(&chain, &opts)?))?;
    write(&dir.join("report.json"), &to_json(&report))?;
    print!("{}", residual_table(&report));
    Ok(if report.verification.pass { 0 } else { 1 })
}

/// Rebuilds the chain from its recipe, compares the stored samples and
/// re-runs verification.
pub fn cmd_verify(chain_json: &str, field_json: &str, flags: &Flags) -> Result<i32> {
    let stored = ChainFile::from_json(chain_json)?;
    let field = load_field(field_json)?;
    let chain = stored.rebuild(&field)?;
    let rebuilt = ChainFile::of(&chain, &stored.options)?;
    let mismatched = stored.mismatches(&rebuilt);
    let points = field.atlas.complex().sample_points(stored.options.quadrature_order);
    let report = ReportFile {
        verification: verify_factorization(&chain, &field.section, &stored.options, &points),
        curvature: field.curvature.clone(),
        mismatched_factors: mismatched.clone(),
    };
    if let Some(dir) = &flags.out {
        write(&dir.join("report.json"), &to_json(&report))?;
    }
    print!("{}", residual_table(&report));
    if let Some(&i) = mismatched.first() {
        eprintln!("FactorMismatch: factor {i} differs from the rebuilt chain ({} in total)", mismatched.len());
        return Ok(1);
    }
    Ok(if report.verification.pass { 0 } else { 1 })
}

fn standard(name: &str, size: usize) -> ComplexSource {
    ComplexSource::Standard {
        standard: name.into(),
        size,
    }
}

/// Input field file of a demo.
pub fn demo_field(demo: Demo, seed: u64) -> Result<FieldFile> {
    let generator = |name, params| FieldSpec::Generator { name, params };
    let atlas = |complex, rank, scalar, structure, twist| AtlasFile {
        complex,
        spec: AtlasSpec {
            rank,
            scalar,
            structure,
            twist,
            transition_scale: 1.0,
        },
    };
    Ok(match demo {
        Demo::Sl3Torus => FieldFile {
            atlas: atlas(standard("torus_grid", 4), 3, ScalarKind::Real, Structure::Orthogonal, Twist::None),
            class: MatrixClass::Special,
            field: generator(GeneratorName::AlgebraExp, json!({"algebra": "sl", "amplitude": 1.0, "seed": seed})),
            nullhomotopy: None,
        },
        Demo::Su2Sphere => FieldFile {
            atlas: atlas(
                standard("icosphere", 1),
                2,
                ScalarKind::Complex,
                Structure::Unitary,
                Twist::Clutching { degree: 1, plane: [0, 1] },
            ),
            class: MatrixClass::Compact,
            field: generator(GeneratorName::AlgebraExp, json!({"algebra": "skew", "amplitude": 1.0, "seed": seed})),
            nullhomotopy: None,
        },
        Demo::SpRotationCircle => FieldFile {
            atlas: atlas(standard("circle", 8), 4, ScalarKind::Real, Structure::Symplectic, Twist::None),
            class: MatrixClass::Symplectic,
            field: generator(GeneratorName::RotationLoop, serde_json::Value::Null),
            nullhomotopy: None,
        },
        Demo::CurvatureSphere => MetricFile {
            metric: MetricChart::round_sphere(1.0),
            complex: None,
            pair: None,
            mode: None,
        }
        .field_file()?,
        Demo::KahlerTorus => MetricFile {
            metric: MetricChart::new(2, MetricGenerator::KahlerTorus, MetricParams::default(), None)?,
            complex: None,
            pair: None,
            mode: None,
        }
        .field_file()?,
    })
}

pub fn cmd_demo(demo: Demo, flags: &Flags) -> Result<i32> {
    let name = demo.to_possible_value().expect("demo names").get_name().to_string();
    let dir = out_dir(flags, &format!("demo-{name}"));
    let field = to_json(&demo_field(demo, flags.seed)?);
    write(&dir.join("field.json"), &field)?;
    println!("demo {name}: inputs in {}", dir.display());
    cmd_factor(&field, flags, Some(&dir))
}

fn emit(flags: &Flags, contents: &str) -> Result<()> {
    match &flags.out {
        Some(path) => write(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

pub fn cmd_mesh(kind: &str, size: usize, flags: &Flags) -> Result<i32> {
    let c = build_standard_complex(StandardKind::from_name(kind, size)?)?;
    emit(flags, &to_json(&c.to_file()))?;
    Ok(0)
}

pub fn cmd_metric(metric_json: &str, flags: &Flags) -> Result<i32> {
    let field = MetricFile::from_json(metric_json)?.field_file()?;
    let text = to_json(&field);
    // the emitted file must load
    load_field(&text)?;
    emit(flags, &text)?;
    Ok(0)
}
