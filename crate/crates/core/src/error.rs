use thiserror::Error;

/// Failures raised by the factorization pipelines and their building blocks.
///
/// Variant names are part of the CLI contract: the diagnostic stream prints
/// them verbatim.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error("NotNilpotentPair: functional does not annihilate direction (|alpha(v)| = {0:e})")]
    NotNilpotentPair(f64),
    #[error("NotIsotropicPair: |omega(v, w)| = {0:e}")]
    NotIsotropicPair(f64),
    #[error("NotSpecial: determinant {0} is not one")]
    NotSpecial(String),
    #[error("NotNearIdentity: {0}")]
    NotNearIdentity(String),
    #[error("IllConditioned: condition number {0:e} exceeds bound")]
    IllConditioned(f64),
    #[error("SingularDiagonal: diagonal entry {index} has modulus {modulus:e}")]
    SingularDiagonal { index: usize, modulus: f64 },
    #[error("OddDimension: symplectic matrices need even size, got {0}")]
    OddDimension(usize),
    #[error("NotSymplectic: residual {0:e}")]
    NotSymplectic(f64),
    #[error("BadParameter: {0}")]
    BadParameter(String),
    #[error("DimensionOutOfRange: {q} exceeds {max}")]
    DimensionOutOfRange { q: i64, max: i64 },
    #[error("BadRadii: need 0 < r1 < r2, got r1 = {r1}, r2 = {r2}")]
    BadRadii { r1: f64, r2: f64 },
    #[error("InvalidComplex: {0}")]
    InvalidComplex(String),
    #[error("AtlasMismatch: {0}")]
    AtlasMismatch(String),
    #[error("InvalidAtlas: {0}")]
    InvalidAtlas(String),
    #[error("InvalidSection: {0}")]
    InvalidSection(String),
    #[error("SubdivisionOverflow: more than {0} steps needed")]
    SubdivisionOverflow(usize),
    #[error("HypothesisViolated: {0}")]
    HypothesisViolated(String),
    #[error("UnsupportedRank: {0}")]
    UnsupportedRank(String),
    #[error("NotDiagonalAtlas: {0}")]
    NotDiagonalAtlas(String),
    #[error("NotCompactDomain: {0}")]
    NotCompactDomain(String),
    #[error("NotPositiveDefinite: minimal eigenvalue {0:e}")]
    NotPositiveDefinite(f64),
    #[error("NotKahler: {0}")]
    NotKahler(String),
    #[error("Parse: {0}")]
    Parse(String),
}

impl FactorError {
    /// The bare variant name, as printed on the diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            FactorError::NotNilpotentPair(_) => "NotNilpotentPair",
            FactorError::NotIsotropicPair(_) => "NotIsotropicPair",
            FactorError::NotSpecial(_) => "NotSpecial",
            FactorError::NotNearIdentity(_) => "NotNearIdentity",
            FactorError::IllConditioned(_) => "IllConditioned",
            FactorError::SingularDiagonal { .. } => "SingularDiagonal",
            FactorError::OddDimension(_) => "OddDimension",
            FactorError::NotSymplectic(_) => "NotSymplectic",
            FactorError::BadParameter(_) => "BadParameter",
            FactorError::DimensionOutOfRange { .. } => "DimensionOutOfRange",
            FactorError::BadRadii { .. } => "BadRadii",
            FactorError::InvalidComplex(_) => "InvalidComplex",
            FactorError::AtlasMismatch(_) => "AtlasMismatch",
            FactorError::InvalidAtlas(_) => "InvalidAtlas",
            FactorError::InvalidSection(_) => "InvalidSection",
            FactorError::SubdivisionOverflow(_) => "SubdivisionOverflow",
            FactorError::HypothesisViolated(_) => "HypothesisViolated",
            FactorError::UnsupportedRank(_) => "UnsupportedRank",
            FactorError::NotDiagonalAtlas(_) => "NotDiagonalAtlas",
            FactorError::NotCompactDomain(_) => "NotCompactDomain",
            FactorError::NotPositiveDefinite(_) => "NotPositiveDefinite",
            FactorError::NotKahler(_) => "NotKahler",
            FactorError::Parse(_) => "Parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, FactorError>;
