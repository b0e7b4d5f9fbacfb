//! Unipotent factorization of special vector bundle automorphisms.
//!
//! A bundle automorphism is modelled as a matrix field over a triangulated
//! domain whose charts are glued by an orthogonal, unitary, diagonal or
//! symplectic cocycle. The pipelines here write such a field as a finite
//! composition of unipotent factor fields (elementary shears, or symplectic
//! transvections) and re-verify the result at every sample point.

pub mod bundle;
pub mod cli;
pub mod curvature;
pub mod error;
pub mod global;
pub mod io;
pub mod matrix;
pub mod mesh;
pub mod pointwise;
pub mod symplectic;

pub use error::{FactorError, Result};
pub use matrix::{Mat, ScalarKind, ShearFactor, C64};
