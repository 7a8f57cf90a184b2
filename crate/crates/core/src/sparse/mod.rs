//! Sparse symmetric linear algebra: minimum degree ordering, static-pivoting
//! LDLᵀ with pivot-epsilon perturbation, inertia, and Richardson refinement.

mod ldl;
mod matrix;
mod mm;
mod ordering;
mod refine;

pub use ldl::{analyze, analyze_with_ordering, factorize, Inertia, LdlFactors, SymbolicFactorization};
pub use matrix::SparseSymMatrix;
pub use mm::{read_matrix_market, write_matrix_market};
pub use ordering::minimum_degree;
pub use refine::{solve_refined, RefineOptions, RefinedSolution};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("matrix pattern differs from the analyzed pattern")]
    PatternMismatch,
    #[error("zero pivot at elimination step {pivot}")]
    ZeroPivot { pivot: usize },
    #[error("non-finite pivot at elimination step {pivot}; factorization invalid")]
    NonFinite { pivot: usize },
}
