//! Augmented Lagrangian nonlinear programming with NCL subproblems.
//!
//! Each subproblem
//!
//! ```text
//! min  φ(x) + y_kᵀ r + ½ ρ_k ‖r‖²   s.t.  c(x) + r = 0,  ℓ ≤ x ≤ u
//! ```
//!
//! is driven by a primal-dual interior-point loop fused with the outer
//! multiplier/penalty updates. Newton steps come from one of three KKT
//! formulations (augmented `K2`, stabilized `K2r`, condensed `K1s`) factorized
//! by a static-pivoting sparse LDLᵀ.
//!
//! Module map:
//! - [`model`]: expression graphs, exact derivatives, NCO → NLP view
//! - [`problems`]: built-in instances and the text instance format
//! - [`sparse`]: ordering, LDLᵀ, inertia, refinement
//! - [`kkt`]: assembly, inertia correction, step recovery
//! - [`ipm`]: barrier residual, fraction-to-boundary, filter line search
//! - [`ncl`]: the outer driver

pub mod ipm;
pub mod kkt;
pub mod model;
pub mod ncl;
pub mod problems;
pub mod scalar;
pub mod sparse;

pub use kkt::KktFormulation;
pub use model::{Expr, Model, NcoProblem};
pub use ncl::{solve, SolveOptions, SolveReport, SolveStatus};
pub use scalar::Real;

/// Double-precision symmetric matrix.
pub type SymMatrix = sparse::SparseSymMatrix<f64>;
/// Double-precision LDLᵀ factors.
pub type Factors = sparse::LdlFactors<f64>;
/// Single-precision symmetric matrix.
pub type SymMatrix32 = sparse::SparseSymMatrix<f32>;
/// Double-precision derivative workspace.
pub type Workspace = model::DerivativeWorkspace<f64>;
