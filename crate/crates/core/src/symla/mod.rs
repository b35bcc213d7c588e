//! Symmetric-matrix algebra, affine matrix expressions and the SDP solver.

mod eig;
mod expr;
mod ipm;
mod problem;
mod sym;

pub use eig::{eigendecompose, max_eigenvalue, min_eigenvalue, project_psd, Eigen};
pub use expr::{AffineMatrix, ScalarVar, SymVar, VarId};
pub use ipm::{solve_sdp, solve_sdp_with, SdpSettings, SdpSolution, SdpStatus};
pub use problem::{Lmi, ScalarConstraint, SdpProblem, Unknown, UnknownKind, DEFAULT_STRICTNESS_MARGIN};
pub use sym::{matrix_from_rows, matrix_to_rows, packed_index, svec, symmetrize, unsvec, SymMatrix, SYMMETRY_TOL};
