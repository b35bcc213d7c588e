//! Reproducible random benchmark instances and method sweeps.

mod compare;
mod generate;

pub use compare::{compare_methods, ComparisonTable, MethodSpec, MethodSummary};
pub use generate::{generate, spectral_abscissa, BenchConfig};
