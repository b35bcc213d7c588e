//! Compositional certificates for interconnections of hybrid systems whose
//! discrete parts are deterministic finite state machines over finite
//! alphabets.
//!
//! The crate is organised bottom-up:
//!
//! * [`symla`]: dense symmetric linear algebra and a small interior-point
//!   SDP solver with quadratic objectives.
//! * [`model`]: hybrid subsystems (per-mode LTI flow plus a DFSM) and the
//!   static interconnection.
//! * [`certificates`]: local dissipativity, global coupling and stability
//!   LMIs, and the centralized gain problem.
//! * [`consensus`]: consensus ADMM and accelerated ADMM with smoothing and
//!   restarts over the supply-rate variables.
//! * [`simulate`]: hybrid trajectory simulation and empirical audits of the
//!   certificates.
//! * [`bench`]: reproducible random instances and method sweeps.

pub mod bench;
pub mod certificates;
pub mod consensus;
pub mod error;
pub mod model;
pub mod simulate;
pub mod symla;

pub use error::{Error, Result};
