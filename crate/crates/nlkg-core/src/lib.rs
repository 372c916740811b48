//! Numerical laboratory for one-parameter families of multi-solitons of the
//! one-dimensional nonlinear Klein-Gordon equation
//!
//! ```text
//! u_tt - u_xx + u - f(u) = 0,      f(u) = a |u|^{p-1} u,
//! ```
//!
//! on a large periodic domain. The crate is organised around the pipeline
//!
//! * [`profiles`] — ground states, Lorentz boosts, multi-soliton profiles,
//!   field states and snapshot I/O;
//! * [`spectral`] — linearised operators around a boosted soliton, their
//!   kernel/eigenvector systems and normalisation solves;
//! * [`evolve`] — reversible time steppers, conserved quantities, observers;
//! * [`construct`] — backward construction of the one-parameter family
//!   (exit-time maps, classification thresholds, stabilised final data);
//! * [`analyze`] — modulation decompositions, rate fits, virial/monotonicity
//!   functionals and the synthetic rate verifier;
//! * [`harness`] — configuration, run manifests, deterministic artifact
//!   writers and the acceptance-criteria harness backing the `nlkg` CLI.
//!
//! Everything is deterministic: fixed seeds, sequential reductions, and
//! artifact writers that never embed timestamps.

pub mod analyze;
pub mod construct;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod profiles;
pub mod reference;
pub mod spectral;

pub use error::{NlkgError, Result};
