//! Simulator and analysis toolkit for two-party quantum bit commitment.
//!
//! The crate is layered bottom-up:
//!
//! - [`linalg`]: dense complex linear algebra (tensor products, partial
//!   traces, Schmidt and spectral decompositions, trace distance).
//! - [`engine`]: registers with party ownership, projective measurement and
//!   the purification constructions that keep choices and measurements at
//!   the quantum level (pointer ancillas, die ancillas, conditional unitaries).
//! - [`attack`]: concealment measure and synthesis of the cheating unitary
//!   that turns the 0-commitment into the 1-commitment.
//! - [`abl`]: the pre/post-selection probability rule and the three-spin
//!   retrodiction fixture.
//! - [`protocol`]: a small protocol language, the purification compiler,
//!   the seeded executor and protocol-level analyses.
//! - [`cli`]: report builders behind the `qbc` binary.

pub mod abl;
pub mod attack;
pub mod cli;
pub mod engine;
mod error;
pub mod json;
pub mod linalg;
pub mod protocol;
pub mod sampling;

pub use error::{Error, Result};
