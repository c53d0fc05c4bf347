//! Registers with party ownership, projective measurement, and the
//! purification constructions that keep random choices and measurements at
//! the quantum level.
//!
//! Every operation takes a register by reference and returns a new one.

mod observable;
mod ops;
mod register;

pub use observable::{MeasurementRecord, ObservableSpec, BASIS_TOL};
pub use ops::{
    apply_unitary, basis_strings, measure_projective, measured_average, measurement_unitary,
    outcome_distribution, purify_choice, purify_conditional, purify_measurement, reduced_on,
    reduced_state, UNITARY_TOL, WEIGHT_TOL,
};
pub use register::{embed_operator, AncillaKind, AncillaRecord, Party, Register, Subsystem};

pub(crate) use ops::sample_index;
pub(crate) use register::apply_at;
