//! Protocol scripts: parsing, purification, execution and analysis.

mod analysis;
mod ast;
mod compiler;
mod executor;
mod lexer;
mod parser;
mod vaa;

pub use ast::*;
pub use compiler::{die_label, pointer_label, purify, purify_all};
pub use executor::{execute, mode_name, party_seeds, ClassicalEvent, Event, ExecConfig, MessageValue, RoundLog, Transcript};
pub use lexer::{tokenize, Tok, Token};
pub use parser::parse;
pub use analysis::{
    audit_no_signalling, commitment_states, distribution_distance, observation_distribution, undetectability_gap, BobView,
    CommitmentStates, NoSignallingReport, Observation,
};
pub use vaa::{vaa_script, vaa_source, SPIN_CHOICES};
