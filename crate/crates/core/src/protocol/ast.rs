use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::engine::{ObservableSpec, Party};
use crate::linalg::{ComplexMatrix, StateVector};

/// Source position (1-based).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// Condition under which a step runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Guard {
    Always,
    /// Runs only when Alice commits to this bit.
    Committed(u8),
    /// Runs only when Alice reveals this bit.
    Revealed(u8),
}

impl Guard {
    pub fn admits(self, commit: u8, reveal: u8) -> bool {
        match self {
            Guard::Always => true,
            Guard::Committed(b) => b == commit,
            Guard::Revealed(b) => b == reveal,
        }
    }
}

/// Operation inside a `choose` or `case` arm.
#[derive(Clone, Debug, PartialEq)]
pub enum ArmOp {
    Measure {
        observable: String,
        targets: Vec<String>,
        record: String,
    },
    Apply {
        unitary: String,
        targets: Vec<String>,
    },
    Skip,
}

impl ArmOp {
    pub fn targets(&self) -> &[String] {
        match self {
            ArmOp::Measure { targets, .. } | ArmOp::Apply { targets, .. } => targets,
            ArmOp::Skip => &[],
        }
    }

    pub fn record(&self) -> Option<&str> {
        match self {
            ArmOp::Measure { record, .. } => Some(record),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    /// One label for `choose`, one per control record for `case` (`_` matches anything).
    pub key: Vec<String>,
    pub op: ArmOp,
}

/// A pointer ancilla introduced by a purified step: label and dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct PointerSpec {
    pub label: String,
    pub dim: usize,
    pub record: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum QuantumStep {
    Prepare {
        party: Party,
        subsystems: Vec<String>,
        state: StateVector,
        source: String,
    },
    Send {
        subsystem: String,
        from: Party,
        to: Party,
    },
    Measure {
        party: Party,
        observable: String,
        targets: Vec<String>,
        record: String,
    },
    Apply {
        party: Party,
        unitary: String,
        targets: Vec<String>,
    },
    Choose {
        party: Party,
        record: String,
        weights: Vec<f64>,
        arms: Vec<Arm>,
    },
    Case {
        party: Party,
        controls: Vec<String>,
        arms: Vec<Arm>,
    },
    /// Measurement replaced by a pointer ancilla.
    PurifiedMeasure {
        party: Party,
        observable: String,
        targets: Vec<String>,
        record: String,
        pointer: PointerSpec,
    },
    /// Random choice replaced by a die ancilla and the block-diagonal
    /// unitary `Σ_k |d_k⟩⟨d_k| ⊗ U_k` on `targets` followed by `pointers`.
    PurifiedChoose {
        party: Party,
        record: String,
        die: String,
        weights: Vec<f64>,
        targets: Vec<String>,
        pointers: Vec<PointerSpec>,
        branches: Vec<ComplexMatrix>,
    },
    /// Outcome-conditioned step replaced by a unitary controlled on the
    /// ancillas holding the control records.
    PurifiedCase {
        party: Party,
        controls: Vec<String>,
        control_ancillas: Vec<String>,
        targets: Vec<String>,
        pointers: Vec<PointerSpec>,
        case_table: BTreeMap<Vec<usize>, ComplexMatrix>,
    },
}

impl QuantumStep {
    pub fn party(&self) -> Party {
        match self {
            QuantumStep::Send { from, .. } => *from,
            QuantumStep::Prepare { party, .. }
            | QuantumStep::Measure { party, .. }
            | QuantumStep::Apply { party, .. }
            | QuantumStep::Choose { party, .. }
            | QuantumStep::Case { party, .. }
            | QuantumStep::PurifiedMeasure { party, .. }
            | QuantumStep::PurifiedChoose { party, .. }
            | QuantumStep::PurifiedCase { party, .. } => *party,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QStep {
    pub pos: Pos,
    pub guard: Guard,
    pub step: QuantumStep,
}

/// Per-round condition on a record.
#[derive(Clone, Debug, PartialEq)]
pub enum Cond {
    Eq(String, String),
    Ne(String, String),
    In(String, Vec<String>),
}

impl Cond {
    pub fn record(&self) -> &str {
        match self {
            Cond::Eq(r, _) | Cond::Ne(r, _) | Cond::In(r, _) => r,
        }
    }

    /// Whether the record value satisfies the condition; unset records
    /// satisfy nothing.
    pub fn holds(&self, value: Option<&str>) -> bool {
        let Some(v) = value else { return false };
        match self {
            Cond::Eq(_, l) => v == l,
            Cond::Ne(_, l) => v != l,
            Cond::In(_, ls) => ls.iter().any(|l| l == v),
        }
    }
}

/// Set of round indices.
#[derive(Clone, Debug, PartialEq)]
pub enum SetExpr {
    Rounds,
    Message(String),
    Where(Box<SetExpr>, Cond),
    Minus(Box<SetExpr>, Box<SetExpr>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// A set of round indices.
    Set(SetExpr),
    /// For each round in the set, the table entry keyed by the record value.
    Lookup {
        set: SetExpr,
        table: String,
        record: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClassicalStep {
    Announce {
        party: Party,
        name: String,
        payload: Payload,
    },
    Reveal {
        party: Party,
    },
    /// Accept iff the message value matches the record in every round of `over`.
    Verify {
        party: Party,
        message: String,
        record: String,
        over: SetExpr,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CStep {
    pub pos: Pos,
    pub guard: Guard,
    pub step: ClassicalStep,
}

/// Named declarations available to steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Declarations {
    pub observables: BTreeMap<String, ObservableSpec>,
    pub unitaries: BTreeMap<String, ComplexMatrix>,
    pub states: BTreeMap<String, StateVector>,
    pub tables: BTreeMap<String, BTreeMap<String, String>>,
}

/// Where a record's value lives.
#[derive(Clone, Debug, PartialEq)]
pub enum RecordSource {
    /// Written by an honest measurement or choice.
    Classical,
    /// Determined by the computational-basis levels of ancillas: `resolve`
    /// is indexed by the row-major level string over `ancillas`.
    Ancilla {
        ancillas: Vec<String>,
        dims: Vec<usize>,
        resolve: Vec<Option<String>>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordInfo {
    pub party: Party,
    /// Possible values, in order of first appearance.
    pub labels: Vec<String>,
    pub source: RecordSource,
    pub defined_at: Pos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    Set,
    Lookup,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MessageInfo {
    pub party: Party,
    pub kind: MessageKind,
}

/// Parsed and statically checked protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolScript {
    pub rounds: usize,
    pub decls: Declarations,
    pub quantum: Vec<QStep>,
    pub classical: Vec<CStep>,
    pub records: BTreeMap<String, RecordInfo>,
    /// Subsystem dimensions (per round).
    pub subsystems: BTreeMap<String, usize>,
    pub messages: BTreeMap<String, MessageInfo>,
    /// Parties whose steps have been purified.
    pub purified: BTreeSet<Party>,
    /// Compiler notes emitted by purification.
    pub notes: Vec<String>,
}

fn join(items: &[String]) -> String {
    items.join(",")
}

fn fmt_weights(w: &[f64]) -> String {
    w.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for ArmOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArmOp::Measure { observable, targets, record } => {
                write!(f, "measure {observable} {} -> {record}", join(targets))
            }
            ArmOp::Apply { unitary, targets } => write!(f, "apply {unitary} {}", join(targets)),
            ArmOp::Skip => write!(f, "skip"),
        }
    }
}

fn fmt_arms(f: &mut fmt::Formatter<'_>, arms: &[Arm]) -> fmt::Result {
    let parts: Vec<String> = arms.iter().map(|a| format!("{}: {}", a.key.join(","), a.op)).collect();
    write!(f, "{{ {} }}", parts.join(" | "))
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Always => Ok(()),
            Guard::Committed(b) => write!(f, "if committed {b}: "),
            Guard::Revealed(b) => write!(f, "if revealed {b}: "),
        }
    }
}

impl fmt::Display for QStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.guard)?;
        match &self.step {
            QuantumStep::Prepare { party, subsystems, source, .. } => {
                write!(f, "prepare {} {} {source}", party.tag(), join(subsystems))
            }
            QuantumStep::Send { subsystem, from, to } => write!(f, "send {subsystem} {} {}", from.tag(), to.tag()),
            QuantumStep::Measure { party, observable, targets, record } => {
                write!(f, "measure {} {observable} {} -> {record}", party.tag(), join(targets))
            }
            QuantumStep::Apply { party, unitary, targets } => {
                write!(f, "apply {} {unitary} {}", party.tag(), join(targets))
            }
            QuantumStep::Choose { party, record, weights, arms } => {
                write!(f, "choose {} {record} weights [{}] ", party.tag(), fmt_weights(weights))?;
                fmt_arms(f, arms)
            }
            QuantumStep::Case { party, controls, arms } => {
                write!(f, "case {} {} ", party.tag(), join(controls))?;
                fmt_arms(f, arms)
            }
            QuantumStep::PurifiedMeasure { party, observable, targets, record, pointer } => write!(
                f,
                "purified-measure {} {observable} {} -> {record} pointer {}[{}]",
                party.tag(),
                join(targets),
                pointer.label,
                pointer.dim
            ),
            QuantumStep::PurifiedChoose { party, record, die, weights, targets, pointers, .. } => {
                let ptrs: Vec<String> = pointers.iter().map(|p| format!("{}[{}]", p.label, p.dim)).collect();
                write!(
                    f,
                    "purified-choose {} {record} die {die}[{}] weights [{}] on {} pointers [{}]",
                    party.tag(),
                    weights.len(),
                    fmt_weights(weights),
                    join(targets),
                    ptrs.join(",")
                )
            }
            QuantumStep::PurifiedCase { party, controls, control_ancillas, targets, pointers, case_table } => {
                let ptrs: Vec<String> = pointers.iter().map(|p| format!("{}[{}]", p.label, p.dim)).collect();
                write!(
                    f,
                    "purified-case {} {} via {} on {} pointers [{}] cases {}",
                    party.tag(),
                    join(controls),
                    join(control_ancillas),
                    join(targets),
                    ptrs.join(","),
                    case_table.len()
                )
            }
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cond::Eq(r, l) => write!(f, "{r} == {l}"),
            Cond::Ne(r, l) => write!(f, "{r} != {l}"),
            Cond::In(r, ls) => write!(f, "{r} in {{{}}}", ls.join(", ")),
        }
    }
}

impl fmt::Display for SetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetExpr::Rounds => write!(f, "rounds"),
            SetExpr::Message(m) => write!(f, "{m}"),
            SetExpr::Where(s, c) => write!(f, "{s} where {c}"),
            SetExpr::Minus(a, b) => write!(f, "({a} - {b})"),
        }
    }
}

impl fmt::Display for CStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.guard)?;
        match &self.step {
            ClassicalStep::Announce { party, name, payload } => match payload {
                Payload::Set(s) => write!(f, "announce {} {name} = {s}", party.tag()),
                Payload::Lookup { set, table, record } => {
                    write!(f, "announce {} {name} = {set} -> {table}({record})", party.tag())
                }
            },
            ClassicalStep::Reveal { party } => write!(f, "reveal {}", party.tag()),
            ClassicalStep::Verify { party, message, record, over } => {
                write!(f, "verify {} {message} matches {record} over {over}", party.tag())
            }
        }
    }
}

impl ProtocolScript {
    /// One line per step, quantum section first.
    pub fn listing(&self) -> String {
        let mut out = format!("rounds {}\n", self.rounds);
        for s in &self.quantum {
            out.push_str(&format!("{s}\n"));
        }
        for s in &self.classical {
            out.push_str(&format!("{s}\n"));
        }
        out
    }

    pub fn observable(&self, name: &str) -> Option<&ObservableSpec> {
        self.decls.observables.get(name)
    }

    pub fn unitary(&self, name: &str) -> Option<&ComplexMatrix> {
        self.decls.unitaries.get(name)
    }

    /// Records held by `party`.
    pub fn records_of(&self, party: Party) -> Vec<&str> {
        self.records
            .iter()
            .filter(|(_, r)| r.party == party)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}
