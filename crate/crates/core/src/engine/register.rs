use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{offsets, complement, ComplexMatrix, StateVector, C64, ZERO};

/// Who currently holds a subsystem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    Alice,
    Bob,
    Channel,
}

impl Party {
    pub fn name(self) -> &'static str {
        match self {
            Party::Alice => "Alice",
            Party::Bob => "Bob",
            Party::Channel => "Channel",
        }
    }

    /// Single-letter tag used in scripts and reports.
    pub fn tag(self) -> &'static str {
        match self {
            Party::Alice => "A",
            Party::Bob => "B",
            Party::Channel => "C",
        }
    }

    /// The counterparty in a two-party protocol.
    pub fn other(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
            Party::Channel => Party::Channel,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Party {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "Alice" | "alice" => Ok(Party::Alice),
            "B" | "Bob" | "bob" => Ok(Party::Bob),
            "C" | "Channel" | "channel" => Ok(Party::Channel),
            other => Err(Error::lookup(format!("unknown party `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subsystem {
    pub label: String,
    pub dim: usize,
    pub owner: Party,
}

/// What an ancilla appended by a purification step stands for.
#[derive(Clone, Debug, PartialEq)]
pub enum AncillaKind {
    /// Records the outcome of a measurement kept at the quantum level.
    Pointer {
        observable: String,
        targets: Vec<String>,
    },
    /// Encodes a random choice kept at the quantum level.
    Die { weights: Vec<f64> },
    /// Fresh ancilla in `|0⟩` with no particular role yet.
    Plain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AncillaRecord {
    pub label: String,
    pub owner: Party,
    pub kind: AncillaKind,
}

/// Joint pure state of every subsystem in play, with ownership metadata and
/// a ledger of ancillas introduced by purification.
#[derive(Clone, Debug, PartialEq)]
pub struct Register {
    state: StateVector,
    subsystems: Vec<Subsystem>,
    ancillas: Vec<AncillaRecord>,
}

impl Default for Register {
    fn default() -> Self {
        Self::new()
    }
}

impl Register {
    /// Register with no subsystems.
    pub fn new() -> Self {
        Self {
            state: StateVector::scalar(),
            subsystems: Vec::new(),
            ancillas: Vec::new(),
        }
    }

    pub fn from_parts(state: StateVector, subsystems: Vec<Subsystem>) -> Result<Self> {
        if state.dims().len() != subsystems.len()
            || state.dims().iter().zip(&subsystems).any(|(d, s)| *d != s.dim)
        {
            return Err(Error::shape("subsystem dims do not match the state"));
        }
        for (i, s) in subsystems.iter().enumerate() {
            if subsystems[..i].iter().any(|t| t.label == s.label) {
                return Err(Error::lookup(format!("duplicate subsystem label `{}`", s.label)));
            }
        }
        Ok(Self {
            state,
            subsystems,
            ancillas: Vec::new(),
        })
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn ancillas(&self) -> &[AncillaRecord] {
        &self.ancillas
    }

    pub fn dims(&self) -> &[usize] {
        self.state.dims()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.subsystems.iter().map(|s| s.label.as_str()).collect()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| Error::lookup(format!("no subsystem labelled `{label}`")))
    }

    pub fn positions<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        let positions = labels
            .iter()
            .map(|l| self.position(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        for (i, p) in positions.iter().enumerate() {
            if positions[..i].contains(p) {
                return Err(Error::lookup(format!(
                    "subsystem `{}` listed twice",
                    labels[i].as_ref()
                )));
            }
        }
        Ok(positions)
    }

    pub fn subsystem(&self, label: &str) -> Result<&Subsystem> {
        Ok(&self.subsystems[self.position(label)?])
    }

    pub fn owner_of(&self, label: &str) -> Result<Party> {
        Ok(self.subsystem(label)?.owner)
    }

    /// Positions of the subsystems held by `party`.
    pub fn owned_by(&self, party: Party) -> Vec<usize> {
        self.subsystems
            .iter()
            .enumerate()
            .filter(|(_, s)| s.owner == party)
            .map(|(i, _)| i)
            .collect()
    }

    /// Product dimension of the listed subsystems.
    pub fn dim_of<S: AsRef<str>>(&self, labels: &[S]) -> Result<usize> {
        Ok(self
            .positions(labels)?
            .iter()
            .map(|&p| self.subsystems[p].dim)
            .product())
    }

    /// Appends fresh subsystems prepared jointly in `state`, all held by `owner`.
    pub fn prepare<S: AsRef<str>>(&self, labels: &[S], owner: Party, state: &StateVector) -> Result<Register> {
        if labels.len() != state.dims().len() {
            return Err(Error::shape(format!(
                "{} labels for a state on {} subsystems",
                labels.len(),
                state.dims().len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            let l = l.as_ref();
            if self.position(l).is_ok() || labels[..i].iter().any(|m| m.as_ref() == l) {
                return Err(Error::lookup(format!("subsystem label `{l}` already in use")));
            }
        }
        let mut next = self.clone();
        next.state = self.state.tensor(state)?;
        next.subsystems.extend(labels.iter().zip(state.dims()).map(|(l, &dim)| Subsystem {
            label: l.as_ref().to_string(),
            dim,
            owner,
        }));
        Ok(next)
    }

    /// Appends an ancilla in `initial` and records it in the purification ledger.
    pub(crate) fn append_ancilla(
        &self,
        label: &str,
        owner: Party,
        initial: &StateVector,
        kind: AncillaKind,
    ) -> Result<Register> {
        let mut next = self.prepare(&[label], owner, initial)?;
        next.ancillas.push(AncillaRecord {
            label: label.to_string(),
            owner,
            kind,
        });
        Ok(next)
    }

    /// Hands a subsystem to another party.
    pub fn transfer(&self, label: &str, to: Party) -> Result<Register> {
        let p = self.position(label)?;
        let mut next = self.clone();
        next.subsystems[p].owner = to;
        Ok(next)
    }

    /// Labels of the purification ancillas held by `party`.
    pub fn ancillas_of(&self, party: Party) -> Vec<&str> {
        self.ancillas
            .iter()
            .filter(|a| a.owner == party)
            .map(|a| a.label.as_str())
            .collect()
    }

    pub(crate) fn with_state(&self, state: StateVector) -> Register {
        debug_assert_eq!(state.dims(), self.state.dims());
        Register {
            state,
            subsystems: self.subsystems.clone(),
            ancillas: self.ancillas.clone(),
        }
    }

    /// Reorders the register so that the listed subsystems come first, in the
    /// listed order, followed by the rest in their current order.
    pub fn reordered<S: AsRef<str>>(&self, front: &[S]) -> Result<Register> {
        let mut order = self.positions(front)?;
        order.extend(complement(self.subsystems.len(), &order));
        Ok(Register {
            state: self.state.permute(&order)?,
            subsystems: order.iter().map(|&p| self.subsystems[p].clone()).collect(),
            ancillas: self.ancillas.clone(),
        })
    }
}

/// Applies `u` to the factors at `positions` (in that order) of a state.
pub(crate) fn apply_at(state: &StateVector, positions: &[usize], u: &ComplexMatrix) -> StateVector {
    let dims = state.dims();
    let tgt = offsets(dims, positions);
    let rest = offsets(dims, &complement(dims.len(), positions));
    debug_assert_eq!(tgt.len(), u.rows());
    let src = state.amplitudes();
    let mut out = vec![ZERO; src.len()];
    let mut local = vec![ZERO; tgt.len()];
    for r in &rest {
        for (k, t) in tgt.iter().enumerate() {
            local[k] = src[r + t];
        }
        let mapped = u.mul_vec(&local);
        for (k, t) in tgt.iter().enumerate() {
            out[r + t] = mapped[k];
        }
    }
    state.map_amplitudes(out)
}

/// Embeds an operator acting on `positions` of a space with factor
/// dimensions `dims` into the full space (identity elsewhere).
pub fn embed_operator(u: &ComplexMatrix, dims: &[usize], positions: &[usize]) -> Result<ComplexMatrix> {
    let tgt_dim: usize = positions.iter().map(|&p| dims[p]).product();
    if u.rows() != tgt_dim || !u.is_square() {
        return Err(Error::shape(format!(
            "{}x{} operator cannot act on a {tgt_dim}-dimensional target",
            u.rows(),
            u.cols()
        )));
    }
    let total: usize = dims.iter().product();
    let tgt = offsets(dims, positions);
    let rest = offsets(dims, &complement(dims.len(), positions));
    let mut m = ComplexMatrix::zeros(total, total);
    for r in &rest {
        for (a, ta) in tgt.iter().enumerate() {
            for (b, tb) in tgt.iter().enumerate() {
                let v: C64 = u.get(a, b);
                if v != ZERO {
                    m.set(r + ta, r + tb, v);
                }
            }
        }
    }
    Ok(m)
}
