use std::collections::BTreeMap;

use super::ast::*;
use crate::engine::{basis_strings, embed_operator, measurement_unitary, Party};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

pub fn pointer_label(record: &str) -> String {
    format!("ptr:{record}")
}

pub fn die_label(record: &str) -> String {
    format!("die:{record}")
}

/// Rewrites every measurement, random choice and outcome-conditioned step of
/// `party` so that it stays at the quantum level. Records of `party` become
/// functions of the computational-basis levels of its ancillas.
pub fn purify(script: &ProtocolScript, party: Party) -> Result<ProtocolScript> {
    if party == Party::Channel {
        return Err(Error::domain("only Alice or Bob can be purified"));
    }
    if script.purified.contains(&party) {
        return Ok(script.clone());
    }
    let mut out = script.clone();
    out.quantum.clear();
    let mut c = Compiler {
        script,
        records: script.records.clone(),
        guards: BTreeMap::new(),
        notes: Vec::new(),
    };
    for qs in &script.quantum {
        let step = if qs.step.party() == party {
            c.step(qs)?
        } else {
            qs.step.clone()
        };
        out.quantum.push(QStep {
            pos: qs.pos,
            guard: qs.guard,
            step,
        });
    }
    for cs in &script.classical {
        let read: Vec<&str> = match &cs.step {
            ClassicalStep::Announce { party: p, payload, .. } if *p == party => {
                let mut r = Vec::new();
                match payload {
                    Payload::Set(s) => set_records(s, &mut r),
                    Payload::Lookup { set, record, .. } => {
                        set_records(set, &mut r);
                        r.push(record);
                    }
                }
                r
            }
            ClassicalStep::Verify { party: p, record, over, .. } if *p == party => {
                let mut r = vec![record.as_str()];
                set_records(over, &mut r);
                r
            }
            _ => Vec::new(),
        };
        for rec in read {
            if let RecordSource::Ancilla { ancillas, .. } = &c.records[rec].source {
                c.notes.push(format!(
                    "line {}: record `{rec}` is read out of {} at announcement time",
                    cs.pos.line,
                    ancillas.join(",")
                ));
            }
        }
    }
    out.records = c.records;
    out.purified.insert(party);
    out.notes.extend(c.notes);
    Ok(out)
}

/// Purifies both parties.
pub fn purify_all(script: &ProtocolScript) -> Result<ProtocolScript> {
    purify(&purify(script, Party::Alice)?, Party::Bob)
}

fn set_records<'a>(s: &'a SetExpr, out: &mut Vec<&'a str>) {
    match s {
        SetExpr::Rounds | SetExpr::Message(_) => {}
        SetExpr::Where(inner, c) => {
            set_records(inner, out);
            out.push(c.record());
        }
        SetExpr::Minus(a, b) => {
            set_records(a, out);
            set_records(b, out);
        }
    }
}

struct Compiler<'a> {
    script: &'a ProtocolScript,
    records: BTreeMap<String, RecordInfo>,
    guards: BTreeMap<String, Guard>,
    notes: Vec<String>,
}

/// Local operator space of a purified arm set: targets first, then pointers.
struct Space {
    labels: Vec<String>,
    dims: Vec<usize>,
}

impl Space {
    fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    fn positions(&self, labels: &[String]) -> Vec<usize> {
        labels
            .iter()
            .map(|l| self.labels.iter().position(|x| x == l).expect("label in local space"))
            .collect()
    }
}

impl Compiler<'_> {
    fn observable(&self, name: &str) -> Result<&crate::engine::ObservableSpec> {
        self.script
            .observable(name)
            .ok_or_else(|| Error::lookup(format!("unknown observable `{name}`")))
    }

    fn unitary(&self, name: &str) -> Result<&ComplexMatrix> {
        self.script
            .unitary(name)
            .ok_or_else(|| Error::lookup(format!("unknown unitary `{name}`")))
    }

    fn set_source(&mut self, record: &str, source: RecordSource, guard: Guard) {
        self.records.get_mut(record).expect("record declared").source = source;
        self.guards.insert(record.to_string(), guard);
    }

    fn step(&mut self, qs: &QStep) -> Result<QuantumStep> {
        let line = qs.pos.line;
        Ok(match &qs.step {
            QuantumStep::Measure { party, observable, targets, record } => {
                let obs = self.observable(observable)?;
                let outcomes: Vec<String> = obs.outcomes().iter().map(|s| s.to_string()).collect();
                let pointer = PointerSpec {
                    label: pointer_label(record),
                    dim: outcomes.len(),
                    record: record.clone(),
                };
                self.set_source(
                    record,
                    RecordSource::Ancilla {
                        ancillas: vec![pointer.label.clone()],
                        dims: vec![pointer.dim],
                        resolve: outcomes.into_iter().map(Some).collect(),
                    },
                    qs.guard,
                );
                self.notes.push(format!(
                    "line {line}: measure -> {record} kept in pointer {}[{}]",
                    pointer.label, pointer.dim
                ));
                QuantumStep::PurifiedMeasure {
                    party: *party,
                    observable: observable.clone(),
                    targets: targets.clone(),
                    record: record.clone(),
                    pointer,
                }
            }
            QuantumStep::Choose { party, record, weights, arms } => {
                let (space, pointers) = self.arm_space(arms)?;
                let branches = arms
                    .iter()
                    .map(|a| self.arm_unitary(&a.op, &space, &pointers))
                    .collect::<Result<Vec<_>>>()?;
                let die = die_label(record);
                let n = arms.len();
                self.set_source(
                    record,
                    RecordSource::Ancilla {
                        ancillas: vec![die.clone()],
                        dims: vec![n],
                        resolve: arms.iter().map(|a| Some(a.key[0].clone())).collect(),
                    },
                    qs.guard,
                );
                for p in &pointers {
                    let mut resolve = Vec::with_capacity(n * p.dim);
                    for arm in arms {
                        let outcomes = self.arm_outcomes(&arm.op, &p.record)?;
                        for l in 0..p.dim {
                            resolve.push(outcomes.as_ref().and_then(|o| o.get(l).cloned()));
                        }
                    }
                    self.set_source(
                        &p.record,
                        RecordSource::Ancilla {
                            ancillas: vec![die.clone(), p.label.clone()],
                            dims: vec![n, p.dim],
                            resolve,
                        },
                        qs.guard,
                    );
                }
                self.notes.push(format!(
                    "line {line}: choose -> {record} kept in die {die}[{n}] with {} pointer(s)",
                    pointers.len()
                ));
                let targets = space.labels[..space.labels.len() - pointers.len()].to_vec();
                QuantumStep::PurifiedChoose {
                    party: *party,
                    record: record.clone(),
                    die,
                    weights: weights.clone(),
                    targets,
                    pointers,
                    branches,
                }
            }
            QuantumStep::Case { party, controls, arms } => {
                let mut control_ancillas: Vec<String> = Vec::new();
                let mut control_dims: Vec<usize> = Vec::new();
                for rec in controls {
                    let info = &self.records[rec];
                    let RecordSource::Ancilla { ancillas, dims, .. } = &info.source else {
                        return Err(Error::domain(format!("case control `{rec}` is not held in an ancilla")));
                    };
                    let g = self.guards.get(rec).copied().unwrap_or(Guard::Always);
                    if g != Guard::Always && g != qs.guard {
                        return Err(Error::domain(format!(
                            "line {line}: case control `{rec}` is defined under a different guard"
                        )));
                    }
                    for (a, d) in ancillas.iter().zip(dims) {
                        if !control_ancillas.contains(a) {
                            control_ancillas.push(a.clone());
                            control_dims.push(*d);
                        }
                    }
                }
                let (space, pointers) = self.arm_space(arms)?;
                let strings = basis_strings(&control_dims);
                let mut case_table = BTreeMap::new();
                let mut chosen: Vec<Option<usize>> = Vec::with_capacity(strings.len());
                for s in &strings {
                    let values: Vec<Option<String>> = controls
                        .iter()
                        .map(|rec| resolve_at(&self.records[rec].source, &control_ancillas, s))
                        .collect();
                    let arm = if values.iter().any(Option::is_none) {
                        None
                    } else {
                        arms.iter().position(|a| {
                            a.key
                                .iter()
                                .zip(&values)
                                .all(|(k, v)| k == "_" || Some(k) == v.as_ref())
                        })
                    };
                    let u = match arm {
                        Some(j) => self.arm_unitary(&arms[j].op, &space, &pointers)?,
                        None => ComplexMatrix::identity(space.dim()),
                    };
                    chosen.push(arm);
                    case_table.insert(s.clone(), u);
                }
                for p in &pointers {
                    let mut resolve = Vec::with_capacity(strings.len() * p.dim);
                    for arm in &chosen {
                        let outcomes = match arm {
                            Some(j) => self.arm_outcomes(&arms[*j].op, &p.record)?,
                            None => None,
                        };
                        for l in 0..p.dim {
                            resolve.push(outcomes.as_ref().and_then(|o| o.get(l).cloned()));
                        }
                    }
                    let mut ancillas = control_ancillas.clone();
                    ancillas.push(p.label.clone());
                    let mut dims = control_dims.clone();
                    dims.push(p.dim);
                    self.set_source(&p.record, RecordSource::Ancilla { ancillas, dims, resolve }, qs.guard);
                }
                self.notes.push(format!(
                    "line {line}: case on {} compiled to a unitary controlled by {}",
                    controls.join(","),
                    control_ancillas.join(",")
                ));
                let targets = space.labels[..space.labels.len() - pointers.len()].to_vec();
                QuantumStep::PurifiedCase {
                    party: *party,
                    controls: controls.clone(),
                    control_ancillas,
                    targets,
                    pointers,
                    case_table,
                }
            }
            other => other.clone(),
        })
    }

    /// Outcome labels of `op` if it writes `record`.
    fn arm_outcomes(&self, op: &ArmOp, record: &str) -> Result<Option<Vec<String>>> {
        match op {
            ArmOp::Measure { observable, record: r, .. } if r == record => {
                let obs = self.observable(observable)?;
                Ok(Some(obs.outcomes().iter().map(|s| s.to_string()).collect()))
            }
            _ => Ok(None),
        }
    }

    /// Union of arm targets (first appearance order) followed by one pointer
    /// per written record, sized for the largest outcome set.
    fn arm_space(&self, arms: &[Arm]) -> Result<(Space, Vec<PointerSpec>)> {
        let mut labels: Vec<String> = Vec::new();
        let mut dims = Vec::new();
        let mut pointers: Vec<PointerSpec> = Vec::new();
        for arm in arms {
            for t in arm.op.targets() {
                if !labels.contains(t) {
                    labels.push(t.clone());
                    dims.push(self.script.subsystems[t]);
                }
            }
            if let ArmOp::Measure { observable, record, .. } = &arm.op {
                let n = self.observable(observable)?.outcome_count();
                match pointers.iter_mut().find(|p| &p.record == record) {
                    Some(p) => p.dim = p.dim.max(n),
                    None => pointers.push(PointerSpec {
                        label: pointer_label(record),
                        dim: n,
                        record: record.clone(),
                    }),
                }
            }
        }
        for p in &pointers {
            labels.push(p.label.clone());
            dims.push(p.dim);
        }
        Ok((Space { labels, dims }, pointers))
    }

    fn arm_unitary(&self, op: &ArmOp, space: &Space, pointers: &[PointerSpec]) -> Result<ComplexMatrix> {
        match op {
            ArmOp::Skip => Ok(ComplexMatrix::identity(space.dim())),
            ArmOp::Apply { unitary, targets } => {
                embed_operator(self.unitary(unitary)?, &space.dims, &space.positions(targets))
            }
            ArmOp::Measure { observable, targets, record } => {
                let p = pointers.iter().find(|p| &p.record == record).expect("pointer for record");
                let u = measurement_unitary(self.observable(observable)?, p.dim)?;
                let mut labels = targets.clone();
                labels.push(p.label.clone());
                embed_operator(&u, &space.dims, &space.positions(&labels))
            }
        }
    }
}

/// Value of a record given the levels of `ancillas` (a superset of the
/// record's own ancillas).
pub(crate) fn resolve_at(source: &RecordSource, ancillas: &[String], levels: &[usize]) -> Option<String> {
    let RecordSource::Ancilla { ancillas: own, dims, resolve } = source else {
        return None;
    };
    let mut index = 0;
    for (a, d) in own.iter().zip(dims) {
        let k = ancillas.iter().position(|x| x == a)?;
        index = index * d + levels[k];
    }
    resolve[index].clone()
}
