use std::collections::BTreeMap;

use super::ast::*;
use super::compiler::{purify, purify_all, resolve_at};
use super::executor::{levels_for, run_single_round, ExecConfig};
use crate::engine::{apply_at, measured_average, outcome_distribution, Party, Register};
use crate::error::{Error, Result};
use crate::linalg::{trace_distance, DensityOperator, StateVector, ZERO};

/// Probabilities below this are treated as impossible branches.
const BRANCH_EPS: f64 = 1e-15;

/// Joint outcome of one party's records: values in record-name order
/// (`None` for records the round left unset).
pub type Observation = Vec<Option<String>>;

/// Exact distribution of everything `observer` records during one round of
/// the quantum phase. Honest steps of the observer branch on every outcome;
/// records the observer keeps in ancillas are read out jointly at the end.
pub fn observation_distribution(script: &ProtocolScript, observer: Party, commit: u8) -> Result<BTreeMap<Observation, f64>> {
    let names: Vec<String> = script.records_of(observer).iter().map(|s| s.to_string()).collect();
    let mut branches = vec![Branch {
        reg: Register::new(),
        weight: 1.0,
        records: BTreeMap::new(),
    }];
    for qs in &script.quantum {
        if !qs.guard.admits(commit, commit) {
            continue;
        }
        let mut next = Vec::new();
        for b in branches {
            next.extend(step_branches(script, b, &qs.step)?);
        }
        branches = next;
    }
    let mut out: BTreeMap<Observation, f64> = BTreeMap::new();
    for b in branches {
        let ancilla_records: Vec<&String> = names
            .iter()
            .filter(|n| !b.records.contains_key(*n) && matches!(script.records[*n].source, RecordSource::Ancilla { .. }))
            .collect();
        let mut ancillas: Vec<String> = Vec::new();
        for n in &ancilla_records {
            if let RecordSource::Ancilla { ancillas: own, .. } = &script.records[*n].source {
                for a in own {
                    if b.reg.position(a).is_ok() && !ancillas.contains(a) {
                        ancillas.push(a.clone());
                    }
                }
            }
        }
        let positions = b.reg.positions(&ancillas)?;
        let levels = levels_for(b.reg.dims(), &positions);
        for (amp, l) in b.reg.state().amplitudes().iter().zip(&levels) {
            let p = amp.norm_sqr() * b.weight;
            if p == 0.0 {
                continue;
            }
            let key: Observation = names
                .iter()
                .map(|n| match b.records.get(n) {
                    Some(v) => Some(v.clone()),
                    None => resolve_at(&script.records[n].source, &ancillas, l),
                })
                .collect();
            *out.entry(key).or_insert(0.0) += p;
        }
    }
    Ok(out)
}

/// Total variation distance between two observation distributions.
pub fn distribution_distance(p: &BTreeMap<Observation, f64>, q: &BTreeMap<Observation, f64>) -> f64 {
    let mut keys: Vec<&Observation> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Distance between what `observer` sees when the counterparty runs
/// honestly and when the counterparty is purified, maximized over the
/// committed bit.
pub fn undetectability_gap(script: &ProtocolScript, purified: Party) -> Result<f64> {
    let observer = purified.other();
    let cheat = purify(script, purified)?;
    let mut worst: f64 = 0.0;
    for b in 0..2 {
        let honest = observation_distribution(script, observer, b)?;
        let dishonest = observation_distribution(&cheat, observer, b)?;
        worst = worst.max(distribution_distance(&honest, &dishonest));
    }
    Ok(worst)
}

struct Branch {
    reg: Register,
    weight: f64,
    records: BTreeMap<String, String>,
}

fn step_branches(script: &ProtocolScript, b: Branch, step: &QuantumStep) -> Result<Vec<Branch>> {
    match step {
        QuantumStep::Measure { observable, targets, record, .. } => {
            measure_branches(script, b, observable, targets, record)
        }
        QuantumStep::Choose { record, weights, arms, .. } => {
            let mut out = Vec::new();
            for (arm, &w) in arms.iter().zip(weights) {
                if w <= 0.0 {
                    continue;
                }
                let mut records = b.records.clone();
                records.insert(record.clone(), arm.key[0].clone());
                let child = Branch {
                    reg: b.reg.clone(),
                    weight: b.weight * w,
                    records,
                };
                out.extend(arm_branches(script, child, &arm.op)?);
            }
            Ok(out)
        }
        QuantumStep::Case { controls, arms, .. } => {
            let values: Option<Vec<&String>> = controls.iter().map(|c| b.records.get(c)).collect();
            let arm = values.and_then(|vals| {
                arms.iter()
                    .find(|a| a.key.iter().zip(&vals).all(|(k, v)| k == "_" || k == *v))
            });
            match arm {
                Some(a) => arm_branches(script, b, &a.op),
                None => Ok(vec![b]),
            }
        }
        other => {
            let reg = super::executor::apply_deterministic(script, &b.reg, other)?;
            Ok(vec![Branch { reg, ..b }])
        }
    }
}

fn arm_branches(script: &ProtocolScript, b: Branch, op: &ArmOp) -> Result<Vec<Branch>> {
    match op {
        ArmOp::Skip => Ok(vec![b]),
        ArmOp::Apply { unitary, targets } => {
            let reg = crate::engine::apply_unitary(&b.reg, &script.decls.unitaries[unitary], targets)?;
            Ok(vec![Branch { reg, ..b }])
        }
        ArmOp::Measure { observable, targets, record } => measure_branches(script, b, observable, targets, record),
    }
}

fn measure_branches(script: &ProtocolScript, b: Branch, observable: &str, targets: &[String], record: &str) -> Result<Vec<Branch>> {
    let obs = &script.decls.observables[observable];
    let positions = b.reg.positions(targets)?;
    let mut out = Vec::new();
    for (label, p) in outcome_distribution(&b.reg, obs, targets)? {
        if p <= BRANCH_EPS {
            continue;
        }
        let proj = obs.projector(&label)?;
        let projected = apply_at(b.reg.state(), &positions, &proj);
        let norm = p.sqrt();
        let state = projected.map_amplitudes(projected.amplitudes().iter().map(|a| a / norm).collect());
        let mut records = b.records.clone();
        records.insert(record.to_string(), label);
        out.push(Branch {
            reg: b.reg.with_state(state),
            weight: b.weight * p,
            records,
        });
    }
    Ok(out)
}

/// Whether Bob keeps his records as quantum ancillas (cheating) or measures
/// them (honest) when his view of the commitment is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BobView {
    Honest,
    Cheating,
}

/// Per-round commitment states for both values of the committed bit.
#[derive(Clone, Debug)]
pub struct CommitmentStates {
    pub view: BobView,
    /// Post-selected joint states with Alice's subsystems first.
    states: [Register; 2],
    /// Probability that a round survives Alice's announced selection.
    pub selection_probability: [f64; 2],
    pub alice_labels: [Vec<String>; 2],
    pub bob_labels: [Vec<String>; 2],
    /// Bob's reduced operator on everything he holds.
    pub w_b: [DensityOperator; 2],
    /// Alice's reduced operator on everything she holds.
    pub w_a: [DensityOperator; 2],
}

impl CommitmentStates {
    /// Global pure state for bit `b`; only exposed for a cheating Bob, since
    /// an honest Bob's records are classical.
    pub fn psi(&self, b: usize) -> Option<&StateVector> {
        (self.view == BobView::Cheating).then(|| self.states[b].state())
    }

    pub fn register(&self, b: usize) -> &Register {
        &self.states[b]
    }

    /// Dimensions of Alice's and Bob's factors.
    pub fn split(&self, b: usize) -> (usize, usize) {
        let reg = &self.states[b];
        let da = reg.dim_of(&self.alice_labels[b]).unwrap_or(1);
        let db = reg.dim_of(&self.bob_labels[b]).unwrap_or(1);
        (da, db)
    }

    /// Trace distance between Bob's reduced operators.
    pub fn distance(&self) -> Result<f64> {
        trace_distance(&self.w_b[0], &self.w_b[1])
    }

    /// Bob's operator for bit `b` reduced to the listed subsystems, in order.
    pub fn reduced_to<S: AsRef<str>>(&self, b: usize, labels: &[S]) -> Result<DensityOperator> {
        let reg = self.states[b].reordered(labels)?;
        let rho = self.density(&reg)?;
        let keep: Vec<usize> = (0..labels.len()).collect();
        crate::linalg::partial_trace(&rho, reg.dims(), &keep)
    }

    fn density(&self, reg: &Register) -> Result<DensityOperator> {
        let rho = reg.state().projector();
        match self.view {
            BobView::Cheating => Ok(rho),
            BobView::Honest => {
                let positions = reg.positions(&reg.ancillas_of(Party::Bob))?;
                rho.dephase(reg.dims(), &positions)
            }
        }
    }
}

fn message_definition<'a>(script: &'a ProtocolScript, name: &str, commit: u8) -> Option<&'a SetExpr> {
    script.classical.iter().find_map(|cs| match (&cs.step, cs.guard) {
        (ClassicalStep::Announce { name: n, payload: Payload::Set(s), .. }, g)
            if n == name && !matches!(g, Guard::Revealed(_)) && g.admits(commit, commit) =>
        {
            Some(s)
        }
        _ => None,
    })
}

fn member(
    script: &ProtocolScript,
    set: &SetExpr,
    commit: u8,
    value: &dyn Fn(&str) -> Option<String>,
) -> Result<bool> {
    Ok(match set {
        SetExpr::Rounds => true,
        SetExpr::Message(m) => {
            let def = message_definition(script, m, commit)
                .ok_or_else(|| Error::unsupported(format!("set `{m}` is not announced before the reveal")))?;
            member(script, def, commit, value)?
        }
        SetExpr::Where(s, c) => member(script, s, commit, value)? && c.holds(value(c.record()).as_deref()),
        SetExpr::Minus(a, b) => member(script, a, commit, value)? && !member(script, b, commit, value)?,
    })
}

/// Alice's set announcements made before the reveal under commitment `b`.
fn alice_selections(script: &ProtocolScript, commit: u8) -> Vec<&SetExpr> {
    let mut out = Vec::new();
    for cs in &script.classical {
        if matches!(cs.step, ClassicalStep::Reveal { .. }) {
            break;
        }
        if let ClassicalStep::Announce { party: Party::Alice, payload: Payload::Set(s), .. } = &cs.step {
            if cs.guard.admits(commit, commit) {
                out.push(s);
            }
        }
    }
    out
}

/// Runs one round with both parties purified for each committed bit,
/// keeps only the branch where the round belongs to every set Alice
/// announced before the reveal, and returns the resulting states together
/// with Bob's and Alice's reduced operators.
pub fn commitment_states(script: &ProtocolScript, view: BobView) -> Result<CommitmentStates> {
    if !script.classical.iter().any(|c| matches!(c.step, ClassicalStep::Reveal { .. })) {
        return Err(Error::unsupported("commitment analysis needs a reveal step"));
    }
    let full = purify_all(script)?;
    let mut states = Vec::new();
    let mut probs = [0.0; 2];
    let mut alice_labels: [Vec<String>; 2] = Default::default();
    let mut bob_labels: [Vec<String>; 2] = Default::default();
    for b in 0..2u8 {
        let round = run_single_round(&full, ExecConfig::honest(0, b))?;
        let reg = round.register;
        let selections = alice_selections(&full, b);
        let labels: Vec<String> = reg.labels().iter().map(|s| s.to_string()).collect();
        let all_levels = levels_for(reg.dims(), &(0..labels.len()).collect::<Vec<_>>());
        let mut amps = reg.state().amplitudes().to_vec();
        for (amp, levels) in amps.iter_mut().zip(&all_levels) {
            let value = |rec: &str| resolve_at(&full.records[rec].source, &labels, levels);
            let mut keep = true;
            for s in &selections {
                if !member(&full, s, b, &value)? {
                    keep = false;
                    break;
                }
            }
            if !keep {
                *amp = ZERO;
            }
        }
        let p: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if p <= BRANCH_EPS {
            return Err(Error::domain(format!(
                "commitment {b}: Alice's announced selection has zero amplitude"
            )));
        }
        let norm = p.sqrt();
        let state = reg.state().map_amplitudes(amps.iter().map(|a| a / norm).collect());
        let reg = reg.with_state(state);
        let alice: Vec<String> = reg.owned_by(Party::Alice).iter().map(|&i| labels[i].clone()).collect();
        let bob: Vec<String> = reg.owned_by(Party::Bob).iter().map(|&i| labels[i].clone()).collect();
        let mut front = alice.clone();
        front.extend(bob.iter().cloned());
        let reg = reg.reordered(&front)?;
        probs[b as usize] = p;
        alice_labels[b as usize] = alice;
        bob_labels[b as usize] = bob;
        states.push(reg);
    }
    let states: [Register; 2] = [states[0].clone(), states[1].clone()];
    let mut cs = CommitmentStates {
        view,
        states,
        selection_probability: probs,
        alice_labels,
        bob_labels,
        w_b: [DensityOperator::maximally_mixed(1), DensityOperator::maximally_mixed(1)],
        w_a: [DensityOperator::maximally_mixed(1), DensityOperator::maximally_mixed(1)],
    };
    for b in 0..2 {
        cs.w_b[b] = if cs.bob_labels[b].is_empty() {
            DensityOperator::maximally_mixed(1)
        } else {
            cs.reduced_to(b, &cs.bob_labels[b].clone())?
        };
        cs.w_a[b] = if cs.alice_labels[b].is_empty() {
            DensityOperator::maximally_mixed(1)
        } else {
            cs.reduced_to(b, &cs.alice_labels[b].clone())?
        };
    }
    Ok(cs)
}

/// Result of comparing the observer's reduced operator with and without the
/// counterparty measuring its ancillas.
#[derive(Clone, Debug, PartialEq)]
pub struct NoSignallingReport {
    /// Party whose ancillas are measured.
    pub measuring: Party,
    /// Party whose reduced operator is compared.
    pub observer: Party,
    /// Trace distance per committed bit.
    pub distances: [f64; 2],
    pub threshold: f64,
    pub passed: bool,
}

impl NoSignallingReport {
    pub fn max_distance(&self) -> f64 {
        self.distances[0].max(self.distances[1])
    }
}

/// Audits that measuring `party`'s ancillas leaves the other party's reduced
/// operator unchanged. `drop` removes one measurement branch from the
/// average, which must make the audit fail (negative control).
pub fn audit_no_signalling(script: &ProtocolScript, party: Party, drop: Option<usize>) -> Result<NoSignallingReport> {
    const THRESHOLD: f64 = 1e-10;
    let observer = party.other();
    let full = purify_all(script)?;
    let mut distances = [0.0; 2];
    for b in 0..2u8 {
        let reg = run_single_round(&full, ExecConfig::honest(0, b))?.register;
        let keep: Vec<String> = reg.owned_by(observer).iter().map(|&i| reg.labels()[i].to_string()).collect();
        if keep.is_empty() {
            continue;
        }
        let direct = crate::engine::reduced_on(&reg, &keep)?;
        let measured: Vec<String> = reg.ancillas_of(party).iter().map(|s| s.to_string()).collect();
        let averaged = if measured.is_empty() {
            direct.matrix().clone()
        } else {
            measured_average(&reg, &keep, &measured, drop)?
        };
        let diff = direct.matrix() - &averaged;
        distances[b as usize] = 0.5 * crate::linalg::trace_norm(&diff)?;
    }
    let passed = distances.iter().all(|d| *d <= THRESHOLD);
    Ok(NoSignallingReport {
        measuring: party,
        observer,
        distances,
        threshold: THRESHOLD,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{parse, vaa_script};

    #[test]
    fn coin_distribution_is_exact() {
        let s = parse("prepare A q |+>\nsend q A B\nmeasure B sz q -> m").unwrap();
        let d = observation_distribution(&s, Party::Bob, 0).unwrap();
        assert_eq!(d.len(), 2);
        for p in d.values() {
            assert!((p - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn vaa_purification_is_undetectable() {
        let s = vaa_script(1).unwrap();
        assert!(undetectability_gap(&s, Party::Alice).unwrap() < 1e-10);
        assert!(undetectability_gap(&s, Party::Bob).unwrap() < 1e-10);
    }

    #[test]
    fn vaa_cheating_bob_distance() {
        let cs = commitment_states(&vaa_script(1).unwrap(), BobView::Cheating).unwrap();
        assert!((cs.distance().unwrap() - 2.0 / 3.0).abs() < 1e-10);
        let honest = commitment_states(&vaa_script(1).unwrap(), BobView::Honest).unwrap();
        assert!(honest.distance().unwrap() < 1e-10);
        assert!(honest.psi(0).is_none());
    }

    #[test]
    fn vaa_die_operators() {
        let cs = commitment_states(&vaa_script(1).unwrap(), BobView::Cheating).unwrap();
        let w0 = cs.reduced_to(0, &["die:k"]).unwrap();
        let w1 = cs.reduced_to(1, &["die:k"]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e0 = if i == j { 1.0 / 3.0 } else { 0.0 };
                assert!((w0.matrix().get(i, j) - crate::linalg::re(e0)).norm() < 1e-10, "{w0:?}");
                assert!((w1.matrix().get(i, j) - crate::linalg::re(1.0 / 3.0)).norm() < 1e-10, "{w1:?}");
            }
        }
    }

    #[test]
    fn vaa_no_signalling() {
        let s = vaa_script(1).unwrap();
        let r = audit_no_signalling(&s, Party::Bob, None).unwrap();
        assert!(r.passed, "{r:?}");
        let broken = audit_no_signalling(&s, Party::Bob, Some(0)).unwrap();
        assert!(!broken.passed);
    }
}
