use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::ast::*;
use crate::engine::{
    apply_unitary, measure_projective, purify_choice, purify_conditional, purify_measurement, sample_index, Party,
    Register,
};
use crate::error::{Error, Result};
use crate::json::num;
use crate::linalg::ZERO;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecConfig {
    pub seed: u64,
    pub commit: u8,
    pub reveal: u8,
}

impl ExecConfig {
    pub fn honest(seed: u64, bit: u8) -> Self {
        Self {
            seed,
            commit: bit,
            reveal: bit,
        }
    }
}

/// Mode name derived from which parties are purified.
pub fn mode_name(script: &ProtocolScript) -> &'static str {
    match (script.purified.contains(&Party::Alice), script.purified.contains(&Party::Bob)) {
        (false, false) => "honest",
        (true, false) => "cheat:alice",
        (false, true) => "cheat:bob",
        (true, true) => "cheat:both",
    }
}

/// Per-party seeds derived from the master seed.
pub fn party_seeds(seed: u64) -> (u64, u64) {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (master.next_u64(), master.next_u64())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub step: usize,
    pub line: usize,
    pub party: Party,
    pub action: String,
    pub outcome: Option<String>,
    pub probability: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundLog {
    pub index: usize,
    pub events: Vec<Event>,
    /// Record values known so far: written directly by honest steps, or read
    /// out of ancillas during the classical phase.
    pub records: BTreeMap<String, String>,
    pub register: Register,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MessageValue {
    Set(Vec<usize>),
    Map(BTreeMap<usize, String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalEvent {
    pub step: usize,
    pub line: usize,
    pub party: Party,
    pub action: String,
    pub result: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub seed: u64,
    pub alice_seed: u64,
    pub bob_seed: u64,
    pub mode: String,
    pub commit: u8,
    pub reveal: u8,
    pub rounds: Vec<RoundLog>,
    pub messages: BTreeMap<String, MessageValue>,
    pub classical: Vec<ClassicalEvent>,
    /// `None` when no verification step ran.
    pub verdict: Option<bool>,
    pub failures: Vec<String>,
}

/// Runs every round of `script` and then its classical phase.
pub fn execute(script: &ProtocolScript, config: ExecConfig) -> Result<Transcript> {
    if config.commit > 1 || config.reveal > 1 {
        return Err(Error::domain("commit and reveal bits must be 0 or 1"));
    }
    let (alice_seed, bob_seed) = party_seeds(config.seed);
    let mut ex = Executor {
        script,
        config,
        alice: ChaCha8Rng::seed_from_u64(alice_seed),
        bob: ChaCha8Rng::seed_from_u64(bob_seed),
        rounds: Vec::with_capacity(script.rounds),
        messages: BTreeMap::new(),
        classical: Vec::new(),
    };
    for r in 0..script.rounds {
        let round = ex.run_round(r)?;
        ex.rounds.push(round);
    }
    let (verdict, failures) = ex.run_classical()?;
    Ok(Transcript {
        seed: config.seed,
        alice_seed,
        bob_seed,
        mode: mode_name(script).to_string(),
        commit: config.commit,
        reveal: config.reveal,
        rounds: ex.rounds,
        messages: ex.messages,
        classical: ex.classical,
        verdict,
        failures,
    })
}

struct Executor<'a> {
    script: &'a ProtocolScript,
    config: ExecConfig,
    alice: ChaCha8Rng,
    bob: ChaCha8Rng,
    rounds: Vec<RoundLog>,
    messages: BTreeMap<String, MessageValue>,
    classical: Vec<ClassicalEvent>,
}

fn exec_err(step: usize, e: Error) -> Error {
    match e {
        Error::Execution { message, .. } => Error::Execution { step, message },
        other => Error::Execution {
            step,
            message: other.to_string(),
        },
    }
}

/// Level of each listed position for every amplitude index.
pub(crate) fn levels_for(dims: &[usize], positions: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    let mut strides = vec![1; dims.len()];
    for p in (0..dims.len().saturating_sub(1)).rev() {
        strides[p] = strides[p + 1] * dims[p + 1];
    }
    (0..total)
        .map(|i| positions.iter().map(|&p| (i / strides[p]) % dims[p]).collect())
        .collect()
}

/// Measures the computational basis of `ancillas` coarse-grained into classes
/// and collapses the register. Returns the class index.
pub(crate) fn measure_classes(
    reg: &Register,
    ancillas: &[String],
    nclasses: usize,
    class_of: impl Fn(&[usize]) -> usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Register, usize, f64)> {
    let positions = reg.positions(ancillas)?;
    let levels = levels_for(reg.dims(), &positions);
    let amps = reg.state().amplitudes();
    let classes: Vec<usize> = levels.iter().map(|l| class_of(l)).collect();
    let mut probs = vec![0.0; nclasses];
    for (a, &c) in amps.iter().zip(&classes) {
        probs[c] += a.norm_sqr();
    }
    let k = sample_index(&probs, rng);
    let norm = probs[k].sqrt();
    let collapsed: Vec<_> = amps
        .iter()
        .zip(&classes)
        .map(|(a, &c)| if c == k { a / norm } else { ZERO })
        .collect();
    Ok((reg.with_state(reg.state().map_amplitudes(collapsed)), k, probs[k]))
}

fn check_owner(reg: &Register, party: Party, targets: &[String]) -> Result<()> {
    for t in targets {
        let owner = reg.owner_of(t)?;
        if owner != party {
            return Err(Error::Execution {
                step: 0,
                message: format!("{party} acts on `{t}` held by {owner}"),
            });
        }
    }
    Ok(())
}

/// Applies a step that involves no sampling.
pub(crate) fn apply_deterministic(script: &ProtocolScript, reg: &Register, step: &QuantumStep) -> Result<Register> {
    let party = step.party();
    match step {
        QuantumStep::Prepare { party, subsystems, state, .. } => reg.prepare(subsystems, *party, state),
        QuantumStep::Send { subsystem, from, to } => {
            check_owner(reg, *from, std::slice::from_ref(subsystem))?;
            reg.transfer(subsystem, *to)
        }
        QuantumStep::Apply { unitary, targets, .. } => {
            check_owner(reg, party, targets)?;
            apply_unitary(reg, &script.decls.unitaries[unitary], targets)
        }
        QuantumStep::PurifiedMeasure { observable, targets, pointer, .. } => {
            check_owner(reg, party, targets)?;
            purify_measurement(reg, &script.decls.observables[observable], targets, &pointer.label, party)
        }
        QuantumStep::PurifiedChoose { die, weights, targets, pointers, branches, .. } => {
            check_owner(reg, party, targets)?;
            let mut next = reg.clone();
            let mut all = targets.clone();
            for p in pointers {
                next = next.append_pointer(&p.label, p.dim, party, "", targets)?;
                all.push(p.label.clone());
            }
            purify_choice(&next, &all, branches, weights, die, party)
        }
        QuantumStep::PurifiedCase { control_ancillas, targets, pointers, case_table, .. } => {
            check_owner(reg, party, targets)?;
            let mut next = reg.clone();
            let mut all = targets.clone();
            for p in pointers {
                next = next.append_pointer(&p.label, p.dim, party, "", targets)?;
                all.push(p.label.clone());
            }
            purify_conditional(&next, control_ancillas, case_table, &all)
        }
        QuantumStep::Measure { .. } | QuantumStep::Choose { .. } | QuantumStep::Case { .. } => Err(Error::unsupported(
            "sampling step passed to the deterministic path",
        )),
    }
}

/// Runs the quantum phase of one round.
pub(crate) fn run_single_round(script: &ProtocolScript, config: ExecConfig) -> Result<RoundLog> {
    let (alice_seed, bob_seed) = party_seeds(config.seed);
    let mut ex = Executor {
        script,
        config,
        alice: ChaCha8Rng::seed_from_u64(alice_seed),
        bob: ChaCha8Rng::seed_from_u64(bob_seed),
        rounds: Vec::new(),
        messages: BTreeMap::new(),
        classical: Vec::new(),
    };
    ex.run_round(0)
}

impl Executor<'_> {
    fn rng(&mut self, party: Party) -> &mut ChaCha8Rng {
        match party {
            Party::Bob => &mut self.bob,
            _ => &mut self.alice,
        }
    }

    fn run_round(&mut self, index: usize) -> Result<RoundLog> {
        let script = self.script;
        let mut reg = Register::new();
        let mut records = BTreeMap::new();
        let mut events = Vec::new();
        for (step, qs) in script.quantum.iter().enumerate() {
            if !qs.guard.admits(self.config.commit, self.config.reveal) {
                continue;
            }
            let party = qs.step.party();
            let mut event = Event {
                step,
                line: qs.pos.line,
                party,
                action: qs.to_string(),
                outcome: None,
                probability: None,
            };
            reg = match &qs.step {
                QuantumStep::Measure { observable, targets, record, .. } => {
                    let (next, rec) = self.measure(&reg, party, observable, targets, step)?;
                    records.insert(record.clone(), rec.0.clone());
                    event.outcome = Some(rec.0);
                    event.probability = Some(rec.1);
                    next
                }
                QuantumStep::Choose { record, weights, arms, .. } => {
                    let k = sample_index(weights, self.rng(party));
                    records.insert(record.clone(), arms[k].key[0].clone());
                    event.outcome = Some(arms[k].key[0].clone());
                    event.probability = Some(weights[k]);
                    self.arm(&reg, party, &arms[k].op, step, &mut records)?
                }
                QuantumStep::Case { controls, arms, .. } => {
                    let values: Option<Vec<&String>> = controls.iter().map(|c| records.get(c)).collect();
                    let arm = values.and_then(|vals| {
                        arms.iter()
                            .find(|a| a.key.iter().zip(&vals).all(|(k, v)| k == "_" || k == *v))
                    });
                    match arm {
                        Some(a) => {
                            event.outcome = Some(a.key.join(","));
                            let op = a.op.clone();
                            self.arm(&reg, party, &op, step, &mut records)?
                        }
                        None => reg,
                    }
                }
                other => apply_deterministic(script, &reg, other).map_err(|e| exec_err(step, e))?,
            };
            events.push(event);
        }
        Ok(RoundLog {
            index,
            events,
            records,
            register: reg,
        })
    }

    fn measure(
        &mut self,
        reg: &Register,
        party: Party,
        observable: &str,
        targets: &[String],
        step: usize,
    ) -> Result<(Register, (String, f64))> {
        check_owner(reg, party, targets).map_err(|e| exec_err(step, e))?;
        let obs = &self.script.decls.observables[observable];
        let (next, rec) = measure_projective(reg, obs, targets, self.rng(party)).map_err(|e| exec_err(step, e))?;
        Ok((next, (rec.outcome, rec.probability)))
    }

    fn arm(
        &mut self,
        reg: &Register,
        party: Party,
        op: &ArmOp,
        step: usize,
        records: &mut BTreeMap<String, String>,
    ) -> Result<Register> {
        match op {
            ArmOp::Skip => Ok(reg.clone()),
            ArmOp::Apply { unitary, targets } => {
                check_owner(reg, party, targets).map_err(|e| exec_err(step, e))?;
                apply_unitary(reg, &self.script.decls.unitaries[unitary], targets).map_err(|e| exec_err(step, e))
            }
            ArmOp::Measure { observable, targets, record } => {
                let (next, (outcome, _)) = self.measure(reg, party, observable, targets, step)?;
                records.insert(record.clone(), outcome);
                Ok(next)
            }
        }
    }

    /// Full value of a record in a round, reading ancillas if needed.
    fn read_record(&mut self, round: usize, record: &str) -> Result<Option<String>> {
        if let Some(v) = self.rounds[round].records.get(record) {
            return Ok(Some(v.clone()));
        }
        let info = &self.script.records[record];
        let RecordSource::Ancilla { ancillas, resolve, .. } = &info.source else {
            return Ok(None);
        };
        let reg = &self.rounds[round].register;
        if ancillas.iter().any(|a| reg.position(a).is_err()) {
            return Ok(None);
        }
        let mut values: Vec<Option<String>> = Vec::new();
        for v in resolve {
            if !values.contains(v) {
                values.push(v.clone());
            }
        }
        let source = info.source.clone();
        let ancillas = ancillas.clone();
        let party = info.party;
        let reg = reg.clone();
        let class_of = |l: &[usize]| {
            let v = super::compiler::resolve_at(&source, &ancillas, l);
            values.iter().position(|x| *x == v).expect("resolved value listed")
        };
        let (next, k, _) = measure_classes(&reg, &ancillas, values.len(), class_of, self.rng(party))?;
        let value = values[k].clone();
        let log = &mut self.rounds[round];
        log.register = next;
        if let Some(v) = &value {
            log.records.insert(record.to_string(), v.clone());
        }
        Ok(value)
    }

    /// Whether a condition holds in a round; for ancilla records only the
    /// predicate is measured.
    fn test_cond(&mut self, round: usize, cond: &Cond) -> Result<bool> {
        let record = cond.record();
        if let Some(v) = self.rounds[round].records.get(record) {
            return Ok(cond.holds(Some(v)));
        }
        let info = &self.script.records[record];
        let RecordSource::Ancilla { ancillas, .. } = &info.source else {
            return Ok(false);
        };
        let reg = self.rounds[round].register.clone();
        if ancillas.iter().any(|a| reg.position(a).is_err()) {
            return Ok(false);
        }
        let source = info.source.clone();
        let ancillas = ancillas.clone();
        let class_of = |l: &[usize]| {
            let v = super::compiler::resolve_at(&source, &ancillas, l);
            if cond.holds(v.as_deref()) {
                0
            } else {
                1
            }
        };
        let (next, k, _) = measure_classes(&reg, &ancillas, 2, class_of, self.rng(info.party))?;
        self.rounds[round].register = next;
        Ok(k == 0)
    }

    fn eval_set(&mut self, set: &SetExpr, step: usize) -> Result<Vec<usize>> {
        Ok(match set {
            SetExpr::Rounds => (0..self.rounds.len()).collect(),
            SetExpr::Message(m) => match self.messages.get(m) {
                Some(MessageValue::Set(s)) => s.clone(),
                Some(MessageValue::Map(_)) => {
                    return Err(Error::Execution {
                        step,
                        message: format!("message `{m}` is not a set"),
                    })
                }
                None => {
                    return Err(Error::Execution {
                        step,
                        message: format!("message `{m}` was never announced in this run"),
                    })
                }
            },
            SetExpr::Where(inner, cond) => {
                let base = self.eval_set(inner, step)?;
                let mut out = Vec::new();
                for r in base {
                    if self.test_cond(r, cond)? {
                        out.push(r);
                    }
                }
                out
            }
            SetExpr::Minus(a, b) => {
                let a = self.eval_set(a, step)?;
                let b = self.eval_set(b, step)?;
                a.into_iter().filter(|r| !b.contains(r)).collect()
            }
        })
    }

    fn run_classical(&mut self) -> Result<(Option<bool>, Vec<String>)> {
        let script = self.script;
        let mut verdict = None;
        let mut failures = Vec::new();
        for (i, cs) in script.classical.iter().enumerate() {
            let step = script.quantum.len() + i;
            if !cs.guard.admits(self.config.commit, self.config.reveal) {
                continue;
            }
            let (party, result) = match &cs.step {
                ClassicalStep::Announce { party, name, payload } => {
                    let value = match payload {
                        Payload::Set(s) => MessageValue::Set(self.eval_set(s, step)?),
                        Payload::Lookup { set, table, record } => {
                            let rounds = self.eval_set(set, step)?;
                            let table = &script.decls.tables[table];
                            let mut choices: Vec<&String> = table.values().collect();
                            choices.sort();
                            choices.dedup();
                            let mut map = BTreeMap::new();
                            for r in rounds {
                                let value = self.read_record(r, record)?;
                                let entry = match value.as_ref().and_then(|v| table.get(v)) {
                                    Some(v) => v.clone(),
                                    None => {
                                        let w = vec![1.0; choices.len()];
                                        choices[sample_index(&w, self.rng(*party))].clone()
                                    }
                                };
                                map.insert(r, entry);
                            }
                            MessageValue::Map(map)
                        }
                    };
                    let text = describe_message(&value);
                    self.messages.insert(name.clone(), value);
                    (*party, text)
                }
                ClassicalStep::Reveal { party } => (*party, format!("reveals b = {}", self.config.reveal)),
                ClassicalStep::Verify { party, message, record, over } => {
                    let rounds = self.eval_set(over, step)?;
                    let Some(MessageValue::Map(map)) = self.messages.get(message).cloned() else {
                        return Err(Error::Execution {
                            step,
                            message: format!("message `{message}` was never announced in this run"),
                        });
                    };
                    let mut bad = Vec::new();
                    for r in rounds {
                        let actual = self.read_record(r, record)?;
                        let claimed = map.get(&r);
                        if claimed.is_none() || claimed != actual.as_ref() {
                            bad.push(r);
                            failures.push(format!(
                                "round {r}: {message} = {} but {record} = {}",
                                claimed.map_or("-", String::as_str),
                                actual.as_deref().unwrap_or("-")
                            ));
                        }
                    }
                    let ok = bad.is_empty();
                    verdict = Some(verdict.unwrap_or(true) && ok);
                    (*party, if ok { "pass".into() } else { format!("fail in rounds {bad:?}") })
                }
            };
            self.classical.push(ClassicalEvent {
                step,
                line: cs.pos.line,
                party,
                action: cs.to_string(),
                result,
            });
        }
        Ok((verdict, failures))
    }
}

fn describe_message(v: &MessageValue) -> String {
    match v {
        MessageValue::Set(s) => format!("{s:?}"),
        MessageValue::Map(m) => {
            let parts: Vec<String> = m.iter().map(|(r, v)| format!("{r}: {v}")).collect();
            format!("{{{}}}", parts.join(", "))
        }
    }
}

impl MessageValue {
    pub fn to_json(&self) -> Value {
        match self {
            MessageValue::Set(s) => json!(s),
            MessageValue::Map(m) => Value::Object(m.iter().map(|(r, v)| (r.to_string(), json!(v))).collect()),
        }
    }
}

impl Transcript {
    /// Whether Bob accepted; `None` when the script has no verification.
    pub fn accepted(&self) -> Option<bool> {
        self.verdict
    }

    pub fn to_json(&self) -> Value {
        let rounds: Vec<Value> = self
            .rounds
            .iter()
            .map(|r| {
                json!({
                    "index": r.index,
                    "events": r.events.iter().map(|e| json!({
                        "step": e.step,
                        "line": e.line,
                        "party": e.party.tag(),
                        "action": e.action,
                        "outcome": e.outcome,
                        "probability": e.probability.map(num),
                    })).collect::<Vec<_>>(),
                    "records": r.records,
                    "subsystems": r.register.subsystems().iter().map(|s| json!({
                        "label": s.label,
                        "dim": s.dim,
                        "owner": s.owner.tag(),
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "seed": self.seed,
            "party_seeds": {"A": self.alice_seed, "B": self.bob_seed},
            "mode": self.mode,
            "commit": self.commit,
            "reveal": self.reveal,
            "rounds": rounds,
            "messages": self.messages.iter().map(|(k, v)| (k.clone(), v.to_json())).collect::<serde_json::Map<_, _>>(),
            "classical": self.classical.iter().map(|e| json!({
                "step": e.step,
                "line": e.line,
                "party": e.party.tag(),
                "action": e.action,
                "result": e.result,
            })).collect::<Vec<_>>(),
            "verdict": self.verdict,
            "failures": self.failures,
        })
    }
}
