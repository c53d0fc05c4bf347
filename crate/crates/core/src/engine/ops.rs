use std::collections::BTreeMap;

use rand::Rng;

use super::observable::{MeasurementRecord, ObservableSpec};
use super::register::{apply_at, AncillaKind, Party, Register};
use crate::error::{Error, Result};
use crate::linalg::{offsets, complement, ComplexMatrix, DensityOperator, StateVector, C64, ZERO};

/// Unitarity tolerance for operators handed to the engine.
pub const UNITARY_TOL: f64 = 1e-10;

/// Tolerance on purification weights summing to one.
pub const WEIGHT_TOL: f64 = 1e-12;

fn check_unitary(u: &ComplexMatrix, dim: usize, what: &str) -> Result<()> {
    if !u.is_square() || u.rows() != dim {
        return Err(Error::shape(format!(
            "{what} is {}x{} but the targets have dimension {dim}",
            u.rows(),
            u.cols()
        )));
    }
    if !u.is_unitary(UNITARY_TOL) {
        return Err(Error::domain(format!("{what} is not unitary within {UNITARY_TOL:e}")));
    }
    Ok(())
}

/// Applies `u` to `targets` (in the listed order), identity elsewhere.
pub fn apply_unitary<S: AsRef<str>>(reg: &Register, u: &ComplexMatrix, targets: &[S]) -> Result<Register> {
    let positions = reg.positions(targets)?;
    let dim: usize = positions.iter().map(|&p| reg.dims()[p]).product();
    check_unitary(u, dim, "operator")?;
    Ok(reg.with_state(apply_at(reg.state(), &positions, u)))
}

fn observable_positions<S: AsRef<str>>(reg: &Register, obs: &ObservableSpec, targets: &[S]) -> Result<Vec<usize>> {
    let positions = reg.positions(targets)?;
    let dim: usize = positions.iter().map(|&p| reg.dims()[p]).product();
    if dim != obs.dim() {
        return Err(Error::shape(format!(
            "observable `{}` has dimension {} but the targets have dimension {dim}",
            obs.label(),
            obs.dim()
        )));
    }
    Ok(positions)
}

/// Born-rule probabilities of each distinct outcome of `obs` on `targets`.
pub fn outcome_distribution<S: AsRef<str>>(
    reg: &Register,
    obs: &ObservableSpec,
    targets: &[S],
) -> Result<Vec<(String, f64)>> {
    let positions = observable_positions(reg, obs, targets)?;
    Ok(obs
        .projectors()
        .into_iter()
        .map(|(label, p)| {
            let projected = apply_at(reg.state(), &positions, &p);
            (label, projected.norm_sqr())
        })
        .collect())
}

/// Samples an outcome of `obs` on `targets` and collapses the register.
pub fn measure_projective<S: AsRef<str>, R: Rng + ?Sized>(
    reg: &Register,
    obs: &ObservableSpec,
    targets: &[S],
    rng: &mut R,
) -> Result<(Register, MeasurementRecord)> {
    let positions = observable_positions(reg, obs, targets)?;
    let branches: Vec<(String, StateVector)> = obs
        .projectors()
        .into_iter()
        .map(|(label, p)| (label, apply_at(reg.state(), &positions, &p)))
        .collect();
    let probs: Vec<f64> = branches.iter().map(|(_, s)| s.norm_sqr()).collect();
    let k = sample_index(&probs, rng);
    let (outcome, branch) = &branches[k];
    let norm = probs[k].sqrt();
    let collapsed = branch.map_amplitudes(branch.amplitudes().iter().map(|a| a / norm).collect());
    let record = MeasurementRecord {
        subsystem: targets.iter().map(|t| t.as_ref()).collect::<Vec<_>>().join(","),
        observable: obs.label().to_string(),
        outcome: outcome.clone(),
        probability: probs[k].clamp(0.0, 1.0),
    };
    Ok((reg.with_state(collapsed), record))
}

/// Draws an index with the given (nonnegative, summing to ~1) weights.
/// Zero-weight entries are never returned.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = k;
        acc += w;
        if u < acc {
            return k;
        }
    }
    last
}

/// Controlled-shift unitary `Σ_k P_k ⊗ S^k` on target ⊗ pointer, where `S`
/// cycles the pointer basis. With the pointer in `|0⟩`, outcome `k` leaves
/// it in `|k⟩`.
pub fn measurement_unitary(obs: &ObservableSpec, pointer_dim: usize) -> Result<ComplexMatrix> {
    let m = obs.outcome_count();
    if pointer_dim < m {
        return Err(Error::shape(format!(
            "pointer of dimension {pointer_dim} cannot record {m} outcomes"
        )));
    }
    let n = obs.dim();
    let mut u = ComplexMatrix::zeros(n * pointer_dim, n * pointer_dim);
    for k in 0..m {
        let p = obs.projector_at(k);
        for a in 0..n {
            for b in 0..n {
                let v = p.get(a, b);
                if v == ZERO {
                    continue;
                }
                for j in 0..pointer_dim {
                    let jp = (j + k) % pointer_dim;
                    u.set(a * pointer_dim + jp, b * pointer_dim + j, v);
                }
            }
        }
    }
    Ok(u)
}

impl Register {
    /// Appends a pointer ancilla in `|0⟩` without coupling it to anything.
    pub fn append_pointer<S: AsRef<str>>(
        &self,
        label: &str,
        dim: usize,
        owner: Party,
        observable: &str,
        targets: &[S],
    ) -> Result<Register> {
        self.append_ancilla(
            label,
            owner,
            &StateVector::ket(dim, 0)?,
            AncillaKind::Pointer {
                observable: observable.to_string(),
                targets: targets.iter().map(|t| t.as_ref().to_string()).collect(),
            },
        )
    }

    /// Appends a die ancilla in `Σ_k √w_k |k⟩`.
    pub fn append_die(&self, label: &str, weights: &[f64], owner: Party) -> Result<Register> {
        check_weights(weights)?;
        let amps = weights.iter().map(|w| C64::new(w.sqrt(), 0.0)).collect();
        let die = StateVector::from_unnormalized(vec![weights.len()], amps)?;
        self.append_ancilla(
            label,
            owner,
            &die,
            AncillaKind::Die {
                weights: weights.to_vec(),
            },
        )
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::domain("at least one branch weight is required"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::domain("branch weights must be finite and nonnegative"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::domain(format!("branch weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Measurement kept at the quantum level: appends a pointer ancilla with one
/// level per distinct outcome, initialized to `|0⟩`, and entangles it with
/// the eigenspaces of `obs` on `targets`.
pub fn purify_measurement<S: AsRef<str>>(
    reg: &Register,
    obs: &ObservableSpec,
    targets: &[S],
    pointer_label: &str,
    owner: Party,
) -> Result<Register> {
    observable_positions(reg, obs, targets)?;
    let dim = obs.outcome_count();
    let next = reg.append_pointer(pointer_label, dim, owner, obs.label(), targets)?;
    let u = measurement_unitary(obs, dim)?;
    let mut all: Vec<&str> = targets.iter().map(|t| t.as_ref()).collect();
    all.push(pointer_label);
    apply_unitary(&next, &u, &all)
}

/// Random choice kept at the quantum level: appends a die ancilla in
/// `Σ_k √w_k |d_k⟩` and applies `Σ_k |d_k⟩⟨d_k| ⊗ U_k` with `U_k` acting on
/// `targets`.
pub fn purify_choice<S: AsRef<str>>(
    reg: &Register,
    targets: &[S],
    branches: &[ComplexMatrix],
    weights: &[f64],
    die_label: &str,
    owner: Party,
) -> Result<Register> {
    if branches.len() != weights.len() {
        return Err(Error::shape(format!(
            "{} branches but {} weights",
            branches.len(),
            weights.len()
        )));
    }
    check_weights(weights)?;
    let dim = reg.dim_of(targets)?;
    for (k, u) in branches.iter().enumerate() {
        check_unitary(u, dim, &format!("branch {k}"))?;
    }
    let next = reg.append_die(die_label, weights, owner)?;
    let v = block_diagonal(branches, dim);
    let mut all = vec![die_label];
    all.extend(targets.iter().map(|t| t.as_ref()));
    apply_unitary(&next, &v, &all)
}

/// Block-diagonal unitary selecting `blocks[c]` on the targets when the
/// control (slow index) is in basis state `c`.
pub(crate) fn block_diagonal(blocks: &[ComplexMatrix], dim: usize) -> ComplexMatrix {
    let n = blocks.len() * dim;
    let mut v = ComplexMatrix::zeros(n, n);
    for (c, u) in blocks.iter().enumerate() {
        for a in 0..dim {
            for b in 0..dim {
                v.set(c * dim + a, c * dim + b, u.get(a, b));
            }
        }
    }
    v
}

/// Every basis string over the given dimensions, in row-major order.
pub fn basis_strings(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &d in dims {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..d).map(move |k| {
                    let mut s = prefix.clone();
                    s.push(k);
                    s
                })
            })
            .collect();
    }
    out
}

/// Conditional operation across rounds: applies the case unitary selected by
/// each basis string of the `controls` to `targets`. Every control string must
/// have a case.
pub fn purify_conditional<S: AsRef<str>, T: AsRef<str>>(
    reg: &Register,
    controls: &[S],
    case_table: &BTreeMap<Vec<usize>, ComplexMatrix>,
    targets: &[T],
) -> Result<Register> {
    let control_pos = reg.positions(controls)?;
    let target_pos = reg.positions(targets)?;
    if control_pos.iter().any(|p| target_pos.contains(p)) {
        return Err(Error::lookup("a subsystem is both control and target"));
    }
    let control_dims: Vec<usize> = control_pos.iter().map(|&p| reg.dims()[p]).collect();
    let dim: usize = target_pos.iter().map(|&p| reg.dims()[p]).product();
    let mut blocks = Vec::new();
    for s in basis_strings(&control_dims) {
        let u = case_table
            .get(&s)
            .ok_or_else(|| Error::domain(format!("case table has no entry for control string {s:?}")))?;
        check_unitary(u, dim, &format!("case {s:?}"))?;
        blocks.push(u.clone());
    }
    if let Some(extra) = case_table.keys().find(|k| k.len() != control_dims.len() || k.iter().zip(&control_dims).any(|(v, d)| v >= d)) {
        return Err(Error::domain(format!("case {extra:?} is not a control basis string")));
    }
    let u = block_diagonal(&blocks, dim);
    let mut all: Vec<usize> = control_pos;
    all.extend(target_pos);
    Ok(reg.with_state(apply_at(reg.state(), &all, &u)))
}

/// Reduced operator on everything `owner` holds.
pub fn reduced_state(reg: &Register, owner: Party) -> Result<DensityOperator> {
    let keep = reg.owned_by(owner);
    if keep.is_empty() {
        return Err(Error::domain(format!("{owner} holds no subsystems")));
    }
    reg.state().reduced(&keep)
}

/// Reduced operator on the listed subsystems, in the listed order.
pub fn reduced_on<S: AsRef<str>>(reg: &Register, labels: &[S]) -> Result<DensityOperator> {
    let front = reg.reordered(labels)?;
    let keep: Vec<usize> = (0..labels.len()).collect();
    front.state().reduced(&keep)
}

/// Reduced operator on `keep` averaged over a computational-basis measurement
/// of `measured`, i.e. `Σ_s Tr_rest(P_s |ψ⟩⟨ψ| P_s)`. Passing `drop` omits one
/// measurement branch (in row-major order), which leaves a subnormalized
/// operator; it exists as a negative control for no-signalling audits.
pub fn measured_average<S: AsRef<str>, T: AsRef<str>>(
    reg: &Register,
    keep: &[S],
    measured: &[T],
    drop: Option<usize>,
) -> Result<ComplexMatrix> {
    let keep_pos = reg.positions(keep)?;
    let meas_pos = reg.positions(measured)?;
    if keep_pos.iter().any(|p| meas_pos.contains(p)) {
        return Err(Error::lookup("a measured subsystem cannot also be kept"));
    }
    let dims = reg.dims();
    let amps = reg.state().amplitudes();
    let meas_off = offsets(dims, &meas_pos);
    let rest_off = offsets(dims, &complement(dims.len(), &meas_pos));
    let keep_dim: usize = keep_pos.iter().map(|&p| dims[p]).product();
    let mut total = ComplexMatrix::zeros(keep_dim, keep_dim);
    for (s, m) in meas_off.iter().enumerate() {
        if Some(s) == drop {
            continue;
        }
        let mut branch = vec![ZERO; amps.len()];
        for r in &rest_off {
            branch[m + r] = amps[m + r];
        }
        let rho = reg.state().map_amplitudes(branch).reduced(&keep_pos)?;
        total = &total + rho.matrix();
    }
    Ok(total)
}
