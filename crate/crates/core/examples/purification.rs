//! A random choice between measuring X or Y, done honestly and then kept at
//! the quantum level with a die and a pointer. Tracing out the ancillas gives
//! back the honest density operator.

use std::collections::BTreeMap;

use qbc::engine::{measurement_unitary, purify_conditional, reduced_on, ObservableSpec, Party, Register};
use qbc::linalg::{trace_distance, ComplexMatrix, DensityOperator, StateVector, C64};

fn dephased(rho: &ComplexMatrix, obs: &ObservableSpec) -> ComplexMatrix {
    obs.projectors()
        .iter()
        .map(|(_, p)| &(p * rho) * p)
        .fold(ComplexMatrix::zeros(2, 2), |acc, m| &acc + &m)
}

fn main() -> qbc::Result<()> {
    let psi = StateVector::new(vec![2], vec![C64::new(0.8, 0.0), C64::new(0.36, 0.48)])?;
    let (x, y) = (ObservableSpec::pauli_x(), ObservableSpec::pauli_y());

    let rho = psi.projector();
    let honest = (&dephased(rho.matrix(), &x) + &dephased(rho.matrix(), &y)).scale(C64::new(0.5, 0.0));
    let honest = DensityOperator::new(honest)?;

    let reg = Register::new()
        .prepare(&["c"], Party::Bob, &psi)?
        .append_die("die", &[0.5, 0.5], Party::Bob)?
        .append_pointer("ptr", 2, Party::Bob, "X|Y", &["c"])?;
    let mut cases = BTreeMap::new();
    cases.insert(vec![0], measurement_unitary(&x, 2)?);
    cases.insert(vec![1], measurement_unitary(&y, 2)?);
    let purified = purify_conditional(&reg, &["die"], &cases, &["c", "ptr"])?;
    let channel = reduced_on(&purified, &["c"])?;

    println!("honest channel state:\n{:?}", honest.matrix());
    println!("purified, ancillas traced out:\n{:?}", channel.matrix());
    println!("trace distance: {:.3e}", trace_distance(&honest, &channel)?);
    Ok(())
}
