//! Two commitment states with the same reduced operator on Bob's side and
//! the unitary on Alice's side that turns one into the other.

use qbc::attack::{concealment, optimal_cheat_unitary, synthesize_cheat_unitary, verify_binding_failure};
use qbc::linalg::{schmidt_decompose, ComplexMatrix, StateVector};
use qbc::sampling::{haar_unitary, random_state};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn on_alice(u: &ComplexMatrix, psi: &StateVector, dim_b: usize) -> qbc::Result<StateVector> {
    qbc::attack::apply_on_a(u, psi, u.rows(), dim_b)
}

fn main() -> qbc::Result<()> {
    let (dim_a, dim_b) = (3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let psi0 = random_state(&[dim_a, dim_b], &mut rng);
    // any Alice-side unitary leaves Bob's reduced operator alone
    let psi1 = on_alice(&haar_unitary(dim_a, &mut rng), &psi0, dim_b)?;

    println!("concealment (trace distance on B): {:.3e}", concealment(&psi0, &psi1, dim_a, dim_b)?);
    let s0 = schmidt_decompose(&psi0, dim_a, dim_b)?;
    let s1 = schmidt_decompose(&psi1, dim_a, dim_b)?;
    println!("schmidt coefficients: {:.6?}", s0.coefficients);
    println!("                      {:.6?}", s1.coefficients);

    let report = synthesize_cheat_unitary(&psi0, &psi1, dim_a, dim_b)?;
    let (broken, residual) = verify_binding_failure(&report, &psi0, &psi1)?;
    println!("cheat fidelity {:.12}, binding broken: {broken} (residual {residual:.2e})", report.cheat_fidelity);

    // a pair that does not conceal only admits a partial cheat
    let far = random_state(&[dim_a, dim_b], &mut rng);
    let best = optimal_cheat_unitary(&psi0, &far, dim_a, dim_b)?;
    println!(
        "nonconcealing pair: concealment {:.4}, best fidelity {:.4}",
        best.concealment, best.cheat_fidelity
    );
    Ok(())
}
