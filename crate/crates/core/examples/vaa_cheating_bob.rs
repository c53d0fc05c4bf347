//! Bob keeps his spin choice in a three-level die. Before the reveal, the die
//! alone tells the two commitments apart with trace distance 2/3; an honest
//! Bob, who reads his die, learns nothing.

use qbc::linalg::helstrom_measurement;
use qbc::protocol::{commitment_states, vaa_script, BobView};

fn main() -> qbc::Result<()> {
    let script = vaa_script(1)?;
    let cheat = commitment_states(&script, BobView::Cheating)?;
    let die = ["die:k"];
    let w0 = cheat.reduced_to(0, &die)?;
    let w1 = cheat.reduced_to(1, &die)?;
    println!("die state, commit 0:\n{:?}", w0.matrix());
    println!("die state, commit 1:\n{:?}", w1.matrix());

    let h = helstrom_measurement(&w0, &w1)?;
    println!("Bob holds {:?}", cheat.bob_labels[0]);
    println!("trace distance (all of Bob's systems): {:.12}", cheat.distance()?);
    println!("best guessing probability from the die: {:.12}", h.success_probability);

    let honest = commitment_states(&script, BobView::Honest)?;
    println!("honest Bob trace distance: {:.3e}", honest.distance()?);
    Ok(())
}
