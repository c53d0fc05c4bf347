//! A small protocol written in the script language: Alice sends a qubit,
//! Bob measures it in a random basis, and the run is repeated after
//! purifying Bob. The compiler notes show where his choices went.

use qbc::engine::Party;
use qbc::protocol::{execute, parse, purify, undetectability_gap, ExecConfig};

const SCRIPT: &str = "\
rounds 3
prepare A q |+>
send q A B
choose B basis { z: measure sz q -> m | x: measure sx q -> m }
announce B outcomes = rounds where m == up
";

fn main() -> qbc::Result<()> {
    let script = parse(SCRIPT)?;
    let honest = execute(&script, ExecConfig::honest(7, 0))?;
    for round in &honest.rounds {
        println!("round {}: {:?}", round.index, round.records);
    }
    println!("announced: {:?}", honest.messages);

    let purified = purify(&script, Party::Bob)?;
    print!("{}", purified.listing());
    for note in &purified.notes {
        println!("note: {note}");
    }
    println!("Alice's view changes by {:.3e}", undetectability_gap(&script, Party::Bob)?);
    Ok(())
}
