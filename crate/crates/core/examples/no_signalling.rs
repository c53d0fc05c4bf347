//! Whether Bob reads out his die and pointers or keeps them coherent makes no
//! difference to Alice's reduced state. Dropping one readout branch (a broken
//! average) is caught.

use qbc::engine::Party;
use qbc::protocol::{audit_no_signalling, purify, vaa_script};

fn main() -> qbc::Result<()> {
    let script = purify(&vaa_script(1)?, Party::Bob)?;
    let report = audit_no_signalling(&script, Party::Bob, None)?;
    println!(
        "vaa: distances {:.3e} / {:.3e}, passed {}",
        report.distances[0], report.distances[1], report.passed
    );
    let broken = audit_no_signalling(&script, Party::Bob, Some(0))?;
    println!("dropped branch: max distance {:.4}, passed {}", broken.max_distance(), broken.passed);
    Ok(())
}
