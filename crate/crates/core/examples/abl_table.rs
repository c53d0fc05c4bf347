//! Prints the retrodiction table for the three-spin puzzle: a Bell pair,
//! a spin measurement on one half, and post-selection on an eigenstate of R.

use qbc::abl::{abl_time_symmetry_check, arrow, vaa_table, VaaFixture, PAPER_TABLE, R_LABELS, SPIN_LABELS};

fn main() -> qbc::Result<()> {
    let table = vaa_table()?;
    println!("post  {}", SPIN_LABELS.map(|s| format!("{s:<10}")).join(""));
    for (k, row) in table.cells.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .map(|c| format!("{} {:<8.6}", arrow(&c.outcome), c.probability))
            .collect();
        println!("{:<5} {}", R_LABELS[k], cells.join(""));
    }
    println!("matches the expected table: {}", table.matches_paper());

    // the rule is symmetric under swapping pre- and post-selection
    let fixture = VaaFixture::new()?;
    let ctx = fixture.context(1, 1)?;
    println!("time symmetric (r2, sy): {}", abl_time_symmetry_check(&ctx)?);
    assert_eq!(PAPER_TABLE[1][1], "down");
    Ok(())
}
