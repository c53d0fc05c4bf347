//! The built-in bit-commitment protocol based on the three-spin retrodiction
//! puzzle.

use super::ast::ProtocolScript;
use super::parser::parse;
use crate::abl::{vaa_table_for, VaaFixture, R_LABELS};
use crate::engine::ObservableSpec;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};

/// Choice labels of Bob's die, in σx, σy, σz order.
pub const SPIN_CHOICES: [&str; 3] = ["x", "y", "z"];

fn literal(z: C64) -> String {
    format!("({:e} + {:e}*i)", z.re, z.im)
}

fn matrix_literal(m: &ComplexMatrix) -> String {
    let rows: Vec<String> = (0..m.rows())
        .map(|i| {
            let cells: Vec<String> = (0..m.cols()).map(|j| literal(m.get(i, j))).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(",\n    "))
}

fn observable_line(name: &str, obs: &ObservableSpec) -> String {
    format!(
        "observable {name} = basis {} labels {}\n",
        matrix_literal(obs.eigenbasis()),
        obs.outcome_labels().join(" ")
    )
}

/// Inference table: the σ label Alice can name for each `r` outcome given
/// that Bob saw spin up. Rows where more than one component reads up are
/// left out.
fn inference_entries(fixture: &VaaFixture) -> Result<Vec<(String, String)>> {
    let table = vaa_table_for(fixture)?;
    let mut out = Vec::new();
    for (k, row) in table.cells.iter().enumerate() {
        let ups: Vec<usize> = (0..3).filter(|&s| row[s].outcome == "up").collect();
        if ups.len() == 1 {
            out.push((R_LABELS[k].to_string(), SPIN_CHOICES[ups[0]].to_string()));
        }
    }
    if out.is_empty() {
        return Err(Error::domain("inference table is empty"));
    }
    Ok(out)
}

/// Source text of the `n`-round protocol.
pub fn vaa_source(n: usize) -> Result<String> {
    if n == 0 {
        return Err(Error::domain("the protocol needs at least one round"));
    }
    let fixture = VaaFixture::new()?;
    let mut s = String::new();
    s.push_str("# Bell pairs, Bob's random spin component, Alice's R measurement.\n");
    s.push_str(&format!("rounds {n}\n\n"));
    for (name, obs) in ["sx", "sy", "sz"].iter().zip(&fixture.spin_observables) {
        s.push_str(&observable_line(name, obs));
    }
    s.push_str(&observable_line("R", &fixture.r_observable()));
    let entries: Vec<String> = inference_entries(&fixture)?
        .into_iter()
        .map(|(r, sigma)| format!("{r}: {sigma}"))
        .collect();
    s.push_str(&format!("table infer = {{{}}}\n\n", entries.join(", ")));
    s.push_str(
        "prepare A a,c bell\n\
         send c A B\n\
         choose B k { x: measure sx c -> m | y: measure sy c -> m | z: measure sz c -> m }\n\
         send c B A\n\
         measure A R a,c -> r\n\
         \n\
         announce B ups = rounds where m == up\n\
         if committed 0: announce A committed = ups where r != r1\n\
         if committed 1: announce A committed = ups where r == r1\n\
         reveal A\n\
         if revealed 0: announce A claims = committed -> infer(r)\n\
         if revealed 1: announce A claims = ups - committed -> infer(r)\n\
         if revealed 0: verify B claims matches k over committed\n\
         if revealed 1: verify B claims matches k over ups - committed\n",
    );
    Ok(s)
}

/// Parsed `n`-round protocol.
pub fn vaa_script(n: usize) -> Result<ProtocolScript> {
    parse(&vaa_source(n)?)
}
