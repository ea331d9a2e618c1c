use std::fmt::Write;

use super::DiscreteNetwork;

/// Line-oriented text form of a network for diffing: one `node` line per
/// node followed by its CPT rows, then `evidence` lines.
pub fn dump_network(net: &DiscreteNetwork) -> String {
    let mut out = String::new();
    for (id, n) in net.nodes().iter().enumerate() {
        let parents: Vec<String> = n.parents.iter().map(|p| net.node(*p).name.clone()).collect();
        let _ = writeln!(
            out,
            "node {id} {} {{{}}} parents({})",
            n.name,
            n.range.join(", "),
            parents.join(", ")
        );
        match &n.cpt {
            None => out.push_str("  input\n"),
            Some(cpt) => {
                for row in cpt.chunks(n.card()) {
                    let cells: Vec<String> = row.iter().map(|p| format!("{p}")).collect();
                    let _ = writeln!(out, "  {}", cells.join(" "));
                }
            }
        }
    }
    for (id, v) in net.evidence() {
        let n = net.node(*id);
        let _ = writeln!(out, "evidence {} = {}", n.name, n.range[*v]);
    }
    out
}
