use std::fmt::Write;

use crate::model::{AttributeChain, AttributeDecl, Cardinality, Cpt, KnowledgeBase, RefChoice};

/// Canonical text for `kb`: classes, then instances, then assertions, each
/// sorted by name. Reparsing the output yields a KB equal to `kb`.
pub fn serialize_kb(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    for class in kb.classes.values() {
        out.push_str("class ");
        out.push_str(&class.name);
        if let Some(sup) = &class.superclass {
            let _ = write!(out, " extends {sup}");
        }
        write_block(&mut out, &class.attributes);
        out.push('\n');
    }
    for inst in kb.instances.values() {
        let _ = write!(out, "instance {} : {}", inst.name, inst.class);
        if inst.overrides.is_empty() {
            out.push('\n');
        } else {
            write_block(&mut out, &inst.overrides);
        }
    }
    if !kb.instances.is_empty() && !kb.assertions.is_empty() {
        out.push('\n');
    }
    for ((inst, attr), value) in &kb.assertions {
        let _ = writeln!(out, "assert {inst}.{attr} = {value}");
    }
    out
}

fn write_block(out: &mut String, attrs: &std::collections::BTreeMap<String, AttributeDecl>) {
    if attrs.is_empty() {
        out.push_str(" {}\n");
        return;
    }
    out.push_str(" {\n");
    for (name, decl) in attrs {
        out.push_str("  ");
        write_decl(out, name, decl);
        out.push('\n');
    }
    out.push_str("}\n");
}

fn write_parents(out: &mut String, parents: &[AttributeChain]) {
    if parents.is_empty() {
        return;
    }
    let list: Vec<String> = parents.iter().map(ToString::to_string).collect();
    let _ = write!(out, " parents({})", list.join(", "));
}

fn write_cpd(out: &mut String, cpd: &Cpt) {
    let rows: Vec<String> = cpd
        .rows
        .iter()
        .map(|r| r.iter().map(|p| format!("{p}")).collect::<Vec<_>>().join(", "))
        .collect();
    let _ = write!(out, " cpd [{}]", rows.join("; "));
}

fn write_decl(out: &mut String, name: &str, decl: &AttributeDecl) {
    match decl {
        AttributeDecl::Simple(s) => {
            let _ = write!(out, "simple {name} {{{}}}", s.range.join(", "));
            write_parents(out, &s.parents);
            write_cpd(out, &s.cpd);
        }
        AttributeDecl::Complex(c) => {
            let _ = write!(out, "complex {name} : {}", c.ty);
            if let Cardinality::Multi(n) = c.cardinality {
                let _ = write!(out, " multi({n})");
            }
            if let Some(inv) = &c.inverse {
                let _ = write!(out, " inverse {inv}");
            }
        }
        AttributeDecl::Quantifier(q) => {
            let _ = write!(out, "quantifier {name} = count({}.{} == {})", q.over, q.chain, q.value);
        }
        AttributeDecl::Number(n) => {
            let _ = write!(out, "number {name} over {}", n.over);
            write_parents(out, &n.parents);
            write_cpd(out, &n.cpd);
        }
        AttributeDecl::Reference(r) => {
            let choices: Vec<String> = r
                .choices
                .iter()
                .map(|c| match c {
                    RefChoice::Class(n) => format!("class {n}"),
                    RefChoice::Instance(n) => format!("instance {n}"),
                })
                .collect();
            let _ = write!(out, "reference {name} over {} {{{}}}", r.over, choices.join(", "));
            write_parents(out, &r.parents);
            write_cpd(out, &r.cpd);
        }
    }
}
