#![allow(dead_code)]

use std::fmt::Write;
use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spook::kbmc::{KbmcEngine, KbmcOptions};
use spook::lang::{parse_kb, SourceKb};
use spook::model::KbIndex;
use spook::query::QueryExpr;

pub const FIXTURES: [&str; 4] = ["battalion", "diamond", "squad", "terrain"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(format!("{name}.spook"))
}

pub fn fixture(name: &str) -> SourceKb {
    let path = fixture_path(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    SourceKb::new(text, format!("{name}.spook"))
}

pub fn index_of(src: &SourceKb) -> Arc<KbIndex> {
    let kb = parse_kb(src).unwrap_or_else(|e| panic!("{e}"));
    Arc::new(KbIndex::new(kb).unwrap_or_else(|e| panic!("{}: {e}", src.provenance)))
}

/// Row of strictly positive probabilities, printed exactly enough to sum
/// to one within the validator tolerance.
fn row(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| rng.gen_range(1..=20) as f64).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn cpd(rng: &mut ChaCha8Rng, rows: usize, len: usize) -> String {
    let rows: Vec<String> = (0..rows)
        .map(|_| {
            row(rng, len)
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect();
    format!("cpd [{}]", rows.join("; "))
}

fn range(name: &str, card: usize) -> Vec<String> {
    (0..card).map(|i| format!("{name}{i}")).collect()
}

fn simple(rng: &mut ChaCha8Rng, name: &str, card: usize, parents: &[(&str, usize)]) -> String {
    let mut s = format!("  simple {name} {{{}}}", range(name, card).join(", "));
    if !parents.is_empty() {
        let p: Vec<&str> = parents.iter().map(|(p, _)| *p).collect();
        let _ = write!(s, " parents({})", p.join(", "));
    }
    let rows: usize = parents.iter().map(|(_, c)| c).product();
    let _ = writeln!(s, " {}", cpd(rng, rows, card));
    s
}

/// Randomized KB over a fixed three-level skeleton with inverse pairs,
/// quantifiers, number uncertainty and reference uncertainty, each switched
/// on or off by the seed, plus queries against it.
pub struct RandomKb {
    pub seed: u64,
    pub source: SourceKb,
    pub queries: Vec<String>,
    pub features: Vec<&'static str>,
}

pub fn random_kb(seed: u64) -> RandomKb {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=3usize);
    let with_number = rng.gen_bool(0.6);
    let with_reference = rng.gen_bool(0.6);
    let with_site = with_reference && rng.gen_bool(0.5);
    let with_up = rng.gen_bool(0.5);
    let second_quantifier = rng.gen_bool(0.4);
    let named_mid = rng.gen_bool(0.4);
    let (cy, cz, cw, cs0, cs1, cr, cout) = (
        rng.gen_range(2..=3),
        rng.gen_range(2..=3),
        rng.gen_range(2..=3),
        2,
        rng.gen_range(2..=3),
        2,
        rng.gen_range(2..=3),
    );
    let mut features = vec!["inverse", "quantifier"];
    let mut t = String::new();
    let _ = writeln!(t, "// random kb {seed}\n");

    let _ = writeln!(t, "class Place {{");
    t += &simple(&mut rng, "y", cy, &[]);
    let _ = writeln!(t, "}}\n");
    for sub in ["Place-A", "Place-B"] {
        let _ = writeln!(t, "class {sub} extends Place {{");
        t += &simple(&mut rng, "y", cy, &[]);
        let _ = writeln!(t, "}}\n");
    }

    let _ = writeln!(t, "class Leaf {{");
    let _ = writeln!(t, "  complex owner : Mid inverse parts");
    let up = rng.gen_bool(0.7);
    let s0_parents: Vec<(&str, usize)> = if up { vec![("owner.z", cz)] } else { Vec::new() };
    t += &simple(&mut rng, "s0", cs0, &s0_parents);
    let s1_parents: Vec<(&str, usize)> = if rng.gen_bool(0.5) {
        vec![("s0", cs0), ("owner.z", cz)]
    } else {
        vec![("s0", cs0)]
    };
    t += &simple(&mut rng, "s1", cs1, &s1_parents);
    let _ = writeln!(t, "}}\n");

    let _ = writeln!(t, "class Mid {{");
    let _ = writeln!(t, "  complex parts : Leaf multi({n}) inverse owner");
    let _ = writeln!(t, "  complex top : Top inverse mid");
    if with_up {
        features.push("upward-chain");
        t += &simple(&mut rng, "z", cz, &[("top.w", cw)]);
    } else {
        t += &simple(&mut rng, "z", cz, &[]);
    }
    if with_number {
        features.push("number");
        let parents = if rng.gen_bool(0.5) { " parents(z)" } else { "" };
        let rows = if parents.is_empty() { 1 } else { cz };
        let _ = writeln!(t, "  number size over parts{parents} {}", cpd(&mut rng, rows, n + 1));
    }
    let v1 = rng.gen_range(0..cs1);
    let _ = writeln!(t, "  quantifier q = count(parts.s1 == s1{v1})");
    let mut r_parents = vec![("q", n + 1)];
    if second_quantifier {
        features.push("joint-quantifiers");
        let _ = writeln!(t, "  quantifier q2 = count(parts.s0 == s00)");
        r_parents.push(("q2", n + 1));
    }
    t += &simple(&mut rng, "r", cr, &r_parents);
    let _ = writeln!(t, "}}\n");

    let _ = writeln!(t, "class Top {{");
    t += &simple(&mut rng, "w", cw, &[]);
    let _ = writeln!(t, "  complex mid : Mid inverse top");
    let _ = writeln!(t, "  complex place : Place");
    if with_reference {
        features.push("reference");
        let mut choices = vec!["class Place-A", "class Place-B"];
        if with_site {
            choices.push("instance site");
        }
        let parents = rng.gen_bool(0.5);
        let _ = writeln!(
            t,
            "  reference kind over place {{{}}}{} {}",
            choices.join(", "),
            if parents { " parents(w)" } else { "" },
            cpd(&mut rng, if parents { cw } else { 1 }, choices.len())
        );
    }
    t += &simple(&mut rng, "out", cout, &[("mid.r", cr), ("place.y", cy)]);
    let _ = writeln!(t, "}}\n");

    let _ = writeln!(t, "instance top-1 : Top");
    if with_site {
        let _ = writeln!(t, "instance site : Place-A");
    }
    if named_mid {
        features.push("named-filler");
        let _ = writeln!(t, "instance mid-1 : Mid");
        let _ = writeln!(t, "\nassert top-1.mid = mid-1");
    }

    let targets = [
        "top-1.out",
        "top-1.mid.r",
        "top-1.mid.q",
        "top-1.place.y",
        "top-1.mid.z",
        "top-1.w",
    ];
    let ev: Vec<(String, usize)> = vec![
        ("top-1.w".into(), cw),
        ("top-1.mid.z".into(), cz),
        ("top-1.out".into(), cout),
        ("top-1.mid.q".into(), n + 1),
        ("top-1.place.y".into(), cy),
    ];
    let mut queries = Vec::new();
    for _ in 0..3 {
        let k = rng.gen_range(1..=2);
        let picked: Vec<&str> = targets.choose_multiple(&mut rng, k).copied().collect();
        let mut q = picked.join(", ");
        let m = rng.gen_range(0..=2);
        let chosen: Vec<(String, usize)> = ev.choose_multiple(&mut rng, m).cloned().collect();
        let given: Vec<String> = chosen
            .iter()
            .filter(|(c, _)| !picked.contains(&c.as_str()))
            .map(|(c, card)| {
                let attr = c.rsplit('.').next().unwrap();
                let v = rng.gen_range(0..*card);
                if attr == "q" {
                    format!("{c} = {v}")
                } else {
                    format!("{c} = {attr}{v}")
                }
            })
            .collect();
        if !given.is_empty() {
            let _ = write!(q, " | {}", given.join(", "));
        }
        queries.push(q);
    }
    RandomKb {
        seed,
        source: SourceKb::new(t, format!("random-{seed}.spook")),
        queries,
        features,
    }
}

/// Posterior joint over the query targets by summing the product of every
/// CPT over all assignments to the ancestral set of targets and evidence.
/// Returns `None` when more than `cap` joint states would be visited.
pub fn brute_force(index: &Arc<KbIndex>, q: &QueryExpr, cap: u128) -> Option<Vec<f64>> {
    let engine = KbmcEngine::new(index.clone(), KbmcOptions::default());
    let (g, targets, mut evidence) = engine.prepare(q).ok()?;
    let net = g.network();
    for (k, v) in net.evidence() {
        evidence.entry(*k).or_insert(*v);
    }
    let seeds = targets.iter().chain(evidence.keys()).copied();
    let keep = net.ancestors(seeds);
    let free: Vec<usize> = keep.iter().copied().filter(|v| !evidence.contains_key(v)).collect();
    let states = free.iter().fold(1u128, |a, v| a.saturating_mul(net.card(*v) as u128));
    if states > cap {
        return None;
    }
    let mut value = vec![0usize; net.len()];
    for (k, v) in &evidence {
        value[*k] = *v;
    }
    let tcards: Vec<usize> = targets.iter().map(|t| net.card(*t)).collect();
    let mut joint = vec![0.0; tcards.iter().product()];
    let mut digits = vec![0usize; free.len()];
    loop {
        for (v, d) in free.iter().zip(&digits) {
            value[*v] = *d;
        }
        let mut p = 1.0;
        for &v in &keep {
            let node = net.node(v);
            let cpt = node.cpt.as_ref().expect("ancestral inputs are evidenced");
            let mut idx = 0;
            for par in &node.parents {
                idx = idx * net.card(*par) + value[*par];
            }
            p *= cpt[idx * node.card() + value[v]];
            if p == 0.0 {
                break;
            }
        }
        let mut cell = 0;
        for (t, c) in targets.iter().zip(&tcards) {
            cell = cell * c + value[*t];
        }
        joint[cell] += p;
        let mut i = 0;
        loop {
            if i == free.len() {
                let z: f64 = joint.iter().sum();
                return (z > 0.0).then(|| joint.iter().map(|x| x / z).collect());
            }
            digits[i] += 1;
            if digits[i] < net.card(free[i]) {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
