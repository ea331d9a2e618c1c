//! Deterministic battlespace knowledge bases: a battalion of batteries, each
//! made of groups of generic units, in an environment whose location type is
//! uncertain.

use std::fmt::Write;

use crate::lang::SourceKb;

/// The eleven group kinds of a battery, as `(attribute, class)`.
pub const GROUP_KINDS: [(&str, &str); 11] = [
    ("launchers", "Launcher-Group"),
    ("command-vehicles", "Command-Group"),
    ("radars", "Radar-Group"),
    ("air-defense", "Air-Defense-Group"),
    ("transporters", "Transporter-Group"),
    ("reloaders", "Reloader-Group"),
    ("fuel-trucks", "Fuel-Group"),
    ("generators", "Generator-Group"),
    ("communications", "Comms-Group"),
    ("security", "Security-Group"),
    ("maintenance", "Maintenance-Group"),
];

/// Shape of a generated battalion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BattalionShape {
    pub units_per_group: usize,
    pub batteries: usize,
    /// Group kinds per battery, at most [`GROUP_KINDS`]`.len()`.
    pub groups: usize,
    /// Assert `battery-i` instances into the battalion; otherwise its
    /// batteries are generic fillers of `has-battery`.
    pub named_batteries: bool,
}

impl BattalionShape {
    pub fn new(units_per_group: usize, batteries: usize) -> Self {
        Self {
            units_per_group,
            batteries,
            groups: GROUP_KINDS.len(),
            named_batteries: true,
        }
    }
}

/// Distribution with every entry a positive multiple of 0.001, summing to
/// exactly 1 in decimal.
fn dist(weights: &[f64]) -> String {
    let total: f64 = weights.iter().sum();
    let n = weights.len() as i64;
    let mut milli: Vec<i64> = weights
        .iter()
        .map(|w| ((w / total) * 1000.0).floor().max(1.0) as i64)
        .collect();
    let rest = 1000 - milli.iter().sum::<i64>();
    let big = (0..milli.len())
        .max_by_key(|i| (milli[*i], -(*i as i64)))
        .expect("nonempty");
    milli[big] += rest;
    debug_assert!(milli.iter().all(|m| *m > 0) && n > 0);
    milli
        .iter()
        .map(|m| format!("{}", *m as f64 / 1000.0))
        .collect::<Vec<_>>()
        .join(", ")
}

fn bin(p_yes: f64) -> String {
    let p = (p_yes.clamp(0.01, 0.99) * 1000.0).round() / 1000.0;
    dist(&[1.0 - p, p])
}

fn cpd(rows: &[String]) -> String {
    format!("cpd [{}]", rows.join("; "))
}

/// Battalion `battalion-charlie` with `u` units per group and `b` batteries.
pub fn generate_battalion_kb(u: usize, b: usize) -> SourceKb {
    generate(&BattalionShape::new(u, b))
}

pub fn generate(shape: &BattalionShape) -> SourceKb {
    let u = shape.units_per_group.max(1);
    let b = shape.batteries.max(1);
    let groups = &GROUP_KINDS[..shape.groups.clamp(1, GROUP_KINDS.len())];
    let mut s = String::new();
    let _ = writeln!(
        s,
        "// generated battlespace: {u} units per group, {b} batteries, {} group kinds\n",
        groups.len()
    );

    s.push_str("class Weather {\n  simple precipitation {clear, rain} cpd [0.7, 0.3]\n}\n\n");
    s.push_str("class Location {\n  simple terrain {open, rough} cpd [0.5, 0.5]\n}\n\n");
    s.push_str("class Mountain-Location extends Location {\n  simple terrain {open, rough} cpd [0.2, 0.8]\n}\n\n");
    s.push_str("class Desert-Location extends Location {\n  simple terrain {open, rough} cpd [0.85, 0.15]\n}\n\n");
    s.push_str(
        "class Environment {\n  complex location : Location\n  reference location-type over location {class Mountain-Location, class Desert-Location} cpd [0.4, 0.6]\n  complex weather : Weather\n",
    );
    let _ = writeln!(
        s,
        "  simple hiding-support {{poor, good}} parents(location.terrain, weather.precipitation) {}",
        cpd(&[bin(0.25), bin(0.45), bin(0.7), bin(0.85)])
    );
    let _ = writeln!(
        s,
        "  simple defense-support {{poor, good}} parents(location.terrain) {}\n}}\n",
        cpd(&[bin(0.3), bin(0.75)])
    );

    s.push_str("class Military-Unit {}\n\n");

    s.push_str("class Battalion extends Military-Unit {\n  complex in-environment : Environment\n");
    s.push_str("  simple country {north, south} cpd [0.5, 0.5]\n");
    let _ = writeln!(
        s,
        "  simple under-fire {{none, light, heavy}} parents(in-environment.defense-support) {}",
        cpd(&[dist(&[0.5, 0.3, 0.2]), dist(&[0.75, 0.2, 0.05])])
    );
    let _ = writeln!(s, "  complex has-battery : Battery multi({b}) inverse in-battalion");
    let north: Vec<f64> = (0..=b).map(|m| ((m + 1) * (m + 1)) as f64).collect();
    let south: Vec<f64> = (0..=b).map(|m| (m + 1) as f64).collect();
    let _ = writeln!(
        s,
        "  number num-batteries over has-battery parents(country) {}",
        cpd(&[dist(&north), dist(&south)])
    );
    s.push_str("  quantifier operational-batteries = count(has-battery.operational == yes)\n");
    let mut rows = Vec::new();
    for m in 0..=b {
        let f = m as f64 / b as f64;
        for fire in 0..3 {
            rows.push(dist(&[0.6, 0.3 + 0.5 * fire as f64, 0.1 + 2.0 * f]));
        }
    }
    let _ = writeln!(
        s,
        "  simple current-activity {{idle, moving, launching}} parents(operational-batteries, under-fire) {}\n}}\n",
        cpd(&rows)
    );

    s.push_str("class Battery extends Military-Unit {\n  complex in-battalion : Battalion inverse has-battery\n");
    for (attr, class) in groups {
        let _ = writeln!(s, "  complex {attr} : {class} inverse in-battery");
    }
    let _ = writeln!(
        s,
        "  simple hit {{no, yes}} parents(in-battalion.under-fire) {}",
        cpd(&[bin(0.02), bin(0.15), bin(0.5)])
    );
    let _ = writeln!(
        s,
        "  simple threat {{low, high}} parents(hit) {}",
        cpd(&[bin(0.1), bin(0.85)])
    );
    let _ = writeln!(
        s,
        "  simple cover {{poor, good}} parents(in-battalion.in-environment.hiding-support) {}",
        cpd(&[bin(0.2), bin(0.85)])
    );
    for (k, (attr, _)) in groups.iter().enumerate() {
        let d = 0.01 * k as f64;
        if k == 0 {
            let _ = writeln!(
                s,
                "  simple ready-1 {{no, yes}} parents({attr}.status) {}",
                cpd(&[bin(0.95), bin(0.3)])
            );
        } else {
            let _ = writeln!(
                s,
                "  simple ready-{} {{no, yes}} parents(ready-{k}, {attr}.status) {}",
                k + 1,
                cpd(&[bin(0.1 + d), bin(0.05), bin(0.95 - d), bin(0.4 + d)])
            );
        }
    }
    let _ = writeln!(
        s,
        "  simple operational {{no, yes}} parents(hit, ready-{}) {}\n}}\n",
        groups.len(),
        cpd(&[bin(0.2), bin(0.95), bin(0.05), bin(0.4)])
    );

    s.push_str("class Group extends Military-Unit {\n");
    let _ = writeln!(s, "  complex units : Unit multi({u}) inverse in-group");
    let weights: Vec<f64> = (0..=u).map(|m| (m + 1) as f64).collect();
    let _ = writeln!(s, "  number num-units over units cpd [{}]", dist(&weights));
    s.push_str("  simple threat {low, high} cpd [0.8, 0.2]\n");
    s.push_str("  simple cover {poor, good} cpd [0.5, 0.5]\n");
    s.push_str("  quantifier num-damaged = count(units.damaged == yes)\n");
    s.push_str("  quantifier num-reported-damaged = count(units.reported-damaged == yes)\n");
    let mut rows = Vec::new();
    for d in 0..=u {
        for r in 0..=u {
            rows.push(bin(0.05 + 0.6 * d as f64 / u as f64 + 0.3 * r as f64 / u as f64));
        }
    }
    let _ = writeln!(
        s,
        "  simple status {{ok, degraded}} parents(num-damaged, num-reported-damaged) {}\n}}\n",
        cpd(&rows)
    );

    for (k, (attr, class)) in groups.iter().enumerate() {
        let d = 0.01 * k as f64;
        let _ = writeln!(s, "class {class} extends Group {{");
        let _ = writeln!(s, "  complex in-battery : Battery inverse {attr}");
        let _ = writeln!(
            s,
            "  simple threat {{low, high}} parents(in-battery.threat) {}",
            cpd(&[bin(0.05 + d), bin(0.8 - 2.0 * d)])
        );
        let _ = writeln!(
            s,
            "  simple cover {{poor, good}} parents(in-battery.cover) {}\n}}\n",
            cpd(&[bin(0.1 + d), bin(0.9 - 2.0 * d)])
        );
    }

    s.push_str("class Unit extends Military-Unit {\n  complex in-group : Group inverse units\n");
    s.push_str("  simple reported {no, yes} cpd [0.6, 0.4]\n");
    let _ = writeln!(
        s,
        "  simple damaged {{no, yes}} parents(in-group.threat, in-group.cover) {}",
        cpd(&[bin(0.1), bin(0.04), bin(0.5), bin(0.2)])
    );
    let _ = writeln!(
        s,
        "  simple operational {{no, yes}} parents(damaged) {}",
        cpd(&[bin(0.95), bin(0.1)])
    );
    let _ = writeln!(
        s,
        "  simple reported-damaged {{no, yes}} parents(damaged, in-group.cover) {}\n}}\n",
        cpd(&[bin(0.05), bin(0.03), bin(0.8), bin(0.35)])
    );

    s.push_str("instance battalion-charlie : Battalion\n");
    if shape.named_batteries {
        for i in 1..=b {
            let _ = writeln!(s, "instance battery-{i} : Battery");
        }
        s.push('\n');
        for i in 1..=b {
            let _ = writeln!(s, "assert battery-{i}.in-battalion = battalion-charlie");
        }
    }
    SourceKb::new(s, format!("battalion-u{u}-b{b}.spook"))
}
