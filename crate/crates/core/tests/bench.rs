use std::sync::Arc;

use spook::bench::{
    generate, generate_battalion_kb, log_increments, median, poly_fit, run_matrix, write_csv, BattalionShape,
    BenchConfig, CellSpec, CellStatus, QuantifierMode, CSV_HEADER,
};
use spook::kbmc::{KbmcEngine, KbmcOptions};
use spook::lang::parse_kb;
use spook::model::KbIndex;

fn grounded_nodes(u: usize, b: usize) -> usize {
    let index = Arc::new(KbIndex::new(parse_kb(&generate_battalion_kb(u, b)).unwrap()).unwrap());
    KbmcEngine::new(index, KbmcOptions::default())
        .grounding()
        .unwrap()
        .network()
        .len()
}

#[test]
fn generator_is_deterministic() {
    assert_eq!(generate_battalion_kb(3, 2), generate_battalion_kb(3, 2));
    assert_ne!(generate_battalion_kb(3, 2).text, generate_battalion_kb(2, 3).text);
}

#[test]
fn smallest_fixture_is_small() {
    let n = grounded_nodes(1, 1);
    assert!(n <= 200, "{n} nodes");
}

#[test]
fn grounded_size_is_linear_in_units() {
    let xs: Vec<f64> = (1..=5).map(|u| u as f64).collect();
    let ys: Vec<f64> = (1..=5).map(|u| grounded_nodes(u, 4) as f64).collect();
    let fit = poly_fit(&xs, &ys, 1).unwrap();
    assert!(fit.r_squared > 0.999, "{ys:?}");
    // equal increments: every unit adds the same nodes to every group
    let steps: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(steps.windows(2).all(|w| w[0] == w[1]), "{steps:?}");
}

#[test]
fn generic_battery_variant_parses() {
    let shape = BattalionShape {
        named_batteries: false,
        groups: 3,
        ..BattalionShape::new(2, 3)
    };
    let kb = parse_kb(&generate(&shape)).unwrap();
    assert_eq!(kb.instances.len(), 1);
    assert!(KbIndex::new(kb).is_ok());
}

#[test]
fn config_parses_from_toml() {
    let cfg = BenchConfig::from_toml(
        r#"
units = [1, 2]
batteries = 2
repetitions = 3
budget-seconds = 5.0
cells = [
  { backend = "structured", reuse = false },
  { backend = "kbmc" },
  { backend = "structured", qmode = "naive" },
]
"#,
    )
    .unwrap();
    assert_eq!(cfg.units, vec![1, 2]);
    assert_eq!(cfg.groups, 11);
    assert_eq!(cfg.cells[0], CellSpec::structured(false, QuantifierMode::Combinatoric));
    assert_eq!(cfg.cells[2].qmode, QuantifierMode::Naive);
    assert!(BenchConfig::from_toml("units = []").is_err());
    assert!(BenchConfig::from_toml("repetitions = 0").is_err());
    assert!(BenchConfig::from_toml("colour = 1").is_err());
}

#[test]
fn matrix_rows_agree_and_serialize() {
    let cfg = BenchConfig {
        units: vec![1, 2],
        batteries: 2,
        groups: 4,
        repetitions: 3,
        ..BenchConfig::default()
    };
    let rows = run_matrix(&cfg).unwrap();
    assert_eq!(rows.len(), 2 * cfg.cells.len());
    for u in [1, 2] {
        let cells: Vec<_> = rows.iter().filter(|r| r.units == u).collect();
        let first = cells[0].posterior.clone().unwrap();
        for r in &cells {
            assert_eq!(r.status, CellStatus::Ok);
            assert_eq!(r.samples.len(), 3);
            let p = r.posterior.as_ref().unwrap();
            assert!(p.iter().zip(&first).all(|(a, b)| (a - b).abs() < 1e-6));
        }
        let reuse = cells
            .iter()
            .find(|r| r.cell == CellSpec::structured(true, QuantifierMode::Combinatoric))
            .unwrap();
        let no_reuse = cells
            .iter()
            .find(|r| r.cell == CellSpec::structured(false, QuantifierMode::Combinatoric))
            .unwrap();
        assert!(reuse.cache_misses < no_reuse.cache_misses);
    }
    let mut out = Vec::new();
    write_csv(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(lines.count(), rows.len());
    assert!(text.contains("\nkbmc,-,-,1,"));
}

#[test]
fn exhausted_budget_is_reported_as_timeout() {
    let cfg = BenchConfig {
        units: vec![3],
        cells: vec![CellSpec::kbmc()],
        repetitions: 50,
        budget_seconds: 1e-4,
        ..BenchConfig::default()
    };
    let rows = run_matrix(&cfg).unwrap();
    assert_eq!(rows[0].status, CellStatus::Timeout);
    assert!(rows[0].csv_record()[4] == "timeout");
}

#[test]
fn helpers() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    assert_eq!(median(&[]), None);
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let cubic: Vec<f64> = xs.iter().map(|x: &f64| 2.0 + x.powi(3)).collect();
    let fit = poly_fit(&xs, &cubic, 3).unwrap();
    assert!((fit.r_squared - 1.0).abs() < 1e-9);
    assert!((fit.coeffs[3] - 1.0).abs() < 1e-6);
    let exp: Vec<f64> = xs.iter().map(|x| x.exp2()).collect();
    assert!(log_increments(&exp).iter().all(|d| (d - 2f64.ln()).abs() < 1e-12));
}
