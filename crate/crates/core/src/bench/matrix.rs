use std::fmt;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::battlespace::{generate, BattalionShape, GROUP_KINDS};
use crate::bn::{triangulation_stats, BnError, VeOptions};
use crate::kbmc::{KbmcEngine, KbmcOptions};
use crate::lang::{parse_kb, parse_query};
use crate::model::KbIndex;
use crate::par;
use crate::session::Backend;
use crate::structured::{StructuredEngine, StructuredOptions};
use crate::InferenceError;

pub const CSV_HEADER: [&str; 8] = [
    "backend",
    "reuse",
    "qmode",
    "units",
    "seconds",
    "max_clique",
    "cache_hits",
    "cache_misses",
];

/// Query timed in every cell.
pub const DEFAULT_PROBE: &str = "battalion-charlie.current-activity | battalion-charlie.under-fire = heavy";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantifierMode {
    #[default]
    Combinatoric,
    Naive,
}

impl fmt::Display for QuantifierMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantifierMode::Combinatoric => "combinatoric",
            QuantifierMode::Naive => "naive",
        })
    }
}

/// One backend configuration. `reuse` and `qmode` only apply to the
/// structured backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub backend: Backend,
    #[serde(default = "yes")]
    pub reuse: bool,
    #[serde(default)]
    pub qmode: QuantifierMode,
}

fn yes() -> bool {
    true
}

impl CellSpec {
    pub fn kbmc() -> Self {
        Self {
            backend: Backend::Kbmc,
            reuse: false,
            qmode: QuantifierMode::Naive,
        }
    }

    pub fn structured(reuse: bool, qmode: QuantifierMode) -> Self {
        Self {
            backend: Backend::Structured,
            reuse,
            qmode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct BenchConfig {
    /// Units per group, one fixture per entry.
    pub units: Vec<usize>,
    pub batteries: usize,
    pub groups: usize,
    pub cells: Vec<CellSpec>,
    pub repetitions: usize,
    /// Wall-clock budget for all repetitions of one cell.
    pub budget_seconds: f64,
    pub probe: String,
    /// Run cells concurrently on isolated engines.
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            units: (1..=9).collect(),
            batteries: 4,
            groups: GROUP_KINDS.len(),
            cells: vec![
                CellSpec::structured(true, QuantifierMode::Combinatoric),
                CellSpec::structured(false, QuantifierMode::Combinatoric),
                CellSpec::kbmc(),
                CellSpec::structured(true, QuantifierMode::Naive),
            ],
            repetitions: 5,
            budget_seconds: 60.0,
            probe: DEFAULT_PROBE.to_string(),
            parallel: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchConfigError {
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error("invalid bench config: {0}")]
    Invalid(String),
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchConfigError> {
        let cfg: BenchConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchConfigError> {
        let bad = |m: &str| Err(BenchConfigError::Invalid(m.to_string()));
        if self.units.is_empty() || self.units.contains(&0) {
            return bad("units must be a nonempty list of positive counts");
        }
        if self.batteries == 0 {
            return bad("batteries must be at least 1");
        }
        if self.groups == 0 || self.groups > GROUP_KINDS.len() {
            return bad(&format!("groups must be in 1..={}", GROUP_KINDS.len()));
        }
        if self.cells.is_empty() {
            return bad("cells must be nonempty");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.budget_seconds.is_nan() || self.budget_seconds <= 0.0 {
            return bad("budget-seconds must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "detail")]
pub enum CellStatus {
    Ok,
    Timeout,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub cell: CellSpec,
    pub units: usize,
    pub status: CellStatus,
    /// Median wall time of the completed repetitions.
    pub seconds: Option<f64>,
    pub samples: Vec<f64>,
    pub max_clique: Option<usize>,
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// Probe posterior of the first repetition.
    pub posterior: Option<Vec<f64>>,
}

impl BenchRow {
    pub fn csv_record(&self) -> [String; 8] {
        let structured = self.cell.backend == Backend::Structured;
        let opt = |on: bool, s: String| if on { s } else { "-".to_string() };
        let seconds = match (&self.status, self.seconds) {
            (CellStatus::Ok, Some(s)) => format!("{s:.6}"),
            (CellStatus::Timeout, _) => "timeout".to_string(),
            _ => "error".to_string(),
        };
        [
            self.cell.backend.to_string(),
            opt(structured, self.cell.reuse.to_string()),
            opt(structured, self.cell.qmode.to_string()),
            self.units.to_string(),
            seconds,
            self.max_clique.map_or_else(|| "-".to_string(), |c| c.to_string()),
            self.cache_hits.to_string(),
            self.cache_misses.to_string(),
        ]
    }
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    })
}

struct Fixture {
    units: usize,
    index: Arc<KbIndex>,
}

/// Time every (cell, units) pair. Each repetition runs on a fresh engine so
/// the structured cache only helps within one query.
pub fn run_matrix(cfg: &BenchConfig) -> Result<Vec<BenchRow>, BenchConfigError> {
    cfg.validate()?;
    let fixtures: Vec<Fixture> = cfg
        .units
        .iter()
        .map(|&u| {
            let shape = BattalionShape {
                groups: cfg.groups,
                ..BattalionShape::new(u, cfg.batteries)
            };
            let kb = parse_kb(&generate(&shape)).expect("generated fixture parses");
            Fixture {
                units: u,
                index: Arc::new(KbIndex::new(kb).expect("generated fixture validates")),
            }
        })
        .collect();
    let jobs: Vec<(&Fixture, CellSpec)> = fixtures
        .iter()
        .flat_map(|f| cfg.cells.iter().map(move |c| (f, *c)))
        .collect();
    let run = |(f, c): &(&Fixture, CellSpec)| run_cell(cfg, f, *c);
    Ok(if cfg.parallel {
        par::map(&jobs, run)
    } else {
        jobs.iter().map(run).collect()
    })
}

struct Outcome {
    posterior: Vec<f64>,
    max_clique: usize,
    hits: u64,
    misses: u64,
}

fn run_cell(cfg: &BenchConfig, f: &Fixture, cell: CellSpec) -> BenchRow {
    let mut row = BenchRow {
        cell,
        units: f.units,
        status: CellStatus::Ok,
        seconds: None,
        samples: Vec::with_capacity(cfg.repetitions),
        max_clique: None,
        cache_hits: 0,
        cache_misses: 0,
        posterior: None,
    };
    let q = match parse_query(&cfg.probe, &f.index) {
        Ok(q) => q,
        Err(e) => {
            row.status = CellStatus::Failed(e.to_string());
            return row;
        }
    };
    let budget = Duration::from_secs_f64(cfg.budget_seconds);
    let start = Instant::now();
    for rep in 0..cfg.repetitions {
        let ve = VeOptions {
            deadline: Some(start + budget),
            ..VeOptions::default()
        };
        let t = Instant::now();
        let outcome = match cell.backend {
            Backend::Kbmc => run_kbmc(&f.index, &q, ve),
            Backend::Structured => run_structured(&f.index, &q, ve, cell),
        };
        let elapsed = t.elapsed().as_secs_f64();
        match outcome {
            Ok(_) if start.elapsed() > budget => {
                row.status = CellStatus::Timeout;
                break;
            }
            Ok(o) => {
                row.samples.push(elapsed);
                if rep == 0 {
                    // The flat clique is measured outside the timed query.
                    row.max_clique = match cell.backend {
                        Backend::Kbmc => flat_max_clique(&f.index).ok(),
                        Backend::Structured => Some(o.max_clique),
                    };
                    row.cache_hits = o.hits;
                    row.cache_misses = o.misses;
                    row.posterior = Some(o.posterior);
                }
            }
            Err(InferenceError::Bn(BnError::Deadline)) => {
                row.status = CellStatus::Timeout;
                break;
            }
            Err(e) => {
                row.status = CellStatus::Failed(e.to_string());
                break;
            }
        }
    }
    if row.status == CellStatus::Ok {
        row.seconds = median(&row.samples);
    }
    row
}

type RunResult = Result<Outcome, InferenceError>;

fn run_kbmc(index: &Arc<KbIndex>, q: &crate::query::QueryExpr, ve: VeOptions) -> RunResult {
    let engine = KbmcEngine::new(
        index.clone(),
        KbmcOptions {
            ve,
            ..KbmcOptions::default()
        },
    );
    let (r, _) = engine.query(q)?;
    Ok(Outcome {
        posterior: r.joint,
        max_clique: 0,
        hits: 0,
        misses: 0,
    })
}

fn run_structured(index: &Arc<KbIndex>, q: &crate::query::QueryExpr, ve: VeOptions, cell: CellSpec) -> RunResult {
    let engine = StructuredEngine::new(
        index.clone(),
        StructuredOptions {
            reuse: cell.reuse,
            naive_quantifiers: cell.qmode == QuantifierMode::Naive,
            ve,
            ..StructuredOptions::default()
        },
    );
    let (r, stats) = engine.query(q)?;
    Ok(Outcome {
        posterior: r.joint,
        max_clique: stats.max_local_clique,
        hits: stats.cache.hits,
        misses: stats.cache.misses,
    })
}

/// Max clique of the whole flat grounding of `index`.
pub fn flat_max_clique(index: &Arc<KbIndex>) -> Result<usize, InferenceError> {
    let g = KbmcEngine::new(index.clone(), KbmcOptions::default()).grounding()?;
    Ok(triangulation_stats(g.network()).max_clique)
}

/// Least-squares polynomial fit `y ≈ Σ c_i x^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyFit {
    /// Coefficients, constant term first.
    pub coeffs: Vec<f64>,
    pub r_squared: f64,
}

pub fn poly_fit(xs: &[f64], ys: &[f64], degree: usize) -> Option<PolyFit> {
    if xs.len() != ys.len() || xs.len() <= degree {
        return None;
    }
    let a = nalgebra::DMatrix::from_fn(xs.len(), degree + 1, |r, c| xs[r].powi(c as i32));
    let b = nalgebra::DVector::from_column_slice(ys);
    let coeffs = a.clone().svd(true, true).solve(&b, 1e-14).ok()?;
    let fitted = &a * &coeffs;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res: f64 = ys.iter().zip(fitted.iter()).map(|(y, f)| (y - f).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(PolyFit {
        coeffs: coeffs.iter().copied().collect(),
        r_squared,
    })
}

/// Successive differences of `ln y`.
pub fn log_increments(ys: &[f64]) -> Vec<f64> {
    ys.windows(2).map(|w| w[1].ln() - w[0].ln()).collect()
}
