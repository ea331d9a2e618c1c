use std::fs;
use std::io::{self, IsTerminal};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use spook::bench::{generate, run_matrix, write_csv, BattalionShape, BenchConfig, CellStatus};
use spook::bn::dump_network;
use spook::kbmc::{KbmcEngine, KbmcOptions};
use spook::lang::{parse_kb, parse_query, serialize_kb, SourceKb};
use spook::model::KbIndex;
use spook::query::QueryResult;
use spook::session::{Backend, LoadedKb, SessionError, Workspace};
use spook::structured::{StructuredEngine, StructuredOptions};
use spook_service::Repl;

#[derive(Parser)]
#[command(name = "spook", version, about = "Object-oriented probabilistic knowledge bases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a knowledge base.
    Check { file: PathBuf },
    /// Print a knowledge base in canonical form.
    Fmt {
        file: PathBuf,
        /// Rewrite the file in place instead of printing it.
        #[arg(long)]
        write: bool,
    },
    /// Answer one query, e.g. "i.a, i.b | i.c = v".
    Query {
        file: PathBuf,
        query: String,
        #[arg(long, default_value = "structured")]
        backend: Backend,
        /// Disable the subquery cache (structured backend).
        #[arg(long)]
        no_reuse: bool,
        /// Expand multi-valued attributes slot by slot (structured backend).
        #[arg(long)]
        naive_quantifiers: bool,
        /// Print engine counters after the answer.
        #[arg(long)]
        stats: bool,
        /// Write the grounded network of the query to this file.
        #[arg(long, value_name = "PATH")]
        dump_bn: Option<PathBuf>,
    },
    /// Run the backend x size timing matrix and write CSV.
    Bench {
        /// TOML matrix configuration; defaults are used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run cells concurrently on isolated engines.
        #[arg(long)]
        parallel: bool,
    },
    /// Print a generated battlespace knowledge base.
    Generate {
        #[arg(long, default_value_t = 1)]
        units: usize,
        #[arg(long, default_value_t = 4)]
        batteries: usize,
        #[arg(long, default_value_t = 11)]
        groups: usize,
    },
    /// Interactive session; optionally preloads a knowledge base.
    Repl {
        file: Option<PathBuf>,
        #[arg(long, default_value = "structured")]
        backend: Backend,
    },
    /// HTTP/JSON service; preloaded knowledge bases get ids kb-1, kb-2, ...
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        files: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(lines) => {
            for l in lines {
                eprintln!("{l}");
            }
            ExitCode::FAILURE
        }
    }
}

type CliResult = Result<(), Vec<String>>;

fn fail(msg: impl ToString) -> Vec<String> {
    vec![msg.to_string()]
}

fn read(path: &Path) -> Result<SourceKb, Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    Ok(SourceKb::new(text, path.display().to_string()))
}

fn diagnostics(e: SessionError) -> Vec<String> {
    match e {
        SessionError::Invalid(lines) => lines,
        other => fail(other),
    }
}

fn load(path: &Path) -> Result<LoadedKb, Vec<String>> {
    LoadedKb::load("kb", read(path)?).map_err(diagnostics)
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Check { file } => {
            let kb = load(&file)?;
            let parsed = kb.index.kb();
            println!(
                "{}: ok ({} classes, {} instances)",
                file.display(),
                parsed.classes.len(),
                parsed.instances.len()
            );
            Ok(())
        }
        Command::Fmt { file, write } => {
            let kb = parse_kb(&read(&file)?).map_err(fail)?;
            let text = serialize_kb(&kb);
            if write {
                fs::write(&file, text).map_err(|e| fail(format!("{}: {e}", file.display())))
            } else {
                print!("{text}");
                Ok(())
            }
        }
        Command::Query {
            file,
            query,
            backend,
            no_reuse,
            naive_quantifiers,
            stats,
            dump_bn,
        } => {
            let index = load(&file)?.index;
            let q = parse_query(&query, &index).map_err(fail)?;
            if let Some(path) = dump_bn {
                let (g, _, _) = KbmcEngine::new(index.clone(), KbmcOptions::default())
                    .prepare(&q)
                    .map_err(fail)?;
                fs::write(&path, dump_network(g.network())).map_err(|e| fail(format!("{}: {e}", path.display())))?;
            }
            let opts = StructuredOptions {
                reuse: !no_reuse,
                naive_quantifiers,
                ..StructuredOptions::default()
            };
            let (result, counters) = answer(index, backend, opts, &q).map_err(fail)?;
            print!("{}", render(&result));
            if stats {
                println!("{counters}");
            }
            Ok(())
        }
        Command::Bench { config, out, parallel } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
                    BenchConfig::from_toml(&text).map_err(|e| fail(format!("{}: {e}", path.display())))?
                }
                None => BenchConfig::default(),
            };
            cfg.parallel |= parallel;
            let rows = run_matrix(&cfg).map_err(fail)?;
            for r in &rows {
                let cell = r.csv_record();
                let status = match &r.status {
                    CellStatus::Ok => format!("{:.6}s", r.seconds.unwrap_or_default()),
                    CellStatus::Timeout => "timeout".to_string(),
                    CellStatus::Failed(e) => format!("failed: {e}"),
                };
                eprintln!(
                    "{} reuse={} qmode={} units={}: {status}",
                    cell[0], cell[1], cell[2], cell[3]
                );
            }
            match out {
                Some(path) => {
                    let f = fs::File::create(&path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
                    write_csv(&rows, f).map_err(fail)
                }
                None => write_csv(&rows, io::stdout().lock()).map_err(fail),
            }
        }
        Command::Generate {
            units,
            batteries,
            groups,
        } => {
            if units == 0 || batteries == 0 || groups == 0 {
                return Err(fail("--units, --batteries and --groups must be positive"));
            }
            let shape = BattalionShape {
                groups,
                ..BattalionShape::new(units, batteries)
            };
            print!("{}", generate(&shape).text);
            Ok(())
        }
        Command::Repl { file, backend } => {
            let mut repl = Repl::new(Arc::new(Workspace::new()), backend);
            if let Some(path) = file {
                let msg = repl.load(read(&path)?).map_err(diagnostics)?;
                println!("{msg}");
            }
            let stdin = io::stdin();
            let prompt = stdin.is_terminal();
            repl.run(stdin.lock(), io::stdout().lock(), prompt).map_err(fail)
        }
        Command::Serve { addr, files } => {
            let ws = Arc::new(Workspace::new());
            for path in &files {
                let kb = ws.load_kb(read(path)?).map_err(diagnostics)?;
                eprintln!("{} -> {}", path.display(), kb.id);
            }
            let rt = tokio::runtime::Runtime::new().map_err(fail)?;
            eprintln!("listening on http://{addr}");
            rt.block_on(spook_service::serve(ws, addr)).map_err(fail)
        }
    }
}

fn answer(
    index: Arc<KbIndex>,
    backend: Backend,
    opts: StructuredOptions,
    q: &spook::query::QueryExpr,
) -> Result<(QueryResult, String), spook::InferenceError> {
    match backend {
        Backend::Structured => {
            let (r, s) = StructuredEngine::new(index, opts).query(q)?;
            let counters = format!(
                "stats: top-level nodes {}, top-level clique {}, max local clique {}, cache hits {} misses {} entries {}",
                s.top_level_nodes, s.top_level_clique, s.max_local_clique, s.cache.hits, s.cache.misses, s.cache.entries
            );
            Ok((r, counters))
        }
        Backend::Kbmc => {
            let (r, s) = KbmcEngine::new(index, KbmcOptions::default()).query(q)?;
            let counters = format!(
                "stats: grounded nodes {}, max clique {}, factor cells {}",
                s.nodes, s.ve.max_clique, s.ve.cells
            );
            Ok((r, counters))
        }
    }
}

/// Marginal of every target, then the joint when there are several.
fn render(r: &QueryResult) -> String {
    let mut out = String::new();
    for (i, t) in r.targets.iter().enumerate() {
        out.push_str(&format!("{t}\n"));
        for (v, p) in r.ranges[i].iter().zip(r.marginal(i)) {
            out.push_str(&format!("  {v}: {p:.6}\n"));
        }
    }
    if r.targets.len() > 1 {
        out.push_str("joint\n");
        let sizes: Vec<usize> = r.ranges.iter().map(Vec::len).collect();
        for (idx, p) in r.joint.iter().enumerate() {
            let mut rest = idx;
            let mut cells = vec![""; sizes.len()];
            for k in (0..sizes.len()).rev() {
                cells[k] = &r.ranges[k][rest % sizes[k]];
                rest /= sizes[k];
            }
            out.push_str(&format!("  {}: {p:.6}\n", cells.join(", ")));
        }
    }
    out
}
