use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use spook::lang::SourceKb;
use spook::query::ChainRef;
use spook::session::{Backend, HistoryEntry, SessionError, Workspace};

const HELP: &str = "\
commands:
  load <path>                  load a knowledge base and open a session on it
  observe <inst.attr> = <val>  add evidence
  retract <inst.attr>          drop evidence
  evidence                     list current evidence
  query <inst.attr> ...        posterior over the targets given the evidence
  history                      past queries of this session
  stats                        structured-engine cache counters
  backend [structured|kbmc]    show or switch the inference backend
  help                         this text
  quit                         leave";

/// Line-oriented front end over one session at a time.
pub struct Repl {
    ws: Arc<Workspace>,
    session: Option<String>,
    backend: Backend,
}

/// What the REPL does after one line.
#[derive(Debug, PartialEq)]
pub enum Step {
    Continue(String),
    Quit,
}

impl Repl {
    pub fn new(ws: Arc<Workspace>, backend: Backend) -> Self {
        Self {
            ws,
            session: None,
            backend,
        }
    }

    /// Loads `source` and opens a fresh session on it.
    pub fn load(&mut self, source: SourceKb) -> Result<String, SessionError> {
        let kb = self.ws.load_kb(source)?;
        let sid = self.ws.create_session(&kb.id, self.backend)?;
        let parsed = kb.index.kb();
        let msg = format!(
            "loaded {} as {} ({} classes, {} instances), session {sid}",
            kb.source.provenance,
            kb.id,
            parsed.classes.len(),
            parsed.instances.len()
        );
        self.session = Some(sid);
        Ok(msg)
    }

    /// Reads commands until `quit` or end of input. Errors are printed and do
    /// not end the loop.
    pub fn run(&mut self, input: impl BufRead, mut out: impl Write, prompt: bool) -> io::Result<()> {
        let mut lines = input.lines();
        loop {
            if prompt {
                write!(out, "spook> ")?;
                out.flush()?;
            }
            let Some(line) = lines.next() else { break };
            match self.execute(&line?) {
                Ok(Step::Quit) => break,
                Ok(Step::Continue(text)) if text.is_empty() => {}
                Ok(Step::Continue(text)) => writeln!(out, "{text}")?,
                Err(e) => writeln!(out, "error: {e}")?,
            }
        }
        Ok(())
    }

    pub fn execute(&mut self, line: &str) -> Result<Step, String> {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return Ok(Step::Continue(String::new()));
        }
        let (cmd, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let text = match cmd {
            "quit" | "exit" => return Ok(Step::Quit),
            "help" => HELP.to_string(),
            "load" => {
                if rest.is_empty() {
                    return Err("usage: load <path>".into());
                }
                let text = std::fs::read_to_string(rest).map_err(|e| format!("{rest}: {e}"))?;
                self.load(SourceKb::new(text, rest)).map_err(|e| e.to_string())?
            }
            "backend" => {
                if !rest.is_empty() {
                    self.backend = rest.parse()?;
                    if let Some(sid) = &self.session {
                        self.ws.session(sid).map_err(|e| e.to_string())?.lock().backend = self.backend;
                    }
                }
                format!("backend {}", self.backend)
            }
            "observe" => {
                let (target, value) = rest.split_once('=').ok_or("usage: observe <inst.attr> = <value>")?;
                let t = chain(target.trim())?;
                let session = self.current()?;
                let mut s = session.lock();
                let ev = s.observe(t, value.trim()).map_err(|e| e.to_string())?;
                format!("{} observation(s)", ev.len())
            }
            "retract" => {
                let t = chain(rest)?;
                let session = self.current()?;
                let mut s = session.lock();
                let ev = s.retract(&t).map_err(|e| e.to_string())?;
                format!("{} observation(s)", ev.len())
            }
            "evidence" => {
                let session = self.current()?;
                let s = session.lock();
                s.evidence()
                    .iter()
                    .map(|o| format!("{} = {}", o.target, o.value))
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            "query" => {
                let targets = rest
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(chain)
                    .collect::<Result<Vec<_>, _>>()?;
                if targets.is_empty() {
                    return Err("usage: query <inst.attr> ...".into());
                }
                let session = self.current()?;
                let entry = session.lock().query(targets).map_err(|e| e.to_string())?;
                render(&entry)
            }
            "history" => {
                let session = self.current()?;
                let s = session.lock();
                s.history()
                    .iter()
                    .enumerate()
                    .map(|(i, h)| format!("[{}] {} ({}, {:.3} ms)", i + 1, h.query, h.backend, h.seconds * 1e3))
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            "stats" => {
                let session = self.current()?;
                let c = session.lock().kb.cache_stats();
                format!("cache hits {} misses {} entries {}", c.hits, c.misses, c.entries)
            }
            other => return Err(format!("unknown command `{other}` (try `help`)")),
        };
        Ok(Step::Continue(text))
    }

    fn current(&self) -> Result<Arc<parking_lot::Mutex<spook::session::Session>>, String> {
        let sid = self
            .session
            .as_ref()
            .ok_or("no knowledge base loaded (use `load <path>`)")?;
        self.ws.session(sid).map_err(|e| e.to_string())
    }
}

fn chain(text: &str) -> Result<ChainRef, String> {
    ChainRef::parse(text).ok_or_else(|| format!("`{text}` is not of the form instance.attribute"))
}

/// Marginal of every target, one `value: p` line each.
pub fn render(entry: &HistoryEntry) -> String {
    let mut out = String::new();
    for (i, t) in entry.result.targets.iter().enumerate() {
        let _ = writeln!(out, "{t}");
        for (v, p) in entry.result.ranges[i].iter().zip(entry.result.marginal(i)) {
            let _ = writeln!(out, "  {v}: {p:.6}");
        }
    }
    out.pop();
    out
}
