//! The `.spook` text format: knowledge-base parser and serializer, and the
//! query-expression parser.
//!
//! ```text
//! class Battery {
//!   complex in-battalion : Battalion inverse has-battery
//!   simple hit {false, true} parents(in-battalion.under-fire) cpd [0.95, 0.05; 0.8, 0.2; 0.5, 0.5]
//! }
//! instance battery-1 : Battery
//! assert battery-1.in-battalion = battalion-charlie
//! ```

mod lexer;
mod parser;
mod serialize;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

pub use lexer::Location;
pub use serialize::serialize_kb;

use crate::model::{KbIndex, KnowledgeBase, ModelError, ObjectRef, ValidationReport};
use crate::query::{ChainRef, Observation, QueryExpr};
use lexer::Tok;
use parser::Parser;

/// Document text plus where it came from (a path or `<repl>`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceKb {
    pub text: String,
    pub provenance: String,
}

impl SourceKb {
    pub fn new(text: impl Into<String>, provenance: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            provenance: provenance.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LangErrorKind {
    Syntax,
    DuplicateName,
    UnknownReference,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{file}:{loc}: {message}")]
pub struct LangError {
    pub kind: LangErrorKind,
    pub file: String,
    pub loc: Location,
    pub message: String,
}

impl LangError {
    pub(crate) fn new(kind: LangErrorKind, file: &str, loc: Location, message: impl Into<String>) -> Self {
        Self {
            kind,
            file: file.to_string(),
            loc,
            message: message.into(),
        }
    }
}

/// Source locations of declarations: `(object, None)` for a class or
/// instance, `(object, Some(attribute))` for an attribute in its block.
pub type SpanTable = BTreeMap<(String, Option<String>), Location>;

/// Parse a document. Names may be used before they are declared.
pub fn parse_kb(src: &SourceKb) -> Result<KnowledgeBase, LangError> {
    parse_kb_with_spans(src).map(|(kb, _)| kb)
}

pub fn parse_kb_with_spans(src: &SourceKb) -> Result<(KnowledgeBase, SpanTable), LangError> {
    Parser::new(&src.text, &src.provenance)?.document()
}

/// A validation diagnostic rendered as `file:line:col: message`, using the
/// location of the offending declaration when known.
pub fn locate_diagnostics(report: &ValidationReport, spans: &SpanTable, file: &str) -> Vec<String> {
    report
        .diagnostics
        .iter()
        .map(|d| {
            let loc = d
                .object
                .as_ref()
                .and_then(|o| {
                    spans
                        .get(&(o.clone(), d.attribute.clone()))
                        .or_else(|| spans.get(&(o.clone(), None)))
                })
                .copied()
                .unwrap_or(Location { line: 1, col: 1 });
            format!("{file}:{loc}: {d}")
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error(transparent)]
    Syntax(#[from] LangError),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("{0}")]
    NonSimpleChain(ModelError),
    #[error("value `{value}` is not in the range of `{target}` ({})", range.join(", "))]
    BadValue {
        target: String,
        value: String,
        range: Vec<String>,
    },
}

/// Check that `target` names a simple chain on a named instance and return
/// its range.
pub fn resolve_target(index: &KbIndex, target: &ChainRef) -> Result<Vec<String>, QueryError> {
    if index.instance_model(&target.instance).is_none() {
        return Err(QueryError::UnknownInstance(target.instance.clone()));
    }
    index
        .resolve(&ObjectRef::Instance(target.instance.clone()), &target.chain)
        .map(|r| r.range)
        .map_err(QueryError::NonSimpleChain)
}

pub fn check_observation(index: &KbIndex, obs: &Observation) -> Result<usize, QueryError> {
    let range = resolve_target(index, &obs.target)?;
    range
        .iter()
        .position(|v| *v == obs.value)
        .ok_or_else(|| QueryError::BadValue {
            target: obs.target.to_string(),
            value: obs.value.clone(),
            range,
        })
}

/// Parse `[query] I.σ, … [| J.ρ = v, …]` and type-check it against `index`.
pub fn parse_query(text: &str, index: &KbIndex) -> Result<QueryExpr, QueryError> {
    let expr = parse_query_syntax(text)?;
    for t in &expr.targets {
        resolve_target(index, t)?;
    }
    for e in &expr.evidence {
        check_observation(index, e)?;
    }
    Ok(expr)
}

/// Syntax-only query parsing, without name resolution.
pub fn parse_query_syntax(text: &str) -> Result<QueryExpr, LangError> {
    let mut p = Parser::new(text, "<query>")?;
    p.eat_keyword("query");
    let mut expr = QueryExpr::default();
    loop {
        expr.targets.push(chain_ref(&mut p)?);
        if !p.eat_punct(',') {
            break;
        }
    }
    if p.eat_punct('|') {
        loop {
            let target = chain_ref(&mut p)?;
            p.expect_punct('=')?;
            let value = p.symbol("value")?;
            expr.evidence.push(Observation { target, value });
            if !p.eat_punct(',') {
                break;
            }
        }
    }
    if !p.at_eof() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(expr)
}

fn chain_ref(p: &mut Parser<'_>) -> Result<ChainRef, LangError> {
    let (instance, _) = p.ident("instance name")?;
    if !matches!(p.peek_tok(0), Tok::Punct('.')) {
        return Err(p.error(format!("expected `.attribute` after `{instance}`")));
    }
    p.expect_punct('.')?;
    let chain = p.chain()?;
    Ok(ChainRef { instance, chain })
}

impl fmt::Display for SourceKb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}
