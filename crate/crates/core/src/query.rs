//! Query expressions and results shared by both backends.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::AttributeChain;

/// `instance.chain`, the form every user-visible variable takes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChainRef {
    pub instance: String,
    pub chain: AttributeChain,
}

impl ChainRef {
    pub fn new(instance: impl Into<String>, chain: AttributeChain) -> Self {
        Self {
            instance: instance.into(),
            chain,
        }
    }

    /// Parse `instance.a.b`; `None` without at least one attribute.
    pub fn parse(text: &str) -> Option<Self> {
        let (inst, rest) = text.split_once('.')?;
        Some(Self::new(inst, rest.parse().ok()?))
    }
}

impl fmt::Display for ChainRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.instance, self.chain)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub target: ChainRef,
    pub value: String,
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.target, self.value)
    }
}

/// `query T1, T2 | E1 = v1, E2 = v2`
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryExpr {
    pub targets: Vec<ChainRef>,
    pub evidence: Vec<Observation>,
}

impl QueryExpr {
    pub fn target(target: ChainRef) -> Self {
        Self {
            targets: vec![target],
            evidence: Vec::new(),
        }
    }

    pub fn given(mut self, target: ChainRef, value: impl Into<String>) -> Self {
        self.evidence.push(Observation {
            target,
            value: value.into(),
        });
        self
    }
}

impl fmt::Display for QueryExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("query ")?;
        for (i, t) in self.targets.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        if !self.evidence.is_empty() {
            f.write_str(" | ")?;
            for (i, e) in self.evidence.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{e}")?;
            }
        }
        Ok(())
    }
}

/// Normalized joint posterior over the query targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub targets: Vec<ChainRef>,
    pub ranges: Vec<Vec<String>>,
    /// Row-major over `targets`, first target most significant.
    pub joint: Vec<f64>,
}

impl QueryResult {
    /// Marginal distribution of the `i`-th target.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        let sizes: Vec<usize> = self.ranges.iter().map(Vec::len).collect();
        let stride: usize = sizes[i + 1..].iter().product();
        let mut out = vec![0.0; sizes[i]];
        for (idx, p) in self.joint.iter().enumerate() {
            out[(idx / stride) % sizes[i]] += p;
        }
        out
    }

    /// `P(target_i = value)`, or `None` for a value outside the range.
    pub fn probability(&self, i: usize, value: &str) -> Option<f64> {
        let pos = self.ranges[i].iter().position(|v| v == value)?;
        Some(self.marginal(i)[pos])
    }

    pub fn max_abs_diff(&self, other: &QueryResult) -> f64 {
        assert_eq!(self.joint.len(), other.joint.len(), "result shapes differ");
        self.joint
            .iter()
            .zip(&other.joint)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
