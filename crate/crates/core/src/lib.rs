//! Probabilistic object-oriented knowledge bases.
//!
//! A knowledge base ([`model::KnowledgeBase`]) holds classes with local
//! probability models, named instances and assertions. Queries are answered
//! either by grounding the whole KB into one flat Bayesian network
//! ([`kbmc`]) or by the recursive object-based algorithm ([`structured`]),
//! which summarizes each related object over a small interface and reuses
//! those summaries across objects of the same class.

pub mod bench;
pub mod bn;
mod error;
pub mod kbmc;
pub mod lang;
pub mod model;
pub mod par;
pub mod query;
pub mod session;
pub mod structured;

pub use error::InferenceError;
