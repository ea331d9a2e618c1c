//! In-memory knowledge bases: classes, instances, attribute declarations and
//! their local probability models, plus type checking and the dependency
//! graph used to establish that a KB defines a unique distribution.

mod graph;
mod index;
mod types;
mod validate;

use std::collections::BTreeMap;

pub use graph::{build_dependency_graph, DepNode, DependencyGraph};
pub use index::{Filler, KbIndex, ObjectModel};
pub use types::*;
pub use validate::{validate_kb, Diagnostic, DiagnosticCode, ValidationReport, CPT_ROW_TOLERANCE};

/// Flattened attribute map of an object after inheritance and overrides.
pub type EffectiveModel = BTreeMap<String, AttributeDecl>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("`{object}` has no attribute `{attribute}`")]
    UnknownAttribute { object: String, attribute: String },
    #[error("chain `{chain}` is not simple: {reason}")]
    NonSimpleChain { chain: String, reason: String },
    #[error("incompatible override of `{attribute}` in `{object}`: {reason}")]
    IncompatibleOverride {
        object: String,
        attribute: String,
        reason: String,
    },
    #[error("inheritance cycle through class `{0}`")]
    InheritanceCycle(String),
    #[error("instance `{instance}` declares `{attribute}`, which its class does not have")]
    NewAttributeOnInstance { instance: String, attribute: String },
    #[error("knowledge base failed validation:\n{0}")]
    Invalid(ValidationReport),
}

/// Terminal range of a simple chain and the classes visited along it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainResolution {
    pub range: Vec<String>,
    /// Class of the starting object, then `T(A)` for every complex hop.
    pub hops: Vec<String>,
    pub single_valued: bool,
    pub terminal_kind: AttributeKind,
}

/// Superclass chain from the root down to `class`.
pub fn class_lineage<'a>(kb: &'a KnowledgeBase, class: &str) -> Result<Vec<&'a ClassModel>, ModelError> {
    let mut out = Vec::new();
    let mut cur = Some(class);
    while let Some(name) = cur {
        let model = kb
            .classes
            .get(name)
            .ok_or_else(|| ModelError::UnknownClass(name.to_string()))?;
        if out.iter().any(|c: &&ClassModel| c.name == name) {
            return Err(ModelError::InheritanceCycle(name.to_string()));
        }
        out.push(model);
        cur = model.superclass.as_deref();
    }
    out.reverse();
    Ok(out)
}

/// `sub` equals `sup` or inherits from it. Unknown classes are never subclasses.
pub fn is_subclass(kb: &KnowledgeBase, sub: &str, sup: &str) -> bool {
    match class_lineage(kb, sub) {
        Ok(lineage) => lineage.iter().any(|c| c.name == sup),
        Err(_) => false,
    }
}

pub fn class_of<'a>(kb: &'a KnowledgeBase, obj: &'a ObjectRef) -> Result<&'a str, ModelError> {
    match obj {
        ObjectRef::Class(c) => {
            if kb.classes.contains_key(c) {
                Ok(c)
            } else {
                Err(ModelError::UnknownClass(c.clone()))
            }
        }
        ObjectRef::Instance(i) => kb
            .instances
            .get(i)
            .map(|m| m.class.as_str())
            .ok_or_else(|| ModelError::UnknownInstance(i.clone())),
    }
}

fn check_override(
    kb: &KnowledgeBase,
    object: &str,
    attribute: &str,
    old: &AttributeDecl,
    new: &AttributeDecl,
) -> Result<(), ModelError> {
    let fail = |reason: String| ModelError::IncompatibleOverride {
        object: object.to_string(),
        attribute: attribute.to_string(),
        reason,
    };
    if old.kind() != new.kind() {
        return Err(fail(format!("{} attribute redeclared as {}", old.kind(), new.kind())));
    }
    match (old, new) {
        (AttributeDecl::Simple(a), AttributeDecl::Simple(b)) if a.range != b.range => Err(fail(format!(
            "range {:?} differs from inherited {:?}",
            b.range, a.range
        ))),
        (AttributeDecl::Complex(a), AttributeDecl::Complex(b)) => {
            if a.cardinality != b.cardinality {
                Err(fail("cardinality differs from inherited declaration".into()))
            } else if a.inverse != b.inverse {
                Err(fail("inverse differs from inherited declaration".into()))
            } else if !is_subclass(kb, &b.ty, &a.ty) {
                Err(fail(format!("type `{}` is not a subclass of `{}`", b.ty, a.ty)))
            } else {
                Ok(())
            }
        }
        (AttributeDecl::Quantifier(a), AttributeDecl::Quantifier(b)) if a.over != b.over => {
            Err(fail("quantifier ranges over a different attribute".into()))
        }
        (AttributeDecl::Number(a), AttributeDecl::Number(b)) if a.over != b.over => {
            Err(fail("number attribute counts a different attribute".into()))
        }
        (AttributeDecl::Reference(a), AttributeDecl::Reference(b)) if a.over != b.over || a.choices != b.choices => {
            Err(fail("reference attribute range differs from inherited".into()))
        }
        _ => Ok(()),
    }
}

/// Inheritance-flattened attribute map: superclass declarations merged with
/// subclass (and instance) overrides, the most specific declaration winning.
pub fn effective_model(kb: &KnowledgeBase, object: &ObjectRef) -> Result<EffectiveModel, ModelError> {
    let class = class_of(kb, object)?;
    let mut model = EffectiveModel::new();
    for c in class_lineage(kb, class)? {
        for (name, decl) in &c.attributes {
            if let Some(prev) = model.get(name) {
                check_override(kb, &c.name, name, prev, decl)?;
            }
            model.insert(name.clone(), decl.clone());
        }
    }
    if let ObjectRef::Instance(i) = object {
        let inst = &kb.instances[i];
        for (name, decl) in &inst.overrides {
            let prev = model.get(name).ok_or_else(|| ModelError::NewAttributeOnInstance {
                instance: i.clone(),
                attribute: name.clone(),
            })?;
            check_override(kb, i, name, prev, decl)?;
            model.insert(name.clone(), decl.clone());
        }
    }
    Ok(model)
}

/// Range of a value-bearing attribute within `model`; `None` for complex
/// attributes or when a quantifier/number refers to a missing attribute.
pub fn value_range(model: &EffectiveModel, decl: &AttributeDecl) -> Option<Vec<String>> {
    let count_range = |over: &str| match model.get(over) {
        Some(AttributeDecl::Complex(ComplexAttr {
            cardinality: Cardinality::Multi(n),
            ..
        })) => Some((0..=*n).map(|k| k.to_string()).collect()),
        _ => None,
    };
    match decl {
        AttributeDecl::Simple(s) => Some(s.range.clone()),
        AttributeDecl::Complex(_) => None,
        AttributeDecl::Quantifier(q) => count_range(&q.over),
        AttributeDecl::Number(n) => count_range(&n.over),
        AttributeDecl::Reference(r) => Some(r.choices.iter().map(|c| c.label().to_string()).collect()),
    }
}

/// Shared chain walk; `model_of` supplies effective models so callers can
/// plug in a cache.
pub(crate) fn resolve_with<F>(
    start: &ObjectRef,
    start_class: &str,
    chain: &AttributeChain,
    model_of: F,
) -> Result<ChainResolution, ModelError>
where
    F: Fn(&ObjectRef) -> Result<std::sync::Arc<EffectiveModel>, ModelError>,
{
    let mut hops = vec![start_class.to_string()];
    let mut current = start.clone();
    let segs = chain.segments();
    for (i, seg) in segs.iter().enumerate() {
        let model = model_of(&current)?;
        let decl = model.get(seg).ok_or_else(|| ModelError::UnknownAttribute {
            object: current.name().to_string(),
            attribute: seg.clone(),
        })?;
        let last = i + 1 == segs.len();
        let non_simple = |reason: &str| ModelError::NonSimpleChain {
            chain: chain.to_string(),
            reason: reason.to_string(),
        };
        match decl {
            AttributeDecl::Complex(c) if !last => {
                if c.cardinality.is_multi() {
                    return Err(non_simple(&format!("`{seg}` is multi-valued")));
                }
                hops.push(c.ty.clone());
                current = ObjectRef::Class(c.ty.clone());
            }
            AttributeDecl::Complex(_) => {
                return Err(non_simple(&format!("terminal `{seg}` is a complex attribute")));
            }
            _ if !last => {
                return Err(non_simple(&format!("interior `{seg}` is not a complex attribute")));
            }
            value => {
                let range = value_range(&model, value).ok_or_else(|| ModelError::UnknownAttribute {
                    object: current.name().to_string(),
                    attribute: seg.clone(),
                })?;
                return Ok(ChainResolution {
                    range,
                    hops,
                    single_valued: true,
                    terminal_kind: value.kind(),
                });
            }
        }
    }
    unreachable!("loop returns on the last segment")
}

/// Type-check `chain` from `start`: interior hops must be single-valued
/// complex attributes and the final segment value-bearing.
pub fn resolve_chain(
    kb: &KnowledgeBase,
    start: &ObjectRef,
    chain: &AttributeChain,
) -> Result<ChainResolution, ModelError> {
    let start_class = class_of(kb, start)?.to_string();
    resolve_with(start, &start_class, chain, |obj| {
        effective_model(kb, obj).map(std::sync::Arc::new)
    })
}
