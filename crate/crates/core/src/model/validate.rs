use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::index::derive_fillers;
use super::{
    build_dependency_graph, class_lineage, effective_model, is_subclass, resolve_chain, value_range, AssertedValue,
    AttributeChain, AttributeDecl, AttributeKind, Cardinality, Cpt, EffectiveModel, KnowledgeBase, ModelError,
    ObjectRef, RefChoice,
};

/// Maximum deviation of a CPT row sum from 1.
pub const CPT_ROW_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticCode {
    UnknownClass,
    UnknownInstance,
    DuplicateName,
    InheritanceCycle,
    IncompatibleOverride,
    TypeError,
    BrokenInverse,
    CptShape,
    CptNormalization,
    BadAssertion,
    DependencyCycle,
    Unsupported,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub object: Option<String>,
    pub attribute: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.object, &self.attribute) {
            (Some(o), Some(a)) => write!(f, "{o}.{a}: {}", self.message),
            (Some(o), None) => write!(f, "{o}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn has(&self, code: DiagnosticCode) -> bool {
        self.diagnostics.iter().any(|d| d.code == code)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.diagnostics.is_empty() {
            return f.write_str("ok");
        }
        for d in &self.diagnostics {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

struct Checker<'a> {
    kb: &'a KnowledgeBase,
    report: ValidationReport,
}

impl Checker<'_> {
    fn push(&mut self, code: DiagnosticCode, object: &str, attribute: Option<&str>, message: impl Into<String>) {
        self.report.diagnostics.push(Diagnostic {
            code,
            object: Some(object.to_string()),
            attribute: attribute.map(str::to_string),
            message: message.into(),
        });
    }

    fn model_error(&mut self, object: &str, err: ModelError) {
        let code = match &err {
            ModelError::UnknownClass(_) => DiagnosticCode::UnknownClass,
            ModelError::UnknownInstance(_) => DiagnosticCode::UnknownInstance,
            ModelError::InheritanceCycle(_) => DiagnosticCode::InheritanceCycle,
            ModelError::IncompatibleOverride { .. } | ModelError::NewAttributeOnInstance { .. } => {
                DiagnosticCode::IncompatibleOverride
            }
            _ => DiagnosticCode::TypeError,
        };
        let attr = match &err {
            ModelError::IncompatibleOverride { attribute, .. }
            | ModelError::NewAttributeOnInstance { attribute, .. } => Some(attribute.clone()),
            _ => None,
        };
        self.push(code, object, attr.as_deref(), err.to_string());
    }

    fn check_cpt(&mut self, obj: &ObjectRef, attr: &str, parents: &[AttributeChain], cpd: &Cpt, width: usize) {
        let mut rows = 1usize;
        for p in parents {
            match resolve_chain(self.kb, obj, p) {
                Ok(r) => rows = rows.saturating_mul(r.range.len()),
                Err(e) => {
                    self.push(
                        DiagnosticCode::TypeError,
                        obj.name(),
                        Some(attr),
                        format!("parent `{p}`: {e}"),
                    );
                    return;
                }
            }
        }
        if cpd.rows.len() != rows {
            self.push(
                DiagnosticCode::CptShape,
                obj.name(),
                Some(attr),
                format!("CPT has {} rows, expected {rows}", cpd.rows.len()),
            );
            return;
        }
        for (i, row) in cpd.rows.iter().enumerate() {
            if row.len() != width {
                self.push(
                    DiagnosticCode::CptShape,
                    obj.name(),
                    Some(attr),
                    format!("CPT row {i} has {} entries, expected {width}", row.len()),
                );
                continue;
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                self.push(
                    DiagnosticCode::CptNormalization,
                    obj.name(),
                    Some(attr),
                    format!("CPT row {i} has a negative or non-finite entry"),
                );
                continue;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > CPT_ROW_TOLERANCE {
                self.push(
                    DiagnosticCode::CptNormalization,
                    obj.name(),
                    Some(attr),
                    format!("CPT row {i} sums to {sum}"),
                );
            }
        }
    }

    fn check_decl(&mut self, obj: &ObjectRef, model: &EffectiveModel, name: &str, decl: &AttributeDecl) {
        let on = obj.name();
        let multi_over = |over: &str| match model.get(over) {
            Some(AttributeDecl::Complex(c)) => Some(c.clone()),
            _ => None,
        };
        match decl {
            AttributeDecl::Simple(s) => {
                let uniq: BTreeSet<_> = s.range.iter().collect();
                if s.range.is_empty() || uniq.len() != s.range.len() {
                    self.push(
                        DiagnosticCode::TypeError,
                        on,
                        Some(name),
                        "range must be nonempty with distinct values",
                    );
                    return;
                }
                self.check_cpt(obj, name, &s.parents, &s.cpd, s.range.len());
            }
            AttributeDecl::Complex(c) => {
                if !self.kb.classes.contains_key(&c.ty) {
                    self.push(
                        DiagnosticCode::UnknownClass,
                        on,
                        Some(name),
                        format!("unknown type `{}`", c.ty),
                    );
                    return;
                }
                if c.cardinality == Cardinality::Multi(0) {
                    self.push(
                        DiagnosticCode::TypeError,
                        on,
                        Some(name),
                        "multi-valued bound must be positive",
                    );
                }
                if let Some(inv) = &c.inverse {
                    let owner_class = match super::class_of(self.kb, obj) {
                        Ok(c) => c.to_string(),
                        Err(_) => return,
                    };
                    match effective_model(self.kb, &ObjectRef::Class(c.ty.clone())) {
                        Ok(target) => match target.get(inv) {
                            Some(AttributeDecl::Complex(back)) => {
                                if back.inverse.as_deref() != Some(name) {
                                    self.push(
                                        DiagnosticCode::BrokenInverse,
                                        on,
                                        Some(name),
                                        format!("`{}.{inv}` does not declare `{name}` as its inverse", c.ty),
                                    );
                                } else if !is_subclass(self.kb, &owner_class, &back.ty) {
                                    self.push(
                                        DiagnosticCode::BrokenInverse,
                                        on,
                                        Some(name),
                                        format!(
                                            "inverse `{}.{inv}` has type `{}`, not a superclass of `{owner_class}`",
                                            c.ty, back.ty
                                        ),
                                    );
                                } else if back.cardinality.is_multi() && c.cardinality.is_multi() {
                                    self.push(
                                        DiagnosticCode::Unsupported,
                                        on,
                                        Some(name),
                                        "many-to-many inverse pairs are not supported",
                                    );
                                }
                            }
                            _ => self.push(
                                DiagnosticCode::BrokenInverse,
                                on,
                                Some(name),
                                format!("inverse `{inv}` is not a complex attribute of `{}`", c.ty),
                            ),
                        },
                        Err(e) => self.model_error(on, e),
                    }
                }
            }
            AttributeDecl::Quantifier(q) => {
                let Some(over) = multi_over(&q.over).filter(|c| c.cardinality.is_multi()) else {
                    self.push(
                        DiagnosticCode::TypeError,
                        on,
                        Some(name),
                        format!("`{}` is not a multi-valued complex attribute", q.over),
                    );
                    return;
                };
                match resolve_chain(self.kb, &ObjectRef::Class(over.ty.clone()), &q.chain) {
                    Ok(r) => {
                        if r.terminal_kind == AttributeKind::Quantifier {
                            self.push(
                                DiagnosticCode::Unsupported,
                                on,
                                Some(name),
                                "quantifiers over quantifiers are not supported",
                            );
                        } else if !r.range.contains(&q.value) {
                            self.push(
                                DiagnosticCode::TypeError,
                                on,
                                Some(name),
                                format!("`{}` is not in the range of `{}`", q.value, q.chain),
                            );
                        }
                    }
                    Err(e) => self.push(
                        DiagnosticCode::TypeError,
                        on,
                        Some(name),
                        format!("chain `{}`: {e}", q.chain),
                    ),
                }
            }
            AttributeDecl::Number(n) => {
                let Some(Cardinality::Multi(bound)) = multi_over(&n.over).map(|c| c.cardinality) else {
                    self.push(
                        DiagnosticCode::TypeError,
                        on,
                        Some(name),
                        format!("`{}` is not a multi-valued complex attribute", n.over),
                    );
                    return;
                };
                let dup = model.iter().any(|(other, d)| {
                    other.as_str() != name && matches!(d, AttributeDecl::Number(m) if m.over == n.over)
                });
                if dup {
                    self.push(
                        DiagnosticCode::TypeError,
                        on,
                        Some(name),
                        format!("`{}` has more than one number attribute", n.over),
                    );
                }
                self.check_cpt(obj, name, &n.parents, &n.cpd, bound + 1);
            }
            AttributeDecl::Reference(r) => {
                let Some(over) = multi_over(&r.over).filter(|c| !c.cardinality.is_multi()) else {
                    self.push(
                        DiagnosticCode::TypeError,
                        on,
                        Some(name),
                        format!("`{}` is not a single-valued complex attribute", r.over),
                    );
                    return;
                };
                if over.inverse.is_some() {
                    self.push(
                        DiagnosticCode::Unsupported,
                        on,
                        Some(name),
                        format!("reference uncertainty over `{}`, which declares an inverse", r.over),
                    );
                }
                let dup = model.iter().any(|(other, d)| {
                    other.as_str() != name && matches!(d, AttributeDecl::Reference(m) if m.over == r.over)
                });
                if dup {
                    self.push(
                        DiagnosticCode::TypeError,
                        on,
                        Some(name),
                        format!("`{}` has more than one reference attribute", r.over),
                    );
                }
                let labels: BTreeSet<_> = r.choices.iter().map(|c| c.label()).collect();
                if r.choices.is_empty() || labels.len() != r.choices.len() {
                    self.push(
                        DiagnosticCode::TypeError,
                        on,
                        Some(name),
                        "reference choices must be nonempty and distinct",
                    );
                    return;
                }
                for choice in &r.choices {
                    let ok = match choice {
                        RefChoice::Class(c) => is_subclass(self.kb, c, &over.ty),
                        RefChoice::Instance(i) => self
                            .kb
                            .instances
                            .get(i)
                            .is_some_and(|m| is_subclass(self.kb, &m.class, &over.ty)),
                    };
                    if !ok {
                        self.push(
                            DiagnosticCode::TypeError,
                            on,
                            Some(name),
                            format!(
                                "choice `{}` is not a subclass or instance of `{}`",
                                choice.label(),
                                over.ty
                            ),
                        );
                    }
                }
                self.check_cpt(obj, name, &r.parents, &r.cpd, r.choices.len());
            }
        }
    }

    fn check_assertion(&mut self, inst: &str, attr: &str, value: &AssertedValue) {
        let Some(im) = self.kb.instances.get(inst) else {
            self.push(
                DiagnosticCode::UnknownInstance,
                inst,
                Some(attr),
                "assertion on unknown instance",
            );
            return;
        };
        let _ = im;
        let model = match effective_model(self.kb, &ObjectRef::Instance(inst.to_string())) {
            Ok(m) => m,
            Err(_) => return,
        };
        let Some(decl) = model.get(attr) else {
            self.push(
                DiagnosticCode::BadAssertion,
                inst,
                Some(attr),
                "assertion on undeclared attribute",
            );
            return;
        };
        let instance_of = |name: &str, ty: &str| {
            self.kb
                .instances
                .get(name)
                .is_some_and(|m| is_subclass(self.kb, &m.class, ty))
        };
        let problem = match (decl, value) {
            (AttributeDecl::Complex(c), AssertedValue::Symbol(j)) if !c.cardinality.is_multi() => {
                if !instance_of(j, &c.ty) {
                    Some(format!("`{j}` is not an instance of `{}`", c.ty))
                } else {
                    let reference = model.values().find_map(|d| match d {
                        AttributeDecl::Reference(r) if r.over == attr => Some(r),
                        _ => None,
                    });
                    match reference {
                        Some(r) if !r.choices.contains(&RefChoice::Instance(j.clone())) => {
                            Some(format!("`{j}` is not among the reference choices for `{attr}`"))
                        }
                        _ => None,
                    }
                }
            }
            (AttributeDecl::Complex(c), AssertedValue::Set(js)) => match c.cardinality {
                Cardinality::Multi(n) => {
                    let uniq: BTreeSet<_> = js.iter().collect();
                    if uniq.len() != js.len() {
                        Some("duplicate fillers".to_string())
                    } else if js.len() > n {
                        Some(format!("{} fillers exceed the bound {n}", js.len()))
                    } else {
                        js.iter()
                            .find(|j| !instance_of(j, &c.ty))
                            .map(|j| format!("`{j}` is not an instance of `{}`", c.ty))
                    }
                }
                Cardinality::Single => Some("set value for a single-valued attribute".to_string()),
            },
            (AttributeDecl::Complex(_), _) => Some("complex attributes take instance names".to_string()),
            (other, v) => {
                let range = value_range(&model, other).unwrap_or_default();
                let label = v.to_string();
                if matches!(v, AssertedValue::Set(_)) || !range.contains(&label) {
                    Some(format!("`{label}` is not in range {range:?}"))
                } else {
                    None
                }
            }
        };
        if let Some(msg) = problem {
            self.push(DiagnosticCode::BadAssertion, inst, Some(attr), msg);
        }
    }
}

/// Collect every diagnostic for `kb`: unknown names, type errors in chains,
/// broken inverses, malformed or non-normalized CPTs, bad assertions and
/// dependency cycles (with a witness). Never fails.
pub fn validate_kb(kb: &KnowledgeBase) -> ValidationReport {
    let mut ck = Checker {
        kb,
        report: ValidationReport::default(),
    };
    for name in kb.instances.keys() {
        if kb.classes.contains_key(name) {
            ck.push(
                DiagnosticCode::DuplicateName,
                name,
                None,
                "name used for both a class and an instance",
            );
        }
    }
    let mut structural_ok = true;
    for (name, class) in &kb.classes {
        if let Some(sup) = &class.superclass {
            if !kb.classes.contains_key(sup) {
                ck.push(
                    DiagnosticCode::UnknownClass,
                    name,
                    None,
                    format!("unknown superclass `{sup}`"),
                );
                structural_ok = false;
                continue;
            }
        }
        if let Err(e) = class_lineage(kb, name) {
            ck.model_error(name, e);
            structural_ok = false;
        }
    }
    for (name, inst) in &kb.instances {
        if !kb.classes.contains_key(&inst.class) {
            ck.push(
                DiagnosticCode::UnknownClass,
                name,
                None,
                format!("unknown class `{}`", inst.class),
            );
            structural_ok = false;
        }
    }
    if !structural_ok {
        return ck.report;
    }

    for name in kb.classes.keys() {
        let obj = ObjectRef::Class(name.clone());
        match effective_model(kb, &obj) {
            Ok(model) => {
                // inherited declarations are checked on the declaring class
                let own = &kb.classes[name].attributes;
                for (attr, decl) in own {
                    ck.check_decl(&obj, &model, attr, decl);
                }
            }
            Err(e) => ck.model_error(name, e),
        }
    }
    for (name, inst) in &kb.instances {
        let obj = ObjectRef::Instance(name.clone());
        match effective_model(kb, &obj) {
            Ok(model) => {
                for (attr, decl) in &inst.overrides {
                    ck.check_decl(&obj, &model, attr, decl);
                }
            }
            Err(e) => ck.model_error(name, e),
        }
    }
    for ((inst, attr), value) in &kb.assertions {
        ck.check_assertion(inst, attr, value);
    }
    let (_, conflicts) = derive_fillers(kb);
    for (inst, attr, msg) in conflicts {
        ck.push(DiagnosticCode::BrokenInverse, &inst, Some(&attr), msg);
    }
    // A number attribute cannot vary once the fillers are named.
    let (fillers, _) = derive_fillers(kb);
    for ((inst, attr), filler) in &fillers {
        if let super::Filler::Many(items) = filler {
            if let Ok(model) = effective_model(kb, &ObjectRef::Instance(inst.clone())) {
                for (nname, d) in &model {
                    if let AttributeDecl::Number(n) = d {
                        if &n.over == attr {
                            if let Some(AssertedValue::Count(k)) = kb.assertions.get(&(inst.clone(), nname.clone())) {
                                if *k != items.len() {
                                    ck.push(
                                        DiagnosticCode::BadAssertion,
                                        inst,
                                        Some(nname),
                                        format!("asserted count {k} contradicts {} named fillers", items.len()),
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if ck.report.is_ok() {
        let graph = build_dependency_graph(kb);
        if let Err(cycle) = graph.topological_order() {
            let witness: Vec<String> = cycle.iter().map(|n| n.to_string()).collect();
            let first = &cycle[0];
            ck.push(
                DiagnosticCode::DependencyCycle,
                first.object.name(),
                Some(&first.attribute),
                format!("dependency cycle: {} -> {}", witness.join(" -> "), witness[0]),
            );
        }
    }
    ck.report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClassModel, ComplexAttr, InstanceModel, SimpleAttr};

    fn binary(parents: &[&str], rows: Vec<Vec<f64>>) -> AttributeDecl {
        AttributeDecl::Simple(SimpleAttr {
            range: vec!["f".into(), "t".into()],
            parents: parents.iter().map(|p| p.parse().unwrap()).collect(),
            cpd: Cpt::new(rows),
        })
    }

    #[test]
    fn self_parent_reports_cycle() {
        let mut kb = KnowledgeBase::new();
        let mut c = ClassModel::new("c");
        c.attributes.insert("a".into(), binary(&["a"], vec![vec![0.5, 0.5]; 2]));
        kb.add_class(c);
        let report = validate_kb(&kb);
        assert!(report.has(DiagnosticCode::DependencyCycle), "{report}");
    }

    #[test]
    fn unnormalized_row_reported() {
        let mut kb = KnowledgeBase::new();
        let mut c = ClassModel::new("c");
        c.attributes.insert("a".into(), binary(&[], vec![vec![0.5, 0.4]]));
        kb.add_class(c);
        let report = validate_kb(&kb);
        assert!(report.has(DiagnosticCode::CptNormalization));
        assert_eq!(report.diagnostics.len(), 1);
    }

    #[test]
    fn cpt_shape_mismatch_reported() {
        let mut kb = KnowledgeBase::new();
        let mut c = ClassModel::new("c");
        c.attributes.insert("a".into(), binary(&[], vec![vec![0.5, 0.5]]));
        c.attributes.insert("b".into(), binary(&["a"], vec![vec![0.5, 0.5]]));
        kb.add_class(c);
        assert!(validate_kb(&kb).has(DiagnosticCode::CptShape));
    }

    #[test]
    fn non_mutual_inverse_reported() {
        let mut kb = KnowledgeBase::new();
        let mut a = ClassModel::new("a");
        a.attributes.insert(
            "to-b".into(),
            AttributeDecl::Complex(ComplexAttr {
                ty: "b".into(),
                cardinality: Cardinality::Single,
                inverse: Some("to-a".into()),
            }),
        );
        let mut b = ClassModel::new("b");
        b.attributes.insert(
            "to-a".into(),
            AttributeDecl::Complex(ComplexAttr {
                ty: "a".into(),
                cardinality: Cardinality::Single,
                inverse: None,
            }),
        );
        kb.add_class(a);
        kb.add_class(b);
        assert!(validate_kb(&kb).has(DiagnosticCode::BrokenInverse));
    }

    #[test]
    fn assertion_value_checked() {
        let mut kb = KnowledgeBase::new();
        let mut c = ClassModel::new("c");
        c.attributes.insert("a".into(), binary(&[], vec![vec![0.5, 0.5]]));
        kb.add_class(c);
        kb.add_instance(InstanceModel::new("i", "c"));
        kb.assert_value("i", "a", AssertedValue::Symbol("maybe".into()));
        assert!(validate_kb(&kb).has(DiagnosticCode::BadAssertion));
        kb.assert_value("i", "a", AssertedValue::Symbol("t".into()));
        assert!(validate_kb(&kb).is_ok());
    }

    #[test]
    fn unknown_superclass_reported() {
        let mut kb = KnowledgeBase::new();
        let mut c = ClassModel::new("c");
        c.superclass = Some("ghost".into());
        kb.add_class(c);
        assert!(validate_kb(&kb).has(DiagnosticCode::UnknownClass));
    }
}
