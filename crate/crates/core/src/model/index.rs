use std::collections::BTreeMap;
use std::sync::Arc;

use super::{
    class_of, effective_model, resolve_with, validate_kb, value_range, AssertedValue, AttributeChain, AttributeDecl,
    ChainResolution, EffectiveModel, KnowledgeBase, ModelError, NumberAttr, ObjectRef, ReferenceAttr,
};

/// Known filler(s) of a complex attribute on a named instance, either
/// asserted directly or implied by an inverse assertion on the other side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Filler {
    One(String),
    Many(Vec<String>),
}

/// Effective model of one object plus lookups for structural attributes.
#[derive(Debug)]
pub struct ObjectModel {
    pub class: String,
    pub attrs: EffectiveModel,
    /// complex attribute → reference attribute declaring `R(complex)`
    pub references: BTreeMap<String, String>,
    /// complex attribute → number attribute declaring `#complex`
    pub numbers: BTreeMap<String, String>,
}

impl ObjectModel {
    fn new(class: String, attrs: EffectiveModel) -> Self {
        let mut references = BTreeMap::new();
        let mut numbers = BTreeMap::new();
        for (name, decl) in &attrs {
            match decl {
                AttributeDecl::Reference(r) => {
                    references.insert(r.over.clone(), name.clone());
                }
                AttributeDecl::Number(n) => {
                    numbers.insert(n.over.clone(), name.clone());
                }
                _ => {}
            }
        }
        Self {
            class,
            attrs,
            references,
            numbers,
        }
    }

    pub fn get(&self, attr: &str) -> Option<&AttributeDecl> {
        self.attrs.get(attr)
    }

    pub fn reference_for(&self, complex: &str) -> Option<(&str, &ReferenceAttr)> {
        let name = self.references.get(complex)?;
        match self.attrs.get(name) {
            Some(AttributeDecl::Reference(r)) => Some((name.as_str(), r)),
            _ => None,
        }
    }

    pub fn number_for(&self, complex: &str) -> Option<(&str, &NumberAttr)> {
        let name = self.numbers.get(complex)?;
        match self.attrs.get(name) {
            Some(AttributeDecl::Number(n)) => Some((name.as_str(), n)),
            _ => None,
        }
    }

    pub fn range(&self, attr: &str) -> Option<Vec<String>> {
        value_range(&self.attrs, self.attrs.get(attr)?)
    }
}

/// Compiled, validated, read-only view of a knowledge base shared by both
/// inference backends.
#[derive(Debug)]
pub struct KbIndex {
    kb: KnowledgeBase,
    classes: BTreeMap<String, Arc<ObjectModel>>,
    instances: BTreeMap<String, Arc<ObjectModel>>,
    fillers: BTreeMap<(String, String), Filler>,
    evidence: Vec<(String, String, usize)>,
}

type FillerMap = BTreeMap<(String, String), Filler>;

/// Asserted complex fillers closed under declared inverses. Conflicts are
/// returned as messages keyed by (instance, attribute).
pub(crate) fn derive_fillers(kb: &KnowledgeBase) -> (FillerMap, Vec<(String, String, String)>) {
    let mut fillers = FillerMap::new();
    let mut conflicts = Vec::new();
    let mut models: BTreeMap<String, EffectiveModel> = BTreeMap::new();
    for name in kb.instances.keys() {
        if let Ok(m) = effective_model(kb, &ObjectRef::Instance(name.clone())) {
            models.insert(name.clone(), m);
        }
    }
    // direct assertions first
    for ((inst, attr), value) in &kb.assertions {
        let Some(AttributeDecl::Complex(c)) = models.get(inst).and_then(|m| m.get(attr)) else {
            continue;
        };
        let filler = match (c.cardinality.is_multi(), value) {
            (false, AssertedValue::Symbol(j)) => Filler::One(j.clone()),
            (true, AssertedValue::Set(js)) => Filler::Many(js.clone()),
            _ => continue,
        };
        fillers.insert((inst.clone(), attr.clone()), filler);
    }
    // inverse closure
    let direct: Vec<_> = fillers.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let mut derived: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for ((inst, attr), filler) in direct {
        let Some(AttributeDecl::Complex(c)) = models.get(&inst).and_then(|m| m.get(&attr)) else {
            continue;
        };
        let Some(inverse) = &c.inverse else { continue };
        let targets = match filler {
            Filler::One(j) => vec![j],
            Filler::Many(js) => js,
        };
        for j in targets {
            derived.entry((j, inverse.clone())).or_default().push(inst.clone());
        }
    }
    for ((j, inv), sources) in derived {
        let Some(AttributeDecl::Complex(c)) = models.get(&j).and_then(|m| m.get(&inv)) else {
            continue;
        };
        let key = (j.clone(), inv.clone());
        if c.cardinality.is_multi() {
            match fillers.get(&key) {
                Some(Filler::Many(existing)) => {
                    for s in &sources {
                        if !existing.contains(s) {
                            conflicts.push((
                                j.clone(),
                                inv.clone(),
                                format!("`{s}` asserts `{j}` as a filler but `{j}.{inv}` does not list `{s}`"),
                            ));
                        }
                    }
                }
                _ => {
                    let mut all = sources.clone();
                    all.sort();
                    all.dedup();
                    fillers.insert(key, Filler::Many(all));
                }
            }
        } else {
            let mut uniq = sources.clone();
            uniq.sort();
            uniq.dedup();
            if uniq.len() > 1 {
                conflicts.push((
                    j.clone(),
                    inv.clone(),
                    format!("single-valued `{j}.{inv}` is implied to be each of {uniq:?}"),
                ));
                continue;
            }
            match fillers.get(&key) {
                Some(Filler::One(existing)) if existing != &uniq[0] => conflicts.push((
                    j.clone(),
                    inv.clone(),
                    format!(
                        "`{j}.{inv}` is asserted as `{existing}` but its inverse implies `{}`",
                        uniq[0]
                    ),
                )),
                Some(_) => {}
                None => {
                    fillers.insert(key, Filler::One(uniq[0].clone()));
                }
            }
        }
    }
    (fillers, conflicts)
}

impl KbIndex {
    /// Validate and compile. Fails with [`ModelError::Invalid`] carrying the
    /// full diagnostic report when the KB is not well formed.
    pub fn new(kb: KnowledgeBase) -> Result<Self, ModelError> {
        let report = validate_kb(&kb);
        if !report.is_ok() {
            return Err(ModelError::Invalid(report));
        }
        let mut classes = BTreeMap::new();
        for name in kb.classes.keys() {
            let attrs = effective_model(&kb, &ObjectRef::Class(name.clone()))?;
            classes.insert(name.clone(), Arc::new(ObjectModel::new(name.clone(), attrs)));
        }
        let mut instances = BTreeMap::new();
        for (name, inst) in &kb.instances {
            let attrs = effective_model(&kb, &ObjectRef::Instance(name.clone()))?;
            instances.insert(name.clone(), Arc::new(ObjectModel::new(inst.class.clone(), attrs)));
        }
        let (fillers, _) = derive_fillers(&kb);
        let mut index = Self {
            kb,
            classes,
            instances,
            fillers,
            evidence: Vec::new(),
        };
        index.evidence = index.collect_evidence();
        Ok(index)
    }

    fn collect_evidence(&self) -> Vec<(String, String, usize)> {
        let mut out = Vec::new();
        for ((inst, attr), value) in &self.kb.assertions {
            let model = &self.instances[inst];
            let decl = &model.attrs[attr];
            match decl {
                AttributeDecl::Complex(_) => {
                    // Asserting a filler of a reference-uncertain attribute
                    // observes the reference attribute.
                    if let (Some((rname, r)), AssertedValue::Symbol(j)) = (model.reference_for(attr), value) {
                        if let Some(idx) = r.choices.iter().position(|c| c.label() == j) {
                            out.push((inst.clone(), rname.to_string(), idx));
                        }
                    }
                }
                _ => {
                    let range = model.range(attr).unwrap_or_default();
                    let label = value.to_string();
                    if let Some(idx) = range.iter().position(|v| *v == label) {
                        out.push((inst.clone(), attr.clone(), idx));
                    }
                }
            }
        }
        // Named fillers fix the count of a multi-valued attribute.
        for ((inst, attr), filler) in &self.fillers {
            if let Filler::Many(items) = filler {
                let model = &self.instances[inst];
                if let Some((nname, _)) = model.number_for(attr) {
                    let key = (inst.clone(), nname.to_string());
                    if !self.kb.assertions.contains_key(&key) {
                        out.push((inst.clone(), nname.to_string(), items.len()));
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn class_model(&self, class: &str) -> Option<&Arc<ObjectModel>> {
        self.classes.get(class)
    }

    pub fn instance_model(&self, instance: &str) -> Option<&Arc<ObjectModel>> {
        self.instances.get(instance)
    }

    pub fn model(&self, obj: &ObjectRef) -> Result<&Arc<ObjectModel>, ModelError> {
        match obj {
            ObjectRef::Class(c) => self.classes.get(c).ok_or_else(|| ModelError::UnknownClass(c.clone())),
            ObjectRef::Instance(i) => self
                .instances
                .get(i)
                .ok_or_else(|| ModelError::UnknownInstance(i.clone())),
        }
    }

    pub fn filler(&self, instance: &str, attribute: &str) -> Option<&Filler> {
        self.fillers.get(&(instance.to_string(), attribute.to_string()))
    }

    /// Observations implied by the KB itself: asserted values, observed
    /// reference attributes and counts fixed by named fillers.
    pub fn asserted_evidence(&self) -> &[(String, String, usize)] {
        &self.evidence
    }

    pub fn resolve(&self, start: &ObjectRef, chain: &AttributeChain) -> Result<ChainResolution, ModelError> {
        let class = self.model(start)?.class.clone();
        resolve_with(start, &class, chain, |obj| {
            self.model(obj).map(|m| Arc::new(m.attrs.clone()))
        })
    }

    /// Cheap variant of [`resolve`](Self::resolve) returning only the range.
    pub fn chain_range(&self, start: &ObjectRef, chain: &AttributeChain) -> Result<Vec<String>, ModelError> {
        let mut model = self.model(start)?;
        let segs = chain.segments();
        for (i, seg) in segs.iter().enumerate() {
            let decl = model.get(seg).ok_or_else(|| ModelError::UnknownAttribute {
                object: model.class.clone(),
                attribute: seg.clone(),
            })?;
            if i + 1 == segs.len() {
                return model.range(seg).ok_or_else(|| ModelError::NonSimpleChain {
                    chain: chain.to_string(),
                    reason: format!("terminal `{seg}` is a complex attribute"),
                });
            }
            match decl {
                AttributeDecl::Complex(c) if !c.cardinality.is_multi() => {
                    model = self
                        .classes
                        .get(&c.ty)
                        .ok_or_else(|| ModelError::UnknownClass(c.ty.clone()))?;
                }
                _ => {
                    return Err(ModelError::NonSimpleChain {
                        chain: chain.to_string(),
                        reason: format!("`{seg}` is not a single-valued complex attribute"),
                    })
                }
            }
        }
        unreachable!()
    }

    pub fn class_of<'a>(&'a self, obj: &'a ObjectRef) -> Result<&'a str, ModelError> {
        class_of(&self.kb, obj)
    }
}
