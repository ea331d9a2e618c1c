use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use super::cpt::{counting_cpt, routed_multiplexer_cpt, DEFAULT_NAIVE_CAP};
use crate::bn::DiscreteNetwork;
use crate::model::{
    AttributeChain, AttributeDecl, Cardinality, Filler, KbIndex, ModelError, ObjectModel, ObjectRef, RefChoice,
};
use crate::query::ChainRef;
use crate::InferenceError;

#[derive(Clone, Copy, Debug)]
pub struct GroundOptions {
    /// Deepest nesting of generic fillers below a named instance.
    pub depth_cap: usize,
    pub naive_cap: usize,
}

impl Default for GroundOptions {
    fn default() -> Self {
        Self {
            depth_cap: 32,
            naive_cap: DEFAULT_NAIVE_CAP,
        }
    }
}

/// Bijection between node ids and grounded attribute paths such as
/// `battalion-charlie/has-battery[2]/hit`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundMap {
    paths: Vec<String>,
    ids: HashMap<String, usize>,
}

impl GroundMap {
    fn push(&mut self, path: String) {
        self.ids.insert(path.clone(), self.paths.len());
        self.paths.push(path);
    }

    pub fn path(&self, id: usize) -> &str {
        &self.paths[id]
    }

    pub fn id(&self, path: &str) -> Option<usize> {
        self.ids.get(path).copied()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[String] {
        &self.paths
    }
}

#[derive(Clone, Debug)]
struct GroundObject {
    path: String,
    model: Arc<ObjectModel>,
    named: bool,
    /// Object and attribute this generic filler was created for.
    origin: Option<(usize, String)>,
    depth: usize,
}

#[derive(Clone, Debug)]
enum Fillers {
    Definite(Vec<usize>),
    Reference { selector: usize, choices: Vec<usize> },
}

/// Flat network for a KB, grown on demand. Nodes are the ancestor closure of
/// every value attribute of every named instance plus any requested chains.
#[derive(Clone, Debug)]
pub struct Grounding {
    index: Arc<KbIndex>,
    opts: GroundOptions,
    net: DiscreteNetwork,
    map: GroundMap,
    objects: Vec<GroundObject>,
    object_ids: HashMap<String, usize>,
    fillers: HashMap<(usize, String), Fillers>,
    values: HashMap<(usize, String), usize>,
    chains: HashMap<(usize, AttributeChain), usize>,
    in_progress: HashSet<(usize, String)>,
}

impl Grounding {
    pub fn new(index: Arc<KbIndex>, opts: GroundOptions) -> Result<Self, InferenceError> {
        let mut g = Self {
            index,
            opts,
            net: DiscreteNetwork::new(),
            map: GroundMap::default(),
            objects: Vec::new(),
            object_ids: HashMap::new(),
            fillers: HashMap::new(),
            values: HashMap::new(),
            chains: HashMap::new(),
            in_progress: HashSet::new(),
        };
        let names: Vec<String> = g.index.kb().instances.keys().cloned().collect();
        for name in &names {
            let model = g.index.instance_model(name).expect("indexed").clone();
            g.add_object(name.clone(), model, true, None, 0);
        }
        for id in 0..names.len() {
            let model = g.objects[id].model.clone();
            for (attr, decl) in &model.attrs {
                if decl.is_value() {
                    g.value_node(id, attr)?;
                }
            }
        }
        let evidence: Vec<(String, String, usize)> = g.index.asserted_evidence().to_vec();
        for (inst, attr, v) in evidence {
            let node = g.value_node(g.object_ids[&inst], &attr)?;
            g.net.set_evidence(node, v)?;
        }
        Ok(g)
    }

    pub fn network(&self) -> &DiscreteNetwork {
        &self.net
    }

    pub fn map(&self) -> &GroundMap {
        &self.map
    }

    pub fn index(&self) -> &Arc<KbIndex> {
        &self.index
    }

    pub fn into_parts(self) -> (DiscreteNetwork, GroundMap) {
        (self.net, self.map)
    }

    /// Node for `instance.chain`, grounding whatever it needs.
    pub fn chain(&mut self, target: &ChainRef) -> Result<usize, InferenceError> {
        let id = *self
            .object_ids
            .get(&target.instance)
            .filter(|id| self.objects[**id].named)
            .ok_or_else(|| ModelError::UnknownInstance(target.instance.clone()))?;
        self.chain_node(id, &target.chain)
    }

    fn add_object(
        &mut self,
        path: String,
        model: Arc<ObjectModel>,
        named: bool,
        origin: Option<(usize, String)>,
        depth: usize,
    ) -> usize {
        if let Some(id) = self.object_ids.get(&path) {
            return *id;
        }
        let id = self.objects.len();
        self.object_ids.insert(path.clone(), id);
        self.objects.push(GroundObject {
            path,
            model,
            named,
            origin,
            depth,
        });
        id
    }

    fn generic(&mut self, parent: usize, attr: &str, path: String, class: &str) -> Result<usize, InferenceError> {
        let depth = self.objects[parent].depth + 1;
        if depth > self.opts.depth_cap {
            return Err(InferenceError::RecursionDepthExceeded { depth, at: path });
        }
        let model = self
            .index
            .class_model(class)
            .ok_or_else(|| ModelError::UnknownClass(class.to_string()))?
            .clone();
        Ok(self.add_object(path, model, false, Some((parent, attr.to_string())), depth))
    }

    fn named_id(&self, name: &str) -> Result<usize, InferenceError> {
        self.object_ids
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownInstance(name.to_string()).into())
    }

    fn fillers(&mut self, x: usize, attr: &str) -> Result<Fillers, InferenceError> {
        if let Some(f) = self.fillers.get(&(x, attr.to_string())) {
            return Ok(f.clone());
        }
        let obj = self.objects[x].clone();
        let complex = match obj.model.get(attr) {
            Some(AttributeDecl::Complex(c)) => c.clone(),
            _ => {
                return Err(ModelError::UnknownAttribute {
                    object: obj.path.clone(),
                    attribute: attr.to_string(),
                }
                .into())
            }
        };
        let asserted = if obj.named {
            self.index.filler(&obj.path, attr).cloned()
        } else {
            None
        };
        let via_inverse = obj.origin.as_ref().and_then(|(p, b)| {
            let parent_decl = self.objects[*p].model.get(b)?.as_complex()?;
            (parent_decl.inverse.as_deref() == Some(attr)).then_some(*p)
        });
        let fillers = if let Some(f) = asserted {
            let names = match f {
                Filler::One(j) => vec![j],
                Filler::Many(js) => js,
            };
            Fillers::Definite(names.iter().map(|n| self.named_id(n)).collect::<Result<_, _>>()?)
        } else if let Some(p) = via_inverse {
            Fillers::Definite(vec![p])
        } else {
            if let (Some(inv), Cardinality::Single) = (&complex.inverse, complex.cardinality) {
                let back_multi = self
                    .index
                    .class_model(&complex.ty)
                    .and_then(|m| m.get(inv))
                    .and_then(AttributeDecl::as_complex)
                    .is_some_and(|b| b.cardinality.is_multi());
                if back_multi {
                    return Err(InferenceError::Unsupported(format!(
                        "`{}.{attr}` has no asserted filler, and a generic filler would need the multi-valued inverse `{inv}` populated with unnamed objects",
                        obj.path
                    )));
                }
            }
            match (
                obj.model.reference_for(attr).map(|(n, r)| (n.to_string(), r.clone())),
                complex.cardinality,
            ) {
                (Some((rname, r)), Cardinality::Single) => {
                    let selector = self.value_node(x, &rname)?;
                    let mut choices = Vec::new();
                    for c in &r.choices {
                        choices.push(match c {
                            RefChoice::Class(cls) => {
                                self.generic(x, attr, format!("{}/{attr}{{{cls}}}", obj.path), cls)?
                            }
                            RefChoice::Instance(i) => self.named_id(i)?,
                        });
                    }
                    Fillers::Reference { selector, choices }
                }
                (_, Cardinality::Single) => Fillers::Definite(vec![self.generic(
                    x,
                    attr,
                    format!("{}/{attr}", obj.path),
                    &complex.ty,
                )?]),
                (_, Cardinality::Multi(n)) => {
                    let mut ids = Vec::with_capacity(n);
                    for i in 1..=n {
                        ids.push(self.generic(x, attr, format!("{}/{attr}[{i}]", obj.path), &complex.ty)?);
                    }
                    Fillers::Definite(ids)
                }
            }
        };
        self.fillers.insert((x, attr.to_string()), fillers.clone());
        Ok(fillers)
    }

    fn add(
        &mut self,
        name: String,
        range: Vec<String>,
        parents: Vec<usize>,
        cpt: Vec<f64>,
    ) -> Result<usize, InferenceError> {
        let id = self.net.add_node(name.clone(), range, parents, cpt)?;
        self.map.push(name);
        Ok(id)
    }

    fn value_node(&mut self, x: usize, attr: &str) -> Result<usize, InferenceError> {
        let key = (x, attr.to_string());
        if let Some(id) = self.values.get(&key) {
            return Ok(*id);
        }
        let obj = self.objects[x].clone();
        let name = format!("{}/{attr}", obj.path);
        if !self.in_progress.insert(key.clone()) {
            return Err(InferenceError::CycleDetected(name));
        }
        let decl = obj
            .model
            .get(attr)
            .cloned()
            .ok_or_else(|| ModelError::UnknownAttribute {
                object: obj.path.clone(),
                attribute: attr.to_string(),
            })?;
        let range = obj.model.range(attr).ok_or_else(|| ModelError::NonSimpleChain {
            chain: name.clone(),
            reason: "complex attributes have no node".into(),
        })?;
        let id = match &decl {
            AttributeDecl::Simple(s) => {
                let parents = self.chain_nodes(x, &s.parents)?;
                self.add(name, range, parents, s.cpd.flat())?
            }
            AttributeDecl::Number(n) => {
                let parents = self.chain_nodes(x, &n.parents)?;
                self.add(name, range, parents, n.cpd.flat())?
            }
            AttributeDecl::Reference(r) => {
                let parents = self.chain_nodes(x, &r.parents)?;
                self.add(name, range, parents, r.cpd.flat())?
            }
            AttributeDecl::Quantifier(q) => {
                let bound = range.len() - 1;
                let Fillers::Definite(fillers) = self.fillers(x, &q.over)? else {
                    unreachable!("multi-valued attributes have no reference uncertainty")
                };
                let gate = match obj.model.number_for(&q.over) {
                    Some((nname, _)) => Some(self.value_node(x, nname)?),
                    None => None,
                };
                let mut parents: Vec<usize> = gate.into_iter().collect();
                for f in &fillers {
                    parents.push(self.chain_node(*f, &q.chain)?);
                }
                let ty = obj
                    .model
                    .get(&q.over)
                    .and_then(AttributeDecl::as_complex)
                    .expect("validated")
                    .ty
                    .clone();
                let chain_range = self.index.chain_range(&ObjectRef::Class(ty), &q.chain)?;
                let v = chain_range
                    .iter()
                    .position(|r| *r == q.value)
                    .ok_or_else(|| ModelError::NonSimpleChain {
                        chain: q.chain.to_string(),
                        reason: format!("`{}` is not a value of the chain", q.value),
                    })?;
                let cpt = counting_cpt(
                    fillers.len(),
                    chain_range.len(),
                    v,
                    bound,
                    gate.is_some(),
                    self.opts.naive_cap,
                )?;
                self.add(name, range, parents, cpt)?
            }
            AttributeDecl::Complex(_) => unreachable!("range() is None for complex attributes"),
        };
        self.in_progress.remove(&key);
        self.values.insert(key, id);
        Ok(id)
    }

    fn chain_nodes(&mut self, x: usize, chains: &[AttributeChain]) -> Result<Vec<usize>, InferenceError> {
        let mut out = Vec::with_capacity(chains.len());
        for c in chains {
            out.push(self.chain_node(x, c)?);
        }
        Ok(out)
    }

    fn chain_node(&mut self, x: usize, chain: &AttributeChain) -> Result<usize, InferenceError> {
        let Some(tail) = chain.tail() else {
            return self.value_node(x, chain.head());
        };
        if let Some(id) = self.chains.get(&(x, chain.clone())) {
            return Ok(*id);
        }
        let id = match self.fillers(x, chain.head())? {
            Fillers::Definite(ys) if ys.len() == 1 => self.chain_node(ys[0], &tail)?,
            Fillers::Definite(_) => {
                return Err(ModelError::NonSimpleChain {
                    chain: chain.to_string(),
                    reason: format!("`{}` is multi-valued", chain.head()),
                }
                .into())
            }
            Fillers::Reference { selector, choices } => {
                let mut parents: Vec<usize> = Vec::new();
                let mut route = Vec::with_capacity(choices.len());
                for c in &choices {
                    let n = self.chain_node(*c, &tail)?;
                    let pos = parents.iter().position(|p| *p == n).unwrap_or_else(|| {
                        parents.push(n);
                        parents.len() - 1
                    });
                    route.push(pos);
                }
                let range = self.net.node(parents[0]).range.clone();
                if let Some(p) = parents.iter().find(|p| self.net.node(**p).range != range) {
                    return Err(InferenceError::RangeMismatch(format!(
                        "`{}` and `{}`",
                        self.net.node(parents[0]).name,
                        self.net.node(*p).name
                    )));
                }
                let cpt = routed_multiplexer_cpt(&route, parents.len(), range.len());
                let mut all = vec![selector];
                all.extend(parents);
                let name = format!("{}/{chain}", self.objects[x].path);
                self.add(name, range, all, cpt)?
            }
        };
        self.chains.insert((x, chain.clone()), id);
        Ok(id)
    }

    /// Named and generic objects grounded so far, by path.
    pub fn object_paths(&self) -> Vec<&str> {
        self.objects.iter().map(|o| o.path.as_str()).collect()
    }

    /// Evidence implied by the KB, by node id.
    pub fn asserted(&self) -> &BTreeMap<usize, usize> {
        self.net.evidence()
    }
}

/// Ground `index` into one flat network.
pub fn ground(index: Arc<KbIndex>) -> Result<(DiscreteNetwork, GroundMap), InferenceError> {
    Ok(Grounding::new(index, GroundOptions::default())?.into_parts())
}
