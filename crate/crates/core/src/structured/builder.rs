use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use super::cache::{InputRef, SubQuery, SubQueryResult};
use super::quantifier::quantifier_joint_cpt;
use super::StructuredEngine;
use crate::bn::DiscreteNetwork;
use crate::kbmc::{counting_cpt, routed_multiplexer_cpt};
use crate::model::{AttributeChain, AttributeDecl, Cardinality, Filler, ModelError, ObjectModel, ObjectRef, RefChoice};
use crate::InferenceError;

/// Re-solves allowed per local network before the fixpoint is declared
/// divergent.
const SETTLE_LIMIT: usize = 10_000;

/// Object whose attributes a local network describes: the class target
/// itself, or a named instance of the top-level object.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Owner {
    This,
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Slot {
    Plain,
    /// Per-choice filler `A_v` under reference uncertainty.
    Choice(String),
    /// `i`-th filler of a multi-valued attribute in naive mode.
    Item(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct ComplexKey {
    owner: Owner,
    attr: String,
    slot: Slot,
}

pub(crate) enum Scope {
    Class { class: String, entry: Option<String> },
    TopLevel,
}

struct Quant {
    chain: AttributeChain,
    value: usize,
}

/// Combinatoric summary of a multi-valued attribute: the joint count of its
/// quantifiers, optionally gated by `#A`.
struct Multi {
    bound: usize,
    gate: Option<usize>,
    quants: Vec<Quant>,
}

struct Solved {
    outputs: Vec<AttributeChain>,
    result: Arc<SubQueryResult>,
    inputs: Vec<usize>,
}

struct Complex {
    sym: usize,
    class: String,
    entry: Option<String>,
    needed: BTreeSet<AttributeChain>,
    multi: Option<Multi>,
    solved: Option<Solved>,
}

impl Complex {
    fn dirty(&self) -> bool {
        match &self.solved {
            None => !self.needed.is_empty(),
            Some(s) => !s.outputs.iter().eq(self.needed.iter()),
        }
    }
}

enum Kind {
    Value {
        owner: Owner,
        attr: String,
        parents: Vec<usize>,
    },
    Complex(ComplexKey),
    Proj {
        key: ComplexKey,
        chain: AttributeChain,
    },
    QuantProj {
        key: ComplexKey,
        index: usize,
    },
    Counting {
        parents: Vec<usize>,
        gated: bool,
        parent_card: usize,
        value: usize,
        bound: usize,
    },
    PartialSum {
        prev: Option<usize>,
        item: usize,
        value: usize,
        bound: usize,
    },
    Mux {
        selector: usize,
        parts: Vec<usize>,
        route: Vec<usize>,
    },
    Input,
    InputProj(InputRef),
}

struct Sym {
    name: String,
    range: Vec<String>,
    kind: Kind,
}

/// Local network of one target, before and after materialization.
pub(crate) struct LocalNet {
    pub net: DiscreteNetwork,
    pub outputs: Vec<usize>,
    pub evidence: BTreeMap<usize, usize>,
    pub input: Option<usize>,
    pub inputs: Vec<InputRef>,
    pub input_ranges: Vec<Vec<String>>,
}

pub(crate) struct LocalBuilder<'a> {
    engine: &'a StructuredEngine,
    depth: usize,
    scope: Scope,
    syms: Vec<Sym>,
    values: HashMap<(Owner, String), usize>,
    chains: HashMap<(Owner, AttributeChain), usize>,
    projs: HashMap<(ComplexKey, AttributeChain), usize>,
    complex: BTreeMap<ComplexKey, Complex>,
    in_progress: HashSet<(Owner, String)>,
    input: Option<usize>,
    input_refs: BTreeMap<InputRef, usize>,
    /// Largest clique reported by any recursive call made so far.
    pub sub_max_clique: usize,
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::This => f.write_str("self"),
            Owner::Named(n) => f.write_str(n),
        }
    }
}

fn unknown_attr(object: &str, attr: &str) -> InferenceError {
    ModelError::UnknownAttribute {
        object: object.to_string(),
        attribute: attr.to_string(),
    }
    .into()
}

fn non_simple(chain: impl ToString, reason: String) -> InferenceError {
    ModelError::NonSimpleChain {
        chain: chain.to_string(),
        reason,
    }
    .into()
}

/// Labels of the cross product of `ranges`, row-major.
fn product_labels(ranges: &[Vec<String>]) -> Vec<String> {
    let mut out = vec![String::new()];
    for (i, r) in ranges.iter().enumerate() {
        out = out
            .iter()
            .flat_map(|p| {
                r.iter()
                    .map(move |v| if i == 0 { v.clone() } else { format!("{p},{v}") })
            })
            .collect();
    }
    out
}

/// Row-major digits of `index` over `cards`.
fn digits(mut index: usize, cards: &[usize]) -> Vec<usize> {
    let mut d = vec![0; cards.len()];
    for i in (0..cards.len()).rev() {
        d[i] = index % cards[i];
        index /= cards[i];
    }
    d
}

/// Deterministic CPT copying digit `coord` of a product-valued parent.
fn projection_cpt(cards: &[usize], coord: usize) -> Vec<f64> {
    let size: usize = cards.iter().product();
    let out = cards[coord];
    let mut cpt = vec![0.0; size * out];
    for x in 0..size {
        cpt[x * out + digits(x, cards)[coord]] = 1.0;
    }
    cpt
}

/// Merge repeated parents by keeping only rows where their values agree.
fn collapse_parents(parents: Vec<usize>, cards: &[usize], cpt: Vec<f64>, out: usize) -> (Vec<usize>, Vec<f64>) {
    let (unique, pos) = crate::bn::dedup_ids(&parents);
    if unique.len() == parents.len() {
        return (parents, cpt);
    }
    let ucards: Vec<usize> = unique
        .iter()
        .map(|u| cards[parents.iter().position(|p| p == u).expect("present")])
        .collect();
    let rows: usize = ucards.iter().product();
    let mut table = Vec::with_capacity(rows * out);
    for r in 0..rows {
        let u = digits(r, &ucards);
        let src = pos.iter().zip(cards).fold(0, |acc, (p, c)| acc * c + u[*p]);
        table.extend_from_slice(&cpt[src * out..(src + 1) * out]);
    }
    (unique, table)
}

impl<'a> LocalBuilder<'a> {
    pub fn new(engine: &'a StructuredEngine, depth: usize, scope: Scope) -> Self {
        Self {
            engine,
            depth,
            scope,
            syms: Vec::new(),
            values: HashMap::new(),
            chains: HashMap::new(),
            projs: HashMap::new(),
            complex: BTreeMap::new(),
            in_progress: HashSet::new(),
            input: None,
            input_refs: BTreeMap::new(),
            sub_max_clique: 0,
        }
    }

    fn label(&self) -> &str {
        match &self.scope {
            Scope::Class { class, .. } => class,
            Scope::TopLevel => "top",
        }
    }

    fn owner_name(&self, owner: &Owner) -> String {
        match owner {
            Owner::This => self.label().to_string(),
            Owner::Named(n) => n.clone(),
        }
    }

    fn model(&self, owner: &Owner) -> Result<Arc<ObjectModel>, InferenceError> {
        let index = self.engine.index();
        match (owner, &self.scope) {
            (Owner::This, Scope::Class { class, .. }) => index
                .class_model(class)
                .cloned()
                .ok_or_else(|| ModelError::UnknownClass(class.clone()).into()),
            (Owner::Named(n), _) => index
                .instance_model(n)
                .cloned()
                .ok_or_else(|| ModelError::UnknownInstance(n.clone()).into()),
            (Owner::This, Scope::TopLevel) => unreachable!("the top level has no anonymous owner"),
        }
    }

    fn push(&mut self, name: String, range: Vec<String>, kind: Kind) -> usize {
        self.syms.push(Sym { name, range, kind });
        self.syms.len() - 1
    }

    /// Node for the value attribute `attr` of `owner`.
    pub fn value_sym(&mut self, owner: &Owner, attr: &str) -> Result<usize, InferenceError> {
        let key = (owner.clone(), attr.to_string());
        if let Some(id) = self.values.get(&key) {
            return Ok(*id);
        }
        let oname = self.owner_name(owner);
        let name = format!("{oname}.{attr}");
        if !self.in_progress.insert(key.clone()) {
            return Err(InferenceError::CycleDetected(name));
        }
        let model = self.model(owner)?;
        let decl = model.get(attr).ok_or_else(|| unknown_attr(&oname, attr))?;
        let range = model
            .range(attr)
            .ok_or_else(|| non_simple(&name, "complex attributes have no node".into()))?;
        let id = match decl {
            AttributeDecl::Quantifier(q) => {
                let q = q.clone();
                self.quantifier_sym(owner, name, range, &q.over, &q.chain, &q.value)?
            }
            _ => {
                let (parents, _) = decl.local_model().expect("value attribute");
                let parents = parents.to_vec();
                let mut ids = Vec::with_capacity(parents.len());
                for p in &parents {
                    ids.push(self.chain_sym(owner, p)?);
                }
                self.push(
                    name,
                    range,
                    Kind::Value {
                        owner: owner.clone(),
                        attr: attr.to_string(),
                        parents: ids,
                    },
                )
            }
        };
        self.in_progress.remove(&key);
        self.values.insert(key, id);
        Ok(id)
    }

    fn quantifier_sym(
        &mut self,
        owner: &Owner,
        name: String,
        range: Vec<String>,
        over: &str,
        chain: &AttributeChain,
        value: &str,
    ) -> Result<usize, InferenceError> {
        let model = self.model(owner)?;
        let oname = self.owner_name(owner);
        let c = model
            .get(over)
            .and_then(AttributeDecl::as_complex)
            .ok_or_else(|| unknown_attr(&oname, over))?
            .clone();
        let bound = range.len() - 1;
        let chain_range = self
            .engine
            .index()
            .chain_range(&ObjectRef::Class(c.ty.clone()), chain)?;
        let v = chain_range
            .iter()
            .position(|r| r == value)
            .ok_or_else(|| non_simple(chain, format!("`{value}` is not a value of the chain")))?;
        if let Owner::Named(i) = owner {
            if let Some(f) = self.engine.index().filler(i, over).cloned() {
                let names = match f {
                    Filler::One(j) => vec![j],
                    Filler::Many(js) => js,
                };
                return self.partial_sums(name, range, &names, chain, v, chain_range.len());
            }
        }
        if let Scope::Class { entry: Some(e), .. } = &self.scope {
            if owner == &Owner::This && e == over {
                return Err(InferenceError::Unsupported(format!(
                    "quantifier `{name}` counts over the entry point `{over}`"
                )));
            }
        }
        let gate = match model.number_for(over) {
            Some((n, _)) => Some(self.value_sym(owner, n)?),
            None => None,
        };
        let n = match c.cardinality {
            Cardinality::Multi(n) => n,
            Cardinality::Single => 1,
        };
        if self.engine.options().naive_quantifiers {
            let mut parents: Vec<usize> = gate.into_iter().collect();
            for i in 1..=n {
                let key = ComplexKey {
                    owner: owner.clone(),
                    attr: over.to_string(),
                    slot: Slot::Item(i),
                };
                parents.push(self.proj_sym(key, &c.ty, c.inverse.clone(), chain, None)?);
            }
            return Ok(self.push(
                name,
                range,
                Kind::Counting {
                    parents,
                    gated: gate.is_some(),
                    parent_card: chain_range.len(),
                    value: v,
                    bound,
                },
            ));
        }
        let key = ComplexKey {
            owner: owner.clone(),
            attr: over.to_string(),
            slot: Slot::Plain,
        };
        self.ensure_complex(&key, &c.ty, c.inverse.clone(), Some((n, gate)));
        let cx = self.complex.get_mut(&key).expect("just ensured");
        cx.needed.insert(chain.clone());
        let multi = cx.multi.as_mut().expect("multi-valued");
        multi.quants.push(Quant {
            chain: chain.clone(),
            value: v,
        });
        let index = multi.quants.len() - 1;
        Ok(self.push(name, range, Kind::QuantProj { key, index }))
    }

    /// Count over named fillers as a chain of running sums.
    fn partial_sums(
        &mut self,
        name: String,
        range: Vec<String>,
        fillers: &[String],
        chain: &AttributeChain,
        value: usize,
        parent_card: usize,
    ) -> Result<usize, InferenceError> {
        let bound = range.len() - 1;
        if fillers.is_empty() {
            return Ok(self.push(
                name,
                range,
                Kind::Counting {
                    parents: Vec::new(),
                    gated: false,
                    parent_card,
                    value,
                    bound,
                },
            ));
        }
        let mut prev = None;
        for (k, j) in fillers.iter().enumerate() {
            let item = self.chain_sym(&Owner::Named(j.clone()), chain)?;
            let label = if k + 1 == fillers.len() {
                name.clone()
            } else {
                format!("{name}#{}", k + 1)
            };
            prev = Some(self.push(
                label,
                range.clone(),
                Kind::PartialSum {
                    prev,
                    item,
                    value,
                    bound,
                },
            ));
        }
        Ok(prev.expect("nonempty"))
    }

    fn ensure_complex(
        &mut self,
        key: &ComplexKey,
        class: &str,
        entry: Option<String>,
        multi: Option<(usize, Option<usize>)>,
    ) {
        if self.complex.contains_key(key) {
            return;
        }
        let slot = match &key.slot {
            Slot::Plain => String::new(),
            Slot::Choice(c) => format!("{{{c}}}"),
            Slot::Item(i) => format!("[{i}]"),
        };
        let name = format!("{}.{}{slot}", self.owner_name(&key.owner), key.attr);
        let sym = self.push(name, Vec::new(), Kind::Complex(key.clone()));
        self.complex.insert(
            key.clone(),
            Complex {
                sym,
                class: class.to_string(),
                entry,
                needed: BTreeSet::new(),
                multi: multi.map(|(bound, gate)| Multi {
                    bound,
                    gate,
                    quants: Vec::new(),
                }),
                solved: None,
            },
        );
    }

    /// Projection `ν(A.ρ)` out of `ν(A)`; adds `ρ` to `needed(A)`.
    fn proj_sym(
        &mut self,
        key: ComplexKey,
        class: &str,
        entry: Option<String>,
        chain: &AttributeChain,
        range: Option<Vec<String>>,
    ) -> Result<usize, InferenceError> {
        if let Some(id) = self.projs.get(&(key.clone(), chain.clone())) {
            return Ok(*id);
        }
        let range = match range {
            Some(r) => r,
            None => self
                .engine
                .index()
                .chain_range(&ObjectRef::Class(class.to_string()), chain)?,
        };
        self.ensure_complex(&key, class, entry, None);
        let cx = self.complex.get_mut(&key).expect("just ensured");
        cx.needed.insert(chain.clone());
        let name = format!("{}.{chain}", self.syms[cx.sym].name);
        let id = self.push(
            name,
            range,
            Kind::Proj {
                key: key.clone(),
                chain: chain.clone(),
            },
        );
        self.projs.insert((key, chain.clone()), id);
        Ok(id)
    }

    fn input_proj(&mut self, r: InputRef) -> Result<usize, InferenceError> {
        if let Some(id) = self.input_refs.get(&r) {
            return Ok(*id);
        }
        let index = self.engine.index().clone();
        let range = match &r {
            InputRef::Entry(chain) => {
                let Scope::Class { class, entry: Some(e) } = &self.scope else {
                    unreachable!("entry inputs only exist below an entry point")
                };
                let model = self.model(&Owner::This)?;
                let ty = model
                    .get(e)
                    .and_then(AttributeDecl::as_complex)
                    .ok_or_else(|| unknown_attr(class, e))?
                    .ty
                    .clone();
                index.chain_range(&ObjectRef::Class(ty), chain)?
            }
            InputRef::Named { instance, chain } => index.chain_range(&ObjectRef::Instance(instance.clone()), chain)?,
        };
        if self.input.is_none() {
            let name = match &self.scope {
                Scope::Class { class, entry: Some(e) } => format!("{class}.{e}"),
                _ => format!("{}.<input>", self.label()),
            };
            self.input = Some(self.push(name, Vec::new(), Kind::Input));
        }
        let name = match &r {
            InputRef::Entry(c) => format!("{}.{c}", self.syms[self.input.expect("created")].name),
            InputRef::Named { instance, chain } => format!("{}.<input>.{instance}.{chain}", self.label()),
        };
        let id = self.push(name, range, Kind::InputProj(r.clone()));
        self.input_refs.insert(r, id);
        Ok(id)
    }

    /// `GetChainNode`: node for `chain` on `owner`, flattening named fillers
    /// at the top level.
    pub fn chain_sym(&mut self, owner: &Owner, chain: &AttributeChain) -> Result<usize, InferenceError> {
        let Some(tail) = chain.tail() else {
            return self.value_sym(owner, chain.head());
        };
        if let Some(id) = self.chains.get(&(owner.clone(), chain.clone())) {
            return Ok(*id);
        }
        let head = chain.head();
        let model = self.model(owner)?;
        let oname = self.owner_name(owner);
        let c = match model.get(head) {
            Some(AttributeDecl::Complex(c)) => c.clone(),
            Some(_) => return Err(non_simple(chain, format!("`{head}` is not a complex attribute"))),
            None => return Err(unknown_attr(&oname, head)),
        };
        if c.cardinality.is_multi() {
            return Err(non_simple(chain, format!("`{head}` is multi-valued")));
        }
        let top = matches!(self.scope, Scope::TopLevel);
        let is_entry = matches!(&self.scope, Scope::Class { entry: Some(e), .. } if owner == &Owner::This && e == head);
        let asserted = match owner {
            Owner::Named(i) => self.engine.index().filler(i, head).cloned(),
            Owner::This => None,
        };
        let id = if is_entry {
            self.input_proj(InputRef::Entry(tail))?
        } else if let Some(Filler::One(j)) = asserted {
            self.chain_sym(&Owner::Named(j), &tail)?
        } else {
            if let (Some(inv), Cardinality::Single) = (&c.inverse, c.cardinality) {
                let back_multi = self
                    .engine
                    .index()
                    .class_model(&c.ty)
                    .and_then(|m| m.get(inv))
                    .and_then(AttributeDecl::as_complex)
                    .is_some_and(|b| b.cardinality.is_multi());
                if back_multi {
                    return Err(InferenceError::Unsupported(format!(
                        "`{oname}.{head}` has no asserted filler, and a generic filler would need the multi-valued inverse `{inv}` populated with unnamed objects"
                    )));
                }
            }
            match model.reference_for(head).map(|(n, r)| (n.to_string(), r.clone())) {
                Some((rname, r)) => {
                    let selector = self.value_sym(owner, &rname)?;
                    let mut parts: Vec<usize> = Vec::new();
                    let mut route = Vec::with_capacity(r.choices.len());
                    for choice in &r.choices {
                        let part = match choice {
                            RefChoice::Class(cls) => {
                                let key = ComplexKey {
                                    owner: owner.clone(),
                                    attr: head.to_string(),
                                    slot: Slot::Choice(cls.clone()),
                                };
                                self.proj_sym(key, cls, c.inverse.clone(), &tail, None)?
                            }
                            RefChoice::Instance(j) if top => self.chain_sym(&Owner::Named(j.clone()), &tail)?,
                            RefChoice::Instance(j) => self.input_proj(InputRef::Named {
                                instance: j.clone(),
                                chain: tail.clone(),
                            })?,
                        };
                        let pos = parts.iter().position(|p| *p == part).unwrap_or_else(|| {
                            parts.push(part);
                            parts.len() - 1
                        });
                        route.push(pos);
                    }
                    let range = self.syms[parts[0]].range.clone();
                    if let Some(p) = parts.iter().find(|p| self.syms[**p].range != range) {
                        return Err(InferenceError::RangeMismatch(format!(
                            "`{}` and `{}`",
                            self.syms[parts[0]].name, self.syms[*p].name
                        )));
                    }
                    self.push(format!("{oname}.{chain}"), range, Kind::Mux { selector, parts, route })
                }
                None => {
                    let key = ComplexKey {
                        owner: owner.clone(),
                        attr: head.to_string(),
                        slot: Slot::Plain,
                    };
                    self.proj_sym(key, &c.ty, c.inverse.clone(), &tail, None)?
                }
            }
        };
        self.chains.insert((owner.clone(), chain.clone()), id);
        Ok(id)
    }

    /// Solve complex attributes until every `needed()` set has been handed
    /// to a recursive call. Attributes with an entry point go first, since
    /// their inputs can add to the needs of their siblings.
    pub fn settle(&mut self) -> Result<(), InferenceError> {
        for _ in 0..SETTLE_LIMIT {
            let next = self
                .complex
                .iter()
                .filter(|(_, c)| c.dirty())
                .min_by_key(|(k, c)| (c.entry.is_none(), (*k).clone()))
                .map(|(k, _)| k.clone());
            let Some(key) = next else {
                return Ok(());
            };
            self.solve_complex(&key)?;
        }
        Err(InferenceError::CyclicLocalOrder(self.label().to_string()))
    }

    fn solve_complex(&mut self, key: &ComplexKey) -> Result<(), InferenceError> {
        let cx = &self.complex[key];
        let outputs: Vec<AttributeChain> = cx.needed.iter().cloned().collect();
        let sub = SubQuery::new(cx.class.clone(), outputs.clone(), cx.entry.clone());
        let result = self.engine.solve_at(&sub, self.depth + 1)?;
        self.sub_max_clique = self.sub_max_clique.max(result.max_clique);
        let mut inputs = Vec::with_capacity(result.inputs.len());
        for (r, range) in result.inputs.iter().zip(&result.input_ranges) {
            let id = match (r, &self.scope) {
                (InputRef::Entry(tau), _) => self.chain_sym(&key.owner, tau)?,
                (InputRef::Named { instance, chain }, Scope::TopLevel) => {
                    self.chain_sym(&Owner::Named(instance.clone()), chain)?
                }
                (InputRef::Named { .. }, Scope::Class { .. }) => self.input_proj(r.clone())?,
            };
            if self.syms[id].range.len() != range.len() {
                return Err(InferenceError::RangeMismatch(format!(
                    "input `{r}` of {sub} has {} values, `{}` has {}",
                    range.len(),
                    self.syms[id].name,
                    self.syms[id].range.len()
                )));
            }
            inputs.push(id);
        }
        self.complex.get_mut(key).expect("present").solved = Some(Solved {
            outputs,
            result,
            inputs,
        });
        Ok(())
    }

    fn parents(&self, id: usize) -> Vec<usize> {
        match &self.syms[id].kind {
            Kind::Value { parents, .. } => parents.clone(),
            Kind::Complex(key) => {
                let cx = &self.complex[key];
                let gate = cx.multi.as_ref().and_then(|m| m.gate);
                let inputs = cx.solved.as_ref().map(|s| s.inputs.clone()).unwrap_or_default();
                gate.into_iter().chain(inputs).collect()
            }
            Kind::Proj { key, .. } | Kind::QuantProj { key, .. } => vec![self.complex[key].sym],
            Kind::Counting { parents, .. } => parents.clone(),
            Kind::PartialSum { prev, item, .. } => prev.iter().copied().chain([*item]).collect(),
            Kind::Mux { selector, parts, .. } => std::iter::once(*selector).chain(parts.iter().copied()).collect(),
            Kind::Input => Vec::new(),
            Kind::InputProj(_) => vec![self.input.expect("input exists")],
        }
    }

    fn topo_order(&self) -> Result<Vec<usize>, InferenceError> {
        // 0 unvisited, 1 on stack, 2 done
        let mut state = vec![0u8; self.syms.len()];
        let mut order = Vec::with_capacity(self.syms.len());
        for root in 0..self.syms.len() {
            if state[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, false)];
            while let Some((v, expanded)) = stack.pop() {
                if expanded {
                    state[v] = 2;
                    order.push(v);
                    continue;
                }
                match state[v] {
                    2 => continue,
                    1 => {
                        return Err(InferenceError::CyclicLocalOrder(format!(
                            "{} at `{}`",
                            self.label(),
                            self.syms[v].name
                        )))
                    }
                    _ => {}
                }
                state[v] = 1;
                stack.push((v, true));
                for p in self.parents(v).into_iter().rev() {
                    match state[p] {
                        0 => stack.push((p, false)),
                        1 => {
                            return Err(InferenceError::CyclicLocalOrder(format!(
                                "{} at `{}`",
                                self.label(),
                                self.syms[p].name
                            )))
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(order)
    }

    fn fill_ranges(&mut self) {
        for id in 0..self.syms.len() {
            if let Kind::Complex(key) = &self.syms[id].kind {
                let cx = &self.complex[key];
                let range = match (&cx.multi, &cx.solved) {
                    (Some(m), _) => {
                        let side: Vec<String> = (0..=m.bound).map(|k| k.to_string()).collect();
                        product_labels(&vec![side; m.quants.len()])
                    }
                    (None, Some(s)) => product_labels(&s.result.output_ranges),
                    (None, None) => unreachable!("every complex node with projections is solved"),
                };
                self.syms[id].range = range;
            }
        }
        if let Some(input) = self.input {
            let ranges: Vec<Vec<String>> = self
                .input_refs
                .values()
                .map(|id| self.syms[*id].range.clone())
                .collect();
            self.syms[input].range = product_labels(&ranges);
        }
    }

    fn cpt(&self, id: usize, cards: &[usize]) -> Result<Option<Vec<f64>>, InferenceError> {
        let sym = &self.syms[id];
        let out = sym.range.len();
        let cpt = match &sym.kind {
            Kind::Value { owner, attr, .. } => {
                let model = self.model(owner)?;
                let decl = model.get(attr).expect("resolved on creation");
                decl.local_model().expect("value attribute").1.flat()
            }
            Kind::Complex(key) => {
                let cx = &self.complex[key];
                let s = cx.solved.as_ref().expect("solved");
                match &cx.multi {
                    None => s.result.rows.concat(),
                    Some(m) => self.multi_cpt(m, s),
                }
            }
            Kind::Proj { key, chain } => {
                let s = self.complex[key].solved.as_ref().expect("solved");
                let coord = s.outputs.iter().position(|o| o == chain).expect("needed chain");
                let pcards: Vec<usize> = s.result.output_ranges.iter().map(Vec::len).collect();
                projection_cpt(&pcards, coord)
            }
            Kind::QuantProj { key, index } => {
                let m = self.complex[key].multi.as_ref().expect("multi");
                projection_cpt(&vec![m.bound + 1; m.quants.len()], *index)
            }
            Kind::Counting {
                parents,
                gated,
                parent_card,
                value,
                bound,
            } => {
                let k = parents.len() - usize::from(*gated);
                counting_cpt(k, *parent_card, *value, *bound, *gated, self.engine.options().naive_cap)?
            }
            Kind::PartialSum { prev, value, bound, .. } => {
                let sums = if prev.is_some() { bound + 1 } else { 1 };
                let item_card = cards[cards.len() - 1];
                let mut cpt = vec![0.0; sums * item_card * out];
                for s in 0..sums {
                    for x in 0..item_card {
                        let k = (s + usize::from(x == *value)).min(*bound);
                        cpt[(s * item_card + x) * out + k] = 1.0;
                    }
                }
                cpt
            }
            Kind::Mux { parts, route, .. } => routed_multiplexer_cpt(route, parts.len(), out),
            Kind::Input => return Ok(None),
            Kind::InputProj(r) => {
                let coord = self.input_refs.keys().position(|k| k == r).expect("registered");
                let icards: Vec<usize> = self.input_refs.values().map(|i| self.syms[*i].range.len()).collect();
                projection_cpt(&icards, coord)
            }
        };
        Ok(Some(cpt))
    }

    fn multi_cpt(&self, m: &Multi, s: &Solved) -> Vec<f64> {
        let ocards: Vec<usize> = s.result.output_ranges.iter().map(Vec::len).collect();
        let coords: Vec<usize> = m
            .quants
            .iter()
            .map(|q| s.outputs.iter().position(|o| *o == q.chain).expect("needed chain"))
            .collect();
        let ell = m.quants.len();
        let per_input: Vec<_> = s
            .result
            .rows
            .iter()
            .map(|row| {
                let mut pc = vec![0.0; 1 << ell];
                for (x, p) in row.iter().enumerate() {
                    let d = digits(x, &ocards);
                    let c = m
                        .quants
                        .iter()
                        .zip(&coords)
                        .fold(0, |acc, (q, coord)| acc << 1 | usize::from(d[*coord] == q.value));
                    pc[c] += p;
                }
                quantifier_joint_cpt(&pc, ell, m.bound)
            })
            .collect();
        let mut cpt = Vec::new();
        match m.gate {
            Some(_) => {
                for mm in 0..=m.bound {
                    for q in &per_input {
                        cpt.extend_from_slice(&q.prefixes[mm]);
                    }
                }
            }
            None => {
                for q in &per_input {
                    cpt.extend_from_slice(q.full());
                }
            }
        }
        cpt
    }

    /// Materialize the network. `outputs` and `evidence` are symbol ids.
    pub fn finish(mut self, outputs: &[usize], evidence: &BTreeMap<usize, usize>) -> Result<LocalNet, InferenceError> {
        self.fill_ranges();
        let order = self.topo_order()?;
        let mut node_of = vec![usize::MAX; self.syms.len()];
        let mut net = DiscreteNetwork::new();
        for id in order {
            let sym = &self.syms[id];
            let node = match sym.kind {
                Kind::Input => net.add_input(sym.name.clone(), sym.range.clone())?,
                _ => {
                    let parents: Vec<usize> = self.parents(id).iter().map(|p| node_of[*p]).collect();
                    let cards: Vec<usize> = parents.iter().map(|p| net.card(*p)).collect();
                    let cpt = self.cpt(id, &cards)?.expect("has a CPD");
                    let (parents, cpt) = collapse_parents(parents, &cards, cpt, sym.range.len());
                    net.add_node(sym.name.clone(), sym.range.clone(), parents, cpt)?
                }
            };
            node_of[id] = node;
        }
        let mut ev = BTreeMap::new();
        for (s, v) in evidence {
            ev.insert(node_of[*s], *v);
        }
        Ok(LocalNet {
            outputs: outputs.iter().map(|o| node_of[*o]).collect(),
            input: self.input.map(|i| node_of[i]),
            inputs: self.input_refs.keys().cloned().collect(),
            input_ranges: self.input_refs.values().map(|i| self.syms[*i].range.clone()).collect(),
            evidence: ev,
            net,
        })
    }
}
