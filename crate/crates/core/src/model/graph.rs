use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::index::{derive_fillers, Filler};
use super::{effective_model, AttributeChain, AttributeDecl, EffectiveModel, KnowledgeBase, ObjectRef, RefChoice};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DepNode {
    pub object: ObjectRef,
    pub attribute: String,
}

impl fmt::Display for DepNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.object.name(), self.attribute)
    }
}

/// Influence graph over (object, attribute) pairs. Classes stand for all of
/// their generic instances; named instances get their own nodes.
#[derive(Clone, Debug, Default)]
pub struct DependencyGraph {
    nodes: Vec<DepNode>,
    index: BTreeMap<DepNode, usize>,
    edges: BTreeSet<(usize, usize)>,
}

impl DependencyGraph {
    fn node(&mut self, n: DepNode) -> usize {
        if let Some(&i) = self.index.get(&n) {
            return i;
        }
        let i = self.nodes.len();
        self.index.insert(n.clone(), i);
        self.nodes.push(n);
        i
    }

    pub fn nodes(&self) -> &[DepNode] {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (&DepNode, &DepNode)> {
        self.edges.iter().map(|&(a, b)| (&self.nodes[a], &self.nodes[b]))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn id_of(&self, n: &DepNode) -> Option<usize> {
        self.index.get(n).copied()
    }

    pub fn has_edge(&self, from: &DepNode, to: &DepNode) -> bool {
        match (self.id_of(from), self.id_of(to)) {
            (Some(a), Some(b)) => self.edges.contains(&(a, b)),
            _ => false,
        }
    }

    pub fn parents(&self, n: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == n).map(|e| e.0).collect()
    }

    /// Kahn's algorithm with the smallest ready node first. `Err` carries a
    /// witness cycle.
    pub fn topological_order(&self) -> Result<Vec<usize>, Vec<DepNode>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            indeg[b] += 1;
            out[a].push(b);
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &j in &out[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert(j);
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(self.find_cycle(&indeg, &out))
        }
    }

    fn find_cycle(&self, indeg: &[usize], out: &[Vec<usize>]) -> Vec<DepNode> {
        // Walk backwards through remaining nodes until one repeats.
        let remaining: Vec<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] > 0).collect();
        let Some(&start) = remaining.first() else {
            return Vec::new();
        };
        let mut preds: BTreeMap<usize, usize> = BTreeMap::new();
        for (a, outs) in out.iter().enumerate() {
            if indeg[a] == 0 {
                continue;
            }
            for &b in outs {
                if indeg[b] > 0 {
                    preds.entry(b).or_insert(a);
                }
            }
        }
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let mut path: Vec<usize> = Vec::new();
        let mut cur = start;
        loop {
            if let Some(&pos) = seen.get(&cur) {
                let mut cycle: Vec<DepNode> = path[pos..].iter().map(|&i| self.nodes[i].clone()).collect();
                cycle.reverse();
                return cycle;
            }
            seen.insert(cur, path.len());
            path.push(cur);
            cur = preds[&cur];
        }
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_ok()
    }
}

struct Builder<'a> {
    kb: &'a KnowledgeBase,
    models: BTreeMap<ObjectRef, EffectiveModel>,
    fillers: BTreeMap<(String, String), Filler>,
}

impl Builder<'_> {
    fn model(&self, obj: &ObjectRef) -> Option<&EffectiveModel> {
        self.models.get(obj)
    }

    /// Terminal (object, attribute) pairs a chain can read, plus reference
    /// attributes consulted on the way.
    fn chain_sources(&self, obj: &ObjectRef, chain: &AttributeChain, depth: usize, out: &mut Vec<DepNode>) {
        if depth > 64 {
            return;
        }
        let Some(model) = self.model(obj) else { return };
        let Some(rest) = chain.tail() else {
            out.push(DepNode {
                object: obj.clone(),
                attribute: chain.head().to_string(),
            });
            return;
        };
        let head = chain.head();
        let Some(AttributeDecl::Complex(c)) = model.get(head) else {
            return;
        };
        if let ObjectRef::Instance(i) = obj {
            if let Some(Filler::One(j)) = self.fillers.get(&(i.clone(), head.to_string())) {
                self.chain_sources(&ObjectRef::Instance(j.clone()), &rest, depth + 1, out);
                return;
            }
        }
        let reference = model.iter().find_map(|(name, d)| match d {
            AttributeDecl::Reference(r) if r.over == head => Some((name, r)),
            _ => None,
        });
        if let Some((rname, r)) = reference {
            out.push(DepNode {
                object: obj.clone(),
                attribute: rname.clone(),
            });
            for choice in &r.choices {
                let target = match choice {
                    RefChoice::Class(cl) => ObjectRef::Class(cl.clone()),
                    RefChoice::Instance(inst) => ObjectRef::Instance(inst.clone()),
                };
                self.chain_sources(&target, &rest, depth + 1, out);
            }
            return;
        }
        self.chain_sources(&ObjectRef::Class(c.ty.clone()), &rest, depth + 1, out);
    }

    fn filler_objects(&self, obj: &ObjectRef, attr: &str, ty: &str) -> Vec<ObjectRef> {
        if let ObjectRef::Instance(i) = obj {
            if let Some(Filler::Many(js)) = self.fillers.get(&(i.clone(), attr.to_string())) {
                return js.iter().map(|j| ObjectRef::Instance(j.clone())).collect();
            }
        }
        vec![ObjectRef::Class(ty.to_string())]
    }
}

/// Build the influence graph. Chains whose hops fail to resolve contribute
/// no edges; validation reports them separately.
pub fn build_dependency_graph(kb: &KnowledgeBase) -> DependencyGraph {
    let mut models = BTreeMap::new();
    let objects: Vec<ObjectRef> = kb
        .classes
        .keys()
        .map(|c| ObjectRef::Class(c.clone()))
        .chain(kb.instances.keys().map(|i| ObjectRef::Instance(i.clone())))
        .collect();
    for obj in &objects {
        if let Ok(m) = effective_model(kb, obj) {
            models.insert(obj.clone(), m);
        }
    }
    let (fillers, _) = derive_fillers(kb);
    let b = Builder { kb, models, fillers };
    let mut g = DependencyGraph::default();
    for obj in &objects {
        let Some(model) = b.model(obj) else { continue };
        for name in model.keys() {
            g.node(DepNode {
                object: obj.clone(),
                attribute: name.clone(),
            });
        }
    }
    for obj in &objects {
        let Some(model) = b.model(obj) else { continue };
        for (name, decl) in model {
            let target = g.node(DepNode {
                object: obj.clone(),
                attribute: name.clone(),
            });
            let mut sources = Vec::new();
            if let Some((parents, _)) = decl.local_model() {
                for p in parents {
                    b.chain_sources(obj, p, 0, &mut sources);
                }
            }
            if let AttributeDecl::Quantifier(q) = decl {
                if let Some(AttributeDecl::Complex(c)) = model.get(&q.over) {
                    for filler in b.filler_objects(obj, &q.over, &c.ty) {
                        b.chain_sources(&filler, &q.chain, 0, &mut sources);
                    }
                }
                for (nname, d) in model {
                    if matches!(d, AttributeDecl::Number(n) if n.over == q.over) {
                        sources.push(DepNode {
                            object: obj.clone(),
                            attribute: nname.clone(),
                        });
                    }
                }
            }
            for s in sources {
                let from = g.node(s);
                g.edges.insert((from, target));
            }
        }
    }
    let _ = b.kb;
    g
}
