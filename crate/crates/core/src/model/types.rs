use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Dotted attribute path `A1.A2.….Ak`, always nonempty.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct AttributeChain(Vec<String>);

impl AttributeChain {
    pub fn new(segments: Vec<String>) -> Option<Self> {
        if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
            None
        } else {
            Some(Self(segments))
        }
    }

    pub fn single(name: impl Into<String>) -> Self {
        Self(vec![name.into()])
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn head(&self) -> &str {
        &self.0[0]
    }

    pub fn last(&self) -> &str {
        self.0.last().expect("chain is nonempty")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The chain without its first segment, or `None` for a length-1 chain.
    pub fn tail(&self) -> Option<AttributeChain> {
        if self.0.len() > 1 {
            Some(Self(self.0[1..].to_vec()))
        } else {
            None
        }
    }

    pub fn prepend(&self, head: &str) -> AttributeChain {
        let mut segs = Vec::with_capacity(self.0.len() + 1);
        segs.push(head.to_string());
        segs.extend(self.0.iter().cloned());
        Self(segs)
    }
}

impl fmt::Display for AttributeChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

impl FromStr for AttributeChain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttributeChain::new(s.split('.').map(str::to_string).collect())
            .ok_or_else(|| format!("malformed attribute chain `{s}`"))
    }
}

impl From<AttributeChain> for String {
    fn from(c: AttributeChain) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for AttributeChain {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Dense row-stochastic table. Rows are indexed by parent configurations in
/// lexicographic order (first parent most significant); each row is a
/// distribution over the child's range in declared order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub rows: Vec<Vec<f64>>,
}

impl Cpt {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn prior(dist: Vec<f64>) -> Self {
        Self { rows: vec![dist] }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cardinality {
    Single,
    /// Multi-valued with a static upper bound on the number of fillers.
    Multi(usize),
}

impl Cardinality {
    pub fn is_multi(self) -> bool {
        matches!(self, Cardinality::Multi(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RefChoice {
    Class(String),
    Instance(String),
}

impl RefChoice {
    /// Class and instance names share no namespace, so the bare name is a
    /// unique label within the reference attribute's range.
    pub fn label(&self) -> &str {
        match self {
            RefChoice::Class(n) | RefChoice::Instance(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpleAttr {
    pub range: Vec<String>,
    pub parents: Vec<AttributeChain>,
    pub cpd: Cpt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexAttr {
    pub ty: String,
    pub cardinality: Cardinality,
    pub inverse: Option<String>,
}

/// `#(over.chain = value)`
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantifierAttr {
    pub over: String,
    pub chain: AttributeChain,
    pub value: String,
}

/// `#over`, ranging over `0..=n` for the bound `n` of `over`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumberAttr {
    pub over: String,
    pub parents: Vec<AttributeChain>,
    pub cpd: Cpt,
}

/// `R(over)`, ranging over the listed subclasses and instances of `T(over)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAttr {
    pub over: String,
    pub choices: Vec<RefChoice>,
    pub parents: Vec<AttributeChain>,
    pub cpd: Cpt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AttributeDecl {
    Simple(SimpleAttr),
    Complex(ComplexAttr),
    Quantifier(QuantifierAttr),
    Number(NumberAttr),
    Reference(ReferenceAttr),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttributeKind {
    Simple,
    Complex,
    Quantifier,
    Number,
    Reference,
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttributeKind::Simple => "simple",
            AttributeKind::Complex => "complex",
            AttributeKind::Quantifier => "quantifier",
            AttributeKind::Number => "number",
            AttributeKind::Reference => "reference",
        })
    }
}

impl AttributeDecl {
    pub fn kind(&self) -> AttributeKind {
        match self {
            AttributeDecl::Simple(_) => AttributeKind::Simple,
            AttributeDecl::Complex(_) => AttributeKind::Complex,
            AttributeDecl::Quantifier(_) => AttributeKind::Quantifier,
            AttributeDecl::Number(_) => AttributeKind::Number,
            AttributeDecl::Reference(_) => AttributeKind::Reference,
        }
    }

    pub fn is_value(&self) -> bool {
        !matches!(self, AttributeDecl::Complex(_))
    }

    pub fn as_complex(&self) -> Option<&ComplexAttr> {
        match self {
            AttributeDecl::Complex(c) => Some(c),
            _ => None,
        }
    }

    /// Parent chains and CPD for the attributes that carry one.
    pub fn local_model(&self) -> Option<(&[AttributeChain], &Cpt)> {
        match self {
            AttributeDecl::Simple(s) => Some((&s.parents, &s.cpd)),
            AttributeDecl::Number(n) => Some((&n.parents, &n.cpd)),
            AttributeDecl::Reference(r) => Some((&r.parents, &r.cpd)),
            AttributeDecl::Complex(_) | AttributeDecl::Quantifier(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub name: String,
    pub superclass: Option<String>,
    pub attributes: BTreeMap<String, AttributeDecl>,
}

impl ClassModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            superclass: None,
            attributes: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceModel {
    pub name: String,
    pub class: String,
    pub overrides: BTreeMap<String, AttributeDecl>,
}

impl InstanceModel {
    pub fn new(name: impl Into<String>, class: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            class: class.into(),
            overrides: BTreeMap::new(),
        }
    }
}

/// Right-hand side of `assert I.A = …`. Symbols are interpreted by the
/// attribute kind: a range value for simple attributes, an instance name for
/// single-valued complex attributes, a choice label for reference attributes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssertedValue {
    Symbol(String),
    Count(usize),
    Set(Vec<String>),
}

impl fmt::Display for AssertedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssertedValue::Symbol(s) => f.write_str(s),
            AssertedValue::Count(n) => write!(f, "{n}"),
            AssertedValue::Set(items) => write!(f, "{{{}}}", items.join(", ")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeAssertion {
    pub instance: String,
    pub attribute: String,
    pub value: AssertedValue,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub classes: BTreeMap<String, ClassModel>,
    pub instances: BTreeMap<String, InstanceModel>,
    /// Keyed by (instance, attribute); at most one assertion each.
    pub assertions: BTreeMap<(String, String), AssertedValue>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_class(&mut self, class: ClassModel) {
        self.classes.insert(class.name.clone(), class);
    }

    pub fn add_instance(&mut self, instance: InstanceModel) {
        self.instances.insert(instance.name.clone(), instance);
    }

    pub fn assert_value(&mut self, instance: impl Into<String>, attribute: impl Into<String>, value: AssertedValue) {
        self.assertions.insert((instance.into(), attribute.into()), value);
    }

    pub fn assertion_list(&self) -> Vec<AttributeAssertion> {
        self.assertions
            .iter()
            .map(|((i, a), v)| AttributeAssertion {
                instance: i.clone(),
                attribute: a.clone(),
                value: v.clone(),
            })
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty() && self.instances.is_empty() && self.assertions.is_empty()
    }
}

/// Either a class (standing for its generic instances) or a named instance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObjectRef {
    Class(String),
    Instance(String),
}

impl ObjectRef {
    pub fn name(&self) -> &str {
        match self {
            ObjectRef::Class(n) | ObjectRef::Instance(n) => n,
        }
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectRef::Class(n) => write!(f, "class {n}"),
            ObjectRef::Instance(n) => write!(f, "{n}"),
        }
    }
}
