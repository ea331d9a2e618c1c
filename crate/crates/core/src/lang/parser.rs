use std::collections::BTreeMap;

use super::lexer::{tokenize, Location, Tok, Token};
use super::{LangError, LangErrorKind, SpanTable};
use crate::model::{
    AssertedValue, AttributeChain, AttributeDecl, Cardinality, ClassModel, ComplexAttr, Cpt, InstanceModel,
    KnowledgeBase, NumberAttr, QuantifierAttr, RefChoice, ReferenceAttr, SimpleAttr,
};

pub(crate) struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    file: &'a str,
}

type PResult<T> = Result<T, LangError>;

impl<'a> Parser<'a> {
    pub(crate) fn new(src: &str, file: &'a str) -> PResult<Self> {
        let toks = tokenize(src).map_err(|(loc, msg)| LangError::new(LangErrorKind::Syntax, file, loc, msg))?;
        Ok(Self { toks, pos: 0, file })
    }

    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    pub(crate) fn loc(&self) -> Location {
        self.peek().loc
    }

    pub(crate) fn error(&self, msg: impl Into<String>) -> LangError {
        LangError::new(LangErrorKind::Syntax, self.file, self.loc(), msg)
    }

    fn unexpected(&self, wanted: &str) -> LangError {
        self.error(format!("expected {wanted}, found {}", self.peek().tok))
    }

    pub(crate) fn is_punct(&self, c: char) -> bool {
        self.peek().tok == Tok::Punct(c)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    pub(crate) fn eat_punct(&mut self, c: char) -> bool {
        if self.is_punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect_punct(&mut self, c: char) -> PResult<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{c}`")))
        }
    }

    pub(crate) fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    pub(crate) fn ident(&mut self, what: &str) -> PResult<(String, Location)> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                let loc = self.bump().loc;
                Ok((s, loc))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    /// A range value or quantifier value: identifier or integer literal.
    pub(crate) fn symbol(&mut self, what: &str) -> PResult<String> {
        match &self.peek().tok {
            Tok::Ident(s) | Tok::Number(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn integer(&mut self, what: &str) -> PResult<usize> {
        match &self.peek().tok {
            Tok::Number(s) => match s.parse::<usize>() {
                Ok(n) => {
                    self.bump();
                    Ok(n)
                }
                Err(_) => Err(self.error(format!("expected an integer {what}, found `{s}`"))),
            },
            _ => Err(self.unexpected(what)),
        }
    }

    pub(crate) fn chain(&mut self) -> PResult<AttributeChain> {
        let (first, _) = self.ident("attribute name")?;
        let mut segs = vec![first];
        while self.is_punct('.') {
            self.bump();
            segs.push(self.ident("attribute name")?.0);
        }
        Ok(AttributeChain::new(segs).expect("nonempty"))
    }

    fn parents(&mut self) -> PResult<Vec<AttributeChain>> {
        if !self.eat_keyword("parents") {
            return Ok(Vec::new());
        }
        self.expect_punct('(')?;
        let mut out = Vec::new();
        if !self.is_punct(')') {
            loop {
                out.push(self.chain()?);
                if !self.eat_punct(',') {
                    break;
                }
            }
        }
        self.expect_punct(')')?;
        Ok(out)
    }

    fn cpd(&mut self) -> PResult<Cpt> {
        self.expect_keyword("cpd")?;
        self.expect_punct('[')?;
        let mut rows = Vec::new();
        let mut row = Vec::new();
        loop {
            match &self.peek().tok {
                Tok::Number(s) => {
                    let v: f64 = s
                        .parse()
                        .map_err(|_| self.error(format!("malformed probability `{s}`")))?;
                    row.push(v);
                    self.bump();
                    self.eat_punct(',');
                }
                Tok::Punct(';') => {
                    self.bump();
                    rows.push(std::mem::take(&mut row));
                }
                Tok::Punct(']') => {
                    self.bump();
                    if !row.is_empty() || rows.is_empty() {
                        rows.push(row);
                    }
                    break;
                }
                _ => return Err(self.unexpected("probability, `;` or `]`")),
            }
        }
        Ok(Cpt::new(rows))
    }

    fn value_list(&mut self) -> PResult<Vec<String>> {
        self.expect_punct('{')?;
        let mut out = Vec::new();
        if !self.is_punct('}') {
            loop {
                out.push(self.symbol("value")?);
                if !self.eat_punct(',') {
                    break;
                }
            }
        }
        self.expect_punct('}')?;
        Ok(out)
    }

    fn attribute(&mut self) -> PResult<(String, Location, AttributeDecl)> {
        let kw_loc = self.loc();
        let (kw, _) = self.ident("attribute declaration")?;
        let (name, loc) = self.ident("attribute name")?;
        let decl = match kw.as_str() {
            "simple" => {
                let range = self.value_list()?;
                let parents = self.parents()?;
                let cpd = self.cpd()?;
                AttributeDecl::Simple(SimpleAttr { range, parents, cpd })
            }
            "complex" => {
                self.expect_punct(':')?;
                let (ty, _) = self.ident("class name")?;
                let cardinality = if self.eat_keyword("multi") {
                    self.expect_punct('(')?;
                    let n = self.integer("bound")?;
                    self.expect_punct(')')?;
                    Cardinality::Multi(n)
                } else {
                    Cardinality::Single
                };
                let inverse = if self.eat_keyword("inverse") {
                    Some(self.ident("inverse attribute name")?.0)
                } else {
                    None
                };
                AttributeDecl::Complex(ComplexAttr {
                    ty,
                    cardinality,
                    inverse,
                })
            }
            "quantifier" => {
                self.expect_punct('=')?;
                self.expect_keyword("count")?;
                self.expect_punct('(')?;
                let full = self.chain()?;
                let Some(chain) = full.tail() else {
                    return Err(LangError::new(
                        LangErrorKind::Syntax,
                        self.file,
                        loc,
                        "quantifier needs `attribute.chain`",
                    ));
                };
                if self.peek().tok != Tok::EqEq {
                    return Err(self.unexpected("`==`"));
                }
                self.bump();
                let value = self.symbol("value")?;
                self.expect_punct(')')?;
                AttributeDecl::Quantifier(QuantifierAttr {
                    over: full.head().to_string(),
                    chain,
                    value,
                })
            }
            "number" => {
                self.expect_keyword("over")?;
                let (over, _) = self.ident("attribute name")?;
                let parents = self.parents()?;
                let cpd = self.cpd()?;
                AttributeDecl::Number(NumberAttr { over, parents, cpd })
            }
            "reference" => {
                self.expect_keyword("over")?;
                let (over, _) = self.ident("attribute name")?;
                self.expect_punct('{')?;
                let mut choices = Vec::new();
                loop {
                    if self.eat_keyword("class") {
                        choices.push(RefChoice::Class(self.ident("class name")?.0));
                    } else if self.eat_keyword("instance") {
                        choices.push(RefChoice::Instance(self.ident("instance name")?.0));
                    } else {
                        return Err(self.unexpected("`class` or `instance`"));
                    }
                    if !self.eat_punct(',') {
                        break;
                    }
                }
                self.expect_punct('}')?;
                let parents = self.parents()?;
                let cpd = self.cpd()?;
                AttributeDecl::Reference(ReferenceAttr {
                    over,
                    choices,
                    parents,
                    cpd,
                })
            }
            other => {
                return Err(LangError::new(
                    LangErrorKind::Syntax,
                    self.file,
                    kw_loc,
                    format!("unknown attribute kind `{other}`"),
                ))
            }
        };
        Ok((name, loc, decl))
    }

    fn body(&mut self, owner: &str, spans: &mut SpanTable) -> PResult<BTreeMap<String, AttributeDecl>> {
        self.expect_punct('{')?;
        let mut attrs = BTreeMap::new();
        while !self.is_punct('}') {
            if self.at_eof() {
                return Err(self.error(format!("unterminated block for `{owner}`")));
            }
            let (name, loc, decl) = self.attribute()?;
            if attrs.contains_key(&name) {
                return Err(LangError::new(
                    LangErrorKind::DuplicateName,
                    self.file,
                    loc,
                    format!("attribute `{name}` declared twice in `{owner}`"),
                ));
            }
            spans.insert((owner.to_string(), Some(name.clone())), loc);
            attrs.insert(name, decl);
        }
        self.bump();
        Ok(attrs)
    }

    fn assert_value(&mut self) -> PResult<AssertedValue> {
        match &self.peek().tok {
            Tok::Punct('{') => {
                self.bump();
                let mut items = Vec::new();
                if !self.is_punct('}') {
                    loop {
                        items.push(self.ident("instance name")?.0);
                        if !self.eat_punct(',') {
                            break;
                        }
                    }
                }
                self.expect_punct('}')?;
                Ok(AssertedValue::Set(items))
            }
            Tok::Number(s) => {
                let n = s
                    .parse::<usize>()
                    .map_err(|_| self.error(format!("expected an integer count, found `{s}`")))?;
                self.bump();
                Ok(AssertedValue::Count(n))
            }
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(AssertedValue::Symbol(s))
            }
            _ => Err(self.unexpected("value")),
        }
    }

    pub(crate) fn document(&mut self) -> PResult<(KnowledgeBase, SpanTable)> {
        let mut kb = KnowledgeBase::new();
        let mut spans = SpanTable::new();
        let mut pending_refs: Vec<(Location, String, String)> = Vec::new();
        let mut assertion_locs: Vec<(Location, String)> = Vec::new();
        while !self.at_eof() {
            let loc = self.loc();
            if self.eat_keyword("class") {
                let (name, nloc) = self.ident("class name")?;
                let superclass = if self.eat_keyword("extends") {
                    let (s, sloc) = self.ident("superclass name")?;
                    pending_refs.push((sloc, s.clone(), format!("unknown superclass `{s}`")));
                    Some(s)
                } else {
                    None
                };
                if kb.classes.contains_key(&name) || kb.instances.contains_key(&name) {
                    return Err(LangError::new(
                        LangErrorKind::DuplicateName,
                        self.file,
                        nloc,
                        format!("`{name}` is already declared"),
                    ));
                }
                spans.insert((name.clone(), None), nloc);
                let attributes = self.body(&name, &mut spans)?;
                kb.add_class(ClassModel {
                    name,
                    superclass,
                    attributes,
                });
            } else if self.eat_keyword("instance") {
                let (name, nloc) = self.ident("instance name")?;
                self.expect_punct(':')?;
                let (class, cloc) = self.ident("class name")?;
                pending_refs.push((cloc, class.clone(), format!("unknown class `{class}`")));
                if kb.classes.contains_key(&name) || kb.instances.contains_key(&name) {
                    return Err(LangError::new(
                        LangErrorKind::DuplicateName,
                        self.file,
                        nloc,
                        format!("`{name}` is already declared"),
                    ));
                }
                spans.insert((name.clone(), None), nloc);
                let overrides = if self.is_punct('{') {
                    self.body(&name, &mut spans)?
                } else {
                    BTreeMap::new()
                };
                kb.add_instance(InstanceModel { name, class, overrides });
            } else if self.eat_keyword("assert") {
                let (inst, iloc) = self.ident("instance name")?;
                self.expect_punct('.')?;
                let (attr, _) = self.ident("attribute name")?;
                self.expect_punct('=')?;
                let value = self.assert_value()?;
                let key = (inst.clone(), attr.clone());
                if kb.assertions.contains_key(&key) {
                    return Err(LangError::new(
                        LangErrorKind::DuplicateName,
                        self.file,
                        iloc,
                        format!("`{inst}.{attr}` is asserted twice"),
                    ));
                }
                assertion_locs.push((iloc, inst.clone()));
                spans.insert((format!("assert {inst}"), Some(attr.clone())), iloc);
                kb.assertions.insert(key, value);
            } else {
                return Err(LangError::new(
                    LangErrorKind::Syntax,
                    self.file,
                    loc,
                    format!("expected `class`, `instance` or `assert`, found {}", self.peek().tok),
                ));
            }
        }
        for (loc, class, msg) in pending_refs {
            if !kb.classes.contains_key(&class) {
                return Err(LangError::new(LangErrorKind::UnknownReference, self.file, loc, msg));
            }
        }
        for (loc, inst) in assertion_locs {
            if !kb.instances.contains_key(&inst) {
                return Err(LangError::new(
                    LangErrorKind::UnknownReference,
                    self.file,
                    loc,
                    format!("assertion on unknown instance `{inst}`"),
                ));
            }
        }
        Ok((kb, spans))
    }

    pub(crate) fn peek_tok(&self, k: usize) -> &Tok {
        self.peek_at(k)
    }
}
