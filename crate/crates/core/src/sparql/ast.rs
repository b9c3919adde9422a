use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;

use crate::Term;

/// A triple-pattern position.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Slot {
    Var(String),
    Term(Term),
}

impl Slot {
    pub fn var(&self) -> Option<&str> {
        match self {
            Slot::Var(v) => Some(v),
            Slot::Term(_) => None,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Var(v) => write!(f, "?{v}"),
            Slot::Term(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub subject: Slot,
    pub predicate: Slot,
    pub object: Slot,
}

impl TriplePattern {
    pub fn new(subject: Slot, predicate: Slot, object: Slot) -> Self {
        Self { subject, predicate, object }
    }

    pub fn slots(&self) -> [&Slot; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.slots().into_iter().filter_map(Slot::var)
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Compiled `REGEX` pattern; equality is by source text and flags.
#[derive(Debug, Clone)]
pub struct RegexPattern {
    pub source: String,
    pub flags: String,
    pub(crate) regex: Regex,
}

impl PartialEq for RegexPattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.flags == other.flags
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(String),
    Const(Term),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Regex(Box<Expr>, RegexPattern),
}

impl Expr {
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Expr::Const(_) => {}
            Expr::Cmp(_, a, b) | Expr::Arith(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Neg(a) | Expr::Not(a) | Expr::Regex(a, _) => a.collect_vars(out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Triple(TriplePattern),
    Filter(Expr),
    /// Two or more alternatives.
    Union(Vec<GroupPattern>),
    Group(GroupPattern),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupPattern {
    pub elements: Vec<Element>,
}

impl GroupPattern {
    pub fn triples(&self) -> impl Iterator<Item = &TriplePattern> {
        self.elements.iter().filter_map(|e| match e {
            Element::Triple(t) => Some(t),
            _ => None,
        })
    }

    /// Every variable bound by a triple pattern here or in a nested group, in
    /// order of first appearance.
    pub fn bound_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_bound(&mut out);
        out
    }

    fn collect_bound(&self, out: &mut Vec<String>) {
        for e in &self.elements {
            match e {
                Element::Triple(t) => {
                    for v in t.vars() {
                        if !out.iter().any(|o| o == v) {
                            out.push(v.to_owned());
                        }
                    }
                }
                Element::Filter(_) => {}
                Element::Union(branches) => branches.iter().for_each(|b| b.collect_bound(out)),
                Element::Group(g) => g.collect_bound(out),
            }
        }
    }

    pub fn triple_count(&self) -> usize {
        self.elements
            .iter()
            .map(|e| match e {
                Element::Triple(_) => 1,
                Element::Filter(_) => 0,
                Element::Union(bs) => bs.iter().map(GroupPattern::triple_count).sum(),
                Element::Group(g) => g.triple_count(),
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountAggregate {
    pub distinct: bool,
    /// `None` is `COUNT(*)`.
    pub target: Option<String>,
    pub alias: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    Star,
    Vars(Vec<String>),
    /// Plain variables (all of which must be grouped) followed by one count.
    Count { vars: Vec<String>, count: CountAggregate },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderKey {
    pub var: String,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectQuery {
    pub prefixes: BTreeMap<String, String>,
    pub projection: Projection,
    pub distinct: bool,
    pub pattern: GroupPattern,
    pub group_by: Vec<String>,
    pub order_by: Vec<OrderKey>,
    pub limit: Option<usize>,
    pub offset: Option<usize>,
}

impl SelectQuery {
    pub fn is_grouped(&self) -> bool {
        !self.group_by.is_empty() || matches!(self.projection, Projection::Count { .. })
    }

    /// Output column names.
    pub fn variables(&self) -> Vec<String> {
        match &self.projection {
            Projection::Star => self.pattern.bound_vars(),
            Projection::Vars(vs) => vs.clone(),
            Projection::Count { vars, count } => {
                let mut out = vars.clone();
                out.push(count.alias.clone());
                out
            }
        }
    }
}
