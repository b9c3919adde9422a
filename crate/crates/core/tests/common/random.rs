//! Random stores, random queries and a brute-force evaluator for them.
//!
//! The evaluator shares nothing with the engine: it enumerates every
//! assignment against the raw triple list and applies its own filter
//! semantics (numeric when both sides are numeric, term equality for `=`/`!=`,
//! lexical order between two literals, otherwise an error that drops the row).

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use vkg_core::{Term, Triple, TripleStore};

const EX: &str = "http://ex.org/";
const XSD_INT: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const VARS: [&str; 4] = ["v0", "v1", "v2", "v3"];

pub fn node(i: usize) -> Term {
    Term::iri(format!("{EX}n{i}")).unwrap()
}

pub fn pred(i: usize) -> Term {
    Term::iri(format!("{EX}p{i}")).unwrap()
}

pub struct Vocab {
    pub nodes: usize,
    pub preds: usize,
}

fn random_object(rng: &mut StdRng, v: &Vocab) -> Term {
    match rng.gen_range(0..100) {
        0..=59 => node(rng.gen_range(0..v.nodes)),
        60..=84 => Term::integer(rng.gen_range(0..10)),
        _ => Term::string(format!("s{}", rng.gen_range(0..5))),
    }
}

/// A store of up to `max_triples` distinct triples; returns it with its
/// triple list.
pub fn random_store(rng: &mut StdRng, max_triples: usize) -> (TripleStore, Vec<Triple>, Vocab) {
    let vocab = Vocab { nodes: rng.gen_range(5..40), preds: rng.gen_range(1..5) };
    let target = rng.gen_range(1..=max_triples);
    let mut set = BTreeSet::new();
    for _ in 0..target {
        let t = Triple::new(node(rng.gen_range(0..vocab.nodes)), pred(rng.gen_range(0..vocab.preds)), random_object(rng, &vocab))
            .unwrap();
        set.insert(t);
    }
    let triples: Vec<Triple> = set.into_iter().collect();
    let mut store = TripleStore::new();
    store.extend(&triples);
    (store, triples, vocab)
}

#[derive(Debug, Clone)]
pub enum Slot {
    Var(usize),
    Const(Term),
}

pub type Pattern = [Slot; 3];

#[derive(Debug, Clone, Copy)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone)]
pub enum Filter {
    Cmp(Op, Slot, Slot),
    And(Box<Filter>, Box<Filter>),
    Or(Box<Filter>, Box<Filter>),
    Not(Box<Filter>),
}

#[derive(Debug, Clone)]
pub enum Projection {
    Star,
    Vars(Vec<usize>),
    CountStar,
    CountDistinct(usize),
}

#[derive(Debug, Clone)]
pub struct Query {
    pub outer: Vec<Pattern>,
    pub union: Option<(Vec<Pattern>, Vec<Pattern>)>,
    pub filter: Option<Filter>,
    pub projection: Projection,
    pub distinct: bool,
}

fn term_text(t: &Term) -> String {
    match t {
        Term::Iri(v) => format!("<{v}>"),
        Term::Literal { lexical, datatype } if datatype == XSD_INT => lexical.clone(),
        Term::Literal { lexical, .. } => format!("\"{lexical}\""),
        Term::Blank(b) => format!("_:{b}"),
    }
}

fn slot_text(s: &Slot) -> String {
    match s {
        Slot::Var(v) => format!("?{}", VARS[*v]),
        Slot::Const(t) => term_text(t),
    }
}

fn patterns_text(ps: &[Pattern]) -> String {
    ps.iter().map(|p| format!("{} {} {} . ", slot_text(&p[0]), slot_text(&p[1]), slot_text(&p[2]))).collect()
}

fn filter_text(f: &Filter) -> String {
    match f {
        Filter::Cmp(op, a, b) => {
            let o = match op {
                Op::Eq => "=",
                Op::Ne => "!=",
                Op::Lt => "<",
                Op::Le => "<=",
                Op::Gt => ">",
                Op::Ge => ">=",
            };
            format!("{} {o} {}", slot_text(a), slot_text(b))
        }
        Filter::And(a, b) => format!("({} && {})", filter_text(a), filter_text(b)),
        Filter::Or(a, b) => format!("({} || {})", filter_text(a), filter_text(b)),
        Filter::Not(a) => format!("!({})", filter_text(a)),
    }
}

impl Query {
    pub fn text(&self) -> String {
        let head = match &self.projection {
            Projection::Star => "*".to_owned(),
            Projection::Vars(vs) => vs.iter().map(|v| format!("?{}", VARS[*v])).collect::<Vec<_>>().join(" "),
            Projection::CountStar => "(COUNT(*) AS ?n)".to_owned(),
            Projection::CountDistinct(v) => format!("(COUNT(DISTINCT ?{}) AS ?n)", VARS[*v]),
        };
        let mut body = patterns_text(&self.outer);
        if let Some((l, r)) = &self.union {
            body.push_str(&format!("{{ {}}} UNION {{ {}}} ", patterns_text(l), patterns_text(r)));
        }
        if let Some(f) = &self.filter {
            body.push_str(&format!("FILTER({}) ", filter_text(f)));
        }
        let distinct = if self.distinct { "DISTINCT " } else { "" };
        format!("SELECT {distinct}{head} WHERE {{ {body}}}")
    }

    pub fn body_vars(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let all = self.outer.iter().chain(self.union.iter().flat_map(|(l, r)| l.iter().chain(r)));
        for p in all {
            for s in p {
                if let Slot::Var(v) = s {
                    out.insert(*v);
                }
            }
        }
        out
    }
}

fn random_const(rng: &mut StdRng, v: &Vocab, position: usize) -> Term {
    match position {
        0 => node(rng.gen_range(0..v.nodes)),
        1 => pred(rng.gen_range(0..v.preds)),
        _ => random_object(rng, v),
    }
}

/// A BGP whose patterns stay connected through shared variables.
fn random_bgp(rng: &mut StdRng, v: &Vocab, len: usize, used: &mut BTreeSet<usize>) -> Vec<Pattern> {
    let mut out = Vec::new();
    for _ in 0..len {
        let mut slots: Vec<Slot> = (0..3)
            .map(|pos| {
                let var_odds = if pos == 1 { 15 } else { 65 };
                if rng.gen_range(0..100) < var_odds {
                    Slot::Var(rng.gen_range(0..VARS.len()))
                } else {
                    Slot::Const(random_const(rng, v, pos))
                }
            })
            .collect();
        if !used.is_empty() && !slots.iter().any(|s| matches!(s, Slot::Var(x) if used.contains(x))) {
            let pool: Vec<usize> = used.iter().copied().collect();
            let pick = *pool.choose(rng).unwrap();
            let pos = if rng.gen_bool(0.5) { 0 } else { 2 };
            slots[pos] = Slot::Var(pick);
        }
        for s in &slots {
            if let Slot::Var(x) = s {
                used.insert(*x);
            }
        }
        out.push([slots[0].clone(), slots[1].clone(), slots[2].clone()]);
    }
    out
}

fn random_filter(rng: &mut StdRng, v: &Vocab, vars: &[usize], depth: u32) -> Filter {
    if depth > 0 && rng.gen_bool(0.35) {
        let a = Box::new(random_filter(rng, v, vars, depth - 1));
        let kind = rng.gen_range(0..3);
        if kind == 2 {
            return Filter::Not(a);
        }
        let b = Box::new(random_filter(rng, v, vars, depth - 1));
        return if kind == 0 { Filter::And(a, b) } else { Filter::Or(a, b) };
    }
    let op = [Op::Eq, Op::Ne, Op::Lt, Op::Le, Op::Gt, Op::Ge][rng.gen_range(0..6)];
    let left = Slot::Var(*vars.choose(rng).unwrap());
    let right = match rng.gen_range(0..4) {
        0 => Slot::Var(*vars.choose(rng).unwrap()),
        1 => Slot::Const(node(rng.gen_range(0..v.nodes))),
        2 => Slot::Const(Term::string(format!("s{}", rng.gen_range(0..5)))),
        _ => Slot::Const(Term::integer(rng.gen_range(0..10))),
    };
    Filter::Cmp(op, left, right)
}

pub fn random_query(rng: &mut StdRng, v: &Vocab) -> Query {
    let mut used = BTreeSet::new();
    let len = rng.gen_range(1..=3);
    let outer = random_bgp(rng, v, len, &mut used);
    let union = rng.gen_bool(0.25).then(|| {
        let mut l_used = used.clone();
        let mut r_used = used.clone();
        let (ll, rl) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let l = random_bgp(rng, v, ll, &mut l_used);
        let r = random_bgp(rng, v, rl, &mut r_used);
        used.extend(l_used);
        used.extend(r_used);
        (l, r)
    });
    let vars: Vec<usize> = used.iter().copied().collect();
    let filter = (!vars.is_empty() && rng.gen_bool(0.4)).then(|| random_filter(rng, v, &vars, 2));
    let projection = match (vars.is_empty(), rng.gen_range(0..10)) {
        (true, _) | (false, 0..=3) => Projection::Star,
        (false, 4..=7) => {
            let mut vs: Vec<usize> = vars.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
            if vs.is_empty() {
                vs.push(vars[0]);
            }
            vs.shuffle(rng);
            Projection::Vars(vs)
        }
        (false, 8) => Projection::CountStar,
        _ => Projection::CountDistinct(*vars.choose(rng).unwrap()),
    };
    let distinct = matches!(projection, Projection::Star | Projection::Vars(_)) && rng.gen_bool(0.3);
    Query { outer, union, filter, projection, distinct }
}

pub type Row = BTreeMap<usize, Term>;

fn unify(p: &Pattern, t: &Triple, row: &Row) -> Option<Row> {
    let mut out = row.clone();
    for (slot, term) in p.iter().zip([t.subject(), t.predicate(), t.object()]) {
        match slot {
            Slot::Const(c) if c != term => return None,
            Slot::Const(_) => {}
            Slot::Var(v) => match out.get(v) {
                Some(bound) if bound != term => return None,
                Some(_) => {}
                None => {
                    out.insert(*v, term.clone());
                }
            },
        }
    }
    Some(out)
}

fn enumerate(ps: &[Pattern], triples: &[Triple], row: Row, out: &mut Vec<Row>) {
    let Some((first, rest)) = ps.split_first() else {
        out.push(row);
        return;
    };
    for t in triples {
        if let Some(next) = unify(first, t, &row) {
            enumerate(rest, triples, next, out);
        }
    }
}

fn merge(a: &Row, b: &Row) -> Option<Row> {
    let mut out = a.clone();
    for (k, v) in b {
        match out.get(k) {
            Some(x) if x != v => return None,
            _ => {
                out.insert(*k, v.clone());
            }
        }
    }
    Some(out)
}

fn number(t: &Term) -> Option<f64> {
    match t {
        Term::Literal { lexical, datatype } if datatype == XSD_INT => lexical.parse().ok(),
        _ => None,
    }
}

fn value<'a>(s: &'a Slot, row: &'a Row) -> Option<&'a Term> {
    match s {
        Slot::Var(v) => row.get(v),
        Slot::Const(t) => Some(t),
    }
}

fn holds(f: &Filter, row: &Row) -> Option<bool> {
    match f {
        Filter::Cmp(op, a, b) => {
            let (x, y) = (value(a, row)?, value(b, row)?);
            let ord = match (number(x), number(y)) {
                (Some(p), Some(q)) => p.partial_cmp(&q)?,
                _ => match op {
                    Op::Eq => return Some(x == y),
                    Op::Ne => return Some(x != y),
                    _ => match (x, y) {
                        (Term::Literal { lexical: l, .. }, Term::Literal { lexical: r, .. }) => l.cmp(r),
                        _ => return None,
                    },
                },
            };
            Some(match op {
                Op::Eq => ord == Ordering::Equal,
                Op::Ne => ord != Ordering::Equal,
                Op::Lt => ord == Ordering::Less,
                Op::Le => ord != Ordering::Greater,
                Op::Gt => ord == Ordering::Greater,
                Op::Ge => ord != Ordering::Less,
            })
        }
        Filter::And(a, b) => match (holds(a, row), holds(b, row)) {
            (Some(false), _) | (_, Some(false)) => Some(false),
            (Some(true), Some(true)) => Some(true),
            _ => None,
        },
        Filter::Or(a, b) => match (holds(a, row), holds(b, row)) {
            (Some(true), _) | (_, Some(true)) => Some(true),
            (Some(false), Some(false)) => Some(false),
            _ => None,
        },
        Filter::Not(a) => holds(a, row).map(|b| !b),
    }
}

/// Every solution of the query's pattern and filter, before projection.
pub fn oracle_rows(q: &Query, triples: &[Triple]) -> Vec<Row> {
    let mut rows = Vec::new();
    enumerate(&q.outer, triples, Row::new(), &mut rows);
    if let Some((l, r)) = &q.union {
        let mut branch = Vec::new();
        enumerate(l, triples, Row::new(), &mut branch);
        enumerate(r, triples, Row::new(), &mut branch);
        rows = rows.iter().flat_map(|a| branch.iter().filter_map(move |b| merge(a, b))).collect();
    }
    if let Some(f) = &q.filter {
        rows.retain(|r| holds(f, r) == Some(true));
    }
    rows
}

/// Oracle answer as a sorted multiset of rows over `columns`.
pub fn oracle_answer(q: &Query, triples: &[Triple], columns: &[String]) -> Vec<Vec<Option<Term>>> {
    let rows = oracle_rows(q, triples);
    let index = |name: &str| VARS.iter().position(|v| *v == name);
    let mut out: Vec<Vec<Option<Term>>> = match &q.projection {
        Projection::CountStar => vec![vec![Some(Term::integer(rows.len() as i64))]],
        Projection::CountDistinct(v) => {
            let distinct: BTreeSet<&Term> = rows.iter().filter_map(|r| r.get(v)).collect();
            vec![vec![Some(Term::integer(distinct.len() as i64))]]
        }
        _ => rows
            .iter()
            .map(|r| columns.iter().map(|c| index(c).and_then(|i| r.get(&i).cloned())).collect())
            .collect(),
    };
    out.sort();
    if q.distinct {
        out.dedup();
    }
    out
}

/// Columns the query should expose, by name.
pub fn expected_columns(q: &Query) -> BTreeSet<String> {
    match &q.projection {
        Projection::Star => q.body_vars().iter().map(|v| VARS[*v].to_owned()).collect(),
        Projection::Vars(vs) => vs.iter().map(|v| VARS[*v].to_owned()).collect(),
        _ => BTreeSet::from(["n".to_owned()]),
    }
}
