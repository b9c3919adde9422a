use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde_json::{json, Map, Value};

use super::ast::*;
use crate::rdf::{Dictionary, IdPattern, TermId, TripleSource};
use crate::schema::ns;
use crate::Term;

/// Query results: named columns and rows of optional terms.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Solutions {
    pub variables: Vec<String>,
    pub rows: Vec<Vec<Option<Term>>>,
}

impl Solutions {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, var: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == var)
    }

    pub fn get(&self, row: usize, var: &str) -> Option<&Term> {
        self.rows.get(row)?.get(self.column(var)?)?.as_ref()
    }

    /// Drops rows past `max`; returns whether anything was dropped.
    pub fn truncate(&mut self, max: usize) -> bool {
        let cut = self.rows.len() > max;
        self.rows.truncate(max);
        cut
    }

    /// SPARQL 1.1 JSON results document.
    pub fn to_json(&self) -> Value {
        let bindings: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (var, cell) in self.variables.iter().zip(row) {
                    if let Some(t) = cell {
                        obj.insert(var.clone(), term_json(t));
                    }
                }
                Value::Object(obj)
            })
            .collect();
        json!({ "head": { "vars": self.variables }, "results": { "bindings": bindings } })
    }
}

pub fn term_json(t: &Term) -> Value {
    match t {
        Term::Iri(i) => json!({ "type": "uri", "value": i }),
        Term::Blank(b) => json!({ "type": "bnode", "value": b }),
        Term::Literal { lexical, datatype } if datatype == ns::XSD_STRING => {
            json!({ "type": "literal", "value": lexical })
        }
        Term::Literal { lexical, datatype } => json!({ "type": "literal", "value": lexical, "datatype": datatype }),
    }
}

/// Total order used by ORDER BY: unbound < IRI < blank < literal; numeric
/// literals first, by value, then other literals by lexical form and datatype.
pub fn compare_terms(a: Option<&Term>, b: Option<&Term>) -> Ordering {
    fn rank(t: Option<&Term>) -> u8 {
        match t {
            None => 0,
            Some(Term::Iri(_)) => 1,
            Some(Term::Blank(_)) => 2,
            Some(t) if t.as_number().is_some() => 3,
            Some(_) => 4,
        }
    }
    rank(a).cmp(&rank(b)).then_with(|| match (a, b) {
        (Some(x), Some(y)) => {
            let by_value = match (x.as_number(), y.as_number()) {
                (Some(p), Some(q)) => p.total_cmp(&q),
                _ => Ordering::Equal,
            };
            by_value.then_with(|| x.value().cmp(y.value())).then_with(|| x.datatype().cmp(&y.datatype()))
        }
        _ => Ordering::Equal,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum JoinStrategy {
    /// Cheapest pattern first, re-estimated under each partial binding.
    #[default]
    Greedy,
    /// Fixed order (indices into the top-level group's triple patterns);
    /// nested groups stay greedy.
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum AccessPath {
    #[default]
    Indexed,
    /// Every pattern is matched by scanning the whole store.
    FullScan,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub strategy: JoinStrategy,
    pub access: AccessPath,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalStats {
    /// Partial solutions produced by pattern joins.
    pub intermediate_rows: u64,
    pub triples_scanned: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    /// Position among the top-level group's triple patterns.
    pub pattern_index: usize,
    pub pattern: TriplePattern,
    pub estimate: usize,
}

pub fn evaluate<S: TripleSource + ?Sized>(query: &SelectQuery, source: &S) -> Solutions {
    evaluate_with(query, source, &EvalOptions::default()).0
}

pub fn evaluate_with<S: TripleSource + ?Sized>(
    query: &SelectQuery,
    source: &S,
    options: &EvalOptions,
) -> (Solutions, EvalStats) {
    let mut ev = Evaluator::new(query, source, options);
    let group = ev.compile_group(&query.pattern);
    let streaming = !query.distinct && !query.is_grouped() && query.order_by.is_empty();
    let budget = if streaming { query.limit.map(|l| l.saturating_add(query.offset.unwrap_or(0))) } else { None };
    let fixed = match &options.strategy {
        JoinStrategy::Greedy => None,
        JoinStrategy::Fixed(order) => Some(order.as_slice()),
    };
    let rows = ev.eval_group(&group, fixed, budget);
    let solutions = finish(query, &ev.vars, source.dictionary(), rows);
    (solutions, ev.stats)
}

/// The pattern order evaluation follows for the first solution path, with the
/// estimate each pattern had when it was picked.
pub fn explain_join_order<S: TripleSource + ?Sized>(query: &SelectQuery, source: &S) -> Vec<PlanStep> {
    let options = EvalOptions::default();
    let mut ev = Evaluator::new(query, source, &options);
    let group = ev.compile_group(&query.pattern);
    let mut row = ev.seeds(&group).into_iter().next().unwrap_or_else(|| vec![None; ev.vars.len()]);
    let patterns: Vec<&TriplePattern> = query.pattern.triples().collect();
    let mut remaining: Vec<usize> = (0..group.triples.len()).collect();
    let mut plan = Vec::new();
    while !remaining.is_empty() {
        let (slot, estimate) = ev.cheapest(&group, &remaining, &row);
        let idx = remaining.remove(slot);
        plan.push(PlanStep { pattern_index: idx, pattern: patterns[idx].clone(), estimate });
        let cp = &group.triples[idx];
        if let Some(ids) = cp.id_pattern(&row).and_then(|p| source.scan(p).next()) {
            if let Some(next) = cp.bind(&row, ids) {
                row = next;
            }
        }
    }
    plan
}

type Row = Vec<Option<TermId>>;

#[derive(Debug, Clone, Copy)]
enum CSlot {
    Var(usize),
    /// `None`: constant absent from the store, matches nothing.
    Const(Option<TermId>),
}

struct CPattern {
    slots: [CSlot; 3],
}

impl CPattern {
    fn id_pattern(&self, row: &Row) -> Option<IdPattern> {
        let mut out = [None; 3];
        for (o, s) in out.iter_mut().zip(self.slots) {
            *o = match s {
                CSlot::Var(v) => row[v],
                CSlot::Const(c) => Some(c?),
            };
        }
        Some(out)
    }

    /// Extends `row` with a matching triple, or `None` on a repeated-variable clash.
    fn bind(&self, row: &Row, ids: [TermId; 3]) -> Option<Row> {
        let mut next = row.clone();
        for (s, id) in self.slots.iter().zip(ids) {
            if let CSlot::Var(v) = *s {
                match next[v] {
                    Some(bound) if bound != id => return None,
                    _ => next[v] = Some(id),
                }
            }
        }
        Some(next)
    }
}

enum CExpr<'q> {
    Var(usize),
    Const(&'q Term),
    Cmp(CmpOp, Box<CExpr<'q>>, Box<CExpr<'q>>),
    Arith(ArithOp, Box<CExpr<'q>>, Box<CExpr<'q>>),
    Neg(Box<CExpr<'q>>),
    And(Box<CExpr<'q>>, Box<CExpr<'q>>),
    Or(Box<CExpr<'q>>, Box<CExpr<'q>>),
    Not(Box<CExpr<'q>>),
    Regex(Box<CExpr<'q>>, &'q regex::Regex),
}

struct CFilter<'q> {
    expr: CExpr<'q>,
    vars: Vec<usize>,
}

enum CSub<'q> {
    Union(Vec<CGroup<'q>>),
    Group(CGroup<'q>),
}

struct CGroup<'q> {
    triples: Vec<CPattern>,
    filters: Vec<CFilter<'q>>,
    subs: Vec<CSub<'q>>,
}

struct Evaluator<'a, S: ?Sized> {
    source: &'a S,
    dict: &'a Dictionary,
    vars: Vec<String>,
    index: HashMap<String, usize>,
    access: AccessPath,
    stats: EvalStats,
}

impl<'a, S: TripleSource + ?Sized> Evaluator<'a, S> {
    fn new(query: &SelectQuery, source: &'a S, options: &EvalOptions) -> Self {
        let vars = query.pattern.bound_vars();
        let index = vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        Self { source, dict: source.dictionary(), vars, index, access: options.access, stats: EvalStats::default() }
    }

    fn compile_group<'q>(&self, g: &'q GroupPattern) -> CGroup<'q> {
        let mut out = CGroup { triples: Vec::new(), filters: Vec::new(), subs: Vec::new() };
        for e in &g.elements {
            match e {
                Element::Triple(t) => {
                    let slot = |s: &Slot| match s {
                        Slot::Var(v) => CSlot::Var(self.index[v]),
                        Slot::Term(t) => CSlot::Const(self.dict.lookup(t)),
                    };
                    out.triples.push(CPattern { slots: [slot(&t.subject), slot(&t.predicate), slot(&t.object)] });
                }
                Element::Filter(f) => {
                    let vars = f.vars().iter().filter_map(|v| self.index.get(*v).copied()).collect();
                    out.filters.push(CFilter { expr: self.compile_expr(f), vars });
                }
                Element::Union(bs) => out.subs.push(CSub::Union(bs.iter().map(|b| self.compile_group(b)).collect())),
                Element::Group(g) => out.subs.push(CSub::Group(self.compile_group(g))),
            }
        }
        out
    }

    fn compile_expr<'q>(&self, e: &'q Expr) -> CExpr<'q> {
        let b = |x: &'q Expr| Box::new(self.compile_expr(x));
        match e {
            // Unknown variables cannot occur after parsing; map them past the end.
            Expr::Var(v) => CExpr::Var(self.index.get(v).copied().unwrap_or(usize::MAX)),
            Expr::Const(t) => CExpr::Const(t),
            Expr::Cmp(op, x, y) => CExpr::Cmp(*op, b(x), b(y)),
            Expr::Arith(op, x, y) => CExpr::Arith(*op, b(x), b(y)),
            Expr::Neg(x) => CExpr::Neg(b(x)),
            Expr::And(x, y) => CExpr::And(b(x), b(y)),
            Expr::Or(x, y) => CExpr::Or(b(x), b(y)),
            Expr::Not(x) => CExpr::Not(b(x)),
            Expr::Regex(x, r) => CExpr::Regex(b(x), &r.regex),
        }
    }

    /// Rows produced by joining the group's union and subgroup bags.
    fn seeds(&mut self, g: &CGroup) -> Vec<Row> {
        let mut seeds = vec![vec![None; self.vars.len()]];
        for sub in &g.subs {
            let bag = match sub {
                CSub::Union(branches) => {
                    let mut bag = Vec::new();
                    for b in branches {
                        bag.extend(self.eval_group(b, None, None));
                    }
                    bag
                }
                CSub::Group(inner) => self.eval_group(inner, None, None),
            };
            seeds = join(&seeds, &bag);
            if seeds.is_empty() {
                break;
            }
        }
        seeds
    }

    fn eval_group(&mut self, g: &CGroup, fixed: Option<&[usize]>, budget: Option<usize>) -> Vec<Row> {
        let mut out = Vec::new();
        if budget == Some(0) {
            return out;
        }
        let seeds = self.seeds(g);
        let order: Vec<usize> = match fixed {
            Some(f) => f.iter().copied().filter(|i| *i < g.triples.len()).collect(),
            None => (0..g.triples.len()).collect(),
        };
        for seed in seeds {
            let done = self.ready_filters(g, &seed, 0);
            if let Some(done) = done {
                self.extend(g, seed, &order, fixed.is_some(), done, &mut out, budget);
            }
            if budget.is_some_and(|b| out.len() >= b) {
                break;
            }
        }
        out
    }

    /// Applies filters that became fully bound; `None` if one rejects the row.
    fn ready_filters(&self, g: &CGroup, row: &Row, done: u64) -> Option<u64> {
        let mut done = done;
        for (i, f) in g.filters.iter().enumerate().take(64) {
            if done & (1 << i) == 0 && f.vars.iter().all(|v| row[*v].is_some()) {
                if !self.passes(f, row) {
                    return None;
                }
                done |= 1 << i;
            }
        }
        Some(done)
    }

    fn passes(&self, f: &CFilter, row: &Row) -> bool {
        matches!(self.eval_expr(&f.expr, row).and_then(|v| ebv(&v)), Ok(true))
    }

    /// Cheapest remaining pattern under `row`: (position in `remaining`, estimate).
    fn cheapest(&self, g: &CGroup, remaining: &[usize], row: &Row) -> (usize, usize) {
        let mut best = (0, usize::MAX);
        for (k, &i) in remaining.iter().enumerate() {
            let est = match g.triples[i].id_pattern(row) {
                Some(p) => self.source.count(p),
                None => 0,
            };
            if est < best.1 {
                best = (k, est);
            }
        }
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn extend(
        &mut self,
        g: &CGroup,
        row: Row,
        remaining: &[usize],
        fixed: bool,
        done: u64,
        out: &mut Vec<Row>,
        budget: Option<usize>,
    ) {
        if remaining.is_empty() {
            let leftover = g.filters.iter().enumerate().all(|(i, f)| (i < 64 && done & (1 << i) != 0) || self.passes(f, &row));
            if leftover {
                out.push(row);
            }
            return;
        }
        let slot = if fixed { 0 } else { self.cheapest(g, remaining, &row).0 };
        let pick = remaining[slot];
        let rest: Vec<usize> = remaining.iter().copied().filter(|i| *i != pick).collect();
        let cp = &g.triples[pick];
        let Some(pattern) = cp.id_pattern(&row) else { return };
        let matches: Vec<[TermId; 3]> = match self.access {
            AccessPath::Indexed => self.source.scan(pattern).collect(),
            AccessPath::FullScan => {
                let all: Vec<[TermId; 3]> = self.source.scan([None; 3]).collect();
                self.stats.triples_scanned += all.len() as u64;
                all.into_iter()
                    .filter(|t| pattern.iter().zip(t).all(|(p, id)| p.is_none_or(|p| p == *id)))
                    .collect()
            }
        };
        if self.access == AccessPath::Indexed {
            self.stats.triples_scanned += matches.len() as u64;
        }
        for ids in matches {
            let Some(next) = cp.bind(&row, ids) else { continue };
            self.stats.intermediate_rows += 1;
            let Some(done) = self.ready_filters(g, &next, done) else { continue };
            self.extend(g, next, &rest, fixed, done, out, budget);
            if budget.is_some_and(|b| out.len() >= b) {
                return;
            }
        }
    }

    fn eval_expr<'t>(&'t self, e: &'t CExpr<'t>, row: &Row) -> Result<Val<'t>, ()> {
        Ok(match e {
            CExpr::Var(v) => Val::Term(self.dict.term(row.get(*v).copied().flatten().ok_or(())?)),
            CExpr::Const(t) => Val::Term(t),
            CExpr::Cmp(op, a, b) => Val::Bool(compare(*op, &self.eval_expr(a, row)?, &self.eval_expr(b, row)?)?),
            CExpr::Arith(op, a, b) => {
                let x = self.eval_expr(a, row)?.number().ok_or(())?;
                let y = self.eval_expr(b, row)?.number().ok_or(())?;
                Val::Num(match op {
                    ArithOp::Add => x + y,
                    ArithOp::Sub => x - y,
                    ArithOp::Mul => x * y,
                    ArithOp::Div if y == 0.0 => return Err(()),
                    ArithOp::Div => x / y,
                })
            }
            CExpr::Neg(a) => Val::Num(-self.eval_expr(a, row)?.number().ok_or(())?),
            CExpr::And(a, b) => {
                let x = self.eval_expr(a, row).and_then(|v| ebv(&v));
                let y = self.eval_expr(b, row).and_then(|v| ebv(&v));
                match (x, y) {
                    (Ok(false), _) | (_, Ok(false)) => Val::Bool(false),
                    (Ok(true), Ok(true)) => Val::Bool(true),
                    _ => return Err(()),
                }
            }
            CExpr::Or(a, b) => {
                let x = self.eval_expr(a, row).and_then(|v| ebv(&v));
                let y = self.eval_expr(b, row).and_then(|v| ebv(&v));
                match (x, y) {
                    (Ok(true), _) | (_, Ok(true)) => Val::Bool(true),
                    (Ok(false), Ok(false)) => Val::Bool(false),
                    _ => return Err(()),
                }
            }
            CExpr::Not(a) => Val::Bool(!ebv(&self.eval_expr(a, row)?)?),
            CExpr::Regex(a, re) => match self.eval_expr(a, row)? {
                Val::Term(t) if !t.is_blank() => Val::Bool(re.is_match(t.value())),
                _ => return Err(()),
            },
        })
    }
}

enum Val<'t> {
    Term(&'t Term),
    Num(f64),
    Bool(bool),
}

impl Val<'_> {
    fn number(&self) -> Option<f64> {
        match self {
            Val::Term(t) => t.as_number(),
            Val::Num(n) => Some(*n),
            Val::Bool(_) => None,
        }
    }

    fn boolean(&self) -> Option<bool> {
        match self {
            Val::Bool(b) => Some(*b),
            Val::Term(t) if t.datatype() == Some(ns::XSD_BOOLEAN) => match t.value() {
                "true" | "1" => Some(true),
                "false" | "0" => Some(false),
                _ => None,
            },
            _ => None,
        }
    }
}

/// Effective boolean value.
fn ebv(v: &Val) -> Result<bool, ()> {
    if let Some(b) = v.boolean() {
        return Ok(b);
    }
    if let Some(n) = v.number() {
        return Ok(n != 0.0 && !n.is_nan());
    }
    match v {
        Val::Term(t) if t.datatype() == Some(ns::XSD_STRING) => Ok(!t.value().is_empty()),
        _ => Err(()),
    }
}

fn compare(op: CmpOp, a: &Val, b: &Val) -> Result<bool, ()> {
    let ord = if let (Some(x), Some(y)) = (a.number(), b.number()) {
        match x.partial_cmp(&y) {
            Some(o) => o,
            None => return if op == CmpOp::Ne { Ok(true) } else if op == CmpOp::Eq { Ok(false) } else { Err(()) },
        }
    } else if let (Some(x), Some(y)) = (a.boolean(), b.boolean()) {
        x.cmp(&y)
    } else {
        match (op, a, b) {
            (CmpOp::Eq, Val::Term(x), Val::Term(y)) => return Ok(x == y),
            (CmpOp::Ne, Val::Term(x), Val::Term(y)) => return Ok(x != y),
            (CmpOp::Eq, ..) => return Ok(false),
            (CmpOp::Ne, ..) => return Ok(true),
            (_, Val::Term(x), Val::Term(y)) if x.is_literal() && y.is_literal() => x.value().cmp(y.value()),
            _ => return Err(()),
        }
    };
    Ok(match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    })
}

fn join(left: &[Row], right: &[Row]) -> Vec<Row> {
    let mut out = Vec::new();
    for l in left {
        'r: for r in right {
            let mut merged = l.clone();
            for (m, c) in merged.iter_mut().zip(r) {
                match (*m, *c) {
                    (Some(a), Some(b)) if a != b => continue 'r,
                    (None, Some(b)) => *m = Some(b),
                    _ => {}
                }
            }
            out.push(merged);
        }
    }
    out
}

/// Grouping, ordering, projection, DISTINCT and slicing.
fn finish(query: &SelectQuery, vars: &[String], dict: &Dictionary, rows: Vec<Row>) -> Solutions {
    let counts: Vec<Term>;
    let (columns, mut table): (Vec<String>, Vec<Vec<Option<&Term>>>) = if query.is_grouped() {
        let key_cols: Vec<usize> =
            query.group_by.iter().map(|g| vars.iter().position(|v| v == g).unwrap_or(usize::MAX)).collect();
        let mut order: Vec<Vec<Option<TermId>>> = Vec::new();
        let mut groups: HashMap<Vec<Option<TermId>>, Vec<&Row>> = HashMap::new();
        for r in &rows {
            let key: Vec<Option<TermId>> = key_cols.iter().map(|c| r.get(*c).copied().flatten()).collect();
            groups
                .entry(key.clone())
                .or_insert_with(|| {
                    order.push(key);
                    Vec::new()
                })
                .push(r);
        }
        if order.is_empty() && query.group_by.is_empty() {
            order.push(Vec::new());
            groups.insert(Vec::new(), Vec::new());
        }
        let agg = match &query.projection {
            Projection::Count { count, .. } => Some(count),
            _ => None,
        };
        counts = order
            .iter()
            .map(|k| {
                let members = &groups[k];
                let n = match agg {
                    None => members.len(),
                    Some(c) => {
                        let target = c.target.as_ref().map(|t| vars.iter().position(|v| v == t).unwrap_or(usize::MAX));
                        match (target, c.distinct) {
                            (None, false) => members.len(),
                            (None, true) => members.iter().collect::<HashSet<_>>().len(),
                            (Some(t), false) => members.iter().filter(|r| r.get(t).copied().flatten().is_some()).count(),
                            (Some(t), true) => {
                                members.iter().filter_map(|r| r.get(t).copied().flatten()).collect::<HashSet<_>>().len()
                            }
                        }
                    }
                };
                Term::integer(n as i64)
            })
            .collect();
        let mut columns = query.group_by.clone();
        if let Some(c) = agg {
            columns.push(c.alias.clone());
        }
        let table = order
            .iter()
            .zip(&counts)
            .map(|(key, n)| {
                let mut cells: Vec<Option<&Term>> = key.iter().map(|id| id.map(|id| dict.term(id))).collect();
                if agg.is_some() {
                    cells.push(Some(n));
                }
                cells
            })
            .collect();
        (columns, table)
    } else {
        let table = rows.iter().map(|r| r.iter().map(|id| id.map(|id| dict.term(id))).collect()).collect();
        (vars.to_vec(), table)
    };

    let col = |name: &str| columns.iter().position(|c| c == name);
    if !query.order_by.is_empty() {
        let keys: Vec<(Option<usize>, bool)> = query.order_by.iter().map(|k| (col(&k.var), k.descending)).collect();
        table.sort_by(|a, b| {
            for &(c, desc) in &keys {
                let o = compare_terms(c.and_then(|c| a[c]), c.and_then(|c| b[c]));
                let o = if desc { o.reverse() } else { o };
                if o != Ordering::Equal {
                    return o;
                }
            }
            Ordering::Equal
        });
    }

    let variables = query.variables();
    let picks: Vec<Option<usize>> = variables.iter().map(|v| col(v)).collect();
    let mut projected: Vec<Vec<Option<&Term>>> =
        table.into_iter().map(|r| picks.iter().map(|p| p.and_then(|p| r[p])).collect()).collect();
    if query.distinct {
        let mut seen = HashSet::new();
        projected.retain(|r| seen.insert(r.clone()));
    }
    let offset = query.offset.unwrap_or(0);
    let limit = query.limit.unwrap_or(usize::MAX);
    let rows = projected
        .into_iter()
        .skip(offset)
        .take(limit)
        .map(|r| r.into_iter().map(|c| c.cloned()).collect())
        .collect();
    Solutions { variables, rows }
}
