//! SELECT-only SPARQL subset.
//!
//! ```text
//! Query     := Prefix* Select
//! Prefix    := 'PREFIX' PNAME_NS IRIREF
//! Select    := 'SELECT' 'DISTINCT'? (Var+ | '*' | Var* '(' 'COUNT' '(' 'DISTINCT'? (Var|'*') ')' 'AS' Var ')')
//!              'WHERE'? Group Modifiers
//! Group     := '{' (Triples '.'? | 'FILTER' '(' Expr ')' | Group ('UNION' Group)*)* '}'
//! Triples   := Subject Verb Object (',' Object)* (';' Verb Object (',' Object)*)*
//! Modifiers := ('GROUP' 'BY' Var+)? ('ORDER' 'BY' (('ASC'|'DESC') '(' Var ')' | Var)+)?
//!              ('LIMIT' INT)? ('OFFSET' INT)?
//! Expr      := || && = != < <= > >= + - * / ! unary- REGEX(expr, "pattern" [, "flags"])
//! ```
//!
//! `a` abbreviates `rdf:type`. Bare numbers are `xsd:integer`, `xsd:decimal`
//! or `xsd:double`; `true`/`false` are `xsd:boolean`.

mod ast;
mod eval;
mod parser;

pub use ast::{
    ArithOp, CmpOp, CountAggregate, Element, Expr, GroupPattern, OrderKey, Projection, RegexPattern, SelectQuery,
    Slot, TriplePattern,
};
pub use eval::{
    compare_terms, evaluate, evaluate_with, explain_join_order, term_json, AccessPath, EvalOptions, EvalStats,
    JoinStrategy, PlanStep, Solutions,
};
pub use parser::{parse_query, QueryError, QueryErrorKind};
