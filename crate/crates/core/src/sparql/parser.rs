use std::collections::BTreeMap;
use std::fmt;

use regex::RegexBuilder;
use serde::Serialize;
use thiserror::Error;

use super::ast::*;
use crate::schema::ns;
use crate::Term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryErrorKind {
    Lexer,
    Parse,
    UnknownPrefix,
    UnboundFilterVariable,
    UnknownVariable,
    InvalidRegex,
    InvalidTerm,
}

impl fmt::Display for QueryErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lexer => "lexer error",
            Self::Parse => "parse error",
            Self::UnknownPrefix => "unknown prefix",
            Self::UnboundFilterVariable => "unbound filter variable",
            Self::UnknownVariable => "unknown variable",
            Self::InvalidRegex => "invalid regex",
            Self::InvalidTerm => "invalid term",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{kind} at line {line}, column {column}: {message}")]
pub struct QueryError {
    pub kind: QueryErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub expected: Vec<String>,
}

impl QueryError {
    fn new(kind: QueryErrorKind, pos: Pos, message: impl Into<String>) -> Self {
        Self { kind, line: pos.line, column: pos.column, message: message.into(), expected: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    IriRef(String),
    PName(String, String),
    Var(String),
    Str(String),
    Integer(String),
    Decimal(String),
    Double(String),
    Word(String),
    LangTag(String),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::IriRef(i) => write!(f, "<{i}>"),
            Tok::PName(p, l) => write!(f, "{p}:{l}"),
            Tok::Var(v) => write!(f, "?{v}"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Integer(n) | Tok::Decimal(n) | Tok::Double(n) => f.write_str(n),
            Tok::Word(w) => f.write_str(w),
            Tok::LangTag(t) => write!(f, "@{t}"),
            Tok::Punct(p) => write!(f, "'{p}'"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

const PUNCT: [&str; 19] =
    ["^^", "&&", "||", "!=", "<=", ">=", "{", "}", "(", ")", ".", ",", ";", "*", "=", "<", ">", "!", "+"];
const PUNCT_TAIL: [&str; 2] = ["-", "/"];

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, QueryError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |pos: Pos, msg: String| QueryError::new(QueryErrorKind::Lexer, pos, msg);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        let start = i;
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let tok = if c == '<' && iri_end(&chars, i).is_some() {
            let end = iri_end(&chars, i).unwrap_or(i);
            i = end + 1;
            Tok::IriRef(chars[start + 1..end].iter().collect())
        } else if c == '?' || c == '$' {
            i += 1;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            if i == start + 1 {
                return Err(err(pos, "expected a variable name".into()));
            }
            Tok::Var(chars[start + 1..i].iter().collect())
        } else if c == '"' || c == '\'' {
            let (s, end) = lex_string(&chars, i).map_err(|(off, m)| err(Pos { line, column: col + off }, m))?;
            i = end;
            Tok::Str(s)
        } else if c == '@' {
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '-') {
                i += 1;
            }
            Tok::LangTag(chars[start + 1..i].iter().collect())
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            lex_number(&chars, &mut i)
        } else if c == ':' || c.is_alphabetic() || c == '_' {
            while i < chars.len() && is_name_char(chars[i]) {
                i += 1;
            }
            if chars.get(i) == Some(&':') {
                let prefix: String = chars[start..i].iter().collect();
                i += 1;
                let local_start = i;
                while i < chars.len() && (is_name_char(chars[i]) || chars[i] == '.' || chars[i] == ':') {
                    i += 1;
                }
                while i > local_start && chars[i - 1] == '.' {
                    i -= 1;
                }
                Tok::PName(prefix, chars[local_start..i].iter().collect())
            } else {
                Tok::Word(chars[start..i].iter().collect())
            }
        } else if let Some(p) = PUNCT.iter().chain(&PUNCT_TAIL).find(|p| {
            let pc: Vec<char> = p.chars().collect();
            chars[i..].starts_with(&pc)
        }) {
            i += p.chars().count();
            Tok::Punct(p)
        } else {
            return Err(err(pos, format!("unexpected character `{c}`")));
        };
        col += i - start;
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, column: col }));
    Ok(out)
}

/// Index of the closing `>` if `<` at `i` starts an IRIREF. Only absolute
/// IRIs are accepted, which keeps `?x<3&&?y>1` a comparison.
fn iri_end(chars: &[char], i: usize) -> Option<usize> {
    let mut j = i + 1;
    let mut scheme = true;
    while j < chars.len() {
        match chars[j] {
            ':' if scheme && j > i + 1 => {
                scheme = false;
                j += 1;
            }
            c if scheme && !(c.is_ascii_alphabetic() || (j > i + 1 && (c.is_ascii_digit() || "+-.".contains(c)))) => {
                return None
            }
            '>' if !scheme => return Some(j),
            c if c <= ' ' || "<\"{}|^`\\".contains(c) => return None,
            _ => j += 1,
        }
    }
    None
}

fn lex_string(chars: &[char], i: usize) -> Result<(String, usize), (usize, String)> {
    let quote = chars[i];
    let mut out = String::new();
    let mut j = i + 1;
    loop {
        match chars.get(j) {
            None | Some('\n') => return Err((0, "unterminated string".into())),
            Some(&c) if c == quote => return Ok((out, j + 1)),
            Some('\\') => {
                let esc = chars.get(j + 1).copied();
                out.push(match esc {
                    Some('t') => '\t',
                    Some('n') => '\n',
                    Some('r') => '\r',
                    Some('b') => '\u{8}',
                    Some('f') => '\u{c}',
                    Some(c @ ('"' | '\'' | '\\')) => c,
                    _ => return Err((j - i, "invalid escape sequence".into())),
                });
                j += 2;
            }
            Some(&c) => {
                out.push(c);
                j += 1;
            }
        }
    }
}

fn lex_number(chars: &[char], i: &mut usize) -> Tok {
    let start = *i;
    let digits = |i: &mut usize| {
        while *i < chars.len() && chars[*i].is_ascii_digit() {
            *i += 1;
        }
    };
    digits(i);
    let mut decimal = false;
    if chars.get(*i) == Some(&'.') && chars.get(*i + 1).is_some_and(char::is_ascii_digit) {
        decimal = true;
        *i += 1;
        digits(i);
    }
    if matches!(chars.get(*i), Some('e' | 'E')) {
        let mut j = *i + 1;
        if matches!(chars.get(j), Some('+' | '-')) {
            j += 1;
        }
        if chars.get(j).is_some_and(char::is_ascii_digit) {
            *i = j;
            digits(i);
            return Tok::Double(chars[start..*i].iter().collect());
        }
    }
    let text: String = chars[start..*i].iter().collect();
    if decimal {
        Tok::Decimal(text)
    } else {
        Tok::Integer(text)
    }
}

/// Parses a query in the supported subset. Prefixed names are expanded
/// against the built-in defaults, overridden by the query's own `PREFIX`es.
pub fn parse_query(text: &str) -> Result<SelectQuery, QueryError> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, at: 0, prefixes: BTreeMap::new(), filter_refs: Vec::new() };
    p.query()
}

struct Parser {
    tokens: Vec<(Tok, Pos)>,
    at: usize,
    prefixes: BTreeMap<String, String>,
    filter_refs: Vec<(String, Pos)>,
}

type PResult<T> = Result<T, QueryError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].0
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected<T>(&self, expected: &[&str]) -> PResult<T> {
        let mut e = QueryError::new(
            QueryErrorKind::Parse,
            self.pos(),
            format!("expected {}, found {}", expected.join(" or "), self.peek()),
        );
        e.expected = expected.iter().map(|s| (*s).to_owned()).collect();
        Err(e)
    }

    fn is_word(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_word(&mut self, kw: &str) -> bool {
        let hit = self.is_word(kw);
        if hit {
            self.bump();
        }
        hit
    }

    fn expect_word(&mut self, kw: &str) -> PResult<()> {
        if self.eat_word(kw) {
            Ok(())
        } else {
            self.unexpected(&[kw])
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        let hit = self.is_punct(p);
        if hit {
            self.bump();
        }
        hit
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.unexpected(&[&format!("'{p}'")])
        }
    }

    fn expect_var(&mut self) -> PResult<(String, Pos)> {
        match self.peek().clone() {
            Tok::Var(v) => {
                let pos = self.pos();
                self.bump();
                Ok((v, pos))
            }
            _ => self.unexpected(&["variable"]),
        }
    }

    fn expect_int(&mut self) -> PResult<usize> {
        match self.peek().clone() {
            Tok::Integer(n) => match n.parse() {
                Ok(v) => {
                    self.bump();
                    Ok(v)
                }
                Err(_) => Err(QueryError::new(QueryErrorKind::Parse, self.pos(), "integer out of range")),
            },
            _ => self.unexpected(&["integer"]),
        }
    }

    fn query(&mut self) -> PResult<SelectQuery> {
        let mut declared = BTreeMap::new();
        while self.eat_word("PREFIX") {
            let (prefix, pos) = match self.bump() {
                (Tok::PName(p, l), pos) if l.is_empty() => (p, pos),
                _ => {
                    self.at -= 1;
                    return self.unexpected(&["prefix name ending in ':'"]);
                }
            };
            let iri = match self.bump() {
                (Tok::IriRef(i), _) => i,
                _ => {
                    self.at -= 1;
                    return self.unexpected(&["IRI"]);
                }
            };
            if !crate::rdf::is_absolute_iri(&iri) {
                return Err(QueryError::new(QueryErrorKind::InvalidTerm, pos, format!("prefix IRI `{iri}` is not absolute")));
            }
            declared.insert(prefix, iri);
        }
        self.prefixes = ns::DEFAULT_PREFIXES.iter().map(|(p, i)| ((*p).to_owned(), (*i).to_owned())).collect();
        self.prefixes.extend(declared.clone());

        self.expect_word("SELECT")?;
        let distinct = self.eat_word("DISTINCT");
        let mut proj_vars: Vec<(String, Pos)> = Vec::new();
        let mut count = None;
        let mut count_pos = self.pos();
        if self.eat_punct("*") {
        } else {
            loop {
                match self.peek() {
                    Tok::Var(_) if count.is_none() => proj_vars.push(self.expect_var()?),
                    Tok::Punct("(") if count.is_none() => {
                        count_pos = self.pos();
                        count = Some(self.count_aggregate()?);
                    }
                    _ => break,
                }
            }
            if proj_vars.is_empty() && count.is_none() {
                return self.unexpected(&["variable", "'*'", "'('"]);
            }
        }
        let star = proj_vars.is_empty() && count.is_none();
        self.eat_word("WHERE");
        let pattern = self.group()?;

        let mut group_by = Vec::new();
        if self.eat_word("GROUP") {
            self.expect_word("BY")?;
            group_by.push(self.expect_var()?);
            while matches!(self.peek(), Tok::Var(_)) {
                group_by.push(self.expect_var()?);
            }
        }
        let mut order_by = Vec::new();
        if self.eat_word("ORDER") {
            self.expect_word("BY")?;
            loop {
                let descending = if self.is_word("ASC") || self.is_word("DESC") {
                    let desc = self.is_word("DESC");
                    self.bump();
                    self.expect_punct("(")?;
                    let v = self.expect_var()?;
                    self.expect_punct(")")?;
                    order_by.push((v, desc));
                    continue;
                } else if matches!(self.peek(), Tok::Var(_)) {
                    false
                } else if order_by.is_empty() {
                    return self.unexpected(&["variable", "ASC", "DESC"]);
                } else {
                    break;
                };
                order_by.push((self.expect_var()?, descending));
            }
        }
        let (mut limit, mut offset) = (None, None);
        loop {
            if limit.is_none() && self.eat_word("LIMIT") {
                limit = Some(self.expect_int()?);
            } else if offset.is_none() && self.eat_word("OFFSET") {
                offset = Some(self.expect_int()?);
            } else {
                break;
            }
        }
        if *self.peek() != Tok::Eof {
            let mut expected = vec!["end of query"];
            if group_by.is_empty() && order_by.is_empty() {
                expected.push("GROUP BY");
            }
            if order_by.is_empty() {
                expected.push("ORDER BY");
            }
            if limit.is_none() {
                expected.push("LIMIT");
            }
            if offset.is_none() {
                expected.push("OFFSET");
            }
            return self.unexpected(&expected);
        }

        // Scope checks.
        let in_pattern = pattern.bound_vars();
        let known = |v: &str| in_pattern.iter().any(|p| p == v);
        let unknown = |v: &str, pos: Pos, what: &str| {
            Err(QueryError::new(
                QueryErrorKind::UnknownVariable,
                pos,
                format!("{what} variable ?{v} does not appear in the pattern"),
            ))
        };
        for (v, pos) in proj_vars.iter().chain(&group_by) {
            if !known(v) {
                return unknown(v, *pos, "projected");
            }
        }
        let grouped = count.is_some() || !group_by.is_empty();
        if let Some(c) = &count {
            if let Some(t) = &c.target {
                if !known(t) {
                    return unknown(t, count_pos, "counted");
                }
            }
            if known(&c.alias) {
                return Err(QueryError::new(
                    QueryErrorKind::Parse,
                    count_pos,
                    format!("alias ?{} is already used in the pattern", c.alias),
                ));
            }
        }
        if grouped {
            for (v, pos) in &proj_vars {
                if !group_by.iter().any(|(g, _)| g == v) {
                    return Err(QueryError::new(
                        QueryErrorKind::Parse,
                        *pos,
                        format!("?{v} is projected but not in GROUP BY"),
                    ));
                }
            }
            if count.is_none() && proj_vars.is_empty() {
                return Err(QueryError::new(QueryErrorKind::Parse, count_pos, "SELECT * cannot be used with GROUP BY"));
            }
        }
        for ((v, _), pos) in order_by.iter().map(|(vp, d)| ((vp.0.clone(), d), vp.1)) {
            let ok = if grouped {
                group_by.iter().any(|(g, _)| *g == v) || count.as_ref().is_some_and(|c| c.alias == v)
            } else {
                known(&v)
            };
            if !ok {
                return unknown(&v, pos, "ordering");
            }
        }

        let names = |vs: Vec<(String, Pos)>| vs.into_iter().map(|(v, _)| v).collect::<Vec<_>>();
        let projection = match (star, count) {
            (true, _) => Projection::Star,
            (false, Some(count)) => Projection::Count { vars: names(proj_vars), count },
            (false, None) => Projection::Vars(names(proj_vars)),
        };
        Ok(SelectQuery {
            prefixes: declared,
            projection,
            distinct,
            pattern,
            group_by: names(group_by),
            order_by: order_by.into_iter().map(|((var, _), descending)| OrderKey { var, descending }).collect(),
            limit,
            offset,
        })
    }

    fn count_aggregate(&mut self) -> PResult<CountAggregate> {
        self.expect_punct("(")?;
        self.expect_word("COUNT")?;
        self.expect_punct("(")?;
        let distinct = self.eat_word("DISTINCT");
        let target = if self.eat_punct("*") { None } else { Some(self.expect_var()?.0) };
        self.expect_punct(")")?;
        self.expect_word("AS")?;
        let alias = self.expect_var()?.0;
        self.expect_punct(")")?;
        Ok(CountAggregate { distinct, target, alias })
    }

    fn group(&mut self) -> PResult<GroupPattern> {
        self.expect_punct("{")?;
        let mut elements = Vec::new();
        let mut refs = Vec::new();
        loop {
            match self.peek() {
                Tok::Punct("}") => {
                    self.bump();
                    break;
                }
                Tok::Punct(".") => {
                    self.bump();
                }
                Tok::Punct("{") => {
                    let mut branches = vec![self.group()?];
                    while self.eat_word("UNION") {
                        branches.push(self.group()?);
                    }
                    elements.push(if branches.len() == 1 {
                        Element::Group(branches.pop().unwrap_or_default())
                    } else {
                        Element::Union(branches)
                    });
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("FILTER") => {
                    self.bump();
                    self.filter_refs.clear();
                    let expr = if self.is_word("REGEX") {
                        self.primary()?
                    } else {
                        self.expect_punct("(")?;
                        let e = self.expr()?;
                        self.expect_punct(")")?;
                        e
                    };
                    refs.append(&mut self.filter_refs);
                    elements.push(Element::Filter(expr));
                }
                Tok::Eof => return self.unexpected(&["'}'"]),
                _ => {
                    self.triples_block(&mut elements)?;
                    if !self.is_punct("}") && !self.eat_punct(".") && !self.is_punct("{") && !self.is_word("FILTER") {
                        return self.unexpected(&["'.'", "'}'"]);
                    }
                }
            }
        }
        let group = GroupPattern { elements };
        let bound = group.bound_vars();
        if let Some((v, pos)) = refs.into_iter().find(|(v, _)| !bound.contains(v)) {
            return Err(QueryError::new(
                QueryErrorKind::UnboundFilterVariable,
                pos,
                format!("filter variable ?{v} is not bound in its group"),
            ));
        }
        Ok(group)
    }

    fn triples_block(&mut self, out: &mut Vec<Element>) -> PResult<()> {
        let subject = self.term_slot(true)?;
        loop {
            let predicate = self.predicate()?;
            loop {
                let object = self.term_slot(false)?;
                out.push(Element::Triple(TriplePattern::new(subject.clone(), predicate.clone(), object)));
                if !self.eat_punct(",") {
                    break;
                }
            }
            if !self.eat_punct(";") {
                return Ok(());
            }
            if self.is_punct(".") || self.is_punct("}") {
                return Ok(());
            }
        }
    }

    fn predicate(&mut self) -> PResult<Slot> {
        if matches!(self.peek(), Tok::Word(w) if w == "a") {
            self.bump();
            return Ok(Slot::Term(crate::schema::iri(ns::RDF_TYPE)));
        }
        match self.peek() {
            Tok::Var(_) => Ok(Slot::Var(self.expect_var()?.0)),
            Tok::IriRef(_) | Tok::PName(..) => Ok(Slot::Term(self.iri_term()?)),
            _ => self.unexpected(&["variable", "IRI", "'a'"]),
        }
    }

    fn term_slot(&mut self, subject: bool) -> PResult<Slot> {
        match self.peek() {
            Tok::Var(_) => Ok(Slot::Var(self.expect_var()?.0)),
            Tok::IriRef(_) | Tok::PName(..) => Ok(Slot::Term(self.iri_term()?)),
            _ if subject => self.unexpected(&["variable", "IRI"]),
            _ => match self.literal()? {
                Some(t) => Ok(Slot::Term(t)),
                None => self.unexpected(&["variable", "IRI", "literal"]),
            },
        }
    }

    fn iri_term(&mut self) -> PResult<Term> {
        let pos = self.pos();
        let iri = match self.bump().0 {
            Tok::IriRef(i) => i,
            Tok::PName(prefix, local) => match self.prefixes.get(&prefix) {
                Some(ns) => format!("{ns}{local}"),
                None => {
                    return Err(QueryError::new(
                        QueryErrorKind::UnknownPrefix,
                        pos,
                        format!("prefix `{prefix}:` is not declared"),
                    ))
                }
            },
            _ => {
                self.at -= 1;
                return self.unexpected(&["IRI"]);
            }
        };
        Term::iri(iri).map_err(|e| QueryError::new(QueryErrorKind::InvalidTerm, pos, e.to_string()))
    }

    /// Literal in term position, or `None` if the next token cannot start one.
    fn literal(&mut self) -> PResult<Option<Term>> {
        let pos = self.pos();
        let negative = if self.is_punct("-") || self.is_punct("+") {
            let neg = self.is_punct("-");
            self.bump();
            if !matches!(self.peek(), Tok::Integer(_) | Tok::Decimal(_) | Tok::Double(_)) {
                return self.unexpected(&["number"]);
            }
            neg
        } else {
            false
        };
        let sign = if negative { "-" } else { "" };
        let typed = |lex: String, dt: &str| Term::typed(lex, dt).map_err(|e| QueryError::new(QueryErrorKind::InvalidTerm, pos, e.to_string()));
        let term = match self.peek().clone() {
            Tok::Integer(n) => typed(format!("{sign}{n}"), ns::XSD_INTEGER)?,
            Tok::Decimal(n) => typed(format!("{sign}{n}"), ns::XSD_DECIMAL)?,
            Tok::Double(n) => typed(format!("{sign}{n}"), ns::XSD_DOUBLE)?,
            Tok::Word(w) if w == "true" || w == "false" => typed(w, ns::XSD_BOOLEAN)?,
            Tok::Str(s) => {
                self.bump();
                if let Tok::LangTag(_) = self.peek() {
                    return Err(QueryError::new(QueryErrorKind::InvalidTerm, self.pos(), "language tags are not supported"));
                }
                if self.eat_punct("^^") {
                    let dt_pos = self.pos();
                    let dt = self.iri_term()?;
                    return Term::typed(s, dt.value())
                        .map(Some)
                        .map_err(|e| QueryError::new(QueryErrorKind::InvalidTerm, dt_pos, e.to_string()));
                }
                return Ok(Some(Term::string(s)));
            }
            _ => return Ok(None),
        };
        self.bump();
        Ok(Some(term))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.eat_punct("||") {
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and_expr()?));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.relational()?;
        while self.eat_punct("&&") {
            lhs = Expr::And(Box::new(lhs), Box::new(self.relational()?));
        }
        Ok(lhs)
    }

    fn relational(&mut self) -> PResult<Expr> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Punct("=") => CmpOp::Eq,
            Tok::Punct("!=") => CmpOp::Ne,
            Tok::Punct("<") => CmpOp::Lt,
            Tok::Punct("<=") => CmpOp::Le,
            Tok::Punct(">") => CmpOp::Gt,
            Tok::Punct(">=") => CmpOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        Ok(Expr::Cmp(op, Box::new(lhs), Box::new(self.additive()?)))
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("+") => ArithOp::Add,
                Tok::Punct("-") => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Arith(op, Box::new(lhs), Box::new(self.multiplicative()?));
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("*") => ArithOp::Mul,
                Tok::Punct("/") => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Arith(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_punct("!") {
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        if self.eat_punct("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_punct("+") {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Var(v) => {
                self.filter_refs.push((v.clone(), self.pos()));
                self.bump();
                Ok(Expr::Var(v))
            }
            Tok::IriRef(_) | Tok::PName(..) => Ok(Expr::Const(self.iri_term()?)),
            Tok::Word(w) if w.eq_ignore_ascii_case("REGEX") => {
                self.bump();
                self.expect_punct("(")?;
                let target = self.expr()?;
                self.expect_punct(",")?;
                let pat_pos = self.pos();
                let Tok::Str(source) = self.peek().clone() else { return self.unexpected(&["string pattern"]) };
                self.bump();
                let flags = if self.eat_punct(",") {
                    match self.bump().0 {
                        Tok::Str(f) => f,
                        _ => {
                            self.at -= 1;
                            return self.unexpected(&["string flags"]);
                        }
                    }
                } else {
                    String::new()
                };
                self.expect_punct(")")?;
                let mut b = RegexBuilder::new(&source);
                for f in flags.chars() {
                    match f {
                        'i' => b.case_insensitive(true),
                        's' => b.dot_matches_new_line(true),
                        'm' => b.multi_line(true),
                        'x' => b.ignore_whitespace(true),
                        _ => {
                            return Err(QueryError::new(QueryErrorKind::InvalidRegex, pat_pos, format!("unknown flag `{f}`")))
                        }
                    };
                }
                let regex = b.build().map_err(|e| QueryError::new(QueryErrorKind::InvalidRegex, pat_pos, e.to_string()))?;
                Ok(Expr::Regex(Box::new(target), RegexPattern { source, flags, regex }))
            }
            _ => match self.literal()? {
                Some(t) => Ok(Expr::Const(t)),
                None => self.unexpected(&["expression"]),
            },
        }
    }
}
