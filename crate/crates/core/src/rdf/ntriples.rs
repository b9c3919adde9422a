//! N-Triples reading and canonical writing.
//!
//! Output is sorted by `(subject, predicate, object)` rendered text so that a
//! dump is a pure function of the triple set.

use thiserror::Error;

use super::{is_absolute_iri, Term, Triple, TripleSource, TripleStore};
use crate::schema::ns;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NTriplesError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}, column {column}: invalid IRI <{iri}>: not absolute")]
    Iri { line: usize, column: usize, iri: String },
}

impl NTriplesError {
    pub fn line(&self) -> usize {
        match self {
            Self::Syntax { line, .. } | Self::Iri { line, .. } => *line,
        }
    }

    pub fn column(&self) -> usize {
        match self {
            Self::Syntax { column, .. } | Self::Iri { column, .. } => *column,
        }
    }
}

/// Canonical dump of a store (or snapshot).
pub(crate) fn write_ntriples<S: TripleSource + ?Sized>(store: &S, include_inferred: bool) -> String {
    let dict = store.dictionary();
    let mut lines: Vec<[String; 3]> = store
        .scan([None, None, None])
        .filter(|ids| include_inferred || !store.is_inferred(*ids))
        .map(|ids| ids.map(|id| dict.term(id).to_string()))
        .collect();
    lines.sort_unstable();
    let mut out = String::with_capacity(lines.len() * 96);
    for [s, p, o] in lines {
        out.push_str(&s);
        out.push(' ');
        out.push_str(&p);
        out.push(' ');
        out.push_str(&o);
        out.push_str(" .\n");
    }
    out
}

impl TripleStore {
    pub fn dump_ntriples(&self, include_inferred: bool) -> String {
        write_ntriples(self, include_inferred)
    }
}

impl super::Snapshot {
    pub fn dump_ntriples(&self, include_inferred: bool) -> String {
        write_ntriples(self, include_inferred)
    }
}

/// Parses a document into triples, in document order (duplicates kept).
pub fn parse_ntriples(text: &str) -> Result<Vec<Triple>, NTriplesError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let mut parser = LineParser { chars: line.chars().collect(), pos: 0, line: idx + 1 };
        if let Some(triple) = parser.parse_line()? {
            out.push(triple);
        }
    }
    Ok(out)
}

/// Parses a document into a fresh store; duplicates collapse.
pub fn load_ntriples(text: &str, mark_inferred: bool) -> Result<TripleStore, NTriplesError> {
    let mut store = TripleStore::new();
    for t in parse_ntriples(text)? {
        store.insert(&t.with_inferred(mark_inferred));
    }
    Ok(store)
}

struct LineParser {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl LineParser {
    fn err(&self, message: impl Into<String>) -> NTriplesError {
        NTriplesError::Syntax { line: self.line, column: self.pos + 1, message: message.into() }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t')) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: char) -> Result<(), NTriplesError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn at_line_end(&mut self) -> bool {
        self.skip_ws();
        matches!(self.peek(), None | Some('#'))
    }

    fn parse_line(&mut self) -> Result<Option<Triple>, NTriplesError> {
        if self.at_line_end() {
            return Ok(None);
        }
        let subject = match self.peek() {
            Some('<') => self.iri()?,
            Some('_') => self.blank()?,
            _ => return Err(self.err("expected subject IRI or blank node")),
        };
        self.skip_ws();
        if self.peek() != Some('<') {
            return Err(self.err("expected predicate IRI"));
        }
        let predicate = self.iri()?;
        self.skip_ws();
        let object = match self.peek() {
            Some('<') => self.iri()?,
            Some('_') => self.blank()?,
            Some('"') => self.literal()?,
            _ => return Err(self.err("expected object IRI, blank node or literal")),
        };
        self.skip_ws();
        self.expect('.')?;
        if !self.at_line_end() {
            return Err(self.err("unexpected content after `.`"));
        }
        Ok(Some(Triple::from_parts_unchecked(subject, predicate, object, false)))
    }

    fn iri(&mut self) -> Result<Term, NTriplesError> {
        let start = self.pos;
        self.expect('<')?;
        let mut value = String::new();
        loop {
            match self.peek() {
                None => return Err(self.err("unterminated IRI")),
                Some('>') => {
                    self.pos += 1;
                    break;
                }
                Some('\\') => value.push(self.uchar()?),
                Some(c) if c <= ' ' || matches!(c, '<' | '"' | '{' | '}' | '|' | '^' | '`') => {
                    return Err(self.err(format!("character {c:?} not allowed in IRI")));
                }
                Some(c) => {
                    value.push(c);
                    self.pos += 1;
                }
            }
        }
        if !is_absolute_iri(&value) {
            return Err(NTriplesError::Iri { line: self.line, column: start + 1, iri: value });
        }
        Ok(Term::Iri(value))
    }

    fn blank(&mut self) -> Result<Term, NTriplesError> {
        self.expect('_')?;
        self.expect(':')?;
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("empty blank node label"));
        }
        Ok(Term::Blank(self.chars[start..self.pos].iter().collect()))
    }

    fn literal(&mut self) -> Result<Term, NTriplesError> {
        self.expect('"')?;
        let mut lexical = String::new();
        loop {
            match self.peek() {
                None => return Err(self.err("unterminated string literal")),
                Some('"') => {
                    self.pos += 1;
                    break;
                }
                Some('\\') => lexical.push(self.echar()?),
                Some(c @ ('\n' | '\r')) => return Err(self.err(format!("raw {c:?} in literal"))),
                Some(c) => {
                    lexical.push(c);
                    self.pos += 1;
                }
            }
        }
        let datatype = match self.peek() {
            Some('^') => {
                self.pos += 1;
                self.expect('^')?;
                match self.iri()? {
                    Term::Iri(dt) => dt,
                    _ => unreachable!(),
                }
            }
            Some('@') => return Err(self.err("language-tagged literals are not supported")),
            _ => ns::XSD_STRING.to_owned(),
        };
        Ok(Term::Literal { lexical, datatype })
    }

    fn echar(&mut self) -> Result<char, NTriplesError> {
        let c = match self.chars.get(self.pos + 1) {
            Some('t') => '\t',
            Some('b') => '\u{8}',
            Some('n') => '\n',
            Some('r') => '\r',
            Some('f') => '\u{c}',
            Some('"') => '"',
            Some('\'') => '\'',
            Some('\\') => '\\',
            Some('u' | 'U') => return self.uchar(),
            _ => return Err(self.err("invalid escape sequence")),
        };
        self.pos += 2;
        Ok(c)
    }

    fn uchar(&mut self) -> Result<char, NTriplesError> {
        let width = match self.chars.get(self.pos + 1) {
            Some('u') => 4,
            Some('U') => 8,
            _ => return Err(self.err("expected \\u or \\U escape")),
        };
        let digits: String = self.chars.iter().skip(self.pos + 2).take(width).collect();
        if digits.len() != width {
            return Err(self.err("truncated unicode escape"));
        }
        let c = u32::from_str_radix(&digits, 16)
            .ok()
            .and_then(char::from_u32)
            .ok_or_else(|| self.err(format!("invalid unicode escape {digits}")))?;
        self.pos += 2 + width;
        Ok(c)
    }
}
