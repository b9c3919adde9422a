//! RDF terms, triples and the in-memory triple store.

mod ntriples;
mod store;

use std::fmt;

use thiserror::Error;

pub use ntriples::{load_ntriples, parse_ntriples, NTriplesError};
pub use store::{Dictionary, IdPattern, Snapshot, TermId, TripleSource, TripleStore};

use crate::schema::ns;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("invalid IRI `{0}`: expected an absolute IRI (scheme followed by `:`) without spaces or `<>\"{{}}|^`\\`")]
    InvalidIri(String),
    #[error("invalid blank node label `{0}`: expected [A-Za-z0-9]+")]
    InvalidBlank(String),
    #[error("invalid literal datatype `{0}`")]
    InvalidDatatype(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed triple: {field}: {reason}")]
pub struct TripleError {
    pub field: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    Literal { lexical: String, datatype: String },
    Blank(String),
}

impl Term {
    pub fn iri(value: impl Into<String>) -> Result<Self, TermError> {
        let value = value.into();
        if is_absolute_iri(&value) {
            Ok(Term::Iri(value))
        } else {
            Err(TermError::InvalidIri(value))
        }
    }

    pub fn blank(label: impl Into<String>) -> Result<Self, TermError> {
        let label = label.into();
        if is_blank_label(&label) {
            Ok(Term::Blank(label))
        } else {
            Err(TermError::InvalidBlank(label))
        }
    }

    pub fn typed(lexical: impl Into<String>, datatype: impl Into<String>) -> Result<Self, TermError> {
        let datatype = datatype.into();
        if !is_absolute_iri(&datatype) {
            return Err(TermError::InvalidDatatype(datatype));
        }
        Ok(Term::Literal { lexical: lexical.into(), datatype })
    }

    /// An `xsd:string` literal.
    pub fn string(lexical: impl Into<String>) -> Self {
        Term::Literal { lexical: lexical.into(), datatype: ns::XSD_STRING.to_owned() }
    }

    pub fn integer(value: i64) -> Self {
        Term::Literal { lexical: value.to_string(), datatype: ns::XSD_INTEGER.to_owned() }
    }

    /// An `xsd:decimal` literal. Rust's float `Display` never uses exponent
    /// notation, so the lexical form is always a valid decimal.
    pub fn decimal(value: f64) -> Self {
        let mut lexical = value.to_string();
        if !lexical.contains('.') {
            lexical.push_str(".0");
        }
        Term::Literal { lexical, datatype: ns::XSD_DECIMAL.to_owned() }
    }

    pub(crate) fn iri_unchecked(value: impl Into<String>) -> Self {
        let value = value.into();
        debug_assert!(is_absolute_iri(&value), "{value}");
        Term::Iri(value)
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri(_))
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal { .. })
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, Term::Blank(_))
    }

    /// IRI text, literal lexical form, or blank label.
    pub fn value(&self) -> &str {
        match self {
            Term::Iri(v) | Term::Blank(v) => v,
            Term::Literal { lexical, .. } => lexical,
        }
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(v) => Some(v),
            _ => None,
        }
    }

    pub fn datatype(&self) -> Option<&str> {
        match self {
            Term::Literal { datatype, .. } => Some(datatype),
            _ => None,
        }
    }

    /// Numeric value of an `xsd:integer`/`xsd:decimal`/`xsd:double` literal.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Term::Literal { lexical, datatype } if ns::is_numeric_datatype(datatype) => {
                lexical.trim().parse().ok()
            }
            _ => None,
        }
    }

    /// Re-checks the invariants of whichever variant this is.
    pub fn check(&self) -> Result<(), TermError> {
        match self {
            Term::Iri(v) if !is_absolute_iri(v) => Err(TermError::InvalidIri(v.clone())),
            Term::Blank(v) if !is_blank_label(v) => Err(TermError::InvalidBlank(v.clone())),
            Term::Literal { datatype, .. } if !is_absolute_iri(datatype) => {
                Err(TermError::InvalidDatatype(datatype.clone()))
            }
            _ => Ok(()),
        }
    }
}

/// N-Triples rendering.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(v) => write!(f, "<{v}>"),
            Term::Blank(v) => write!(f, "_:{v}"),
            Term::Literal { lexical, datatype } => {
                f.write_str("\"")?;
                for c in lexical.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        c if (c as u32) < 0x20 || c == '\u{7f}' => write!(f, "\\u{:04X}", c as u32)?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")?;
                if datatype != ns::XSD_STRING {
                    write!(f, "^^<{datatype}>")?;
                }
                Ok(())
            }
        }
    }
}

/// A statement. Equality, ordering and hashing ignore the `inferred` flag.
#[derive(Debug, Clone, Eq)]
pub struct Triple {
    subject: Term,
    predicate: Term,
    object: Term,
    inferred: bool,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Self, TripleError> {
        let bad = |field: &'static str, reason: String| TripleError { field, reason };
        subject.check().map_err(|e| bad("subject", e.to_string()))?;
        predicate.check().map_err(|e| bad("predicate", e.to_string()))?;
        object.check().map_err(|e| bad("object", e.to_string()))?;
        if subject.is_literal() {
            return Err(bad("subject", format!("literal {subject} cannot be a subject")));
        }
        if !predicate.is_iri() {
            return Err(bad("predicate", format!("{predicate} is not an IRI")));
        }
        Ok(Self { subject, predicate, object, inferred: false })
    }

    pub(crate) fn from_parts_unchecked(subject: Term, predicate: Term, object: Term, inferred: bool) -> Self {
        Self { subject, predicate, object, inferred }
    }

    pub fn with_inferred(mut self, inferred: bool) -> Self {
        self.inferred = inferred;
        self
    }

    pub fn subject(&self) -> &Term {
        &self.subject
    }

    pub fn predicate(&self) -> &Term {
        &self.predicate
    }

    pub fn object(&self) -> &Term {
        &self.object
    }

    pub fn is_inferred(&self) -> bool {
        self.inferred
    }

    pub fn into_terms(self) -> (Term, Term, Term) {
        (self.subject, self.predicate, self.object)
    }
}

impl PartialEq for Triple {
    fn eq(&self, other: &Self) -> bool {
        self.subject == other.subject && self.predicate == other.predicate && self.object == other.object
    }
}

impl PartialOrd for Triple {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Triple {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.subject, &self.predicate, &self.object).cmp(&(&other.subject, &other.predicate, &other.object))
    }
}

impl std::hash::Hash for Triple {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.subject.hash(state);
        self.predicate.hash(state);
        self.object.hash(state);
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

pub(crate) fn is_absolute_iri(s: &str) -> bool {
    let Some(colon) = s.find(':') else {
        return false;
    };
    let scheme = &s[..colon];
    let mut chars = scheme.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    if !chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')) {
        return false;
    }
    !s.chars().any(|c| c <= ' ' || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\'))
}

fn is_blank_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric())
}
