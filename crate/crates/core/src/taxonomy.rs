//! Label alignment and subclass reasoning.
//!
//! A [`TaxonomyTable`] maps dataset-local label strings to shared concept IRIs
//! and arranges concepts in a subclass DAG. [`materialize`] forward-chains
//! three rules to a fixpoint, flagging every derived triple as inferred:
//!
//! | rule | premises                           | conclusion        |
//! |------|------------------------------------|-------------------|
//! | R1   | `A subClassOf B`, `B subClassOf C` | `A subClassOf C`  |
//! | R2   | `x type A`, `A subClassOf B`       | `x type B`        |
//! | R3   | `a hasLabel A`, `A subClassOf B`   | `a hasLabel B`    |
//!
//! Evaluation is semi-naive: each round only joins the previous round's new
//! facts against everything known so far.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rdf::{is_absolute_iri, Term, TermId, TripleSource, TripleStore};
use crate::schema::{cv, iri, ns};

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate alignment for dataset `{dataset}` label `{raw_label}`")]
    DuplicateAlignment { dataset: String, raw_label: String },
    #[error("subclass cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("concept <{0}> is used by an alignment but has no entry in `concepts`")]
    DanglingConcept(String),
    #[error("invalid concept IRI `{0}`")]
    InvalidIri(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub dataset: String,
    #[serde(rename = "rawLabel")]
    pub raw_label: String,
    pub concept: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axiom {
    pub sub: String,
    #[serde(rename = "super")]
    pub sup: String,
}

#[derive(Debug, Default, Deserialize)]
struct TaxonomyFile {
    #[serde(default)]
    alignments: Vec<Alignment>,
    #[serde(default)]
    axioms: Vec<Axiom>,
    #[serde(default)]
    concepts: BTreeMap<String, String>,
}

/// Validated alignments, subclass axioms and concept display names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TaxonomyTable {
    alignments: Vec<Alignment>,
    axioms: Vec<Axiom>,
    concepts: BTreeMap<String, String>,
    #[serde(skip)]
    lookup: HashMap<(String, String), usize>,
}

impl TaxonomyTable {
    pub fn new(
        alignments: Vec<Alignment>,
        axioms: Vec<Axiom>,
        concepts: BTreeMap<String, String>,
    ) -> Result<Self, TaxonomyError> {
        let mut lookup = HashMap::new();
        for (i, a) in alignments.iter().enumerate() {
            if lookup.insert((a.dataset.clone(), a.raw_label.clone()), i).is_some() {
                return Err(TaxonomyError::DuplicateAlignment {
                    dataset: a.dataset.clone(),
                    raw_label: a.raw_label.clone(),
                });
            }
        }
        let iris = alignments
            .iter()
            .map(|a| &a.concept)
            .chain(axioms.iter().flat_map(|ax| [&ax.sub, &ax.sup]))
            .chain(concepts.keys());
        for c in iris {
            if !is_absolute_iri(c) {
                return Err(TaxonomyError::InvalidIri(c.clone()));
            }
        }
        for a in &alignments {
            if !concepts.contains_key(&a.concept) {
                return Err(TaxonomyError::DanglingConcept(a.concept.clone()));
            }
        }
        if let Some(cycle) = find_cycle(&axioms) {
            return Err(TaxonomyError::CycleDetected(cycle));
        }
        Ok(Self { alignments, axioms, concepts, lookup })
    }

    /// Parses the JSON taxonomy file. Empty (or whitespace-only) input yields an
    /// empty table.
    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let file: TaxonomyFile = serde_json::from_str(text)?;
        Self::new(file.alignments, file.axioms, file.concepts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("taxonomy serializes")
    }

    pub fn alignments(&self) -> &[Alignment] {
        &self.alignments
    }

    pub fn axioms(&self) -> &[Axiom] {
        &self.axioms
    }

    pub fn concepts(&self) -> &BTreeMap<String, String> {
        &self.concepts
    }

    pub fn is_empty(&self) -> bool {
        self.alignments.is_empty() && self.axioms.is_empty() && self.concepts.is_empty()
    }

    /// Concept IRI aligned with `raw_label` in dataset `slug`.
    pub fn concept_for(&self, slug: &str, raw_label: &str) -> Option<&str> {
        self.lookup
            .get(&(slug.to_owned(), raw_label.to_owned()))
            .map(|i| self.alignments[*i].concept.as_str())
    }
}

/// Returns the members of one cycle in the axiom graph, if any.
fn find_cycle(axioms: &[Axiom]) -> Option<Vec<String>> {
    let mut edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for ax in axioms {
        if ax.sub == ax.sup {
            return Some(vec![ax.sub.clone(), ax.sup.clone()]);
        }
        edges.entry(&ax.sub).or_default().push(&ax.sup);
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: HashMap<&str, Mark> = HashMap::new();
    for &root in edges.keys() {
        if marks.contains_key(root) {
            continue;
        }
        // Iterative DFS; `path` mirrors the open nodes on the stack.
        let mut stack: Vec<(&str, usize)> = vec![(root, 0)];
        let mut path: Vec<&str> = vec![root];
        marks.insert(root, Mark::Open);
        while let Some((node, next)) = stack.last_mut() {
            let succ = edges.get(node).map(Vec::as_slice).unwrap_or(&[]);
            if let Some(&child) = succ.get(*next) {
                *next += 1;
                match marks.get(child) {
                    Some(Mark::Open) => {
                        let start = path.iter().position(|n| *n == child).unwrap();
                        let mut cycle: Vec<String> = path[start..].iter().map(|s| s.to_string()).collect();
                        cycle.push(child.to_owned());
                        return Some(cycle);
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(child, Mark::Open);
                        stack.push((child, 0));
                        path.push(child);
                    }
                }
            } else {
                marks.insert(node, Mark::Done);
                stack.pop();
                path.pop();
            }
        }
    }
    None
}

/// Asserts one `rdfs:subClassOf` triple per axiom and one `schema:name` per
/// concept; returns the number of triples that were new.
pub fn apply_taxonomy(table: &TaxonomyTable, store: &mut TripleStore) -> usize {
    let sub = iri(ns::RDFS_SUBCLASS_OF);
    let name = iri(cv::NAME);
    let mut added = 0;
    for ax in &table.axioms {
        added += usize::from(store.add(iri(&ax.sub), sub.clone(), iri(&ax.sup)).expect("validated IRIs"));
    }
    for (concept, display) in &table.concepts {
        added += usize::from(store.add(iri(concept), name.clone(), Term::string(display.clone())).expect("validated"));
    }
    added
}

/// Order in which each round's delta is processed. The fixpoint does not
/// depend on it; the knob exists so that can be tested.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DeltaOrder {
    #[default]
    Natural,
    Reversed,
    Shuffled(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Rel {
    Sub,
    Type,
    Label,
}

#[derive(Default)]
struct Facts {
    known: HashSet<(Rel, TermId, TermId)>,
    sup_of: HashMap<TermId, Vec<TermId>>,
    sub_of: HashMap<TermId, Vec<TermId>>,
    typed: HashMap<TermId, Vec<TermId>>,
    labelled: HashMap<TermId, Vec<TermId>>,
}

impl Facts {
    fn add(&mut self, fact: (Rel, TermId, TermId)) -> bool {
        if !self.known.insert(fact) {
            return false;
        }
        let (rel, s, o) = fact;
        match rel {
            Rel::Sub => {
                self.sup_of.entry(s).or_default().push(o);
                self.sub_of.entry(o).or_default().push(s);
            }
            Rel::Type => self.typed.entry(o).or_default().push(s),
            Rel::Label => self.labelled.entry(o).or_default().push(s),
        }
        true
    }

    fn get(map: &HashMap<TermId, Vec<TermId>>, k: TermId) -> &[TermId] {
        map.get(&k).map(Vec::as_slice).unwrap_or(&[])
    }

    fn derive(&self, (rel, s, o): (Rel, TermId, TermId), out: &mut Vec<(Rel, TermId, TermId)>) {
        match rel {
            Rel::Sub => {
                out.extend(Self::get(&self.sup_of, o).iter().map(|c| (Rel::Sub, s, *c)));
                out.extend(Self::get(&self.sub_of, s).iter().map(|z| (Rel::Sub, *z, o)));
                out.extend(Self::get(&self.typed, s).iter().map(|x| (Rel::Type, *x, o)));
                out.extend(Self::get(&self.labelled, s).iter().map(|a| (Rel::Label, *a, o)));
            }
            Rel::Type => out.extend(Self::get(&self.sup_of, o).iter().map(|b| (Rel::Type, s, *b))),
            Rel::Label => out.extend(Self::get(&self.sup_of, o).iter().map(|b| (Rel::Label, s, *b))),
        }
    }
}

/// Runs the reasoner to fixpoint; returns the number of inferred triples added.
pub fn materialize(store: &mut TripleStore) -> usize {
    materialize_with(store, DeltaOrder::Natural)
}

pub fn materialize_with(store: &mut TripleStore, order: DeltaOrder) -> usize {
    let sub_id = store.intern(&iri(ns::RDFS_SUBCLASS_OF));
    let type_id = store.intern(&iri(ns::RDF_TYPE));
    let label_id = store.intern(&iri(cv::HAS_LABEL));
    let pred_of = |rel| match rel {
        Rel::Sub => sub_id,
        Rel::Type => type_id,
        Rel::Label => label_id,
    };

    let mut facts = Facts::default();
    let mut delta = Vec::new();
    for (rel, p) in [(Rel::Sub, sub_id), (Rel::Type, type_id), (Rel::Label, label_id)] {
        for [s, _, o] in store.scan([None, Some(p), None]) {
            let fact = (rel, s, o);
            if facts.add(fact) {
                delta.push(fact);
            }
        }
    }
    if facts.sup_of.is_empty() {
        return 0;
    }

    let mut rng = match order {
        DeltaOrder::Shuffled(seed) => Some(SplitMix64::new(seed)),
        _ => None,
    };
    let mut added = 0;
    let mut derived = Vec::new();
    while !delta.is_empty() {
        match order {
            DeltaOrder::Natural => {}
            DeltaOrder::Reversed => delta.reverse(),
            DeltaOrder::Shuffled(_) => rng.as_mut().unwrap().shuffle(&mut delta),
        }
        derived.clear();
        for fact in &delta {
            facts.derive(*fact, &mut derived);
        }
        let mut next = Vec::new();
        for fact in derived.drain(..) {
            let (rel, s, o) = fact;
            // Reflexive subclass facts are never materialized.
            if rel == Rel::Sub && s == o {
                continue;
            }
            if facts.add(fact) {
                store.insert_ids([s, pred_of(rel), o], true);
                added += 1;
                next.push(fact);
            }
        }
        delta = next;
    }
    added
}

/// Removes every inferred triple.
pub fn retract_inferred(store: &mut TripleStore) -> usize {
    store.remove_inferred()
}

/// SplitMix64 (Steele, Lea, Flood 2014): `state += 0x9E3779B97F4A7C15`, then
/// two xor-shift-multiply rounds. Used wherever a pinned, portable permutation
/// is required.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `0..bound` via 128-bit multiply-high.
    pub fn below(&mut self, bound: u64) -> u64 {
        ((u128::from(self.next_u64()) * u128::from(bound)) >> 64) as u64
    }

    /// Fisher-Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
