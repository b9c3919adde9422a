use std::collections::{BTreeSet, HashMap, HashSet};
use std::ops::RangeInclusive;
use std::sync::Arc;

use super::{Term, Triple};

/// Dense identifier of a term inside one [`Dictionary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(pub u32);

/// A triple pattern over encoded terms; `None` is a wildcard.
pub type IdPattern = [Option<TermId>; 3];

type Key = [TermId; 3];

/// Bidirectional term <-> id map. Ids are dense and never reused.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    terms: Vec<Term>,
    ids: HashMap<Term, TermId>,
}

impl Dictionary {
    pub fn lookup(&self, term: &Term) -> Option<TermId> {
        self.ids.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> &Term {
        &self.terms[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn intern(&mut self, term: &Term) -> TermId {
        if let Some(id) = self.ids.get(term) {
            return *id;
        }
        let id = TermId(u32::try_from(self.terms.len()).expect("term dictionary overflow"));
        self.terms.push(term.clone());
        self.ids.insert(term.clone(), id);
        id
    }
}

/// Read access shared by the mutable store and frozen snapshots. The query
/// engine and reasoner are written against this trait.
pub trait TripleSource {
    fn dictionary(&self) -> &Dictionary;

    /// Encoded triples matching `pattern`, in `(s, p, o)` order, sorted by the
    /// index that serves the pattern.
    fn scan(&self, pattern: IdPattern) -> Box<dyn Iterator<Item = [TermId; 3]> + '_>;

    /// Same as `scan(pattern).count()` but computed from index bounds.
    fn count(&self, pattern: IdPattern) -> usize;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_inferred(&self, ids: [TermId; 3]) -> bool;

    /// Encodes a term pattern. Returns `None` when a bound term is unknown to
    /// the dictionary, i.e. the pattern cannot match anything.
    fn encode_pattern(&self, s: Option<&Term>, p: Option<&Term>, o: Option<&Term>) -> Option<IdPattern> {
        let dict = self.dictionary();
        let enc = |t: Option<&Term>| match t {
            None => Some(None),
            Some(t) => dict.lookup(t).map(Some),
        };
        Some([enc(s)?, enc(p)?, enc(o)?])
    }

    fn decode(&self, ids: [TermId; 3]) -> Triple {
        let dict = self.dictionary();
        Triple::from_parts_unchecked(
            dict.term(ids[0]).clone(),
            dict.term(ids[1]).clone(),
            dict.term(ids[2]).clone(),
            self.is_inferred(ids),
        )
    }

    /// Decoded triples matching a term pattern.
    fn match_pattern<'a>(
        &'a self,
        s: Option<&Term>,
        p: Option<&Term>,
        o: Option<&Term>,
    ) -> Box<dyn Iterator<Item = Triple> + 'a> {
        match self.encode_pattern(s, p, o) {
            Some(pattern) => Box::new(self.scan(pattern).map(move |ids| self.decode(ids))),
            None => Box::new(std::iter::empty()),
        }
    }

    fn count_matches(&self, s: Option<&Term>, p: Option<&Term>, o: Option<&Term>) -> usize {
        self.encode_pattern(s, p, o).map_or(0, |pattern| self.count(pattern))
    }

    fn contains(&self, triple: &Triple) -> bool {
        self.count_matches(Some(triple.subject()), Some(triple.predicate()), Some(triple.object())) == 1
    }
}

/// Which of the three orderings serves a pattern, and the bound key prefix in
/// that ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ordering3 {
    Spo,
    Pos,
    Osp,
}

impl Ordering3 {
    fn choose(pattern: IdPattern) -> (Self, Vec<TermId>) {
        match pattern {
            [Some(s), Some(p), Some(o)] => (Self::Spo, vec![s, p, o]),
            [Some(s), Some(p), None] => (Self::Spo, vec![s, p]),
            [Some(s), None, Some(o)] => (Self::Osp, vec![o, s]),
            [Some(s), None, None] => (Self::Spo, vec![s]),
            [None, Some(p), Some(o)] => (Self::Pos, vec![p, o]),
            [None, Some(p), None] => (Self::Pos, vec![p]),
            [None, None, Some(o)] => (Self::Osp, vec![o]),
            [None, None, None] => (Self::Spo, vec![]),
        }
    }

    fn permute(self, [s, p, o]: Key) -> Key {
        match self {
            Self::Spo => [s, p, o],
            Self::Pos => [p, o, s],
            Self::Osp => [o, s, p],
        }
    }

    fn unpermute(self, k: Key) -> Key {
        match self {
            Self::Spo => k,
            Self::Pos => [k[2], k[0], k[1]],
            Self::Osp => [k[1], k[2], k[0]],
        }
    }
}

fn prefix_range(prefix: &[TermId]) -> RangeInclusive<Key> {
    let mut lo = [TermId(0); 3];
    let mut hi = [TermId(u32::MAX); 3];
    for (i, id) in prefix.iter().enumerate() {
        lo[i] = *id;
        hi[i] = *id;
    }
    lo..=hi
}

/// Mutable, dictionary-encoded triple set with SPO, POS and OSP indexes.
///
/// Writers hold `&mut TripleStore`; readers take a [`Snapshot`], which is
/// immutable and can be shared across threads.
#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    dict: Arc<Dictionary>,
    /// Membership plus provenance: `true` for inferred.
    facts: HashMap<Key, bool>,
    spo: BTreeSet<Key>,
    pos: BTreeSet<Key>,
    osp: BTreeSet<Key>,
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an asserted or inferred triple depending on its flag.
    ///
    /// Returns `false` when the triple was already present. An asserted
    /// insert over an inferred copy clears the inferred flag.
    pub fn insert(&mut self, triple: &Triple) -> bool {
        let dict = Arc::make_mut(&mut self.dict);
        let key = [
            dict.intern(triple.subject()),
            dict.intern(triple.predicate()),
            dict.intern(triple.object()),
        ];
        self.insert_ids(key, triple.is_inferred())
    }

    pub(crate) fn insert_ids(&mut self, key: Key, inferred: bool) -> bool {
        match self.facts.get_mut(&key) {
            Some(flag) => {
                if *flag && !inferred {
                    *flag = false;
                }
                false
            }
            None => {
                self.facts.insert(key, inferred);
                self.spo.insert(key);
                self.pos.insert(Ordering3::Pos.permute(key));
                self.osp.insert(Ordering3::Osp.permute(key));
                true
            }
        }
    }

    /// Validating convenience wrapper over [`insert`](Self::insert).
    pub fn add(&mut self, s: Term, p: Term, o: Term) -> Result<bool, super::TripleError> {
        Ok(self.insert(&Triple::new(s, p, o)?))
    }

    pub fn extend<'a>(&mut self, triples: impl IntoIterator<Item = &'a Triple>) -> usize {
        triples.into_iter().filter(|t| self.insert(t)).count()
    }

    pub fn remove(&mut self, triple: &Triple) -> bool {
        let Some(key) = self.encode_pattern(Some(triple.subject()), Some(triple.predicate()), Some(triple.object()))
        else {
            return false;
        };
        let key = [key[0].unwrap(), key[1].unwrap(), key[2].unwrap()];
        self.remove_ids(key)
    }

    fn remove_ids(&mut self, key: Key) -> bool {
        if self.facts.remove(&key).is_none() {
            return false;
        }
        self.spo.remove(&key);
        self.pos.remove(&Ordering3::Pos.permute(key));
        self.osp.remove(&Ordering3::Osp.permute(key));
        true
    }

    /// Removes every inferred triple; returns how many were removed.
    pub fn remove_inferred(&mut self) -> usize {
        let doomed: Vec<Key> = self.facts.iter().filter(|(_, inf)| **inf).map(|(k, _)| *k).collect();
        for key in &doomed {
            self.remove_ids(*key);
        }
        doomed.len()
    }

    pub fn inferred_len(&self) -> usize {
        self.facts.values().filter(|inf| **inf).count()
    }

    /// All triples in SPO index order.
    pub fn iter(&self) -> impl Iterator<Item = Triple> + '_ {
        self.spo.iter().map(move |k| self.decode(*k))
    }

    pub(crate) fn intern(&mut self, term: &Term) -> TermId {
        Arc::make_mut(&mut self.dict).intern(term)
    }

    /// Freezes the current contents into an immutable, shareable snapshot.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            inner: Arc::new(SnapshotInner {
                dict: Arc::clone(&self.dict),
                spo: self.spo.iter().copied().collect(),
                pos: self.pos.iter().copied().collect(),
                osp: self.osp.iter().copied().collect(),
                inferred: self.facts.iter().filter(|(_, inf)| **inf).map(|(k, _)| *k).collect(),
            }),
        }
    }

    /// Scans with the chosen ordering, optionally ignoring the indexes. Used to
    /// cross-check index coherence.
    pub fn scan_with(&self, pattern: IdPattern, ordering: IndexChoice) -> Vec<[TermId; 3]> {
        let (ord, prefix) = match ordering {
            IndexChoice::Auto => Ordering3::choose(pattern),
            IndexChoice::Spo => (Ordering3::Spo, Vec::new()),
            IndexChoice::Pos => (Ordering3::Pos, Vec::new()),
            IndexChoice::Osp => (Ordering3::Osp, Vec::new()),
        };
        let set = self.index(ord);
        set.range(prefix_range(&prefix))
            .map(|k| ord.unpermute(*k))
            .filter(|k| matches_pattern(*k, pattern))
            .collect()
    }

    fn index(&self, ord: Ordering3) -> &BTreeSet<Key> {
        match ord {
            Ordering3::Spo => &self.spo,
            Ordering3::Pos => &self.pos,
            Ordering3::Osp => &self.osp,
        }
    }

    /// Sizes of the three indexes; equal whenever the store is coherent.
    pub fn index_sizes(&self) -> [usize; 3] {
        [self.spo.len(), self.pos.len(), self.osp.len()]
    }
}

/// Index selection for [`TripleStore::scan_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexChoice {
    Auto,
    Spo,
    Pos,
    Osp,
}

fn matches_pattern(key: Key, pattern: IdPattern) -> bool {
    key.iter().zip(pattern.iter()).all(|(k, p)| p.is_none_or(|p| p == *k))
}

impl TripleSource for TripleStore {
    fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    fn scan(&self, pattern: IdPattern) -> Box<dyn Iterator<Item = [TermId; 3]> + '_> {
        let (ord, prefix) = Ordering3::choose(pattern);
        Box::new(self.index(ord).range(prefix_range(&prefix)).map(move |k| ord.unpermute(*k)))
    }

    fn count(&self, pattern: IdPattern) -> usize {
        let (ord, prefix) = Ordering3::choose(pattern);
        if prefix.is_empty() {
            return self.spo.len();
        }
        if prefix.len() == 3 {
            return usize::from(self.facts.contains_key(&ord.unpermute([prefix[0], prefix[1], prefix[2]])));
        }
        self.index(ord).range(prefix_range(&prefix)).count()
    }

    fn len(&self) -> usize {
        self.facts.len()
    }

    fn is_inferred(&self, ids: [TermId; 3]) -> bool {
        self.facts.get(&ids).copied().unwrap_or(false)
    }
}

#[derive(Debug)]
struct SnapshotInner {
    dict: Arc<Dictionary>,
    spo: Vec<Key>,
    pos: Vec<Key>,
    osp: Vec<Key>,
    inferred: HashSet<Key>,
}

/// Immutable view of a store. Cloning is cheap; counts are two binary
/// searches over sorted index arrays.
#[derive(Debug, Clone)]
pub struct Snapshot {
    inner: Arc<SnapshotInner>,
}

impl Snapshot {
    fn range(&self, pattern: IdPattern) -> (Ordering3, &[Key]) {
        let (ord, prefix) = Ordering3::choose(pattern);
        let index = match ord {
            Ordering3::Spo => &self.inner.spo,
            Ordering3::Pos => &self.inner.pos,
            Ordering3::Osp => &self.inner.osp,
        };
        let n = prefix.len();
        let start = index.partition_point(|k| k[..n] < prefix[..]);
        let end = index.partition_point(|k| k[..n] <= prefix[..]);
        (ord, &index[start..end])
    }

    pub fn iter(&self) -> impl Iterator<Item = Triple> + '_ {
        self.inner.spo.iter().map(move |k| self.decode(*k))
    }

    /// Copies the snapshot back into a mutable store.
    pub fn to_store(&self) -> TripleStore {
        let mut store = TripleStore { dict: Arc::clone(&self.inner.dict), ..TripleStore::default() };
        for key in &self.inner.spo {
            store.insert_ids(*key, self.inner.inferred.contains(key));
        }
        store
    }
}

impl TripleSource for Snapshot {
    fn dictionary(&self) -> &Dictionary {
        &self.inner.dict
    }

    fn scan(&self, pattern: IdPattern) -> Box<dyn Iterator<Item = [TermId; 3]> + '_> {
        let (ord, slice) = self.range(pattern);
        Box::new(slice.iter().map(move |k| ord.unpermute(*k)))
    }

    fn count(&self, pattern: IdPattern) -> usize {
        self.range(pattern).1.len()
    }

    fn len(&self) -> usize {
        self.inner.spo.len()
    }

    fn is_inferred(&self, ids: [TermId; 3]) -> bool {
        self.inner.inferred.contains(&ids)
    }
}
