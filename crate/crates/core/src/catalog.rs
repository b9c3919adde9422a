//! Read-only summaries over a store: dataset list, per-dataset categories and
//! task/dataset statistics.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::ingest::TaskKind;
use crate::schema::{cv, iri, ns};
use crate::{Term, TripleSource};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
}

/// Small lookup helpers over a triple source.
pub(crate) struct Graph<'a, S: ?Sized> {
    pub(crate) src: &'a S,
}

impl<'a, S: TripleSource + ?Sized> Graph<'a, S> {
    pub(crate) fn new(src: &'a S) -> Self {
        Self { src }
    }

    pub(crate) fn objects(&self, s: &Term, p: &str) -> Vec<Term> {
        let mut out: Vec<Term> = self.src.match_pattern(Some(s), Some(&iri(p)), None).map(|t| t.into_terms().2).collect();
        out.sort();
        out
    }

    pub(crate) fn object(&self, s: &Term, p: &str) -> Option<Term> {
        self.objects(s, p).into_iter().next()
    }

    pub(crate) fn subjects(&self, p: &str, o: &Term) -> Vec<Term> {
        let mut out: Vec<Term> = self.src.match_pattern(None, Some(&iri(p)), Some(o)).map(|t| t.into_terms().0).collect();
        out.sort();
        out
    }

    pub(crate) fn has(&self, s: &Term, p: &str, o: &Term) -> bool {
        self.src.count_matches(Some(s), Some(&iri(p)), Some(o)) > 0
    }

    pub(crate) fn string(&self, s: &Term, p: &str) -> Option<String> {
        self.object(s, p).map(|t| t.value().to_owned())
    }

    pub(crate) fn number(&self, s: &Term, p: &str) -> Option<f64> {
        self.object(s, p).and_then(|t| t.as_number())
    }

    /// Dataset slug: the `schema:identifier`, else the last IRI segment.
    pub(crate) fn slug(&self, dataset: &Term) -> String {
        self.string(dataset, cv::IDENTIFIER)
            .unwrap_or_else(|| dataset.value().rsplit('/').next().unwrap_or_default().to_owned())
    }

    pub(crate) fn datasets(&self) -> Vec<Term> {
        self.subjects(ns::RDF_TYPE, &iri(cv::DATASET))
    }

    pub(crate) fn dataset_by_slug(&self, slug: &str) -> Option<Term> {
        self.datasets().into_iter().find(|d| self.slug(d) == slug)
    }

    pub(crate) fn images_of(&self, dataset: &Term) -> Vec<Term> {
        self.objects(dataset, cv::HAS_PART)
            .into_iter()
            .filter(|i| self.has(i, ns::RDF_TYPE, &iri(cv::IMAGE)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetSummary {
    pub slug: String,
    pub iri: String,
    pub name: String,
    pub license: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    pub tasks: Vec<TaskKind>,
    pub image_count: usize,
}

/// Every `cv:Dataset`, sorted by slug.
pub fn datasets<S: TripleSource + ?Sized>(src: &S) -> Vec<DatasetSummary> {
    let g = Graph::new(src);
    let mut out: Vec<DatasetSummary> = g
        .datasets()
        .into_iter()
        .map(|d| DatasetSummary {
            slug: g.slug(&d),
            iri: d.value().to_owned(),
            name: g.string(&d, cv::NAME).unwrap_or_default(),
            license: g.string(&d, cv::LICENSE).unwrap_or_default(),
            source_url: g.string(&d, cv::SOURCE_URL),
            tasks: g.objects(&d, cv::SUPPORTS_TASK).iter().filter_map(|t| TaskKind::from_task_iri(t.value())).collect(),
            image_count: g.images_of(&d).len(),
        })
        .collect();
    out.sort_by(|a, b| a.slug.cmp(&b.slug));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CategoryEntry {
    pub iri: String,
    pub name: String,
    /// True when the label is a shared concept rather than a dataset-local label.
    pub concept: bool,
    pub annotation_count: usize,
    pub datasets: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryFilter {
    pub dataset: Option<String>,
    pub task: Option<TaskKind>,
    /// Case-insensitive substring of the name or IRI.
    pub q: Option<String>,
}

/// Labels asserted on annotations, with the number of annotations carrying
/// each. A task filter keeps datasets supporting the task and annotations
/// asserted with that task's annotation class.
pub fn categories<S: TripleSource + ?Sized>(src: &S, filter: &CategoryFilter) -> Result<Vec<CategoryEntry>, CatalogError> {
    let g = Graph::new(src);
    let scope = match &filter.dataset {
        Some(slug) => vec![g.dataset_by_slug(slug).ok_or_else(|| CatalogError::UnknownDataset(slug.clone()))?],
        None => g.datasets(),
    };
    let scope: Vec<Term> = match filter.task {
        Some(t) => scope.into_iter().filter(|d| g.has(d, cv::SUPPORTS_TASK, &iri(t.task_iri()))).collect(),
        None => scope,
    };
    let task_class = filter.task.map(|t| iri(t.annotation_class()));
    let rdf_type = iri(ns::RDF_TYPE);
    let has_label = iri(cv::HAS_LABEL);
    let mut found: BTreeMap<Term, (usize, BTreeSet<String>, BTreeSet<String>)> = BTreeMap::new();
    for d in &scope {
        let slug = g.slug(d);
        for img in g.images_of(d) {
            for ann in g.objects(&img, cv::HAS_ANNOTATION) {
                if let Some(c) = &task_class {
                    if !src.match_pattern(Some(&ann), Some(&rdf_type), Some(c)).any(|t| !t.is_inferred()) {
                        continue;
                    }
                }
                let raw = g.string(&ann, cv::SOURCE_LABEL_TEXT);
                for t in src.match_pattern(Some(&ann), Some(&has_label), None) {
                    if t.is_inferred() {
                        continue;
                    }
                    let e = found.entry(t.object().clone()).or_default();
                    e.0 += 1;
                    e.1.insert(slug.clone());
                    e.2.extend(raw.clone());
                }
            }
        }
    }
    let needle = filter.q.as_ref().map(|q| q.to_lowercase());
    let local_marker = "/label/";
    let mut out: Vec<CategoryEntry> = found
        .into_iter()
        .map(|(label, (count, ds, raws))| {
            let name = g
                .string(&label, cv::NAME)
                .or_else(|| raws.into_iter().next())
                .unwrap_or_else(|| label.value().to_owned());
            CategoryEntry {
                concept: !(label.value().contains(local_marker) && g.string(&label, cv::NAME).is_none()),
                iri: label.value().to_owned(),
                name,
                annotation_count: count,
                datasets: ds.into_iter().collect(),
            }
        })
        .filter(|c| {
            needle
                .as_ref()
                .is_none_or(|n| c.name.to_lowercase().contains(n) || c.iri.to_lowercase().contains(n))
        })
        .collect();
    out.sort_by(|a, b| a.name.to_lowercase().cmp(&b.name.to_lowercase()).then_with(|| a.iri.cmp(&b.iri)));
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Counts {
    pub images: usize,
    pub annotations: usize,
    pub triples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetStats {
    pub slug: String,
    #[serde(flatten)]
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskStats {
    pub task: TaskKind,
    pub datasets: usize,
    pub images: usize,
    pub annotations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Totals {
    pub datasets: usize,
    pub images: usize,
    pub annotations: usize,
    pub triples: usize,
    pub inferred_triples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Statistics {
    pub totals: Totals,
    pub per_dataset: Vec<DatasetStats>,
    pub per_task: Vec<TaskStats>,
}

/// Per-dataset triples are those whose subject is the dataset or one of its
/// images, annotations or boxes.
pub fn statistics<S: TripleSource + ?Sized>(src: &S) -> Statistics {
    let g = Graph::new(src);
    let subject_triples = |t: &Term| src.count_matches(Some(t), None, None);
    let mut per_dataset = Vec::new();
    let mut task_images: BTreeMap<TaskKind, BTreeSet<Term>> = BTreeMap::new();
    let mut task_anns: BTreeMap<TaskKind, usize> = BTreeMap::new();
    let mut task_datasets: BTreeMap<TaskKind, usize> = BTreeMap::new();
    for d in g.datasets() {
        let mut c = Counts { triples: subject_triples(&d), ..Counts::default() };
        for t in g.objects(&d, cv::SUPPORTS_TASK) {
            if let Some(k) = TaskKind::from_task_iri(t.value()) {
                *task_datasets.entry(k).or_default() += 1;
            }
        }
        for img in g.images_of(&d) {
            c.images += 1;
            c.triples += subject_triples(&img);
            for ann in g.objects(&img, cv::HAS_ANNOTATION) {
                c.annotations += 1;
                c.triples += subject_triples(&ann);
                for b in g.objects(&ann, cv::HAS_BOX) {
                    c.triples += subject_triples(&b);
                }
                for k in TaskKind::ALL {
                    if g.has(&ann, ns::RDF_TYPE, &iri(k.annotation_class())) {
                        *task_anns.entry(k).or_default() += 1;
                        task_images.entry(k).or_default().insert(img.clone());
                    }
                }
            }
        }
        per_dataset.push(DatasetStats { slug: g.slug(&d), counts: c });
    }
    per_dataset.sort_by(|a, b| a.slug.cmp(&b.slug));
    let per_task = TaskKind::ALL
        .into_iter()
        .map(|k| TaskStats {
            task: k,
            datasets: task_datasets.get(&k).copied().unwrap_or(0),
            images: task_images.get(&k).map_or(0, BTreeSet::len),
            annotations: task_anns.get(&k).copied().unwrap_or(0),
        })
        .collect();
    let inferred = src.scan([None; 3]).filter(|ids| src.is_inferred(*ids)).count();
    Statistics {
        totals: Totals {
            datasets: per_dataset.len(),
            images: per_dataset.iter().map(|d| d.counts.images).sum(),
            annotations: per_dataset.iter().map(|d| d.counts.annotations).sum(),
            triples: src.len(),
            inferred_triples: inferred,
        },
        per_dataset,
        per_task,
    }
}
