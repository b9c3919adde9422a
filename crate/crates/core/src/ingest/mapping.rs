use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};

use super::{DatasetBundle, IngestError};
use crate::rdf::{Term, Triple, TripleSource, TripleStore};
use crate::schema::{cv, iri, ns};
use crate::taxonomy::TaxonomyTable;

pub const DEFAULT_BASE_IRI: &str = "http://vkg.example.org";

/// Characters escaped when a local id is embedded in an IRI path segment.
const SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.').remove(b'~');

/// Fixed bundle-to-triples mapping with a configurable base IRI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingRules {
    base: String,
}

impl Default for MappingRules {
    fn default() -> Self {
        Self { base: DEFAULT_BASE_IRI.to_owned() }
    }
}

impl MappingRules {
    pub fn new(base: impl Into<String>) -> Result<Self, IngestError> {
        let base: String = base.into();
        let base = base.trim_end_matches('/').to_owned();
        if !crate::rdf::is_absolute_iri(&base) {
            return Err(IngestError::Descriptor { field: "base", reason: format!("`{base}` is not an absolute IRI") });
        }
        Ok(Self { base })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn dataset_iri(&self, slug: &str) -> String {
        format!("{}/dataset/{slug}", self.base)
    }

    pub fn image_iri(&self, slug: &str, local_id: &str) -> String {
        format!("{}/image/{}", self.dataset_iri(slug), encode(local_id))
    }

    pub fn annotation_iri(&self, slug: &str, local_id: &str) -> String {
        format!("{}/ann/{}", self.dataset_iri(slug), encode(local_id))
    }

    pub fn box_iri(&self, slug: &str, local_id: &str) -> String {
        format!("{}/box", self.annotation_iri(slug, local_id))
    }

    pub fn local_label_iri(&self, slug: &str, raw_label: &str) -> String {
        format!("{}/label/{}", self.dataset_iri(slug), label_slug(raw_label))
    }

    /// Slug of a dataset IRI minted by these rules.
    pub fn slug_of(&self, dataset_iri: &str) -> Option<String> {
        dataset_iri
            .strip_prefix(&self.base)?
            .strip_prefix("/dataset/")
            .filter(|s| !s.is_empty() && !s.contains('/'))
            .map(str::to_owned)
    }

    /// Emits every triple for a bundle without touching a store. The bundle is
    /// validated first, so either all triples are produced or none.
    pub fn triples(&self, bundle: &DatasetBundle, taxonomy: &TaxonomyTable) -> Result<Vec<Triple>, IngestError> {
        bundle.validate()?;
        let d = &bundle.descriptor;
        let slug = d.slug.as_str();
        let mut out = Vec::new();
        let mut emit = |s: &str, p: &str, o: Term| out.push(Triple::from_parts_unchecked(iri(s), iri(p), o, false));

        let dataset = self.dataset_iri(slug);
        emit(&dataset, ns::RDF_TYPE, iri(cv::DATASET));
        emit(&dataset, cv::NAME, Term::string(d.name.clone()));
        emit(&dataset, cv::IDENTIFIER, Term::string(slug.to_owned()));
        emit(&dataset, cv::LICENSE, iri(&d.license));
        if let Some(url) = &d.source_url {
            emit(&dataset, cv::SOURCE_URL, iri(url));
        }
        for task in &d.tasks {
            emit(&dataset, cv::SUPPORTS_TASK, iri(task.task_iri()));
        }

        for img in &bundle.images {
            let image = self.image_iri(slug, &img.local_id);
            emit(&image, ns::RDF_TYPE, iri(cv::IMAGE));
            emit(&image, cv::IS_PART_OF, iri(&dataset));
            emit(&dataset, cv::HAS_PART, iri(&image));
            emit(&image, cv::FILE_NAME, Term::string(img.file_name.clone()));
            emit(&image, cv::WIDTH, Term::integer(i64::from(img.width)));
            emit(&image, cv::HEIGHT, Term::integer(i64::from(img.height)));
            for (attr, value) in &img.attributes {
                emit(&image, attr.property(), Term::string(value.clone()));
            }
        }

        for ann in &bundle.annotations {
            let annotation = self.annotation_iri(slug, &ann.local_id);
            let label = match taxonomy.concept_for(slug, &ann.raw_label) {
                Some(concept) => concept.to_owned(),
                None => self.local_label_iri(slug, &ann.raw_label),
            };
            emit(&annotation, ns::RDF_TYPE, iri(ann.kind.annotation_class()));
            emit(&self.image_iri(slug, &ann.image_local_id), cv::HAS_ANNOTATION, iri(&annotation));
            emit(&annotation, cv::HAS_LABEL, iri(&label));
            emit(&annotation, cv::SOURCE_LABEL_TEXT, Term::string(ann.raw_label.clone()));
            if let (Some(b), true) = (&ann.bbox, ann.kind.requires_box()) {
                let bbox = self.box_iri(slug, &ann.local_id);
                emit(&annotation, cv::HAS_BOX, iri(&bbox));
                emit(&bbox, ns::RDF_TYPE, iri(cv::BOUNDING_BOX));
                for (p, v) in cv::BOX_COORDS.iter().zip(b.corners()) {
                    emit(&bbox, p, Term::decimal(v));
                }
            }
        }
        Ok(out)
    }
}

/// Maps a bundle into the store; returns the number of triples added.
pub fn map_to_triples(
    rules: &MappingRules,
    bundle: &DatasetBundle,
    taxonomy: &TaxonomyTable,
    store: &mut TripleStore,
) -> Result<usize, IngestError> {
    let triples = rules.triples(bundle, taxonomy)?;
    Ok(store.extend(&triples))
}

/// Links dataset-local label IRIs already in the store to their aligned
/// concepts with `rdfs:subClassOf`, for alignments loaded after ingest.
/// Returns the number of triples added.
pub fn bridge_local_labels(rules: &MappingRules, taxonomy: &TaxonomyTable, store: &mut TripleStore) -> usize {
    let has_label = iri(cv::HAS_LABEL);
    let sub = iri(ns::RDFS_SUBCLASS_OF);
    let mut added = 0;
    for a in taxonomy.alignments() {
        let local = iri(&rules.local_label_iri(&a.dataset, &a.raw_label));
        if store.count_matches(None, Some(&has_label), Some(&local)) == 0 {
            continue;
        }
        added += usize::from(store.add(local, sub.clone(), iri(&a.concept)).expect("validated IRIs"));
    }
    added
}

fn encode(local_id: &str) -> String {
    utf8_percent_encode(local_id, SEGMENT).to_string()
}

/// Lowercase, runs of non-alphanumerics collapsed to `-`. Falls back to the
/// percent-encoded text when nothing alphanumeric remains.
pub fn label_slug(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    let out = out.trim_matches('-');
    if out.is_empty() {
        encode(raw)
    } else {
        utf8_percent_encode(out, SEGMENT).to_string()
    }
}
