//! Annotation ingest: format parsers produce a [`DatasetBundle`], and
//! [`MappingRules`] turn a bundle into triples.
//!
//! IRI layout, relative to a configurable base:
//!
//! ```text
//! dataset     {base}/dataset/{slug}
//! image       {base}/dataset/{slug}/image/{localId}
//! annotation  {base}/dataset/{slug}/ann/{localId}
//! box         {base}/dataset/{slug}/ann/{localId}/box
//! local label {base}/dataset/{slug}/label/{label-slug}
//! ```

mod attributes;
mod cls;
mod coco;
mod files;
mod kitti;
mod mapping;
mod voc;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attributes::{load_attributes, AttributeWarning};
pub use cls::{parse_classification, CLS_HEADER};
pub use coco::parse_coco;
pub use files::{read_dataset, LoadError, SourceFormat};
pub use kitti::parse_kitti;
pub use mapping::{bridge_local_labels, label_slug, map_to_triples, MappingRules, DEFAULT_BASE_IRI};
pub use voc::parse_voc;

use crate::rdf::is_absolute_iri;
use crate::schema::cv;
use crate::Bbox;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("JSON syntax error at line {line}, column {column}: {message}")]
    JsonSyntax { line: usize, column: usize, message: String },
    #[error("missing field `{path}`")]
    MissingField { path: String },
    #[error("invalid value at `{path}`: {reason}")]
    InvalidField { path: String, reason: String },
    #[error("`{path}` references unknown category id {id}")]
    UnknownCategory { path: String, id: String },
    #[error("`{path}` references unknown image id {id}")]
    UnknownImage { path: String, id: String },
    #[error("`{path}`: bbox width and height must be positive")]
    NonPositiveBox { path: String },
    #[error("{document}: XML syntax error: {message}")]
    XmlSyntax { document: String, message: String },
    #[error("{document}: missing element `{path}`")]
    MissingElement { document: String, path: String },
    #[error("{document}: `{path}` has min corner >= max corner")]
    CornerInversion { document: String, path: String },
    #[error("{file}:{line}: expected at least 15 fields, found {found}")]
    ShortLine { file: String, line: usize, found: usize },
    #[error("{file}:{line}: field {field} is not a number")]
    NonNumeric { file: String, line: usize, field: usize },
    #[error("no image size given for label file `{stem}`")]
    MissingSize { stem: String },
    #[error("CSV error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("line {line}: duplicate file_path `{file_path}`")]
    DuplicateFilePath { line: u64, file_path: String },
    #[error("line {line}: width and height must be positive integers")]
    NonPositiveDimension { line: u64 },
    #[error("invalid dataset descriptor field `{field}`: {reason}")]
    Descriptor { field: &'static str, reason: String },
    #[error("{record}: field `{field}`: {reason}")]
    InvariantViolation { record: String, field: &'static str, reason: String },
}

impl IngestError {
    pub(crate) fn json(e: &serde_json::Error) -> Self {
        IngestError::JsonSyntax { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Detection,
    Segmentation,
    Relationship,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] =
        [TaskKind::Classification, TaskKind::Detection, TaskKind::Segmentation, TaskKind::Relationship];

    pub fn task_iri(self) -> &'static str {
        match self {
            TaskKind::Classification => cv::CLASSIFICATION_TASK,
            TaskKind::Detection => cv::DETECTION_TASK,
            TaskKind::Segmentation => cv::SEGMENTATION_TASK,
            TaskKind::Relationship => cv::RELATIONSHIP_TASK,
        }
    }

    /// The annotation class an annotation of this kind is typed with.
    pub fn annotation_class(self) -> &'static str {
        match self {
            TaskKind::Classification => cv::CLASSIFICATION_ANNOTATION,
            TaskKind::Detection => cv::OBJECT_DETECTION_ANNOTATION,
            TaskKind::Segmentation => cv::INSTANCE_SEGMENTATION_ANNOTATION,
            TaskKind::Relationship => cv::VISUAL_RELATIONSHIP_ANNOTATION,
        }
    }

    pub fn requires_box(self) -> bool {
        matches!(self, TaskKind::Detection | TaskKind::Segmentation)
    }

    pub fn from_task_iri(iri: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.task_iri() == iri)
    }

    pub fn from_annotation_class(iri: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.annotation_class() == iri)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::Detection => "detection",
            TaskKind::Segmentation => "segmentation",
            TaskKind::Relationship => "relationship",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

/// Per-image scene attributes carried by sidecar files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Attribute {
    #[serde(rename = "weather")]
    Weather,
    #[serde(rename = "timeOfDay")]
    TimeOfDay,
    #[serde(rename = "illumination")]
    Illumination,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Weather, Attribute::TimeOfDay, Attribute::Illumination];

    pub fn property(self) -> &'static str {
        match self {
            Attribute::Weather => cv::WEATHER,
            Attribute::TimeOfDay => cv::TIME_OF_DAY,
            Attribute::Illumination => cv::ILLUMINATION,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Attribute::Weather => "weather",
            Attribute::TimeOfDay => "timeOfDay",
            Attribute::Illumination => "illumination",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.key() == key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub slug: String,
    pub name: String,
    pub license: String,
    #[serde(default, rename = "sourceUrl", skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    pub tasks: BTreeSet<TaskKind>,
}

impl DatasetDescriptor {
    /// Validates and builds a descriptor. A missing license becomes
    /// `cv:UnspecifiedLicense`.
    pub fn new(
        slug: impl Into<String>,
        name: impl Into<String>,
        license: Option<&str>,
        source_url: Option<&str>,
        tasks: impl IntoIterator<Item = TaskKind>,
    ) -> Result<Self, IngestError> {
        let d = Self {
            slug: slug.into(),
            name: name.into(),
            license: license.unwrap_or(cv::UNSPECIFIED_LICENSE).to_owned(),
            source_url: source_url.map(str::to_owned),
            tasks: tasks.into_iter().collect(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |field, reason: &str| Err(IngestError::Descriptor { field, reason: reason.to_owned() });
        if self.slug.is_empty() || !self.slug.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
        {
            return bad("slug", "must match [a-z0-9-]+");
        }
        if self.tasks.is_empty() {
            return bad("tasks", "at least one task is required");
        }
        if !is_absolute_iri(&self.license) {
            return bad("license", "must be an absolute IRI");
        }
        if let Some(url) = &self.source_url {
            if !is_absolute_iri(url) {
                return bad("sourceUrl", "must be an absolute IRI");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub local_id: String,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    pub attributes: BTreeMap<Attribute, String>,
}

impl ImageRecord {
    pub fn new(local_id: impl Into<String>, file_name: impl Into<String>, width: u32, height: u32) -> Self {
        Self { local_id: local_id.into(), file_name: file_name.into(), width, height, attributes: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub local_id: String,
    pub image_local_id: String,
    pub kind: TaskKind,
    pub raw_label: String,
    pub bbox: Option<Bbox>,
}

/// Format-independent result of parsing one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub descriptor: DatasetDescriptor,
    pub images: Vec<ImageRecord>,
    pub annotations: Vec<AnnotationRecord>,
}

impl DatasetBundle {
    pub fn new(descriptor: DatasetDescriptor) -> Self {
        Self { descriptor, images: Vec::new(), annotations: Vec::new() }
    }

    /// Checks every record invariant; the first violation is returned.
    pub fn validate(&self) -> Result<(), IngestError> {
        self.descriptor.validate()?;
        let mut images = BTreeMap::new();
        for img in &self.images {
            let record = format!("image `{}`", img.local_id);
            if img.local_id.is_empty() {
                return Err(invariant(record, "localId", "must not be empty"));
            }
            if img.width == 0 || img.height == 0 {
                return Err(invariant(record, "width/height", "must be positive"));
            }
            if images.insert(img.local_id.as_str(), img).is_some() {
                return Err(invariant(record, "localId", "duplicate within bundle"));
            }
        }
        let mut seen = BTreeSet::new();
        for ann in &self.annotations {
            let record = format!("annotation `{}`", ann.local_id);
            if ann.local_id.is_empty() {
                return Err(invariant(record, "localId", "must not be empty"));
            }
            if !seen.insert(ann.local_id.as_str()) {
                return Err(invariant(record, "localId", "duplicate within bundle"));
            }
            let Some(img) = images.get(ann.image_local_id.as_str()) else {
                return Err(invariant(record, "imageLocalId", &format!("unknown image `{}`", ann.image_local_id)));
            };
            match (&ann.bbox, ann.kind.requires_box()) {
                (None, true) => return Err(invariant(record, "box", "required for detection/segmentation")),
                (Some(b), _) if !b.is_proper() => {
                    return Err(invariant(record, "box", "needs xMin < xMax and yMin < yMax"));
                }
                (Some(b), _) if !b.fits_within(f64::from(img.width), f64::from(img.height)) => {
                    return Err(invariant(
                        record,
                        "box",
                        &format!("outside the {}x{} image", img.width, img.height),
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn invariant(record: String, field: &'static str, reason: &str) -> IngestError {
    IngestError::InvariantViolation { record, field, reason: reason.to_owned() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_rules() {
        let ok = DatasetDescriptor::new("kitti-mini", "KITTI", None, None, [TaskKind::Detection]).unwrap();
        assert_eq!(ok.license, cv::UNSPECIFIED_LICENSE);
        assert!(DatasetDescriptor::new("KITTI", "x", None, None, [TaskKind::Detection]).is_err());
        assert!(DatasetDescriptor::new("", "x", None, None, [TaskKind::Detection]).is_err());
        assert!(DatasetDescriptor::new("a", "x", None, None, []).is_err());
        assert!(DatasetDescriptor::new("a", "x", Some("CC-BY"), None, [TaskKind::Detection]).is_err());
    }

    #[test]
    fn bundle_invariants() {
        let d = DatasetDescriptor::new("d", "d", None, None, [TaskKind::Detection]).unwrap();
        let mut b = DatasetBundle::new(d);
        b.images.push(ImageRecord::new("i", "i.png", 100, 50));
        let ann = |bbox| AnnotationRecord {
            local_id: "a".into(),
            image_local_id: "i".into(),
            kind: TaskKind::Detection,
            raw_label: "car".into(),
            bbox,
        };
        b.annotations.push(ann(Some(Bbox::from_corners(0.0, 0.0, 100.0, 50.0))));
        assert!(b.validate().is_ok());
        b.annotations[0] = ann(None);
        assert!(matches!(b.validate(), Err(IngestError::InvariantViolation { field: "box", .. })));
        b.annotations[0] = ann(Some(Bbox::from_corners(0.0, 0.0, 101.0, 50.0)));
        assert!(b.validate().is_err());
        b.annotations[0] = ann(Some(Bbox::from_corners(3.0, 0.0, 3.0, 50.0)));
        assert!(b.validate().is_err());
        b.annotations[0].image_local_id = "nope".into();
        assert!(matches!(b.validate(), Err(IngestError::InvariantViolation { field: "imageLocalId", .. })));
    }

    #[test]
    fn task_names_round_trip() {
        for k in TaskKind::ALL {
            assert_eq!(k.as_str().parse::<TaskKind>().unwrap(), k);
            assert_eq!(TaskKind::from_task_iri(k.task_iri()), Some(k));
            assert_eq!(TaskKind::from_annotation_class(k.annotation_class()), Some(k));
        }
    }
}
