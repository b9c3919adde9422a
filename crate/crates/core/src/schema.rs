//! Fixed vocabulary: namespaces, classes and properties, plus the built-in
//! annotation-type taxonomy every store starts from.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use crate::rdf::{Term, Triple, TripleSource, TripleStore};

pub mod ns {
    pub const CV: &str = "http://vision.semkg.org/onto#";
    pub const SCHEMA: &str = "http://schema.org/";
    pub const RDF: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
    pub const RDFS: &str = "http://www.w3.org/2000/01/rdf-schema#";
    pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

    pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
    pub const RDFS_SUBCLASS_OF: &str = "http://www.w3.org/2000/01/rdf-schema#subClassOf";
    pub const RDFS_CLASS: &str = "http://www.w3.org/2000/01/rdf-schema#Class";

    pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
    pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
    pub const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
    pub const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";
    pub const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";

    pub fn is_numeric_datatype(iri: &str) -> bool {
        matches!(iri, XSD_INTEGER | XSD_DECIMAL | XSD_DOUBLE)
    }

    /// Prefixes known to every query without a `PREFIX` declaration. The empty
    /// prefix points at the `cv:` namespace, where shared concepts live.
    pub const DEFAULT_PREFIXES: &[(&str, &str)] =
        &[("", CV), ("cv", CV), ("schema", SCHEMA), ("rdf", RDF), ("rdfs", RDFS), ("xsd", XSD)];
}

macro_rules! vocab {
    ($($name:ident => $ns:ident + $local:literal;)*) => {
        $(pub const $name: &str = concat_ns!($ns, $local);)*
    };
}

macro_rules! concat_ns {
    (cv, $local:literal) => { concat!("http://vision.semkg.org/onto#", $local) };
    (schema, $local:literal) => { concat!("http://schema.org/", $local) };
}

/// Class and property IRIs.
pub mod cv {
    vocab! {
        DATASET => cv + "Dataset";
        IMAGE => cv + "Image";
        ANNOTATION => cv + "Annotation";
        CLASSIFICATION_ANNOTATION => cv + "ClassificationAnnotation";
        OBJECT_DETECTION_ANNOTATION => cv + "ObjectDetectionAnnotation";
        INSTANCE_SEGMENTATION_ANNOTATION => cv + "InstanceSegmentationAnnotation";
        VISUAL_RELATIONSHIP_ANNOTATION => cv + "VisualRelationshipAnnotation";
        BOUNDING_BOX => cv + "BoundingBox";
        LABEL => cv + "Label";
        TASK => cv + "Task";

        CLASSIFICATION_TASK => cv + "ClassificationTask";
        DETECTION_TASK => cv + "DetectionTask";
        SEGMENTATION_TASK => cv + "SegmentationTask";
        RELATIONSHIP_TASK => cv + "RelationshipTask";
        UNSPECIFIED_LICENSE => cv + "UnspecifiedLicense";

        HAS_PART => schema + "hasPart";
        IS_PART_OF => schema + "isPartOf";
        NAME => schema + "name";
        IDENTIFIER => schema + "identifier";
        LICENSE => cv + "license";
        SOURCE_URL => cv + "sourceUrl";
        SUPPORTS_TASK => cv + "supportsTask";
        FILE_NAME => cv + "fileName";
        WIDTH => cv + "width";
        HEIGHT => cv + "height";
        WEATHER => cv + "weather";
        TIME_OF_DAY => cv + "timeOfDay";
        ILLUMINATION => cv + "illumination";
        HAS_ANNOTATION => cv + "hasAnnotation";
        HAS_LABEL => cv + "hasLabel";
        SOURCE_LABEL_TEXT => cv + "sourceLabelText";
        HAS_BOX => cv + "hasBox";
        X_MIN => cv + "xMin";
        Y_MIN => cv + "yMin";
        X_MAX => cv + "xMax";
        Y_MAX => cv + "yMax";
    }

    pub const ANNOTATION_CLASSES: [&str; 4] = [
        CLASSIFICATION_ANNOTATION,
        OBJECT_DETECTION_ANNOTATION,
        INSTANCE_SEGMENTATION_ANNOTATION,
        VISUAL_RELATIONSHIP_ANNOTATION,
    ];

    pub const CLASSES: [&str; 10] = [
        DATASET,
        IMAGE,
        ANNOTATION,
        CLASSIFICATION_ANNOTATION,
        OBJECT_DETECTION_ANNOTATION,
        INSTANCE_SEGMENTATION_ANNOTATION,
        VISUAL_RELATIONSHIP_ANNOTATION,
        BOUNDING_BOX,
        LABEL,
        TASK,
    ];

    pub const TASKS: [&str; 4] = [CLASSIFICATION_TASK, DETECTION_TASK, SEGMENTATION_TASK, RELATIONSHIP_TASK];

    pub const BOX_COORDS: [&str; 4] = [X_MIN, Y_MIN, X_MAX, Y_MAX];
}

pub(crate) fn iri(value: &str) -> Term {
    Term::iri_unchecked(value)
}

/// The annotation-type subsumption chain: segmentation boxes are detection
/// boxes, detection boxes are classification labels, all are annotations.
pub const SUBCLASS_AXIOMS: [(&str, &str); 6] = [
    (cv::OBJECT_DETECTION_ANNOTATION, cv::CLASSIFICATION_ANNOTATION),
    (cv::INSTANCE_SEGMENTATION_ANNOTATION, cv::OBJECT_DETECTION_ANNOTATION),
    (cv::CLASSIFICATION_ANNOTATION, cv::ANNOTATION),
    (cv::OBJECT_DETECTION_ANNOTATION, cv::ANNOTATION),
    (cv::INSTANCE_SEGMENTATION_ANNOTATION, cv::ANNOTATION),
    (cv::VISUAL_RELATIONSHIP_ANNOTATION, cv::ANNOTATION),
];

/// Every built-in schema triple.
pub fn schema_triples() -> Vec<Triple> {
    let t = |s: &str, p: &str, o: &str| Triple::from_parts_unchecked(iri(s), iri(p), iri(o), false);
    let mut out: Vec<Triple> = SUBCLASS_AXIOMS.iter().map(|(s, o)| t(s, ns::RDFS_SUBCLASS_OF, o)).collect();
    out.extend(cv::CLASSES.iter().map(|c| t(c, ns::RDF_TYPE, ns::RDFS_CLASS)));
    out.extend(cv::TASKS.iter().map(|task| t(task, ns::RDF_TYPE, cv::TASK)));
    out
}

/// Inserts the built-in schema; returns the number of triples that were new.
pub fn bootstrap_schema(store: &mut TripleStore) -> usize {
    store.extend(&schema_triples())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    MissingDimension { image: String, property: &'static str },
    MissingLabel { annotation: String },
    MissingBox { annotation: String },
    IncompleteBox { bbox: String, missing: Vec<&'static str> },
    DegenerateBox { bbox: String },
    DanglingPart { whole: String, part: String },
    AsymmetricPart { whole: String, part: String, missing: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingDimension { image, property } => write!(f, "image <{image}> lacks <{property}>"),
            Self::MissingLabel { annotation } => write!(f, "annotation <{annotation}> lacks a label"),
            Self::MissingBox { annotation } => write!(f, "detection annotation <{annotation}> has no box"),
            Self::IncompleteBox { bbox, missing } => write!(f, "box <{bbox}> lacks {}", missing.join(", ")),
            Self::DegenerateBox { bbox } => write!(f, "box <{bbox}> has xMin >= xMax or yMin >= yMax"),
            Self::DanglingPart { whole, part } => write!(f, "<{whole}> hasPart unknown resource <{part}>"),
            Self::AsymmetricPart { whole, part, missing } => {
                write!(f, "<{whole}> / <{part}> part-of link lacks its {missing} inverse")
            }
        }
    }
}

fn subjects_of_type<S: TripleSource + ?Sized>(store: &S, class: &str) -> BTreeSet<Term> {
    store
        .match_pattern(None, Some(&iri(ns::RDF_TYPE)), Some(&iri(class)))
        .map(|t| t.subject().clone())
        .collect()
}

fn objects<S: TripleSource + ?Sized>(store: &S, s: &Term, p: &str) -> Vec<Term> {
    store.match_pattern(Some(s), Some(&iri(p)), None).map(|t| t.object().clone()).collect()
}

/// Schema conformance report. Violations are sorted.
pub fn validate<S: TripleSource + ?Sized>(store: &S) -> Vec<Violation> {
    let mut out = Vec::new();

    for image in subjects_of_type(store, cv::IMAGE) {
        for prop in [cv::WIDTH, cv::HEIGHT] {
            if objects(store, &image, prop).is_empty() {
                out.push(Violation::MissingDimension { image: image.value().to_owned(), property: prop });
            }
        }
    }

    let annotations: BTreeSet<Term> =
        cv::ANNOTATION_CLASSES.iter().flat_map(|c| subjects_of_type(store, c)).collect();
    let detections: HashSet<Term> = [cv::OBJECT_DETECTION_ANNOTATION, cv::INSTANCE_SEGMENTATION_ANNOTATION]
        .iter()
        .flat_map(|c| subjects_of_type(store, c))
        .collect();
    for ann in &annotations {
        if objects(store, ann, cv::HAS_LABEL).is_empty() {
            out.push(Violation::MissingLabel { annotation: ann.value().to_owned() });
        }
        if detections.contains(ann) && objects(store, ann, cv::HAS_BOX).is_empty() {
            out.push(Violation::MissingBox { annotation: ann.value().to_owned() });
        }
    }

    let boxes: BTreeSet<Term> = detections
        .iter()
        .flat_map(|a| objects(store, a, cv::HAS_BOX))
        .chain(subjects_of_type(store, cv::BOUNDING_BOX))
        .collect();
    for bbox in boxes {
        let coords: Vec<Option<f64>> = cv::BOX_COORDS
            .iter()
            .map(|p| objects(store, &bbox, p).first().and_then(Term::as_number))
            .collect();
        let missing: Vec<&'static str> =
            cv::BOX_COORDS.iter().zip(&coords).filter(|(_, v)| v.is_none()).map(|(p, _)| *p).collect();
        if !missing.is_empty() {
            out.push(Violation::IncompleteBox { bbox: bbox.value().to_owned(), missing });
        } else if let [Some(x0), Some(y0), Some(x1), Some(y1)] = coords[..] {
            if x0 >= x1 || y0 >= y1 {
                out.push(Violation::DegenerateBox { bbox: bbox.value().to_owned() });
            }
        }
    }

    let has_part = iri(cv::HAS_PART);
    let is_part_of = iri(cv::IS_PART_OF);
    for t in store.match_pattern(None, Some(&has_part), None) {
        let (whole, part) = (t.subject(), t.object());
        if store.count_matches(Some(part), None, None) == 0 {
            out.push(Violation::DanglingPart { whole: whole.value().to_owned(), part: part.value().to_owned() });
        } else if store.count_matches(Some(part), Some(&is_part_of), Some(whole)) == 0 {
            out.push(Violation::AsymmetricPart {
                whole: whole.value().to_owned(),
                part: part.value().to_owned(),
                missing: cv::IS_PART_OF,
            });
        }
    }
    for t in store.match_pattern(None, Some(&is_part_of), None) {
        let (part, whole) = (t.subject(), t.object());
        if store.count_matches(Some(whole), Some(&has_part), Some(part)) == 0 {
            out.push(Violation::AsymmetricPart {
                whole: whole.value().to_owned(),
                part: part.value().to_owned(),
                missing: cv::HAS_PART,
            });
        }
    }

    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_is_idempotent() {
        let mut store = TripleStore::new();
        assert_eq!(bootstrap_schema(&mut store), 20);
        assert_eq!(bootstrap_schema(&mut store), 0);
        assert_eq!(store.len(), 20);
    }

    #[test]
    fn segmentation_axiom_present() {
        let mut store = TripleStore::new();
        bootstrap_schema(&mut store);
        let axiom = Triple::new(
            iri(cv::INSTANCE_SEGMENTATION_ANNOTATION),
            iri(ns::RDFS_SUBCLASS_OF),
            iri(cv::OBJECT_DETECTION_ANNOTATION),
        )
        .unwrap();
        assert!(store.contains(&axiom));
    }

    #[test]
    fn vocabulary_iris_are_absolute() {
        for c in cv::CLASSES.iter().chain(cv::TASKS.iter()).chain(cv::BOX_COORDS.iter()) {
            assert!(Term::iri(*c).is_ok(), "{c}");
        }
        assert_eq!(cv::HAS_PART, "http://schema.org/hasPart");
        assert_eq!(cv::IMAGE, "http://vision.semkg.org/onto#Image");
    }

    #[test]
    fn empty_store_validates() {
        assert!(validate(&TripleStore::new()).is_empty());
    }

    fn add(store: &mut TripleStore, s: &str, p: &str, o: Term) {
        store.add(Term::iri(s).unwrap(), iri(p), o).unwrap();
    }

    #[test]
    fn degenerate_and_asymmetric_are_flagged() {
        let mut store = TripleStore::new();
        add(&mut store, "ex:b", ns::RDF_TYPE, iri(cv::BOUNDING_BOX));
        for (p, v) in cv::BOX_COORDS.iter().zip([5.0, 0.0, 5.0, 3.0]) {
            add(&mut store, "ex:b", p, Term::decimal(v));
        }
        add(&mut store, "ex:d", cv::HAS_PART, iri("ex:b"));
        let v = validate(&store);
        assert_eq!(
            v,
            vec![
                Violation::DegenerateBox { bbox: "ex:b".into() },
                Violation::AsymmetricPart { whole: "ex:d".into(), part: "ex:b".into(), missing: cv::IS_PART_OF },
            ]
        );
    }

    #[test]
    fn dangling_part() {
        let mut store = TripleStore::new();
        add(&mut store, "ex:d", cv::HAS_PART, iri("ex:nowhere"));
        assert_eq!(
            validate(&store),
            vec![Violation::DanglingPart { whole: "ex:d".into(), part: "ex:nowhere".into() }]
        );
    }
}
