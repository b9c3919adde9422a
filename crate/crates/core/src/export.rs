//! Query-driven composite datasets: pick images with a SELECT query, filter by
//! license, attach annotations, split, and write COCO / KITTI / CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Graph;
use crate::schema::{cv, iri, ns};
use crate::sparql::{evaluate, parse_query, Element, GroupPattern, QueryError, Slot};
use crate::taxonomy::SplitMix64;
use crate::{Bbox, Term, TripleSource};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExportError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("query does not project the image variable ?{0}")]
    MissingImageVar(String),
    #[error("query matched no exportable images")]
    EmptyResult,
    #[error("train fraction must be strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("annotation on {image} labelled `{label}` has no box; the format needs one")]
    FormatIncompatible { image: String, label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Coco,
    Kitti,
    Cls,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    #[default]
    Canonical,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

fn default_image_var() -> String {
    "img".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExportRequest {
    pub query: String,
    pub format: ExportFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_licenses: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub label_mode: LabelMode,
    #[serde(default = "default_image_var")]
    pub image_var: String,
}

impl ExportRequest {
    pub fn new(query: impl Into<String>, format: ExportFormat) -> Self {
        Self {
            query: query.into(),
            format,
            allowed_licenses: None,
            split: None,
            label_mode: LabelMode::Canonical,
            image_var: default_image_var(),
        }
    }

    pub fn validate(&self) -> Result<(), ExportError> {
        match self.split {
            Some(s) if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) => {
                Err(ExportError::InvalidFraction(s.train_fraction))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManifestImage {
    pub iri: String,
    /// Source dataset slug.
    pub dataset: String,
    pub license: String,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManifestAnnotation {
    pub image_iri: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Bbox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompositeManifest {
    pub images: Vec<ManifestImage>,
    pub annotations: Vec<ManifestAnnotation>,
    pub categories: Vec<String>,
    /// Dataset slug to license, for every dataset contributing images.
    pub provenance: BTreeMap<String, String>,
}

impl CompositeManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

/// IRIs used as the object of a `cv:hasLabel` pattern anywhere in the query.
fn query_labels(g: &GroupPattern, out: &mut BTreeSet<Term>) {
    for e in &g.elements {
        match e {
            Element::Triple(t) => {
                if let (Slot::Term(p), Slot::Term(o)) = (&t.predicate, &t.object) {
                    if p.value() == cv::HAS_LABEL && o.is_iri() {
                        out.insert(o.clone());
                    }
                }
            }
            Element::Union(bs) => bs.iter().for_each(|b| query_labels(b, out)),
            Element::Group(inner) => query_labels(inner, out),
            Element::Filter(_) => {}
        }
    }
}

pub fn build_manifest<S: TripleSource + ?Sized>(
    request: &ExportRequest,
    src: &S,
) -> Result<CompositeManifest, ExportError> {
    request.validate()?;
    let query = parse_query(&request.query)?;
    let solutions = evaluate(&query, src);
    let col = solutions.column(&request.image_var).ok_or_else(|| ExportError::MissingImageVar(request.image_var.clone()))?;
    let g = Graph::new(src);
    let image_class = iri(cv::IMAGE);
    let bound: BTreeSet<Term> = solutions
        .rows
        .iter()
        .filter_map(|r| r[col].clone())
        .filter(|t| t.is_iri() && g.has(t, ns::RDF_TYPE, &image_class))
        .collect();

    let mut wanted = BTreeSet::new();
    query_labels(&query.pattern, &mut wanted);

    let mut images = Vec::new();
    let mut annotations = Vec::new();
    let mut provenance = BTreeMap::new();
    for img in bound {
        let Some(dataset) = g.object(&img, cv::IS_PART_OF) else { continue };
        let license = g.string(&dataset, cv::LICENSE).unwrap_or_default();
        if request.allowed_licenses.as_ref().is_some_and(|allowed| !allowed.contains(&license)) {
            continue;
        }
        let dim = |p: &str| g.number(&img, p).map_or(0, |v| v as u32);
        let slug = g.slug(&dataset);
        provenance.insert(slug.clone(), license.clone());
        images.push(ManifestImage {
            iri: img.value().to_owned(),
            dataset: slug,
            license,
            file_name: g.string(&img, cv::FILE_NAME).unwrap_or_default(),
            width: dim(cv::WIDTH),
            height: dim(cv::HEIGHT),
            split: None,
        });
        for ann in g.objects(&img, cv::HAS_ANNOTATION) {
            let labels = g.objects(&ann, cv::HAS_LABEL);
            let matched = wanted.iter().find(|w| labels.contains(w));
            if !wanted.is_empty() && matched.is_none() {
                continue;
            }
            let raw = g.string(&ann, cv::SOURCE_LABEL_TEXT).unwrap_or_default();
            let label = match request.label_mode {
                LabelMode::Raw => raw,
                LabelMode::Canonical => {
                    let asserted = src
                        .match_pattern(Some(&ann), Some(&iri(cv::HAS_LABEL)), None)
                        .find(|t| !t.is_inferred())
                        .map(|t| t.object().clone());
                    matched
                        .and_then(|m| g.string(m, cv::NAME))
                        .or_else(|| asserted.and_then(|a| g.string(&a, cv::NAME)))
                        .unwrap_or(raw)
                }
            };
            let bbox = g.object(&ann, cv::HAS_BOX).and_then(|b| {
                let c: Vec<f64> = cv::BOX_COORDS.iter().filter_map(|p| g.number(&b, p)).collect();
                (c.len() == 4).then(|| Bbox::from_corners(c[0], c[1], c[2], c[3]))
            });
            annotations.push(ManifestAnnotation { image_iri: img.value().to_owned(), label, bbox });
        }
    }
    if images.is_empty() {
        return Err(ExportError::EmptyResult);
    }
    let categories: BTreeSet<String> = annotations.iter().map(|a| a.label.clone()).collect();
    let mut manifest = CompositeManifest { images, annotations, categories: categories.into_iter().collect(), provenance };
    if let Some(s) = request.split {
        assign_split(&mut manifest, s.train_fraction, s.seed)?;
    }
    Ok(manifest)
}

/// Number of training images for `n` images at fraction `f`: the ceiling of
/// `f * n`, with a small epsilon so `0.7 * 10` stays 7.
pub fn train_size(n: usize, f: f64) -> usize {
    ((f * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Sorts image IRIs, permutes them with SplitMix64 seeded by `seed`
/// (Fisher-Yates from the back), and marks the first `train_size` as train.
pub fn assign_split(manifest: &mut CompositeManifest, train_fraction: f64, seed: u64) -> Result<(), ExportError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ExportError::InvalidFraction(train_fraction));
    }
    let mut order: Vec<usize> = (0..manifest.images.len()).collect();
    order.sort_by(|a, b| manifest.images[*a].iri.cmp(&manifest.images[*b].iri));
    SplitMix64::new(seed).shuffle(&mut order);
    let cut = train_size(order.len(), train_fraction);
    for (rank, i) in order.into_iter().enumerate() {
        manifest.images[i].split = Some(if rank < cut { Split::Train } else { Split::Test });
    }
    Ok(())
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).unwrap_or_default()
}

/// COCO-style JSON with dense 1-based ids in manifest order and `[x,y,w,h]`
/// boxes at 6 decimals. Box-less annotations carry no `bbox` key.
pub fn write_coco(manifest: &CompositeManifest) -> String {
    let mut ids = BTreeMap::new();
    let mut out = String::from("{\n  \"images\": [");
    for (i, img) in manifest.images.iter().enumerate() {
        ids.insert(img.iri.as_str(), i + 1);
        let sep = if i == 0 { "\n" } else { ",\n" };
        let _ = write!(
            out,
            "{sep}    {{\"id\": {}, \"file_name\": {}, \"width\": {}, \"height\": {}, \"dataset\": {}, \"license\": {}",
            i + 1,
            quote(&img.file_name),
            img.width,
            img.height,
            quote(&img.dataset),
            quote(&img.license)
        );
        if let Some(s) = img.split {
            let _ = write!(out, ", \"split\": {}", quote(if s == Split::Train { "train" } else { "test" }));
        }
        out.push('}');
    }
    out.push_str("\n  ],\n  \"annotations\": [");
    let cat_id = |label: &str| manifest.categories.iter().position(|c| c == label).map_or(0, |p| p + 1);
    for (i, a) in manifest.annotations.iter().enumerate() {
        let sep = if i == 0 { "\n" } else { ",\n" };
        let _ = write!(
            out,
            "{sep}    {{\"id\": {}, \"image_id\": {}, \"category_id\": {}",
            i + 1,
            ids.get(a.image_iri.as_str()).copied().unwrap_or(0),
            cat_id(&a.label)
        );
        if let Some(b) = &a.bbox {
            let [x, y, w, h] = b.to_xywh();
            let _ = write!(out, ", \"bbox\": [{x:.6}, {y:.6}, {w:.6}, {h:.6}], \"area\": {:.6}, \"iscrowd\": 0", w * h);
        }
        out.push('}');
    }
    out.push_str("\n  ],\n  \"categories\": [");
    for (i, c) in manifest.categories.iter().enumerate() {
        let sep = if i == 0 { "\n" } else { ",\n" };
        let _ = write!(out, "{sep}    {{\"id\": {}, \"name\": {}}}", i + 1, quote(c));
    }
    out.push_str("\n  ]\n}\n");
    out
}

/// Output stem for an image: `{dataset}-{file stem}` with path separators
/// flattened, so stems from different datasets never collide.
pub fn kitti_stem(img: &ManifestImage) -> String {
    let stem = img.file_name.rsplit_once('.').map_or(img.file_name.as_str(), |(s, _)| s);
    format!("{}-{}", img.dataset, stem.replace(['/', '\\'], "_"))
}

/// One label file per image; 3D fields are zero-filled and label whitespace
/// becomes `_`.
pub fn write_kitti(manifest: &CompositeManifest) -> Result<BTreeMap<String, String>, ExportError> {
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    let mut stems = BTreeMap::new();
    for img in &manifest.images {
        let stem = kitti_stem(img);
        stems.insert(img.iri.as_str(), stem.clone());
        files.entry(stem).or_default();
    }
    for a in &manifest.annotations {
        let Some(b) = &a.bbox else {
            return Err(ExportError::FormatIncompatible { image: a.image_iri.clone(), label: a.label.clone() });
        };
        let Some(stem) = stems.get(a.image_iri.as_str()) else { continue };
        let label: String = a.label.split_whitespace().collect::<Vec<_>>().join("_");
        let text = files.entry(stem.clone()).or_default();
        let _ = writeln!(
            text,
            "{label} 0.00 0 0.00 {:.6} {:.6} {:.6} {:.6} 0.00 0.00 0.00 0.00 0.00 0.00 0.00",
            b.x_min, b.y_min, b.x_max, b.y_max
        );
    }
    Ok(files)
}

/// `file_path,label,width,height`, one row per image that has an annotation,
/// labelled with its first annotation; paths are `{dataset}/{fileName}`.
pub fn write_cls(manifest: &CompositeManifest) -> String {
    let mut first: BTreeMap<&str, &str> = BTreeMap::new();
    for a in &manifest.annotations {
        first.entry(a.image_iri.as_str()).or_insert(a.label.as_str());
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let _ = w.write_record(crate::ingest::CLS_HEADER);
    for img in &manifest.images {
        if let Some(label) = first.get(img.iri.as_str()) {
            let path = format!("{}/{}", img.dataset, img.file_name);
            let _ = w.write_record([path.as_str(), label, &img.width.to_string(), &img.height.to_string()]);
        }
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}

/// Writer output by format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExportPayload {
    Coco(String),
    Kitti(BTreeMap<String, String>),
    Cls(String),
}

pub fn export<S: TripleSource + ?Sized>(request: &ExportRequest, src: &S) -> Result<ExportPayload, ExportError> {
    let manifest = build_manifest(request, src)?;
    Ok(match request.format {
        ExportFormat::Coco => ExportPayload::Coco(write_coco(&manifest)),
        ExportFormat::Kitti => ExportPayload::Kitti(write_kitti(&manifest)?),
        ExportFormat::Cls => ExportPayload::Cls(write_cls(&manifest)),
    })
}
