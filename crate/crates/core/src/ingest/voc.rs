//! Pascal VOC per-image XML.

use roxmltree::{Document, Node};

use super::{AnnotationRecord, DatasetBundle, DatasetDescriptor, ImageRecord, IngestError, TaskKind};
use crate::Bbox;

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn text_at(doc: &str, node: Node, path: &[&str], shown: &str) -> Result<String, IngestError> {
    let mut cur = node;
    for seg in path {
        cur = child(cur, seg)
            .ok_or_else(|| IngestError::MissingElement { document: doc.to_owned(), path: shown.to_owned() })?;
    }
    Ok(cur.text().unwrap_or("").trim().to_owned())
}

fn number_at(doc: &str, node: Node, path: &[&str], shown: &str) -> Result<f64, IngestError> {
    let raw = text_at(doc, node, path, shown)?;
    raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| IngestError::InvalidField {
        path: format!("{doc}: {shown}"),
        reason: format!("`{raw}` is not a number"),
    })
}

/// Parses `(document name, xml text)` pairs, one image per document.
/// Annotation ids are `{filename stem}-{object index}`.
pub fn parse_voc<'a>(
    documents: impl IntoIterator<Item = (&'a str, &'a str)>,
    descriptor: DatasetDescriptor,
) -> Result<DatasetBundle, IngestError> {
    let mut bundle = DatasetBundle::new(descriptor);
    for (doc_name, xml) in documents {
        let doc = Document::parse(xml)
            .map_err(|e| IngestError::XmlSyntax { document: doc_name.to_owned(), message: e.to_string() })?;
        let root = doc.root_element();
        let file_name = text_at(doc_name, root, &["filename"], "annotation/filename")?;
        let stem = file_name.rsplit_once('.').map_or(file_name.as_str(), |(s, _)| s).to_owned();
        let dim = |tag: &str| -> Result<u32, IngestError> {
            let shown = format!("annotation/size/{tag}");
            let raw = text_at(doc_name, root, &["size", tag], &shown)?;
            raw.parse::<u32>().ok().filter(|v| *v > 0).ok_or_else(|| IngestError::InvalidField {
                path: format!("{doc_name}: {shown}"),
                reason: format!("`{raw}` is not a positive integer"),
            })
        };
        let (width, height) = (dim("width")?, dim("height")?);
        bundle.images.push(ImageRecord::new(stem.clone(), file_name.clone(), width, height));

        for (i, obj) in root.children().filter(|c| c.has_tag_name("object")).enumerate() {
            let at = |rest: &str| format!("annotation/object[{}]/{rest}", i + 1);
            let name = text_at(doc_name, obj, &["name"], &at("name"))?;
            let mut corners = [0.0; 4];
            for (slot, tag) in corners.iter_mut().zip(["xmin", "ymin", "xmax", "ymax"]) {
                *slot = number_at(doc_name, obj, &["bndbox", tag], &at(&format!("bndbox/{tag}")))?;
            }
            let [x0, y0, x1, y1] = corners;
            if x0 >= x1 || y0 >= y1 {
                return Err(IngestError::CornerInversion { document: doc_name.to_owned(), path: at("bndbox") });
            }
            bundle.annotations.push(AnnotationRecord {
                local_id: format!("{stem}-{i}"),
                image_local_id: stem.clone(),
                kind: TaskKind::Detection,
                raw_label: name,
                bbox: Some(Bbox::from_corners(x0, y0, x1, y1)),
            });
        }
    }
    Ok(bundle)
}
