//! COCO-style detection JSON.
//!
//! Only the fields needed for boxes and labels are read:
//! `images[{id, file_name, width, height}]`,
//! `annotations[{id, image_id, category_id, bbox: [x, y, w, h]}]`,
//! `categories[{id, name}]`. Everything else is ignored.
//!
//! When the descriptor lists the classification task, an annotation without a
//! `bbox` key becomes a classification annotation; otherwise `bbox` is required.

use std::collections::{HashMap, HashSet};

use serde_json::Value;

use super::{AnnotationRecord, DatasetBundle, DatasetDescriptor, ImageRecord, IngestError, TaskKind};
use crate::Bbox;

fn field<'a>(obj: &'a Value, path: &str, key: &str) -> Result<&'a Value, IngestError> {
    obj.get(key).ok_or_else(|| IngestError::MissingField { path: format!("{path}.{key}") })
}

fn array<'a>(root: &'a Value, key: &str) -> Result<&'a Vec<Value>, IngestError> {
    match root.get(key) {
        None => Err(IngestError::MissingField { path: key.to_owned() }),
        Some(Value::Array(a)) => Ok(a),
        Some(_) => Err(IngestError::InvalidField { path: key.to_owned(), reason: "expected an array".into() }),
    }
}

/// COCO ids are integers in practice; strings are accepted too.
fn id_of(v: &Value, path: &str) -> Result<String, IngestError> {
    match v {
        Value::Number(n) if n.is_u64() || n.is_i64() => Ok(n.to_string()),
        Value::String(s) if !s.is_empty() => Ok(s.clone()),
        _ => Err(IngestError::InvalidField { path: path.to_owned(), reason: "expected an integer or string id".into() }),
    }
}

fn string_of(v: &Value, path: &str) -> Result<String, IngestError> {
    v.as_str()
        .map(str::to_owned)
        .ok_or_else(|| IngestError::InvalidField { path: path.to_owned(), reason: "expected a string".into() })
}

fn dimension(v: &Value, path: &str) -> Result<u32, IngestError> {
    v.as_u64()
        .filter(|n| *n > 0)
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| IngestError::InvalidField { path: path.to_owned(), reason: "expected a positive integer".into() })
}

pub fn parse_coco(json_text: &str, descriptor: DatasetDescriptor) -> Result<DatasetBundle, IngestError> {
    let root: Value = serde_json::from_str(json_text).map_err(|e| IngestError::json(&e))?;
    let mut bundle = DatasetBundle::new(descriptor);
    let segmentation_task = bundle.descriptor.tasks.contains(&TaskKind::Segmentation);
    let classification_task = bundle.descriptor.tasks.contains(&TaskKind::Classification);

    let mut categories = HashMap::new();
    for (i, cat) in array(&root, "categories")?.iter().enumerate() {
        let path = format!("categories[{i}]");
        let id = id_of(field(cat, &path, "id")?, &format!("{path}.id"))?;
        let name = string_of(field(cat, &path, "name")?, &format!("{path}.name"))?;
        categories.insert(id, name);
    }

    let mut image_ids = HashSet::new();
    for (i, img) in array(&root, "images")?.iter().enumerate() {
        let path = format!("images[{i}]");
        let id = id_of(field(img, &path, "id")?, &format!("{path}.id"))?;
        let file_name = string_of(field(img, &path, "file_name")?, &format!("{path}.file_name"))?;
        let width = dimension(field(img, &path, "width")?, &format!("{path}.width"))?;
        let height = dimension(field(img, &path, "height")?, &format!("{path}.height"))?;
        if !image_ids.insert(id.clone()) {
            return Err(IngestError::InvalidField { path: format!("{path}.id"), reason: format!("duplicate image id {id}") });
        }
        bundle.images.push(ImageRecord::new(id, file_name, width, height));
    }

    for (i, ann) in array(&root, "annotations")?.iter().enumerate() {
        let path = format!("annotations[{i}]");
        let id = id_of(field(ann, &path, "id")?, &format!("{path}.id"))?;
        let image_id = id_of(field(ann, &path, "image_id")?, &format!("{path}.image_id"))?;
        let category_id = id_of(field(ann, &path, "category_id")?, &format!("{path}.category_id"))?;
        if !image_ids.contains(&image_id) {
            return Err(IngestError::UnknownImage { path: format!("{path}.image_id"), id: image_id });
        }
        let Some(label) = categories.get(&category_id) else {
            return Err(IngestError::UnknownCategory { path: format!("{path}.category_id"), id: category_id });
        };
        if classification_task && ann.get("bbox").is_none() {
            bundle.annotations.push(AnnotationRecord {
                local_id: id,
                image_local_id: image_id,
                kind: TaskKind::Classification,
                raw_label: label.clone(),
                bbox: None,
            });
            continue;
        }
        let bbox_path = format!("{path}.bbox");
        let bbox: Vec<f64> = field(ann, &path, "bbox")?
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .filter(|v: &Vec<f64>| v.len() == 4)
            .ok_or_else(|| IngestError::InvalidField { path: bbox_path.clone(), reason: "expected [x, y, w, h]".into() })?;
        if !(bbox[2] > 0.0 && bbox[3] > 0.0) {
            return Err(IngestError::NonPositiveBox { path: bbox_path });
        }
        let has_mask = ann.get("segmentation").is_some_and(|s| match s {
            Value::Array(a) => !a.is_empty(),
            Value::Object(o) => !o.is_empty(),
            _ => false,
        });
        let kind = if segmentation_task && has_mask { TaskKind::Segmentation } else { TaskKind::Detection };
        bundle.annotations.push(AnnotationRecord {
            local_id: id,
            image_local_id: image_id,
            kind,
            raw_label: label.clone(),
            bbox: Some(Bbox::from_xywh(bbox[0], bbox[1], bbox[2], bbox[3])),
        });
    }
    Ok(bundle)
}
