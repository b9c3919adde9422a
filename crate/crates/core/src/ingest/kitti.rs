//! KITTI object label files.
//!
//! Each line: `type truncated occluded alpha left top right bottom h w l x y z ry`
//! (15 fields, an optional 16th score). Only the type and the 2D box are used.
//! Label files carry no image size, so sizes come from the caller.

use std::collections::BTreeMap;

use super::{AnnotationRecord, DatasetBundle, DatasetDescriptor, ImageRecord, IngestError, TaskKind};
use crate::Bbox;

const DONT_CARE: &str = "DontCare";

pub fn parse_kitti(
    label_files: &BTreeMap<String, String>,
    image_sizes: &BTreeMap<String, (u32, u32)>,
    descriptor: DatasetDescriptor,
) -> Result<DatasetBundle, IngestError> {
    let mut bundle = DatasetBundle::new(descriptor);
    for (stem, text) in label_files {
        let &(width, height) = image_sizes.get(stem).ok_or_else(|| IngestError::MissingSize { stem: stem.clone() })?;
        bundle.images.push(ImageRecord::new(stem.clone(), format!("{stem}.png"), width, height));

        let mut index = 0;
        for (n, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() < 15 {
                return Err(IngestError::ShortLine { file: stem.clone(), line: n + 1, found: fields.len() });
            }
            if fields[0] == DONT_CARE {
                continue;
            }
            let mut corners = [0.0; 4];
            for (k, slot) in corners.iter_mut().enumerate() {
                *slot = fields[4 + k]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or(IngestError::NonNumeric { file: stem.clone(), line: n + 1, field: 5 + k })?;
            }
            let [l, t, r, b] = corners;
            bundle.annotations.push(AnnotationRecord {
                local_id: format!("{stem}-{index}"),
                image_local_id: stem.clone(),
                kind: TaskKind::Detection,
                raw_label: fields[0].to_owned(),
                bbox: Some(Bbox::from_corners(l, t, r, b)),
            });
            index += 1;
        }
    }
    Ok(bundle)
}
