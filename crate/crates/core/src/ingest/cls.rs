use std::collections::HashSet;

use super::{AnnotationRecord, DatasetBundle, DatasetDescriptor, ImageRecord, IngestError, TaskKind};

pub const CLS_HEADER: [&str; 4] = ["file_path", "label", "width", "height"];

/// Classification manifest: `file_path,label,width,height`, one image and one
/// label per row.
pub fn parse_classification(csv_text: &str, descriptor: DatasetDescriptor) -> Result<DatasetBundle, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(csv_text.as_bytes());
    let csv_err = |e: csv::Error| IngestError::Csv {
        line: e.position().map_or(0, csv::Position::line),
        message: e.to_string(),
    };
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != CLS_HEADER {
        return Err(IngestError::Csv { line: 1, message: format!("expected header `{}`", CLS_HEADER.join(",")) });
    }

    let mut bundle = DatasetBundle::new(descriptor);
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, csv::Position::line);
        let file_path = record[0].to_owned();
        let label = record[1].to_owned();
        if file_path.is_empty() || label.is_empty() {
            return Err(IngestError::Csv { line, message: "file_path and label must not be empty".into() });
        }
        let dim = |s: &str| s.parse::<u32>().ok().filter(|v| *v > 0);
        let (Some(width), Some(height)) = (dim(&record[2]), dim(&record[3])) else {
            return Err(IngestError::NonPositiveDimension { line });
        };
        if !seen.insert(file_path.clone()) {
            return Err(IngestError::DuplicateFilePath { line, file_path });
        }
        bundle.images.push(ImageRecord::new(file_path.clone(), file_path.clone(), width, height));
        bundle.annotations.push(AnnotationRecord {
            local_id: file_path.clone(),
            image_local_id: file_path,
            kind: TaskKind::Classification,
            raw_label: label,
            bbox: None,
        });
    }
    Ok(bundle)
}
