//! Reading dataset sources from disk.
//!
//! Layouts:
//! - `coco`: one JSON file.
//! - `voc`: XML files, or directories holding them.
//! - `kitti`: a directory with `sizes.json` (`{"stem": [width, height]}`) and
//!   label files either directly inside it or under `labels/`.
//! - `cls`: one CSV file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{parse_classification, parse_coco, parse_kitti, parse_voc, DatasetBundle, DatasetDescriptor, IngestError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Coco,
    Voc,
    Kitti,
    Cls,
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceFormat::Coco => "coco",
            SourceFormat::Voc => "voc",
            SourceFormat::Kitti => "kitti",
            SourceFormat::Cls => "cls",
        })
    }
}

impl std::str::FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "coco" => Ok(SourceFormat::Coco),
            "voc" => Ok(SourceFormat::Voc),
            "kitti" => Ok(SourceFormat::Kitti),
            "cls" | "csv" => Ok(SourceFormat::Cls),
            _ => Err(format!("unknown format `{s}` (expected coco, voc, kitti or cls)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {error}", path.display())]
    Data { path: PathBuf, error: IngestError },
    #[error("{}: {message}", path.display())]
    Layout { path: PathBuf, message: String },
}

impl LoadError {
    /// True for malformed content, false for file-system trouble.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, LoadError::Io { .. })
    }
}

fn read(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.to_owned(), source })
}

fn list(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, LoadError> {
    let io = |source| LoadError::Io { path: dir.to_owned(), source };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn single(paths: &[PathBuf], format: SourceFormat) -> Result<&Path, LoadError> {
    match paths {
        [p] => Ok(p),
        _ => Err(LoadError::Layout {
            path: paths.first().cloned().unwrap_or_default(),
            message: format!("{format} expects exactly one input file, got {}", paths.len()),
        }),
    }
}

/// Parses one dataset from disk.
pub fn read_dataset(
    format: SourceFormat,
    paths: &[PathBuf],
    descriptor: DatasetDescriptor,
) -> Result<DatasetBundle, LoadError> {
    match format {
        SourceFormat::Coco => {
            let path = single(paths, format)?;
            parse_coco(&read(path)?, descriptor).map_err(|error| LoadError::Data { path: path.to_owned(), error })
        }
        SourceFormat::Cls => {
            let path = single(paths, format)?;
            parse_classification(&read(path)?, descriptor)
                .map_err(|error| LoadError::Data { path: path.to_owned(), error })
        }
        SourceFormat::Voc => {
            let mut files = Vec::new();
            for p in paths {
                if p.is_dir() {
                    files.extend(list(p, "xml")?);
                } else {
                    files.push(p.clone());
                }
            }
            let mut docs = Vec::with_capacity(files.len());
            for f in &files {
                docs.push((f.file_name().unwrap_or_default().to_string_lossy().into_owned(), read(f)?));
            }
            parse_voc(docs.iter().map(|(n, t)| (n.as_str(), t.as_str())), descriptor).map_err(|error| {
                let path = match &error {
                    IngestError::XmlSyntax { document, .. }
                    | IngestError::MissingElement { document, .. }
                    | IngestError::CornerInversion { document, .. } => {
                        files.iter().find(|f| f.file_name().is_some_and(|n| n == document.as_str())).cloned()
                    }
                    _ => None,
                };
                LoadError::Data { path: path.unwrap_or_else(|| paths.first().cloned().unwrap_or_default()), error }
            })
        }
        SourceFormat::Kitti => {
            let dir = single(paths, format)?;
            if !dir.is_dir() {
                return Err(LoadError::Layout {
                    path: dir.to_owned(),
                    message: "kitti input must be a directory with sizes.json".into(),
                });
            }
            let sizes_path = dir.join("sizes.json");
            let sizes: BTreeMap<String, (u32, u32)> = serde_json::from_str(&read(&sizes_path)?)
                .map_err(|e| LoadError::Data { path: sizes_path.clone(), error: IngestError::json(&e) })?;
            let label_dir = if dir.join("labels").is_dir() { dir.join("labels") } else { dir.to_owned() };
            let mut labels = BTreeMap::new();
            for f in list(&label_dir, "txt")? {
                let stem = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                labels.insert(stem, read(&f)?);
            }
            parse_kitti(&labels, &sizes, descriptor).map_err(|error| {
                let path = match &error {
                    IngestError::ShortLine { file, .. } | IngestError::NonNumeric { file, .. } => {
                        label_dir.join(format!("{file}.txt"))
                    }
                    _ => dir.to_owned(),
                };
                LoadError::Data { path, error }
            })
        }
    }
}
