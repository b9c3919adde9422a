use std::collections::BTreeMap;
use std::fmt;

use serde_json::Value;

use super::{Attribute, DatasetBundle, IngestError};

/// Non-fatal sidecar problems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttributeWarning {
    UnknownImage(String),
    UnknownAttribute { image: String, key: String },
    NotAString { image: String, key: String },
}

impl fmt::Display for AttributeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownImage(id) => write!(f, "no image with local id `{id}`"),
            Self::UnknownAttribute { image, key } => write!(f, "image `{image}`: unknown attribute `{key}`"),
            Self::NotAString { image, key } => write!(f, "image `{image}`: attribute `{key}` is not a string"),
        }
    }
}

/// Merges a sidecar `{localId: {weather?, timeOfDay?, illumination?}}` into
/// the bundle's images. Values are lowercased. Only JSON syntax is fatal.
pub fn load_attributes(sidecar_json: &str, bundle: &mut DatasetBundle) -> Result<Vec<AttributeWarning>, IngestError> {
    let entries: BTreeMap<String, Value> = serde_json::from_str(sidecar_json).map_err(|e| IngestError::json(&e))?;
    let mut warnings = Vec::new();
    for (id, attrs) in entries {
        let Some(img) = bundle.images.iter_mut().find(|i| i.local_id == id) else {
            warnings.push(AttributeWarning::UnknownImage(id));
            continue;
        };
        let Value::Object(attrs) = attrs else {
            warnings.push(AttributeWarning::NotAString { image: id, key: String::new() });
            continue;
        };
        for (key, value) in attrs {
            let Some(attr) = Attribute::from_key(&key) else {
                warnings.push(AttributeWarning::UnknownAttribute { image: id.clone(), key });
                continue;
            };
            match value.as_str() {
                Some(v) => {
                    img.attributes.insert(attr, v.trim().to_lowercase());
                }
                None => warnings.push(AttributeWarning::NotAString { image: id.clone(), key }),
            }
        }
    }
    Ok(warnings)
}
