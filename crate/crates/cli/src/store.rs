//! On-disk store: `asserted.nt`, `inferred.nt` and `meta.json` in one directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vkg_core::ingest::{DatasetDescriptor, MappingRules, DEFAULT_BASE_IRI};
use vkg_core::rdf::load_ntriples;
use vkg_core::schema::bootstrap_schema;
use vkg_core::taxonomy::TaxonomyTable;
use vkg_core::TripleStore;

use crate::CliError;

pub const BASE_ENV: &str = "VKG_BASE_IRI";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_iri: Option<String>,
    #[serde(default)]
    pub datasets: Vec<DatasetDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<serde_json::Value>,
}

pub struct StoreDir {
    pub path: PathBuf,
    pub store: TripleStore,
    pub meta: Meta,
}

fn read_optional(path: &Path) -> Result<Option<String>, CliError> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(Some(text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(CliError::io(path, e)),
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

impl StoreDir {
    /// Opens `path`; a missing directory or dump is an empty store holding
    /// only the schema.
    pub fn open(path: &Path) -> Result<Self, CliError> {
        let meta_path = path.join("meta.json");
        let meta: Meta = match read_optional(&meta_path)? {
            Some(text) => serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", meta_path.display())))?,
            None => Meta::default(),
        };
        let asserted_path = path.join("asserted.nt");
        let mut store = match read_optional(&asserted_path)? {
            Some(text) => {
                load_ntriples(&text, false).map_err(|e| CliError::data(format!("{}: {e}", asserted_path.display())))?
            }
            None => {
                let mut s = TripleStore::new();
                bootstrap_schema(&mut s);
                s
            }
        };
        let inferred_path = path.join("inferred.nt");
        if let Some(text) = read_optional(&inferred_path)? {
            let inferred =
                load_ntriples(&text, true).map_err(|e| CliError::data(format!("{}: {e}", inferred_path.display())))?;
            for t in inferred.iter() {
                store.insert(&t);
            }
        }
        Ok(Self { path: path.to_owned(), store, meta })
    }

    pub fn save(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.path).map_err(|e| CliError::io(&self.path, e))?;
        let mut inferred = TripleStore::new();
        for t in self.store.iter().filter(|t| t.is_inferred()) {
            inferred.insert(&t.with_inferred(false));
        }
        write_atomic(&self.path.join("asserted.nt"), &self.store.dump_ntriples(false))?;
        write_atomic(&self.path.join("inferred.nt"), &inferred.dump_ntriples(false))?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        write_atomic(&self.path.join("meta.json"), &(meta + "\n"))
    }

    /// Mapping rules for this store. The base IRI is fixed by the first write;
    /// an override that disagrees with it is refused.
    pub fn rules(&mut self, flag: Option<&str>) -> Result<MappingRules, CliError> {
        let env = std::env::var(BASE_ENV).ok().filter(|v| !v.is_empty());
        let wanted = flag.map(str::to_owned).or(env);
        let base = match (&self.meta.base_iri, wanted) {
            (Some(have), Some(want)) if *have != want => {
                return Err(CliError::Usage(format!(
                    "store {} uses base IRI {have}; refusing to mix in {want}",
                    self.path.display()
                )))
            }
            (Some(have), _) => have.clone(),
            (None, want) => want.unwrap_or_else(|| DEFAULT_BASE_IRI.to_owned()),
        };
        let rules = MappingRules::new(base.clone()).map_err(|e| CliError::Usage(format!("base IRI: {e}")))?;
        self.meta.base_iri = Some(base);
        Ok(rules)
    }

    pub fn base_iri(&self) -> String {
        self.meta
            .base_iri
            .clone()
            .or_else(|| std::env::var(BASE_ENV).ok().filter(|v| !v.is_empty()))
            .unwrap_or_else(|| DEFAULT_BASE_IRI.to_owned())
    }

    pub fn taxonomy(&self) -> Result<TaxonomyTable, CliError> {
        match &self.meta.taxonomy {
            Some(v) => TaxonomyTable::from_json(&v.to_string())
                .map_err(|e| CliError::data(format!("{}: taxonomy: {e}", self.path.join("meta.json").display()))),
            None => Ok(TaxonomyTable::default()),
        }
    }

    pub fn set_taxonomy(&mut self, table: &TaxonomyTable) {
        self.meta.taxonomy = Some(serde_json::from_str(&table.to_json()).expect("taxonomy JSON"));
    }
}
