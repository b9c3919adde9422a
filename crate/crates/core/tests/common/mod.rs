#![allow(dead_code)]

pub mod random;

use std::collections::BTreeSet;
use std::path::PathBuf;

use vkg_core::ingest::{
    load_attributes, map_to_triples, read_dataset, DatasetBundle, DatasetDescriptor, MappingRules, SourceFormat,
    TaskKind,
};
use vkg_core::schema::bootstrap_schema;
use vkg_core::taxonomy::{apply_taxonomy, materialize, TaxonomyTable};
use vkg_core::{Term, TripleStore};

pub const CV: &str = "http://vision.semkg.org/onto#";
pub const CC_BY: &str = "https://creativecommons.org/licenses/by/4.0/";
pub const CC_BY_NC_SA: &str = "https://creativecommons.org/licenses/by-nc-sa/3.0/";
pub const FLICKR: &str = "https://www.flickr.com/help/terms";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn iri(s: &str) -> Term {
    Term::iri(s).unwrap()
}

pub fn cv(local: &str) -> Term {
    iri(&format!("{CV}{local}"))
}

fn descriptor(slug: &str, name: &str, license: &str, task: TaskKind) -> DatasetDescriptor {
    DatasetDescriptor::new(slug, name, Some(license), None, [task]).unwrap()
}

pub fn coco() -> DatasetBundle {
    read_dataset(
        SourceFormat::Coco,
        &[fixtures().join("coco-mini/annotations.json")],
        descriptor("coco-mini", "Mini COCO", CC_BY, TaskKind::Detection),
    )
    .unwrap()
}

pub fn kitti() -> DatasetBundle {
    let mut b = read_dataset(
        SourceFormat::Kitti,
        &[fixtures().join("kitti-mini")],
        descriptor("kitti-mini", "Mini KITTI", CC_BY_NC_SA, TaskKind::Detection),
    )
    .unwrap();
    let attrs = std::fs::read_to_string(fixtures().join("kitti-mini/attributes.json")).unwrap();
    load_attributes(&attrs, &mut b).unwrap();
    b
}

pub fn voc() -> DatasetBundle {
    read_dataset(
        SourceFormat::Voc,
        &[fixtures().join("voc-mini")],
        descriptor("voc-mini", "Mini VOC", FLICKR, TaskKind::Detection),
    )
    .unwrap()
}

pub fn vg() -> DatasetBundle {
    read_dataset(
        SourceFormat::Cls,
        &[fixtures().join("vg-cls/labels.csv")],
        descriptor("vg-cls", "Mini Visual Genome (classification)", CC_BY, TaskKind::Classification),
    )
    .unwrap()
}

pub fn person_taxonomy() -> TaxonomyTable {
    TaxonomyTable::from_json(&std::fs::read_to_string(fixtures().join("taxonomy/person.json")).unwrap()).unwrap()
}

/// Closed-form triple count of a bundle, computed from its shape alone.
pub fn formula(bundle: &DatasetBundle) -> usize {
    let d = &bundle.descriptor;
    let dataset = 4 + d.tasks.len() + usize::from(d.source_url.is_some());
    let images: usize = bundle.images.iter().map(|i| 6 + i.attributes.len()).sum();
    let anns: usize = bundle
        .annotations
        .iter()
        .map(|a| if matches!(a.kind, TaskKind::Detection | TaskKind::Segmentation) { 10 } else { 4 })
        .sum();
    dataset + images + anns
}

pub fn build(bundles: &[DatasetBundle], taxonomy: &TaxonomyTable, reason: bool) -> TripleStore {
    let mut store = TripleStore::new();
    bootstrap_schema(&mut store);
    apply_taxonomy(taxonomy, &mut store);
    let rules = MappingRules::default();
    for b in bundles {
        map_to_triples(&rules, b, taxonomy, &mut store).unwrap();
    }
    if reason {
        materialize(&mut store);
    }
    store
}

/// COCO + KITTI + VOC: twelve images.
pub fn twelve_image_store() -> TripleStore {
    build(&[coco(), kitti(), voc()], &person_taxonomy(), true)
}

/// COCO + KITTI + VG-classification with the person taxonomy, materialized.
pub fn person_store() -> TripleStore {
    build(&[coco(), kitti(), vg()], &person_taxonomy(), true)
}

pub fn image_iri(slug: &str, local_id: &str) -> String {
    MappingRules::default().image_iri(slug, local_id)
}

/// Images of `bundle` having an annotation whose raw label is in `labels`.
pub fn images_with_raw_labels(bundle: &DatasetBundle, labels: &[&str]) -> BTreeSet<String> {
    bundle
        .annotations
        .iter()
        .filter(|a| labels.contains(&a.raw_label.as_str()))
        .map(|a| image_iri(&bundle.descriptor.slug, &a.image_local_id))
        .collect()
}
