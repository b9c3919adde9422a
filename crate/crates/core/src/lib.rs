pub mod catalog;
pub mod export;
pub mod geometry;
pub mod ingest;
pub mod rdf;
pub mod schema;
pub mod sparql;
pub mod taxonomy;

pub use geometry::{BoundingBox, Coord};
pub use rdf::{Snapshot, Term, Triple, TripleSource, TripleStore};

/// Boxes as ingested and stored.
pub type Bbox = BoundingBox<f64>;
/// Boxes for display-space drawing.
pub type DisplayBox = BoundingBox<f32>;
