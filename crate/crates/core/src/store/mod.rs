//! Loading and validation of embeddings, catalogs, labelled images,
//! vocabulary hierarchies, and caption corpora.
//!
//! Loaded structures are immutable; nothing here renormalizes implicitly.

mod container;
pub mod hierarchies;
mod manifest;
mod matrix;
mod types;
mod validate;

pub use container::{
    decode_embedding_matrix, encode_embedding_matrix, load_embedding_matrix, load_labels,
    write_embedding_matrix, write_labels, HEADER_LEN, MAGIC,
};
pub use manifest::{
    catalog_from_records, load_lines, CaptionSource, CatalogRecord, LoadedManifest, Manifest,
    ManifestFragment, TextFeatureSource, MANIFEST_VERSION,
};
pub use matrix::{EmbeddingMatrix, UNIT_NORM_TOLERANCE};
pub use types::{
    dedup_union, CaptionCorpus, ClassAnchors, ClassCatalog, ClassEntry, ClassId, EvaluationDataset,
    LabeledImageSet, Vocabulary, VocabularyHierarchy,
};
pub use validate::{validate_dataset, Violation};
