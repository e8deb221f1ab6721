//! JSON manifest tying containers, labels, catalog, and hierarchy together.
//!
//! Relative paths resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::*;
use crate::error::{Error, Result};
use crate::matcher;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogRecord {
    pub id: ClassId,
    pub name: String,
    pub prompt: String,
    /// Text feature row; defaults to the record's position in the catalog.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
}

/// One path, or several per-prompt containers to be ensembled per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TextFeatureSource {
    Single(PathBuf),
    Ensemble(Vec<PathBuf>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionSource {
    /// UTF-8 file, one caption per line.
    pub captions: PathBuf,
    pub text_features: PathBuf,
    pub image_features: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub text_features: TextFeatureSource,
    pub image_features: PathBuf,
    pub labels: PathBuf,
    /// Apply `normalize_rows` to every loaded matrix.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub normalize: bool,
    pub catalog: Vec<CatalogRecord>,
    pub hierarchy: VocabularyHierarchy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<CaptionSource>,
}

/// Catalog and hierarchy without any feature files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFragment {
    pub name: String,
    pub catalog: Vec<CatalogRecord>,
    pub hierarchy: VocabularyHierarchy,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<LoadedManifest> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::ManifestVersion(manifest.version));
        }
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(LoadedManifest { manifest, base_dir })
    }

    pub fn catalog(&self) -> ClassCatalog {
        catalog_from_records(&self.catalog)
    }
}

pub fn catalog_from_records(records: &[CatalogRecord]) -> ClassCatalog {
    ClassCatalog::new(
        records
            .iter()
            .enumerate()
            .map(|(i, r)| ClassEntry {
                class_id: r.id,
                name: r.name.clone(),
                prompt_text: r.prompt.clone(),
                text_row: r.row.unwrap_or(i),
            })
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub base_dir: PathBuf,
}

impl LoadedManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn matrix(&self, p: &Path) -> Result<EmbeddingMatrix> {
        let m = load_embedding_matrix(self.resolve(p))?;
        if self.manifest.normalize {
            m.normalize_rows()
        } else {
            Ok(m)
        }
    }

    /// Loads text features, ensembling per class when several prompt
    /// containers are listed.
    pub fn load_text_features(&self) -> Result<EmbeddingMatrix> {
        match &self.manifest.text_features {
            TextFeatureSource::Single(p) => self.matrix(p),
            TextFeatureSource::Ensemble(paths) => {
                let sets = paths
                    .iter()
                    .map(|p| self.matrix(p))
                    .collect::<Result<Vec<_>>>()?;
                ensemble_matrices(&sets)
            }
        }
    }

    pub fn load_dataset(&self) -> Result<EvaluationDataset> {
        let text_features = self.load_text_features()?;
        let embeddings = self.matrix(&self.manifest.image_features)?;
        let labels = load_labels(self.resolve(&self.manifest.labels))?;
        Ok(EvaluationDataset {
            catalog: self.manifest.catalog(),
            text_features,
            images: LabeledImageSet::new(embeddings, labels)?,
            hierarchy: self.manifest.hierarchy.clone(),
        })
    }

    /// `Ok(None)` when the manifest has no caption section.
    pub fn load_corpus(&self) -> Result<Option<CaptionCorpus>> {
        let Some(src) = &self.manifest.captions else {
            return Ok(None);
        };
        let captions = load_lines(self.resolve(&src.captions))?;
        if captions.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let text = self.matrix(&src.text_features)?;
        let image = self.matrix(&src.image_features)?;
        CaptionCorpus::new(captions, text, image).map(Some)
    }
}

/// Reads a UTF-8 file as one entry per line (trailing newline optional).
pub fn load_lines(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect())
}

fn ensemble_matrices(sets: &[EmbeddingMatrix]) -> Result<EmbeddingMatrix> {
    let first = sets.first().ok_or(Error::EmptyList)?;
    for s in sets {
        if s.rows() != first.rows() || s.dim() != first.dim() {
            return Err(Error::DimMismatch {
                left: first.rows() * first.dim(),
                right: s.rows() * s.dim(),
            });
        }
        if !s.is_normalized() {
            return Err(Error::NotNormalized);
        }
    }
    let mut data = Vec::with_capacity(first.as_slice().len());
    for r in 0..first.rows() {
        let prompts: Vec<&[f32]> = sets.iter().map(|s| s.row(r)).collect();
        data.extend(matcher::ensemble_class_embedding(&prompts)?);
    }
    EmbeddingMatrix::new(first.rows(), first.dim(), data)?.assume_unit_norm()
}
