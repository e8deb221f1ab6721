//! Seeded synthetic fixtures: random unit embeddings, labelled images that
//! cluster around their class text features, and caption corpora.
//!
//! Used by the test suites and for smoke-testing the command line without
//! model weights. Everything is a pure function of the seed.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::store::{
    write_embedding_matrix, write_labels, CaptionCorpus, CaptionSource, CatalogRecord, ClassId,
    EmbeddingMatrix, EvaluationDataset, LabeledImageSet, Manifest, TextFeatureSource, Vocabulary,
    VocabularyHierarchy, MANIFEST_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub vocabularies: usize,
    pub classes_per_vocabulary: usize,
    pub images_per_class: usize,
    pub dim: usize,
    /// Standard deviation of the per-coordinate image noise around the
    /// class text feature, before renormalization.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            vocabularies: 4,
            classes_per_vocabulary: 3,
            images_per_class: 8,
            dim: 16,
            noise: 0.35,
            seed: 0,
        }
    }
}

fn gaussian_row(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect()
}

fn unit_rows(rows: Vec<Vec<f32>>) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(&rows)
        .and_then(|m| m.normalize_rows())
        .expect("gaussian rows are finite and nonzero")
}

/// `rows` independent directions, uniform on the sphere.
pub fn random_unit_matrix(rows: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    unit_rows((0..rows).map(|_| gaussian_row(&mut rng, dim)).collect())
}

/// Unit vectors at `center + noise * gaussian`, renormalized.
pub fn perturbed(center: &[f32], count: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    (0..count)
        .map(|_| {
            center
                .iter()
                .map(|&c| (f64::from(c) + noise * rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect()
        })
        .collect()
}

/// Disjoint hierarchy `v0, v1, ...`; class `k` is named `class{k}`.
pub fn dataset(cfg: &SyntheticConfig) -> EvaluationDataset {
    let classes = cfg.vocabularies * cfg.classes_per_vocabulary;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let text_features = unit_rows(
        (0..classes)
            .map(|_| gaussian_row(&mut rng, cfg.dim))
            .collect(),
    );
    let mut rows = Vec::with_capacity(classes * cfg.images_per_class);
    let mut labels = Vec::with_capacity(rows.capacity());
    for c in 0..classes {
        rows.extend(perturbed(
            text_features.row(c),
            cfg.images_per_class,
            cfg.noise,
            &mut rng,
        ));
        labels.extend(std::iter::repeat_n(c as ClassId, cfg.images_per_class));
    }
    let records = catalog_records(classes);
    let hierarchy = VocabularyHierarchy::new(
        (0..cfg.vocabularies)
            .map(|v| {
                let ids = (v * cfg.classes_per_vocabulary..(v + 1) * cfg.classes_per_vocabulary)
                    .map(|c| c as ClassId)
                    .collect();
                Vocabulary::new(format!("v{v}"), ids).expect("nonempty and distinct")
            })
            .collect(),
    );
    EvaluationDataset {
        catalog: crate::store::catalog_from_records(&records),
        text_features,
        images: LabeledImageSet::new(unit_rows(rows), labels).expect("one label per row"),
        hierarchy,
    }
}

fn catalog_records(classes: usize) -> Vec<CatalogRecord> {
    (0..classes)
        .map(|c| CatalogRecord {
            id: c as ClassId,
            name: format!("class{c}"),
            prompt: format!("a photo of a class{c}."),
            row: None,
        })
        .collect()
}

/// Captions either mention one catalog class (embeddings near its text
/// feature) or are unrelated filler (random embeddings).
pub fn caption_corpus(d: &EvaluationDataset, rows: usize, noise: f64, seed: u64) -> CaptionCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = d.catalog.entries();
    let dim = d.text_features.dim();
    let mut captions = Vec::with_capacity(rows);
    let mut text = Vec::with_capacity(rows);
    let mut image = Vec::with_capacity(rows);
    for r in 0..rows {
        if rng.random_bool(0.7) {
            let e = &entries[rng.random_range(0..entries.len())];
            let center = d.text_features.row(e.text_row);
            captions.push(format!("a picture of {} number {r}", e.name));
            text.extend(perturbed(center, 1, noise, &mut rng));
            image.extend(perturbed(center, 1, noise, &mut rng));
        } else {
            captions.push(format!("unrelated scenery {r}"));
            text.push(gaussian_row(&mut rng, dim));
            image.push(gaussian_row(&mut rng, dim));
        }
    }
    CaptionCorpus::new(captions, unit_rows(text), unit_rows(image))
        .expect("aligned by construction")
}

/// Writes containers, labels, and a manifest into `dir`; returns the
/// manifest path. The dataset's catalog must use sequential text rows.
pub fn write_fixture(
    d: &EvaluationDataset,
    corpus: Option<&CaptionCorpus>,
    dir: &Path,
) -> Result<PathBuf> {
    write_embedding_matrix(&d.text_features, dir.join("text.emb"))?;
    write_embedding_matrix(&d.images.embeddings, dir.join("images.emb"))?;
    write_labels(&d.images.labels, dir.join("labels.bin"))?;
    let captions = corpus
        .map(|c| -> Result<CaptionSource> {
            let mut lines = c.captions.join("\n");
            lines.push('\n');
            let path = dir.join("captions.txt");
            fs::write(&path, lines).map_err(|e| Error::io(&path, e))?;
            write_embedding_matrix(&c.text_embeddings, dir.join("caption_text.emb"))?;
            write_embedding_matrix(&c.image_embeddings, dir.join("caption_images.emb"))?;
            Ok(CaptionSource {
                captions: "captions.txt".into(),
                text_features: "caption_text.emb".into(),
                image_features: "caption_images.emb".into(),
            })
        })
        .transpose()?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        text_features: TextFeatureSource::Single("text.emb".into()),
        image_features: "images.emb".into(),
        labels: "labels.bin".into(),
        normalize: false,
        catalog: d
            .catalog
            .entries()
            .iter()
            .map(|e| CatalogRecord {
                id: e.class_id,
                name: e.name.clone(),
                prompt: e.prompt_text.clone(),
                row: Some(e.text_row),
            })
            .collect(),
        hierarchy: d.hierarchy.clone(),
        captions,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
