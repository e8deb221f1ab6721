use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::text;

pub type ClassId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub class_id: ClassId,
    pub name: String,
    /// Description fed to the text encoder, e.g. "a photo of a {name}".
    pub prompt_text: String,
    /// Row of this class in the text feature matrix.
    pub text_row: usize,
}

/// Class entries plus an id lookup. Duplicate ids are tolerated here and
/// reported by validation; lookups resolve to the first occurrence.
#[derive(Debug, Clone, Default)]
pub struct ClassCatalog {
    entries: Vec<ClassEntry>,
    by_id: HashMap<ClassId, usize>,
}

impl ClassCatalog {
    pub fn new(entries: Vec<ClassEntry>) -> Self {
        let mut by_id = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            by_id.entry(e.class_id).or_insert(i);
        }
        Self { entries, by_id }
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, id: ClassId) -> Option<usize> {
        self.by_id.get(&id).copied()
    }

    pub fn get(&self, id: ClassId) -> Option<&ClassEntry> {
        self.position(id).map(|i| &self.entries[i])
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.by_id.contains_key(&id)
    }

    /// Name lookup under the NFC + case-fold rule.
    pub fn find_by_name(&self, name: &str) -> Option<&ClassEntry> {
        let needle = text::fold(name);
        self.entries.iter().find(|e| text::fold(&e.name) == needle)
    }
}

/// An ordered, duplicate-free, non-empty list of class ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Vocabulary {
    pub label: String,
    class_ids: Vec<ClassId>,
}

impl Vocabulary {
    pub fn new(label: impl Into<String>, class_ids: Vec<ClassId>) -> Result<Self> {
        if class_ids.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut seen = HashSet::with_capacity(class_ids.len());
        for &c in &class_ids {
            if !seen.insert(c) {
                return Err(Error::DuplicateClass(c));
            }
        }
        Ok(Self {
            label: label.into(),
            class_ids,
        })
    }

    pub fn class_ids(&self) -> &[ClassId] {
        &self.class_ids
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.class_ids.contains(&id)
    }

    pub fn position(&self, id: ClassId) -> Option<usize> {
        self.class_ids.iter().position(|&c| c == id)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            label: String,
            class_ids: Vec<ClassId>,
        }
        let raw = Raw::deserialize(d)?;
        Vocabulary::new(raw.label, raw.class_ids).map_err(serde::de::Error::custom)
    }
}

/// Concatenates vocabularies in order, dropping any class id already seen in
/// an earlier vocabulary. Returns `EmptyVocabulary` only for an empty input.
pub fn dedup_union(vocabs: &[Vocabulary]) -> Result<Vocabulary> {
    let mut seen = HashSet::new();
    let mut ids = Vec::new();
    for v in vocabs {
        for &c in v.class_ids() {
            if seen.insert(c) {
                ids.push(c);
            }
        }
    }
    let label = vocabs
        .iter()
        .map(|v| v.label.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Vocabulary::new(label, ids)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VocabularyHierarchy {
    pub vocabularies: Vec<Vocabulary>,
}

impl VocabularyHierarchy {
    pub fn new(vocabularies: Vec<Vocabulary>) -> Self {
        Self { vocabularies }
    }

    pub fn len(&self) -> usize {
        self.vocabularies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabularies.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Vocabulary> {
        self.vocabularies.get(i)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.vocabularies
            .iter()
            .position(|v| text::names_equal(&v.label, label))
    }

    /// Returns a hierarchy whose vocabularies are made disjoint by the
    /// first-occurrence rule of [`dedup_union`]. Vocabularies left empty are dropped.
    pub fn deduplicated(&self) -> Self {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(self.vocabularies.len());
        for v in &self.vocabularies {
            let ids: Vec<ClassId> = v
                .class_ids()
                .iter()
                .copied()
                .filter(|c| seen.insert(*c))
                .collect();
            if let Ok(v) = Vocabulary::new(v.label.clone(), ids) {
                out.push(v);
            }
        }
        Self::new(out)
    }
}

/// Image embeddings with one class label per row.
#[derive(Debug, Clone)]
pub struct LabeledImageSet {
    pub embeddings: EmbeddingMatrix,
    pub labels: Vec<ClassId>,
}

impl LabeledImageSet {
    pub fn new(embeddings: EmbeddingMatrix, labels: Vec<ClassId>) -> Result<Self> {
        if labels.len() != embeddings.rows() {
            return Err(Error::LabelCountMismatch {
                labels: labels.len(),
                rows: embeddings.rows(),
            });
        }
        Ok(Self { embeddings, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        self.embeddings.row(i)
    }

    /// Row indices whose label is in `classes`, in row order.
    pub fn indices_in(&self, classes: &[ClassId]) -> Vec<usize> {
        let set: HashSet<ClassId> = classes.iter().copied().collect();
        (0..self.len())
            .filter(|&i| set.contains(&self.labels[i]))
            .collect()
    }

    /// The sub-dataset of images labelled with a class in `vocab`.
    pub fn restrict(&self, vocab: &Vocabulary) -> Result<Self> {
        let idx = self.indices_in(vocab.class_ids());
        if idx.is_empty() {
            return Err(Error::EmptyImageSet);
        }
        Ok(Self {
            embeddings: self.embeddings.select_rows(&idx)?,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

/// Caption texts with the text and paired-image feature of each caption.
#[derive(Debug, Clone)]
pub struct CaptionCorpus {
    pub captions: Vec<String>,
    pub text_embeddings: EmbeddingMatrix,
    pub image_embeddings: EmbeddingMatrix,
}

impl CaptionCorpus {
    pub fn new(
        captions: Vec<String>,
        text_embeddings: EmbeddingMatrix,
        image_embeddings: EmbeddingMatrix,
    ) -> Result<Self> {
        if captions.len() != text_embeddings.rows() || captions.len() != image_embeddings.rows() {
            return Err(Error::CorpusMisaligned {
                captions: captions.len(),
                text_rows: text_embeddings.rows(),
                image_rows: image_embeddings.rows(),
            });
        }
        Ok(Self {
            captions,
            text_embeddings,
            image_embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }
}

/// Text features addressed by class id through a catalog.
#[derive(Debug, Clone, Copy)]
pub struct ClassAnchors<'a> {
    pub catalog: &'a ClassCatalog,
    pub features: &'a EmbeddingMatrix,
}

impl<'a> ClassAnchors<'a> {
    pub fn new(catalog: &'a ClassCatalog, features: &'a EmbeddingMatrix) -> Self {
        Self { catalog, features }
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn vector(&self, id: ClassId) -> Result<&'a [f32]> {
        let entry = self.catalog.get(id).ok_or(Error::UnknownClass(id))?;
        if entry.text_row >= self.features.rows() {
            return Err(Error::UnknownClass(id));
        }
        Ok(self.features.row(entry.text_row))
    }
}

#[derive(Debug, Clone)]
pub struct EvaluationDataset {
    pub catalog: ClassCatalog,
    pub text_features: EmbeddingMatrix,
    pub images: LabeledImageSet,
    pub hierarchy: VocabularyHierarchy,
}

impl EvaluationDataset {
    pub fn anchors(&self) -> ClassAnchors<'_> {
        ClassAnchors::new(&self.catalog, &self.text_features)
    }

    /// Same dataset with a replacement text feature matrix (e.g. after REPE).
    pub fn with_text_features(&self, text_features: EmbeddingMatrix) -> Self {
        Self {
            text_features,
            ..self.clone()
        }
    }

    /// Same dataset with the hierarchy made disjoint via [`dedup_union`] semantics.
    pub fn with_deduplicated_hierarchy(&self) -> Self {
        Self {
            hierarchy: self.hierarchy.deduplicated(),
            ..self.clone()
        }
    }

    /// Returns the dataset if it has no violations.
    pub fn validated(self) -> Result<Self> {
        let v = super::validate_dataset(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidDataset(v))
        }
    }
}
