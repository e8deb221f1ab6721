//! Similarity scoring and top-1 prediction.
//!
//! Prediction is the first position attaining the maximum cosine similarity
//! over the presented candidate order. Softmax is not applied: it does not
//! change the argmax.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, dot};
use crate::store::{ClassAnchors, ClassId, EmbeddingMatrix, LabeledImageSet, Vocabulary};

/// Dense image x class cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    images: usize,
    classes: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn images(&self) -> usize {
        self.images
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn get(&self, image: usize, class: usize) -> f64 {
        self.scores[image * self.classes + class]
    }

    #[inline]
    pub fn row(&self, image: usize) -> &[f64] {
        &self.scores[image * self.classes..(image + 1) * self.classes]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_index: usize,
    pub predicted_position: usize,
    pub predicted_class_id: ClassId,
    pub top_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginRecord {
    pub image_index: usize,
    pub positive_score: f64,
    pub max_negative_score: f64,
    /// `positive_score - max_negative_score`
    pub margin: f64,
}

pub fn similarity_matrix(images: &EmbeddingMatrix, texts: &EmbeddingMatrix) -> Result<ScoreMatrix> {
    if images.dim() != texts.dim() {
        return Err(Error::DimMismatch {
            left: images.dim(),
            right: texts.dim(),
        });
    }
    if !images.is_normalized() || !texts.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let classes = texts.rows();
    let mut scores = vec![0.0f64; images.rows() * classes];
    scores
        .par_chunks_mut(classes)
        .enumerate()
        .for_each(|(i, out)| {
            let img = images.row(i);
            for (j, s) in out.iter_mut().enumerate() {
                *s = dot(img, texts.row(j));
            }
        });
    Ok(ScoreMatrix {
        images: images.rows(),
        classes,
        scores,
    })
}

/// First position of the maximum; `None` for an empty slice.
#[inline]
pub fn first_argmax(scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best
}

/// Top-1 prediction for one image's scores over `candidates` (same order).
pub fn predict(
    image_index: usize,
    score_row: &[f64],
    candidates: &[ClassId],
) -> Result<Prediction> {
    debug_assert_eq!(score_row.len(), candidates.len());
    let (pos, top) = first_argmax(score_row).ok_or(Error::EmptyVocabulary)?;
    Ok(Prediction {
        image_index,
        predicted_position: pos,
        predicted_class_id: candidates[pos],
        top_score: top,
    })
}

fn check_inputs(images: &LabeledImageSet, anchors: &ClassAnchors<'_>) -> Result<()> {
    if images.is_empty() {
        return Err(Error::EmptyImageSet);
    }
    if images.embeddings.dim() != anchors.dim() {
        return Err(Error::DimMismatch {
            left: images.embeddings.dim(),
            right: anchors.dim(),
        });
    }
    if !images.embeddings.is_normalized() || !anchors.features.is_normalized() {
        return Err(Error::NotNormalized);
    }
    Ok(())
}

fn check_labels_within(images: &LabeledImageSet, allowed: &[ClassId]) -> Result<()> {
    let set: HashSet<ClassId> = allowed.iter().copied().collect();
    match images.labels.iter().find(|l| !set.contains(l)) {
        Some(&l) => Err(Error::LabelOutsideVocabulary(l)),
        None => Ok(()),
    }
}

/// Predictions of every image over `candidates`, in image order.
pub fn predict_all(
    images: &LabeledImageSet,
    candidates: &[ClassId],
    anchors: &ClassAnchors<'_>,
) -> Result<Vec<Prediction>> {
    check_inputs(images, anchors)?;
    if candidates.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let vectors = candidates
        .iter()
        .map(|&c| anchors.vector(c))
        .collect::<Result<Vec<_>>>()?;
    (0..images.len())
        .into_par_iter()
        .map(|i| {
            let img = images.image(i);
            let row: Vec<f64> = vectors.iter().map(|t| dot(img, t)).collect();
            predict(i, &row, candidates)
        })
        .collect()
}

fn fraction_correct(images: &LabeledImageSet, preds: &[Prediction]) -> f64 {
    let correct = preds
        .iter()
        .filter(|p| p.predicted_class_id == images.labels[p.image_index])
        .count();
    correct as f64 / images.len() as f64
}

/// Top-1 accuracy over a fixed vocabulary; every label must lie in `vocab`.
pub fn accuracy(
    images: &LabeledImageSet,
    vocab: &Vocabulary,
    anchors: &ClassAnchors<'_>,
) -> Result<f64> {
    check_labels_within(images, vocab.class_ids())?;
    let preds = predict_all(images, vocab.class_ids(), anchors)?;
    Ok(fraction_correct(images, &preds))
}

/// Accuracy on target-labelled images when the candidates are the target
/// classes followed by `distractors`, in the given order.
pub fn conditional_accuracy(
    images: &LabeledImageSet,
    target: &Vocabulary,
    distractors: &[ClassId],
    anchors: &ClassAnchors<'_>,
) -> Result<f64> {
    if let Some(&c) = distractors.iter().find(|c| target.contains(**c)) {
        return Err(Error::OverlapBetweenTargetAndDistractors(c));
    }
    check_labels_within(images, target.class_ids())?;
    let mut candidates = target.class_ids().to_vec();
    candidates.extend_from_slice(distractors);
    let preds = predict_all(images, &candidates, anchors)?;
    Ok(fraction_correct(images, &preds))
}

/// Positive score minus the largest negative score, per image.
pub fn margins(
    images: &LabeledImageSet,
    vocab: &Vocabulary,
    anchors: &ClassAnchors<'_>,
) -> Result<Vec<MarginRecord>> {
    if vocab.len() < 2 {
        return Err(Error::VocabularyTooSmall);
    }
    check_inputs(images, anchors)?;
    check_labels_within(images, vocab.class_ids())?;
    let vectors = vocab
        .class_ids()
        .iter()
        .map(|&c| anchors.vector(c))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..images.len())
        .into_par_iter()
        .map(|i| {
            let img = images.image(i);
            let label = images.labels[i];
            let mut positive = f64::NAN;
            let mut negative = f64::NEG_INFINITY;
            for (c, t) in vocab.class_ids().iter().zip(&vectors) {
                let s = dot(img, t);
                if *c == label {
                    positive = s;
                } else if s > negative {
                    negative = s;
                }
            }
            MarginRecord {
                image_index: i,
                positive_score: positive,
                max_negative_score: negative,
                margin: positive - negative,
            }
        })
        .collect())
}

/// Mean of unit-norm per-prompt embeddings, renormalized.
pub fn ensemble_class_embedding(per_prompt: &[&[f32]]) -> Result<Vec<f32>> {
    let first = per_prompt.first().ok_or(Error::EmptyList)?;
    let dim = first.len();
    let mut acc = vec![0.0f64; dim];
    for v in per_prompt {
        if v.len() != dim {
            return Err(Error::DimMismatch {
                left: dim,
                right: v.len(),
            });
        }
        if (numeric::norm(v) - 1.0).abs() > crate::store::UNIT_NORM_TOLERANCE {
            return Err(Error::NotNormalized);
        }
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += f64::from(*x);
        }
    }
    let n = per_prompt.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    let len = acc.iter().map(|a| a * a).sum::<f64>().sqrt();
    if len <= 1e-12 {
        return Err(Error::ZeroNormMean);
    }
    Ok(acc.iter().map(|a| (a / len) as f32).collect())
}
