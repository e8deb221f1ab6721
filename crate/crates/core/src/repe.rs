//! Retrieval-enhanced class anchors.
//!
//! A class text feature queries the caption corpus's image side; hits whose
//! caption does not mention the class name are dropped; the text features of
//! the surviving captions are averaged and mixed into the class feature:
//! `(1 - lambda) * base + lambda * mean(retrieved)`, renormalized.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::dot;
use crate::store::{CaptionCorpus, ClassId, EmbeddingMatrix, EvaluationDataset};
use crate::text;

const BLOCK_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeConfig {
    /// Captions kept after filtering.
    pub k: usize,
    /// Retrieval depth before filtering.
    pub candidate_pool: usize,
    pub lambda: f64,
}

impl Default for RepeConfig {
    fn default() -> Self {
        Self {
            k: 100,
            candidate_pool: 1000,
            lambda: 0.25,
        }
    }
}

impl RepeConfig {
    pub fn new(k: usize, candidate_pool: usize, lambda: f64) -> Result<Self> {
        let c = Self {
            k,
            candidate_pool,
            lambda,
        };
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<()> {
        if self.k == 0 || self.k > self.candidate_pool {
            return Err(Error::BadRetrievalConfig {
                k: self.k,
                pool: self.candidate_pool,
            });
        }
        check_lambda(self.lambda)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::LambdaOutOfRange(lambda))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub corpus_row: usize,
    pub score: f64,
    pub caption_text: String,
}

/// Exact top-k search over the corpus's caption-image embeddings.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    corpus: CaptionCorpus,
    folded: Vec<String>,
}

/// Heap entry ordered so that the worst hit is the maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ranked {
    score: f64,
    row: usize,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.row.cmp(&other.row))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl RetrievalIndex {
    pub fn build(corpus: CaptionCorpus) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if !corpus.image_embeddings.is_normalized() || !corpus.text_embeddings.is_normalized() {
            return Err(Error::NotNormalized);
        }
        if corpus.image_embeddings.dim() != corpus.text_embeddings.dim() {
            return Err(Error::DimMismatch {
                left: corpus.image_embeddings.dim(),
                right: corpus.text_embeddings.dim(),
            });
        }
        let folded = corpus.captions.iter().map(|c| text::fold(c)).collect();
        Ok(Self { corpus, folded })
    }

    pub fn len(&self) -> usize {
        self.corpus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpus.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.corpus.image_embeddings.dim()
    }

    pub fn corpus(&self) -> &CaptionCorpus {
        &self.corpus
    }

    /// The `top` best `(row, score)` pairs: score descending, row ascending.
    pub fn search(&self, query: &[f32], top: usize) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.dim() {
            return Err(Error::DimMismatch {
                left: query.len(),
                right: self.dim(),
            });
        }
        if top == 0 {
            return Ok(Vec::new());
        }
        let images = &self.corpus.image_embeddings;
        let blocks: Vec<Vec<Ranked>> = (0..self.len().div_ceil(BLOCK_ROWS))
            .into_par_iter()
            .map(|b| {
                let mut heap = BinaryHeap::with_capacity(top + 1);
                for row in b * BLOCK_ROWS..((b + 1) * BLOCK_ROWS).min(self.len()) {
                    let r = Ranked {
                        score: dot(images.row(row), query),
                        row,
                    };
                    if heap.len() < top {
                        heap.push(r);
                    } else if r < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(r);
                    }
                }
                heap.into_vec()
            })
            .collect();
        let mut all: Vec<Ranked> = blocks.into_iter().flatten().collect();
        all.sort_unstable();
        all.truncate(top);
        Ok(all.into_iter().map(|r| (r.row, r.score)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub hits: Vec<RetrievalHit>,
    /// Fewer than `k` captions survived the class-name filter.
    pub underfilled: bool,
}

pub fn retrieve_captions(
    index: &RetrievalIndex,
    query: &[f32],
    class_name: &str,
    config: &RepeConfig,
) -> Result<Retrieval> {
    config.check()?;
    let hits: Vec<RetrievalHit> = index
        .search(query, config.candidate_pool)?
        .into_iter()
        .filter(|&(row, _)| text::contains_folded(&index.folded[row], class_name))
        .take(config.k)
        .map(|(row, score)| RetrievalHit {
            corpus_row: row,
            score,
            caption_text: index.corpus.captions[row].clone(),
        })
        .collect();
    Ok(Retrieval {
        underfilled: hits.len() < config.k,
        hits,
    })
}

/// Returns `base` unchanged when nothing was retrieved or `lambda` is zero.
pub fn enhance_class_embedding(
    base: &[f32],
    retrieved: &[&[f32]],
    lambda: f64,
) -> Result<Vec<f32>> {
    check_lambda(lambda)?;
    if retrieved.is_empty() || lambda == 0.0 {
        return Ok(base.to_vec());
    }
    let dim = base.len();
    let mut mean = vec![0.0f64; dim];
    for r in retrieved {
        if r.len() != dim {
            return Err(Error::DimMismatch {
                left: dim,
                right: r.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(r.iter()) {
            *m += f64::from(*x);
        }
    }
    let n = retrieved.len() as f64;
    let mixed: Vec<f64> = base
        .iter()
        .zip(&mean)
        .map(|(b, m)| (1.0 - lambda) * f64::from(*b) + lambda * (m / n))
        .collect();
    let len = mixed.iter().map(|v| v * v).sum::<f64>().sqrt();
    if len <= 1e-12 {
        return Err(Error::ZeroNormResult);
    }
    Ok(mixed.iter().map(|v| (v / len) as f32).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAudit {
    pub class_id: ClassId,
    pub name: String,
    pub retrieved: usize,
    pub underfilled: bool,
    pub hit_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeAudit {
    pub config: RepeConfig,
    pub corpus_rows: usize,
    pub classes: Vec<ClassAudit>,
}

impl RepeAudit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("audit serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RepeOutput {
    /// Same shape and row layout as the input text features.
    pub text_features: EmbeddingMatrix,
    pub audit: RepeAudit,
}

/// Enhances every catalog class; classes without retrievals keep their rows.
pub fn repe_enhance_catalog(
    d: &EvaluationDataset,
    index: &RetrievalIndex,
    config: &RepeConfig,
) -> Result<RepeOutput> {
    config.check()?;
    let anchors = d.anchors();
    let per_class = d
        .catalog
        .entries()
        .par_iter()
        .map(|e| {
            let base = anchors.vector(e.class_id)?;
            let r = retrieve_captions(index, base, &e.name, config)?;
            let vectors: Vec<&[f32]> = r
                .hits
                .iter()
                .map(|h| index.corpus.text_embeddings.row(h.corpus_row))
                .collect();
            let enhanced = enhance_class_embedding(base, &vectors, config.lambda)?;
            let audit = ClassAudit {
                class_id: e.class_id,
                name: e.name.clone(),
                retrieved: r.hits.len(),
                underfilled: r.underfilled,
                hit_rows: r.hits.iter().map(|h| h.corpus_row).collect(),
            };
            Ok((e.text_row, enhanced, audit))
        })
        .collect::<Result<Vec<_>>>()?;

    let dim = d.text_features.dim();
    let mut data = d.text_features.as_slice().to_vec();
    let mut classes = Vec::with_capacity(per_class.len());
    for (row, v, audit) in per_class {
        data[row * dim..(row + 1) * dim].copy_from_slice(&v);
        classes.push(audit);
    }
    let text_features =
        EmbeddingMatrix::new(d.text_features.rows(), dim, data)?.assume_unit_norm()?;
    Ok(RepeOutput {
        text_features,
        audit: RepeAudit {
            config: *config,
            corpus_rows: index.len(),
            classes,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit<const D: usize>(rows: &[[f32; D]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows)
            .unwrap()
            .assume_unit_norm()
            .unwrap()
    }

    fn corpus(
        captions: &[&str],
        images: EmbeddingMatrix,
        texts: EmbeddingMatrix,
    ) -> RetrievalIndex {
        RetrievalIndex::build(
            CaptionCorpus::new(
                captions.iter().map(|s| s.to_string()).collect(),
                texts,
                images,
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn filter_overrides_score() {
        // the dog caption scores higher but does not name the class
        let idx = corpus(
            &["red apple pie", "a dog"],
            unit(&[[0.6, 0.8], [1.0, 0.0]]),
            unit(&[[0.0, 1.0], [1.0, 0.0]]),
        );
        let cfg = RepeConfig::new(1, 2, 0.25).unwrap();
        let r = retrieve_captions(&idx, &[1.0, 0.0], "Apple", &cfg).unwrap();
        assert_eq!(r.hits.len(), 1);
        assert_eq!(r.hits[0].caption_text, "red apple pie");
        assert!(!r.underfilled);
        let none = retrieve_captions(&idx, &[1.0, 0.0], "zebra", &cfg).unwrap();
        assert!(none.hits.is_empty() && none.underfilled);
    }

    #[test]
    fn search_breaks_ties_by_row() {
        let idx = corpus(
            &["a", "b", "c"],
            unit(&[[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]),
            unit(&[[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]),
        );
        assert_eq!(
            idx.search(&[1.0, 0.0], 3).unwrap(),
            vec![(1, 1.0), (2, 1.0), (0, 0.0)]
        );
        assert_eq!(idx.search(&[1.0, 0.0], 1).unwrap(), vec![(1, 1.0)]);
        assert!(matches!(
            idx.search(&[1.0], 1),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn enhancement_arithmetic() {
        let base = [1.0f32, 0.0];
        let r = [0.0f32, 1.0];
        let v = enhance_class_embedding(&base, &[&r], 0.25).unwrap();
        assert!((f64::from(v[0]) - 0.948_683_298).abs() < 1e-6);
        assert!((f64::from(v[1]) - 0.316_227_766).abs() < 1e-6);
        assert_eq!(enhance_class_embedding(&base, &[&r], 0.0).unwrap(), base);
        assert_eq!(enhance_class_embedding(&base, &[], 0.7).unwrap(), base);
        assert_eq!(enhance_class_embedding(&base, &[&r], 1.0).unwrap(), r);
        let anti = [-1.0f32, 0.0];
        assert!(matches!(
            enhance_class_embedding(&base, &[&anti], 0.5),
            Err(Error::ZeroNormResult)
        ));
        assert!(matches!(
            enhance_class_embedding(&base, &[&r], 1.5),
            Err(Error::LambdaOutOfRange(_))
        ));
    }

    #[test]
    fn config_bounds() {
        assert!(RepeConfig::new(100, 1000, 0.25).is_ok());
        assert!(matches!(
            RepeConfig::new(0, 10, 0.1),
            Err(Error::BadRetrievalConfig { .. })
        ));
        assert!(matches!(
            RepeConfig::new(11, 10, 0.1),
            Err(Error::BadRetrievalConfig { .. })
        ));
    }
}
