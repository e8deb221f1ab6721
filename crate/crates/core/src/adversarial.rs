//! Adversarial non-target vocabularies: distractor words that minimize
//! conditional accuracy on a target vocabulary.
//!
//! A distractor appended after the target classes takes an image only with a
//! strictly greater score than the image's current winner. So for a word set
//! S, an image stays correct iff it was correct on the target alone and no
//! word in S beats its top target score. Each candidate therefore reduces to
//! the set of correct images it "breaks", and the combined accuracy of S is
//! `(correct - |union of broken sets|) / n`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher;
use crate::numeric::dot;
use crate::store::{
    load_embedding_matrix, load_lines, ClassAnchors, EmbeddingMatrix, LabeledImageSet, Vocabulary,
};
use crate::text;

/// Upper bound on the number of subsets the exhaustive strategy may visit.
pub const EXHAUSTIVE_BUDGET: u128 = 1_000_000;

/// Candidate distractor words with one prompt-formatted text feature each.
#[derive(Debug, Clone)]
pub struct CandidateLexicon {
    pub words: Vec<String>,
    pub embeddings: EmbeddingMatrix,
}

impl CandidateLexicon {
    pub fn new(words: Vec<String>, embeddings: EmbeddingMatrix) -> Result<Self> {
        if words.len() != embeddings.rows() {
            return Err(Error::LexiconMisaligned {
                words: words.len(),
                rows: embeddings.rows(),
            });
        }
        Ok(Self { words, embeddings })
    }

    /// Words file (one per line, blank lines kept as rows) plus a container.
    pub fn load(words: impl AsRef<Path>, features: impl AsRef<Path>) -> Result<Self> {
        Self::new(load_lines(words)?, load_embedding_matrix(features)?)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// The k individually most confusing words.
    #[default]
    TopKIndividual,
    /// Adds one word at a time, minimizing combined accuracy.
    GreedyForward,
    /// Every size-k subset; the true minimizer.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordScore {
    pub word: String,
    /// Row in the original lexicon.
    pub lexicon_index: usize,
    /// Conditional accuracy with this word as the only distractor.
    pub conditional_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialResult {
    pub target: String,
    pub strategy: Strategy,
    pub closed_accuracy: f64,
    pub selected: Vec<WordScore>,
    pub combined_conditional_accuracy: f64,
    /// Candidates dropped because they name a target class.
    pub filtered_words: Vec<String>,
    pub candidates_scored: usize,
}

impl AdversarialResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Fixed-width bitset over image indices.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ImageSet(Vec<u64>);

impl ImageSet {
    fn empty(n: usize) -> Self {
        Self(vec![0; n.div_ceil(64)])
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn union_len(sets: &[&ImageSet]) -> usize {
        let words = sets.first().map_or(0, |s| s.0.len());
        (0..words)
            .map(|w| sets.iter().fold(0u64, |acc, s| acc | s.0[w]).count_ones() as usize)
            .sum()
    }
}

struct Attack {
    n_images: usize,
    correct: usize,
    /// Indices into the lexicon of candidates that survived name filtering.
    candidates: Vec<usize>,
    /// Parallel to `candidates`.
    breaks: Vec<ImageSet>,
    filtered_words: Vec<String>,
}

impl Attack {
    fn prepare(
        images: &LabeledImageSet,
        target: &Vocabulary,
        anchors: &ClassAnchors<'_>,
        lexicon: &CandidateLexicon,
    ) -> Result<Self> {
        if lexicon.is_empty() {
            return Err(Error::LexiconTooSmall {
                available: 0,
                requested: 1,
            });
        }
        if lexicon.embeddings.dim() != anchors.dim() {
            return Err(Error::DimMismatch {
                left: lexicon.embeddings.dim(),
                right: anchors.dim(),
            });
        }
        if !lexicon.embeddings.is_normalized() {
            return Err(Error::NotNormalized);
        }
        // Validates labels, dims, and normalization of the image side.
        let preds = matcher::predict_all(images, target.class_ids(), anchors)?;
        if let Some(&l) = images.labels.iter().find(|l| !target.contains(**l)) {
            return Err(Error::LabelOutsideVocabulary(l));
        }
        let target_names: Vec<String> = target
            .class_ids()
            .iter()
            .filter_map(|&c| anchors.catalog.get(c))
            .map(|e| text::fold(&e.name))
            .collect();

        let mut candidates = Vec::with_capacity(lexicon.len());
        let mut filtered_words = Vec::new();
        for (i, w) in lexicon.words.iter().enumerate() {
            if target_names.contains(&text::fold(w)) {
                filtered_words.push(w.clone());
            } else {
                candidates.push(i);
            }
        }

        let correct_images: Vec<usize> = preds
            .iter()
            .filter(|p| p.predicted_class_id == images.labels[p.image_index])
            .map(|p| p.image_index)
            .collect();
        let breaks = candidates
            .par_iter()
            .map(|&w| {
                let word = lexicon.embeddings.row(w);
                let mut set = ImageSet::empty(images.len());
                for &i in &correct_images {
                    if dot(images.image(i), word) > preds[i].top_score {
                        set.insert(i);
                    }
                }
                set
            })
            .collect();
        Ok(Self {
            n_images: images.len(),
            correct: correct_images.len(),
            candidates,
            breaks,
            filtered_words,
        })
    }

    fn accuracy_of(&self, chosen: &[usize]) -> f64 {
        let broken = if chosen.is_empty() {
            0
        } else {
            let sets: Vec<&ImageSet> = chosen.iter().map(|&c| &self.breaks[c]).collect();
            ImageSet::union_len(&sets)
        };
        (self.correct - broken) as f64 / self.n_images as f64
    }

    fn closed(&self) -> f64 {
        self.correct as f64 / self.n_images as f64
    }

    fn single_scores(&self, lexicon: &CandidateLexicon) -> Vec<WordScore> {
        (0..self.candidates.len())
            .map(|c| WordScore {
                word: lexicon.words[self.candidates[c]].clone(),
                lexicon_index: self.candidates[c],
                conditional_accuracy: (self.correct - self.breaks[c].len()) as f64
                    / self.n_images as f64,
            })
            .collect()
    }
}

/// Conditional accuracy with each (non-filtered) word as the sole
/// distractor, sorted ascending; ties keep lexicon order.
pub fn score_candidate_words(
    images: &LabeledImageSet,
    target: &Vocabulary,
    anchors: &ClassAnchors<'_>,
    lexicon: &CandidateLexicon,
) -> Result<Vec<WordScore>> {
    let attack = Attack::prepare(images, target, anchors, lexicon)?;
    let mut scores = attack.single_scores(lexicon);
    scores.sort_by(|a, b| a.conditional_accuracy.total_cmp(&b.conditional_accuracy));
    Ok(scores)
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Builds a size-`size` distractor vocabulary with the given strategy.
pub fn build_adversarial_vocabulary(
    images: &LabeledImageSet,
    target: &Vocabulary,
    anchors: &ClassAnchors<'_>,
    lexicon: &CandidateLexicon,
    size: usize,
    strategy: Strategy,
) -> Result<AdversarialResult> {
    if size == 0 {
        return Err(Error::LexiconTooSmall {
            available: lexicon.len(),
            requested: 0,
        });
    }
    let attack = Attack::prepare(images, target, anchors, lexicon)?;
    let m = attack.candidates.len();
    if m < size {
        return Err(Error::LexiconTooSmall {
            available: m,
            requested: size,
        });
    }
    let singles = attack.single_scores(lexicon);

    let chosen: Vec<usize> = match strategy {
        Strategy::TopKIndividual => {
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| {
                singles[a]
                    .conditional_accuracy
                    .total_cmp(&singles[b].conditional_accuracy)
            });
            order.truncate(size);
            order
        }
        Strategy::GreedyForward => {
            let mut chosen: Vec<usize> = Vec::with_capacity(size);
            for _ in 0..size {
                let mut best: Option<(usize, f64)> = None;
                for c in 0..m {
                    if chosen.contains(&c) {
                        continue;
                    }
                    chosen.push(c);
                    let acc = attack.accuracy_of(&chosen);
                    chosen.pop();
                    if best.is_none_or(|(_, b)| acc < b) {
                        best = Some((c, acc));
                    }
                }
                chosen.push(best.expect("enough candidates").0);
            }
            chosen
        }
        Strategy::Exhaustive => {
            let subsets = binomial(m, size);
            if subsets > EXHAUSTIVE_BUDGET {
                return Err(Error::ExhaustiveBudgetExceeded {
                    subsets,
                    budget: EXHAUSTIVE_BUDGET,
                });
            }
            // lexicographic combinations; the first strict minimum wins
            let mut combo: Vec<usize> = (0..size).collect();
            let mut best = (combo.clone(), attack.accuracy_of(&combo));
            while next_combination(&mut combo, m) {
                let acc = attack.accuracy_of(&combo);
                if acc < best.1 {
                    best = (combo.clone(), acc);
                }
            }
            best.0
        }
    };

    Ok(AdversarialResult {
        target: target.label.clone(),
        strategy,
        closed_accuracy: attack.closed(),
        combined_conditional_accuracy: attack.accuracy_of(&chosen),
        selected: chosen.iter().map(|&c| singles[c].clone()).collect(),
        filtered_words: attack.filtered_words.clone(),
        candidates_scored: m,
    })
}

/// Advances a sorted k-combination of `0..n`; false after the last.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
