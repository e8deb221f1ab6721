//! Feature-space diagnostics: inter-modal alignment, intra-modal uniformity,
//! margin histograms, and class-pair similarity grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher;
use crate::numeric::{self, dot, squared_distance, CompensatedSum};
use crate::protocol::sampler::{bounded, stream_rng};
use crate::protocol::PermutationSampler;
use crate::store::{
    dedup_union, ClassAnchors, ClassId, EmbeddingMatrix, EvaluationDataset, LabeledImageSet,
    Vocabulary,
};

pub const DEFAULT_MARGIN_BINS: usize = 200;
pub const DEFAULT_GRID_SAMPLES: usize = 100;

/// Sampling domain for uniformity pair subsamples.
const UNIFORMITY_DOMAIN: u64 = u64::MAX - 1;
const PAIRS_PER_STREAM: u64 = 1 << 20;

/// Mean squared distance between paired vectors.
pub fn alignment_loss(pairs: &[(&[f32], &[f32])]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = CompensatedSum::new();
    for (a, b) in pairs {
        if a.len() != b.len() {
            return Err(Error::DimMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        sum.add(squared_distance(a, b));
    }
    Ok(sum.mean())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformityOptions {
    /// Largest row count evaluated over all pairs.
    pub exact_limit: usize,
    /// Pairs drawn when the row count exceeds `exact_limit`.
    pub subsample_pairs: u64,
    pub seed: u64,
}

impl Default for UniformityOptions {
    fn default() -> Self {
        Self {
            exact_limit: 20_000,
            subsample_pairs: 200_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityEstimate {
    pub value: f64,
    pub rows: usize,
    /// Pairs that entered the mean.
    pub pairs: u64,
    pub exhaustive: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample_seed: Option<u64>,
}

/// Running `(max, sum of exp(t - max))` for a log-sum-exp.
#[derive(Debug, Clone, Copy)]
struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    fn of(terms: &[f64]) -> Self {
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Self::EMPTY;
        }
        let sum: CompensatedSum = terms.iter().map(|t| (t - max).exp()).collect();
        Self {
            max,
            sum: sum.total(),
        }
    }

    fn merge(self, other: Self) -> Self {
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        if self.max == f64::NEG_INFINITY {
            return other;
        }
        let max = self.max.max(other.max);
        Self {
            max,
            sum: self.sum * (self.max - max).exp() + other.sum * (other.max - max).exp(),
        }
    }

    fn log_mean(self, count: u64) -> f64 {
        self.max + self.sum.ln() - (count as f64).ln()
    }
}

/// `log mean exp(-2 |f_i - f_j|^2)` over unordered distinct pairs.
pub fn uniformity_loss(features: &EmbeddingMatrix) -> Result<f64> {
    uniformity_with(features, &UniformityOptions::default()).map(|u| u.value)
}

pub fn uniformity_with(
    features: &EmbeddingMatrix,
    opts: &UniformityOptions,
) -> Result<UniformityEstimate> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::TooFewRows);
    }
    if !features.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let term = |i: usize, j: usize| -2.0 * squared_distance(features.row(i), features.row(j));

    if n <= opts.exact_limit {
        // per-row partials merged in row order
        let parts: Vec<LogSumExp> = (0..n - 1)
            .into_par_iter()
            .map(|i| LogSumExp::of(&(i + 1..n).map(|j| term(i, j)).collect::<Vec<_>>()))
            .collect();
        let total = parts.into_iter().fold(LogSumExp::EMPTY, LogSumExp::merge);
        let pairs = (n as u64) * (n as u64 - 1) / 2;
        return Ok(UniformityEstimate {
            value: total.log_mean(pairs),
            rows: n,
            pairs,
            exhaustive: true,
            subsample_seed: None,
        });
    }

    let pairs = opts.subsample_pairs.max(1);
    let streams = pairs.div_ceil(PAIRS_PER_STREAM);
    let parts: Vec<LogSumExp> = (0..streams)
        .into_par_iter()
        .map(|s| {
            let count = PAIRS_PER_STREAM.min(pairs - s * PAIRS_PER_STREAM);
            let mut rng = stream_rng(opts.seed, UNIFORMITY_DOMAIN, s);
            let drawn: Vec<f64> = (0..count)
                .map(|_| {
                    let i = bounded(&mut rng, n as u64) as usize;
                    let mut j = bounded(&mut rng, n as u64 - 1) as usize;
                    if j >= i {
                        j += 1;
                    }
                    term(i, j)
                })
                .collect();
            LogSumExp::of(&drawn)
        })
        .collect();
    let total = parts.into_iter().fold(LogSumExp::EMPTY, LogSumExp::merge);
    Ok(UniformityEstimate {
        value: total.log_mean(pairs),
        rows: n,
        pairs,
        exhaustive: false,
        subsample_seed: Some(opts.seed),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginHistogram {
    /// `bins + 1` edges spanning [-1, 1].
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub median: f64,
}

impl MarginHistogram {
    /// Margins outside [-1, 1] are counted in the edge bins.
    pub fn from_margins(margins: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::ZeroBins);
        }
        let median = numeric::median(margins).ok_or(Error::EmptyInput)?;
        let mut counts = vec![0u64; bins];
        for &m in margins {
            let pos = ((m + 1.0) / 2.0 * bins as f64).floor();
            let b = if pos.is_nan() || pos < 0.0 {
                0
            } else {
                (pos as usize).min(bins - 1)
            };
            counts[b] += 1;
        }
        let bin_edges = (0..=bins)
            .map(|k| -1.0 + 2.0 * k as f64 / bins as f64)
            .collect();
        Ok(Self {
            bin_edges,
            counts,
            median,
        })
    }

    /// `bin_lower,bin_upper,count` per bin.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_lower", "bin_upper", "count"])?;
        for (k, c) in self.counts.iter().enumerate() {
            w.write_record([
                self.bin_edges[k].to_string(),
                self.bin_edges[k + 1].to_string(),
                c.to_string(),
            ])?;
        }
        finish_csv(w)
    }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn margin_distribution(
    images: &LabeledImageSet,
    vocab: &Vocabulary,
    anchors: &ClassAnchors<'_>,
    bins: usize,
) -> Result<MarginHistogram> {
    if bins == 0 {
        return Err(Error::ZeroBins);
    }
    let margins: Vec<f64> = matcher::margins(images, vocab, anchors)?
        .iter()
        .map(|m| m.margin)
        .collect();
    MarginHistogram::from_margins(&margins, bins)
}

/// Mean image-text similarity for every (image class, text class) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGrid {
    pub classes: Vec<ClassId>,
    /// Images averaged per row class.
    pub samples: Vec<usize>,
    /// `values[i][j]`: images of `classes[i]` against the text of `classes[j]`.
    pub values: Vec<Vec<f64>>,
}

impl SimilarityGrid {
    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .copied()
            .collect::<CompensatedSum>()
            .mean()
    }

    /// Mean over the diagonal (positive pairs).
    pub fn diagonal_mean(&self) -> f64 {
        (0..self.values.len())
            .map(|i| self.values[i][i])
            .collect::<CompensatedSum>()
            .mean()
    }

    /// `image_class,text_class,similarity` per cell.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["image_class", "text_class", "similarity"])?;
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                w.write_record([
                    self.classes[i].to_string(),
                    self.classes[j].to_string(),
                    v.to_string(),
                ])?;
            }
        }
        finish_csv(w)
    }
}

/// Up to `samples_per_class` images per class are drawn without replacement;
/// the draw for class `c` depends only on `(seed, c)`.
pub fn class_similarity_grid(
    images: &LabeledImageSet,
    classes: &[ClassId],
    anchors: &ClassAnchors<'_>,
    samples_per_class: usize,
    seed: u64,
) -> Result<SimilarityGrid> {
    if classes.is_empty() {
        return Err(Error::EmptyList);
    }
    if samples_per_class == 0 {
        return Err(Error::ZeroSamples);
    }
    let texts = classes
        .iter()
        .map(|&c| anchors.vector(c))
        .collect::<Result<Vec<_>>>()?;
    if texts[0].len() != images.embeddings.dim() {
        return Err(Error::DimMismatch {
            left: images.embeddings.dim(),
            right: texts[0].len(),
        });
    }
    let mut samples = Vec::with_capacity(classes.len());
    let mut values = Vec::with_capacity(classes.len());
    for &c in classes {
        let pool = images.indices_in(&[c]);
        if pool.is_empty() {
            return Err(Error::EmptyImageSet);
        }
        let chosen: Vec<usize> = if pool.len() <= samples_per_class {
            pool
        } else {
            let mut pick: Vec<usize> = PermutationSampler::new(pool.len(), seed, u64::from(c))
                .permutation(0)
                .into_iter()
                .take(samples_per_class)
                .collect();
            pick.sort_unstable();
            pick.into_iter().map(|k| pool[k]).collect()
        };
        let row = texts
            .par_iter()
            .map(|t| {
                chosen
                    .iter()
                    .map(|&i| dot(images.image(i), t))
                    .collect::<CompensatedSum>()
                    .mean()
            })
            .collect();
        samples.push(chosen.len());
        values.push(row);
    }
    Ok(SimilarityGrid {
        classes: classes.to_vec(),
        samples,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub classes: Vec<ClassId>,
    pub samples_per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryOptions {
    pub bins: usize,
    pub seed: u64,
    pub uniformity: UniformityOptions,
    pub grid: Option<GridOptions>,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_MARGIN_BINS,
            seed: 0,
            uniformity: UniformityOptions::default(),
            grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub align_loss: f64,
    pub uniform_text: f64,
    pub uniform_image: f64,
    /// `uniform_text + uniform_image`
    pub uniform_total: f64,
    pub margin_median: f64,
    pub margin_histogram: MarginHistogram,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_similarity_grid: Option<SimilarityGrid>,
    /// Text uniformity is over the catalog's class text features.
    pub text_uniformity: UniformityEstimate,
    pub image_uniformity: UniformityEstimate,
    /// Margins are taken over the deduplicated union of all vocabularies.
    pub margin_vocabulary_size: usize,
}

impl GeometryReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Alignment pairs each image with its label's text feature.
pub fn evaluate_geometry(d: &EvaluationDataset, opts: &GeometryOptions) -> Result<GeometryReport> {
    let anchors = d.anchors();
    let texts = (0..d.images.len())
        .map(|i| anchors.vector(d.images.labels[i]))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(&[f32], &[f32])> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| (d.images.image(i), *t))
        .collect();
    let align_loss = alignment_loss(&pairs)?;

    let rows: Vec<usize> = d.catalog.entries().iter().map(|e| e.text_row).collect();
    let text_uniformity = uniformity_with(&d.text_features.select_rows(&rows)?, &opts.uniformity)?;
    let image_uniformity = uniformity_with(&d.images.embeddings, &opts.uniformity)?;

    let union = dedup_union(&d.hierarchy.vocabularies)?;
    let images = d.images.restrict(&union)?;
    let margin_histogram = margin_distribution(&images, &union, &anchors, opts.bins)?;

    let class_similarity_grid = opts
        .grid
        .as_ref()
        .map(|g| {
            class_similarity_grid(
                &d.images,
                &g.classes,
                &anchors,
                g.samples_per_class,
                opts.seed,
            )
        })
        .transpose()?;

    Ok(GeometryReport {
        align_loss,
        uniform_text: text_uniformity.value,
        uniform_image: image_uniformity.value,
        uniform_total: text_uniformity.value + image_uniformity.value,
        margin_median: margin_histogram.median,
        margin_histogram,
        class_similarity_grid,
        text_uniformity,
        image_uniformity,
        margin_vocabulary_size: union.len(),
    })
}
