//! Openness estimators over a vocabulary hierarchy: closed accuracy (Acc-C),
//! extensibility (Acc-E), and local/general stability (Acc-S).
//!
//! Each sampled permutation is an independent work unit. Units are evaluated
//! in parallel and reduced in permutation-index order with compensated
//! summation, so reports are bit-identical for any thread count.

mod report;
pub(crate) mod sampler;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{
    ExtensibilityMode, ProtocolOptions, ProtocolReport, SamplerMetadata, StabilityMode,
};
pub use sampler::{
    next_permutation, sample_permutations, PermutationSampler, SamplerConfig, EXTENSIBILITY_DOMAIN,
};

use crate::error::{Error, Result};
use crate::matcher::{self, ScoreMatrix};
use crate::numeric::{self, CompensatedSum};
use crate::store::{validate_dataset, ClassId, EvaluationDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveStep {
    /// 1-based expansion step.
    pub step: usize,
    /// Vocabulary size after the step, averaged over permutations.
    pub vocab_size: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCurve {
    pub metric: String,
    pub steps: Vec<CurveStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyAccuracy {
    pub label: String,
    pub images: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedAccuracy {
    pub acc_c: f64,
    pub per_vocabulary: Vec<VocabularyAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extensibility {
    pub acc_e: f64,
    /// Standard error of the mean over sampled permutations (0 when exact).
    pub standard_error: f64,
    /// Number of permutations averaged.
    pub permutations: usize,
    pub exact: bool,
    pub curve: ExpansionCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalStability {
    pub target_index: usize,
    pub label: String,
    pub closed_accuracy: f64,
    pub acc_s_tilde: f64,
    pub standard_error: f64,
    pub curve: ExpansionCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralStability {
    pub acc_s: f64,
    pub per_target: Vec<LocalStability>,
    /// Step-wise mean of the per-target curves.
    pub curve: ExpansionCurve,
}

/// One step of one permutation.
#[derive(Debug, Clone, Copy)]
struct StepOutcome {
    accuracy: f64,
    vocab_size: usize,
}

/// Scores of every image against every text row, plus vocabulary indexing.
struct Context {
    scores: ScoreMatrix,
    /// Score column of each image's ground-truth class.
    label_col: Vec<usize>,
    vocab_cols: Vec<Vec<usize>>,
    vocab_images: Vec<Vec<usize>>,
    labels: Vec<String>,
}

impl Context {
    fn build(d: &EvaluationDataset) -> Result<Self> {
        let violations = validate_dataset(d);
        if !violations.is_empty() {
            return Err(Error::InvalidDataset(violations));
        }
        let scores = matcher::similarity_matrix(&d.images.embeddings, &d.text_features)?;
        let col_of = |c: ClassId| -> Result<usize> {
            d.catalog
                .get(c)
                .map(|e| e.text_row)
                .ok_or(Error::UnknownClass(c))
        };
        let label_col = d
            .images
            .labels
            .iter()
            .map(|&l| col_of(l))
            .collect::<Result<Vec<_>>>()?;
        let vocab_cols = d
            .hierarchy
            .vocabularies
            .iter()
            .map(|v| v.class_ids().iter().map(|&c| col_of(c)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        let vocab_images = d
            .hierarchy
            .vocabularies
            .iter()
            .map(|v| d.images.indices_in(v.class_ids()))
            .collect();
        Ok(Self {
            scores,
            label_col,
            vocab_cols,
            vocab_images,
            labels: d
                .hierarchy
                .vocabularies
                .iter()
                .map(|v| v.label.clone())
                .collect(),
        })
    }

    fn n(&self) -> usize {
        self.vocab_cols.len()
    }

    /// Closed accuracy of one vocabulary on its own images.
    fn closed(&self, v: usize) -> f64 {
        let cols = &self.vocab_cols[v];
        let images = &self.vocab_images[v];
        let correct = images
            .iter()
            .filter(|&&i| self.first_best(i, cols).0 == self.label_col[i])
            .count();
        correct as f64 / images.len() as f64
    }

    /// First-position argmax of image `i` over `cols`: (column, score).
    #[inline]
    fn first_best(&self, i: usize, cols: &[usize]) -> (usize, f64) {
        let row = self.scores.row(i);
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for &c in cols {
            if row[c] > best.1 {
                best = (c, row[c]);
            }
        }
        best
    }

    /// Accuracy after each cumulative union along `order`, with the image
    /// set growing alongside the vocabulary.
    fn expansion_run(&self, order: &[usize]) -> Vec<StepOutcome> {
        let n_images = self.scores.images();
        let mut best_col = vec![usize::MAX; n_images];
        let mut best_score = vec![f64::NEG_INFINITY; n_images];
        let mut active: Vec<usize> = Vec::new();
        let mut union_cols: Vec<usize> = Vec::new();
        let mut out = Vec::with_capacity(order.len());
        for &v in order {
            let new_cols = &self.vocab_cols[v];
            // appended classes win only with a strictly greater score
            for &i in &active {
                let row = self.scores.row(i);
                for &c in new_cols {
                    if row[c] > best_score[i] {
                        best_score[i] = row[c];
                        best_col[i] = c;
                    }
                }
            }
            union_cols.extend_from_slice(new_cols);
            for &i in &self.vocab_images[v] {
                let (c, s) = self.first_best(i, &union_cols);
                best_col[i] = c;
                best_score[i] = s;
                active.push(i);
            }
            let correct = active
                .iter()
                .filter(|&&i| best_col[i] == self.label_col[i])
                .count();
            out.push(StepOutcome {
                accuracy: correct as f64 / active.len() as f64,
                vocab_size: union_cols.len(),
            });
        }
        out
    }

    /// Conditional accuracy on `target` images as the distractor
    /// vocabularies in `order` are appended one by one.
    fn stability_run(&self, target: usize, order: &[usize]) -> Vec<StepOutcome> {
        let images = &self.vocab_images[target];
        let target_cols = &self.vocab_cols[target];
        let mut best: Vec<(usize, f64)> = images
            .iter()
            .map(|&i| self.first_best(i, target_cols))
            .collect();
        let mut size = target_cols.len();
        let mut out = Vec::with_capacity(order.len());
        for &v in order {
            let cols = &self.vocab_cols[v];
            for (slot, &i) in best.iter_mut().zip(images) {
                let row = self.scores.row(i);
                for &c in cols {
                    if row[c] > slot.1 {
                        *slot = (c, row[c]);
                    }
                }
            }
            size += cols.len();
            let correct = best
                .iter()
                .zip(images)
                .filter(|(b, &i)| b.0 == self.label_col[i])
                .count();
            out.push(StepOutcome {
                accuracy: correct as f64 / images.len() as f64,
                vocab_size: size,
            });
        }
        out
    }
}

/// Index-ordered reduction of per-permutation step outcomes.
fn reduce(metric: &str, runs: &[Vec<StepOutcome>]) -> (f64, f64, ExpansionCurve) {
    let per_run: Vec<f64> = runs
        .iter()
        .map(|r| {
            r.iter()
                .map(|s| s.accuracy)
                .collect::<CompensatedSum>()
                .mean()
        })
        .collect();
    let (mean, se) = numeric::mean_and_standard_error(&per_run);
    let steps = runs.first().map_or(0, Vec::len);
    let curve = ExpansionCurve {
        metric: metric.to_string(),
        steps: (0..steps)
            .map(|i| CurveStep {
                step: i + 1,
                vocab_size: runs
                    .iter()
                    .map(|r| r[i].vocab_size as f64)
                    .collect::<CompensatedSum>()
                    .mean(),
                accuracy: runs
                    .iter()
                    .map(|r| r[i].accuracy)
                    .collect::<CompensatedSum>()
                    .mean(),
            })
            .collect(),
    };
    (mean, se, curve)
}

fn closed_from(ctx: &Context) -> Vec<f64> {
    (0..ctx.n()).map(|v| ctx.closed(v)).collect()
}

/// Unweighted mean over vocabularies of closed accuracy on each one's images.
pub fn acc_closed(d: &EvaluationDataset) -> Result<ClosedAccuracy> {
    let violations = validate_dataset(d);
    if !violations.is_empty() {
        return Err(Error::InvalidDataset(violations));
    }
    let anchors = d.anchors();
    let per_vocabulary = d
        .hierarchy
        .vocabularies
        .iter()
        .map(|v| {
            let images = d.images.restrict(v)?;
            Ok(VocabularyAccuracy {
                label: v.label.clone(),
                images: images.len(),
                accuracy: matcher::accuracy(&images, v, &anchors)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let acc_c = per_vocabulary
        .iter()
        .map(|v| v.accuracy)
        .collect::<CompensatedSum>()
        .mean();
    Ok(ClosedAccuracy {
        acc_c,
        per_vocabulary,
    })
}

/// Sampled Acc-E with the step-wise mean curve.
pub fn extensibility(d: &EvaluationDataset, config: &SamplerConfig) -> Result<Extensibility> {
    let ctx = Context::build(d)?;
    sampled_extensibility_in(&ctx, config)
}

/// Acc-E averaged over all N! orderings.
pub fn extensibility_exact(d: &EvaluationDataset, exact_threshold: usize) -> Result<Extensibility> {
    let n = d.hierarchy.len();
    if n > exact_threshold {
        return Err(Error::TooManyVocabularies {
            n,
            threshold: exact_threshold,
        });
    }
    let ctx = Context::build(d)?;
    exact_extensibility_in(&ctx, exact_threshold)
}

fn sampled_extensibility_in(ctx: &Context, config: &SamplerConfig) -> Result<Extensibility> {
    if config.samples == 0 {
        return Err(Error::ZeroSamples);
    }
    let n = ctx.n();
    if n == 1 {
        return Ok(single_vocabulary_extensibility(ctx, config.samples, false));
    }
    let sampler = PermutationSampler::new(n, config.seed, EXTENSIBILITY_DOMAIN);
    let runs: Vec<Vec<StepOutcome>> = (0..config.samples as u64)
        .into_par_iter()
        .map(|j| ctx.expansion_run(&sampler.permutation(j)))
        .collect();
    let (acc_e, standard_error, curve) = reduce("acc_e", &runs);
    Ok(Extensibility {
        acc_e,
        standard_error,
        permutations: runs.len(),
        exact: false,
        curve,
    })
}

fn exact_extensibility_in(ctx: &Context, exact_threshold: usize) -> Result<Extensibility> {
    let n = ctx.n();
    if n > exact_threshold {
        return Err(Error::TooManyVocabularies {
            n,
            threshold: exact_threshold,
        });
    }
    if n == 1 {
        return Ok(single_vocabulary_extensibility(ctx, 1, true));
    }
    let mut orders = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        orders.push(p.clone());
        if !next_permutation(&mut p) {
            break;
        }
    }
    let runs: Vec<Vec<StepOutcome>> = orders.par_iter().map(|o| ctx.expansion_run(o)).collect();
    let (acc_e, _, curve) = reduce("acc_e", &runs);
    Ok(Extensibility {
        acc_e,
        standard_error: 0.0,
        permutations: runs.len(),
        exact: true,
        curve,
    })
}

/// With one vocabulary the expansion is the closed evaluation itself.
fn single_vocabulary_extensibility(
    ctx: &Context,
    permutations: usize,
    exact: bool,
) -> Extensibility {
    let acc = ctx.closed(0);
    Extensibility {
        acc_e: acc,
        standard_error: 0.0,
        permutations,
        exact,
        curve: ExpansionCurve {
            metric: "acc_e".into(),
            steps: vec![CurveStep {
                step: 1,
                vocab_size: ctx.vocab_cols[0].len() as f64,
                accuracy: acc,
            }],
        },
    }
}

fn local_stability_in(
    ctx: &Context,
    target: usize,
    config: &SamplerConfig,
) -> Result<LocalStability> {
    let n = ctx.n();
    if target >= n {
        return Err(Error::TargetOutOfRange { index: target, n });
    }
    if config.samples == 0 {
        return Err(Error::ZeroSamples);
    }
    let closed = ctx.closed(target);
    let label = ctx.labels[target].clone();
    let metric = format!("acc_s_tilde[{label}]");
    if n == 1 {
        return Ok(LocalStability {
            target_index: target,
            label,
            closed_accuracy: closed,
            acc_s_tilde: closed,
            standard_error: 0.0,
            curve: ExpansionCurve {
                metric,
                steps: Vec::new(),
            },
        });
    }
    let others: Vec<usize> = (0..n).filter(|&v| v != target).collect();
    let sampler = PermutationSampler::new(others.len(), config.seed, target as u64);
    let runs: Vec<Vec<StepOutcome>> = (0..config.samples as u64)
        .into_par_iter()
        .map(|j| {
            let order: Vec<usize> = sampler
                .permutation(j)
                .into_iter()
                .map(|k| others[k])
                .collect();
            ctx.stability_run(target, &order)
        })
        .collect();
    let (acc, se, curve) = reduce(&metric, &runs);
    Ok(LocalStability {
        target_index: target,
        label,
        closed_accuracy: closed,
        acc_s_tilde: acc,
        standard_error: se,
        curve,
    })
}

/// Acc-S~ for one target vocabulary against the remaining N-1 as distractors.
pub fn local_stability(
    d: &EvaluationDataset,
    target: usize,
    config: &SamplerConfig,
) -> Result<LocalStability> {
    let ctx = Context::build(d)?;
    local_stability_in(&ctx, target, config)
}

/// Mean of local stability over every choice of target vocabulary.
pub fn general_stability(
    d: &EvaluationDataset,
    config: &SamplerConfig,
) -> Result<GeneralStability> {
    let ctx = Context::build(d)?;
    general_stability_in(&ctx, config)
}

fn general_stability_in(ctx: &Context, config: &SamplerConfig) -> Result<GeneralStability> {
    let n = ctx.n();
    if n < 2 {
        return Err(Error::NotEnoughVocabularies { needed: 2, got: n });
    }
    let per_target = (0..n)
        .map(|t| local_stability_in(ctx, t, config))
        .collect::<Result<Vec<_>>>()?;
    let acc_s = per_target
        .iter()
        .map(|l| l.acc_s_tilde)
        .collect::<CompensatedSum>()
        .mean();
    let steps = n - 1;
    let curve = ExpansionCurve {
        metric: "acc_s".into(),
        steps: (0..steps)
            .map(|i| CurveStep {
                step: i + 1,
                vocab_size: per_target
                    .iter()
                    .map(|l| l.curve.steps[i].vocab_size)
                    .collect::<CompensatedSum>()
                    .mean(),
                accuracy: per_target
                    .iter()
                    .map(|l| l.curve.steps[i].accuracy)
                    .collect::<CompensatedSum>()
                    .mean(),
            })
            .collect(),
    };
    Ok(GeneralStability {
        acc_s,
        per_target,
        curve,
    })
}

/// Runs the requested estimators on one shared score table.
pub fn evaluate(d: &EvaluationDataset, options: &ProtocolOptions) -> Result<ProtocolReport> {
    let ctx = Context::build(d)?;
    let closed = closed_from(&ctx);
    let acc_c = closed.iter().copied().collect::<CompensatedSum>().mean();
    let per_vocabulary = closed
        .iter()
        .enumerate()
        .map(|(v, &accuracy)| VocabularyAccuracy {
            label: ctx.labels[v].clone(),
            images: ctx.vocab_images[v].len(),
            accuracy,
        })
        .collect();

    let n = ctx.n();
    let extensibility = match options.extensibility {
        ExtensibilityMode::Skip => None,
        ExtensibilityMode::Sampled { samples } => {
            let samples =
                samples.unwrap_or(SamplerConfig::EXTENSIBILITY_SAMPLES_PER_VOCABULARY * n);
            let cfg = SamplerConfig::new(options.seed, samples)?;
            Some(sampled_extensibility_in(&ctx, &cfg)?)
        }
        ExtensibilityMode::Exact { threshold } => Some(exact_extensibility_in(&ctx, threshold)?),
    };
    let stability_samples = options
        .stability_samples
        .unwrap_or(SamplerConfig::STABILITY_SAMPLES);
    let stability = match &options.stability {
        StabilityMode::Skip => None,
        StabilityMode::General => {
            let cfg = SamplerConfig::new(options.seed, stability_samples)?;
            Some(general_stability_in(&ctx, &cfg)?)
        }
        StabilityMode::Local { target } => {
            let cfg = SamplerConfig::new(options.seed, stability_samples)?;
            let local = local_stability_in(&ctx, *target, &cfg)?;
            Some(GeneralStability {
                acc_s: local.acc_s_tilde,
                curve: ExpansionCurve {
                    metric: "acc_s".into(),
                    steps: local.curve.steps.clone(),
                },
                per_target: vec![local],
            })
        }
    };
    Ok(ProtocolReport::assemble(
        acc_c,
        per_vocabulary,
        extensibility,
        stability,
        options,
        n,
    ))
}
