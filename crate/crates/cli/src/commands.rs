use anyhow::{anyhow, bail, Context, Result};
use openness::adversarial::{build_adversarial_vocabulary, CandidateLexicon, Strategy};
use openness::geometry::{evaluate_geometry, GeometryOptions, GridOptions, UniformityOptions};
use openness::protocol::{
    evaluate, ExtensibilityMode, ProtocolOptions, ProtocolReport, StabilityMode,
};
use openness::repe::{repe_enhance_catalog, RepeConfig, RetrievalIndex};
use openness::store::{
    dedup_union, encode_embedding_matrix, validate_dataset, EvaluationDataset, LoadedManifest,
    Manifest, VocabularyHierarchy,
};
use openness::text;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::bundle::{write_atomic, CsvParts, Timings};

pub struct Outcome {
    pub payload: Value,
    pub csv: CsvParts,
    /// Data problems were found; the report is still written.
    pub failed: bool,
}

impl Outcome {
    fn ok(payload: impl Serialize, csv: CsvParts) -> Result<Self> {
        Ok(Self {
            payload: serde_json::to_value(payload)?,
            csv,
            failed: false,
        })
    }
}

fn load_manifest(data: &DataArgs) -> Result<LoadedManifest> {
    let mut m = Manifest::load(&data.manifest)?;
    if data.normalize {
        m.manifest.normalize = true;
    }
    Ok(m)
}

fn load(data: &DataArgs, t: &mut Timings) -> Result<(LoadedManifest, EvaluationDataset)> {
    let m = load_manifest(data)?;
    let d = t.time("load", || m.load_dataset())?;
    let d = if data.dedup {
        d.with_deduplicated_hierarchy()
    } else {
        d
    };
    Ok((m, d))
}

/// A vocabulary label (case-insensitive) or, failing that, an index.
fn resolve_target(h: &VocabularyHierarchy, target: &str) -> Result<usize> {
    if let Some(i) = h.index_of(target) {
        return Ok(i);
    }
    match target.parse::<usize>() {
        Ok(i) if i < h.len() => Ok(i),
        _ => bail!("no vocabulary labelled {target:?}"),
    }
}

fn protocol(d: &EvaluationDataset, options: &ProtocolOptions, t: &mut Timings) -> Result<Outcome> {
    let report = t.time("evaluate", || evaluate(d, options))?;
    let csv = vec![("", report.to_csv()?)];
    Outcome::ok(&report, csv)
}

pub fn eval_closed(a: &DataArgs, t: &mut Timings) -> Result<Outcome> {
    let (_, d) = load(a, t)?;
    protocol(&d, &ProtocolOptions::closed_only(), t)
}

pub fn eval_extensibility(a: &ExtensibilityArgs, t: &mut Timings) -> Result<Outcome> {
    let (_, d) = load(&a.data, t)?;
    let extensibility = if a.exact {
        ExtensibilityMode::Exact {
            threshold: a.exact_threshold,
        }
    } else {
        ExtensibilityMode::Sampled { samples: a.samples }
    };
    let options = ProtocolOptions {
        seed: a.seed,
        extensibility,
        stability: StabilityMode::Skip,
        stability_samples: None,
    };
    protocol(&d, &options, t)
}

pub fn eval_stability(a: &StabilityArgs, t: &mut Timings) -> Result<Outcome> {
    let (_, d) = load(&a.data, t)?;
    let stability = match &a.target {
        Some(target) => StabilityMode::Local {
            target: resolve_target(&d.hierarchy, target)?,
        },
        None => StabilityMode::General,
    };
    let options = ProtocolOptions {
        seed: a.seed,
        extensibility: ExtensibilityMode::Skip,
        stability,
        stability_samples: Some(a.samples),
    };
    protocol(&d, &options, t)
}

pub fn adversarial(a: &AdversarialArgs, t: &mut Timings) -> Result<Outcome> {
    let (_, d) = load(&a.data, t)?;
    let violations = validate_dataset(&d);
    if !violations.is_empty() {
        return Err(openness::Error::InvalidDataset(violations).into());
    }
    let target = &d.hierarchy.vocabularies[resolve_target(&d.hierarchy, &a.target)?];
    let images = d.images.restrict(target)?;
    let mut lexicon = t.time("load-lexicon", || {
        CandidateLexicon::load(&a.lexicon, &a.lexicon_features)
    })?;
    if a.data.normalize {
        lexicon.embeddings = lexicon.embeddings.normalize_rows()?;
    }
    let strategy = match a.strategy {
        StrategyArg::TopK => Strategy::TopKIndividual,
        StrategyArg::Greedy => Strategy::GreedyForward,
        StrategyArg::Exhaustive => Strategy::Exhaustive,
    };
    let result = t.time("search", || {
        build_adversarial_vocabulary(&images, target, &d.anchors(), &lexicon, a.size, strategy)
    })?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["word", "lexicon_index", "conditional_accuracy"])?;
    for s in &result.selected {
        w.write_record([
            s.word.clone(),
            s.lexicon_index.to_string(),
            s.conditional_accuracy.to_string(),
        ])?;
    }
    let table = String::from_utf8(w.into_inner().map_err(|e| anyhow!(e.to_string()))?)?;
    Outcome::ok(&result, vec![("", table)])
}

pub fn geometry(a: &GeometryArgs, t: &mut Timings) -> Result<Outcome> {
    let (_, d) = load(&a.data, t)?;
    let violations = validate_dataset(&d);
    if !violations.is_empty() {
        return Err(openness::Error::InvalidDataset(violations).into());
    }
    let options = GeometryOptions {
        bins: a.bins,
        seed: a.seed,
        uniformity: UniformityOptions {
            exact_limit: a.uniformity_exact_limit,
            subsample_pairs: a.uniformity_pairs,
            seed: a.seed,
        },
        grid: (!a.grid_classes.is_empty()).then(|| GridOptions {
            classes: a.grid_classes.clone(),
            samples_per_class: a.grid_samples,
        }),
    };
    let report = t.time("geometry", || evaluate_geometry(&d, &options))?;
    let mut csv = vec![("histogram", report.margin_histogram.to_csv()?)];
    if let Some(g) = &report.class_similarity_grid {
        csv.push(("grid", g.to_csv()?));
    }
    Outcome::ok(&report, csv)
}

fn load_index(m: &LoadedManifest, t: &mut Timings) -> Result<RetrievalIndex> {
    let corpus = t
        .time("load-corpus", || m.load_corpus())?
        .context("the manifest has no captions section")?;
    Ok(t.time("build-index", || RetrievalIndex::build(corpus))?)
}

#[derive(Serialize)]
struct ClassCoverage {
    class_id: u32,
    name: String,
    captions_mentioning: usize,
}

pub fn repe_build(a: &DataArgs, t: &mut Timings) -> Result<Outcome> {
    let (m, d) = load(a, t)?;
    let index = load_index(&m, t)?;
    let folded: Vec<String> = index
        .corpus()
        .captions
        .iter()
        .map(|c| text::fold(c))
        .collect();
    let coverage: Vec<ClassCoverage> = d
        .catalog
        .entries()
        .iter()
        .map(|e| ClassCoverage {
            class_id: e.class_id,
            name: e.name.clone(),
            captions_mentioning: folded
                .iter()
                .filter(|c| text::contains_folded(c, &e.name))
                .count(),
        })
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class_id", "name", "captions_mentioning"])?;
    for c in &coverage {
        w.write_record([
            c.class_id.to_string(),
            c.name.clone(),
            c.captions_mentioning.to_string(),
        ])?;
    }
    let table = String::from_utf8(w.into_inner().map_err(|e| anyhow!(e.to_string()))?)?;
    Outcome::ok(
        json!({ "rows": index.len(), "dim": index.dim(), "coverage": coverage }),
        vec![("", table)],
    )
}

fn full_protocol(seed: u64) -> ProtocolOptions {
    ProtocolOptions {
        seed,
        extensibility: ExtensibilityMode::Sampled { samples: None },
        stability: StabilityMode::General,
        stability_samples: None,
    }
}

#[derive(Serialize)]
struct Comparison {
    vanilla: ProtocolReport,
    enhanced: ProtocolReport,
    margin_median_vanilla: f64,
    margin_median_enhanced: f64,
}

pub fn repe_enhance(a: &RepeArgs, t: &mut Timings) -> Result<Outcome> {
    let (m, d) = load(&a.data, t)?;
    let violations = validate_dataset(&d);
    if !violations.is_empty() {
        return Err(openness::Error::InvalidDataset(violations).into());
    }
    let index = load_index(&m, t)?;
    let config = RepeConfig::new(a.k, a.pool, a.lambda)?;
    let out = t.time("enhance", || repe_enhance_catalog(&d, &index, &config))?;
    if let Some(path) = &a.features_out {
        write_atomic(path, &encode_embedding_matrix(&out.text_features))?;
    }
    let comparison = if a.evaluate {
        let enhanced = d.with_text_features(out.text_features.clone());
        let options = full_protocol(a.seed);
        let union = dedup_union(&d.hierarchy.vocabularies)?;
        let images = d.images.restrict(&union)?;
        let median = |ds: &EvaluationDataset| -> Result<f64> {
            let m = openness::matcher::margins(&images, &union, &ds.anchors())?;
            let v: Vec<f64> = m.iter().map(|r| r.margin).collect();
            Ok(openness::numeric::median(&v).unwrap_or(f64::NAN))
        };
        Some(t.time("evaluate", || -> Result<Comparison> {
            Ok(Comparison {
                vanilla: evaluate(&d, &options)?,
                enhanced: evaluate(&enhanced, &options)?,
                margin_median_vanilla: median(&d)?,
                margin_median_enhanced: median(&enhanced)?,
            })
        })?)
    } else {
        None
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class_id", "name", "retrieved", "underfilled"])?;
    for c in &out.audit.classes {
        w.write_record([
            c.class_id.to_string(),
            c.name.clone(),
            c.retrieved.to_string(),
            c.underfilled.to_string(),
        ])?;
    }
    let table = String::from_utf8(w.into_inner().map_err(|e| anyhow!(e.to_string()))?)?;
    let mut payload = json!({ "audit": out.audit });
    if let Some(c) = comparison {
        payload["evaluation"] = serde_json::to_value(c)?;
    }
    Ok(Outcome {
        payload,
        csv: vec![("", table)],
        failed: false,
    })
}

pub fn validate(a: &DataArgs, t: &mut Timings) -> Result<Outcome> {
    let (m, d) = load(a, t)?;
    let violations = validate_dataset(&d);
    let corpus_rows = match &m.manifest.captions {
        Some(_) => Some(m.load_corpus()?.map_or(0, |c| c.len())),
        None => None,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["violation"])?;
    for v in &violations {
        w.write_record([serde_json::to_string(v)?])?;
    }
    let table = String::from_utf8(w.into_inner().map_err(|e| anyhow!(e.to_string()))?)?;
    Ok(Outcome {
        failed: !violations.is_empty(),
        payload: json!({
            "violations": violations,
            "classes": d.catalog.len(),
            "images": d.images.len(),
            "vocabularies": d.hierarchy.len(),
            "corpus_rows": corpus_rows,
        }),
        csv: vec![("", table)],
    })
}
