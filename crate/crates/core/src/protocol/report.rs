use serde::{Deserialize, Serialize};

use super::{ExpansionCurve, Extensibility, GeneralStability, LocalStability, VocabularyAccuracy};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExtensibilityMode {
    Skip,
    /// `None` means 100 x N permutations.
    Sampled {
        samples: Option<usize>,
    },
    Exact {
        threshold: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StabilityMode {
    Skip,
    General,
    Local { target: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub seed: u64,
    pub extensibility: ExtensibilityMode,
    pub stability: StabilityMode,
    /// `None` means 100 permutations per target.
    pub stability_samples: Option<usize>,
}

impl ProtocolOptions {
    pub fn closed_only() -> Self {
        Self {
            seed: 0,
            extensibility: ExtensibilityMode::Skip,
            stability: StabilityMode::Skip,
            stability_samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerMetadata {
    pub seed: u64,
    pub vocabularies: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extensibility_permutations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extensibility_exact: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extensibility_standard_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability_permutations_per_target: Option<usize>,
}

/// Point estimates, curves, and sampling metadata of one protocol run.
/// Accuracies are fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub acc_c: f64,
    pub per_vocabulary: Vec<VocabularyAccuracy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_s: Option<f64>,
    /// `acc_e - acc_c`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_e: Option<f64>,
    /// `acc_s - acc_c`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub local_stabilities: Vec<LocalStability>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<ExpansionCurve>,
    pub sampler: SamplerMetadata,
}

impl ProtocolReport {
    pub(super) fn assemble(
        acc_c: f64,
        per_vocabulary: Vec<VocabularyAccuracy>,
        extensibility: Option<Extensibility>,
        stability: Option<GeneralStability>,
        options: &ProtocolOptions,
        vocabularies: usize,
    ) -> Self {
        let mut curves = Vec::new();
        let mut sampler = SamplerMetadata {
            seed: options.seed,
            vocabularies,
            extensibility_permutations: None,
            extensibility_exact: None,
            extensibility_standard_error: None,
            stability_permutations_per_target: None,
        };
        let acc_e = extensibility.map(|e| {
            sampler.extensibility_permutations = Some(e.permutations);
            sampler.extensibility_exact = Some(e.exact);
            sampler.extensibility_standard_error = Some(e.standard_error);
            curves.push(e.curve);
            e.acc_e
        });
        let mut local_stabilities = Vec::new();
        let acc_s = stability.map(|s| {
            sampler.stability_permutations_per_target = Some(
                options
                    .stability_samples
                    .unwrap_or(super::SamplerConfig::STABILITY_SAMPLES),
            );
            curves.push(s.curve);
            for l in &s.per_target {
                curves.push(l.curve.clone());
            }
            local_stabilities = s.per_target;
            s.acc_s
        });
        Self {
            acc_c,
            per_vocabulary,
            acc_e,
            acc_s,
            delta_e: acc_e.map(|e| e - acc_c),
            delta_s: acc_s.map(|s| s - acc_c),
            local_stabilities,
            curves,
            sampler,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per curve step: `metric,step,vocab_size,accuracy`.
    pub fn to_csv(&self) -> Result<String> {
        curves_to_csv(&self.curves)
    }
}

pub fn curves_to_csv(curves: &[ExpansionCurve]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "step", "vocab_size", "accuracy"])?;
    for c in curves {
        for s in &c.steps {
            w.write_record([
                c.metric.clone(),
                s.step.to_string(),
                s.vocab_size.to_string(),
                s.accuracy.to_string(),
            ])?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
