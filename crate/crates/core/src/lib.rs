//! Openness evaluation for vision-language matching models.
//!
//! Works entirely from precomputed, unit-normalized embeddings: image
//! features, class-prompt text features, and optionally a caption corpus.
//!
//! - [`store`]: containers, manifests, datasets, validation
//! - [`matcher`]: similarity, top-1 prediction, accuracies, margins
//! - [`protocol`]: Acc-C, Acc-E, Acc-S estimators and the permutation sampler
//! - [`adversarial`]: distractor-vocabulary search
//! - [`geometry`]: alignment, uniformity, margin histograms, similarity grids
//! - [`repe`]: caption retrieval and retrieval-enhanced class anchors
//! - [`synthetic`]: seeded fixtures for tests and smoke runs

pub mod adversarial;
pub mod error;
pub mod geometry;
pub mod matcher;
pub mod numeric;
pub mod protocol;
pub mod repe;
pub mod store;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
