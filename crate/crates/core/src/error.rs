use std::path::PathBuf;

use crate::store::{ClassId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),

    // container format
    #[error("bad container magic: expected EMBV0001")]
    BadMagic,
    #[error("bad container header: {0}")]
    BadHeader(String),
    #[error("payload length {actual} bytes does not match header ({expected} bytes)")]
    TruncatedPayload { expected: u64, actual: u64 },
    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("row {row} has zero norm")]
    ZeroNormRow { row: usize },
    #[error("row {row} has norm {norm} but the matrix is declared unit-norm")]
    NotUnitNorm { row: usize, norm: f64 },
    #[error("matrix must have at least one row and one column (got {rows}x{dim})")]
    EmptyMatrix { rows: usize, dim: usize },
    #[error("data length {len} is not rows x dim = {rows} x {dim}")]
    ShapeMismatch { rows: usize, dim: usize, len: usize },
    #[error("labels file has {labels} entries but the image matrix has {rows} rows")]
    LabelCountMismatch { labels: usize, rows: usize },
    #[error("caption corpus is misaligned: {captions} captions, {text_rows} text rows, {image_rows} image rows")]
    CorpusMisaligned {
        captions: usize,
        text_rows: usize,
        image_rows: usize,
    },
    #[error("unsupported manifest version {0}")]
    ManifestVersion(u32),
    #[error("dataset failed validation with {} violation(s)", .0.len())]
    InvalidDataset(Vec<Violation>),

    // vocabulary / matching
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("class {0} appears twice in one vocabulary")]
    DuplicateClass(ClassId),
    #[error("class {0} is not in the catalog")]
    UnknownClass(ClassId),
    #[error("no vocabulary labelled {0:?}")]
    UnknownVocabulary(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("input embeddings are not unit-normalized")]
    NotNormalized,
    #[error("image label {0} is outside the evaluated vocabulary")]
    LabelOutsideVocabulary(ClassId),
    #[error("class {0} is both a target and a distractor")]
    OverlapBetweenTargetAndDistractors(ClassId),
    #[error("margins need at least two classes in the vocabulary")]
    VocabularyTooSmall,
    #[error("no images to evaluate")]
    EmptyImageSet,
    #[error("cannot average an empty list of vectors")]
    EmptyList,
    #[error("mean of the prompt embeddings has zero norm")]
    ZeroNormMean,

    // protocol
    #[error("{n} vocabularies exceed the exact-enumeration threshold of {threshold}")]
    TooManyVocabularies { n: usize, threshold: usize },
    #[error("target vocabulary index {index} out of range for {n} vocabularies")]
    TargetOutOfRange { index: usize, n: usize },
    #[error("the protocol needs at least {needed} vocabularies, got {got}")]
    NotEnoughVocabularies { needed: usize, got: usize },
    #[error("sample count must be at least 1")]
    ZeroSamples,

    // adversarial
    #[error("lexicon has {available} usable candidates, fewer than the requested {requested}")]
    LexiconTooSmall { available: usize, requested: usize },
    #[error("exhaustive search over {subsets} subsets exceeds the budget of {budget}")]
    ExhaustiveBudgetExceeded { subsets: u128, budget: u128 },
    #[error("lexicon has {words} words but {rows} embedding rows")]
    LexiconMisaligned { words: usize, rows: usize },

    // geometry
    #[error("input is empty")]
    EmptyInput,
    #[error("uniformity needs at least two rows")]
    TooFewRows,
    #[error("histogram needs at least one bin")]
    ZeroBins,

    // repe
    #[error("caption corpus is empty")]
    EmptyCorpus,
    #[error("lambda must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("invalid retrieval config: need 1 <= k ({k}) <= candidate_pool ({pool})")]
    BadRetrievalConfig { k: usize, pool: usize },
    #[error("enhanced embedding has zero norm")]
    ZeroNormResult,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
