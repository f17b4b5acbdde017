use flowvae_nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed log header: {0}")]
    MalformedHeader(String),
    #[error("data line {0} appears before any field header")]
    MissingHeader(usize),
    #[error("cache format: {0}")]
    Format(String),
    #[error("normalizer has not been fitted")]
    NotFitted,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("degenerate histogram: all samples equal {0}")]
    DegenerateHistogram(f64),
    #[error("no candidate distribution could be fitted")]
    NoFamilyConverged,
    #[error("rank metrics need both classes ({positives} positives, {negatives} negatives)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("record has unknown scenario {0:?}")]
    UnknownScenario(Option<u32>),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
