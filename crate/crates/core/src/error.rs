use thiserror::Error;

/// Errors produced by the separation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("window/hop not invertible")]
    WindowNotInvertible,

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("prior means must be nonpositive")]
    PositivePriorMean,

    #[error("cannot scale silence")]
    SilentMixInput,

    #[error("silent reference")]
    SilentReference,

    #[error("collinear references")]
    CollinearReferences,

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: u32, right: u32 },

    #[error("unsupported wav format: {0}")]
    UnsupportedWav(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model file: {0}")]
    InvalidModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav i/o: {0}")]
    Wav(#[from] hound::Error),

    #[error("model serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
