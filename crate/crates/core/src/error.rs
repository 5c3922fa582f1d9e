use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the crate. Validation failures carry
/// enough context to be printed to an end user without a backtrace.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?} ({context})")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
        context: &'static str,
    },

    #[error("empty grid dimensions {0}x{1}x{2}: height, width, and channels must all be >= 1")]
    EmptyGrid(usize, usize, usize),

    #[error("grid data length {got} does not match {height}x{width}x{channels}")]
    DataLength {
        height: usize,
        width: usize,
        channels: usize,
        got: usize,
    },

    #[error("non-finite value {value} at flat index {index} ({context})")]
    NonFinite {
        value: f64,
        index: usize,
        context: &'static str,
    },

    #[error("timestep {t} out of range 1..={t_max}")]
    TimestepOutOfRange { t: usize, t_max: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("the final reverse step (t = 1) must use zero noise, got a non-zero noise grid")]
    NoiseAtFinalStep,

    #[error("model '{0}' has no trainable parameters")]
    NotTrainable(&'static str),

    #[error("parameter vector length {got}, model expects {expected}")]
    ParameterCount { expected: usize, got: usize },

    #[error("invalid window plan: {0}")]
    InvalidPlan(String),

    #[error("invalid metric input: {0}")]
    InvalidMetricInput(String),

    #[error("weight file {}: {reason}", path.display())]
    WeightFormat { path: PathBuf, reason: String },

    #[error("weight file {}: stored checksum {stored} != computed {computed}", path.display())]
    ChecksumMismatch {
        path: PathBuf,
        stored: String,
        computed: String,
    },

    #[error("weight file {}: architecture '{got}' incompatible with expected '{expected}'", path.display())]
    ArchitectureMismatch {
        path: PathBuf,
        expected: String,
        got: String,
    },

    #[error("refusing to overwrite existing file {} (pass overwrite to allow)", .0.display())]
    WouldOverwrite(PathBuf),

    #[error("unsupported image {}: {reason}", path.display())]
    UnsupportedImage { path: PathBuf, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    ImageCodec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}: {source}", path.display())]
    TomlParse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },

    #[error("{}: {source}", path.display())]
    TomlWrite {
        path: PathBuf,
        #[source]
        source: Box<toml::ser::Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (flags, config files,
    /// malformed requests) as opposed to runtime failures such as I/O.
    /// True for errors the caller can fix by changing inputs or flags, as
    /// opposed to failures of the environment (I/O, corrupt files).
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::ImageCodec { .. } | Error::ChecksumMismatch { .. }
        )
    }
}
