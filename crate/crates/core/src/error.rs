use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("time {t} s outside scene duration [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("scene too dense: could not place actor {actor} after {attempts} attempts")]
    SceneTooDense { actor: usize, attempts: usize },

    #[error("laser id {id} out of range for {rows} rows")]
    LaserIdOutOfRange { id: u32, rows: usize },

    #[error("recall unattainable: target {target}, best achievable {achievable}")]
    RecallUnattainable { target: f64, achievable: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("checksum mismatch in section `{section}`")]
    Checksum { section: String },

    #[error("preset mismatch: file is `{found}`, expected `{expected}`")]
    PresetMismatch { found: String, expected: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
