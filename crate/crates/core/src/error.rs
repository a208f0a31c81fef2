use thiserror::Error;

use crate::model::{Setting, SettingPair, Station};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model has sampler-only lambda spaces; exact enumeration is not available")]
    NonFiniteSpace,

    #[error("conditioning event A*B != 0 has probability zero at {0}")]
    DegenerateConditioning(SettingPair),

    #[error("setting {setting} is not declared for station {station}")]
    UnknownSetting { station: Station, setting: Setting },

    #[error("model failed validation: {0}")]
    InvalidModel(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("line {line}: timestamp {t} is earlier than the previous event ({prev})")]
    NonMonotonicTimestamps { line: usize, t: u64, prev: u64 },

    #[error("station {station} stream is not sorted at event {index}")]
    UnsortedStream { station: Station, index: usize },

    #[error("window {window}: station {station} saw settings {first} and {second}")]
    SettingConflict {
        window: u64,
        station: Station,
        first: Setting,
        second: Setting,
    },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("no usable records for setting pair {0}")]
    EmptyCell(SettingPair),

    #[error("setting pair {0} is missing")]
    MissingPair(SettingPair),

    #[error("station {station} has {count} settings; CHSH needs exactly 2")]
    SettingCount { station: Station, count: usize },

    #[error("scenario construction check failed: {0}")]
    ConstructionInvalid(String),

    #[error("coupling: {0}")]
    Coupling(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
