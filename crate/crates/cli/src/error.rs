use std::fmt;

use aigm_core::beats::BeatError;
use aigm_core::{AudioError, DetectError, DspError, NnError, TrainError};

/// Failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// 1: bad flags, incompatible options, bad config values.
    Usage(String),
    /// 2: unreadable or malformed files.
    Io(String),
    /// 3: the audio has no usable musical content (no tempo, too short).
    Content(String),
    /// 4: training failed.
    Training(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Content(_) => 3,
            CliError::Training(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Io(m) => ("io", m),
            CliError::Content(m) => ("content", m),
            CliError::Training(m) => ("training", m),
        };
        write!(f, "{kind} error: {msg}")
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<BeatError> for CliError {
    fn from(e: BeatError) -> Self {
        CliError::Content(e.to_string())
    }
}

impl From<DspError> for CliError {
    fn from(e: DspError) -> Self {
        CliError::Content(e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Checkpoint(_) | NnError::CheckpointMismatch(_) | NnError::Io(_) => CliError::Io(e.to_string()),
            NnError::BadConfig(_) | NnError::OddDim(_) => CliError::Usage(e.to_string()),
            _ => CliError::Training(e.to_string()),
        }
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::Beat(b) => b.into(),
            DetectError::Dsp(d) => d.into(),
            DetectError::Audio(a) => a.into(),
            DetectError::Nn(n) => n.into(),
            DetectError::TooShort(_) | DetectError::AllMasked | DetectError::EmptySequence => {
                CliError::Content(e.to_string())
            }
            DetectError::UnknownPreset(_) => CliError::Usage(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Detect(d) => d.into(),
            TrainError::Nn(n) => n.into(),
            TrainError::Audio(a) => a.into(),
            TrainError::Beat(b) => b.into(),
            TrainError::BadManifest(_) | TrainError::Io(_) => CliError::Io(e.to_string()),
            TrainError::BadConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Training(e.to_string()),
        }
    }
}
