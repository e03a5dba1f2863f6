use std::fmt;

use tollcast::eval::EvalError;
use tollcast::fusion::FusionError;
use tollcast::ingest::IngestError;
use tollcast::models::ModelError;
use tollcast::numkit::NumError;
use tollcast::study::StudyError;
use tollcast::synth::SynthError;

/// A failed run, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 1.
    Usage(String),
    /// Exit 2: unreadable, malformed or inconsistent inputs.
    Data(String),
    /// Exit 3: training diverged or produced non-finite values.
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<StudyError> for Failure {
    fn from(e: StudyError) -> Self {
        Failure::Data(format!("configuration: {e}"))
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<FusionError> for Failure {
    fn from(e: FusionError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<NumError> for Failure {
    fn from(e: NumError) -> Self {
        Failure::Numeric(e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite { .. } | ModelError::Num(_) => Failure::Numeric(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            other => Failure::Data(other.to_string()),
        }
    }
}
