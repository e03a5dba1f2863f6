//! The four predictors: persistence, random forest, MLP and LSTM. One
//! artifact is fitted per (algorithm, target, horizon).

mod artifact;
mod fit;
pub mod forest;
pub mod lstm;
pub mod mlp;
mod params;
mod standardize;
mod train;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::numkit::NumError;

pub use artifact::{ArtifactMeta, FittedModel, ModelArtifact, FORMAT_VERSION, MAGIC};
pub use fit::{fit_model, model_seed, persistence_predict, window_complete, FitInput};
pub use forest::{fit_forest, Forest};
pub use lstm::Lstm;
pub use mlp::Mlp;
pub use params::{ForestParams, LstmParams, MlpParams};
pub use standardize::Standardizer;
pub use train::TrainLog;
pub use tree::{fit_tree, RegressionTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Persistence,
    RandomForest,
    Mlp,
    Lstm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Persistence, Algorithm::RandomForest, Algorithm::Mlp, Algorithm::Lstm];

    pub fn code(self) -> &'static str {
        match self {
            Algorithm::Persistence => "persistence",
            Algorithm::RandomForest => "rf",
            Algorithm::Mlp => "mlp",
            Algorithm::Lstm => "lstm",
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(t: u8) -> Option<Algorithm> {
        Algorithm::ALL.get(t as usize).copied()
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.code() == s)
            .ok_or_else(|| format!("unknown algorithm '{s}' (expected persistence, rf, mlp or lstm)"))
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("feature schema mismatch: artifact expects {expected}, table has {found}")]
    Schema { expected: String, found: String },
    #[error("not a model artifact (expected magic and format version {expected_version})")]
    Magic { expected_version: u16 },
    #[error("unsupported artifact format version {found}, expected version {expected}")]
    Version { found: u16, expected: u16 },
    #[error("artifact checksum mismatch (truncated or corrupted; format version {expected_version})")]
    Checksum { expected_version: u16 },
    #[error("{0}")]
    Format(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-finite value at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("artifact io: {0}")]
    Io(#[from] std::io::Error),
}
