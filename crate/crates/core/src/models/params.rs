//! Hyperparameters for the learned models, with desk-scale defaults.

use crate::numkit::AdamConfig;
use crate::study::{split_list, KvConfig, StudyError};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf_size: usize,
    /// Features sampled per split; `None` means `ceil(p / 3)`.
    pub features_per_split: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 200, max_depth: 12, min_leaf_size: 5, features_per_split: None }
    }
}

impl ForestParams {
    pub fn resolved_m(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| n_features.div_ceil(3))
            .clamp(1, n_features.max(1))
    }

    pub fn validate(&self, n_features: usize) -> Result<(), String> {
        if self.n_trees == 0 {
            return Err("n_trees must be at least 1".into());
        }
        if self.min_leaf_size == 0 {
            return Err("min_leaf_size must be at least 1".into());
        }
        if let Some(m) = self.features_per_split {
            if m == 0 || m > n_features {
                return Err(format!("features_per_split {m} not in 1..={n_features}"));
            }
        }
        Ok(())
    }

    pub(crate) fn from_kv(kv: &KvConfig) -> Result<Self, StudyError> {
        let d = ForestParams::default();
        let m: usize = kv.parsed_or("features_per_split", 0)?;
        let p = ForestParams {
            n_trees: kv.parsed_or("n_trees", d.n_trees)?,
            max_depth: kv.parsed_or("max_depth", d.max_depth)?,
            min_leaf_size: kv.parsed_or("min_leaf", d.min_leaf_size)?,
            features_per_split: (m > 0).then_some(m),
        };
        if p.n_trees == 0 || p.min_leaf_size == 0 {
            return Err(StudyError::Parse("rf.n_trees and rf.min_leaf must be positive".into()));
        }
        Ok(p)
    }

    pub(crate) fn write_kv(&self, put: &mut dyn FnMut(&str, String)) {
        put("n_trees", self.n_trees.to_string());
        put("max_depth", self.max_depth.to_string());
        put("min_leaf", self.min_leaf_size.to_string());
        put("features_per_split", self.features_per_split.unwrap_or(0).to_string());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// Widths of the four hidden layers.
    pub hidden: [usize; 4],
    /// L2 coefficient on weight matrices.
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: [64, 64, 32, 16],
            l2: 1e-4,
            batch_size: 64,
            epochs: 200,
            patience: 15,
            adam: AdamConfig::default(),
        }
    }
}

impl MlpParams {
    pub(crate) fn from_kv(kv: &KvConfig, adam: &KvConfig) -> Result<Self, StudyError> {
        let d = MlpParams::default();
        let hidden = match kv.get("hidden") {
            Some(v) => widths::<4>(v, "mlp.hidden")?,
            None => d.hidden,
        };
        let p = MlpParams {
            hidden,
            l2: kv.parsed_or("l2", d.l2)?,
            batch_size: kv.parsed_or("batch", d.batch_size)?,
            epochs: kv.parsed_or("epochs", d.epochs)?,
            patience: kv.parsed_or("patience", d.patience)?,
            adam: adam_from_kv(adam, kv.parsed_or("lr", d.adam.lr)?)?,
        };
        if p.batch_size < 2 || p.l2 < 0.0 {
            return Err(StudyError::Parse("mlp.batch must be >= 2 and mlp.l2 >= 0".into()));
        }
        Ok(p)
    }

    pub(crate) fn write_kv(&self, put: &mut dyn FnMut(&str, String)) {
        put("hidden", join(&self.hidden));
        put("l2", self.l2.to_string());
        put("batch", self.batch_size.to_string());
        put("epochs", self.epochs.to_string());
        put("patience", self.patience.to_string());
        put("lr", self.adam.lr.to_string());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Input window length in intervals.
    pub lookback: usize,
    /// Recurrent state width.
    pub hidden: usize,
    /// Widths of the three dense ELU layers after the recurrent layer.
    pub dense: [usize; 3],
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
}

impl Default for LstmParams {
    fn default() -> Self {
        LstmParams {
            lookback: 10,
            hidden: 32,
            dense: [32, 16, 8],
            batch_size: 64,
            epochs: 200,
            patience: 15,
            adam: AdamConfig::default(),
        }
    }
}

impl LstmParams {
    pub(crate) fn from_kv(kv: &KvConfig, adam: &KvConfig) -> Result<Self, StudyError> {
        let d = LstmParams::default();
        let dense = match kv.get("dense") {
            Some(v) => widths::<3>(v, "lstm.dense")?,
            None => d.dense,
        };
        let p = LstmParams {
            lookback: kv.parsed_or("lookback", d.lookback)?,
            hidden: kv.parsed_or("hidden", d.hidden)?,
            dense,
            batch_size: kv.parsed_or("batch", d.batch_size)?,
            epochs: kv.parsed_or("epochs", d.epochs)?,
            patience: kv.parsed_or("patience", d.patience)?,
            adam: adam_from_kv(adam, kv.parsed_or("lr", d.adam.lr)?)?,
        };
        if p.lookback == 0 || p.hidden == 0 || p.batch_size == 0 {
            return Err(StudyError::Parse("lstm.lookback, lstm.hidden and lstm.batch must be positive".into()));
        }
        Ok(p)
    }

    pub(crate) fn write_kv(&self, put: &mut dyn FnMut(&str, String)) {
        put("lookback", self.lookback.to_string());
        put("hidden", self.hidden.to_string());
        put("dense", join(&self.dense));
        put("batch", self.batch_size.to_string());
        put("epochs", self.epochs.to_string());
        put("patience", self.patience.to_string());
        put("lr", self.adam.lr.to_string());
    }
}

fn adam_from_kv(kv: &KvConfig, lr: f64) -> Result<AdamConfig, StudyError> {
    let d = AdamConfig::default();
    let a = AdamConfig {
        lr,
        beta1: kv.parsed_or("beta1", d.beta1)?,
        beta2: kv.parsed_or("beta2", d.beta2)?,
        eps: kv.parsed_or("eps", d.eps)?,
    };
    let ok = a.lr > 0.0
        && (0.0..1.0).contains(&a.beta1)
        && (0.0..1.0).contains(&a.beta2)
        && a.eps > 0.0;
    if !ok {
        return Err(StudyError::Parse(format!("invalid Adam settings {a:?}")));
    }
    Ok(a)
}

fn widths<const N: usize>(v: &str, key: &str) -> Result<[usize; N], StudyError> {
    let parts = split_list(v);
    if parts.len() != N {
        return Err(StudyError::Parse(format!("{key} needs exactly {N} widths, got '{v}'")));
    }
    let mut out = [0usize; N];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p
            .parse()
            .ok()
            .filter(|&w: &usize| w > 0)
            .ok_or_else(|| StudyError::Parse(format!("{key}: bad width '{p}'")))?;
    }
    Ok(out)
}

fn join(ws: &[usize]) -> String {
    ws.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let f = ForestParams::default();
        assert_eq!((f.n_trees, f.max_depth, f.min_leaf_size), (200, 12, 5));
        assert_eq!(f.resolved_m(7), 3);
        assert_eq!(f.resolved_m(5), 2);
        assert_eq!(f.resolved_m(1), 1);
        assert_eq!(MlpParams::default().hidden, [64, 64, 32, 16]);
        let l = LstmParams::default();
        assert_eq!((l.lookback, l.hidden, l.dense), (10, 32, [32, 16, 8]));
    }

    #[test]
    fn forest_validation() {
        let mut f = ForestParams::default();
        assert!(f.validate(5).is_ok());
        f.features_per_split = Some(6);
        assert!(f.validate(5).is_err());
        f.features_per_split = None;
        f.n_trees = 0;
        assert!(f.validate(5).is_err());
    }
}
