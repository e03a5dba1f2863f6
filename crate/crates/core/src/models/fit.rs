//! Fitting and applying artifacts against a feature table.

use crate::fusion::{feature_names, FeatureTable, Observation};
use crate::num::Real;
use crate::numkit::Tensor;
use crate::seed::sub_seed;
use crate::study::{HorizonIndex, StudyConfig};

use super::artifact::{ArtifactMeta, FittedModel, ModelArtifact};
use super::forest::fit_forest;
use super::lstm::{train_lstm, Windows};
use super::mlp::train_mlp;
use super::standardize::Standardizer;
use super::train::TrainLog;
use super::{Algorithm, ModelError};

/// Rows a model may learn from. Test rows never appear here.
#[derive(Debug, Clone, Copy)]
pub struct FitInput<'a> {
    pub table: &'a FeatureTable,
    pub train: &'a [usize],
    /// Early-stopping rows for the networks; unused otherwise.
    pub valid: &'a [usize],
    pub horizon: HorizonIndex,
}

/// Seed of one (algorithm, horizon) fit, derived from the run seed.
pub fn model_seed(run_seed: u64, algorithm: Algorithm, horizon: HorizonIndex) -> u64 {
    sub_seed(run_seed, &format!("{}/h{}", algorithm.code(), horizon.get()))
}

/// Persistence forecast: the current value of the target quantity.
pub fn persistence_predict(obs: &Observation, table: &FeatureTable) -> f64 {
    obs.current(table.target_kind)
}

fn features<T: Real>(table: &FeatureTable, row: usize) -> Vec<T> {
    table.features(row).into_iter().map(T::lit).collect()
}

fn target<T: Real>(table: &FeatureTable, row: usize, h: HorizonIndex) -> T {
    T::lit(table.rows[row].targets[h.slot()])
}

/// For each row, whether it ends a run of `lookback` consecutive intervals
/// on one day.
pub fn window_complete(table: &FeatureTable, lookback: usize) -> Vec<bool> {
    let mut run = 0usize;
    let mut out = Vec::with_capacity(table.rows.len());
    for (i, r) in table.rows.iter().enumerate() {
        let continues = i > 0 && {
            let p = &table.rows[i - 1].obs;
            p.interval.0 + 1 == r.obs.interval.0 && p.date() == r.obs.date()
        };
        run = if continues { run + 1 } else { 1 };
        out.push(run >= lookback);
    }
    out
}

fn windows<T: Real>(x: &[Vec<T>], ends: &[usize], lookback: usize) -> Windows<T> {
    let d = x.first().map_or(0, |r| r.len());
    let steps = (0..lookback)
        .map(|t| {
            let mut data = Vec::with_capacity(ends.len() * d);
            for &e in ends {
                data.extend_from_slice(&x[e + 1 + t - lookback]);
            }
            Tensor::matrix(ends.len(), d, data).expect("window shape")
        })
        .collect();
    Windows { steps }
}

fn matrix<T: Real>(x: &[Vec<T>], rows: &[usize]) -> Tensor<T> {
    let d = x.first().map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        data.extend_from_slice(&x[r]);
    }
    Tensor::matrix(rows.len(), d, data).expect("matrix shape")
}

/// Fits one artifact. Hyperparameters come from `config`; the fit seed is
/// derived from `config.seed`, the algorithm and the horizon.
pub fn fit_model<T: Real>(
    algorithm: Algorithm,
    input: FitInput<'_>,
    config: &StudyConfig,
) -> Result<(ModelArtifact<T>, Option<TrainLog>), ModelError> {
    let table = input.table;
    let h = input.horizon;
    if input.train.is_empty() {
        return Err(ModelError::InsufficientData("no training rows".into()));
    }
    let seed = model_seed(config.seed, algorithm, h);
    let mut train_days: Vec<_> = input.train.iter().map(|&r| table.rows[r].obs.date()).collect();
    train_days.dedup();
    let mut meta = ArtifactMeta {
        algorithm,
        target_kind: table.target_kind,
        horizon: h,
        schema_hash: table.schema_hash.clone(),
        seed,
        feature_names: table.feature_names().iter().map(|s| s.to_string()).collect(),
        standardizer: None,
        target_scale: T::one(),
        train_days,
        train_rows: input.train.len(),
    };

    let raw: Vec<Vec<T>> = (0..table.rows.len()).map(|r| features(table, r)).collect();
    let y: Vec<T> = (0..table.rows.len()).map(|r| target(table, r, h)).collect();

    let standardize = |meta: &mut ArtifactMeta<T>| -> Vec<Vec<T>> {
        let s = Standardizer::fit(input.train.iter().map(|&r| raw[r].as_slice()));
        let scale = input.train.iter().map(|&r| y[r].abs()).sum::<T>() / T::from_usize_lossy(input.train.len());
        meta.target_scale = scale;
        let z = raw.iter().map(|r| s.apply(r)).collect();
        meta.standardizer = Some(s);
        z
    };

    let (model, log) = match algorithm {
        Algorithm::Persistence => (FittedModel::Persistence, None),
        Algorithm::RandomForest => (FittedModel::Forest(fit_forest(&raw, &y, input.train, &config.forest, seed)?), None),
        Algorithm::Mlp => {
            let z = standardize(&mut meta);
            let sc = meta.target_scale;
            let ys = |rows: &[usize]| rows.iter().map(|&r| y[r] / sc).collect::<Vec<T>>();
            let (net, log) = train_mlp(
                &matrix(&z, input.train),
                &ys(input.train),
                &matrix(&z, input.valid),
                &ys(input.valid),
                &config.mlp,
                seed,
            )?;
            (FittedModel::Mlp(net), Some(log))
        }
        Algorithm::Lstm => {
            let w = config.lstm.lookback;
            let z = standardize(&mut meta);
            let sc = meta.target_scale;
            let ok = window_complete(table, w);
            let keep = |rows: &[usize]| rows.iter().copied().filter(|&r| ok[r]).collect::<Vec<usize>>();
            let (tr, va) = (keep(input.train), keep(input.valid));
            let ys = |rows: &[usize]| rows.iter().map(|&r| y[r] / sc).collect::<Vec<T>>();
            let (net, log) =
                train_lstm(&windows(&z, &tr, w), &ys(&tr), &windows(&z, &va, w), &ys(&va), &config.lstm, seed)?;
            (FittedModel::Lstm { net, lookback: w }, Some(log))
        }
    };
    Ok((ModelArtifact { meta, model }, log))
}

impl<T: Real> ModelArtifact<T> {
    pub fn check_schema(&self, table: &FeatureTable) -> Result<(), ModelError> {
        if self.meta.schema_hash != table.schema_hash {
            return Err(ModelError::Schema { expected: self.meta.schema_hash.clone(), found: table.schema_hash.clone() });
        }
        Ok(())
    }

    /// Prediction for every row; `None` where an LSTM lacks history.
    pub fn predict_table(&self, table: &FeatureTable) -> Result<Vec<Option<T>>, ModelError> {
        self.check_schema(table)?;
        let n = table.rows.len();
        let raw: Vec<Vec<T>> = (0..n).map(|r| features(table, r)).collect();
        let z = || -> Vec<Vec<T>> {
            let s = self.meta.standardizer.as_ref().expect("networks carry a standardizer");
            raw.iter().map(|r| s.apply(r)).collect()
        };
        let sc = self.meta.target_scale;
        Ok(match &self.model {
            FittedModel::Persistence => {
                table.rows.iter().map(|r| Some(T::lit(r.obs.current(table.target_kind)))).collect()
            }
            FittedModel::Forest(f) => raw.iter().map(|x| Some(f.predict(x))).collect(),
            FittedModel::Mlp(net) => {
                let all: Vec<usize> = (0..n).collect();
                net.predict(&matrix(&z(), &all)).into_iter().map(|v| Some(v * sc)).collect()
            }
            FittedModel::Lstm { net, lookback } => {
                let ok = window_complete(table, *lookback);
                let ends: Vec<usize> = (0..n).filter(|&r| ok[r]).collect();
                let mut out = vec![None; n];
                if !ends.is_empty() {
                    let pred = net.predict(&windows(&z(), &ends, *lookback).steps);
                    for (&e, v) in ends.iter().zip(pred) {
                        out[e] = Some(v * sc);
                    }
                }
                out
            }
        })
    }

    /// Prediction from recent observations, oldest first, the last being
    /// the current interval. `None` if an LSTM's window is incomplete.
    pub fn predict_history(&self, history: &[Observation]) -> Option<T> {
        let now = history.last()?;
        let calendar = self.meta.feature_names.len() == feature_names(true).len();
        let feats = |o: &Observation| -> Vec<T> { o.features(calendar).into_iter().map(T::lit).collect() };
        let sc = self.meta.target_scale;
        match &self.model {
            FittedModel::Persistence => Some(T::lit(now.current(self.meta.target_kind))),
            FittedModel::Forest(f) => Some(f.predict(&feats(now))),
            FittedModel::Mlp(net) => {
                let s = self.meta.standardizer.as_ref()?;
                let x = Tensor::matrix(1, s.mean.len(), s.apply(&feats(now))).ok()?;
                Some(net.predict(&x)[0] * sc)
            }
            FittedModel::Lstm { net, lookback } => {
                let w = *lookback;
                if history.len() < w {
                    return None;
                }
                let tail = &history[history.len() - w..];
                let consecutive = tail
                    .windows(2)
                    .all(|p| p[0].interval.0 + 1 == p[1].interval.0 && p[0].date() == p[1].date());
                if !consecutive {
                    return None;
                }
                let s = self.meta.standardizer.as_ref()?;
                let steps: Vec<Tensor<T>> = tail
                    .iter()
                    .map(|o| Tensor::matrix(1, s.mean.len(), s.apply(&feats(o))).expect("one row"))
                    .collect();
                Some(net.predict(&steps)[0] * sc)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{build_feature_table, fuse};
    use crate::synth::{generate_scenario, ScenarioConfig};

    fn week() -> (ScenarioConfig, FeatureTable) {
        let cfg = ScenarioConfig::parse("grid.days = 7\nrf.n_trees = 10\n").unwrap();
        let sc = generate_scenario(&cfg).unwrap();
        let t = build_feature_table(&cfg.study, &fuse(&cfg.study, &sc.tolls, &sc.speeds, &sc.volumes)).unwrap();
        (cfg, t)
    }

    #[test]
    fn windows_restart_each_day() {
        let (_, t) = week();
        let ok = window_complete(&t, 4);
        for (i, r) in t.rows.iter().enumerate() {
            let day_pos = t.rows[..i].iter().rev().take_while(|p| p.obs.date() == r.obs.date()).count();
            assert_eq!(ok[i], day_pos >= 3, "row {i}");
        }
    }

    #[test]
    fn persistence_ignores_the_horizon_and_forest_stays_in_range() {
        let (cfg, t) = week();
        let rows: Vec<usize> = (0..t.rows.len()).collect();
        let mut persist = Vec::new();
        for h in HorizonIndex::ALL {
            let input = FitInput { table: &t, train: &rows, valid: &[], horizon: h };
            let (p, log) = fit_model::<f64>(Algorithm::Persistence, input, &cfg.study).unwrap();
            assert!(log.is_none());
            persist.push(p.predict_table(&t).unwrap());

            let (rf, _) = fit_model::<f64>(Algorithm::RandomForest, input, &cfg.study).unwrap();
            let ys: Vec<f64> = rows.iter().map(|&r| t.rows[r].targets[h.slot()]).collect();
            let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            for p in rf.predict_table(&t).unwrap().into_iter().flatten() {
                assert!((lo..=hi).contains(&p));
            }
        }
        assert!(persist.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(persist[0][5], Some(persistence_predict(&t.rows[5].obs, &t)));
    }

    #[test]
    fn empty_training_set_is_refused() {
        let (cfg, t) = week();
        let input = FitInput { table: &t, train: &[], valid: &[], horizon: HorizonIndex::ALL[0] };
        assert!(matches!(fit_model::<f64>(Algorithm::Mlp, input, &cfg.study), Err(ModelError::InsufficientData(_))));
    }
}
