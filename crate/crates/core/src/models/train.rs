//! Pieces shared by the two network trainers.

use rand::Rng;

use crate::num::Real;
use crate::numkit::{ParamSet, Tensor};

/// Weights uniform in `±sqrt(6 / fan_in)`.
pub fn uniform_init<T: Real, R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| T::lit(rng.random_range(-limit..limit))).collect();
    Tensor::matrix(fan_in, fan_out, data).expect("init shape")
}

/// Consecutive chunks of `order`. A trailing single row joins the previous
/// chunk, since train-mode batch norm needs two rows.
pub fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    let size = size.max(2);
    let n = order.len();
    let full = n / size;
    let cut = if n % size == 1 && full > 0 { (full - 1) * size } else { full * size };
    let head = order[..cut].chunks(size);
    let tail = (cut < n).then(|| &order[cut..]);
    head.chain(tail)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_mape: f64,
}

/// Tracks the best validation score and its parameter snapshot.
pub struct EarlyStop<T> {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epochs_run: usize,
    snapshot: ParamSet<T>,
}

impl<T: Real> EarlyStop<T> {
    pub fn new(patience: usize, initial: ParamSet<T>) -> Self {
        EarlyStop { patience, best: f64::INFINITY, best_epoch: 0, epochs_run: 0, snapshot: initial }
    }

    /// Records one epoch; true when training should stop.
    pub fn observe(&mut self, epoch: usize, score: f64, params: &ParamSet<T>) -> bool {
        self.epochs_run = epoch + 1;
        if score < self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.snapshot = params.clone();
        }
        epoch - self.best_epoch >= self.patience
    }

    pub fn finish(self) -> (ParamSet<T>, TrainLog) {
        let log = TrainLog { epochs_run: self.epochs_run, best_epoch: self.best_epoch, best_val_mape: self.best };
        (self.snapshot, log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_never_leave_a_single_row() {
        for n in 1..40 {
            for size in 2..9 {
                let order: Vec<usize> = (0..n).collect();
                let bs: Vec<&[usize]> = batches(&order, size).collect();
                assert_eq!(bs.iter().map(|b| b.len()).sum::<usize>(), n);
                if n >= 2 {
                    assert!(bs.iter().all(|b| b.len() >= 2), "n={n} size={size}");
                }
            }
        }
    }
}
