//! Per-feature batch normalization over the rows of an `n × d` batch.

use crate::num::Real;

use super::tensor::Tensor;
use super::NumError;

/// Variance stabilizer added before the square root.
pub const BN_EPS: f64 = 1e-5;
/// Weight kept on the previous running statistic at each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Running mean and variance, updated in train mode, used in infer mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(width: usize) -> Self {
        RunningStats { mean: vec![T::zero(); width], var: vec![T::one(); width] }
    }
}

/// Values kept from a train-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

pub struct BnGrads<T> {
    pub dx: Tensor<T>,
    pub dgamma: Vec<T>,
    pub dbeta: Vec<T>,
}

/// Train-mode normalization by batch statistics (biased variance). Does not
/// touch running statistics; see [`update_running`].
pub fn batchnorm_train<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
) -> Result<(Tensor<T>, BnCache<T>), NumError> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(NumError::BatchTooSmall(n));
    }
    let nf = T::from_usize_lossy(n);
    let eps = T::lit(BN_EPS);
    let mut mean = vec![T::zero(); d];
    for r in 0..n {
        for (m, &v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![T::zero(); d];
    for r in 0..n {
        for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            let c = v - m;
            *s += c * c;
        }
    }
    var.iter_mut().for_each(|s| *s /= nf);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

    let mut xhat = Tensor::zeros(&[n, d]);
    let mut y = Tensor::zeros(&[n, d]);
    for r in 0..n {
        let xr = x.row(r);
        let hr = xhat.row_mut(r);
        for j in 0..d {
            hr[j] = (xr[j] - mean[j]) * inv_std[j];
        }
        let hr = xhat.row(r).to_vec();
        let yr = y.row_mut(r);
        for j in 0..d {
            yr[j] = gamma[j] * hr[j] + beta[j];
        }
    }
    Ok((y, BnCache { xhat, inv_std, batch_mean: mean, batch_var: var }))
}

/// Exponential moving average toward the batch statistics in `cache`.
pub fn update_running<T: Real>(stats: &mut RunningStats<T>, cache: &BnCache<T>, momentum: T) {
    let keep = momentum;
    let take = T::one() - momentum;
    for (r, &b) in stats.mean.iter_mut().zip(&cache.batch_mean) {
        *r = keep * *r + take * b;
    }
    for (r, &b) in stats.var.iter_mut().zip(&cache.batch_var) {
        *r = keep * *r + take * b;
    }
}

pub fn batchnorm_infer<T: Real>(x: &Tensor<T>, gamma: &[T], beta: &[T], stats: &RunningStats<T>) -> Tensor<T> {
    let eps = T::lit(BN_EPS);
    let d = x.cols();
    let scale: Vec<T> = (0..d).map(|j| gamma[j] / (stats.var[j] + eps).sqrt()).collect();
    let mut y = x.clone();
    for r in 0..x.rows() {
        let row = y.row_mut(r);
        for j in 0..d {
            row[j] = (row[j] - stats.mean[j]) * scale[j] + beta[j];
        }
    }
    y
}

/// Forward pass in either mode; train mode also advances `stats`.
pub fn batchnorm<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    mode: BnMode,
    stats: &mut RunningStats<T>,
    momentum: T,
) -> Result<Tensor<T>, NumError> {
    match mode {
        BnMode::Train => {
            let (y, cache) = batchnorm_train(x, gamma, beta)?;
            update_running(stats, &cache, momentum);
            Ok(y)
        }
        BnMode::Infer => Ok(batchnorm_infer(x, gamma, beta, stats)),
    }
}

pub fn batchnorm_backward<T: Real>(dy: &Tensor<T>, gamma: &[T], cache: &BnCache<T>) -> BnGrads<T> {
    let (n, d) = (dy.rows(), dy.cols());
    let nf = T::from_usize_lossy(n);
    let mut dgamma = vec![T::zero(); d];
    let mut dbeta = vec![T::zero(); d];
    for r in 0..n {
        let (g, h) = (dy.row(r), cache.xhat.row(r));
        for j in 0..d {
            dbeta[j] += g[j];
            dgamma[j] += g[j] * h[j];
        }
    }
    // dx = γ·inv_std/n · (n·dy − Σdy − x̂·Σ(dy·x̂))
    let mut dx = Tensor::zeros(&[n, d]);
    for r in 0..n {
        let (g, h) = (dy.row(r), cache.xhat.row(r));
        let out = dx.row_mut(r);
        for j in 0..d {
            out[j] = gamma[j] * cache.inv_std[j] / nf * (nf * g[j] - dbeta[j] - h[j] * dgamma[j]);
        }
    }
    BnGrads { dx, dgamma, dbeta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(n: usize, d: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.random_range(-5.0..5.0) * 3.0 + 1.0).collect();
        Tensor::matrix(n, d, data).unwrap()
    }

    #[test]
    fn train_output_is_standardized() {
        let x = random_batch(32, 4, 1);
        let (y, _) = batchnorm_train(&x, &[1.0; 4], &[0.0; 4]).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = (0..32).map(|r| y.at(r, j)).collect();
            let m = col.iter().sum::<f64>() / 32.0;
            let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / 32.0;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn identical_rows_map_to_shift() {
        let x = Tensor::matrix(3, 2, vec![4.0, -1.0, 4.0, -1.0, 4.0, -1.0]).unwrap();
        let (y, _) = batchnorm_train(&x, &[1.0, 1.0], &[0.5, 0.5]).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn infer_with_unit_stats_is_near_identity() {
        let x = random_batch(5, 3, 2);
        let stats = RunningStats::new(3);
        let y = batchnorm_infer(&x, &[1.0; 3], &[0.0; 3], &stats);
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= a.abs() * 1e-5);
        }
    }

    #[test]
    fn small_batch_rejected_in_train_mode() {
        let x = random_batch(1, 3, 3);
        let mut stats = RunningStats::new(3);
        assert!(matches!(
            batchnorm(&x, &[1.0; 3], &[0.0; 3], BnMode::Train, &mut stats, 0.9),
            Err(NumError::BatchTooSmall(1))
        ));
        assert!(batchnorm(&x, &[1.0; 3], &[0.0; 3], BnMode::Infer, &mut stats, 0.9).is_ok());
    }

    #[test]
    fn running_stats_move_toward_batch() {
        let x = random_batch(16, 2, 4);
        let mut stats = RunningStats::new(2);
        let (_, cache) = batchnorm_train(&x, &[1.0; 2], &[0.0; 2]).unwrap();
        update_running(&mut stats, &cache, 0.9);
        assert!((stats.mean[0] - 0.1 * cache.batch_mean[0]).abs() < 1e-12);
        assert!((stats.var[1] - (0.9 + 0.1 * cache.batch_var[1])).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = random_batch(6, 3, 5);
        let gamma = [0.7, 1.3, -0.4];
        let beta = [0.1, 0.0, 0.2];
        // loss = Σ w ⊙ y with fixed random weights
        let w = random_batch(6, 3, 6);
        let loss = |x: &Tensor<f64>, g: &[f64], b: &[f64]| -> f64 {
            let (y, _) = batchnorm_train(x, g, b).unwrap();
            y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = batchnorm_train(&x, &gamma, &beta).unwrap();
        let grads = batchnorm_backward(&w, &gamma, &cache);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(&xp, &gamma, &beta) - loss(&xm, &gamma, &beta)) / (2.0 * h);
            assert!((fd - grads.dx.data()[i]).abs() < 1e-6, "dx[{i}]");
        }
        for j in 0..3 {
            let mut gp = gamma;
            gp[j] += h;
            let mut gm = gamma;
            gm[j] -= h;
            let fd = (loss(&x, &gp, &beta) - loss(&x, &gm, &beta)) / (2.0 * h);
            assert!((fd - grads.dgamma[j]).abs() < 1e-6);
            let mut bp = beta;
            bp[j] += h;
            let mut bm = beta;
            bm[j] -= h;
            let fd = (loss(&x, &gamma, &bp) - loss(&x, &gamma, &bm)) / (2.0 * h);
            assert!((fd - grads.dbeta[j]).abs() < 1e-6);
        }
    }
}
