use crate::num::Real;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub n: usize,
    pub mae: f64,
    /// Fraction, over rows with `|y|` at or above the guard; `None` if
    /// there are none.
    pub mape: Option<f64>,
    /// `None` when the actuals have zero variance.
    pub r2: Option<f64>,
}

/// MAE, MAPE and R² of predictions `y_hat` against actuals `y`.
pub fn compute_metrics<T: Real>(y: &[T], y_hat: &[T], mape_guard: T) -> Result<Metrics, EvalError> {
    if y.len() != y_hat.len() {
        return Err(EvalError::Metrics(format!("{} actuals vs {} predictions", y.len(), y_hat.len())));
    }
    if y.len() < 2 {
        return Err(EvalError::Metrics(format!("need at least 2 values, got {}", y.len())));
    }
    let n = T::from_usize_lossy(y.len());
    let mae = y.iter().zip(y_hat).map(|(&a, &p)| (a - p).abs()).sum::<T>() / n;

    let mut ape = T::zero();
    let mut guarded = 0usize;
    for (&a, &p) in y.iter().zip(y_hat) {
        if a.abs() >= mape_guard {
            ape += (a - p).abs() / a.abs();
            guarded += 1;
        }
    }
    let mape = (guarded > 0).then(|| (ape / T::from_usize_lossy(guarded)).as_f64());

    let mean = y.iter().copied().sum::<T>() / n;
    let ss_tot = y.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>();
    let ss_res = y.iter().zip(y_hat).map(|(&a, &p)| (a - p) * (a - p)).sum::<T>();
    let r2 = (ss_tot > T::zero()).then(|| (T::one() - ss_res / ss_tot).as_f64());
    Ok(Metrics { n: y.len(), mae: mae.as_f64(), mape, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let m = compute_metrics(&[10.0, 20.0], &[12.0, 16.0], 1.0).unwrap();
        assert_eq!(m.mae, 3.0);
        assert!((m.mape.unwrap() - 0.2f64).abs() < 1e-15);
        assert!((m.r2.unwrap() - 0.6f64).abs() < 1e-15);

        let y = [3.0, 5.0, 9.0];
        let p = compute_metrics(&y, &y, 1.0).unwrap();
        assert_eq!((p.mae, p.mape, p.r2), (0.0, Some(0.0), Some(1.0)));

        let mean = compute_metrics(&y, &[17.0 / 3.0; 3], 1.0).unwrap();
        assert!(mean.r2.unwrap().abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        let flat = compute_metrics(&[4.0, 4.0, 4.0], &[4.0, 5.0, 3.0], 1.0).unwrap();
        assert_eq!(flat.r2, None);
        let small = compute_metrics(&[0.5, -0.2], &[0.4, 0.0], 1.0).unwrap();
        assert_eq!(small.mape, None);
        assert!(compute_metrics(&[1.0], &[1.0], 1.0).is_err());
        assert!(compute_metrics(&[1.0, 2.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn guard_excludes_small_actuals_from_mape_only() {
        let m = compute_metrics(&[0.0, 10.0], &[1.0, 11.0], 1.0).unwrap();
        assert_eq!(m.mae, 1.0);
        assert!((m.mape.unwrap() - 0.1f64).abs() < 1e-15);
    }
}
