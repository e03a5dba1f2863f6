use crate::num::Real;

use super::params::ParamSet;
use super::NumError;

/// Mean absolute percentage error as a fraction: `(1/n) Σ |yᵢ − ŷᵢ| / |yᵢ|`.
///
/// Callers exclude rows with `|y|` under the target's guard before this point.
pub fn mape_loss<T: Real>(y: &[T], y_hat: &[T]) -> Result<T, NumError> {
    check_pair(y, y_hat)?;
    let n = T::from_usize_lossy(y.len());
    Ok(y.iter()
        .zip(y_hat)
        .map(|(&a, &p)| (a - p).abs() / a.abs())
        .sum::<T>()
        / n)
}

/// `∂ mape / ∂ŷᵢ = sign(ŷᵢ − yᵢ) / (n |yᵢ|)`, with 0 at `ŷᵢ = yᵢ`.
pub fn mape_grad<T: Real>(y: &[T], y_hat: &[T]) -> Result<Vec<T>, NumError> {
    check_pair(y, y_hat)?;
    let n = T::from_usize_lossy(y.len());
    Ok(y.iter()
        .zip(y_hat)
        .map(|(&a, &p)| {
            let r = p - a;
            if r == T::zero() {
                T::zero()
            } else {
                r.signum() / (n * a.abs())
            }
        })
        .collect())
}

fn check_pair<T>(y: &[T], y_hat: &[T]) -> Result<(), NumError> {
    if y.is_empty() {
        return Err(NumError::Empty("mape_loss on empty vectors"));
    }
    if y.len() != y_hat.len() {
        return Err(NumError::Shape(format!("targets {} vs predictions {}", y.len(), y_hat.len())));
    }
    Ok(())
}

/// `λ Σ w²` over weight matrices; biases and batch-norm parameters are exempt.
pub fn l2_penalty<T: Real>(params: &ParamSet<T>, lambda: T) -> T {
    params
        .iter()
        .filter(|p| p.kind.regularized())
        .flat_map(|p| p.value.data().iter())
        .map(|&w| w * w)
        .sum::<T>()
        * lambda
}

/// Adds `2λw` into the matching weight gradients.
pub fn l2_grad_into<T: Real>(params: &ParamSet<T>, lambda: T, grads: &mut ParamSet<T>) {
    let two_l = lambda + lambda;
    for (p, g) in params.iter().zip(grads.iter_mut()) {
        if p.kind.regularized() {
            for (gv, &w) in g.value.data_mut().iter_mut().zip(p.value.data()) {
                *gv += two_l * w;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{ParamKind, Tensor};

    #[test]
    fn mape_examples() {
        assert_eq!(mape_loss(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!((mape_loss(&[10.0f64, 20.0], &[12.0, 16.0]).unwrap() - 0.20).abs() < 1e-15);
        let k = 37.5f64;
        let scaled = mape_loss(&[10.0 * k, 20.0 * k], &[12.0 * k, 16.0 * k]).unwrap();
        assert!((scaled - 0.20).abs() < 1e-15);
        assert!(mape_loss::<f64>(&[], &[]).is_err());
        assert!(mape_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mape_grad_signs() {
        let g = mape_grad(&[10.0f64, 20.0, 5.0], &[12.0, 16.0, 5.0]).unwrap();
        assert!((g[0] - 1.0 / 30.0).abs() < 1e-15);
        assert!((g[1] + 1.0 / 60.0).abs() < 1e-15);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn l2_examples() {
        let mut p = ParamSet::<f64>::new();
        p.add("w", ParamKind::Weight, Tensor::matrix(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap())
            .unwrap();
        p.add("b", ParamKind::Bias, Tensor::from_vec(&[2], vec![5.0, 5.0]).unwrap())
            .unwrap();
        p.add("gamma", ParamKind::Scale, Tensor::from_vec(&[2], vec![3.0, 3.0]).unwrap())
            .unwrap();
        assert!((l2_penalty(&p, 0.1) - 1.0).abs() < 1e-15);
        assert_eq!(l2_penalty(&p, 0.0), 0.0);
        let mut g = p.zeros_like();
        l2_grad_into(&p, 0.1, &mut g);
        assert_eq!(g.by_name("w").unwrap().data(), &[0.2, 0.4, 0.4, 0.2]);
        assert_eq!(g.by_name("b").unwrap().data(), &[0.0, 0.0]);

        let z = p.zeros_like();
        assert_eq!(l2_penalty(&z, 0.5), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mape_nonnegative_and_scale_invariant(
                pairs in proptest::collection::vec((1.0f64..1e3, -1e3f64..1e3), 1..20),
                k in 0.01f64..100.0,
            ) {
                let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                let base = mape_loss(&y, &p).unwrap();
                prop_assert!(base >= 0.0);
                let ys: Vec<f64> = y.iter().map(|v| v * k).collect();
                let ps: Vec<f64> = p.iter().map(|v| v * k).collect();
                let scaled = mape_loss(&ys, &ps).unwrap();
                prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1.0));
                prop_assert_eq!(mape_loss(&y, &y).unwrap(), 0.0);
            }
        }
    }
}
