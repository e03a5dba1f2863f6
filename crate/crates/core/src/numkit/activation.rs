use crate::num::Real;

/// Exponential linear unit: `x` for `x > 0`, `α(eˣ − 1)` otherwise.
pub fn elu<T: Real>(x: T, alpha: T) -> T {
    if x > T::zero() {
        x
    } else {
        alpha * x.exp_m1()
    }
}

/// Derivative of [`elu`]: 1 for `x > 0`, `α·eˣ` otherwise.
pub fn d_elu<T: Real>(x: T, alpha: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        alpha * x.exp()
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0, 1.0), 0.0);
        assert_eq!(elu(2.0, 1.0), 2.0);
        assert!((elu(-1.0f64, 1.0) - (-0.632_120_558_828_557_7)).abs() < 1e-15);
        assert_eq!(d_elu(3.0, 1.0), 1.0);
        assert!((d_elu(-1.0f64, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn elu_continuous_at_zero() {
        let eps = 1e-12f64;
        assert!((elu(eps, 1.0) - elu(-eps, 1.0)).abs() < 1e-11);
        assert!((d_elu(eps, 1.0) - d_elu(-eps, 1.0)).abs() < 1e-11);
    }

    #[test]
    fn elu_matches_finite_difference_off_kink() {
        for &x in &[-3.0f64, -0.5, -1e-3, 1e-3, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (elu(x + h, 1.0) - elu(x - h, 1.0)) / (2.0 * h);
            assert!((fd - d_elu(x, 1.0)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn sigmoid_stable_and_bounded() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0 && sigmoid(800.0f64) <= 1.0);
        assert!((sigmoid(2.0f64) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
