use crate::num::Real;

use super::params::ParamSet;
use super::tensor::Tensor;
use super::NumError;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates for every entry of a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamState { config, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn first_moment(&self, i: usize) -> &Tensor<T> {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor<T> {
        &self.v[i]
    }
}

/// One bias-corrected Adam update of every trainable entry.
///
/// Gradients are validated before anything is written, so on error the
/// parameters and state are unchanged.
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut AdamState<T>,
) -> Result<(), NumError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(NumError::Shape("gradient set does not match parameters".into()));
    }
    for (p, g) in params.iter().zip(grads.iter()) {
        if p.value.shape() != g.value.shape() {
            return Err(NumError::Shape(format!("gradient shape mismatch for '{}'", p.name)));
        }
        if p.kind.trainable() && !g.value.all_finite() {
            return Err(NumError::NonFinite(format!("gradient of '{}'", p.name)));
        }
    }

    state.step += 1;
    let c = state.config;
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
    let one = T::one();
    let bc1 = one - b1.powi(state.step as i32);
    let bc2 = one - b2.powi(state.step as i32);

    for (i, (p, g)) in params.iter_mut().zip(grads.iter()).enumerate() {
        if !p.kind.trainable() {
            continue;
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((w, &gv), mv), vv) in p.value.data_mut().iter_mut().zip(g.value.data()).zip(m).zip(v) {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::ParamKind;

    fn single(values: Vec<f64>) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        let n = values.len();
        p.add("w", ParamKind::Weight, Tensor::from_vec(&[n], values).unwrap()).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = single(vec![1.0, -2.0, 3.0]);
        let g = p.zeros_like();
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p.by_name("w").unwrap().data(), &[1.0, -2.0, 3.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        for &g0 in &[0.5, -3.0, 1e-4, 250.0] {
            let mut p = single(vec![0.0; 2]);
            let mut g = p.zeros_like();
            g.iter_mut().next().unwrap().value.data_mut().fill(g0);
            let mut s = AdamState::new(&p, cfg);
            adam_step(&mut p, &g, &mut s).unwrap();
            let expected = -cfg.lr * g0 / (g0.abs() + cfg.eps);
            for &w in p.by_name("w").unwrap().data() {
                assert!((w - expected).abs() < 1e-18, "g={g0}: {w} vs {expected}");
            }
        }
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = single(vec![0.3, 0.7]);
            let mut g = p.zeros_like();
            g.iter_mut().next().unwrap().value.data_mut().copy_from_slice(&[0.1, -0.2]);
            let mut s = AdamState::new(&p, AdamConfig::default());
            for _ in 0..5 {
                adam_step(&mut p, &g, &mut s).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = single(vec![1.0]);
        let mut g = p.zeros_like();
        g.iter_mut().next().unwrap().value.data_mut()[0] = f64::NAN;
        let mut s = AdamState::new(&p, AdamConfig::default());
        let err = adam_step(&mut p, &g, &mut s).unwrap_err();
        assert!(err.to_string().contains("'w'"));
        assert_eq!(s.step, 0);
    }

    #[test]
    fn running_stats_untouched() {
        let mut p = single(vec![1.0]);
        p.add("mu", ParamKind::RunningMean, Tensor::from_vec(&[1], vec![4.0]).unwrap())
            .unwrap();
        let mut g = p.zeros_like();
        for e in g.iter_mut() {
            e.value.data_mut().fill(1.0);
        }
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p.by_name("mu").unwrap().data(), &[4.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn stays_finite(
                w in proptest::collection::vec(-1e6f64..1e6, 1..8),
                scale in prop_oneof![Just(0.0), Just(1e-30), Just(1.0), Just(1e30)],
                steps in 1usize..20,
            ) {
                let n = w.len();
                let mut p = single(w);
                let mut s = AdamState::new(&p, AdamConfig::default());
                for k in 0..steps {
                    let mut g = p.zeros_like();
                    for (i, v) in g.iter_mut().next().unwrap().value.data_mut().iter_mut().enumerate() {
                        *v = scale * (((i + k) % 3) as f64 - 1.0);
                    }
                    adam_step(&mut p, &g, &mut s).unwrap();
                }
                prop_assert!(p.by_name("w").unwrap().all_finite());
                prop_assert!(s.second_moment(0).data().iter().all(|&v| v >= 0.0));
                prop_assert_eq!(p.by_name("w").unwrap().len(), n);
            }
        }
    }
}
