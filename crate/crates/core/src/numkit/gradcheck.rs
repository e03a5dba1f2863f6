//! Central finite-difference check of analytic gradients.
//!
//! Objectives report a branch signature alongside the loss: a hash of which
//! side of every kink (ELU at 0, MAPE at ŷ = y) the evaluation landed on. A
//! probe whose ± perturbations change the signature straddles a kink, where
//! the finite difference is meaningless, and is redrawn.

use rand::Rng;

use crate::num::Real;

use super::params::{ParamId, ParamSet};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Floor on the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-8;

/// Loss value plus the branch signature it was computed on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation<T> {
    pub loss: T,
    pub branches: u64,
}

/// Incremental FNV-1a hash over branch decisions.
#[derive(Debug, Clone, Copy)]
pub struct BranchTrace(u64);

impl Default for BranchTrace {
    fn default() -> Self {
        BranchTrace(0xcbf2_9ce4_8422_2325)
    }
}

impl BranchTrace {
    pub fn record(&mut self, positive: bool) {
        self.0 ^= positive as u64 + 1;
        self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

/// A scalar loss over a parameter set with an analytic gradient.
pub trait Objective<T: Real> {
    fn evaluate(&self, params: &ParamSet<T>) -> Evaluation<T>;
    /// Loss and gradient with the same names and shapes as `params`.
    fn gradient(&self, params: &ParamSet<T>) -> (T, ParamSet<T>);
}

/// Adapts a pair of closures into an [`Objective`]; the branch signature is
/// always 0, so only use it for smooth losses.
pub struct SmoothObjective<F, G> {
    pub loss: F,
    pub grad: G,
}

impl<T, F, G> Objective<T> for SmoothObjective<F, G>
where
    T: Real,
    F: Fn(&ParamSet<T>) -> T,
    G: Fn(&ParamSet<T>) -> ParamSet<T>,
{
    fn evaluate(&self, params: &ParamSet<T>) -> Evaluation<T> {
        Evaluation { loss: (self.loss)(params), branches: 0 }
    }

    fn gradient(&self, params: &ParamSet<T>) -> (T, ParamSet<T>) {
        ((self.loss)(params), (self.grad)(params))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat offset of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub probes: usize,
    pub resampled: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Checks `probes` coordinates drawn uniformly from the trainable scalars.
pub fn grad_check<T: Real, O: Objective<T>, R: Rng>(
    objective: &O,
    params: &ParamSet<T>,
    probes: usize,
    rng: &mut R,
) -> GradCheckReport {
    let coords = params.trainable_coords();
    assert!(!coords.is_empty(), "no trainable parameters to probe");
    let (_, grads) = objective.gradient(params);
    let base = objective.evaluate(params).branches;

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, probes: 0, resampled: 0 };
    let max_attempts = probes * 50 + 100;
    let mut attempts = 0;
    while report.probes < probes && attempts < max_attempts {
        attempts += 1;
        let (id, off) = coords[rng.random_range(0..coords.len())];
        match probe(objective, params, &grads, base, id, off) {
            Some(err) => {
                report.probes += 1;
                if err > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = err;
                    report.worst = Some((params.name(id).to_string(), off));
                }
            }
            None => report.resampled += 1,
        }
    }
    report
}

/// Checks an explicit list of coordinates (kinked ones are skipped).
pub fn grad_check_coords<T: Real, O: Objective<T>>(
    objective: &O,
    params: &ParamSet<T>,
    coords: &[(ParamId, usize)],
) -> GradCheckReport {
    let (_, grads) = objective.gradient(params);
    let base = objective.evaluate(params).branches;
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, probes: 0, resampled: 0 };
    for &(id, off) in coords {
        match probe(objective, params, &grads, base, id, off) {
            Some(err) => {
                report.probes += 1;
                if err > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = err;
                    report.worst = Some((params.name(id).to_string(), off));
                }
            }
            None => report.resampled += 1,
        }
    }
    report
}

fn probe<T: Real, O: Objective<T>>(
    objective: &O,
    params: &ParamSet<T>,
    grads: &ParamSet<T>,
    base_branches: u64,
    id: ParamId,
    off: usize,
) -> Option<f64> {
    let h = T::lit(FD_STEP);
    let mut shifted = params.clone();
    let orig = shifted.get(id).data()[off];

    shifted.get_mut(id).data_mut()[off] = orig + h;
    let plus = objective.evaluate(&shifted);
    shifted.get_mut(id).data_mut()[off] = orig - h;
    let minus = objective.evaluate(&shifted);
    if plus.branches != base_branches || minus.branches != base_branches {
        return None;
    }
    let numeric = (plus.loss.as_f64() - minus.loss.as_f64()) / (2.0 * FD_STEP);
    let analytic = grads.get(id).data()[off].as_f64();
    Some(relative_error(analytic, numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{ParamKind, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Linear model y = w·x + b with squared loss over a fixed batch.
    fn linear_case() -> (ParamSet<f64>, Vec<[f64; 3]>, Vec<f64>) {
        let mut p = ParamSet::new();
        p.add("w", ParamKind::Weight, Tensor::from_vec(&[3], vec![0.3, -1.2, 0.8]).unwrap())
            .unwrap();
        p.add("b", ParamKind::Bias, Tensor::from_vec(&[1], vec![0.1]).unwrap())
            .unwrap();
        let xs = vec![[1.0, 2.0, -1.0], [0.5, -0.3, 2.0], [-1.5, 0.2, 0.7], [2.0, 1.0, 1.0]];
        let ys = vec![1.0, -2.0, 0.5, 3.0];
        (p, xs, ys)
    }

    fn linear_loss(p: &ParamSet<f64>, xs: &[[f64; 3]], ys: &[f64]) -> f64 {
        let w = p.by_name("w").unwrap().data();
        let b = p.by_name("b").unwrap().data()[0];
        xs.iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b - y;
                r * r
            })
            .sum::<f64>()
            / xs.len() as f64
    }

    fn linear_grad(p: &ParamSet<f64>, xs: &[[f64; 3]], ys: &[f64], sign: f64) -> ParamSet<f64> {
        let w = p.by_name("w").unwrap().data().to_vec();
        let b = p.by_name("b").unwrap().data()[0];
        let mut g = p.zeros_like();
        let n = xs.len() as f64;
        let mut gw = [0.0; 3];
        let mut gb = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let r = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b - y;
            for j in 0..3 {
                gw[j] += 2.0 * r * x[j] / n;
            }
            gb += 2.0 * r / n;
        }
        let wid = g.id_of("w").unwrap();
        g.get_mut(wid).data_mut().copy_from_slice(&gw);
        let bid = g.id_of("b").unwrap();
        g.get_mut(bid).data_mut()[0] = sign * gb;
        g
    }

    #[test]
    fn quadratic_is_exact_to_rounding() {
        let (p, xs, ys) = linear_case();
        let obj = SmoothObjective {
            loss: |q: &ParamSet<f64>| linear_loss(q, &xs, &ys),
            grad: |q: &ParamSet<f64>| linear_grad(q, &xs, &ys, 1.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = grad_check(&obj, &p, 50, &mut rng);
        assert_eq!(r.probes, 50);
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn sign_flip_is_detected() {
        let (p, xs, ys) = linear_case();
        let obj = SmoothObjective {
            loss: |q: &ParamSet<f64>| linear_loss(q, &xs, &ys),
            grad: |q: &ParamSet<f64>| linear_grad(q, &xs, &ys, -1.0),
        };
        let bid = p.id_of("b").unwrap();
        let r = grad_check_coords(&obj, &p, &[(bid, 0)]);
        assert!((r.max_rel_error - 2.0).abs() < 1e-6, "{r:?}");
        assert_eq!(r.worst, Some(("b".to_string(), 0)));
    }

    struct Kinked;

    impl Objective<f64> for Kinked {
        fn evaluate(&self, p: &ParamSet<f64>) -> Evaluation<f64> {
            let x = p.iter().next().unwrap().value.data()[0];
            let mut t = BranchTrace::default();
            t.record(x > 0.0);
            Evaluation { loss: x.abs(), branches: t.finish() }
        }

        fn gradient(&self, p: &ParamSet<f64>) -> (f64, ParamSet<f64>) {
            let x = p.iter().next().unwrap().value.data()[0];
            let mut g = p.zeros_like();
            g.iter_mut().next().unwrap().value.data_mut()[0] = x.signum();
            (x.abs(), g)
        }
    }

    #[test]
    fn kinked_probe_is_resampled() {
        let mut p = ParamSet::new();
        let id = p
            .add("x", ParamKind::Weight, Tensor::from_vec(&[1], vec![1e-7]).unwrap())
            .unwrap();
        let r = grad_check_coords(&Kinked, &p, &[(id, 0)]);
        assert_eq!(r.probes, 0);
        assert_eq!(r.resampled, 1);
        p.set(id, Tensor::from_vec(&[1], vec![0.5]).unwrap()).unwrap();
        let r = grad_check_coords(&Kinked, &p, &[(id, 0)]);
        assert_eq!(r.probes, 1);
        assert!(r.max_rel_error < 1e-9);
    }
}
