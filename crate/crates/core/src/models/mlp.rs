//! Four hidden layers of bias-free linear → batch norm → ELU, then a linear
//! output unit, trained on MAPE + L2 with Adam and early stopping.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::num::Real;
use crate::numkit::{
    adam_step, batchnorm_backward, batchnorm_infer, batchnorm_train, d_elu, elu, l2_grad_into, l2_penalty,
    mape_grad, mape_loss, update_running, AdamState, BnCache, BranchTrace, Evaluation, NumError, Objective,
    ParamId, ParamKind, ParamSet, RunningStats, Tensor, BN_MOMENTUM,
};
use crate::seed::rng_for;

use super::train::{batches, uniform_init, EarlyStop, TrainLog};
use super::{MlpParams, ModelError};

pub const HIDDEN_LAYERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
struct HiddenIds {
    w: ParamId,
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

/// Where each tensor lives in the parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayout {
    hidden: Vec<HiddenIds>,
    out_w: ParamId,
    out_b: ParamId,
}

impl MlpLayout {
    /// Recovers the layout from parameter names (`h1.w` … `out.b`).
    pub fn of<T: Real>(params: &ParamSet<T>) -> Result<MlpLayout, ModelError> {
        let id = |n: String| {
            params.id_of(&n).ok_or_else(|| ModelError::Format(format!("mlp parameter '{n}' missing")))
        };
        let hidden = (1..=HIDDEN_LAYERS)
            .map(|k| {
                Ok(HiddenIds {
                    w: id(format!("h{k}.w"))?,
                    gamma: id(format!("h{k}.gamma"))?,
                    beta: id(format!("h{k}.beta"))?,
                    mean: id(format!("h{k}.running_mean"))?,
                    var: id(format!("h{k}.running_var"))?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(MlpLayout { hidden, out_w: id("out.w".into())?, out_b: id("out.b".into())? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub params: ParamSet<T>,
    layout: MlpLayout,
}

/// Train-mode forward values kept for the backward pass.
pub struct MlpForward<T> {
    pub output: Vec<T>,
    inputs: Vec<Tensor<T>>,
    bn_out: Vec<Tensor<T>>,
    caches: Vec<BnCache<T>>,
    last: Tensor<T>,
    branches: BranchTrace,
}

impl<T: Real> Mlp<T> {
    /// He-style uniform weights, γ = 1, β = 0, unit running variance, and
    /// the output bias at `out_bias`.
    pub fn new<R: Rng>(input: usize, hidden: [usize; HIDDEN_LAYERS], out_bias: T, rng: &mut R) -> Self {
        let mut p = ParamSet::new();
        let mut fan_in = input;
        for (k, &w) in hidden.iter().enumerate() {
            let k = k + 1;
            let add = |p: &mut ParamSet<T>, n: String, kind, t| p.add(n, kind, t).expect("fresh names");
            add(&mut p, format!("h{k}.w"), ParamKind::Weight, uniform_init(fan_in, w, rng));
            add(&mut p, format!("h{k}.gamma"), ParamKind::Scale, Tensor::filled(&[w], T::one()));
            add(&mut p, format!("h{k}.beta"), ParamKind::Shift, Tensor::zeros(&[w]));
            add(&mut p, format!("h{k}.running_mean"), ParamKind::RunningMean, Tensor::zeros(&[w]));
            add(&mut p, format!("h{k}.running_var"), ParamKind::RunningVar, Tensor::filled(&[w], T::one()));
            fan_in = w;
        }
        p.add("out.w", ParamKind::Weight, uniform_init(fan_in, 1, rng)).expect("fresh name");
        p.add("out.b", ParamKind::Bias, Tensor::filled(&[1], out_bias)).expect("fresh name");
        let layout = MlpLayout::of(&p).expect("layout of fresh parameters");
        Mlp { params: p, layout }
    }

    pub fn from_params(params: ParamSet<T>) -> Result<Self, ModelError> {
        let layout = MlpLayout::of(&params)?;
        Ok(Mlp { params, layout })
    }

    pub fn layout(&self) -> &MlpLayout {
        &self.layout
    }

    pub fn input_width(&self) -> usize {
        self.params.get(self.layout.hidden[0].w).rows()
    }

    /// Inference with running batch-norm statistics.
    pub fn predict(&self, x: &Tensor<T>) -> Vec<T> {
        let p = &self.params;
        let one = T::one();
        let mut a = x.clone();
        for ids in &self.layout.hidden {
            let z = a.matmul(p.get(ids.w));
            let stats = RunningStats { mean: p.get(ids.mean).data().to_vec(), var: p.get(ids.var).data().to_vec() };
            a = batchnorm_infer(&z, p.get(ids.gamma).data(), p.get(ids.beta).data(), &stats).map(|v| elu(v, one));
        }
        let mut out = a.matmul(p.get(self.layout.out_w));
        out.add_row(p.get(self.layout.out_b).data());
        out.into_data()
    }
}

/// Train-mode forward pass with batch statistics. Running statistics are
/// left alone.
pub fn forward_train<T: Real>(layout: &MlpLayout, p: &ParamSet<T>, x: &Tensor<T>) -> Result<MlpForward<T>, NumError> {
    let one = T::one();
    let mut branches = BranchTrace::default();
    let mut a = x.clone();
    let mut inputs = Vec::with_capacity(HIDDEN_LAYERS);
    let mut bn_out = Vec::with_capacity(HIDDEN_LAYERS);
    let mut caches = Vec::with_capacity(HIDDEN_LAYERS);
    for ids in &layout.hidden {
        let z = a.matmul(p.get(ids.w));
        let (b, cache) = batchnorm_train(&z, p.get(ids.gamma).data(), p.get(ids.beta).data())?;
        for &v in b.data() {
            branches.record(v > T::zero());
        }
        inputs.push(a);
        a = b.map(|v| elu(v, one));
        bn_out.push(b);
        caches.push(cache);
    }
    let mut out = a.matmul(p.get(layout.out_w));
    out.add_row(p.get(layout.out_b).data());
    Ok(MlpForward { output: out.into_data(), inputs, bn_out, caches, last: a, branches })
}

/// Gradient of a loss with `∂L/∂output = dout` with respect to every
/// parameter. Running statistics get zero gradient.
pub fn backward<T: Real>(layout: &MlpLayout, p: &ParamSet<T>, fwd: &MlpForward<T>, dout: &[T]) -> ParamSet<T> {
    let one = T::one();
    let mut g = p.zeros_like();
    let d = Tensor::matrix(dout.len(), 1, dout.to_vec()).expect("column vector");
    g.set(layout.out_w, fwd.last.t_matmul(&d)).expect("shape");
    g.set(layout.out_b, Tensor::from_vec(&[1], d.sum_rows()).expect("shape")).expect("shape");
    let mut da = d.matmul_t(p.get(layout.out_w));
    for k in (0..layout.hidden.len()).rev() {
        let ids = layout.hidden[k];
        let mut dpre = da;
        for (dv, &b) in dpre.data_mut().iter_mut().zip(fwd.bn_out[k].data()) {
            *dv *= d_elu(b, one);
        }
        let bg = batchnorm_backward(&dpre, p.get(ids.gamma).data(), &fwd.caches[k]);
        let w = bg.dgamma.len();
        g.set(ids.gamma, Tensor::from_vec(&[w], bg.dgamma).expect("shape")).expect("shape");
        g.set(ids.beta, Tensor::from_vec(&[w], bg.dbeta).expect("shape")).expect("shape");
        g.set(ids.w, fwd.inputs[k].t_matmul(&bg.dx)).expect("shape");
        da = bg.dx.matmul_t(p.get(ids.w));
    }
    g
}

/// MAPE + L2 over one fixed batch in train mode, for gradient checking.
pub struct MlpObjective<'a, T> {
    pub layout: &'a MlpLayout,
    pub x: &'a Tensor<T>,
    pub y: &'a [T],
    pub lambda: T,
}

impl<T: Real> Objective<T> for MlpObjective<'_, T> {
    fn evaluate(&self, p: &ParamSet<T>) -> Evaluation<T> {
        let fwd = forward_train(self.layout, p, self.x).expect("batch of at least two rows");
        let mut br = fwd.branches;
        for (&a, &b) in fwd.output.iter().zip(self.y) {
            br.record(a > b);
        }
        let loss = mape_loss(self.y, &fwd.output).expect("matching lengths") + l2_penalty(p, self.lambda);
        Evaluation { loss, branches: br.finish() }
    }

    fn gradient(&self, p: &ParamSet<T>) -> (T, ParamSet<T>) {
        let fwd = forward_train(self.layout, p, self.x).expect("batch of at least two rows");
        let loss = mape_loss(self.y, &fwd.output).expect("matching lengths") + l2_penalty(p, self.lambda);
        let dout = mape_grad(self.y, &fwd.output).expect("matching lengths");
        let mut g = backward(self.layout, p, &fwd, &dout);
        l2_grad_into(p, self.lambda, &mut g);
        (loss, g)
    }
}

fn advance_running<T: Real>(layout: &MlpLayout, p: &mut ParamSet<T>, fwd: &MlpForward<T>) {
    let m = T::lit(BN_MOMENTUM);
    for (ids, cache) in layout.hidden.iter().zip(&fwd.caches) {
        let mut stats = RunningStats { mean: p.get(ids.mean).data().to_vec(), var: p.get(ids.var).data().to_vec() };
        update_running(&mut stats, cache, m);
        p.get_mut(ids.mean).data_mut().copy_from_slice(&stats.mean);
        p.get_mut(ids.var).data_mut().copy_from_slice(&stats.var);
    }
}

/// Mini-batch Adam on MAPE + L2. Keeps the parameters with the best
/// validation MAPE (training MAPE if `x_val` is empty).
///
/// Inputs should already be standardized and targets scaled to order one.
pub fn train_mlp<T: Real>(
    x: &Tensor<T>,
    y: &[T],
    x_val: &Tensor<T>,
    y_val: &[T],
    params: &MlpParams,
    seed: u64,
) -> Result<(Mlp<T>, TrainLog), ModelError> {
    if x.rows() < 2 {
        return Err(ModelError::InsufficientData(format!("mlp needs at least 2 training rows, got {}", x.rows())));
    }
    let mut init = rng_for(seed, "mlp/init");
    let mut shuffle = rng_for(seed, "mlp/shuffle");
    let mean_y = y.iter().copied().sum::<T>() / T::from_usize_lossy(y.len());
    let mut net = Mlp::new(x.cols(), params.hidden, mean_y, &mut init);
    let layout = net.layout.clone();
    let mut adam = AdamState::new(&net.params, params.adam);
    let lambda = T::lit(params.l2);
    let (xv, yv) = if x_val.rows() > 0 { (x_val, y_val) } else { (x, y) };

    let mut stop = EarlyStop::new(params.patience, net.params.clone());
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for epoch in 0..params.epochs {
        order.shuffle(&mut shuffle);
        for (b, rows) in batches(&order, params.batch_size).enumerate() {
            let xb = gather(x, rows);
            let yb: Vec<T> = rows.iter().map(|&r| y[r]).collect();
            let fwd = forward_train(&layout, &net.params, &xb)?;
            let loss = mape_loss(&yb, &fwd.output)? + l2_penalty(&net.params, lambda);
            if !loss.is_finite() {
                return Err(ModelError::NonFinite { epoch, batch: b, detail: format!("mlp loss {loss}") });
            }
            let dout = mape_grad(&yb, &fwd.output)?;
            let mut g = backward(&layout, &net.params, &fwd, &dout);
            l2_grad_into(&net.params, lambda, &mut g);
            adam_step(&mut net.params, &g, &mut adam)
                .map_err(|e| ModelError::NonFinite { epoch, batch: b, detail: e.to_string() })?;
            advance_running(&layout, &mut net.params, &fwd);
        }
        let val = mape_loss(yv, &net.predict(xv))?.as_f64();
        if !val.is_finite() {
            return Err(ModelError::NonFinite { epoch, batch: 0, detail: "validation MAPE".into() });
        }
        if stop.observe(epoch, val, &net.params) {
            break;
        }
    }
    let (best, log) = stop.finish();
    net.params = best;
    Ok((net, log))
}

pub(crate) fn gather<T: Real>(x: &Tensor<T>, rows: &[usize]) -> Tensor<T> {
    let c = x.cols();
    let mut data = Vec::with_capacity(rows.len() * c);
    for &r in rows {
        data.extend_from_slice(x.row(r));
    }
    Tensor::matrix(rows.len(), c, data).expect("gathered rows")
}
