//! One LSTM layer unrolled over a `W`-step window, whose final hidden state
//! feeds three dense ELU layers and a linear output unit.
//!
//! Gate blocks in the stacked pre-activation are ordered input, forget,
//! candidate, output.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::num::Real;
use crate::numkit::{
    adam_step, d_elu, elu, mape_grad, mape_loss, sigmoid, AdamState, BranchTrace, Evaluation, Objective, ParamId,
    ParamKind, ParamSet, Tensor,
};
use crate::seed::rng_for;

use super::mlp::gather;
use super::train::{batches, uniform_init, EarlyStop, TrainLog};
use super::{LstmParams, ModelError};

pub const DENSE_LAYERS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayout {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
    dense: Vec<(ParamId, ParamId)>,
    out_w: ParamId,
    out_b: ParamId,
}

impl LstmLayout {
    pub fn of<T: Real>(params: &ParamSet<T>) -> Result<LstmLayout, ModelError> {
        let id = |n: &str| {
            params.id_of(n).ok_or_else(|| ModelError::Format(format!("lstm parameter '{n}' missing")))
        };
        let dense = (1..=DENSE_LAYERS)
            .map(|k| Ok((id(&format!("d{k}.w"))?, id(&format!("d{k}.b"))?)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(LstmLayout {
            wx: id("lstm.wx")?,
            wh: id("lstm.wh")?,
            b: id("lstm.b")?,
            dense,
            out_w: id("out.w")?,
            out_b: id("out.b")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    pub params: ParamSet<T>,
    layout: LstmLayout,
}

/// One unrolled step: activated gates and the cell state before and after.
struct Step<T> {
    gates: Tensor<T>,
    c_prev: Tensor<T>,
    c: Tensor<T>,
    h_prev: Tensor<T>,
}

pub struct LstmForward<T> {
    pub output: Vec<T>,
    steps: Vec<Step<T>>,
    /// Dense layer inputs and pre-activations.
    dense_in: Vec<Tensor<T>>,
    dense_pre: Vec<Tensor<T>>,
    last: Tensor<T>,
    branches: BranchTrace,
}

impl<T: Real> Lstm<T> {
    pub fn new<R: Rng>(input: usize, hidden: usize, dense: [usize; DENSE_LAYERS], out_bias: T, rng: &mut R) -> Self {
        let mut p = ParamSet::new();
        let add = |p: &mut ParamSet<T>, n: &str, kind, t| {
            p.add(n, kind, t).expect("fresh names");
        };
        add(&mut p, "lstm.wx", ParamKind::Weight, uniform_init(input, 4 * hidden, rng));
        add(&mut p, "lstm.wh", ParamKind::Weight, uniform_init(hidden, 4 * hidden, rng));
        let mut b = vec![T::zero(); 4 * hidden];
        // forget gate starts open
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = T::one());
        add(&mut p, "lstm.b", ParamKind::Bias, Tensor::from_vec(&[4 * hidden], b).expect("shape"));
        let mut fan_in = hidden;
        for (k, &w) in dense.iter().enumerate() {
            add(&mut p, &format!("d{}.w", k + 1), ParamKind::Weight, uniform_init(fan_in, w, rng));
            add(&mut p, &format!("d{}.b", k + 1), ParamKind::Bias, Tensor::zeros(&[w]));
            fan_in = w;
        }
        add(&mut p, "out.w", ParamKind::Weight, uniform_init(fan_in, 1, rng));
        add(&mut p, "out.b", ParamKind::Bias, Tensor::filled(&[1], out_bias));
        let layout = LstmLayout::of(&p).expect("layout of fresh parameters");
        Lstm { params: p, layout }
    }

    pub fn from_params(params: ParamSet<T>) -> Result<Self, ModelError> {
        let layout = LstmLayout::of(&params)?;
        Ok(Lstm { params, layout })
    }

    pub fn layout(&self) -> &LstmLayout {
        &self.layout
    }

    pub fn hidden(&self) -> usize {
        self.params.get(self.layout.wh).rows()
    }

    /// `window[t]` is the `n × d` input at step `t`, oldest first.
    pub fn predict(&self, window: &[Tensor<T>]) -> Vec<T> {
        forward(&self.layout, &self.params, window).output
    }

    /// Final hidden state and the gate activations of every step, for
    /// inspection.
    pub fn trace(&self, window: &[Tensor<T>]) -> (Tensor<T>, Vec<Tensor<T>>) {
        let f = forward(&self.layout, &self.params, window);
        let h = f.dense_in[0].clone();
        (h, f.steps.into_iter().map(|s| s.gates).collect())
    }
}

pub fn forward<T: Real>(layout: &LstmLayout, p: &ParamSet<T>, window: &[Tensor<T>]) -> LstmForward<T> {
    let one = T::one();
    let n = window[0].rows();
    let hd = p.get(layout.wh).rows();
    let mut h = Tensor::zeros(&[n, hd]);
    let mut c = Tensor::zeros(&[n, hd]);
    let mut steps = Vec::with_capacity(window.len());
    for x in window {
        let mut z = x.matmul(p.get(layout.wx));
        let zh = h.matmul(p.get(layout.wh));
        for (a, &b) in z.data_mut().iter_mut().zip(zh.data()) {
            *a += b;
        }
        z.add_row(p.get(layout.b).data());
        let mut c_new = Tensor::zeros(&[n, hd]);
        let mut h_new = Tensor::zeros(&[n, hd]);
        for r in 0..n {
            let zr = z.row_mut(r);
            for j in 0..hd {
                zr[j] = sigmoid(zr[j]);
                zr[hd + j] = sigmoid(zr[hd + j]);
                zr[2 * hd + j] = zr[2 * hd + j].tanh();
                zr[3 * hd + j] = sigmoid(zr[3 * hd + j]);
            }
            let zr = z.row(r);
            let cp = c.row(r);
            let cr = c_new.row_mut(r);
            for j in 0..hd {
                cr[j] = zr[hd + j] * cp[j] + zr[j] * zr[2 * hd + j];
            }
            let cr = c_new.row(r).to_vec();
            let hr = h_new.row_mut(r);
            for j in 0..hd {
                hr[j] = zr[3 * hd + j] * cr[j].tanh();
            }
        }
        steps.push(Step { gates: z, c_prev: c, c: c_new.clone(), h_prev: h });
        c = c_new;
        h = h_new;
    }

    let mut branches = BranchTrace::default();
    let mut a = h;
    let mut dense_in = Vec::with_capacity(DENSE_LAYERS);
    let mut dense_pre = Vec::with_capacity(DENSE_LAYERS);
    for &(w, b) in &layout.dense {
        let mut z = a.matmul(p.get(w));
        z.add_row(p.get(b).data());
        for &v in z.data() {
            branches.record(v > T::zero());
        }
        dense_in.push(a);
        a = z.map(|v| elu(v, one));
        dense_pre.push(z);
    }
    let mut out = a.matmul(p.get(layout.out_w));
    out.add_row(p.get(layout.out_b).data());
    LstmForward { output: out.into_data(), steps, dense_in, dense_pre, last: a, branches }
}

/// Backpropagation through the dense head and the whole unrolled window.
pub fn backward<T: Real>(
    layout: &LstmLayout,
    p: &ParamSet<T>,
    window: &[Tensor<T>],
    fwd: &LstmForward<T>,
    dout: &[T],
) -> ParamSet<T> {
    let one = T::one();
    let mut g = p.zeros_like();
    let d = Tensor::matrix(dout.len(), 1, dout.to_vec()).expect("column vector");
    g.set(layout.out_w, fwd.last.t_matmul(&d)).expect("shape");
    g.set(layout.out_b, Tensor::from_vec(&[1], d.sum_rows()).expect("shape")).expect("shape");
    let mut da = d.matmul_t(p.get(layout.out_w));
    for k in (0..layout.dense.len()).rev() {
        let (w, b) = layout.dense[k];
        for (dv, &z) in da.data_mut().iter_mut().zip(fwd.dense_pre[k].data()) {
            *dv *= d_elu(z, one);
        }
        g.set(w, fwd.dense_in[k].t_matmul(&da)).expect("shape");
        let width = da.cols();
        g.set(b, Tensor::from_vec(&[width], da.sum_rows()).expect("shape")).expect("shape");
        da = da.matmul_t(p.get(w));
    }

    let n = da.rows();
    let hd = da.cols();
    let mut dh = da;
    let mut dc = Tensor::zeros(&[n, hd]);
    let mut gwx = Tensor::zeros(p.get(layout.wx).shape());
    let mut gwh = Tensor::zeros(p.get(layout.wh).shape());
    let mut gb = vec![T::zero(); 4 * hd];
    for (t, s) in fwd.steps.iter().enumerate().rev() {
        let mut dz = Tensor::zeros(&[n, 4 * hd]);
        let mut dc_prev = Tensor::zeros(&[n, hd]);
        for r in 0..n {
            let gt = s.gates.row(r);
            let (cr, cpr) = (s.c.row(r), s.c_prev.row(r));
            let (dhr, dcr) = (dh.row(r), dc.row(r));
            let dzr = dz.row_mut(r);
            let mut dcp = vec![T::zero(); hd];
            for j in 0..hd {
                let (i, f, gg, o) = (gt[j], gt[hd + j], gt[2 * hd + j], gt[3 * hd + j]);
                let tc = cr[j].tanh();
                let d_o = dhr[j] * tc;
                let dcj = dcr[j] + dhr[j] * o * (one - tc * tc);
                dzr[j] = dcj * gg * i * (one - i);
                dzr[hd + j] = dcj * cpr[j] * f * (one - f);
                dzr[2 * hd + j] = dcj * i * (one - gg * gg);
                dzr[3 * hd + j] = d_o * o * (one - o);
                dcp[j] = dcj * f;
            }
            dc_prev.row_mut(r).copy_from_slice(&dcp);
        }
        let ax = window[t].t_matmul(&dz);
        let ah = s.h_prev.t_matmul(&dz);
        for (a, &b) in gwx.data_mut().iter_mut().zip(ax.data()) {
            *a += b;
        }
        for (a, &b) in gwh.data_mut().iter_mut().zip(ah.data()) {
            *a += b;
        }
        for (a, b) in gb.iter_mut().zip(dz.sum_rows()) {
            *a += b;
        }
        dh = dz.matmul_t(p.get(layout.wh));
        dc = dc_prev;
    }
    g.set(layout.wx, gwx).expect("shape");
    g.set(layout.wh, gwh).expect("shape");
    g.set(layout.b, Tensor::from_vec(&[4 * hd], gb).expect("shape")).expect("shape");
    g
}

/// MAPE over one fixed batch of windows, for gradient checking.
pub struct LstmObjective<'a, T> {
    pub layout: &'a LstmLayout,
    pub window: &'a [Tensor<T>],
    pub y: &'a [T],
}

impl<T: Real> Objective<T> for LstmObjective<'_, T> {
    fn evaluate(&self, p: &ParamSet<T>) -> Evaluation<T> {
        let f = forward(self.layout, p, self.window);
        let mut br = f.branches;
        for (&a, &b) in f.output.iter().zip(self.y) {
            br.record(a > b);
        }
        Evaluation { loss: mape_loss(self.y, &f.output).expect("matching lengths"), branches: br.finish() }
    }

    fn gradient(&self, p: &ParamSet<T>) -> (T, ParamSet<T>) {
        let f = forward(self.layout, p, self.window);
        let loss = mape_loss(self.y, &f.output).expect("matching lengths");
        let dout = mape_grad(self.y, &f.output).expect("matching lengths");
        (loss, backward(self.layout, p, self.window, &f, &dout))
    }
}

/// Sequence inputs: `steps[t]` holds step `t` of every sample, oldest first.
#[derive(Debug, Clone)]
pub struct Windows<T> {
    pub steps: Vec<Tensor<T>>,
}

impl<T: Real> Windows<T> {
    pub fn len(&self) -> usize {
        self.steps.first().map_or(0, |s| s.rows())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Vec<Tensor<T>> {
        self.steps.iter().map(|s| gather(s, rows)).collect()
    }
}

/// Mini-batch Adam on MAPE with early stopping on validation MAPE
/// (training MAPE if there are no validation windows).
pub fn train_lstm<T: Real>(
    x: &Windows<T>,
    y: &[T],
    x_val: &Windows<T>,
    y_val: &[T],
    params: &LstmParams,
    seed: u64,
) -> Result<(Lstm<T>, TrainLog), ModelError> {
    if x.is_empty() {
        return Err(ModelError::InsufficientData("lstm has no complete training windows".into()));
    }
    let d = x.steps[0].cols();
    let mut init = rng_for(seed, "lstm/init");
    let mut shuffle = rng_for(seed, "lstm/shuffle");
    let mean_y = y.iter().copied().sum::<T>() / T::from_usize_lossy(y.len());
    let mut net = Lstm::new(d, params.hidden, params.dense, mean_y, &mut init);
    let layout = net.layout.clone();
    let mut adam = AdamState::new(&net.params, params.adam);
    let (xv, yv) = if x_val.is_empty() { (x, y) } else { (x_val, y_val) };

    let mut stop = EarlyStop::new(params.patience, net.params.clone());
    let mut order: Vec<usize> = (0..x.len()).collect();
    for epoch in 0..params.epochs {
        order.shuffle(&mut shuffle);
        for (b, rows) in batches(&order, params.batch_size).enumerate() {
            let wb = x.select(rows);
            let yb: Vec<T> = rows.iter().map(|&r| y[r]).collect();
            let fwd = forward(&layout, &net.params, &wb);
            let loss = mape_loss(&yb, &fwd.output)?;
            if !loss.is_finite() {
                return Err(ModelError::NonFinite { epoch, batch: b, detail: format!("lstm loss {loss}") });
            }
            let dout = mape_grad(&yb, &fwd.output)?;
            let g = backward(&layout, &net.params, &wb, &fwd, &dout);
            adam_step(&mut net.params, &g, &mut adam)
                .map_err(|e| ModelError::NonFinite { epoch, batch: b, detail: e.to_string() })?;
        }
        let val = mape_loss(yv, &net.predict(&xv.steps))?.as_f64();
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn windows(n: usize, w: usize, d: usize, seed: u64) -> (Vec<Tensor<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps: Vec<Tensor<f64>> = (0..w)
            .map(|_| Tensor::matrix(n, d, (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap())
            .collect();
        let y = (0..n).map(|r| 3.0 + steps[w - 1].row(r)[0] - 0.5 * steps[0].row(r)[1]).collect();
        (steps, y)
    }

    #[test]
    fn gradient_through_ten_steps() {
        let (win, y) = windows(6, 10, 4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Lstm::<f64>::new(4, 6, [5, 4, 3], 1.0, &mut rng);
        let obj = LstmObjective { layout: net.layout(), window: &win, y: &y };
        let report = grad_check(&obj, &net.params, 200, &mut rng);
        assert_eq!(report.probes, 200);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn squashing_bounds() {
        let (mut win, _) = windows(8, 5, 3, 2);
        for v in win[2].data_mut() {
            *v *= 3.0;
        }
        let net = Lstm::<f64>::new(3, 7, [4, 4, 4], 0.0, &mut ChaCha8Rng::seed_from_u64(1));
        let (h, gates) = net.trace(&win);
        assert!(h.data().iter().all(|&v| v > -1.0 && v < 1.0));
        for g in gates {
            for r in 0..g.rows() {
                let row = g.row(r);
                for (j, &v) in row.iter().enumerate() {
                    if (14..21).contains(&j) {
                        assert!(v > -1.0 && v < 1.0);
                    } else {
                        assert!(v > 0.0 && v < 1.0, "gate {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn single_step_without_recurrence_is_feed_forward() {
        let (win, _) = windows(5, 1, 3, 7);
        let mut net = Lstm::<f64>::new(3, 4, [3, 3, 3], 0.5, &mut ChaCha8Rng::seed_from_u64(3));
        let wh = net.layout.wh;
        net.params.get_mut(wh).data_mut().iter_mut().for_each(|v| *v = 0.0);
        let p = &net.params;
        let hd = 4;
        // closed form: h = o·tanh(i·g) from the current input alone
        for r in 0..5 {
            let x = win[0].row(r);
            let mut z = vec![0.0; 4 * hd];
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = p.by_name("lstm.b").unwrap().data()[k]
                    + (0..3).map(|i| x[i] * p.by_name("lstm.wx").unwrap().at(i, k)).sum::<f64>();
            }
            let mut a: Vec<f64> = (0..hd)
                .map(|j| sigmoid(z[3 * hd + j]) * (sigmoid(z[j]) * z[2 * hd + j].tanh()).tanh())
                .collect();
            for k in 1..=3 {
                let w = p.by_name(&format!("d{k}.w")).unwrap();
                let b = p.by_name(&format!("d{k}.b")).unwrap();
                a = (0..w.cols())
                    .map(|o| elu(b.data()[o] + a.iter().enumerate().map(|(i, v)| v * w.at(i, o)).sum::<f64>(), 1.0))
                    .collect();
            }
            let w = p.by_name("out.w").unwrap();
            let expect = p.by_name("out.b").unwrap().data()[0] + a.iter().enumerate().map(|(i, v)| v * w.at(i, 0)).sum::<f64>();
            let got = net.predict(&[gather(&win[0], &[r])])[0];
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn training_reduces_error_and_is_deterministic() {
        let (win, y) = windows(64, 4, 3, 5);
        let x = Windows { steps: win };
        let p = LstmParams { lookback: 4, hidden: 8, dense: [8, 8, 4], batch_size: 16, epochs: 60, patience: 60, ..Default::default() };
        let (a, log) = train_lstm(&x, &y, &x, &y, &p, 2).unwrap();
        let (b, _) = train_lstm(&x, &y, &x, &y, &p, 2).unwrap();
        assert_eq!(a, b);
        let base: f64 = y.iter().map(|v| (v - 3.0).abs() / v.abs()).sum::<f64>() / y.len() as f64;
        assert!(log.best_val_mape < base, "{log:?} vs {base}");
    }
}
