//! Feedforward and LSTM regressors trained by backpropagation with momentum SGD.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step used by [`gradient_check`] for central differences.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative gradient error.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// A scalar-output network with a flat parameter vector.
pub trait Network: Clone {
    type Input;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Named slices of the parameter vector.
    fn tensors(&self) -> Vec<(String, Range<usize>)>;
    fn predict_one(&self, x: &Self::Input) -> f64;
    /// Adds `weight * d(ŷ - target)² / dθ` to `grad` and returns ŷ.
    fn backprop(&self, x: &Self::Input, target: f64, weight: f64, grad: &mut [f64]) -> f64;
}

pub fn mse<N: Network>(net: &N, xs: &[N::Input], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(x, y)| (net.predict_one(x) - y).powi(2)).sum::<f64>() / ys.len() as f64
}

/// Minibatch momentum SGD on mean squared error. Returns the full-sample
/// loss after every epoch.
pub fn train<N: Network>(net: &mut N, xs: &[N::Input], ys: &[f64], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    cfg.validate()?;
    if xs.len() != ys.len() || ys.is_empty() {
        return Err(Error::invalid(format!("{} inputs for {} targets", xs.len(), ys.len())));
    }
    let p = net.params().len();
    let mut velocity = vec![0.0; p];
    let mut grad = vec![0.0; p];
    let mut order: Vec<usize> = (0..ys.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let w = 1.0 / batch.len() as f64;
            for &i in batch {
                net.backprop(&xs[i], ys[i], w, &mut grad);
            }
            for ((theta, v), g) in net.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *theta += *v;
            }
        }
        let loss = mse(net, xs, ys);
        if !loss.is_finite() {
            return Err(Error::Divergence);
        }
        history.push(loss);
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub per_tensor: Vec<(String, f64)>,
}

/// Compares backprop gradients of the sample MSE with central differences.
pub fn gradient_check<N: Network>(net: &N, xs: &[N::Input], ys: &[f64]) -> GradCheck {
    let n = ys.len() as f64;
    let mut analytic = vec![0.0; net.params().len()];
    for (x, y) in xs.iter().zip(ys) {
        net.backprop(x, *y, 1.0 / n, &mut analytic);
    }
    let mut probe = net.clone();
    let mut per_tensor = Vec::new();
    for (name, range) in net.tensors() {
        let mut worst: f64 = 0.0;
        for k in range {
            let orig = probe.params()[k];
            probe.params_mut()[k] = orig + FD_STEP;
            let up = mse(&probe, xs, ys);
            probe.params_mut()[k] = orig - FD_STEP;
            let down = mse(&probe, xs, ys);
            probe.params_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
        per_tensor.push((name, worst));
    }
    let max_rel_error = per_tensor.iter().map(|t| t.1).fold(0.0, f64::max);
    GradCheck {
        max_rel_error,
        per_tensor,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => (z > 0.0) as u8 as f64,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![16, 8],
            activation: Activation::Relu,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    /// Input width, hidden widths, then 1.
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
    pub loss_history: Vec<f64>,
}

impl MlpNet {
    pub fn init(n_inputs: usize, hidden: &[usize], activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let mut sizes = vec![n_inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let gain = if activation == Activation::Relu { 2.0 } else { 1.0 };
            let sd = (gain / w[0].max(1) as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| sd * Distribution::<f64>::sample(&StandardNormal, rng)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        MlpNet {
            sizes,
            activation,
            params,
            loss_history: Vec::new(),
        }
    }

    /// (weight range, bias range) per layer; weights are row-major out × in.
    fn layout(&self) -> Vec<(Range<usize>, Range<usize>)> {
        let mut off = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let wr = off..off + w[0] * w[1];
                let br = wr.end..wr.end + w[1];
                off = br.end;
                (wr, br)
            })
            .collect()
    }

    /// Pre-activations and activations per layer.
    fn forward(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let layout = self.layout();
        let last = layout.len() - 1;
        let mut pre = Vec::with_capacity(layout.len());
        let mut act = vec![x.to_vec()];
        for (l, (wr, br)) in layout.iter().enumerate() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[wr.clone()];
            let b = &self.params[br.clone()];
            let input = &act[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|v| self.activation.apply(*v)).collect()
            };
            pre.push(z);
            act.push(a);
        }
        (pre, act)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.sizes[0] {
            return Err(Error::SchemaMismatch(format!(
                "network expects {} inputs, got {}",
                self.sizes[0],
                x.ncols()
            )));
        }
        Ok(matrix_rows(x).iter().map(|r| self.predict_one(r)).collect())
    }
}

impl Network for MlpNet {
    type Input = Vec<f64>;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn tensors(&self) -> Vec<(String, Range<usize>)> {
        self.layout()
            .into_iter()
            .enumerate()
            .flat_map(|(l, (w, b))| [(format!("w{l}"), w), (format!("b{l}"), b)])
            .collect()
    }

    fn predict_one(&self, x: &Vec<f64>) -> f64 {
        self.forward(x).1.last().unwrap()[0]
    }

    fn backprop(&self, x: &Vec<f64>, target: f64, weight: f64, grad: &mut [f64]) -> f64 {
        let (pre, act) = self.forward(x);
        let layout = self.layout();
        let yhat = act.last().unwrap()[0];
        let mut delta = vec![weight * 2.0 * (yhat - target)];
        for l in (0..layout.len()).rev() {
            let (wr, br) = &layout[l];
            let n_in = self.sizes[l];
            let input = &act[l];
            for (o, d) in delta.iter().enumerate() {
                grad[br.start + o] += d;
                let row = wr.start + o * n_in;
                for (i, a) in input.iter().enumerate() {
                    grad[row + i] += d * a;
                }
            }
            if l > 0 {
                let w = &self.params[wr.clone()];
                delta = (0..n_in)
                    .map(|i| {
                        let back: f64 = delta.iter().enumerate().map(|(o, d)| d * w[o * n_in + i]).sum();
                        back * self.activation.derivative(pre[l - 1][i])
                    })
                    .collect();
            }
        }
        yhat
    }
}

fn matrix_rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|r| x.row(r).iter().copied().collect()).collect()
}

pub fn mlp_fit(x: &DMatrix<f64>, y: &[f64], config: &MlpConfig) -> Result<MlpNet> {
    config.train.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    let mut net = MlpNet::init(x.ncols(), &config.hidden, config.activation, &mut rng);
    net.loss_history = train(&mut net, &matrix_rows(x), y, &config.train, &mut rng)?;
    Ok(net)
}

/// One input sequence: `T` rows of `input` values, oldest first.
pub type Sequence = Vec<Vec<f64>>;

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// New cell state from forget, input and candidate activations.
pub fn cell_update(forget: f64, input: f64, candidate: f64, c_prev: f64) -> f64 {
    forget * c_prev + input * candidate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub hidden: usize,
    pub n_timesteps: usize,
    pub n_models: usize,
    pub train: TrainConfig,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            hidden: 32,
            n_timesteps: 12,
            n_models: 10,
            train: TrainConfig {
                epochs: 100,
                learning_rate: 0.005,
                ..TrainConfig::default()
            },
        }
    }
}

/// Gate activations of one step, in the order input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub input: Vec<f64>,
    pub forget: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
}

struct StepCache {
    z: Vec<f64>,
    gates: Gates,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// A single LSTM network. Gate weights are a row-major `4H × (I + H + 1)`
/// block acting on `[x; h; 1]`, followed by the linear readout of the
/// final hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmMember {
    pub input: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl LstmMember {
    pub fn init(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let width = input + hidden + 1;
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut params: Vec<f64> = (0..4 * hidden * width + hidden)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        params.push(0.0);
        let mut m = LstmMember { input, hidden, params };
        for j in 0..hidden {
            let bias = m.gate_index(hidden + j, width - 1);
            m.params[bias] = 1.0;
        }
        m
    }

    fn width(&self) -> usize {
        self.input + self.hidden + 1
    }

    fn gate_len(&self) -> usize {
        4 * self.hidden * self.width()
    }

    /// Flat index of gate row `row`, column `col`.
    pub fn gate_index(&self, row: usize, col: usize) -> usize {
        row * self.width() + col
    }

    fn step_cached(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>, StepCache) {
        let hs = self.hidden;
        let width = self.width();
        let mut z = Vec::with_capacity(width);
        z.extend_from_slice(x);
        z.extend_from_slice(h);
        z.push(1.0);
        let w = &self.params[..self.gate_len()];
        let a: Vec<f64> = (0..4 * hs)
            .map(|r| w[r * width..(r + 1) * width].iter().zip(&z).map(|(p, v)| p * v).sum())
            .collect();
        let gates = Gates {
            input: a[..hs].iter().map(|v| sigmoid(*v)).collect(),
            forget: a[hs..2 * hs].iter().map(|v| sigmoid(*v)).collect(),
            candidate: a[2 * hs..3 * hs].iter().map(|v| v.tanh()).collect(),
            output: a[3 * hs..].iter().map(|v| sigmoid(*v)).collect(),
        };
        let c_new: Vec<f64> = (0..hs)
            .map(|j| cell_update(gates.forget[j], gates.input[j], gates.candidate[j], c[j]))
            .collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<f64> = (0..hs).map(|j| gates.output[j] * tanh_c[j]).collect();
        let cache = StepCache {
            z,
            gates,
            c_prev: c.to_vec(),
            tanh_c,
        };
        (h_new, c_new, cache)
    }

    /// One recurrence step: returns the new hidden state, cell state and gates.
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>, Gates) {
        let (h, c, cache) = self.step_cached(x, h, c);
        (h, c, cache.gates)
    }

    fn run(&self, seq: &Sequence) -> (Vec<f64>, Vec<StepCache>) {
        let mut h = vec![0.0; self.hidden];
        let mut c = vec![0.0; self.hidden];
        let mut caches = Vec::with_capacity(seq.len());
        for x in seq {
            let (hn, cn, cache) = self.step_cached(x, &h, &c);
            h = hn;
            c = cn;
            caches.push(cache);
        }
        (h, caches)
    }

    fn readout(&self, h: &[f64]) -> f64 {
        let off = self.gate_len();
        let w = &self.params[off..off + self.hidden];
        self.params[off + self.hidden] + w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl Network for LstmMember {
    type Input = Sequence;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn tensors(&self) -> Vec<(String, Range<usize>)> {
        let g = self.gate_len();
        let w = self.width();
        let mut out: Vec<(String, Range<usize>)> = ["input_gate", "forget_gate", "candidate", "output_gate"]
            .iter()
            .enumerate()
            .map(|(k, name)| (name.to_string(), k * self.hidden * w..(k + 1) * self.hidden * w))
            .collect();
        out.push(("readout_w".into(), g..g + self.hidden));
        out.push(("readout_b".into(), g + self.hidden..g + self.hidden + 1));
        out
    }

    fn predict_one(&self, x: &Sequence) -> f64 {
        self.readout(&self.run(x).0)
    }

    fn backprop(&self, seq: &Sequence, target: f64, weight: f64, grad: &mut [f64]) -> f64 {
        let hs = self.hidden;
        let width = self.width();
        let g_len = self.gate_len();
        let (h_last, caches) = self.run(seq);
        let yhat = self.readout(&h_last);
        let dy = weight * 2.0 * (yhat - target);
        for j in 0..hs {
            grad[g_len + j] += dy * h_last[j];
        }
        grad[g_len + hs] += dy;
        let w_out = &self.params[g_len..g_len + hs];
        let mut dh: Vec<f64> = w_out.iter().map(|w| dy * w).collect();
        let mut dc = vec![0.0; hs];
        let w = &self.params[..g_len];
        let mut da = vec![0.0; 4 * hs];
        for cache in caches.iter().rev() {
            let g = &cache.gates;
            for j in 0..hs {
                let tc = cache.tanh_c[j];
                let d_out = dh[j] * tc;
                dc[j] += dh[j] * g.output[j] * (1.0 - tc * tc);
                let d_in = dc[j] * g.candidate[j];
                let d_cand = dc[j] * g.input[j];
                let d_forget = dc[j] * cache.c_prev[j];
                da[j] = d_in * g.input[j] * (1.0 - g.input[j]);
                da[hs + j] = d_forget * g.forget[j] * (1.0 - g.forget[j]);
                da[2 * hs + j] = d_cand * (1.0 - g.candidate[j] * g.candidate[j]);
                da[3 * hs + j] = d_out * g.output[j] * (1.0 - g.output[j]);
                dc[j] *= g.forget[j];
            }
            let mut dz = vec![0.0; width];
            for (r, d) in da.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = r * width;
                for (k, zk) in cache.z.iter().enumerate() {
                    grad[row + k] += d * zk;
                    dz[k] += d * w[row + k];
                }
            }
            dh.copy_from_slice(&dz[self.input..self.input + hs]);
        }
        yhat
    }
}

/// Seed-averaged LSTM ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNet {
    pub config: LstmConfig,
    pub members: Vec<LstmMember>,
}

impl LstmNet {
    /// Member predictions are summed in sorted order so the result does not
    /// depend on member order.
    pub fn predict_one(&self, seq: &Sequence) -> f64 {
        let mut preds: Vec<f64> = self.members.iter().map(|m| m.predict_one(seq)).collect();
        preds.sort_by(f64::total_cmp);
        preds.iter().sum::<f64>() / preds.len() as f64
    }

    pub fn predict(&self, seqs: &[Sequence]) -> Result<Vec<f64>> {
        seqs.iter()
            .map(|s| {
                check_sequence(s, self.config.n_timesteps, self.members[0].input)?;
                Ok(self.predict_one(s))
            })
            .collect()
    }
}

fn check_sequence(seq: &Sequence, t: usize, input: usize) -> Result<()> {
    if seq.len() != t || seq.iter().any(|r| r.len() != input) {
        return Err(Error::SchemaMismatch(format!("expected {t} steps of {input} inputs")));
    }
    Ok(())
}

/// Trains ensemble member `index` on its own random stream.
pub fn lstm_fit_member(seqs: &[Sequence], y: &[f64], config: &LstmConfig, index: usize) -> Result<LstmMember> {
    let input = seqs.first().and_then(|s| s.first()).map_or(0, Vec::len);
    for s in seqs {
        check_sequence(s, config.n_timesteps, input)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    rng.set_stream(index as u64);
    let mut member = LstmMember::init(input, config.hidden, &mut rng);
    train(&mut member, seqs, y, &config.train, &mut rng)?;
    Ok(member)
}

pub fn lstm_fit(seqs: &[Sequence], y: &[f64], config: &LstmConfig) -> Result<LstmNet> {
    if config.n_models == 0 || config.hidden == 0 || config.n_timesteps == 0 {
        return Err(Error::invalid("LSTM needs hidden, n_timesteps and n_models ≥ 1"));
    }
    config.train.validate()?;
    let members = (0..config.n_models)
        .into_par_iter()
        .map(|m| lstm_fit_member(seqs, y, config, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(LstmNet {
        config: config.clone(),
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r2(y: &[f64], p: &[f64]) -> f64 {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        let ss: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
        1.0 - y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ss
    }

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn linear_data(seed: u64, n: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 3, |_, _| normal(&mut rng));
        let y = (0..n).map(|r| 0.5 + x[(r, 0)] - 2.0 * x[(r, 1)] + 0.3 * x[(r, 2)]).collect();
        (x, y)
    }

    #[test]
    fn mlp_learns_linear_map() {
        let (x, y) = linear_data(1, 300);
        let (xt, yt) = linear_data(2, 100);
        let cfg = MlpConfig {
            hidden: vec![8],
            train: TrainConfig {
                epochs: 150,
                ..TrainConfig::default()
            },
            ..MlpConfig::default()
        };
        let net = mlp_fit(&x, &y, &cfg).unwrap();
        assert!(r2(&yt, &net.predict(&xt).unwrap()) > 0.95);
        assert_eq!(net, mlp_fit(&x, &y, &cfg).unwrap());
        assert!(net.predict(&DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn zero_step_leaves_initialization() {
        let (x, y) = linear_data(3, 40);
        let cfg = MlpConfig {
            train: TrainConfig {
                epochs: 1,
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            ..MlpConfig::default()
        };
        let net = mlp_fit(&x, &y, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let init = MlpNet::init(3, &cfg.hidden, cfg.activation, &mut rng);
        assert_eq!(net.params, init.params);
        assert_eq!(net.loss_history[0], mse(&init, &matrix_rows(&x), &y));
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = linear_data(4, 40);
        let cfg = MlpConfig {
            hidden: vec![],
            activation: Activation::Identity,
            train: TrainConfig {
                learning_rate: 1e3,
                ..TrainConfig::default()
            },
        };
        assert!(matches!(mlp_fit(&x, &y, &cfg), Err(Error::Divergence)));
    }

    #[test]
    fn convex_loss_non_increasing() {
        let (x, y) = linear_data(5, 50);
        let cfg = MlpConfig {
            hidden: vec![],
            activation: Activation::Identity,
            train: TrainConfig {
                epochs: 100,
                learning_rate: 0.01,
                momentum: 0.0,
                batch_size: 50,
                seed: 0,
            },
        };
        let net = mlp_fit(&x, &y, &cfg).unwrap();
        for w in net.loss_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn gradient_checks() {
        let (x, y) = linear_data(6, 8);
        let xs = matrix_rows(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let linear = MlpNet::init(3, &[], Activation::Identity, &mut rng);
        let lin = gradient_check(&linear, &xs, &y);
        assert!(lin.max_rel_error < 1e-9, "{lin:?}");

        let mut mlp = MlpNet::init(3, &[5, 4], Activation::Relu, &mut rng);
        mlp.params.iter_mut().for_each(|p| *p = normal(&mut rng));
        let check = gradient_check(&mlp, &xs, &y);
        assert_eq!(check.per_tensor.len(), 6);
        for (name, err) in &check.per_tensor {
            assert!(*err < 1e-4, "{name}: {err}");
        }

        let lstm = LstmMember::init(2, 3, &mut rng);
        let seqs: Vec<Sequence> = (0..3)
            .map(|_| (0..4).map(|_| vec![normal(&mut rng), normal(&mut rng)]).collect())
            .collect();
        let targets = [0.3, -0.5, 1.0];
        let check = gradient_check(&lstm, &seqs, &targets);
        assert_eq!(check.per_tensor.len(), 6);
        for (name, err) in &check.per_tensor {
            assert!(*err < 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn open_forget_closed_input_keeps_cell() {
        let mut m = LstmMember {
            input: 2,
            hidden: 3,
            params: vec![0.0; 4 * 3 * 6 + 4],
        };
        for j in 0..3 {
            let ib = m.gate_index(j, 5);
            let fb = m.gate_index(3 + j, 5);
            m.params[ib] = -1e3;
            m.params[fb] = 1e3;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c0 = vec![0.4, -1.2, 2.0];
        let mut h = vec![0.1, 0.2, 0.3];
        let mut c = c0.clone();
        for _ in 0..5 {
            let x = [normal(&mut rng), normal(&mut rng)];
            let (hn, cn, gates) = m.step(&x, &h, &c);
            assert!(gates.forget.iter().all(|v| *v == 1.0));
            assert!(gates.input.iter().all(|v| *v == 0.0));
            h = hn;
            c = cn;
        }
        assert_eq!(c, c0);
    }

    fn mean_last3(seed: u64, n: usize, t: usize, noise: f64) -> (Vec<Sequence>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seqs: Vec<Sequence> = (0..n).map(|_| (0..t).map(|_| vec![normal(&mut rng)]).collect()).collect();
        let y = seqs
            .iter()
            .map(|s| s[t - 3..].iter().map(|r| r[0]).sum::<f64>() / 3.0 + noise * normal(&mut rng))
            .collect();
        (seqs, y)
    }

    #[test]
    fn lstm_learns_recent_mean() {
        let (seqs, y) = mean_last3(9, 300, 6, 0.0);
        let (st, yt) = mean_last3(10, 100, 6, 0.0);
        let cfg = LstmConfig {
            hidden: 8,
            n_timesteps: 6,
            n_models: 2,
            train: TrainConfig {
                epochs: 60,
                learning_rate: 0.01,
                ..TrainConfig::default()
            },
        };
        let net = lstm_fit(&seqs, &y, &cfg).unwrap();
        let score = r2(&yt, &net.predict(&st).unwrap());
        assert!(score > 0.9, "R² = {score}");
    }

    #[test]
    fn ensemble_reduces_variance_and_ignores_order() {
        let (seqs, y) = mean_last3(11, 60, 4, 0.5);
        let (st, _) = mean_last3(12, 20, 4, 0.0);
        let base = LstmConfig {
            hidden: 4,
            n_timesteps: 4,
            n_models: 1,
            train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
        };
        let spread = |m: usize| {
            let preds: Vec<Vec<f64>> = (0..10)
                .map(|r| {
                    let cfg = LstmConfig {
                        n_models: m,
                        train: TrainConfig {
                            seed: 1000 + r,
                            ..base.train
                        },
                        ..base.clone()
                    };
                    lstm_fit(&seqs, &y, &cfg).unwrap().predict(&st).unwrap()
                })
                .collect();
            (0..st.len())
                .map(|i| {
                    let col: Vec<f64> = preds.iter().map(|p| p[i]).collect();
                    crate::linalg::variance(&col)
                })
                .sum::<f64>()
        };
        assert!(spread(10) < spread(1));

        let cfg = LstmConfig { n_models: 4, ..base };
        let net = lstm_fit(&seqs, &y, &cfg).unwrap();
        let mut reversed: Vec<LstmMember> = (0..4)
            .rev()
            .map(|m| lstm_fit_member(&seqs, &y, &cfg, m).unwrap())
            .collect();
        let shuffled = LstmNet {
            config: cfg.clone(),
            members: reversed.clone(),
        };
        assert_eq!(net.predict(&st).unwrap(), shuffled.predict(&st).unwrap());
        reversed.reverse();
        assert_eq!(reversed, net.members);
    }
}
