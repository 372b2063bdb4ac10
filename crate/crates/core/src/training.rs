//! Adam training under the acceleration and next-state losses, plus rollout
//! evaluation against the ground-truth oracles.

use std::time::{Duration, Instant};

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{SplitDataset, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::integrate::{rollout, ModelField};
use crate::mlp::MlpParams;
use crate::models::{derive_seed, Model, ModelKind};
use crate::oracles::{State, System, SystemParams};
use crate::scalar::Float;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Acceleration,
    NextState,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Acceleration => "acceleration",
            LossKind::NextState => "next_state",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss_kind: LossKind,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 1000,
            epochs: 300,
            loss_kind: LossKind::Acceleration,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be at least 1".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, one set per network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<MlpParams<T>>,
    pub v: Vec<MlpParams<T>>,
    pub step: u64,
}

impl<T: Float> AdamState<T> {
    pub fn new(model: &Model<T>) -> Self {
        AdamState { m: model.zero_grads(), v: model.zero_grads(), step: 0 }
    }
}

/// One bias-corrected Adam update of every network in `model`.
pub fn adam_step<T: Float>(model: &mut Model<T>, grads: &[MlpParams<T>], state: &mut AdamState<T>, cfg: &TrainConfig) {
    state.step += 1;
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let one = T::one();
    let c1 = one / (one - b1.powi(state.step as u32));
    let c2 = one / (one - b2.powi(state.step as u32));
    let lr = T::from_f64(cfg.learning_rate);
    let eps = T::from_f64(cfg.epsilon);
    for (k, params) in model.nets_mut().into_iter().enumerate() {
        let blocks = params.blocks_mut().into_iter();
        let g = grads[k].blocks().into_iter();
        let m = state.m[k].blocks_mut().into_iter();
        let v = state.v[k].blocks_mut().into_iter();
        for (((p, (_, g)), m), v) in blocks.zip(g).zip(m).zip(v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] * c1) / ((v[i] * c2).sqrt() + eps);
            }
        }
    }
}

/// Columns of training pairs: phase-space inputs and targets.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    /// `2N × B` states at `t`.
    pub x: Array2<T>,
    /// `2N × B` recorded next states.
    pub x_next: Array2<T>,
    /// `N × B` acceleration labels.
    pub qddot: Array2<T>,
    pub h: T,
}

impl<T: Float> Batch<T> {
    pub fn from_dataset(ds: &TrajectoryDataset, indices: &[usize]) -> Self {
        let n = ds.dof();
        let b = indices.len();
        let mut x = Array2::zeros((2 * n, b));
        let mut x_next = Array2::zeros((2 * n, b));
        let mut qddot = Array2::zeros((n, b));
        for (c, &i) in indices.iter().enumerate() {
            let p = &ds.pairs[i];
            for (r, v) in p.x.phase().into_iter().enumerate() {
                x[[r, c]] = T::from_f64(v);
            }
            for (r, v) in p.x_next.phase().into_iter().enumerate() {
                x_next[[r, c]] = T::from_f64(v);
            }
            for r in 0..n {
                qddot[[r, c]] = T::from_f64(p.qddot[r]);
            }
        }
        Batch { x, x_next, qddot, h: T::from_f64(ds.h) }
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A loss value with its parameter gradient.
#[derive(Clone, Debug)]
pub struct LossGrad<T> {
    pub loss: T,
    pub grads: Vec<MlpParams<T>>,
    /// Samples left out because a mass matrix was singular.
    pub singular: usize,
}

fn check_batch<T: Float>(model: &Model<T>, batch: &Batch<T>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let n = model.dof();
    if batch.x.nrows() != 2 * n {
        return Err(Error::Dimension { what: "batch state rows", expected: 2 * n, got: batch.x.nrows() });
    }
    Ok(())
}

/// `(1/|S|) Σ ‖q̈_model − q̈‖²` over the non-singular samples.
pub fn loss_accel<T: Float>(model: &Model<T>, batch: &Batch<T>) -> Result<(T, usize)> {
    check_batch(model, batch)?;
    let (a, tape) = model.accel_batch(batch.x.view())?;
    let mask = keep_mask(batch.len(), &tape.singular());
    Ok((masked_mse(a.view(), batch.qddot.view(), &mask), batch.len() - count(&mask)))
}

pub fn loss_accel_grad<T: Float>(model: &Model<T>, batch: &Batch<T>) -> Result<LossGrad<T>> {
    check_batch(model, batch)?;
    let (a, tape) = model.accel_batch(batch.x.view())?;
    let mask = keep_mask(batch.len(), &tape.singular());
    let loss = masked_mse(a.view(), batch.qddot.view(), &mask);
    let a_bar = mse_adjoint(a.view(), batch.qddot.view(), &mask);
    let (grads, _) = model.accel_backward(&tape, a_bar.view(), false);
    Ok(LossGrad { loss, grads, singular: batch.len() - count(&mask) })
}

/// `(1/|S|) Σ ‖x̃ − x_next‖²` where `x̃` is one RK4 step of the model's
/// phase-space field from `x` with the batch step size.
pub fn loss_next_state<T: Float>(model: &Model<T>, batch: &Batch<T>) -> Result<(T, usize)> {
    check_batch(model, batch)?;
    let fwd = Rk4Forward::run(model, batch.x.view(), batch.h)?;
    let mask = fwd.mask();
    Ok((masked_mse(fwd.out.view(), batch.x_next.view(), &mask), batch.len() - count(&mask)))
}

pub fn loss_next_state_grad<T: Float>(model: &Model<T>, batch: &Batch<T>) -> Result<LossGrad<T>> {
    check_batch(model, batch)?;
    let fwd = Rk4Forward::run(model, batch.x.view(), batch.h)?;
    let mask = fwd.mask();
    let loss = masked_mse(fwd.out.view(), batch.x_next.view(), &mask);
    let out_bar = mse_adjoint(fwd.out.view(), batch.x_next.view(), &mask);
    let grads = fwd.backward(model, out_bar);
    Ok(LossGrad { loss, grads, singular: batch.len() - count(&mask) })
}

pub fn loss<T: Float>(kind: LossKind, model: &Model<T>, batch: &Batch<T>) -> Result<(T, usize)> {
    match kind {
        LossKind::Acceleration => loss_accel(model, batch),
        LossKind::NextState => loss_next_state(model, batch),
    }
}

pub fn loss_grad<T: Float>(kind: LossKind, model: &Model<T>, batch: &Batch<T>) -> Result<LossGrad<T>> {
    match kind {
        LossKind::Acceleration => loss_accel_grad(model, batch),
        LossKind::NextState => loss_next_state_grad(model, batch),
    }
}

/// Stages of a batched RK4 step kept for the reverse pass.
struct Rk4Forward<T> {
    h: T,
    n: usize,
    tapes: Vec<crate::models::AccelTape<T>>,
    out: Array2<T>,
    singular: Vec<bool>,
}

impl<T: Float> Rk4Forward<T> {
    fn run(model: &Model<T>, x: ArrayView2<T>, h: T) -> Result<Self> {
        let n = model.dof();
        let half = h * T::from_f64(0.5);
        let mut singular = vec![false; x.ncols()];
        let mut tapes = Vec::with_capacity(4);
        let mut stage = |xs: ArrayView2<T>| -> Result<Array2<T>> {
            let (a, tape) = model.accel_batch(xs)?;
            for i in tape.singular() {
                singular[i] = true;
            }
            tapes.push(tape);
            let mut k = Array2::zeros(xs.raw_dim());
            k.slice_mut(s![..n, ..]).assign(&xs.slice(s![n.., ..]));
            k.slice_mut(s![n.., ..]).assign(&a);
            Ok(k)
        };
        let k1 = stage(x)?;
        let k2 = stage((&x + &(&k1 * half)).view())?;
        let k3 = stage((&x + &(&k2 * half)).view())?;
        let k4 = stage((&x + &(&k3 * h)).view())?;
        let two = T::from_f64(2.0);
        let out = &x + &((k1 + &(k2 * two) + &(k3 * two) + &k4) * (h / T::from_f64(6.0)));
        Ok(Rk4Forward { h, n, tapes, out, singular })
    }

    fn mask(&self) -> Vec<bool> {
        self.singular.iter().map(|&s| !s).collect()
    }

    /// Parameter gradient given the adjoint of the stepped state.
    fn backward(&self, model: &Model<T>, out_bar: Array2<T>) -> Vec<MlpParams<T>> {
        let h = self.h;
        let sixth = h / T::from_f64(6.0);
        let third = h / T::from_f64(3.0);
        let half = h * T::from_f64(0.5);
        let mut grads = model.zero_grads();
        // adjoint of each stage input given the adjoint of its slope
        let mut stage_back = |k: usize, k_bar: Array2<T>| -> Array2<T> {
            let n = self.n;
            let (g, xb) = model.accel_backward(&self.tapes[k], k_bar.slice(s![n.., ..]), true);
            for (acc, g) in grads.iter_mut().zip(&g) {
                acc.add_scaled(g, T::one());
            }
            let mut xb = xb.expect("input adjoint requested");
            let mut pos = xb.slice_mut(s![n.., ..]);
            pos += &k_bar.slice(s![..n, ..]);
            xb
        };
        let x4_bar = stage_back(3, &out_bar * sixth);
        let x3_bar = stage_back(2, &out_bar * third + &(x4_bar * h));
        let x2_bar = stage_back(1, &out_bar * third + &(x3_bar * half));
        stage_back(0, &out_bar * sixth + &(x2_bar * half));
        grads
    }
}

fn keep_mask(b: usize, singular: &[usize]) -> Vec<bool> {
    let mut m = vec![true; b];
    for &i in singular {
        m[i] = false;
    }
    m
}

fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&k| k).count()
}

fn masked_mse<T: Float>(pred: ArrayView2<T>, target: ArrayView2<T>, mask: &[bool]) -> T {
    let kept = count(mask);
    if kept == 0 {
        return T::zero();
    }
    let mut total = T::zero();
    for (s, col) in pred.axis_iter(Axis(1)).enumerate() {
        if mask[s] {
            for (r, &p) in col.iter().enumerate() {
                let d = p - target[[r, s]];
                total += d * d;
            }
        }
    }
    total / T::from_f64(kept as f64)
}

fn mse_adjoint<T: Float>(pred: ArrayView2<T>, target: ArrayView2<T>, mask: &[bool]) -> Array2<T> {
    let kept = count(mask).max(1);
    let scale = T::from_f64(2.0 / kept as f64);
    let mut bar = Array2::zeros(pred.raw_dim());
    for ((r, s), b) in bar.indexed_iter_mut() {
        if mask[s] {
            *b = scale * (pred[[r, s]] - target[[r, s]]);
        }
    }
    bar
}

/// Mean loss of `kind` over `indices`, evaluated in chunks of `chunk`.
pub fn dataset_loss<T: Float>(
    kind: LossKind,
    model: &Model<T>,
    ds: &TrajectoryDataset,
    indices: &[usize],
    chunk: usize,
) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut kept = 0usize;
    let mut singular = 0usize;
    for part in indices.chunks(chunk.max(1)) {
        let batch = Batch::<T>::from_dataset(ds, part);
        let (l, sing) = loss(kind, model, &batch)?;
        let k = part.len() - sing;
        total += l.value() * k as f64;
        kept += k;
        singular += sing;
    }
    Ok((if kept == 0 { 0.0 } else { total / kept as f64 }, singular))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub model_kind: ModelKind,
    pub loss_kind: LossKind,
    pub epochs: usize,
    pub optimizer_steps: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Mean minibatch loss per epoch.
    pub train_loss: Vec<f64>,
    /// Test loss after each epoch; absent when the test set is empty.
    pub test_loss: Vec<Option<f64>>,
    pub final_train_accel_mse: f64,
    pub final_test_accel_mse: Option<f64>,
    /// Sample evaluations skipped because of a singular mass matrix.
    pub singular_count: usize,
    /// Not serialized so that metrics files are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Trains `model` in place on `split.train`.
pub fn train<T: Float>(
    model: &mut Model<T>,
    ds: &TrajectoryDataset,
    split: &SplitDataset,
    cfg: &TrainConfig,
) -> Result<Metrics> {
    cfg.validate()?;
    if model.dof() != ds.dof() {
        return Err(Error::Dimension { what: "model degrees of freedom", expected: ds.dof(), got: model.dof() });
    }
    if split.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if let Some(&bad) = split.train.iter().chain(&split.test).find(|&&i| i >= ds.len()) {
        return Err(Error::Consistency(format!("split index {bad} outside dataset of {} pairs", ds.len())));
    }
    let start = Instant::now();
    let mut adam = AdamState::new(model);
    let mut order = split.train.clone();
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut test_loss = Vec::with_capacity(cfg.epochs);
    let mut singular_count = 0usize;
    for epoch in 0..cfg.epochs {
        order.copy_from_slice(&split.train);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64)));
        let mut sum = 0.0;
        let mut weight = 0usize;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::<T>::from_dataset(ds, idx);
            let lg = loss_grad(cfg.loss_kind, model, &batch)?;
            let l = lg.loss.value();
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            for (k, g) in lg.grads.iter().enumerate() {
                if let Some(block) = g.first_non_finite_block() {
                    return Err(Error::NonFiniteGradient { block: format!("{}.{block}", model.net_names()[k]) });
                }
            }
            singular_count += lg.singular;
            sum += l * idx.len() as f64;
            weight += idx.len();
            adam_step(model, &lg.grads, &mut adam, cfg);
        }
        train_loss.push(sum / weight as f64);
        test_loss.push(if split.test.is_empty() {
            None
        } else {
            let (l, sing) = dataset_loss(cfg.loss_kind, model, ds, &split.test, cfg.batch_size)?;
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX });
            }
            singular_count += sing;
            Some(l)
        });
    }
    let (final_train, s1) = dataset_loss(LossKind::Acceleration, model, ds, &split.train, cfg.batch_size)?;
    let final_test = if split.test.is_empty() {
        None
    } else {
        let (l, s2) = dataset_loss(LossKind::Acceleration, model, ds, &split.test, cfg.batch_size)?;
        singular_count += s2;
        Some(l)
    };
    Ok(Metrics {
        model_kind: model.kind(),
        loss_kind: cfg.loss_kind,
        epochs: cfg.epochs,
        optimizer_steps: adam.step,
        n_train: split.train.len(),
        n_test: split.test.len(),
        train_loss,
        test_loss,
        final_train_accel_mse: final_train,
        final_test_accel_mse: final_test,
        singular_count: singular_count + s1,
        wall_time: start.elapsed(),
    })
}

/// Rollout of the model against the oracle from one initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub init: Vec<f64>,
    pub times: Vec<f64>,
    pub truth_q: Vec<Vec<f64>>,
    pub pred_q: Vec<Vec<f64>>,
    pub truth_energy: Vec<f64>,
    pub pred_energy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub horizon: f64,
    pub h: f64,
    pub curves: Vec<Curve>,
    /// Position MSE at each time, averaged over coordinates and initial states.
    pub position_mse: Vec<f64>,
    /// `(E_pred − E_true)²` at each time, averaged over initial states.
    pub energy_mse: Vec<f64>,
    pub position_mse_mean: f64,
    pub energy_mse_mean: f64,
}

/// Rolls out the model (one RK4 step per `h`) and the oracle (ten substeps)
/// from each initial phase-space point up to `horizon`. Predicted energy is
/// the oracle energy of the predicted state.
pub fn evaluate(model: &Model<f64>, system: &SystemParams, inits: &[Vec<f64>], horizon: f64, h: f64) -> Result<Evaluation> {
    system.validate()?;
    let n = system.dof();
    if model.dof() != n {
        return Err(Error::Dimension { what: "model degrees of freedom", expected: n, got: model.dof() });
    }
    if inits.is_empty() {
        return Err(Error::Config("at least one initial state is required".into()));
    }
    if !(horizon > 0.0 && h > 0.0 && horizon.is_finite()) {
        return Err(Error::Config("horizon and h must be positive".into()));
    }
    let n_steps = (horizon / h).round() as usize;
    if n_steps == 0 {
        return Err(Error::Config("horizon shorter than one step".into()));
    }
    let mut curves = Vec::with_capacity(inits.len());
    for (k, x0) in inits.iter().enumerate() {
        if x0.len() != 2 * n {
            return Err(Error::Dimension { what: "initial state", expected: 2 * n, got: x0.len() });
        }
        let s0 = State::from_phase(x0);
        let tag = |e: Error| match e {
            Error::Divergence { step, .. } => Error::Divergence { step, trajectory: Some(k) },
            other => other,
        };
        let truth = rollout(system, &s0, h, n_steps, 10).map_err(tag)?;
        let pred = rollout(&ModelField(model), &s0, h, n_steps, 1).map_err(tag)?;
        curves.push(Curve {
            init: x0.clone(),
            times: truth.times.clone(),
            truth_q: truth.states.iter().map(|s| s.q.0.clone()).collect(),
            pred_q: pred.states.iter().map(|s| s.q.0.clone()).collect(),
            truth_energy: truth.states.iter().map(|s| system.energy(s)).collect(),
            pred_energy: pred.states.iter().map(|s| system.energy(s)).collect(),
        });
    }
    let n_t = n_steps + 1;
    let n_c = curves.len() as f64;
    let position_mse: Vec<f64> = (0..n_t)
        .map(|t| {
            curves
                .iter()
                .map(|c| c.truth_q[t].iter().zip(&c.pred_q[t]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64)
                .sum::<f64>()
                / n_c
        })
        .collect();
    let energy_mse: Vec<f64> =
        (0..n_t).map(|t| curves.iter().map(|c| (c.truth_energy[t] - c.pred_energy[t]).powi(2)).sum::<f64>() / n_c).collect();
    Ok(Evaluation {
        horizon,
        h,
        position_mse_mean: position_mse.iter().sum::<f64>() / n_t as f64,
        energy_mse_mean: energy_mse.iter().sum::<f64>() / n_t as f64,
        position_mse,
        energy_mse,
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, split, GenerateConfig};
    use crate::mlp::Activation;
    use crate::models::ModelConfig;
    use crate::oracles::DampedHarmonicParams;

    fn model_cfg(kind: ModelKind, dof: usize) -> ModelConfig {
        ModelConfig {
            kind,
            dof,
            hidden_size: 8,
            n_hidden_layers: 2,
            lagrangian_activation: Activation::Softplus,
            force_activation: Activation::Tanh,
            ridge: 1e-6,
            seed: 3,
        }
    }

    fn zero_baseline() -> Model<f64> {
        let mut m = Model::<f64>::init(&model_cfg(ModelKind::Baseline, 1)).unwrap();
        for p in m.nets_mut() {
            *p = p.zeros_like();
        }
        m
    }

    fn toy_batch(b: usize, labels: f64, h: f64) -> Batch<f64> {
        Batch {
            x: Array2::from_shape_fn((2, b), |(r, c)| 0.1 * (r + 2 * c) as f64 - 0.3),
            x_next: Array2::from_shape_fn((2, b), |(r, c)| 0.05 * (3 * r + c) as f64),
            qddot: Array2::from_elem((1, b), labels),
            h,
        }
    }

    #[test]
    fn zero_baseline_against_minus_one() {
        let (l, sing) = loss_accel(&zero_baseline(), &toy_batch(5, -1.0, 0.1)).unwrap();
        assert_eq!((l, sing), (1.0, 0));
    }

    #[test]
    fn zero_step_next_state_is_data_mismatch() {
        let m = Model::<f64>::init(&model_cfg(ModelKind::Glnn, 1)).unwrap();
        let batch = toy_batch(4, 0.0, 0.0);
        let (l, _) = loss_next_state(&m, &batch).unwrap();
        let expected = (&batch.x - &batch.x_next).mapv(|d| d * d).sum() / 4.0;
        assert!((l - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut m = Model::<f64>::init(&model_cfg(ModelKind::Glnn, 1)).unwrap();
        let before = m.clone();
        let mut st = AdamState::new(&m);
        let g = m.zero_grads();
        adam_step(&mut m, &g, &mut st, &TrainConfig::default());
        assert_eq!(m, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_constant_gradient_steps_by_learning_rate() {
        let mut m = Model::<f64>::init(&model_cfg(ModelKind::Baseline, 1)).unwrap();
        let mut st = AdamState::new(&m);
        let mut g = m.zero_grads();
        let signs: Vec<f64> = (0..g[0].n_params()).map(|i| if i % 3 == 0 { -0.7 } else { 2.5 }).collect();
        g[0].set_flat(&signs);
        let cfg = TrainConfig::default();
        for _ in 0..200 {
            adam_step(&mut m, &g, &mut st, &cfg);
        }
        let before = m.nets()[0].flat();
        adam_step(&mut m, &g, &mut st, &cfg);
        for ((a, b), gi) in m.nets()[0].flat().iter().zip(&before).zip(&signs) {
            let step = a - b;
            assert!((step + cfg.learning_rate * gi.signum()).abs() < 1e-8 * cfg.learning_rate.max(1.0) + 1e-10);
        }
    }

    #[test]
    fn batch_columns_follow_indices() {
        let sys = SystemParams::Dho(DampedHarmonicParams::default());
        let ds = generate(&sys, &GenerateConfig { n_traj: 2, n_steps: 5, h: 0.05, init_low: -1.0, init_high: 1.0, substeps: 10 }, 0).unwrap();
        let idx: Vec<usize> = (0..ds.len()).collect();
        let b = Batch::<f64>::from_dataset(&ds, &idx);
        assert_eq!(b.len(), 10);
        assert_eq!(b.qddot[[0, 3]], ds.pairs[3].qddot[0]);
    }

    #[test]
    fn one_step_per_epoch_when_batch_covers_train() {
        let sys = SystemParams::Dho(DampedHarmonicParams::default());
        let ds = generate(&sys, &GenerateConfig { n_traj: 2, n_steps: 10, h: 0.05, init_low: -1.0, init_high: 1.0, substeps: 10 }, 1).unwrap();
        let sp = split(ds.len(), 0.5, 2).unwrap();
        let mut m = Model::<f64>::init(&model_cfg(ModelKind::Glnn, 1)).unwrap();
        let cfg = TrainConfig { epochs: 3, batch_size: sp.train.len(), ..TrainConfig::default() };
        let metrics = train(&mut m, &ds, &sp, &cfg).unwrap();
        assert_eq!(metrics.optimizer_steps, 3);
        assert_eq!(metrics.train_loss.len(), 3);
        assert!(metrics.test_loss.iter().all(|l| l.is_some()));
    }

    #[test]
    fn zero_baseline_rollout_is_free_flight() {
        let sys = SystemParams::Dho(DampedHarmonicParams::default());
        let ev = evaluate(&zero_baseline(), &sys, &[vec![1.0, 0.0]], 1.0, 0.05).unwrap();
        assert_eq!(ev.position_mse.len(), 21);
        // zero acceleration from rest: the prediction stays at q = 1
        let c = &ev.curves[0];
        assert!(c.pred_q.iter().all(|q| q[0] == 1.0));
        let expected: f64 = c.truth_q.iter().map(|q| (q[0] - 1.0).powi(2)).sum::<f64>() / 21.0;
        assert!((ev.position_mse_mean - expected).abs() < 1e-15);
    }
}
