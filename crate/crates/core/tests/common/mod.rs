//! Independent reference implementations shared by the derivative checks.
//!
//! The exact losses below go through nested forward-mode duals and the
//! generic single-sample code paths, never through the batched jet kernels.

#![allow(dead_code)]

use glnn::autodiff::{ParamLoss, ScalarFn};
use glnn::integrate::{rk4_step, FnField};
use glnn::mlp::{Activation, MlpParams};
use glnn::models::{generalized_accel, Model, ModelConfig, ModelKind};
use glnn::oracles::State;
use glnn::training::Batch;
use glnn::Real;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Acceleration of either model family from raw parameters, generic over
/// the scalar type.
fn accel_generic<S: Real>(kind: ModelKind, params: &[MlpParams<S>], ridge: S, q: &[S], qdot: &[S]) -> Vec<S> {
    match kind {
        ModelKind::Glnn => generalized_accel(&params[0], &params[1], q, qdot, ridge)
            .expect("non-singular reference state")
            .0,
        ModelKind::Baseline => {
            let x: Vec<S> = q.iter().chain(qdot).copied().collect();
            params[0].eval(&x)
        }
    }
}

/// Columns of a batch as plain vectors.
fn columns(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.columns().into_iter().map(|c| c.to_vec()).collect()
}

pub struct ExactAccelLoss {
    pub kind: ModelKind,
    pub ridge: f64,
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<Vec<f64>>,
}

impl ExactAccelLoss {
    pub fn new(kind: ModelKind, ridge: f64, batch: &Batch<f64>) -> Self {
        ExactAccelLoss { kind, ridge, x: columns(&batch.x), labels: columns(&batch.qddot) }
    }
}

impl ParamLoss<f64> for ExactAccelLoss {
    fn eval<S: Real>(&self, params: &[MlpParams<S>], lift: impl Fn(f64) -> S + Copy) -> S {
        let mut total = S::zero();
        for (x, y) in self.x.iter().zip(&self.labels) {
            let xs: Vec<S> = x.iter().map(|&v| lift(v)).collect();
            let n = xs.len() / 2;
            let a = accel_generic(self.kind, params, lift(self.ridge), &xs[..n], &xs[n..]);
            for (ai, &yi) in a.iter().zip(y) {
                let d = *ai - lift(yi);
                total += d * d;
            }
        }
        total / lift(self.x.len() as f64)
    }
}

pub struct ExactNextStateLoss {
    pub kind: ModelKind,
    pub ridge: f64,
    pub h: f64,
    pub x: Vec<Vec<f64>>,
    pub x_next: Vec<Vec<f64>>,
}

impl ExactNextStateLoss {
    pub fn new(kind: ModelKind, ridge: f64, batch: &Batch<f64>) -> Self {
        ExactNextStateLoss { kind, ridge, h: batch.h, x: columns(&batch.x), x_next: columns(&batch.x_next) }
    }
}

impl ParamLoss<f64> for ExactNextStateLoss {
    fn eval<S: Real>(&self, params: &[MlpParams<S>], lift: impl Fn(f64) -> S + Copy) -> S {
        let ridge = lift(self.ridge);
        let field = FnField(|s: &State<S>| Ok(State::new(s.qdot.0.clone(), accel_generic(self.kind, params, ridge, &s.q, &s.qdot))));
        let mut total = S::zero();
        for (x, y) in self.x.iter().zip(&self.x_next) {
            let s0 = State::from_phase(&x.iter().map(|&v| lift(v)).collect::<Vec<_>>());
            let s1 = rk4_step(&field, &s0, lift(self.h)).expect("finite reference step");
            for (p, &t) in s1.phase().iter().zip(y) {
                let d = *p - lift(t);
                total += d * d;
            }
        }
        total / lift(self.x.len() as f64)
    }
}

/// Central difference of `f` along flat parameter `idx` of network `net`.
pub fn fd_param(model: &Model<f64>, net: usize, idx: usize, step: f64, f: impl Fn(&Model<f64>) -> f64) -> f64 {
    let mut m = model.clone();
    let base = m.nets()[net].flat();
    let h = step * (1.0 + base[idx].abs());
    let mut eval_at = |v: f64| {
        let mut p = base.clone();
        p[idx] = v;
        m.nets_mut()[net].set_flat(&p);
        f(&m)
    };
    let d1 = (eval_at(base[idx] + h) - eval_at(base[idx] - h)) / (2.0 * h);
    let d2 = (eval_at(base[idx] + 2.0 * h) - eval_at(base[idx] - 2.0 * h)) / (4.0 * h);
    // Richardson extrapolation cancels the h² term
    (4.0 * d1 - d2) / 3.0
}

/// Central difference of a scalar function of the input.
pub fn fd_input(x: &[f64], i: usize, step: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let h = step * (1.0 + x[i].abs());
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// `|a − b| ≤ rtol·max(|a|, |b|) + atol`.
pub fn close(a: f64, b: f64, rtol: f64, atol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()) + atol
}

/// Evaluates a network as a scalar function of its input.
pub fn net_scalar(p: &MlpParams<f64>) -> impl Fn(&[f64]) -> f64 + '_ {
    move |x| ScalarFn::eval(p, x, |c| c)
}

/// A small random model configuration for derivative checks.
pub fn random_model_config(rng: &mut ChaCha8Rng, kind: ModelKind, dof: usize) -> ModelConfig {
    let pick = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { Activation::Softplus } else { Activation::Tanh };
    ModelConfig {
        kind,
        dof,
        hidden_size: rng.random_range(3..9),
        n_hidden_layers: rng.random_range(1..4),
        lagrangian_activation: pick(rng),
        force_activation: pick(rng),
        ridge: 1e-6,
        seed: rng.random(),
    }
}

/// Smallest `|det|` of the velocity Hessian over the batch columns. Draws
/// with nearly singular mass matrices make finite differences meaningless.
pub fn min_mass_det(model: &Model<f64>, batch: &Batch<f64>) -> f64 {
    let Model::Glnn(m) = model else { return f64::INFINITY };
    let n = model.dof();
    columns(&batch.x)
        .iter()
        .map(|x| {
            let h = glnn::autodiff::hessian_input(&m.lagrangian, x).unwrap();
            match n {
                1 => h[(1, 1)].abs(),
                _ => (h[(2, 2)] * h[(3, 3)] - h[(2, 3)] * h[(3, 2)]).abs(),
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Random batch of `b` phase-space points with random targets.
pub fn random_batch(rng: &mut ChaCha8Rng, dof: usize, b: usize, h: f64) -> Batch<f64> {
    let mut gen = |rows: usize| Array2::from_shape_fn((rows, b), |_| rng.random_range(-1.0..1.0));
    Batch { x: gen(2 * dof), x_next: gen(2 * dof), qddot: gen(dof), h }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws whose mass matrix is nearly singular or whose accelerations are
/// huge make finite differences meaningless; such draws are skipped.
pub fn well_conditioned(model: &Model<f64>, batch: &Batch<f64>) -> bool {
    if min_mass_det(model, batch) < 1e-2 {
        return false;
    }
    match model.accel_batch(batch.x.view()) {
        Ok((a, _)) => a.iter().all(|v| v.abs() < 20.0),
        Err(_) => false,
    }
}
