//! Structural properties of the acceleration solve, the integrator and the
//! ground-truth systems.

mod common;

use common::*;
use glnn::autodiff::ScalarFn;
use glnn::integrate::rollout;
use glnn::models::{generalized_accel, ForceField, Model, ModelKind, NoForce};
use glnn::oracles::{
    dho_analytic, dho_deriv, dissipation_rate, DampedHarmonicParams, DhoForce, DhoLagrangian, DoublePendulumParams,
    State, System,
};
use glnn::Real;
use proptest::prelude::*;
use rand::Rng;

struct Shifted<'a, L>(&'a L, f64);

impl<'a, L: ScalarFn<f64>> ScalarFn<f64> for Shifted<'a, L> {
    fn eval<S: Real>(&self, x: &[S], lift: impl Fn(f64) -> S + Copy) -> S {
        self.0.eval(x, lift) + lift(self.1)
    }
}

struct Constant(Vec<f64>);

impl ForceField<f64> for Constant {
    fn eval<S: Real>(&self, _q: &[S], _qdot: &[S], lift: impl Fn(f64) -> S + Copy) -> Vec<S> {
        self.0.iter().map(|&v| lift(v)).collect()
    }
}

struct Sum<'a, A, B>(&'a A, &'a B);

impl<'a, A: ForceField<f64>, B: ForceField<f64>> ForceField<f64> for Sum<'a, A, B> {
    fn eval<S: Real>(&self, q: &[S], qdot: &[S], lift: impl Fn(f64) -> S + Copy) -> Vec<S> {
        let a = self.0.eval(q, qdot, lift);
        let b = self.1.eval(q, qdot, lift);
        a.into_iter().zip(b).map(|(x, y)| x + y).collect()
    }
}

fn glnn_parts(seed: u64, dof: usize) -> (glnn::GlnnModel, Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let mut cfg = random_model_config(&mut r, ModelKind::Glnn, dof);
    cfg.lagrangian_activation = glnn::mlp::Activation::Softplus;
    let Model::Glnn(m) = Model::<f64>::init(&cfg).unwrap() else { unreachable!() };
    let q = (0..dof).map(|_| r.random_range(-1.0..1.0)).collect();
    let v = (0..dof).map(|_| r.random_range(-1.0..1.0)).collect();
    (m, q, v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constant_offset_leaves_acceleration_unchanged(seed in any::<u64>(), dof in 1usize..3, c in -50.0f64..50.0) {
        let (m, q, v) = glnn_parts(seed, dof);
        let a = generalized_accel(&m.lagrangian, &m.force, &q, &v, m.ridge).unwrap();
        let b = generalized_accel(&Shifted(&m.lagrangian, c), &m.force, &q, &v, m.ridge).unwrap();
        for i in 0..dof {
            prop_assert!((a[i] - b[i]).abs() < 1e-12, "{} vs {}", a[i], b[i]);
        }
    }

    #[test]
    fn force_enters_linearly(seed in any::<u64>(), dof in 1usize..3) {
        let (m, q, v) = glnn_parts(seed, dof);
        let extra = Constant((0..dof).map(|i| 0.3 - 0.7 * i as f64).collect());
        let base = generalized_accel(&m.lagrangian, &m.force, &q, &v, m.ridge).unwrap();
        let both = generalized_accel(&m.lagrangian, &Sum(&m.force, &extra), &q, &v, m.ridge).unwrap();
        let none = generalized_accel(&m.lagrangian, &NoForce, &q, &v, m.ridge).unwrap();
        let only = generalized_accel(&m.lagrangian, &extra, &q, &v, m.ridge).unwrap();
        // both − base = M⁻¹·extra = only − none
        for i in 0..dof {
            let lhs = both[i] - base[i];
            let rhs = only[i] - none[i];
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn batched_acceleration_matches_exact(seed in any::<u64>(), dof in 1usize..3) {
        let (m, q, v) = glnn_parts(seed, dof);
        let exact = m.accel_exact(&q, &v).unwrap();
        let model = Model::Glnn(m);
        let fast = model.accel(&q, &v).unwrap();
        for i in 0..dof {
            prop_assert!(close(fast[i], exact[i], 1e-9, 1e-12));
        }
    }
}

#[test]
fn analytic_damped_pair_reproduces_oscillator() {
    let p = DampedHarmonicParams::default();
    let mut r = rng(11);
    for _ in 0..100 {
        let q = r.random_range(-3.0..3.0);
        let v = r.random_range(-3.0..3.0);
        let a = generalized_accel(&DhoLagrangian(p), &DhoForce(p), &[q], &[v], 1e-6).unwrap();
        let expected = -p.a * v - p.k * p.k * q;
        // the 1e-6 ridge perturbs the unit mass
        let exact = generalized_accel(&DhoLagrangian(p), &DhoForce(p), &[q], &[v], 0.0).unwrap();
        assert!((exact[0] - expected).abs() < 1e-10, "{} vs {expected}", exact[0]);
        assert!((a[0] - expected).abs() < 1e-5 * (1.0 + expected.abs()));
    }
}

fn rk4_endpoint_error(h: f64) -> f64 {
    let p = DampedHarmonicParams::default();
    let s0 = State::from_f64(&[1.0], &[0.0]);
    let n = (10.0 / h).round() as usize;
    let end = rollout(&p, &s0, h, n, 1).unwrap().states.pop().unwrap();
    let truth = dho_analytic(10.0, &s0, &p).unwrap();
    ((end.q[0] - truth.q[0]).powi(2) + (end.qdot[0] - truth.qdot[0]).powi(2)).sqrt()
}

#[test]
fn rk4_is_fourth_order() {
    for h in [0.2, 0.1, 0.05] {
        let ratio = rk4_endpoint_error(h) / rk4_endpoint_error(h / 2.0);
        assert!((14.0..=18.0).contains(&ratio), "h = {h}: ratio {ratio}");
    }
}

#[test]
fn pendulum_energy_rate_is_friction_power() {
    let p = DoublePendulumParams::default();
    let h = 1e-3;
    let mut r = rng(4);
    for _ in 0..10 {
        let x0: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let traj = rollout(&p, &State::from_phase(&x0), h, 400, 1).unwrap();
        let e: Vec<f64> = traj.states.iter().map(|s| p.energy(s)).collect();
        for k in 2..e.len() - 2 {
            // five-point stencil
            let de = (e[k - 2] - 8.0 * e[k - 1] + 8.0 * e[k + 1] - e[k + 2]) / (12.0 * h);
            let rate = dissipation_rate(&traj.states[k], &p);
            assert!((de - rate).abs() < 1e-4, "step {k}: {de} vs {rate}");
        }
    }
}

#[test]
fn oscillator_field_matches_closed_form_derivative() {
    let p = DampedHarmonicParams::default();
    let s0 = State::from_f64(&[0.4], &[-0.8]);
    let d = dho_deriv(&s0, &p);
    let eps = 1e-6;
    let fwd = dho_analytic(eps, &s0, &p).unwrap();
    let back = dho_analytic(-eps, &s0, &p).unwrap();
    assert!(((fwd.q[0] - back.q[0]) / (2.0 * eps) - d.q[0]).abs() < 1e-8);
    assert!(((fwd.qdot[0] - back.qdot[0]) / (2.0 * eps) - d.qdot[0]).abs() < 1e-8);
}
