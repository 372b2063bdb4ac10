//! Ground-truth physics for the two benchmark systems.
//!
//! * Damped harmonic oscillator: `q̈ + a q̇ + k² q = 0`, with the Lagrangian
//!   `L = ½ m q̇² − ½ k² q²` and the generalized force `F = −m a q̇`.
//! * Compound double pendulum with axle friction: two identical rigid bodies
//!   with mass matrix `[[2md²+I, md²cos(θ₁−θ₂)], [md²cos(θ₁−θ₂), md²+I]]`,
//!   gravity torques `2mgd sinθ₁`, `mgd sinθ₂`, Coriolis terms
//!   `±md² θ̇² sin(θ₁−θ₂)` and friction torques `−γ₁θ̇₁ − γ₂(θ̇₁−θ̇₂)` on the
//!   first axle and `γ₂(θ̇₁−θ̇₂)` on the second.
//!
//! Every function is generic over [`Real`], so the oracles can be pushed
//! through the same dual-number machinery as the networks.

use serde::{Deserialize, Serialize};

use crate::autodiff::ScalarFn;
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Matrix, Vector};
use crate::models::ForceField;
use crate::scalar::Real;

/// Phase-space point `(q, q̇)`. Also used for its time derivative `(q̇, q̈)`.
#[derive(Clone, Debug, PartialEq)]
pub struct State<T> {
    pub q: Vector<T>,
    pub qdot: Vector<T>,
}

impl<T: Real> State<T> {
    pub fn new(q: Vec<T>, qdot: Vec<T>) -> Self {
        assert_eq!(q.len(), qdot.len(), "q and q̇ must have equal length");
        State { q: Vector(q), qdot: Vector(qdot) }
    }

    pub fn from_f64(q: &[f64], qdot: &[f64]) -> Self {
        State::new(q.iter().map(|&v| T::from_f64(v)).collect(), qdot.iter().map(|&v| T::from_f64(v)).collect())
    }

    /// Splits a concatenated `(q, q̇)` slice.
    pub fn from_phase(x: &[T]) -> Self {
        let n = x.len() / 2;
        State::new(x[..n].to_vec(), x[n..].to_vec())
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn phase(&self) -> Vec<T> {
        self.q.iter().chain(self.qdot.iter()).copied().collect()
    }

    /// `self + h·d`, componentwise over the phase space.
    pub fn axpy(&self, h: T, d: &State<T>) -> Self {
        State {
            q: Vector(self.q.iter().zip(d.q.iter()).map(|(&a, &b)| a + h * b).collect()),
            qdot: Vector(self.qdot.iter().zip(d.qdot.iter()).map(|(&a, &b)| a + h * b).collect()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.q.all_finite() && self.qdot.all_finite()
    }
}

/// A mechanical system with known dynamics and energy.
pub trait System<T: Real> {
    fn dof(&self) -> usize;

    /// `(q̇, q̈)` at `s`.
    fn deriv(&self, s: &State<T>) -> Result<State<T>>;

    /// Total mechanical energy `T + U`.
    fn energy(&self, s: &State<T>) -> T;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampedHarmonicParams {
    /// Friction coefficient.
    pub a: f64,
    /// Elasticity coefficient.
    pub k: f64,
    #[serde(default = "one")]
    pub m: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for DampedHarmonicParams {
    fn default() -> Self {
        DampedHarmonicParams { a: 0.02, k: 1.0, m: 1.0 }
    }
}

impl DampedHarmonicParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.k > 0.0 && self.a >= 0.0 && self.m > 0.0 && [self.a, self.k, self.m].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("damped oscillator needs k > 0, a ≥ 0, m > 0 (got {self:?})")))
        }
    }
}

pub fn dho_deriv<T: Real>(s: &State<T>, p: &DampedHarmonicParams) -> State<T> {
    let (a, k2) = (T::from_f64(p.a), T::from_f64(p.k * p.k));
    let (q, v) = (s.q[0], s.qdot[0]);
    State::new(vec![v], vec![-a * v - k2 * q])
}

pub fn dho_energy<T: Real>(s: &State<T>, p: &DampedHarmonicParams) -> T {
    let half = T::from_f64(0.5);
    let (q, v) = (s.q[0], s.qdot[0]);
    half * T::from_f64(p.m) * v * v + half * T::from_f64(p.k * p.k) * q * q
}

/// Closed-form underdamped solution at time `t` from `s0`.
pub fn dho_analytic(t: f64, s0: &State<f64>, p: &DampedHarmonicParams) -> Result<State<f64>> {
    let disc = p.k * p.k - p.a * p.a / 4.0;
    if disc <= 0.0 {
        return Err(Error::Config("closed form requires an underdamped oscillator (a² < 4k²)".into()));
    }
    let w = disc.sqrt();
    let lam = p.a / 2.0;
    let (q0, v0) = (s0.q[0], s0.qdot[0]);
    let amp_c = q0;
    let amp_s = (v0 + lam * q0) / w;
    let decay = (-lam * t).exp();
    let (sn, cs) = (w * t).sin_cos();
    let q = decay * (amp_c * cs + amp_s * sn);
    let v = decay * ((-lam * amp_c + w * amp_s) * cs + (-lam * amp_s - w * amp_c) * sn);
    Ok(State::new(vec![q], vec![v]))
}

/// `(L, F)` with `L = T − U` and `F` the force that closes the generalized
/// Euler-Lagrange equation onto the oscillator's equation of motion.
pub fn dho_lagrangian_force<T: Real>(s: &State<T>, p: &DampedHarmonicParams) -> (T, Vector<T>) {
    let l = DhoLagrangian(p.clone()).eval(&s.phase(), T::from_f64);
    let f = DhoForce(p.clone()).eval(&s.q, &s.qdot, T::from_f64);
    (l, Vector(f))
}

/// `L = ½ m q̇² − ½ k² q²` as a phase-space scalar field.
#[derive(Clone, Debug)]
pub struct DhoLagrangian(pub DampedHarmonicParams);

impl ScalarFn<f64> for DhoLagrangian {
    fn eval<S: Real>(&self, x: &[S], lift: impl Fn(f64) -> S + Copy) -> S {
        let p = &self.0;
        lift(0.5 * p.m) * x[1] * x[1] - lift(0.5 * p.k * p.k) * x[0] * x[0]
    }
}

/// `F = −m a q̇`.
#[derive(Clone, Debug)]
pub struct DhoForce(pub DampedHarmonicParams);

impl ForceField<f64> for DhoForce {
    fn eval<S: Real>(&self, _q: &[S], qdot: &[S], lift: impl Fn(f64) -> S + Copy) -> Vec<S> {
        vec![-lift(self.0.m * self.0.a) * qdot[0]]
    }
}

impl<T: Real> System<T> for DampedHarmonicParams {
    fn dof(&self) -> usize {
        1
    }
    fn deriv(&self, s: &State<T>) -> Result<State<T>> {
        Ok(dho_deriv(s, self))
    }
    fn energy(&self, s: &State<T>) -> T {
        dho_energy(s, self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoublePendulumParams {
    /// Mass of each body (kg).
    pub m: f64,
    /// Distance between the axles (m).
    pub d: f64,
    /// Axle to centre-of-mass distance (m).
    pub c: f64,
    /// Moment of inertia (kg·m²).
    pub inertia: f64,
    pub g: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl Default for DoublePendulumParams {
    fn default() -> Self {
        let (m, c) = (1.0, 1.0);
        DoublePendulumParams { m, d: 1.0, c, inertia: Self::rod_inertia(m, c), g: 10.0, gamma1: 0.5, gamma2: 0.5 }
    }
}

impl DoublePendulumParams {
    /// `(1/3)·m·(c/2)²`, the default moment of inertia.
    pub fn rod_inertia(m: f64, c: f64) -> f64 {
        m * (c / 2.0).powi(2) / 3.0
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.m, self.d, self.c, self.inertia, self.g, self.gamma1, self.gamma2];
        let ok = self.m > 0.0
            && self.d > 0.0
            && self.g > 0.0
            && self.inertia >= 0.0
            && self.gamma1 >= 0.0
            && self.gamma2 >= 0.0
            && all.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("double pendulum needs m, d, g > 0 and I, γ₁, γ₂ ≥ 0 (got {self:?})")))
        }
    }

    fn mass_matrix<T: Real>(&self, th1: T, th2: T) -> Matrix<T> {
        let md2 = T::from_f64(self.m * self.d * self.d);
        let i = T::from_f64(self.inertia);
        let off = md2 * (th1 - th2).cos();
        Matrix::from_rows(&[&[md2 + md2 + i, off], &[off, md2 + i]])
    }

    /// Generalized friction torques on the two axles.
    pub fn friction<T: Real>(&self, qdot: &[T]) -> [T; 2] {
        let (g1, g2) = (T::from_f64(self.gamma1), T::from_f64(self.gamma2));
        let rel = qdot[0] - qdot[1];
        [-g1 * qdot[0] - g2 * rel, g2 * rel]
    }
}

pub fn dp_deriv<T: Real>(s: &State<T>, p: &DoublePendulumParams) -> Result<State<T>> {
    let (th1, th2) = (s.q[0], s.q[1]);
    let (w1, w2) = (s.qdot[0], s.qdot[1]);
    let md2 = T::from_f64(p.m * p.d * p.d);
    let mgd = T::from_f64(p.m * p.g * p.d);
    let sn = (th1 - th2).sin();
    let [f1, f2] = p.friction(&s.qdot);
    let rhs = [
        f1 - md2 * w2 * w2 * sn - (mgd + mgd) * th1.sin(),
        f2 + md2 * w1 * w1 * sn - mgd * th2.sin(),
    ];
    let acc = solve_spd(&p.mass_matrix(th1, th2), &rhs, T::zero())?;
    Ok(State::new(vec![w1, w2], acc.0))
}

pub fn dp_energy<T: Real>(s: &State<T>, p: &DoublePendulumParams) -> T {
    dp_kinetic(s, p) + dp_potential(s, p)
}

fn dp_kinetic<T: Real>(s: &State<T>, p: &DoublePendulumParams) -> T {
    let half = T::from_f64(0.5);
    let md2 = T::from_f64(p.m * p.d * p.d);
    let i = T::from_f64(p.inertia);
    let (w1, w2) = (s.qdot[0], s.qdot[1]);
    half * (md2 + md2 + i) * w1 * w1 + half * (md2 + i) * w2 * w2 + md2 * w1 * w2 * (s.q[0] - s.q[1]).cos()
}

fn dp_potential<T: Real>(s: &State<T>, p: &DoublePendulumParams) -> T {
    let mgd = T::from_f64(p.m * p.g * p.d);
    -(mgd + mgd) * s.q[0].cos() - mgd * s.q[1].cos()
}

/// Power of the friction torques, `−γ₁θ̇₁² − γ₂(θ̇₁−θ̇₂)²`; equals `dE/dt`.
pub fn dissipation_rate<T: Real>(s: &State<T>, p: &DoublePendulumParams) -> T {
    let f = p.friction(&s.qdot);
    f[0] * s.qdot[0] + f[1] * s.qdot[1]
}

/// Pendulum Lagrangian `T − U` as a phase-space scalar field.
#[derive(Clone, Debug)]
pub struct DpLagrangian(pub DoublePendulumParams);

impl ScalarFn<f64> for DpLagrangian {
    fn eval<S: Real>(&self, x: &[S], _lift: impl Fn(f64) -> S + Copy) -> S {
        let s = State::from_phase(x);
        dp_kinetic(&s, &self.0) - dp_potential(&s, &self.0)
    }
}

/// Pendulum friction torques as a generalized force.
#[derive(Clone, Debug)]
pub struct DpForce(pub DoublePendulumParams);

impl ForceField<f64> for DpForce {
    fn eval<S: Real>(&self, _q: &[S], qdot: &[S], _lift: impl Fn(f64) -> S + Copy) -> Vec<S> {
        self.0.friction(qdot).to_vec()
    }
}

impl<T: Real> System<T> for DoublePendulumParams {
    fn dof(&self) -> usize {
        2
    }
    fn deriv(&self, s: &State<T>) -> Result<State<T>> {
        dp_deriv(s, self)
    }
    fn energy(&self, s: &State<T>) -> T {
        dp_energy(s, self)
    }
}

/// One of the two benchmark systems with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "lowercase")]
pub enum SystemParams {
    Dho(DampedHarmonicParams),
    Dp(DoublePendulumParams),
}

impl SystemParams {
    pub fn tag(&self) -> &'static str {
        match self {
            SystemParams::Dho(_) => "dho",
            SystemParams::Dp(_) => "dp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SystemParams::Dho(p) => p.validate(),
            SystemParams::Dp(p) => p.validate(),
        }
    }

    pub fn dof(&self) -> usize {
        match self {
            SystemParams::Dho(_) => 1,
            SystemParams::Dp(_) => 2,
        }
    }
}

impl<T: Real> System<T> for SystemParams {
    fn dof(&self) -> usize {
        SystemParams::dof(self)
    }
    fn deriv(&self, s: &State<T>) -> Result<State<T>> {
        match self {
            SystemParams::Dho(p) => Ok(dho_deriv(s, p)),
            SystemParams::Dp(p) => dp_deriv(s, p),
        }
    }
    fn energy(&self, s: &State<T>) -> T {
        match self {
            SystemParams::Dho(p) => dho_energy(s, p),
            SystemParams::Dp(p) => dp_energy(s, p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::generalized_accel;

    fn st(q: &[f64], v: &[f64]) -> State<f64> {
        State::from_f64(q, v)
    }

    #[test]
    fn dho_derivative_examples() {
        let p = DampedHarmonicParams::default();
        assert_eq!(dho_deriv(&st(&[1.0], &[0.0]), &p), st(&[0.0], &[-1.0]));
        assert_eq!(dho_deriv(&st(&[0.0], &[0.0]), &p), st(&[0.0], &[0.0]));
        let undamped = DampedHarmonicParams { a: 0.0, ..p };
        assert_eq!(dho_deriv(&st(&[0.3], &[2.0]), &undamped), st(&[2.0], &[-0.3]));
    }

    #[test]
    fn dho_energy_examples() {
        let p = DampedHarmonicParams::default();
        assert_eq!(dho_energy(&st(&[1.0], &[0.0]), &p), 0.5);
        assert_eq!(dho_energy(&st(&[0.0], &[1.0]), &p), 0.5);
    }

    #[test]
    fn dho_lagrangian_force_examples() {
        let p = DampedHarmonicParams::default();
        let (l, f) = dho_lagrangian_force(&st(&[1.0], &[0.0]), &p);
        assert_eq!((l, f[0]), (-0.5, 0.0));
        let (l, f) = dho_lagrangian_force(&st(&[0.0], &[1.0]), &p);
        assert_eq!(l, 0.5);
        assert!((f[0] + 0.02).abs() < 1e-16);
    }

    #[test]
    fn analytic_solution_initial_value_and_period() {
        let p = DampedHarmonicParams::default();
        let s0 = st(&[0.7], &[-0.2]);
        let s = dho_analytic(0.0, &s0, &p).unwrap();
        assert!((s.q[0] - 0.7).abs() < 1e-15 && (s.qdot[0] + 0.2).abs() < 1e-15);
        let undamped = DampedHarmonicParams { a: 0.0, k: 2.0, m: 1.0 };
        let period = std::f64::consts::PI; // 2π / k
        let s = dho_analytic(period, &s0, &undamped).unwrap();
        assert!((s.q[0] - 0.7).abs() < 1e-12 && (s.qdot[0] + 0.2).abs() < 1e-12);
        let over = DampedHarmonicParams { a: 3.0, k: 1.0, m: 1.0 };
        assert!(dho_analytic(1.0, &s0, &over).is_err());
    }

    #[test]
    fn analytic_solution_satisfies_ode() {
        let p = DampedHarmonicParams { a: 0.3, k: 1.7, m: 1.0 };
        let s0 = st(&[0.4], &[1.1]);
        let h = 1e-4;
        for &t in &[0.5, 2.0, 7.3] {
            let s = dho_analytic(t, &s0, &p).unwrap();
            let sp = dho_analytic(t + h, &s0, &p).unwrap();
            let sm = dho_analytic(t - h, &s0, &p).unwrap();
            let qdot = (sp.q[0] - sm.q[0]) / (2.0 * h);
            let qddot = (sp.q[0] - 2.0 * s.q[0] + sm.q[0]) / (h * h);
            assert!((qdot - s.qdot[0]).abs() < 1e-7);
            assert!((qddot + p.a * s.qdot[0] + p.k * p.k * s.q[0]).abs() < 1e-5);
        }
    }

    #[test]
    fn pendulum_rest_and_restoring() {
        let p = DoublePendulumParams::default();
        assert_eq!(dp_deriv(&st(&[0.0, 0.0], &[0.0, 0.0]), &p).unwrap(), st(&[0.0, 0.0], &[0.0, 0.0]));
        let frictionless = DoublePendulumParams { gamma1: 0.0, gamma2: 0.0, ..p.clone() };
        for &th in &[0.01, 0.1, 0.3] {
            let d = dp_deriv(&st(&[th, th], &[0.0, 0.0]), &frictionless).unwrap();
            assert!(d.qdot[0] < 0.0 && d.qdot[1] < 0.0);
        }
        assert!((dp_energy(&st(&[0.0, 0.0], &[0.0, 0.0]), &p) + 3.0 * p.m * p.g * p.d).abs() < 1e-12);
        assert!((p.inertia - 1.0 / 12.0).abs() < 1e-16);
    }

    #[test]
    fn pendulum_kinetic_energy_positive_definite() {
        let p = DoublePendulumParams::default();
        for k in 0..50 {
            let th = k as f64 * 0.37;
            let w = [(k as f64 * 1.3).sin(), (k as f64 * 0.7).cos()];
            let s = st(&[th, -th], &w);
            assert!(dp_kinetic(&s, &p) > 0.0);
        }
    }

    #[test]
    fn dissipation_examples() {
        let p = DoublePendulumParams::default();
        assert_eq!(dissipation_rate(&st(&[0.2, 0.1], &[0.0, 0.0]), &p), 0.0);
        assert_eq!(dissipation_rate(&st(&[0.2, 0.1], &[1.0, 1.0]), &p), -p.gamma1);
    }

    #[test]
    fn pendulum_energy_rate_equals_friction_power() {
        // dE/dt by the chain rule along the exact vector field, via duals
        use crate::dual::Dual;
        let p = DoublePendulumParams::default();
        let s = st(&[0.4, -0.9], &[0.8, 0.3]);
        let d = dp_deriv(&s, &p).unwrap();
        let sd: State<Dual<f64>> = State::new(
            s.q.iter().zip(d.q.iter()).map(|(&x, &dx)| Dual::new(x, dx)).collect(),
            s.qdot.iter().zip(d.qdot.iter()).map(|(&x, &dx)| Dual::new(x, dx)).collect(),
        );
        let rate = dp_energy(&sd, &p).eps;
        assert!((rate - dissipation_rate(&s, &p)).abs() < 1e-12);
    }

    #[test]
    fn generalized_lagrange_reproduces_pendulum() {
        let p = DoublePendulumParams::default();
        for k in 0..20 {
            let f = k as f64;
            let q = [(f * 0.7).sin(), (f * 1.9).cos()];
            let v = [(f * 0.3).cos() - 0.5, (f * 2.3).sin()];
            let a = generalized_accel(&DpLagrangian(p.clone()), &DpForce(p.clone()), &q, &v, 0.0).unwrap();
            let d = dp_deriv(&st(&q, &v), &p).unwrap();
            for i in 0..2 {
                assert!((a[i] - d.qdot[i]).abs() < 1e-10);
            }
        }
    }
}
