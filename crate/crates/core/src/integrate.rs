//! Fixed-step classical Runge-Kutta integration of phase-space vector fields.

use crate::error::{Error, Result};
use crate::models::Model;
use crate::oracles::{DampedHarmonicParams, DoublePendulumParams, State, System, SystemParams};
use crate::scalar::{Float, Real};

/// A first-order field `ẋ = f(x)` over phase space.
pub trait VectorField<T: Real> {
    fn eval(&self, s: &State<T>) -> Result<State<T>>;
}

macro_rules! system_field {
    ($($t:ty),*) => {$(
        impl<T: Real> VectorField<T> for $t {
            fn eval(&self, s: &State<T>) -> Result<State<T>> {
                self.deriv(s)
            }
        }
    )*};
}

system_field!(DampedHarmonicParams, DoublePendulumParams, SystemParams);

/// A learned model lifted to `(q̇, q̈)`.
pub struct ModelField<'a, T>(pub &'a Model<T>);

impl<'a, T: Float> VectorField<T> for ModelField<'a, T> {
    fn eval(&self, s: &State<T>) -> Result<State<T>> {
        let a = self.0.accel(&s.q, &s.qdot)?;
        Ok(State { q: s.qdot.clone(), qdot: a })
    }
}

/// Any closure mapping a state to its derivative.
pub struct FnField<F>(pub F);

impl<T: Real, F: Fn(&State<T>) -> Result<State<T>>> VectorField<T> for FnField<F> {
    fn eval(&self, s: &State<T>) -> Result<State<T>> {
        (self.0)(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout<T> {
    pub times: Vec<f64>,
    pub states: Vec<State<T>>,
    pub h: f64,
}

/// One classical RK4 step. A non-finite stage or result is reported as
/// divergence at step 0; [`rollout`] rewrites the index.
pub fn rk4_step<T: Real, F: VectorField<T> + ?Sized>(field: &F, s: &State<T>, h: T) -> Result<State<T>> {
    let half = h * T::from_f64(0.5);
    let stage = |x: &State<T>| -> Result<State<T>> {
        let d = field.eval(x)?;
        if d.all_finite() {
            Ok(d)
        } else {
            Err(Error::Divergence { step: 0, trajectory: None })
        }
    };
    let k1 = stage(s)?;
    let k2 = stage(&s.axpy(half, &k1))?;
    let k3 = stage(&s.axpy(half, &k2))?;
    let k4 = stage(&s.axpy(h, &k3))?;
    let sixth = h / T::from_f64(6.0);
    let two = T::from_f64(2.0);
    let combine = |x: &[T], a: &[T], b: &[T], c: &[T], d: &[T]| -> Vec<T> {
        (0..x.len()).map(|i| x[i] + sixth * (a[i] + two * b[i] + two * c[i] + d[i])).collect()
    };
    let next = State::new(
        combine(&s.q, &k1.q, &k2.q, &k3.q, &k4.q),
        combine(&s.qdot, &k1.qdot, &k2.qdot, &k3.qdot, &k4.qdot),
    );
    if next.all_finite() {
        Ok(next)
    } else {
        Err(Error::Divergence { step: 0, trajectory: None })
    }
}

/// `n_steps` recorded steps of size `h`, each made of `substeps` RK4 steps
/// of size `h / substeps`. Returns `n_steps + 1` states including `s0`.
pub fn rollout<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    s0: &State<T>,
    h: f64,
    n_steps: usize,
    substeps: usize,
) -> Result<Rollout<T>> {
    if n_steps == 0 {
        return Err(Error::Config("rollout needs at least one step".into()));
    }
    if !(h > 0.0 && h.is_finite()) || substeps == 0 {
        return Err(Error::Config("step size must be positive and substeps at least 1".into()));
    }
    let dt = T::from_f64(h / substeps as f64);
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(s0.clone());
    let mut s = s0.clone();
    for step in 0..n_steps {
        for _ in 0..substeps {
            s = rk4_step(field, &s, dt).map_err(|e| match e {
                Error::Divergence { .. } => Error::Divergence { step, trajectory: None },
                other => other,
            })?;
        }
        states.push(s.clone());
    }
    let times = (0..=n_steps).map(|i| i as f64 * h).collect();
    Ok(Rollout { times, states, h })
}
