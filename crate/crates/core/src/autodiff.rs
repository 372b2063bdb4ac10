//! Exact input and parameter derivatives of scalar functions by nested
//! forward-mode evaluation.
//!
//! These routines accept any function written against [`Real`] and are
//! independent of the batched jet kernels in [`crate::mlp`]; the two paths
//! check each other in the test suites.

use crate::dual::Dual;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::mlp::MlpParams;
use crate::scalar::Real;

/// A scalar field that can be evaluated over any scalar type.
///
/// `lift` embeds constants of the caller's scalar type `T` (network weights,
/// physical parameters) into the evaluation type `S` without dropping any
/// derivative parts `T` may already carry.
pub trait ScalarFn<T: Real> {
    fn eval<S: Real>(&self, x: &[S], lift: impl Fn(T) -> S + Copy) -> S;
}

/// A loss over a list of networks' parameters.
pub trait ParamLoss<T: Real> {
    fn eval<S: Real>(&self, params: &[MlpParams<S>], lift: impl Fn(T) -> S + Copy) -> S;
}

impl<T: Real> ScalarFn<T> for MlpParams<T> {
    fn eval<S: Real>(&self, x: &[S], lift: impl Fn(T) -> S + Copy) -> S {
        assert_eq!(self.config.output_dim, 1, "scalar network expected");
        self.map(lift).eval(x)[0]
    }
}

/// `∇f(x)`.
pub fn grad_input<T: Real, F: ScalarFn<T>>(f: &F, x: &[T]) -> Result<Vector<T>> {
    let n = x.len();
    let mut g = Vector::zeros(n);
    for i in 0..n {
        let xs: Vec<Dual<T>> = seed_one(x, i);
        let y = f.eval(&xs, Dual::constant);
        g[i] = y.eps;
    }
    if !g.all_finite() {
        return Err(Error::NumericOverflow("input gradient".into()));
    }
    Ok(g)
}

/// `(∇f(x), ∇²f(x))`. Only the upper triangle is evaluated, so the Hessian
/// is symmetric by construction.
pub fn grad_and_hessian_input<T: Real, F: ScalarFn<T>>(f: &F, x: &[T]) -> Result<(Vector<T>, Matrix<T>)> {
    let n = x.len();
    let mut g = Vector::zeros(n);
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let xs: Vec<Dual<Dual<T>>> = x
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    let di = if k == i { T::one() } else { T::zero() };
                    let dj = if k == j { T::one() } else { T::zero() };
                    Dual::new(Dual::new(v, di), Dual::constant(dj))
                })
                .collect();
            let y = f.eval(&xs, |c| Dual::constant(Dual::constant(c)));
            if i == j {
                g[i] = y.re.eps;
            }
            h[(i, j)] = y.eps.eps;
            h[(j, i)] = y.eps.eps;
        }
    }
    if !g.all_finite() || !h.all_finite() {
        return Err(Error::NumericOverflow("input Hessian".into()));
    }
    Ok((g, h))
}

/// `∇²f(x)`.
pub fn hessian_input<T: Real, F: ScalarFn<T>>(f: &F, x: &[T]) -> Result<Matrix<T>> {
    grad_and_hessian_input(f, x).map(|(_, h)| h)
}

/// Gradient of `loss` with respect to every parameter of every network.
///
/// Costs one forward-mode evaluation per parameter; intended for small
/// networks and for verifying the batched reverse sweep.
pub fn param_grad<T: Real, L: ParamLoss<T>>(loss: &L, params: &[MlpParams<T>]) -> Result<Vec<MlpParams<T>>> {
    let mut grads: Vec<MlpParams<T>> = params.iter().map(|p| p.zeros_like()).collect();
    for (net, grad) in grads.iter_mut().enumerate() {
        let names: Vec<String> = params[net].blocks().into_iter().map(|(n, _)| n).collect();
        let mut flat = Vec::with_capacity(params[net].n_params());
        for idx in 0..params[net].n_params() {
            flat.push(param_partial(loss, params, net, idx));
        }
        grad.set_flat(&flat);
        if let Some(block) = grad.first_non_finite_block() {
            return Err(Error::NonFiniteGradient { block: format!("net{net}.{block}") });
        }
        debug_assert_eq!(names.len(), grad.blocks().len());
    }
    Ok(grads)
}

/// `∂loss/∂θ` for the single parameter at flat index `idx` of network `net`.
pub fn param_partial<T: Real, L: ParamLoss<T>>(loss: &L, params: &[MlpParams<T>], net: usize, idx: usize) -> T {
    let lifted: Vec<MlpParams<Dual<T>>> = params
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let mut counter = 0usize;
            p.map(|w| {
                let seeded = k == net && counter == idx;
                counter += 1;
                if seeded {
                    Dual::variable(w)
                } else {
                    Dual::constant(w)
                }
            })
        })
        .collect();
    loss.eval(&lifted, Dual::constant).eps
}

fn seed_one<T: Real>(x: &[T], i: usize) -> Vec<Dual<T>> {
    x.iter()
        .enumerate()
        .map(|(k, &v)| if k == i { Dual::variable(v) } else { Dual::constant(v) })
        .collect()
}
