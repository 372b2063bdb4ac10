//! GLNN and baseline acceleration models.
//!
//! A [`GlnnModel`] pairs a scalar Lagrangian network with a force network,
//! both over the phase-space point `x = (q, q̇)`, and recovers accelerations
//! from the generalized Euler-Lagrange equation
//!
//! ```text
//! (∇_q̇∇_q̇ᵀ L + ridge·I) q̈ = ∇_q L − (∇_q̇∇_qᵀ L) q̇ + F
//! ```
//!
//! A [`BaselineModel`] regresses `q̈` directly from `x`.

use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_and_hessian_input, ScalarFn};
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Matrix, Vector};
use crate::mlp::{Activation, Dense, JetLayout, JetOrder, MlpConfig, MlpParams, MlpTape};
use crate::scalar::{Float, Real};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A generalized force `F(q, q̇)` evaluable over any scalar type.
pub trait ForceField<T: Real> {
    fn eval<S: Real>(&self, q: &[S], qdot: &[S], lift: impl Fn(T) -> S + Copy) -> Vec<S>;
}

impl<T: Real> ForceField<T> for MlpParams<T> {
    fn eval<S: Real>(&self, q: &[S], qdot: &[S], lift: impl Fn(T) -> S + Copy) -> Vec<S> {
        let x: Vec<S> = q.iter().chain(qdot).copied().collect();
        self.map(lift).eval(&x)
    }
}

/// `F ≡ 0`.
pub struct NoForce;

impl<T: Real> ForceField<T> for NoForce {
    fn eval<S: Real>(&self, q: &[S], _qdot: &[S], _lift: impl Fn(T) -> S + Copy) -> Vec<S> {
        vec![S::zero(); q.len()]
    }
}

/// Evaluates a Lagrangian on the concatenated phase-space point.
struct PhaseSpace<'a, L>(&'a L);

/// Generalized Euler-Lagrange acceleration for an arbitrary Lagrangian and
/// force, using exact nested forward-mode derivatives.
pub fn generalized_accel<T, L, F>(lagrangian: &L, force: &F, q: &[T], qdot: &[T], ridge: T) -> Result<Vector<T>>
where
    T: Real,
    L: ScalarFn<T>,
    F: ForceField<T>,
{
    let n = q.len();
    if qdot.len() != n {
        return Err(Error::Dimension { what: "velocity", expected: n, got: qdot.len() });
    }
    let x: Vec<T> = q.iter().chain(qdot).copied().collect();
    let (grad, hess) = grad_and_hessian_input(&PhaseSpace(lagrangian), &x)?;
    let f = force.eval(q, qdot, |c| c);
    if f.len() != n {
        return Err(Error::Dimension { what: "force output", expected: n, got: f.len() });
    }
    let (mass, rhs) = assemble(n, |i| grad[i], |i, j| hess[(i, j)], qdot, &f);
    solve_spd(&mass, &rhs, ridge)
}

impl<'a, T: Real, L: ScalarFn<T>> ScalarFn<T> for PhaseSpace<'a, L> {
    fn eval<S: Real>(&self, x: &[S], lift: impl Fn(T) -> S + Copy) -> S {
        self.0.eval(x, lift)
    }
}

/// Mass matrix `∇_q̇∇_q̇ᵀL` and right-hand side `∇_qL − (∇_q̇∇_qᵀL)q̇ + F`
/// from the phase-space gradient and Hessian accessors.
fn assemble<T: Real>(
    n: usize,
    grad: impl Fn(usize) -> T,
    hess: impl Fn(usize, usize) -> T,
    qdot: &[T],
    force: &[T],
) -> (Matrix<T>, Vec<T>) {
    let mut mass = Matrix::zeros(n, n);
    let mut rhs = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..n {
            mass[(i, j)] = hess(n + i, n + j);
        }
        let mut r = grad(i) + force[i];
        for (j, &v) in qdot.iter().enumerate() {
            r -= hess(n + i, j) * v;
        }
        rhs.push(r);
    }
    (mass.symmetrized(), rhs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Glnn,
    Baseline,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Glnn => "glnn",
            ModelKind::Baseline => "baseline",
        })
    }
}

/// Architecture shared by both networks of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Degrees of freedom `N`; networks see `2N` inputs.
    pub dof: usize,
    pub hidden_size: usize,
    pub n_hidden_layers: usize,
    pub lagrangian_activation: Activation,
    /// Activation of the force network and of the baseline network.
    pub force_activation: Activation,
    pub ridge: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dof == 0 {
            return Err(Error::Config("dof must be positive".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config("ridge must be finite and non-negative".into()));
        }
        self.lagrangian_net().validate()?;
        self.force_net().validate()
    }

    pub fn lagrangian_net(&self) -> MlpConfig {
        MlpConfig {
            input_dim: 2 * self.dof,
            hidden_size: self.hidden_size,
            n_hidden_layers: self.n_hidden_layers,
            output_dim: 1,
            activation: self.lagrangian_activation,
            seed: derive_seed(self.seed, 0),
        }
    }

    pub fn force_net(&self) -> MlpConfig {
        MlpConfig {
            input_dim: 2 * self.dof,
            hidden_size: self.hidden_size,
            n_hidden_layers: self.n_hidden_layers,
            output_dim: self.dof,
            activation: self.force_activation,
            seed: derive_seed(self.seed, 1),
        }
    }
}

/// Deterministic sub-seed for stream `k` of a master seed (splitmix64 step).
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlnnModel<T> {
    pub lagrangian: MlpParams<T>,
    pub force: MlpParams<T>,
    pub ridge: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel<T> {
    pub net: MlpParams<T>,
}

/// Either model family behind one interface.
#[derive(Clone, Debug, PartialEq)]
pub enum Model<T> {
    Glnn(GlnnModel<T>),
    Baseline(BaselineModel<T>),
}

impl<T: Real> GlnnModel<T> {
    pub fn new(lagrangian: MlpParams<T>, force: MlpParams<T>, ridge: T) -> Result<Self> {
        let d = lagrangian.config.input_dim;
        if d % 2 != 0 || lagrangian.config.output_dim != 1 {
            return Err(Error::Config("Lagrangian network must map R^(2N) to a scalar".into()));
        }
        if force.config.input_dim != d {
            return Err(Error::Dimension { what: "force network input", expected: d, got: force.config.input_dim });
        }
        if force.config.output_dim != d / 2 {
            return Err(Error::Dimension { what: "force network output", expected: d / 2, got: force.config.output_dim });
        }
        Ok(GlnnModel { lagrangian, force, ridge })
    }

    pub fn dof(&self) -> usize {
        self.lagrangian.config.input_dim / 2
    }

    /// Single-state acceleration via nested forward-mode derivatives.
    pub fn accel_exact(&self, q: &[T], qdot: &[T]) -> Result<Vector<T>> {
        check_state(self.dof(), q, qdot)?;
        generalized_accel(&self.lagrangian, &self.force, q, qdot, self.ridge)
    }
}

impl<T: Real> BaselineModel<T> {
    pub fn new(net: MlpParams<T>) -> Result<Self> {
        let c = &net.config;
        if c.input_dim != 2 * c.output_dim {
            return Err(Error::Dimension { what: "baseline network input", expected: 2 * c.output_dim, got: c.input_dim });
        }
        Ok(BaselineModel { net })
    }

    pub fn dof(&self) -> usize {
        self.net.config.output_dim
    }
}

fn check_state<T>(n: usize, q: &[T], qdot: &[T]) -> Result<()> {
    if q.len() != n {
        return Err(Error::Dimension { what: "position", expected: n, got: q.len() });
    }
    if qdot.len() != n {
        return Err(Error::Dimension { what: "velocity", expected: n, got: qdot.len() });
    }
    Ok(())
}

/// Forward record of a batched acceleration evaluation.
#[derive(Clone, Debug)]
pub enum AccelTape<T> {
    Glnn {
        lag: MlpTape<T>,
        lag_out: Array2<T>,
        force: MlpTape<T>,
        x: Array2<T>,
        qddot: Array2<T>,
        singular: Vec<bool>,
    },
    Baseline {
        net: MlpTape<T>,
    },
}

impl<T: Float> AccelTape<T> {
    /// Samples whose regularized mass matrix was singular (their acceleration
    /// is reported as zero and they carry no gradient).
    pub fn singular(&self) -> Vec<usize> {
        match self {
            AccelTape::Glnn { singular, .. } => {
                singular.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i).collect()
            }
            AccelTape::Baseline { .. } => Vec::new(),
        }
    }
}

impl<T: Float> Model<T> {
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(match config.kind {
            ModelKind::Glnn => Model::Glnn(GlnnModel::new(
                MlpParams::init(&config.lagrangian_net())?,
                MlpParams::init(&config.force_net())?,
                T::from_f64(config.ridge),
            )?),
            ModelKind::Baseline => Model::Baseline(BaselineModel::new(MlpParams::init(&config.force_net())?)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Glnn(_) => ModelKind::Glnn,
            Model::Baseline(_) => ModelKind::Baseline,
        }
    }

    pub fn dof(&self) -> usize {
        match self {
            Model::Glnn(m) => m.dof(),
            Model::Baseline(m) => m.dof(),
        }
    }

    pub fn nets(&self) -> Vec<&MlpParams<T>> {
        match self {
            Model::Glnn(m) => vec![&m.lagrangian, &m.force],
            Model::Baseline(m) => vec![&m.net],
        }
    }

    pub fn nets_mut(&mut self) -> Vec<&mut MlpParams<T>> {
        match self {
            Model::Glnn(m) => vec![&mut m.lagrangian, &mut m.force],
            Model::Baseline(m) => vec![&mut m.net],
        }
    }

    pub fn net_names(&self) -> &'static [&'static str] {
        match self {
            Model::Glnn(_) => &["lagrangian", "force"],
            Model::Baseline(_) => &["net"],
        }
    }

    pub fn zero_grads(&self) -> Vec<MlpParams<T>> {
        self.nets().iter().map(|p| p.zeros_like()).collect()
    }

    pub fn n_params(&self) -> usize {
        self.nets().iter().map(|p| p.n_params()).sum()
    }

    /// Single-state acceleration.
    pub fn accel(&self, q: &[T], qdot: &[T]) -> Result<Vector<T>> {
        check_state(self.dof(), q, qdot)?;
        let x = Array2::from_shape_fn((2 * q.len(), 1), |(i, _)| if i < q.len() { q[i] } else { qdot[i - q.len()] });
        let (qddot, tape) = self.accel_batch(x.view())?;
        if !tape.singular().is_empty() {
            let det = self.mass_det(q, qdot).map(|d| d.value()).unwrap_or(0.0);
            return Err(Error::SingularMassMatrix { det });
        }
        Ok(Vector(qddot.column(0).to_vec()))
    }

    fn mass_det(&self, q: &[T], qdot: &[T]) -> Option<T> {
        let Model::Glnn(m) = self else { return None };
        let x: Vec<T> = q.iter().chain(qdot).copied().collect();
        let (_, h) = grad_and_hessian_input(&m.lagrangian, &x).ok()?;
        let n = q.len();
        let r = m.ridge;
        Some(match n {
            1 => h[(1, 1)] + r,
            2 => (h[(2, 2)] + r) * (h[(3, 3)] + r) - h[(2, 3)] * h[(3, 2)],
            _ => return None,
        })
    }

    /// Batched accelerations. `x` holds one phase-space point `(q, q̇)` per
    /// column; the result is `N × batch`. Singular samples are flagged on the
    /// tape rather than failing the whole batch.
    pub fn accel_batch(&self, x: ArrayView2<T>) -> Result<(Array2<T>, AccelTape<T>)> {
        let n = self.dof();
        if x.nrows() != 2 * n {
            return Err(Error::Dimension { what: "phase-space rows", expected: 2 * n, got: x.nrows() });
        }
        match self {
            Model::Baseline(m) => {
                let (out, tape) = m.net.forward_jet(x, JetOrder::Value);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericOverflow("baseline acceleration".into()));
                }
                Ok((out, AccelTape::Baseline { net: tape }))
            }
            Model::Glnn(m) => {
                let (lag_out, lag) = m.lagrangian.forward_jet(x, JetOrder::Hessian);
                let (f_out, force) = m.force.forward_jet(x, JetOrder::Value);
                let layout = lag.layout;
                let b = layout.batch;
                let mut qddot = Array2::zeros((n, b));
                let mut singular = vec![false; b];
                for s in 0..b {
                    let qdot: Vec<T> = (0..n).map(|i| x[[n + i, s]]).collect();
                    let f: Vec<T> = (0..n).map(|i| f_out[[i, s]]).collect();
                    let (mass, rhs) = assemble(
                        n,
                        |i| lag_out[[0, layout.tangent(i) * b + s]],
                        |i, j| lag_out[[0, layout.pair(i, j) * b + s]],
                        &qdot,
                        &f,
                    );
                    match solve_spd(&mass, &rhs, m.ridge) {
                        Ok(a) => {
                            for i in 0..n {
                                qddot[[i, s]] = a[i];
                            }
                        }
                        Err(Error::SingularMassMatrix { .. }) => singular[s] = true,
                        Err(e) => return Err(e),
                    }
                }
                if qddot.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericOverflow("GLNN acceleration".into()));
                }
                let tape = AccelTape::Glnn { lag, lag_out, force, x: x.to_owned(), qddot: qddot.clone(), singular };
                Ok((qddot, tape))
            }
        }
    }

    /// Reverse sweep of [`accel_batch`](Self::accel_batch): given the adjoint
    /// of the accelerations (`N × batch`), returns parameter gradients (one
    /// per network, in [`nets`](Self::nets) order) and optionally the adjoint
    /// of the phase-space inputs (`2N × batch`).
    pub fn accel_backward(
        &self,
        tape: &AccelTape<T>,
        qddot_bar: ArrayView2<T>,
        want_input: bool,
    ) -> (Vec<MlpParams<T>>, Option<Array2<T>>) {
        match (self, tape) {
            (Model::Baseline(m), AccelTape::Baseline { net }) => {
                let (g, xb) = m.net.backward_jet(net, qddot_bar, want_input);
                (vec![g], xb)
            }
            (Model::Glnn(m), AccelTape::Glnn { lag, lag_out, force, x, qddot, singular }) => {
                let n = self.dof();
                let layout: JetLayout = lag.layout;
                let b = layout.batch;
                let mut lag_bar = Array2::zeros(lag_out.raw_dim());
                let mut f_bar = Array2::zeros((n, b));
                let mut qdot_bar = Array2::<T>::zeros((n, b));
                let h = |i: usize, j: usize, s: usize| lag_out[[0, layout.pair(i, j) * b + s]];
                for s in 0..b {
                    if singular[s] {
                        continue;
                    }
                    let mut mass = Matrix::zeros(n, n);
                    for i in 0..n {
                        for j in 0..n {
                            mass[(i, j)] = h(n + i, n + j, s);
                        }
                    }
                    let mass = mass.symmetrized();
                    let ybar: Vec<T> = (0..n).map(|i| qddot_bar[[i, s]]).collect();
                    // the solve succeeded on the forward pass with this matrix
                    let cbar = solve_spd(&mass, &ybar, m.ridge).expect("non-singular on forward pass");
                    for i in 0..n {
                        // right-hand side: ∇_q L, F and the mixed Hessian term
                        lag_bar[[0, layout.tangent(i) * b + s]] += cbar[i];
                        f_bar[[i, s]] = cbar[i];
                        for j in 0..n {
                            let v = x[[n + j, s]];
                            lag_bar[[0, layout.pair(n + i, j) * b + s]] -= cbar[i] * v;
                            qdot_bar[[j, s]] -= cbar[i] * h(n + i, j, s);
                        }
                        // mass matrix: Ā = −c̄ q̈ᵀ, folded onto the stored upper triangle
                        for j in 0..n {
                            let abar = -cbar[i] * qddot[[j, s]];
                            lag_bar[[0, layout.pair(n + i, n + j) * b + s]] += abar;
                        }
                    }
                }
                let (g_lag, xb_lag) = m.lagrangian.backward_jet(lag, lag_bar.view(), want_input);
                let (g_force, xb_force) = m.force.backward_jet(force, f_bar.view(), want_input);
                let x_bar = if want_input {
                    let mut xb = xb_lag.unwrap();
                    xb += &xb_force.unwrap();
                    let mut tail = xb.slice_mut(s![n.., ..]);
                    tail += &qdot_bar;
                    Some(xb)
                } else {
                    None
                };
                (vec![g_lag, g_force], x_bar)
            }
            _ => panic!("tape does not belong to this model"),
        }
    }

    pub fn save(&self, path: &Path, config: &ModelConfig) -> Result<()> {
        let file = ModelFile::from_model(self, config);
        let text = serde_json::to_string_pretty(&file).map_err(|e| Error::malformed(None, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, ModelConfig)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<(Self, ModelConfig)> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::malformed(Some(e.line()), e.to_string()))?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        match version {
            Some(v) if v == MODEL_FORMAT_VERSION as u64 => {}
            Some(v) => return Err(Error::Version { found: v as u32, expected: MODEL_FORMAT_VERSION }),
            None => return Err(Error::malformed(None, "missing format_version")),
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::malformed(None, e.to_string()))?;
        file.into_model()
    }
}

/// On-disk model document. Weight matrices are stored row-major.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    config: ModelConfig,
    ridge: f64,
    networks: Vec<NetFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetFile {
    name: String,
    config: MlpConfig,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl ModelFile {
    fn from_model<T: Float>(model: &Model<T>, config: &ModelConfig) -> Self {
        let ridge = match model {
            Model::Glnn(m) => m.ridge.value(),
            Model::Baseline(_) => config.ridge,
        };
        let networks = model
            .nets()
            .into_iter()
            .zip(model.net_names())
            .map(|(p, name)| NetFile {
                name: name.to_string(),
                config: p.config.clone(),
                layers: p
                    .layers
                    .iter()
                    .map(|l| LayerFile {
                        rows: l.weight.nrows(),
                        cols: l.weight.ncols(),
                        weight: l.weight.iter().map(|w| w.value()).collect(),
                        bias: l.bias.iter().map(|w| w.value()).collect(),
                    })
                    .collect(),
            })
            .collect();
        ModelFile { format_version: MODEL_FORMAT_VERSION, config: config.clone(), ridge, networks }
    }

    fn into_model<T: Float>(self) -> Result<(Model<T>, ModelConfig)> {
        self.config.validate()?;
        let mut nets = Vec::with_capacity(self.networks.len());
        for net in self.networks {
            let shapes = net.config.layer_shapes();
            if shapes.len() != net.layers.len() {
                return Err(Error::malformed(None, format!("network `{}` has the wrong number of layers", net.name)));
            }
            let mut layers = Vec::with_capacity(shapes.len());
            for ((rows, cols), l) in shapes.into_iter().zip(net.layers) {
                if l.rows != rows || l.cols != cols || l.weight.len() != rows * cols || l.bias.len() != rows {
                    return Err(Error::malformed(None, format!("layer shape mismatch in network `{}`", net.name)));
                }
                let weight = Array2::from_shape_vec((rows, cols), l.weight.into_iter().map(T::from_f64).collect())
                    .map_err(|e| Error::malformed(None, e.to_string()))?;
                layers.push(Dense { weight, bias: l.bias.into_iter().map(T::from_f64).collect() });
            }
            nets.push((net.name, MlpParams { config: net.config, layers }));
        }
        let model = match (self.config.kind, nets.len()) {
            (ModelKind::Glnn, 2) => {
                let force = nets.pop().unwrap().1;
                let lag = nets.pop().unwrap().1;
                Model::Glnn(GlnnModel::new(lag, force, T::from_f64(self.ridge))?)
            }
            (ModelKind::Baseline, 1) => Model::Baseline(BaselineModel::new(nets.pop().unwrap().1)?),
            (kind, k) => return Err(Error::malformed(None, format!("{kind} model with {k} networks"))),
        };
        if model.dof() != self.config.dof {
            return Err(Error::malformed(None, "network dimensions disagree with config.dof"));
        }
        Ok((model, self.config))
    }
}
