//! Dense feed-forward networks with smooth activations.
//!
//! Two evaluation paths share one parameter type:
//!
//! * [`MlpParams::eval`] runs a single input through the network over any
//!   [`Real`] scalar, so nested [`Dual`](crate::dual::Dual) numbers give exact
//!   input and parameter derivatives of any order.
//! * [`MlpParams::forward_jet`] / [`MlpParams::backward_jet`] run a whole batch
//!   through GEMM kernels while propagating input tangents (first order) and
//!   pairwise second tangents (second order) alongside the primal values. The
//!   reverse sweep over that computation yields parameter gradients of any
//!   loss built from the network value, its input gradient and its input
//!   Hessian; this is what training uses.
//!
//! Jet matrices are laid out channel-major: for a batch of `B` samples the
//! columns `c·B .. (c+1)·B` hold channel `c`, where channel 0 is the primal
//! value, channels `1..=D` the tangents along each input axis and the
//! remaining channels the second tangents for the pairs `(i, j)`, `i ≤ j`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Float, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<S: Real>(self, x: S) -> S {
        match self {
            Activation::Softplus => x.softplus(),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Value and the first three derivatives at `x`.
    #[inline]
    pub fn derivatives<T: Float>(self, x: T) -> [T; 4] {
        let one = T::one();
        let two = one + one;
        match self {
            Activation::Softplus => {
                // one exponential serves both the value and the logistic
                let pos = x.value() >= 0.0;
                let e = if pos { Real::exp(-x) } else { Real::exp(x) };
                let r = one / (one + e);
                let (sp, s) = if pos { (x + Real::ln_1p(e), r) } else { (Real::ln_1p(e), e * r) };
                let d2 = s * (one - s);
                [sp, s, d2, d2 * (one - two * s)]
            }
            Activation::Tanh => {
                let t = Real::tanh(x);
                let d1 = one - t * t;
                let six = two + two + two;
                [t, d1, -two * t * d1, d1 * (six * t * t - two)]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_size: usize,
    pub n_hidden_layers: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("network input and output dimensions must be positive".into()));
        }
        if self.hidden_size == 0 {
            return Err(Error::Config("hidden_size must be at least 1".into()));
        }
        if self.n_hidden_layers == 0 {
            return Err(Error::Config("n_hidden_layers must be at least 1".into()));
        }
        Ok(())
    }

    /// `(fan_out, fan_in)` of every affine layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.n_hidden_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.n_hidden_layers {
            shapes.push((self.hidden_size, fan_in));
            fan_in = self.hidden_size;
        }
        shapes.push((self.output_dim, fan_in));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|&(o, i)| o * i + o).sum()
    }
}

/// One affine layer: `weight` is `fan_out × fan_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub config: MlpConfig,
    pub layers: Vec<Dense<T>>,
}

/// Which derivative channels a jet pass carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum JetOrder {
    Value = 0,
    Gradient = 1,
    Hessian = 2,
}

/// Channel bookkeeping for a jet pass over `dim` inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JetLayout {
    pub order: JetOrder,
    pub dim: usize,
    pub batch: usize,
}

impl JetLayout {
    pub fn n_pairs(&self) -> usize {
        if self.order == JetOrder::Hessian {
            self.dim * (self.dim + 1) / 2
        } else {
            0
        }
    }

    pub fn n_tangents(&self) -> usize {
        if self.order >= JetOrder::Gradient {
            self.dim
        } else {
            0
        }
    }

    pub fn channels(&self) -> usize {
        1 + self.n_tangents() + self.n_pairs()
    }

    pub fn width(&self) -> usize {
        self.channels() * self.batch
    }

    /// Channel index of the tangent along input axis `i`.
    pub fn tangent(&self, i: usize) -> usize {
        1 + i
    }

    /// Channel index of the second tangent for the unordered pair `(i, j)`.
    pub fn pair(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // pairs enumerated row by row over the upper triangle
        1 + self.dim + i * self.dim - i * (i + 1) / 2 + j
    }

    /// Column range of channel `c`.
    pub fn cols(&self, c: usize) -> std::ops::Range<usize> {
        c * self.batch..(c + 1) * self.batch
    }

    fn pair_list(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::with_capacity(self.n_pairs());
        if self.order == JetOrder::Hessian {
            for i in 0..self.dim {
                for j in i..self.dim {
                    v.push((i, j));
                }
            }
        }
        v
    }
}

/// Everything the reverse sweep needs from a jet forward pass.
#[derive(Clone, Debug)]
pub struct MlpTape<T> {
    pub layout: JetLayout,
    /// Layer inputs `z_0 … z_L` (jet matrices, `z_0` holds the seeded input).
    inputs: Vec<Array2<T>>,
    /// Hidden pre-activations `a_1 … a_L`.
    pre: Vec<Array2<T>>,
}

impl<T: Real> MlpParams<T> {
    /// Glorot-uniform weights and zero biases, drawn from a ChaCha stream
    /// seeded with `config.seed`.
    pub fn init(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(fan_out, fan_in)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = Array2::from_shape_fn((fan_out, fan_in), |_| {
                    T::from_f64(rng.random_range(-limit..limit))
                });
                Dense { weight, bias: Array1::from_elem(fan_out, T::zero()) }
            })
            .collect();
        Ok(MlpParams { config: config.clone(), layers })
    }

    pub fn zeros(config: &MlpConfig) -> Self {
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(o, i)| Dense {
                weight: Array2::from_elem((o, i), T::zero()),
                bias: Array1::from_elem(o, T::zero()),
            })
            .collect();
        MlpParams { config: config.clone(), layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    pub fn map<S: Real>(&self, mut f: impl FnMut(T) -> S) -> MlpParams<S> {
        MlpParams {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Dense { weight: l.weight.mapv(&mut f), bias: l.bias.mapv(&mut f) })
                .collect(),
        }
    }

    /// Re-expresses the parameters as constants of another scalar type.
    pub fn lift<S: Real>(&self) -> MlpParams<S> {
        self.map(|w| S::from_f64(w.value()))
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter blocks in storage order (`weight` row-major, then `bias`, per
    /// layer) together with their names.
    pub fn blocks(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{k}.weight"), l.weight.as_slice().expect("standard layout")));
            out.push((format!("layer{k}.bias"), l.bias.as_slice().expect("standard layout")));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in self.layers.iter_mut() {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn flat(&self) -> Vec<T> {
        self.blocks().into_iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[T]) {
        assert_eq!(values.len(), self.n_params());
        let mut it = values.iter().copied();
        for block in self.blocks_mut() {
            for w in block.iter_mut() {
                *w = it.next().unwrap();
            }
        }
    }

    /// Name of the first block holding a non-finite entry, if any.
    pub fn first_non_finite_block(&self) -> Option<String> {
        self.blocks().into_iter().find(|(_, b)| b.iter().any(|x| !x.is_finite())).map(|(n, _)| n)
    }

    /// Single-sample forward pass over any scalar type.
    pub fn eval(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.config.input_dim, "network input dimension");
        let act = self.config.activation;
        let last = self.layers.len() - 1;
        let mut h: Vec<T> = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.bias.len());
            for (row, &b) in layer.weight.rows().into_iter().zip(layer.bias.iter()) {
                let mut acc = b;
                for (&w, &v) in row.iter().zip(h.iter()) {
                    acc += w * v;
                }
                next.push(if k == last { acc } else { act.apply(acc) });
            }
            h = next;
        }
        h
    }
}

impl<T: Float> MlpParams<T> {
    /// `self += scale · other`, blockwise.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    /// Batched forward pass. `x` is `input_dim × batch`; the result is
    /// `output_dim × (channels·batch)` in the channel-major jet layout.
    pub fn forward_jet(&self, x: ArrayView2<T>, order: JetOrder) -> (Array2<T>, MlpTape<T>) {
        let dim = self.config.input_dim;
        assert_eq!(x.nrows(), dim, "network input dimension");
        let layout = JetLayout { order, dim, batch: x.ncols() };
        let width = layout.width();
        let act = self.config.activation;

        let mut z0 = Array2::zeros((dim, width));
        z0.slice_mut(s![.., layout.cols(0)]).assign(&x);
        for i in 0..layout.n_tangents() {
            z0.slice_mut(s![i, layout.cols(layout.tangent(i))]).fill(T::one());
        }

        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        inputs.push(z0);
        let pairs = layout.pair_list();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = inputs.last().unwrap();
            let mut a = Array2::zeros((layer.weight.nrows(), width));
            general_mat_mul(T::one(), &layer.weight, z, T::zero(), &mut a);
            let mut primal = a.slice_mut(s![.., layout.cols(0)]);
            primal += &layer.bias.view().insert_axis(Axis(1));
            if k == last {
                return (a, MlpTape { layout, inputs, pre });
            }
            let mut out = Array2::zeros(a.raw_dim());
            let mut scratch = RowScratch::new(layout.batch);
            for (arow, orow) in a.rows().into_iter().zip(out.rows_mut()) {
                activate_row(
                    act,
                    &layout,
                    &pairs,
                    &mut scratch,
                    arow.as_slice().unwrap(),
                    orow.into_slice().unwrap(),
                );
            }
            pre.push(a);
            inputs.push(out);
        }
        unreachable!("network has an output layer")
    }

    /// Reverse sweep of [`forward_jet`](Self::forward_jet).
    ///
    /// `out_bar` is the adjoint of the jet output (same shape). Returns the
    /// parameter gradient and, when requested, the adjoint of the primal
    /// input (`input_dim × batch`). Seeded tangents are constants and carry no
    /// adjoint.
    pub fn backward_jet(
        &self,
        tape: &MlpTape<T>,
        out_bar: ArrayView2<T>,
        want_input: bool,
    ) -> (MlpParams<T>, Option<Array2<T>>) {
        let layout = tape.layout;
        let act = self.config.activation;
        let pairs = layout.pair_list();
        let mut grads = self.zeros_like();
        let n = self.layers.len();

        let mut adj = out_bar.to_owned();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let z_in = &tape.inputs[k];
            general_mat_mul(T::one(), &adj, &z_in.t(), T::zero(), &mut grads.layers[k].weight);
            grads.layers[k].bias = adj.slice(s![.., layout.cols(0)]).sum_axis(Axis(1));
            if k == 0 {
                if !want_input {
                    return (grads, None);
                }
                let mut x_bar = Array2::zeros((layout.dim, layout.batch));
                general_mat_mul(
                    T::one(),
                    &layer.weight.t(),
                    &adj.slice(s![.., layout.cols(0)]),
                    T::zero(),
                    &mut x_bar,
                );
                return (grads, Some(x_bar));
            }
            let mut z_bar = Array2::zeros(z_in.raw_dim());
            general_mat_mul(T::one(), &layer.weight.t(), &adj, T::zero(), &mut z_bar);
            let a = &tape.pre[k - 1];
            let mut a_bar = Array2::zeros(a.raw_dim());
            let mut scratch = RowScratch::new(layout.batch);
            for ((arow, zrow), brow) in a.rows().into_iter().zip(z_bar.rows()).zip(a_bar.rows_mut()) {
                activate_row_backward(
                    act,
                    &layout,
                    &pairs,
                    &mut scratch,
                    arow.as_slice().unwrap(),
                    zrow.as_slice().unwrap(),
                    brow.into_slice().unwrap(),
                );
            }
            adj = a_bar;
        }
        unreachable!()
    }

    /// Batched plain forward pass (`input_dim × batch` → `output_dim × batch`).
    pub fn forward_batch(&self, x: ArrayView2<T>) -> Array2<T> {
        self.forward_jet(x, JetOrder::Value).0
    }
}

/// Per-row scratch holding activation derivatives for every sample.
struct RowScratch<T> {
    d: [Vec<T>; 4],
}

impl<T: Float> RowScratch<T> {
    fn new(batch: usize) -> Self {
        RowScratch { d: std::array::from_fn(|_| vec![T::zero(); batch]) }
    }

    fn fill(&mut self, act: Activation, primal: &[T]) {
        for (s, &a) in primal.iter().enumerate() {
            let d = act.derivatives(a);
            for k in 0..4 {
                self.d[k][s] = d[k];
            }
        }
    }
}

/// Forward activation of one neuron's jet row.
fn activate_row<T: Float>(
    act: Activation,
    layout: &JetLayout,
    pairs: &[(usize, usize)],
    scratch: &mut RowScratch<T>,
    a: &[T],
    z: &mut [T],
) {
    let b = layout.batch;
    let nt = layout.n_tangents();
    scratch.fill(act, &a[..b]);
    let [d0, d1, d2, _] = &scratch.d;
    z[..b].copy_from_slice(d0);
    for i in 0..nt {
        let c = (1 + i) * b;
        for ((zv, &av), &g) in z[c..c + b].iter_mut().zip(&a[c..c + b]).zip(d1) {
            *zv = g * av;
        }
    }
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let c = (1 + nt + p) * b;
        let ai = &a[(1 + i) * b..(2 + i) * b];
        let aj = &a[(1 + j) * b..(2 + j) * b];
        let ap = &a[c..c + b];
        for s in 0..b {
            z[c + s] = d2[s] * ai[s] * aj[s] + d1[s] * ap[s];
        }
    }
}

/// Adjoint of [`activate_row`]: maps the post-activation adjoint row `z_bar`
/// to the pre-activation adjoint row `a_bar`.
fn activate_row_backward<T: Float>(
    act: Activation,
    layout: &JetLayout,
    pairs: &[(usize, usize)],
    scratch: &mut RowScratch<T>,
    a: &[T],
    z_bar: &[T],
    a_bar: &mut [T],
) {
    let b = layout.batch;
    let nt = layout.n_tangents();
    scratch.fill(act, &a[..b]);
    let [_, d1, d2, d3] = &scratch.d;
    let (primal, rest) = a_bar.split_at_mut(b);
    for s in 0..b {
        primal[s] = d1[s] * z_bar[s];
    }
    for i in 0..nt {
        let c = (1 + i) * b;
        let at = &a[c..c + b];
        let zt = &z_bar[c..c + b];
        let out = &mut rest[c - b..c];
        for s in 0..b {
            primal[s] += d2[s] * at[s] * zt[s];
            out[s] = d1[s] * zt[s];
        }
    }
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let c = (1 + nt + p) * b;
        let ai = &a[(1 + i) * b..(2 + i) * b];
        let aj = &a[(1 + j) * b..(2 + j) * b];
        let ap = &a[c..c + b];
        let g = &z_bar[c..c + b];
        for s in 0..b {
            primal[s] += (d3[s] * ai[s] * aj[s] + d2[s] * ap[s]) * g[s];
        }
        let (tangents, seconds) = rest.split_at_mut(nt * b);
        let out = &mut seconds[(c - b - nt * b)..(c - nt * b)];
        for s in 0..b {
            out[s] = d1[s] * g[s];
        }
        if i == j {
            let ti = &mut tangents[i * b..(i + 1) * b];
            for s in 0..b {
                ti[s] += (d2[s] + d2[s]) * ai[s] * g[s];
            }
        } else {
            let (lo, hi) = tangents.split_at_mut(j * b);
            let ti = &mut lo[i * b..(i + 1) * b];
            let tj = &mut hi[..b];
            for s in 0..b {
                ti[s] += d2[s] * aj[s] * g[s];
                tj[s] += d2[s] * ai[s] * g[s];
            }
        }
    }
}
