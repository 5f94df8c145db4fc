//! Small dense networks with hand-derived backward passes.
//!
//! A [`Network`] is a ReLU trunk followed by any number of heads, each head a
//! single dense layer attached to the last trunk layer with its own output
//! activation. Everything is batched: inputs are `n × input_dim` matrices and
//! every cached activation keeps the batch as its leading axis.

mod snapshot;

pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("unknown head `{0}`")]
    UnknownHead(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// Output nonlinearity of a head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Linear,
    Sigmoid,
    /// Softmax applied independently to `groups` equal contiguous blocks of the
    /// output, each at the given temperature.
    Softmax { groups: usize, temperature: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    pub name: String,
    pub output_dim: usize,
    pub activation: Activation,
}

impl HeadSpec {
    pub fn new(name: impl Into<String>, output_dim: usize, activation: Activation) -> Self {
        Self {
            name: name.into(),
            output_dim,
            activation,
        }
    }
}

/// Shape of a network: input width, ReLU trunk widths, heads on the last trunk layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub heads: Vec<HeadSpec>,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 {
            return Err(NnError::InvalidSpec("input_dim must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(NnError::InvalidSpec("hidden widths must be positive".into()));
        }
        for (i, head) in self.heads.iter().enumerate() {
            if head.output_dim == 0 {
                return Err(NnError::InvalidSpec(format!("head `{}` has zero width", head.name)));
            }
            if self.heads[..i].iter().any(|h| h.name == head.name) {
                return Err(NnError::InvalidSpec(format!("duplicate head `{}`", head.name)));
            }
            if let Activation::Softmax { groups, temperature } = head.activation {
                if groups == 0 || head.output_dim % groups != 0 {
                    return Err(NnError::InvalidSpec(format!(
                        "head `{}`: {} outputs do not split into {} softmax groups",
                        head.name, head.output_dim, groups
                    )));
                }
                if !(temperature > 0.0) {
                    return Err(NnError::InvalidSpec("softmax temperature must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Width feeding the heads.
    pub fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }

    pub fn head_index(&self, name: &str) -> Result<usize, NnError> {
        self.heads
            .iter()
            .position(|h| h.name == name)
            .ok_or_else(|| NnError::UnknownHead(name.to_string()))
    }

    /// Closed-form scalar parameter count, `Σ (out·in + out)` over all layers.
    pub fn parameter_count(&self) -> usize {
        let mut fan_in = self.input_dim;
        let mut total = 0;
        for &w in &self.hidden {
            total += w * fan_in + w;
            fan_in = w;
        }
        total
            + self
                .heads
                .iter()
                .map(|h| h.output_dim * fan_in + h.output_dim)
                .sum::<usize>()
    }
}

/// One fully connected layer, `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weights: Array2::zeros((out_dim, in_dim)),
            biases: Array1::zeros(out_dim),
        }
    }

    /// Weights uniform in `±1/√fan_in`, zero biases.
    pub fn init_uniform<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((out_dim, in_dim), || rng.gen_range(-bound..=bound));
        Self {
            weights,
            biases: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn forward(&self, input: ArrayView1<f64>) -> Result<Array1<f64>, NnError> {
        if input.len() != self.in_dim() {
            return Err(NnError::DimensionMismatch {
                context: "dense_forward",
                expected: self.in_dim(),
                actual: input.len(),
            });
        }
        Ok(self.weights.dot(&input) + &self.biases)
    }

    /// Row-batched forward; the caller guarantees `input.ncols() == in_dim`.
    fn forward_batch(&self, input: ArrayView2<f64>) -> Array2<f64> {
        let mut out = matmul(input, self.weights.t());
        out += &self.biases;
        out
    }

    fn slices(&self) -> [&[f64]; 2] {
        [
            self.weights.as_slice_memory_order().expect("owned layers are contiguous"),
            self.biases.as_slice_memory_order().expect("owned layers are contiguous"),
        ]
    }

    fn sum_squares(&self) -> f64 {
        self.slices().iter().map(|s| lane_sum(s, |v| v * v)).sum()
    }

    #[allow(clippy::eq_op)]
    fn all_finite(&self) -> bool {
        // v - v is NaN exactly when v is infinite or NaN.
        self.slices().iter().all(|s| lane_sum(s, |v| v - v) == 0.0)
    }

    fn same_shape(&self, other: &DenseLayer) -> bool {
        self.weights.dim() == other.weights.dim() && self.biases.len() == other.biases.len()
    }
}

/// `a · b`. Single-row products go through matrix-vector code, which avoids
/// the packing overhead of the general kernel.
fn matmul(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    if a.nrows() == 1 {
        b.t().dot(&a.row(0)).insert_axis(Axis(0))
    } else {
        a.dot(&b)
    }
}

/// `aᵀ · b`, an outer product when both have one row.
fn matmul_tn(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    if a.nrows() == 1 {
        let col = a.row(0).insert_axis(Axis(1));
        let row = b.row(0).insert_axis(Axis(0));
        &col * &row
    } else {
        a.t().dot(&b)
    }
}

/// `Σ f(v)` with eight independent accumulators so the loop vectorizes.
fn lane_sum(xs: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = [0.0; 8];
    let chunks = xs.chunks_exact(8);
    let tail: f64 = chunks.remainder().iter().map(|&v| f(v)).sum();
    for c in chunks {
        for (a, &v) in acc.iter_mut().zip(c) {
            *a += f(v);
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Free-standing form of [`DenseLayer::forward`].
pub fn dense_forward(layer: &DenseLayer, input: &[f64]) -> Result<Vec<f64>, NnError> {
    Ok(layer.forward(ArrayView1::from(input))?.to_vec())
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of `logits / temperature`.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out, temperature);
    out
}

/// `log softmax(logits / temperature)` by log-sum-exp.
pub fn log_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / temperature));
    let lse = logits.iter().map(|&v| (v / temperature - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&v| v / temperature - lse).collect()
}

fn softmax_in_place(values: &mut [f64], temperature: f64) {
    let max = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / temperature));
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v / temperature - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

/// Intermediate values of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    trunk_pre: Vec<Array2<f64>>,
    trunk_post: Vec<Array2<f64>>,
    head_pre: Vec<Array2<f64>>,
    head_out: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    /// Post-activation output of head `index`, one row per batch item.
    pub fn head(&self, index: usize) -> &Array2<f64> {
        &self.head_out[index]
    }

    /// Pre-activation output of head `index`.
    pub fn head_logits(&self, index: usize) -> &Array2<f64> {
        &self.head_pre[index]
    }

    fn features(&self) -> ArrayView2<'_, f64> {
        match self.trunk_post.last() {
            Some(a) => a.view(),
            None => self.input.view(),
        }
    }
}

/// Parameter-shaped container for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub trunk: Vec<DenseLayer>,
    pub heads: Vec<DenseLayer>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            trunk: net.trunk.iter().map(|l| DenseLayer::zeros(l.out_dim(), l.in_dim())).collect(),
            heads: net.heads.iter().map(|l| DenseLayer::zeros(l.out_dim(), l.in_dim())).collect(),
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.trunk.iter().chain(self.heads.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.trunk.iter_mut().chain(self.heads.iter_mut())
    }

    pub fn global_norm(&self) -> f64 {
        self.layers().map(DenseLayer::sum_squares).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers().all(DenseLayer::all_finite)
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in self.layers_mut() {
            layer.weights *= factor;
            layer.biases *= factor;
        }
    }

    /// `self += factor · other`.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.weights.scaled_add(factor, &b.weights);
            a.biases.scaled_add(factor, &b.biases);
        }
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascent,
    Descent,
}

/// Plain gradient step with optional global-norm clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    trunk: Vec<DenseLayer>,
    heads: Vec<DenseLayer>,
}

impl Network {
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self, NnError> {
        Self::build(spec, |out, inp| DenseLayer::init_uniform(out, inp, rng))
    }

    /// Every parameter zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self, NnError> {
        Self::build(spec, DenseLayer::zeros)
    }

    fn build(
        spec: NetworkSpec,
        mut make: impl FnMut(usize, usize) -> DenseLayer,
    ) -> Result<Self, NnError> {
        spec.validate()?;
        let mut fan_in = spec.input_dim;
        let mut trunk = Vec::with_capacity(spec.hidden.len());
        for &w in &spec.hidden {
            trunk.push(make(w, fan_in));
            fan_in = w;
        }
        let heads = spec.heads.iter().map(|h| make(h.output_dim, fan_in)).collect();
        Ok(Self { spec, trunk, heads })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn trunk(&self) -> &[DenseLayer] {
        &self.trunk
    }

    pub fn heads(&self) -> &[DenseLayer] {
        &self.heads
    }

    pub fn head_mut(&mut self, index: usize) -> &mut DenseLayer {
        &mut self.heads[index]
    }

    pub fn trunk_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.trunk
    }

    pub fn head_index(&self, name: &str) -> Result<usize, NnError> {
        self.spec.head_index(name)
    }

    /// Trunk layers followed by heads, in declaration order.
    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.trunk.iter().chain(self.heads.iter())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.trunk.iter_mut().chain(self.heads.iter_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(DenseLayer::parameter_count).sum()
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<ForwardCache, NnError> {
        if input.ncols() != self.spec.input_dim {
            return Err(NnError::DimensionMismatch {
                context: "forward",
                expected: self.spec.input_dim,
                actual: input.ncols(),
            });
        }
        let mut trunk_pre = Vec::with_capacity(self.trunk.len());
        let mut trunk_post: Vec<Array2<f64>> = Vec::with_capacity(self.trunk.len());
        for layer in &self.trunk {
            let prev = trunk_post.last().map(|a| a.view()).unwrap_or(input);
            let pre = layer.forward_batch(prev);
            let post = pre.mapv(|v| v.max(0.0));
            trunk_pre.push(pre);
            trunk_post.push(post);
        }
        let features = trunk_post.last().map(|a| a.view()).unwrap_or(input);
        let mut head_pre = Vec::with_capacity(self.heads.len());
        let mut head_out = Vec::with_capacity(self.heads.len());
        for (layer, spec) in self.heads.iter().zip(&self.spec.heads) {
            let pre = layer.forward_batch(features);
            let out = apply_activation(&pre, spec.activation);
            head_pre.push(pre);
            head_out.push(out);
        }
        Ok(ForwardCache {
            input: input.to_owned(),
            trunk_pre,
            trunk_post,
            head_pre,
            head_out,
        })
    }

    /// Forward pass for a single input vector (batch of one).
    pub fn forward_one(&self, input: &[f64]) -> Result<ForwardCache, NnError> {
        let view = ArrayView2::from_shape((1, input.len()), input).expect("contiguous slice");
        self.forward(view)
    }

    /// Gradients of `Σ_{n,i} g[n,i] · head_out[n,i]` for one head, where `g` is
    /// `output_gradient` (gradient with respect to the post-activation output).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        head: usize,
        output_gradient: ArrayView2<f64>,
    ) -> Result<Gradients, NnError> {
        let spec = self
            .spec
            .heads
            .get(head)
            .ok_or_else(|| NnError::UnknownHead(format!("#{head}")))?;
        let out = &cache.head_out[head];
        if output_gradient.dim() != out.dim() {
            return Err(NnError::DimensionMismatch {
                context: "backward output gradient",
                expected: out.len(),
                actual: output_gradient.len(),
            });
        }
        let pre_grad = activation_backward(out, output_gradient, spec.activation);
        self.backward_preactivation(cache, &[(head, pre_grad)])
    }

    /// Gradients given pre-activation gradients for any subset of heads.
    pub fn backward_preactivation(
        &self,
        cache: &ForwardCache,
        head_grads: &[(usize, Array2<f64>)],
    ) -> Result<Gradients, NnError> {
        self.check_cache(cache)?;
        let mut grads = Gradients {
            trunk: Vec::new(),
            heads: self.heads.iter().map(|l| DenseLayer::zeros(l.out_dim(), l.in_dim())).collect(),
        };
        let features = cache.features();
        let mut d_features = Array2::<f64>::zeros(features.dim());
        for (head, dz) in head_grads {
            let head = *head;
            if head >= self.heads.len() {
                return Err(NnError::UnknownHead(format!("#{head}")));
            }
            if dz.dim() != cache.head_pre[head].dim() {
                return Err(NnError::DimensionMismatch {
                    context: "backward head gradient",
                    expected: cache.head_pre[head].len(),
                    actual: dz.len(),
                });
            }
            let g = &mut grads.heads[head];
            g.weights += &matmul_tn(dz.view(), features);
            g.biases += &dz.sum_axis(Axis(0));
            d_features += &matmul(dz.view(), self.heads[head].weights.view());
        }
        let mut upstream = d_features;
        let mut trunk = Vec::with_capacity(self.trunk.len());
        for i in (0..self.trunk.len()).rev() {
            let mut dpre = upstream;
            Zip::from(&mut dpre)
                .and(&cache.trunk_pre[i])
                .for_each(|d, &p| {
                    if p <= 0.0 {
                        *d = 0.0
                    }
                });
            let prev = if i == 0 {
                cache.input.view()
            } else {
                cache.trunk_post[i - 1].view()
            };
            trunk.push(DenseLayer {
                weights: matmul_tn(dpre.view(), prev),
                biases: dpre.sum_axis(Axis(0)),
            });
            if i == 0 {
                break;
            }
            upstream = matmul(dpre.view(), self.trunk[i].weights.view());
        }
        trunk.reverse();
        grads.trunk = trunk;
        Ok(grads)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<(), NnError> {
        let stale = cache.trunk_pre.len() != self.trunk.len()
            || cache.head_pre.len() != self.heads.len()
            || cache.input.ncols() != self.spec.input_dim
            || cache
                .trunk_pre
                .iter()
                .zip(&self.trunk)
                .any(|(a, l)| a.ncols() != l.out_dim())
            || cache
                .head_pre
                .iter()
                .zip(&self.heads)
                .any(|(a, l)| a.ncols() != l.out_dim());
        if stale {
            return Err(NnError::InvalidSpec("forward cache does not match network".into()));
        }
        Ok(())
    }

    /// `p ← p ± lr·g`. Rejects non-finite gradients without touching the
    /// parameters.
    pub fn sgd_step(
        &mut self,
        grads: &Gradients,
        learning_rate: f64,
        direction: Direction,
    ) -> Result<(), NnError> {
        if !grads.is_finite() {
            return Err(NnError::NonFinite("gradient"));
        }
        self.step_checked_shape(grads, learning_rate, direction)
    }

    fn step_checked_shape(
        &mut self,
        grads: &Gradients,
        learning_rate: f64,
        direction: Direction,
    ) -> Result<(), NnError> {
        if grads.trunk.len() != self.trunk.len()
            || grads.heads.len() != self.heads.len()
            || grads.layers().zip(self.layers()).any(|(g, p)| !g.same_shape(p))
        {
            return Err(NnError::InvalidSpec("gradient shape does not match network".into()));
        }
        let signed = match direction {
            Direction::Ascent => learning_rate,
            Direction::Descent => -learning_rate,
        };
        for (p, g) in self.trunk.iter_mut().chain(self.heads.iter_mut()).zip(grads.layers()) {
            p.weights.scaled_add(signed, &g.weights);
            p.biases.scaled_add(signed, &g.biases);
        }
        Ok(())
    }

    /// Clip (if configured) then step.
    pub fn apply(
        &mut self,
        mut grads: Gradients,
        config: SgdConfig,
        direction: Direction,
    ) -> Result<(), NnError> {
        // A single NaN or infinity anywhere makes the norm non-finite.
        let norm = grads.global_norm();
        if !norm.is_finite() {
            return Err(NnError::NonFinite("gradient"));
        }
        if let Some(max) = config.clip_norm {
            if norm > max && norm > 0.0 {
                grads.scale(max / norm);
            }
        }
        self.step_checked_shape(&grads, config.learning_rate, direction)
    }

    /// Overwrite the trunk and every same-named head with values from `source`.
    pub fn copy_shared_from(&mut self, source: &Network) -> Result<(), NnError> {
        if self.trunk.len() != source.trunk.len()
            || self.trunk.iter().zip(&source.trunk).any(|(a, b)| !a.same_shape(b))
        {
            return Err(NnError::InvalidSpec("trunk shapes differ".into()));
        }
        self.trunk.clone_from_slice(&source.trunk);
        for (i, head) in self.spec.heads.iter().enumerate() {
            let j = source.head_index(&head.name)?;
            if !self.heads[i].same_shape(&source.heads[j]) {
                return Err(NnError::InvalidSpec(format!("head `{}` shapes differ", head.name)));
            }
            self.heads[i] = source.heads[j].clone();
        }
        Ok(())
    }

    /// Network with the same trunk and only the named heads, parameters copied.
    pub fn subnetwork(&self, head_names: &[&str]) -> Result<Network, NnError> {
        let mut heads = Vec::with_capacity(head_names.len());
        let mut head_specs = Vec::with_capacity(head_names.len());
        for name in head_names {
            let i = self.head_index(name)?;
            heads.push(self.heads[i].clone());
            head_specs.push(self.spec.heads[i].clone());
        }
        Ok(Network {
            spec: NetworkSpec {
                input_dim: self.spec.input_dim,
                hidden: self.spec.hidden.clone(),
                heads: head_specs,
            },
            trunk: self.trunk.clone(),
            heads,
        })
    }

    pub fn to_snapshot(&self) -> Vec<u8> {
        write_snapshot(self.layers())
    }

    /// Load parameters from a snapshot whose layer shapes match this network.
    pub fn load_snapshot(&mut self, bytes: &[u8]) -> Result<(), NnError> {
        let layers = read_snapshot(bytes)?;
        let expected = self.trunk.len() + self.heads.len();
        if layers.len() != expected {
            return Err(NnError::Snapshot(format!(
                "expected {expected} layers, found {}",
                layers.len()
            )));
        }
        if layers.iter().zip(self.layers()).any(|(a, b)| !a.same_shape(b)) {
            return Err(NnError::Snapshot("layer shapes do not match network".into()));
        }
        for (dst, src) in self.layers_mut().zip(layers) {
            *dst = src;
        }
        Ok(())
    }
}

fn apply_activation(pre: &Array2<f64>, activation: Activation) -> Array2<f64> {
    match activation {
        Activation::Linear => pre.clone(),
        Activation::Sigmoid => pre.mapv(sigmoid),
        Activation::Softmax { groups, temperature } => {
            let mut out = pre.clone();
            let width = pre.ncols() / groups;
            for mut row in out.rows_mut() {
                let row = row.as_slice_mut().expect("standard layout");
                for block in row.chunks_mut(width) {
                    softmax_in_place(block, temperature);
                }
            }
            out
        }
    }
}

/// Maps a post-activation gradient to a pre-activation gradient.
fn activation_backward(
    out: &Array2<f64>,
    grad: ArrayView2<f64>,
    activation: Activation,
) -> Array2<f64> {
    match activation {
        Activation::Linear => grad.to_owned(),
        Activation::Sigmoid => {
            let mut dz = grad.to_owned();
            Zip::from(&mut dz).and(out).for_each(|d, &y| *d *= y * (1.0 - y));
            dz
        }
        Activation::Softmax { groups, temperature } => {
            let width = out.ncols() / groups;
            let mut dz = Array2::zeros(out.dim());
            for ((y, g), mut d) in out.rows().into_iter().zip(grad.rows()).zip(dz.rows_mut()) {
                for k in 0..groups {
                    let range = k * width..(k + 1) * width;
                    let dot: f64 = range.clone().map(|j| g[j] * y[j]).sum();
                    for j in range {
                        d[j] = y[j] * (g[j] - dot) / temperature;
                    }
                }
            }
            dz
        }
    }
}

/// Free-standing form of [`Network::parameter_count`] for a spec.
pub fn parameter_count(spec: &NetworkSpec) -> usize {
    spec.parameter_count()
}
