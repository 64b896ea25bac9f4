//! Small deterministic dense-network engine: matrices, linear layers with
//! hand-written gradients, ReLU chains, RMSProp and weight clipping.

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward called without a cached forward pass")]
    NoCachedForward,
    #[error("clip threshold must be positive, got {0}")]
    NonPositiveClip(f64),
    #[error("bad parameter blob: {0}")]
    BadBlob(String),
}

/// Name of the PRNG every seeded stream uses.
pub const RNG_ALGORITHM: &str = "chacha20";

pub type SeededRng = ChaCha20Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumError> {
        if data.len() != rows * cols {
            return Err(NumError::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(NumError::ShapeMismatch("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Elementwise `max(0, x)`.
pub fn relu_forward(x: &Matrix) -> Matrix {
    Matrix {
        rows: x.rows,
        cols: x.cols,
        data: x.data.iter().map(|v| v.max(0.0)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    /// out x in
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub grad_weights: Matrix,
    pub grad_bias: Vec<f64>,
}

impl LinearLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self, NumError> {
        if bias.len() != weights.rows {
            return Err(NumError::ShapeMismatch(format!(
                "bias of length {} for {} outputs",
                bias.len(),
                weights.rows
            )));
        }
        Ok(LinearLayer {
            grad_weights: Matrix::zeros(weights.rows, weights.cols),
            grad_bias: vec![0.0; bias.len()],
            weights,
            bias,
        })
    }

    /// Uniform init in `[-sqrt(1/fan_in), sqrt(1/fan_in)]` for weights and bias.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (1.0 / in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let weights = Matrix {
            rows: out_dim,
            cols: in_dim,
            data: (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect(),
        };
        let bias = (0..out_dim).map(|_| dist.sample(rng)).collect();
        LinearLayer::new(weights, bias).expect("shapes are consistent by construction")
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.data.fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

/// `y = x W^T + b`, bias broadcast per row.
pub fn linear_forward(layer: &LinearLayer, x: &Matrix) -> Result<Matrix, NumError> {
    if x.cols != layer.in_dim() {
        return Err(NumError::ShapeMismatch(format!(
            "input has {} columns, layer expects {}",
            x.cols,
            layer.in_dim()
        )));
    }
    let (n, out, inp) = (x.rows, layer.out_dim(), layer.in_dim());
    let mut y = Matrix::zeros(n, out);
    for r in 0..n {
        let xr = x.row(r);
        let yr = y.row_mut(r);
        for (o, yo) in yr.iter_mut().enumerate() {
            let w = &layer.weights.data[o * inp..(o + 1) * inp];
            *yo = layer.bias[o] + w.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(y)
}

/// Clamps every weight and bias of `layer` into `[-c, c]`.
pub fn clip_weights(layer: &mut LinearLayer, c: f64) -> Result<(), NumError> {
    if c.is_nan() || c <= 0.0 {
        return Err(NumError::NonPositiveClip(c));
    }
    for w in layer.weights.data.iter_mut().chain(layer.bias.iter_mut()) {
        *w = w.clamp(-c, c);
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pre: Vec<Matrix>,
}

/// Linear layers with ReLU between them and a linear output.
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<LinearLayer>,
    cache: Option<ForwardCache>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Network {
    /// `widths = [in, h1, ..., out]`.
    pub fn new<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "a network needs at least one layer");
        let layers = widths
            .windows(2)
            .map(|w| LinearLayer::init(w[0], w[1], rng))
            .collect();
        Network {
            layers,
            cache: None,
        }
    }

    pub fn from_layers(layers: Vec<LinearLayer>) -> Result<Self, NumError> {
        if layers.is_empty() {
            return Err(NumError::ShapeMismatch("empty network".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NumError::ShapeMismatch(format!(
                    "layer emits {} units, next expects {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Network {
            layers,
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.in_dim()];
        w.extend(self.layers.iter().map(LinearLayer::out_dim));
        w
    }

    /// Inference without touching the cache.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix, NumError> {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = linear_forward(layer, &h)?;
            h = if i < last { relu_forward(&z) } else { z };
        }
        Ok(h)
    }

    /// Forward pass that caches activations for [`Network::backward`].
    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix, NumError> {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = linear_forward(layer, &h)?;
            inputs.push(h);
            h = if i < last {
                relu_forward(&z)
            } else {
                z.clone()
            };
            pre.push(z);
        }
        self.cache = Some(ForwardCache { inputs, pre });
        Ok(h)
    }

    /// Backpropagates `upstream` (dL/d output), accumulating parameter
    /// gradients, and returns dL/d input. Consumes the cached forward pass.
    pub fn backward(&mut self, upstream: &Matrix) -> Result<Matrix, NumError> {
        let cache = self.cache.take().ok_or(NumError::NoCachedForward)?;
        let last = self.layers.len() - 1;
        let out = &cache.pre[last];
        if upstream.rows != out.rows || upstream.cols != out.cols {
            return Err(NumError::ShapeMismatch(format!(
                "upstream gradient {}x{} for output {}x{}",
                upstream.rows, upstream.cols, out.rows, out.cols
            )));
        }
        let mut grad = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                // ReLU derivative, zero where pre-activation <= 0
                for (g, z) in grad.data.iter_mut().zip(&cache.pre[i].data) {
                    if *z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let layer = &mut self.layers[i];
            let input = &cache.inputs[i];
            let (n, out_dim, in_dim) = (grad.rows, layer.out_dim(), layer.in_dim());
            for r in 0..n {
                let gr = grad.row(r);
                let xr = input.row(r);
                for o in 0..out_dim {
                    let g = gr[o];
                    if g == 0.0 {
                        continue;
                    }
                    layer.grad_bias[o] += g;
                    let gw = &mut layer.grad_weights.data[o * in_dim..(o + 1) * in_dim];
                    for (w, x) in gw.iter_mut().zip(xr) {
                        *w += g * x;
                    }
                }
            }
            let mut next = Matrix::zeros(n, in_dim);
            for r in 0..n {
                let gr = grad.row(r);
                let nr = next.row_mut(r);
                for o in 0..out_dim {
                    let g = gr[o];
                    if g == 0.0 {
                        continue;
                    }
                    let w = &layer.weights.data[o * in_dim..(o + 1) * in_dim];
                    for (d, wv) in nr.iter_mut().zip(w) {
                        *d += g * wv;
                    }
                }
            }
            grad = next;
        }
        Ok(grad)
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(LinearLayer::zero_grad);
    }

    pub fn clip(&mut self, c: f64) -> Result<(), NumError> {
        self.layers.iter_mut().try_for_each(|l| clip_weights(l, c))
    }

    pub fn max_abs_param(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data.iter().chain(&l.bias))
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    const MAGIC: &'static [u8; 6] = b"NCNET\0";
    const VERSION: u32 = 1;

    /// Binary checkpoint: magic, version, layer count, then per layer the
    /// `(in, out)` shape header followed by little-endian weights and bias.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(Self::MAGIC);
        out.extend_from_slice(&Self::VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
            for v in l.weights.data.iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NumError> {
        let mut r = ByteReader::new(bytes);
        if r.take(Self::MAGIC.len())? != Self::MAGIC {
            return Err(NumError::BadBlob("bad magic".into()));
        }
        let version = r.u32()?;
        if version != Self::VERSION {
            return Err(NumError::BadBlob(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let in_dim = r.u32()? as usize;
            let out_dim = r.u32()? as usize;
            let weights = Matrix::from_vec(out_dim, in_dim, r.f64s(in_dim * out_dim)?)?;
            let bias = r.f64s(out_dim)?;
            layers.push(LinearLayer::new(weights, bias)?);
        }
        if !r.is_empty() {
            return Err(NumError::BadBlob("trailing bytes".into()));
        }
        Network::from_layers(layers)
    }
}

#[derive(Debug, Default)]
pub(crate) struct ByteWriter {
    pub(crate) bytes: Vec<u8>,
}

impl ByteWriter {
    pub(crate) fn raw(&mut self, b: &[u8]) {
        self.bytes.extend_from_slice(b);
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.raw(&v.to_le_bytes());
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.raw(&v.to_le_bytes());
    }

    pub(crate) fn f64(&mut self, v: f64) {
        self.raw(&v.to_le_bytes());
    }

    pub(crate) fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        vs.iter().for_each(|v| self.f64(*v));
    }

    pub(crate) fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.raw(s.as_bytes());
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], NumError> {
        if self.bytes.len() < n {
            return Err(NumError::BadBlob("truncated".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    pub(crate) fn u32(&mut self) -> Result<u32, NumError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, NumError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, NumError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>, NumError> {
        (0..n).map(|_| self.f64()).collect()
    }

    /// Length-prefixed counterpart of [`ByteWriter::f64s`].
    pub(crate) fn f64_vec(&mut self) -> Result<Vec<f64>, NumError> {
        let n = self.len_prefix(8)?;
        self.f64s(n)
    }

    pub(crate) fn str(&mut self) -> Result<String, NumError> {
        let n = self.len_prefix(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| NumError::BadBlob(e.to_string()))
    }

    fn len_prefix(&mut self, elem: usize) -> Result<usize, NumError> {
        let n = self.u64()? as usize;
        if n.saturating_mul(elem) > self.bytes.len() {
            return Err(NumError::BadBlob("length prefix exceeds blob".into()));
        }
        Ok(n)
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 1e-4,
            rho: 0.99,
            epsilon: 1e-8,
        }
    }
}

/// One RMSProp update over a flat parameter slice.
///
/// `cache <- rho*cache + (1-rho)*g^2`, `param <- param - lr*g/(sqrt(cache)+eps)`.
pub fn rmsprop_update(
    params: &mut [f64],
    grads: &[f64],
    cache: &mut [f64],
    cfg: &RmsPropConfig,
) -> Result<(), NumError> {
    if params.len() != grads.len() || params.len() != cache.len() {
        return Err(NumError::ShapeMismatch(format!(
            "params {}, grads {}, cache {}",
            params.len(),
            grads.len(),
            cache.len()
        )));
    }
    for ((p, g), c) in params.iter_mut().zip(grads).zip(cache.iter_mut()) {
        *c = cfg.rho * *c + (1.0 - cfg.rho) * g * g;
        *p -= cfg.learning_rate * g / (c.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Per-parameter squared-gradient averages for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub config: RmsPropConfig,
    cache: Vec<(Vec<f64>, Vec<f64>)>,
}

impl RmsPropState {
    pub fn new(net: &Network, config: RmsPropConfig) -> Self {
        RmsPropState {
            config,
            cache: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.data.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn cache_min(&self) -> f64 {
        self.cache
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b))
            .fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// Applies the accumulated gradients of `net`, then zeroes them.
    pub fn step(&mut self, net: &mut Network) -> Result<(), NumError> {
        if self.cache.len() != net.layers.len() {
            return Err(NumError::ShapeMismatch(
                "optimizer built for another network".into(),
            ));
        }
        for (layer, (cw, cb)) in net.layers.iter_mut().zip(self.cache.iter_mut()) {
            rmsprop_update(
                &mut layer.weights.data,
                &layer.grad_weights.data,
                cw,
                &self.config,
            )?;
            rmsprop_update(&mut layer.bias, &layer.grad_bias, cb, &self.config)?;
            layer.zero_grad();
        }
        Ok(())
    }
}

/// Seeded stream of uniform `[0, 1)` noise.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: SeededRng,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        NoiseStream {
            rng: seeded_rng(seed),
        }
    }

    pub fn uniform(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.gen::<f64>()).collect()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.rng.gen::<f64>();
        }
    }
}

pub fn uniform_noise(n: usize, stream: &mut NoiseStream) -> Vec<f64> {
    stream.uniform(n)
}
