use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::conv::{conv_backward_impl, conv_forward, ConvCache, ConvLayer};
use super::pool::{pool_backward, pool_forward, PoolCache, PoolKind, PoolLayer};
use super::tensor::{ImageBatch, ImageShape, Tensor};
use crate::error::{contract, shape_err, Error, Result};
use crate::numerics::{affine, xavier_init, ActivationKind, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Backpropagation.
    Bp,
    /// Direct feedback alignment.
    Dfa,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Bp => "bp",
            Backend::Dfa => "dfa",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum InputShape {
    Vector { size: usize },
    Image(ImageShape),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type")]
pub enum LayerSpec {
    Dense {
        units: usize,
        activation: ActivationKind,
    },
    Conv {
        filters: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        activation: ActivationKind,
    },
    Pool {
        window: usize,
        stride: usize,
        pool: PoolKind,
    },
}

/// Architecture descriptor: the input shape and the ordered layer list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: InputShape,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Dense stack with the given hidden layers and a linear output head.
    pub fn dense(inputs: usize, hidden: &[(usize, ActivationKind)], outputs: usize) -> Self {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&(units, activation)| LayerSpec::Dense { units, activation })
            .collect();
        layers.push(LayerSpec::Dense {
            units: outputs,
            activation: ActivationKind::Linear,
        });
        Self {
            input: InputShape::Vector { size: inputs },
            layers,
        }
    }

    /// Two 200-unit ReLU layers feeding a linear head, for vector observations.
    pub fn control_mlp(observations: usize, actions: usize) -> Self {
        Self::dense(
            observations,
            &[(200, ActivationKind::ReLU), (200, ActivationKind::ReLU)],
            actions,
        )
    }

    /// Three ReLU convolutions (32@8x8/4, 64@4x4/2, 64@3x3/1), a 512-unit
    /// linear fully-connected layer, and a linear head with one output per
    /// action.
    pub fn pixel_cnn(stack: usize, size: usize, actions: usize) -> Self {
        let conv = |filters, k, stride| LayerSpec::Conv {
            filters,
            kernel: (k, k),
            stride,
            padding: 0,
            activation: ActivationKind::ReLU,
        };
        Self {
            input: InputShape::Image(ImageShape {
                channels: stack,
                height: size,
                width: size,
            }),
            layers: vec![
                conv(32, 8, 4),
                conv(64, 4, 2),
                conv(64, 3, 1),
                LayerSpec::Dense {
                    units: 512,
                    activation: ActivationKind::Linear,
                },
                LayerSpec::Dense {
                    units: actions,
                    activation: ActivationKind::Linear,
                },
            ],
        }
    }

    pub fn outputs(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { units, .. }) => *units,
            _ => 0,
        }
    }

    /// Output shape of every layer, validating that the stack composes and
    /// ends in a linear dense head.
    pub fn shapes(&self) -> Result<Vec<InputShape>> {
        let mut cur = self.input;
        let mut out = Vec::with_capacity(self.layers.len());
        let mut flattened = false;
        for (i, spec) in self.layers.iter().enumerate() {
            cur = match (*spec, cur) {
                (LayerSpec::Dense { units, .. }, InputShape::Vector { .. }) => InputShape::Vector { size: units },
                (LayerSpec::Dense { units, .. }, InputShape::Image(_)) => {
                    flattened = true;
                    InputShape::Vector { size: units }
                }
                (LayerSpec::Conv { filters, kernel, stride, padding, .. }, InputShape::Image(s)) => {
                    let probe = ConvLayer {
                        filters,
                        in_channels: s.channels,
                        kernel,
                        stride,
                        padding,
                        weights: Matrix::zeros(0, 0),
                        bias: Matrix::zeros(0, 0),
                        activation: ActivationKind::Linear,
                    };
                    InputShape::Image(probe.output_shape(s)?)
                }
                (LayerSpec::Pool { window, stride, pool }, InputShape::Image(s)) => {
                    if window == 0 || stride == 0 {
                        return Err(Error::Architecture(format!("layer {i}: pool window and stride must be >= 1")));
                    }
                    InputShape::Image(PoolLayer { window, stride, kind: pool }.output_shape(s)?)
                }
                (_, InputShape::Vector { .. }) => {
                    return Err(Error::Architecture(format!(
                        "layer {i}: spatial layer after the flatten boundary{}",
                        if flattened { "" } else { " (vector input)" }
                    )))
                }
            };
            if let LayerSpec::Dense { units: 0, .. } | LayerSpec::Conv { filters: 0, .. } = spec {
                return Err(Error::Architecture(format!("layer {i}: zero width")));
            }
            out.push(cur);
        }
        match self.layers.last() {
            Some(LayerSpec::Dense {
                activation: ActivationKind::Linear,
                ..
            }) => Ok(out),
            _ => Err(Error::Architecture("network must end in a linear dense layer".into())),
        }
    }

    pub fn is_dense_only(&self) -> bool {
        matches!(self.input, InputShape::Vector { .. })
            && self.layers.iter().all(|l| matches!(l, LayerSpec::Dense { .. }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out x in`.
    pub weights: Matrix,
    /// `out x 1`.
    pub bias: Matrix,
    pub activation: ActivationKind,
    /// Fixed random `units x outputs` matrix projecting the output error to
    /// this layer under feedback alignment. Hidden layers only.
    pub feedback: Option<Matrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Layer {
    Dense(DenseLayer),
    Conv(ConvLayer),
    Pool(PoolLayer),
}

impl Layer {
    pub fn params(&self) -> Option<(&Matrix, &Matrix)> {
        match self {
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            Layer::Conv(c) => Some((&c.weights, &c.bias)),
            Layer::Pool(_) => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Matrix, &mut Matrix)> {
        match self {
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            Layer::Conv(c) => Some((&mut c.weights, &mut c.bias)),
            Layer::Pool(_) => None,
        }
    }
}

/// Feed-forward network with its gradient backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    architecture: Architecture,
    backend: Backend,
    layers: Vec<Layer>,
    seed: u64,
}

#[derive(Clone, Debug)]
pub enum LayerCache {
    Dense {
        input: Matrix,
        z: Matrix,
        /// Image shape the input was flattened from, if any.
        flattened_from: Option<ImageShape>,
    },
    Conv(ConvCache),
    Pool(PoolCache),
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
    pub output: Matrix,
}

/// Weight and bias gradients of one parameterized layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrad {
    pub dw: Matrix,
    pub db: Matrix,
}

#[derive(Clone, Debug)]
pub struct Gradients {
    /// Indexed like the network's layers; `None` for pooling.
    pub layers: Vec<Option<ParamGrad>>,
    /// Pre-activation error `dZ` of every dense layer.
    pub deltas: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .map(|g| g.dw.max_abs().max(g.db.max_abs()))
            .fold(0.0, f64::max)
    }
}

impl Network {
    /// Builds a network with Glorot weights and zero biases. Under
    /// [`Backend::Dfa`] each hidden layer also gets a frozen feedback matrix
    /// drawn uniformly from `±1/sqrt(outputs)`.
    pub fn new(architecture: Architecture, backend: Backend, rng: &mut Rng) -> Result<Self> {
        let shapes = architecture.shapes()?;
        if backend == Backend::Dfa && !architecture.is_dense_only() {
            return Err(Error::Architecture(
                "feedback alignment is only defined for dense networks".into(),
            ));
        }
        let seed = rng.seed();
        let outputs = architecture.outputs();
        let bound = 1.0 / (outputs as f64).sqrt();
        let last = architecture.layers.len() - 1;
        let mut layers = Vec::with_capacity(architecture.layers.len());
        let mut prev = architecture.input;
        for (i, spec) in architecture.layers.iter().enumerate() {
            let layer = match *spec {
                LayerSpec::Dense { units, activation } => {
                    let fan_in = match prev {
                        InputShape::Vector { size } => size,
                        InputShape::Image(s) => s.len(),
                    };
                    let feedback = (backend == Backend::Dfa && i != last).then(|| {
                        let data = (0..units * outputs).map(|_| rng.uniform_range(-bound, bound)).collect();
                        Matrix::from_vec(units, outputs, data).expect("length matches")
                    });
                    Layer::Dense(DenseLayer {
                        weights: xavier_init(fan_in, units, rng),
                        bias: Matrix::zeros(units, 1),
                        activation,
                        feedback,
                    })
                }
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                    padding,
                    activation,
                } => {
                    let InputShape::Image(s) = prev else { unreachable!("validated by shapes()") };
                    Layer::Conv(ConvLayer::new(filters, s.channels, kernel, stride, padding, activation, rng))
                }
                LayerSpec::Pool { window, stride, pool } => Layer::Pool(PoolLayer {
                    window,
                    stride,
                    kind: pool,
                }),
            };
            layers.push(layer);
            prev = shapes[i];
        }
        Ok(Self {
            architecture,
            backend,
            layers,
            seed,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn outputs(&self) -> usize {
        self.architecture.outputs()
    }

    /// Checks that deserialized parameters agree with the descriptor.
    pub fn validate(&self) -> Result<()> {
        let fresh = Network::new(self.architecture.clone(), self.backend, &mut Rng::new(0))?;
        if fresh.layers.len() != self.layers.len() {
            return Err(Error::Architecture("layer count differs from descriptor".into()));
        }
        for (i, (a, b)) in fresh.layers.iter().zip(&self.layers).enumerate() {
            let same = match (a, b) {
                (Layer::Dense(x), Layer::Dense(y)) => {
                    x.weights.shape() == y.weights.shape()
                        && x.bias.shape() == y.bias.shape()
                        && x.activation == y.activation
                        && x.feedback.as_ref().map(Matrix::shape) == y.feedback.as_ref().map(Matrix::shape)
                }
                (Layer::Conv(x), Layer::Conv(y)) => {
                    x.weights.shape() == y.weights.shape()
                        && x.bias.shape() == y.bias.shape()
                        && (x.kernel, x.stride, x.padding, x.activation, x.in_channels, x.filters)
                            == (y.kernel, y.stride, y.padding, y.activation, y.in_channels, y.filters)
                }
                (Layer::Pool(x), Layer::Pool(y)) => x == y,
                _ => false,
            };
            if !same {
                return Err(Error::Architecture(format!("layer {i} disagrees with descriptor")));
            }
            if let Some((w, bias)) = b.params() {
                if !w.is_finite() || !bias.is_finite() {
                    return Err(Error::Architecture(format!("layer {i} holds non-finite parameters")));
                }
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let ok = match (self.architecture.input, input) {
            (InputShape::Vector { size }, Tensor::Flat(m)) => m.rows() == size,
            (InputShape::Image(s), Tensor::Images(b)) => b.dims() == s,
            _ => false,
        };
        if ok && input.batch() > 0 {
            Ok(())
        } else {
            let expected = match self.architecture.input {
                InputShape::Vector { size } => format!("{size}xN"),
                InputShape::Image(s) => format!("Nx{s}"),
            };
            Err(shape_err("forward input", input.describe(), expected))
        }
    }

    /// Forward pass keeping every pre-activation for a later backward pass.
    pub fn forward(&self, input: &Tensor) -> Result<(Matrix, ForwardCache)> {
        self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let out = self.run(input.clone(), Some(&mut caches))?;
        Ok((
            out.clone(),
            ForwardCache {
                layers: caches,
                output: out,
            },
        ))
    }

    /// Forward pass without a cache.
    pub fn predict(&self, input: &Tensor) -> Result<Matrix> {
        self.check_input(input)?;
        self.run(input.clone(), None)
    }

    fn run(&self, mut x: Tensor, mut caches: Option<&mut Vec<LayerCache>>) -> Result<Matrix> {
        for layer in &self.layers {
            x = match layer {
                Layer::Dense(d) => {
                    let (m, flattened_from) = match x {
                        Tensor::Flat(m) => (m, None),
                        Tensor::Images(b) => (b.flatten(), Some(b.dims())),
                    };
                    let z = affine(&d.weights, &m, &d.bias)?;
                    let a = if d.activation == ActivationKind::Linear {
                        z.clone()
                    } else {
                        z.map(|v| d.activation.apply(v))
                    };
                    if let Some(c) = caches.as_deref_mut() {
                        c.push(LayerCache::Dense {
                            input: m,
                            z,
                            flattened_from,
                        });
                    }
                    Tensor::Flat(a)
                }
                Layer::Conv(conv) => {
                    let Tensor::Images(b) = x else {
                        return Err(shape_err("conv input", x.describe(), "image batch"));
                    };
                    let (a, cache) = conv_forward(conv, &b)?;
                    if let Some(c) = caches.as_deref_mut() {
                        c.push(LayerCache::Conv(cache));
                    }
                    Tensor::Images(a)
                }
                Layer::Pool(p) => {
                    let Tensor::Images(b) = x else {
                        return Err(shape_err("pool input", x.describe(), "image batch"));
                    };
                    let (a, cache) = pool_forward(p, &b)?;
                    if let Some(c) = caches.as_deref_mut() {
                        c.push(LayerCache::Pool(cache));
                    }
                    Tensor::Images(a)
                }
            };
        }
        Ok(x.into_flat())
    }

    fn check_cache(&self, cache: &ForwardCache, dz_out: &Matrix) -> Result<()> {
        if cache.layers.len() != self.layers.len() {
            return Err(contract(format!(
                "cache depth {} does not match {} layers",
                cache.layers.len(),
                self.layers.len()
            )));
        }
        for (i, (l, c)) in self.layers.iter().zip(&cache.layers).enumerate() {
            let ok = match (l, c) {
                (Layer::Dense(d), LayerCache::Dense { input, z, .. }) => {
                    input.rows() == d.weights.cols() && z.rows() == d.weights.rows()
                }
                (Layer::Conv(k), LayerCache::Conv(cc)) => cc.z.channels == k.filters,
                (Layer::Pool(_), LayerCache::Pool(_)) => true,
                _ => false,
            };
            if !ok {
                return Err(contract(format!("cache entry {i} was produced by a different network")));
            }
        }
        if dz_out.shape() != cache.output.shape() {
            return Err(shape_err("backward dZ_out", dz_out.shape_str(), cache.output.shape_str()));
        }
        Ok(())
    }

    /// Backpropagation. `dz_out` is the loss gradient with respect to the
    /// linear outputs and must already include any minibatch averaging; the
    /// returned gradients are sums over the batch columns.
    pub fn backward_bp(&self, cache: &ForwardCache, dz_out: &Matrix) -> Result<Gradients> {
        self.check_cache(cache, dz_out)?;
        let n = self.layers.len();
        let mut grads: Vec<Option<ParamGrad>> = vec![None; n];
        let mut deltas: Vec<Option<Matrix>> = vec![None; n];
        // Gradient with respect to the current layer's activations.
        let mut upstream = Tensor::Flat(dz_out.clone());
        for l in (0..n).rev() {
            upstream = match (&self.layers[l], &cache.layers[l], upstream) {
                (Layer::Dense(d), LayerCache::Dense { input, z, flattened_from }, Tensor::Flat(da)) => {
                    let dz = if d.activation == ActivationKind::Linear {
                        da
                    } else {
                        let mut dz = da;
                        for (g, zv) in dz.data_mut().iter_mut().zip(z.data()) {
                            *g *= d.activation.derivative(*zv);
                        }
                        dz
                    };
                    grads[l] = Some(ParamGrad {
                        dw: dz.matmul_t(input)?,
                        db: dz.row_sums(),
                    });
                    let next = if l > 0 {
                        let da_prev = d.weights.t_matmul(&dz)?;
                        match flattened_from {
                            Some(shape) => Tensor::Images(ImageBatch::unflatten(&da_prev, *shape)?),
                            None => Tensor::Flat(da_prev),
                        }
                    } else {
                        Tensor::Flat(Matrix::zeros(0, 0))
                    };
                    deltas[l] = Some(dz);
                    next
                }
                (Layer::Conv(conv), LayerCache::Conv(cc), Tensor::Images(mut da)) => {
                    if conv.activation != ActivationKind::Linear {
                        for (g, zv) in da.data.iter_mut().zip(&cc.z.data) {
                            *g *= conv.activation.derivative(*zv);
                        }
                    }
                    let (dw, db, di) = conv_backward_impl(conv, cc, &da, l > 0)?;
                    grads[l] = Some(ParamGrad { dw, db });
                    di.map(Tensor::Images).unwrap_or(Tensor::Flat(Matrix::zeros(0, 0)))
                }
                (Layer::Pool(p), LayerCache::Pool(pc), Tensor::Images(da)) => {
                    Tensor::Images(pool_backward(p, pc, &da)?)
                }
                _ => return Err(contract(format!("layer {l}: gradient does not match cache"))),
            };
        }
        Ok(Gradients { layers: grads, deltas })
    }

    /// Direct feedback alignment: the output error reaches every hidden layer
    /// through that layer's fixed feedback matrix, `dZ = (B dZ_out) * g'(Z)`.
    /// The output layer gradient is the same as under backpropagation.
    pub fn backward_dfa(&self, cache: &ForwardCache, dz_out: &Matrix) -> Result<Gradients> {
        if self.backend != Backend::Dfa {
            return Err(contract("backward_dfa on a backpropagation network"));
        }
        self.check_cache(cache, dz_out)?;
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        let mut deltas = Vec::with_capacity(n);
        for l in 0..n {
            let (Layer::Dense(d), LayerCache::Dense { input, z, .. }) = (&self.layers[l], &cache.layers[l]) else {
                return Err(contract("feedback alignment requires dense layers"));
            };
            let dz = if l == n - 1 {
                let mut dz = dz_out.clone();
                for (g, zv) in dz.data_mut().iter_mut().zip(z.data()) {
                    *g *= d.activation.derivative(*zv);
                }
                dz
            } else {
                let b = d
                    .feedback
                    .as_ref()
                    .ok_or_else(|| contract(format!("hidden layer {l} has no feedback matrix")))?;
                let mut dz = b.matmul(dz_out)?;
                for (g, zv) in dz.data_mut().iter_mut().zip(z.data()) {
                    *g *= d.activation.derivative(*zv);
                }
                dz
            };
            grads.push(Some(ParamGrad {
                dw: dz.matmul_t(input)?,
                db: dz.row_sums(),
            }));
            deltas.push(Some(dz));
        }
        Ok(Gradients { layers: grads, deltas })
    }

    /// Dispatches on the configured backend.
    pub fn backward(&self, cache: &ForwardCache, dz_out: &Matrix) -> Result<Gradients> {
        match self.backend {
            Backend::Bp => self.backward_bp(cache, dz_out),
            Backend::Dfa => self.backward_dfa(cache, dz_out),
        }
    }

    /// SHA-256 over every trainable parameter's bit pattern.
    pub fn param_checksum(&self) -> String {
        let mut h = Sha256::new();
        for (w, b) in self.layers.iter().filter_map(Layer::params) {
            for v in w.data().iter().chain(b.data()) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Mean squared error over every element and its gradient `(2/n)(pred - target)`.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(shape_err("mse_loss", pred.shape_str(), target.shape_str()));
    }
    let n = (pred.rows() * pred.cols()).max(1) as f64;
    let diff = pred.sub(target)?;
    let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff.scale(2.0 / n)))
}

/// Copies trainable parameters from `source` into `target`. Feedback
/// matrices are left alone.
pub fn clone_params(source: &Network, target: &mut Network) -> Result<()> {
    if source.architecture != target.architecture {
        return Err(Error::Architecture(format!(
            "cannot clone {:?} into {:?}",
            source.architecture.layers, target.architecture.layers
        )));
    }
    for (s, t) in source.layers.iter().zip(target.layers.iter_mut()) {
        if let (Some((sw, sb)), Some((tw, tb))) = (s.params(), t.params_mut()) {
            tw.data_mut().copy_from_slice(sw.data());
            tb.data_mut().copy_from_slice(sb.data());
        }
    }
    Ok(())
}
