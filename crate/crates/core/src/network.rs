//! Fully connected networks: sampling from the Gaussian initialization
//! distribution, forward pass with preactivation capture, exact MSE
//! gradients and gradient-descent training.
//!
//! Layer `l` maps `n_{l-1}` inputs to `n_l` preactivations,
//! `z⁽ˡ⁾ = W⁽ˡ⁾ σ(z⁽ˡ⁻¹⁾) + b⁽ˡ⁾` (the first layer reads the raw input and
//! the last layer has no activation). Weights are stored `n_l × n_{l-1}`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activations::Activation;
use crate::criticality::InitHyperparams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub n_in: usize,
    pub n_out: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(n_in: usize, n_out: usize, hidden_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let arch = Self { n_in, n_out, hidden_widths, activation };
        arch.validate()?;
        Ok(arch)
    }

    /// `hidden` layers of equal `width`.
    pub fn uniform(n_in: usize, n_out: usize, width: usize, hidden: usize, activation: Activation) -> Result<Self> {
        Self::new(n_in, n_out, vec![width; hidden], activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.n_out == 0 || self.hidden_widths.contains(&0) {
            return Err(Error::Config("all layer widths must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of affine layers, `L = hidden + 1`.
    pub fn depth(&self) -> usize {
        self.hidden_widths.len() + 1
    }

    /// `[n_0, n_1, ..., n_L]` with `n_0 = n_in` and `n_L = n_out`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.depth() + 1);
        w.push(self.n_in);
        w.extend(&self.hidden_widths);
        w.push(self.n_out);
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

/// A concrete network: architecture plus per-layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    arch: Architecture,
    layers: Vec<Layer<T>>,
}

/// Preactivations of every layer for one batch.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub inputs: Array2<T>,
    /// `preacts[l-1]` is `batch × n_l` for layer `l`.
    pub preacts: Vec<Array2<T>>,
    /// First (1-based) layer holding a non-finite preactivation.
    pub nonfinite_from: Option<usize>,
    acts: Vec<Array2<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn output(&self) -> &Array2<T> {
        self.preacts.last().expect("at least one layer")
    }

    pub fn is_finite(&self) -> bool {
        self.nonfinite_from.is_none()
    }

    /// `σ(z⁽ˡ⁾)` for hidden layer `l` (1-based).
    pub fn activations(&self, layer: usize) -> &Array2<T> {
        &self.acts[layer - 1]
    }
}

/// Inputs and targets, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub inputs: Array2<T>,
    pub targets: Array2<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multiplies every input by `scale`, leaving targets untouched.
    pub fn scale_inputs(mut self, scale: T) -> Self {
        self.inputs.mapv_inplace(|x| x * scale);
        self
    }

    fn select(&self, rows: &[usize]) -> Self {
        Self { inputs: self.inputs.select(Axis(0), rows), targets: self.targets.select(Axis(0), rows) }
    }
}

/// Regression data: `(x, y)` i.i.d. standard normal, target `x² + y²`.
pub fn synth_dataset<T: Scalar>(n: usize, seed: u64) -> Result<Batch<T>> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Array2::zeros((n, 2));
    let mut targets = Array2::zeros((n, 1));
    for i in 0..n {
        let x: f64 = StandardNormal.sample(&mut rng);
        let y: f64 = StandardNormal.sample(&mut rng);
        inputs[[i, 0]] = T::lit(x);
        inputs[[i, 1]] = T::lit(y);
        targets[[i, 0]] = T::lit(x * x + y * y);
    }
    Ok(Batch { inputs, targets })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSize {
    Full,
    Size(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch: BatchSize,
    #[serde(default = "default_train_size")]
    pub dataset_size: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// Inputs are multiplied by this factor before entering the network.
    #[serde(default = "default_scale")]
    pub input_scale: f64,
    pub seed: u64,
}

fn default_batch() -> BatchSize {
    BatchSize::Full
}
fn default_train_size() -> usize {
    1024
}
fn default_test_size() -> usize {
    256
}
fn default_scale() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 1e-3,
            batch: BatchSize::Full,
            dataset_size: default_train_size(),
            test_size: default_test_size(),
            input_scale: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        if self.dataset_size == 0 || self.test_size == 0 {
            return Err(Error::Config("dataset sizes must be at least 1".into()));
        }
        if let BatchSize::Size(0) = self.batch {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.input_scale > 0.0) || !self.input_scale.is_finite() {
            return Err(Error::Config("input scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub losses: Vec<LossPoint>,
    /// Epoch at which the loss or a preactivation became non-finite.
    pub diverged_at: Option<usize>,
}

impl<T: Scalar> Network<T> {
    /// Samples `b ~ N(0, C_b)` and `W_ij ~ N(0, C_W / n_{l-1})`
    /// independently, deterministically from `seed`.
    pub fn init(arch: &Architecture, hp: &InitHyperparams<f64>, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = arch.widths();
        let bias_sd = hp.c_b.sqrt();
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weight_sd = (hp.c_w / fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    T::lit(weight_sd * n)
                });
                let bias = Array1::from_shape_simple_fn(fan_out, || {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    T::lit(bias_sd * n)
                });
                Layer { weights, bias }
            })
            .collect();
        Ok(Self { arch: arch.clone(), layers })
    }

    /// Builds a network from explicit parameters, checking shapes.
    pub fn from_layers(arch: &Architecture, layers: Vec<Layer<T>>) -> Result<Self> {
        arch.validate()?;
        let widths = arch.widths();
        if layers.len() != arch.depth() {
            return Err(Error::Shape { expected: format!("{} layers", arch.depth()), got: layers.len().to_string() });
        }
        for (l, (layer, w)) in layers.iter().zip(widths.windows(2)).enumerate() {
            if layer.weights.dim() != (w[1], w[0]) || layer.bias.len() != w[1] {
                return Err(Error::Shape {
                    expected: format!("layer {}: {}x{} weights, {} biases", l + 1, w[1], w[0], w[1]),
                    got: format!("{:?} weights, {} biases", layer.weights.dim(), layer.bias.len()),
                });
            }
        }
        Ok(Self { arch: arch.clone(), layers })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn forward(&self, inputs: ArrayView2<'_, T>) -> Result<ForwardTrace<T>> {
        if inputs.ncols() != self.arch.n_in {
            return Err(Error::Shape {
                expected: format!("{} input columns", self.arch.n_in),
                got: inputs.ncols().to_string(),
            });
        }
        let act = self.arch.activation;
        let depth = self.layers.len();
        let mut preacts = Vec::with_capacity(depth);
        let mut acts: Vec<Array2<T>> = Vec::with_capacity(depth - 1);
        let mut nonfinite_from = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { inputs.view() } else { acts[l - 1].view() };
            let mut z = input.dot(&layer.weights.t());
            z.zip_mut_with(&layer.bias, |a, &b| *a = *a + b);
            if nonfinite_from.is_none() && z.iter().any(|v| !v.is_finite()) {
                nonfinite_from = Some(l + 1);
            }
            if l + 1 < depth {
                acts.push(z.mapv(|v| act.eval(v)));
            }
            preacts.push(z);
        }
        Ok(ForwardTrace { inputs: inputs.to_owned(), preacts, nonfinite_from, acts })
    }

    /// `(1 / 2N) Σ ‖f(x) − y‖²`.
    pub fn loss(&self, batch: &Batch<T>) -> Result<T> {
        let trace = self.forward(batch.inputs.view())?;
        Ok(mse(trace.output(), &batch.targets))
    }

    /// Exact gradients of the MSE loss for the batch that produced `trace`.
    pub fn backward(&self, trace: &ForwardTrace<T>, targets: &Array2<T>) -> Result<Vec<Layer<T>>> {
        if let Some(l) = trace.nonfinite_from {
            return Err(Error::Overflow(format!("non-finite preactivations from layer {l}")));
        }
        let out = trace.output();
        if out.dim() != targets.dim() {
            return Err(Error::Shape { expected: format!("{:?} targets", out.dim()), got: format!("{:?}", targets.dim()) });
        }
        let act = self.arch.activation;
        let n = T::lit(out.nrows() as f64);
        let mut delta = (out - targets).mapv(|d| d / n);
        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { trace.inputs.view() } else { trace.acts[l - 1].view() };
            let dw = delta.t().dot(&input);
            let db = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights);
                Zip::from(&mut back).and(&trace.preacts[l - 1]).for_each(|b, &z| *b = *b * act.eval_deriv(z));
                delta = back;
            }
            grads.push(Layer { weights: dw, bias: db });
        }
        grads.reverse();
        Ok(grads)
    }

    /// `θ ← θ − lr·∇θ`.
    pub fn apply_gradients(&mut self, grads: &[Layer<T>], learning_rate: T) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.weights.scaled_add(-learning_rate, &g.weights);
            layer.bias.scaled_add(-learning_rate, &g.bias);
        }
    }

    /// Gradient descent for `cfg.epochs` epochs. `observe(epoch, net)` runs
    /// before the first update (epoch 0) and after every epoch.
    pub fn train_with<F>(
        &mut self,
        cfg: &TrainConfig,
        train: &Batch<T>,
        test: Option<&Batch<T>>,
        mut observe: F,
    ) -> Result<TrainOutcome>
    where
        F: FnMut(usize, &Self),
    {
        cfg.validate()?;
        let lr = T::lit(cfg.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let batch_size = match cfg.batch {
            BatchSize::Full => train.len(),
            BatchSize::Size(b) => b.min(train.len()),
        };
        let mut losses = Vec::with_capacity(cfg.epochs + 1);
        let test_loss = |net: &Self| -> Result<Option<f64>> {
            test.map(|t| net.loss(t).map(|l| l.as_f64())).transpose()
        };
        observe(0, self);
        for epoch in 0..cfg.epochs {
            let mut epoch_loss = 0.0;
            if batch_size == train.len() {
                let trace = self.forward(train.inputs.view())?;
                epoch_loss = mse(trace.output(), &train.targets).as_f64();
                if !epoch_loss.is_finite() || !trace.is_finite() {
                    losses.push(LossPoint { epoch, train_loss: epoch_loss, test_loss: None });
                    return Ok(TrainOutcome { losses, diverged_at: Some(epoch) });
                }
                let grads = self.backward(&trace, &train.targets)?;
                self.apply_gradients(&grads, lr);
            } else {
                order.shuffle(&mut rng);
                for chunk in order.chunks(batch_size) {
                    let mb = train.select(chunk);
                    let trace = self.forward(mb.inputs.view())?;
                    let l = mse(trace.output(), &mb.targets).as_f64();
                    if !l.is_finite() || !trace.is_finite() {
                        losses.push(LossPoint { epoch, train_loss: l, test_loss: None });
                        return Ok(TrainOutcome { losses, diverged_at: Some(epoch) });
                    }
                    epoch_loss += l * chunk.len() as f64 / train.len() as f64;
                    let grads = self.backward(&trace, &mb.targets)?;
                    self.apply_gradients(&grads, lr);
                }
            }
            losses.push(LossPoint { epoch, train_loss: epoch_loss, test_loss: test_loss(self)? });
            observe(epoch + 1, self);
        }
        let final_loss = self.loss(train)?.as_f64();
        losses.push(LossPoint { epoch: cfg.epochs, train_loss: final_loss, test_loss: test_loss(self)? });
        let diverged_at = (!final_loss.is_finite()).then_some(cfg.epochs);
        Ok(TrainOutcome { losses, diverged_at })
    }

    pub fn train(&mut self, cfg: &TrainConfig, train: &Batch<T>, test: Option<&Batch<T>>) -> Result<TrainOutcome> {
        self.train_with(cfg, train, test, |_, _| {})
    }

    /// Writes a JSON checkpoint: architecture header plus layer-ordered,
    /// row-major 64-bit parameters.
    pub fn write_checkpoint<W: Write>(&self, writer: W) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: 1,
            architecture: self.arch.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    weights: l.weights.iter().map(|v| v.as_f64()).collect(),
                    bias: l.bias.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        };
        serde_json::to_writer(writer, &ckpt).map_err(|e| Error::Config(format!("checkpoint write failed: {e}")))
    }

    pub fn read_checkpoint<R: Read>(reader: R) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_reader(reader).map_err(|e| Error::Config(format!("invalid checkpoint: {e}")))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != 1 {
            return Err(Error::Config(format!("unsupported checkpoint {} v{}", ckpt.format, ckpt.version)));
        }
        let layers = ckpt
            .layers
            .into_iter()
            .map(|l| {
                let weights = Array2::from_shape_vec((l.rows, l.cols), l.weights.into_iter().map(T::lit).collect())
                    .map_err(|e| Error::Config(format!("checkpoint weights: {e}")))?;
                Ok(Layer { weights, bias: l.bias.into_iter().map(T::lit).collect() })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(&ckpt.architecture, layers)
    }
}

const CHECKPOINT_FORMAT: &str = "critnet-checkpoint";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    architecture: Architecture,
    layers: Vec<CheckpointLayer>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointLayer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

fn mse<T: Scalar>(out: &Array2<T>, targets: &Array2<T>) -> T {
    let n = T::lit(out.nrows() as f64);
    let sq = Zip::from(out).and(targets).fold(T::zero(), |acc, &o, &t| acc + (o - t) * (o - t));
    sq / (T::lit(2.0) * n)
}
