//! Monte-Carlo statistics over ensembles of sampled or trained networks.
//!
//! For a probe input the empirical kernel at layer `l` is the
//! width-averaged squared preactivation, `K̂⁽ˡ⁾ = (1/n_l) Σ_i (z_i⁽ˡ⁾)²`,
//! where `n_l` is the width of the layer carrying the preactivations.
//! The four-point vertex is estimated from the stochastic metric
//!
//! ```text
//! Ĝ⁽¹⁾ = C_b + C_W/n_0 Σ_j x_j²
//! Ĝ⁽ˡ⁾ = C_b + C_W/n_{l-1} Σ_j σ(z_j⁽ˡ⁻¹⁾)²
//! V̂⁽ˡ⁾ = n_{l-1} Var_ens(Ĝ⁽ˡ⁾)
//! ```
//!
//! `Ĝ⁽ˡ⁾` is the conditional variance of every `z_i⁽ˡ⁾` given the previous
//! layer, so its ensemble fluctuation is the connected four-point function
//! without the Gaussian sampling noise that `Var(K̂⁽ˡ⁾)` also carries.
//!
//! Model `i` is sampled with seed `master_seed + i`. Members are evaluated
//! in parallel with an order-preserving collect and reduced sequentially,
//! so results do not depend on the number of threads.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criticality::InitHyperparams;
use crate::error::{Error, Result};
use crate::network::{synth_dataset, Architecture, Batch, Network, TrainConfig};
use crate::stats;

/// Kernels above this value count as overflowed.
pub const OVERFLOW_THRESHOLD: f64 = 1e30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n_models: usize,
    pub arch: Architecture,
    pub hp: InitHyperparams<f64>,
    pub master_seed: u64,
    pub probe_input: Vec<f64>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.n_models == 0 {
            return Err(Error::Config("ensemble needs at least one model".into()));
        }
        if self.probe_input.len() != self.arch.n_in {
            return Err(Error::Shape {
                expected: format!("probe input of length {}", self.arch.n_in),
                got: self.probe_input.len().to_string(),
            });
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        Ok(())
    }

    pub fn model_seed(&self, index: usize) -> u64 {
        self.master_seed.wrapping_add(index as u64)
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.arch.depth() {
            return Err(Error::Config(format!("layer {layer} outside 1..={}", self.arch.depth())));
        }
        Ok(())
    }
}

/// Per-layer observables of one network at one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProbe {
    /// `K̂⁽ˡ⁾` for `l = 1..=L`.
    pub k_hat: Vec<f64>,
    /// Stochastic metric `Ĝ⁽ˡ⁾`.
    pub g_hat: Vec<f64>,
    /// Width mean of `σ'(z⁽ˡ⁾)²`.
    pub sigma_prime_sq: Vec<f64>,
}

impl ModelProbe {
    /// First layer (1-based) whose kernel overflowed or is non-finite.
    pub fn excluded_from(&self) -> Option<usize> {
        self.k_hat.iter().position(|&k| is_overflowed(k)).map(|i| i + 1)
    }

    pub fn is_excluded_at(&self, layer: usize) -> bool {
        self.excluded_from().is_some_and(|l| l <= layer)
    }
}

pub fn is_overflowed(k: f64) -> bool {
    !k.is_finite() || k > OVERFLOW_THRESHOLD
}

/// Probes `net` at a single input.
pub fn probe_network(net: &Network<f64>, hp: &InitHyperparams<f64>, input: &[f64]) -> Result<ModelProbe> {
    let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
        .map_err(|e| Error::Config(format!("probe input: {e}")))?;
    let trace = net.forward(x.view())?;
    let act = net.architecture().activation;
    let depth = trace.preacts.len();
    let mut k_hat = Vec::with_capacity(depth);
    let mut g_hat = Vec::with_capacity(depth);
    let mut sigma_prime_sq = Vec::with_capacity(depth);
    for l in 0..depth {
        let z: Vec<f64> = trace.preacts[l].iter().copied().collect();
        let sq: Vec<f64> = z.iter().map(|v| v * v).collect();
        k_hat.push(stats::mean(&sq));
        let prev: Vec<f64> = if l == 0 {
            input.iter().map(|v| v * v).collect()
        } else {
            trace.preacts[l - 1].iter().map(|&v| act.eval(v).powi(2)).collect()
        };
        g_hat.push(hp.c_b + hp.c_w * stats::mean(&prev));
        let d: Vec<f64> = z.iter().map(|&v| act.eval_deriv(v).powi(2)).collect();
        sigma_prime_sq.push(stats::mean(&d));
    }
    Ok(ModelProbe { k_hat, g_hat, sigma_prime_sq })
}

/// Samples every member of the ensemble and probes it at `spec.probe_input`.
pub fn probe_ensemble(spec: &EnsembleSpec) -> Result<Vec<ModelProbe>> {
    spec.validate()?;
    (0..spec.n_models)
        .into_par_iter()
        .map(|i| {
            let net = Network::<f64>::init(&spec.arch, &spec.hp, spec.model_seed(i))?;
            probe_network(&net, &spec.hp, &spec.probe_input)
        })
        .collect()
}

/// Runs `f` on a dedicated pool of `threads` workers (`0` = rayon default).
pub fn with_threads<R, F>(threads: usize, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleLayerStats {
    pub layer: usize,
    pub mean_k: f64,
    pub var_k: f64,
    pub v_hat: f64,
    pub chi_perp_hat: f64,
    pub excluded: usize,
}

/// Layer statistics over the non-excluded members. `widths` is
/// `[n_0, ..., n_L]`; the vertex at layer `l` is scaled by `n_{l-1}`.
pub fn layer_stats(probes: &[ModelProbe], widths: &[usize], c_w: f64) -> Vec<EnsembleLayerStats> {
    let depth = widths.len() - 1;
    (1..=depth)
        .map(|layer| {
            let kept: Vec<&ModelProbe> = probes.iter().filter(|p| !p.is_excluded_at(layer)).collect();
            let ks: Vec<f64> = kept.iter().map(|p| p.k_hat[layer - 1]).collect();
            let gs: Vec<f64> = kept.iter().map(|p| p.g_hat[layer - 1]).collect();
            let ds: Vec<f64> = kept.iter().map(|p| p.sigma_prime_sq[layer - 1]).collect();
            EnsembleLayerStats {
                layer,
                mean_k: stats::mean(&ks),
                var_k: stats::variance(&ks),
                v_hat: widths[layer - 1] as f64 * stats::variance(&gs),
                chi_perp_hat: c_w * stats::mean(&ds),
                excluded: probes.len() - kept.len(),
            }
        })
        .collect()
}

/// Parameter-random statistics at initialization for every layer.
pub fn init_ensemble_stats(spec: &EnsembleSpec) -> Result<Vec<EnsembleLayerStats>> {
    let probes = probe_ensemble(spec)?;
    Ok(layer_stats(&probes, &spec.arch.widths(), spec.hp.c_w))
}

/// `K̂⁽ˡ⁾` of every sampled member at the probe input (overflowed values
/// included; see [`is_overflowed`]).
pub fn empirical_kernel_param_random(spec: &EnsembleSpec, layer: usize) -> Result<Vec<f64>> {
    spec.check_layer(layer)?;
    Ok(probe_ensemble(spec)?.into_iter().map(|p| p.k_hat[layer - 1]).collect())
}

/// `K̂⁽ˡ⁾` of one fixed network for every row of `inputs`.
pub fn empirical_kernel_data_random(net: &Network<f64>, inputs: ArrayView2<'_, f64>, layer: usize) -> Result<Vec<f64>> {
    if layer == 0 || layer > net.architecture().depth() {
        return Err(Error::Config(format!("layer {layer} outside 1..={}", net.architecture().depth())));
    }
    let trace = net.forward(inputs)?;
    Ok(trace.preacts[layer - 1]
        .axis_iter(Axis(0))
        .map(|row| {
            let sq: Vec<f64> = row.iter().map(|v| v * v).collect();
            stats::mean(&sq)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexEstimate {
    pub value: f64,
    pub excluded: usize,
    /// More than half of the ensemble was excluded.
    pub unreliable: bool,
}

pub fn empirical_four_point_vertex(spec: &EnsembleSpec, layer: usize) -> Result<VertexEstimate> {
    spec.check_layer(layer)?;
    let probes = probe_ensemble(spec)?;
    let s = &layer_stats(&probes, &spec.arch.widths(), spec.hp.c_w)[layer - 1];
    Ok(VertexEstimate { value: s.v_hat, excluded: s.excluded, unreliable: 2 * s.excluded > spec.n_models })
}

/// `C_W` times the ensemble-and-width mean of `σ'(z⁽ˡ⁾)²`.
pub fn empirical_chi_perp(spec: &EnsembleSpec, layer: usize) -> Result<f64> {
    spec.check_layer(layer)?;
    let probes = probe_ensemble(spec)?;
    Ok(layer_stats(&probes, &spec.arch.widths(), spec.hp.c_w)[layer - 1].chi_perp_hat)
}

/// Fraction of members whose `|log10 K̂|` exceeds `decades` at some layer
/// up to `layer`. Overflowed members count as bifurcated.
pub fn bifurcation_fraction(probes: &[ModelProbe], layer: usize, decades: f64) -> f64 {
    let hit = probes
        .iter()
        .filter(|p| p.k_hat[..layer].iter().any(|&k| is_overflowed(k) || k.log10().abs() > decades))
        .count();
    hit as f64 / probes.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub layers: Vec<EnsembleLayerStats>,
}

/// Ensemble mean and spread of the outputs on each test point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPoint {
    pub target: f64,
    pub mean_output: f64,
    pub std_output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub records: Vec<EpochStats>,
    pub test: Vec<TestPoint>,
    /// Correlation between ensemble-mean output and target.
    pub correlation: f64,
    /// Mean over surviving members of `(1/N) Σ (f − y)²` on the test set.
    pub test_mse: f64,
    pub diverged: usize,
}

impl TrainingReport {
    /// Statistics of the last hidden layer at each recorded epoch.
    pub fn last_hidden(&self) -> Vec<(usize, &EnsembleLayerStats)> {
        self.records
            .iter()
            .map(|r| {
                let idx = r.layers.len().saturating_sub(2);
                (r.epoch, &r.layers[idx])
            })
            .collect()
    }
}

struct MemberRun {
    probes: Vec<ModelProbe>,
    test_output: Option<Array1<f64>>,
}

/// The train/test sets used by [`run_training_experiment`].
pub fn training_data(cfg: &TrainConfig) -> Result<(Batch<f64>, Batch<f64>)> {
    let train = synth_dataset::<f64>(cfg.dataset_size, cfg.seed)?.scale_inputs(cfg.input_scale);
    let test = synth_dataset::<f64>(cfg.test_size, cfg.seed.wrapping_add(1))?.scale_inputs(cfg.input_scale);
    Ok((train, test))
}

/// Trains every member on the same data and probes it at each epoch in
/// `record_epochs` (epoch 0 is the initialization). The probe input is
/// scaled by `input_scale` like the data. Diverged members are dropped
/// from every statistic.
pub fn run_training_experiment(spec: &EnsembleSpec, record_epochs: &[usize]) -> Result<TrainingReport> {
    spec.validate()?;
    let cfg = spec.train.clone().ok_or_else(|| Error::Config("training config required".into()))?;
    if let Some(&e) = record_epochs.iter().find(|&&e| e > cfg.epochs) {
        return Err(Error::Config(format!("record epoch {e} beyond {} epochs", cfg.epochs)));
    }
    let (train, test) = training_data(&cfg)?;
    let probe: Vec<f64> = spec.probe_input.iter().map(|v| v * cfg.input_scale).collect();
    let runs: Vec<MemberRun> = (0..spec.n_models)
        .into_par_iter()
        .map(|i| -> Result<MemberRun> {
            let mut net = Network::<f64>::init(&spec.arch, &spec.hp, spec.model_seed(i))?;
            let member_cfg = TrainConfig { seed: cfg.seed.wrapping_add(i as u64), ..cfg.clone() };
            let mut probes = Vec::with_capacity(record_epochs.len());
            let mut probe_err = None;
            let outcome = net.train_with(&member_cfg, &train, None, |epoch, n| {
                if record_epochs.contains(&epoch) {
                    match probe_network(n, &spec.hp, &probe) {
                        Ok(p) => probes.push(p),
                        Err(e) => probe_err = Some(e),
                    }
                }
            })?;
            if let Some(e) = probe_err {
                return Err(e);
            }
            if outcome.diverged_at.is_some() {
                return Ok(MemberRun { probes, test_output: None });
            }
            let out = net.forward(test.inputs.view())?;
            let out = out.output().column(0).to_owned();
            let finite = out.iter().all(|v| v.is_finite());
            Ok(MemberRun { probes, test_output: finite.then_some(out) })
        })
        .collect::<Result<_>>()?;

    let survivors: Vec<&MemberRun> = runs.iter().filter(|r| r.test_output.is_some()).collect();
    let diverged = runs.len() - survivors.len();
    let widths = spec.arch.widths();
    let records = record_epochs
        .iter()
        .enumerate()
        .map(|(j, &epoch)| {
            let probes: Vec<ModelProbe> = survivors.iter().map(|r| r.probes[j].clone()).collect();
            let mut layers = layer_stats(&probes, &widths, spec.hp.c_w);
            for s in &mut layers {
                s.excluded += diverged;
            }
            EpochStats { epoch, layers }
        })
        .collect();

    let targets: Vec<f64> = test.targets.column(0).to_vec();
    let outputs: Vec<&Array1<f64>> = survivors.iter().filter_map(|r| r.test_output.as_ref()).collect();
    let test_points: Vec<TestPoint> = targets
        .iter()
        .enumerate()
        .map(|(k, &target)| {
            let ys: Vec<f64> = outputs.iter().map(|o| o[k]).collect();
            TestPoint { target, mean_output: stats::mean(&ys), std_output: stats::variance(&ys).sqrt() }
        })
        .collect();
    let means: Vec<f64> = test_points.iter().map(|t| t.mean_output).collect();
    let per_model_mse: Vec<f64> = outputs
        .iter()
        .map(|o| {
            let sq: Vec<f64> = o.iter().zip(&targets).map(|(f, y)| (f - y) * (f - y)).collect();
            stats::mean(&sq)
        })
        .collect();
    Ok(TrainingReport {
        records,
        correlation: stats::pearson(&means, &targets),
        test_mse: stats::mean(&per_model_mse),
        test: test_points,
        diverged,
    })
}
