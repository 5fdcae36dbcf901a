//! Run configuration: one JSON document per run, with command-line flags
//! taking precedence over file values.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use critnet::network::{Architecture, BatchSize, TrainConfig};
use critnet::{Activation, Error, InitHyperparams, Result, Route};
use serde::{Deserialize, Serialize};

pub const DEFAULT_RECORD_EPOCHS: [usize; 5] = [0, 250, 500, 750, 1000];

/// Every key a run may set. Irrelevant keys for a command are ignored;
/// unknown keys are rejected. `report` is written by the tools and
/// ignored on load, so a summary can be fed back as a config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<String>,
    /// Activations for `classify`; defaults to the built-in zoo.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activations: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_w: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_out: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_widths: Option<Vec<usize>>,
    /// Shorthand for `hidden` layers of equal width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_models: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_input: Option<Vec<f64>>,
    /// Inputs for the data-random kernel of `init-ensemble`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_samples: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_points: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dk1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dk2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_order: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_epochs: Option<Vec<usize>>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<serde_json::Value>,
}

/// Flags shared by every subcommand; each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for ensembles; 1 is the sequential reference.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Gauss-Hermite order (1..=300).
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Activation, e.g. `relu`, `repu:p=2`, `leaky_relu:alpha=0.1`.
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub c_b: Option<f64>,
    #[arg(long)]
    pub c_w: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub n_models: Option<usize>,
    #[arg(long)]
    pub k_min: Option<f64>,
    #[arg(long)]
    pub k_max: Option<f64>,
    #[arg(long)]
    pub k_points: Option<usize>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// `auto` (closed forms where known) or `quadrature`.
    #[arg(long)]
    pub route: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub input_scale: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// File values (if any) overridden by flags.
    pub fn resolve(flags: &Overrides) -> Result<Self> {
        let mut c = match &flags.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        c.report = None;
        macro_rules! take {
            ($($f:ident),*) => { $( if flags.$f.is_some() { c.$f = flags.$f.clone(); } )* };
        }
        take!(out, seed, threads, quad_order, activation, c_b, c_w, width, hidden, n_models);
        take!(k_min, k_max, k_points, k1, layers, route, epochs, learning_rate, input_scale);
        Ok(c)
    }

    pub fn activation(&self) -> Result<Activation> {
        self.activation
            .as_deref()
            .ok_or_else(|| Error::Config("missing `activation`".into()))?
            .parse()
    }

    pub fn hyperparams(&self) -> Result<InitHyperparams<f64>> {
        let c_w = self.c_w.ok_or_else(|| Error::Config("missing `c_w`".into()))?;
        InitHyperparams::new(self.c_b.unwrap_or(0.0), c_w)
    }

    pub fn route(&self) -> Result<Route> {
        match self.route.as_deref() {
            None | Some("auto") => Ok(Route::Auto),
            Some("quadrature") => Ok(Route::Quadrature),
            Some(other) => Err(Error::Config(format!("unknown route `{other}`"))),
        }
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order.unwrap_or(critnet::gauss::DEFAULT_ORDER)
    }

    pub fn threads(&self) -> usize {
        self.threads.unwrap_or(1)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Explicit `k_values`, else a log grid (default 1e-6..1e3, 50 points).
    pub fn k_grid(&self) -> Result<Vec<f64>> {
        if let Some(ks) = &self.k_values {
            if ks.is_empty() || ks.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
                return Err(Error::Config("`k_values` must be positive and finite".into()));
            }
            return Ok(ks.clone());
        }
        let (lo, hi, n) = (self.k_min.unwrap_or(1e-6), self.k_max.unwrap_or(1e3), self.k_points.unwrap_or(50));
        if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() || n == 0 {
            return Err(Error::Config("K grid needs 0 < k_min <= k_max and k_points >= 1".into()));
        }
        Ok(critnet::criticality::log_grid(lo, hi, n))
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let hidden = match (&self.hidden_widths, self.width, self.hidden) {
            (Some(w), None, None) => w.clone(),
            (None, Some(w), Some(h)) => vec![w; h],
            (None, None, None) => return Err(Error::Config("missing `hidden_widths` or `width` + `hidden`".into())),
            _ => return Err(Error::Config("give either `hidden_widths` or both `width` and `hidden`".into())),
        };
        Architecture::new(self.n_in.unwrap_or(2), self.n_out.unwrap_or(1), hidden, self.activation()?)
    }

    pub fn probe_input(&self) -> Vec<f64> {
        self.probe_input.clone().unwrap_or_else(|| vec![1.0, 0.0])
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            batch: self.batch_size.map_or(BatchSize::Full, BatchSize::Size),
            dataset_size: self.dataset_size.unwrap_or(d.dataset_size),
            test_size: self.test_size.unwrap_or(d.test_size),
            input_scale: self.input_scale.unwrap_or(d.input_scale),
            seed: self.data_seed.unwrap_or(self.seed()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn record_epochs(&self, epochs: usize) -> Vec<usize> {
        self.record_epochs.clone().unwrap_or_else(|| {
            if epochs == 1000 {
                DEFAULT_RECORD_EPOCHS.to_vec()
            } else {
                (0..5).map(|i| i * epochs / 4).collect()
            }
        })
    }
}
