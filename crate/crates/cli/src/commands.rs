use std::path::PathBuf;

use critnet::ensemble::{
    bifurcation_fraction, empirical_kernel_data_random, layer_stats, probe_ensemble, run_training_experiment,
    with_threads, EnsembleSpec,
};
use critnet::network::synth_dataset;
use critnet::{classify_universality, Error, FlowStatus, KernelTheory, Network, Quadrature, Result};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::output::{num, opt, OutDir};

const DEFAULT_ZOO: [&str; 12] = [
    "perceptron",
    "sigmoid",
    "tanh",
    "sin",
    "relu",
    "leaky_relu:alpha=0.01",
    "softplus",
    "swish",
    "gelu",
    "repu:p=2",
    "mrepu:p=2",
    "linear",
];

fn out_dir(cfg: &ExperimentConfig) -> Result<OutDir> {
    OutDir::create(&cfg.out.clone().unwrap_or_else(|| PathBuf::from(".")))
}

/// Writes `summary.json`: the resolved config plus a `report` section.
fn finish(out: &mut OutDir, cfg: &ExperimentConfig, command: &str, report: serde_json::Value) -> Result<()> {
    let mut summary = cfg.clone();
    summary.command = Some(command.to_string());
    let mut report = report;
    report["files"] = json!(out.written());
    summary.report = Some(report);
    out.json("summary.json", &summary)
}

pub fn suscept(cfg: &ExperimentConfig) -> Result<()> {
    let act = cfg.activation()?;
    let hp = cfg.hyperparams()?;
    let quad = Quadrature::<f64>::new(cfg.quad_order())?;
    let theory = KernelTheory::new(act, hp, &quad).with_route(cfg.route()?);
    let points = cfg.k_grid()?.into_iter().map(|k| theory.point(k)).collect::<Result<Vec<_>>>()?;
    let mut out = out_dir(cfg)?;
    out.csv(
        "suscept.csv",
        &["k", "chi_par", "chi_perp", "ratio", "g", "h"],
        points.iter().map(|p| vec![num(p.k), num(p.chi_par), num(p.chi_perp), opt(p.ratio()), num(p.g), num(p.h)]),
    )?;
    finish(&mut out, cfg, "suscept", json!({ "points": points.len() }))
}

pub fn flow(cfg: &ExperimentConfig) -> Result<()> {
    let act = cfg.activation()?;
    let hp = cfg.hyperparams()?;
    let quad = Quadrature::<f64>::new(cfg.quad_order())?;
    let theory = KernelTheory::new(act, hp, &quad).with_route(cfg.route()?);
    let k1 = cfg.k1.ok_or_else(|| Error::Config("missing `k1`".into()))?;
    let layers = cfg.layers.ok_or_else(|| Error::Config("missing `layers`".into()))?;
    let trace = theory.flow(k1, cfg.dk1.unwrap_or(0.0), cfg.dk2.unwrap_or(0.0), layers, true)?;
    let mut rows: Vec<Vec<String>> = trace
        .layers
        .iter()
        .map(|l| {
            vec![
                l.layer.to_string(),
                num(l.k00),
                num(l.dk1),
                num(l.dk2),
                num(l.chi_par),
                num(l.chi_perp),
                num(l.h),
                opt(l.v),
                "ok".into(),
            ]
        })
        .collect();
    if let FlowStatus::Overflow { layer } | FlowStatus::Underflow { layer } = trace.status {
        let mut row = vec![String::new(); 9];
        row[0] = layer.to_string();
        row[1] = opt(trace.terminal);
        row[8] = trace.status.label().into();
        rows.push(row);
    }
    let mut out = out_dir(cfg)?;
    out.csv("flow.csv", &["layer", "k00", "dk1", "dk2", "chi_par", "chi_perp", "h", "v", "status"], rows)?;
    finish(&mut out, cfg, "flow", json!({ "layers": trace.layers.len(), "status": trace.status }))
}

pub fn classify(cfg: &ExperimentConfig) -> Result<()> {
    let names: Vec<String> = match (&cfg.activations, &cfg.activation) {
        (Some(list), _) => list.clone(),
        (None, Some(one)) => vec![one.clone()],
        (None, None) => DEFAULT_ZOO.iter().map(|s| s.to_string()).collect(),
    };
    let quad = Quadrature::<f64>::new(cfg.quad_order())?;
    let results = names
        .iter()
        .map(|n| classify_universality(&quad, &n.parse()?))
        .collect::<Result<Vec<_>>>()?;
    let mut out = out_dir(cfg)?;
    out.csv(
        "classify.csv",
        &["activation", "class", "reason"],
        results.iter().map(|c| {
            let class = serde_json::to_value(c.class).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            vec![c.activation.to_string(), class, c.reason.clone()]
        }),
    )?;
    out.json("classify.json", &results)?;
    finish(&mut out, cfg, "classify", json!({ "activations": results.len() }))
}

fn ensemble_spec(cfg: &ExperimentConfig, train: bool) -> Result<EnsembleSpec> {
    let scale = cfg.input_scale.unwrap_or(1.0);
    Ok(EnsembleSpec {
        n_models: cfg.n_models.unwrap_or(100),
        arch: cfg.architecture()?,
        hp: cfg.hyperparams()?,
        master_seed: cfg.seed(),
        probe_input: if train { cfg.probe_input() } else { cfg.probe_input().iter().map(|v| v * scale).collect() },
        train: if train { Some(cfg.train_config()?) } else { None },
    })
}

pub fn init_ensemble(cfg: &ExperimentConfig) -> Result<()> {
    let spec = ensemble_spec(cfg, false)?;
    let probes = with_threads(cfg.threads(), || probe_ensemble(&spec))??;
    let widths = spec.arch.widths();
    let stats = layer_stats(&probes, &widths, spec.hp.c_w);
    if stats.first().is_some_and(|s| s.excluded == spec.n_models) {
        return Err(Error::AllExcluded);
    }
    let depth = spec.arch.depth();

    let samples = cfg.data_samples.unwrap_or(100);
    let data = synth_dataset::<f64>(samples, cfg.data_seed.unwrap_or(cfg.seed().wrapping_add(1)))?
        .scale_inputs(cfg.input_scale.unwrap_or(1.0));
    let net = Network::<f64>::init(&spec.arch, &spec.hp, spec.model_seed(0))?;
    let data_k = (1..=depth)
        .map(|l| empirical_kernel_data_random(&net, data.inputs.view(), l))
        .collect::<Result<Vec<_>>>()?;

    let mut out = out_dir(cfg)?;
    out.csv(
        "stats.csv",
        &["layer", "mean_k", "var_k", "v_hat", "chi_perp_hat", "excluded"],
        stats.iter().map(|s| {
            vec![s.layer.to_string(), num(s.mean_k), num(s.var_k), num(s.v_hat), num(s.chi_perp_hat), s.excluded.to_string()]
        }),
    )?;
    out.csv(
        "kernels_param.csv",
        &["model", "layer", "k_hat"],
        probes.iter().enumerate().flat_map(|(m, p)| {
            p.k_hat.iter().enumerate().map(move |(l, &k)| vec![m.to_string(), (l + 1).to_string(), num(k)])
        }),
    )?;
    out.csv(
        "kernels_data.csv",
        &["sample", "layer", "k_hat"],
        (0..samples).flat_map(|s| {
            let data_k = &data_k;
            (0..depth).map(move |l| vec![s.to_string(), (l + 1).to_string(), num(data_k[l][s])])
        }),
    )?;
    let bifurcated = bifurcation_fraction(&probes, depth, 20.0);
    finish(&mut out, cfg, "init-ensemble", json!({ "layers": stats, "bifurcated_fraction": bifurcated }))
}

pub fn train_ensemble(cfg: &ExperimentConfig) -> Result<()> {
    let spec = ensemble_spec(cfg, true)?;
    let train = spec.train.clone().expect("set above");
    let record = cfg.record_epochs(train.epochs);
    let report = with_threads(cfg.threads(), || run_training_experiment(&spec, &record))??;
    if report.diverged == spec.n_models {
        return Err(Error::AllExcluded);
    }
    let mut out = out_dir(cfg)?;
    out.csv(
        "records.csv",
        &["epoch", "layer", "mean_k", "var_k", "v_hat", "chi_perp_hat", "excluded"],
        report.records.iter().flat_map(|r| {
            r.layers.iter().map(move |s| {
                vec![
                    r.epoch.to_string(),
                    s.layer.to_string(),
                    num(s.mean_k),
                    num(s.var_k),
                    num(s.v_hat),
                    num(s.chi_perp_hat),
                    s.excluded.to_string(),
                ]
            })
        }),
    )?;
    out.csv(
        "test_report.csv",
        &["target", "mean_output", "std_output"],
        report.test.iter().map(|t| vec![num(t.target), num(t.mean_output), num(t.std_output)]),
    )?;
    let last_hidden: Vec<_> = report
        .last_hidden()
        .into_iter()
        .map(|(epoch, s)| json!({ "epoch": epoch, "mean_k": s.mean_k, "std_k": s.var_k.sqrt() }))
        .collect();
    finish(
        &mut out,
        cfg,
        "train-ensemble",
        json!({
            "correlation": report.correlation,
            "test_mse": report.test_mse,
            "diverged": report.diverged,
            "last_hidden_kernel": last_hidden,
        }),
    )
}
