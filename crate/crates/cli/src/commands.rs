use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use evacflow::data::{
    generate_synthetic, prepare, split_samples, Dataset, PipelineConfig, Prepared, SampleSet, ScenarioConfig, Split,
    EVACUATION_FILE, REGULAR_FILE, SCENARIO_FILE, TOPOLOGY_FILE, ZONES_FILE,
};
use evacflow::graph::{add_self_loops, normalize, DegreeMode, DynamicGraph};
use evacflow::nn::{init_params, Batch, Model, ModelKind, ModelSpec};
use evacflow::train::{
    evaluate, fit, fit_transfer, mse_loss, run_experiment, run_transfer_experiment, EpochRecord, ExperimentConfig,
    ExperimentEntry, ExperimentResult, FitOutcome, MetricsReport, TrainConfig, TrainedModel,
};
use numcore::{gradcheck, NumError, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::artifact::{ModelArtifact, Provenance, Score};
use crate::cli::{Cli, Command, Common, SplitName};
use crate::config::{self, ExperimentRunConfig, ModelOptions, TrainRunConfig, TransferRunConfig};
use crate::error::{CliError, Result};

pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const GRADCHECK_FILE: &str = "gradcheck.csv";
pub const CONGESTION_FILE: &str = "congestion_map.csv";
pub const REPORT_FILE: &str = "cleaning_report.json";
pub const ADJACENCY_FILE: &str = "adjacency.csv";

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, nodes } => synth(&common, nodes),
        Command::Clean { common, data } => clean(&common, &data),
        Command::Train {
            common,
            data,
            model,
            epochs,
            lr,
            hidden,
        } => {
            let mut cfg: TrainRunConfig = config::load(common.config.as_deref())?;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            cfg.model = model.unwrap_or(cfg.model);
            override_train(&mut cfg.train, epochs, lr);
            cfg.architecture.hidden_size = hidden.or(cfg.architecture.hidden_size);
            train(&common, &data, &cfg)
        }
        Command::Transfer {
            common,
            data,
            model,
            epochs,
            lr,
            hidden,
        } => {
            let mut cfg: TransferRunConfig = config::load(common.config.as_deref())?;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            override_train(&mut cfg.train, epochs, lr);
            cfg.demand_hidden = hidden.or(cfg.demand_hidden);
            transfer(&common, &data, &model, &cfg)
        }
        Command::Evaluate {
            common,
            data,
            model,
            split,
        } => evaluate_cmd(&common, &data, &model, split),
        Command::Predict {
            common,
            data,
            model,
            split,
        } => predict(&common, &data, &model, split),
        Command::Gradcheck { common, model, tol, step } => gradcheck_cmd(&common, model, tol, step),
        Command::Experiment {
            common,
            data,
            model,
            pretrained,
            epochs,
            lr,
            hidden,
            jobs,
            seeds,
        } => {
            let mut cfg: ExperimentRunConfig = config::load(common.config.as_deref())?;
            if !model.is_empty() {
                cfg.models = model;
            }
            if common.seed.is_some() || seeds.is_some() {
                let base = common.seed.or(cfg.seeds.first().copied()).unwrap_or(0);
                let count = seeds.unwrap_or(cfg.seeds.len()) as u64;
                cfg.seeds = (base..base + count).collect();
            }
            cfg.jobs = jobs.unwrap_or(cfg.jobs);
            if hidden.is_some() {
                if pretrained.is_some() {
                    cfg.architecture.demand_hidden = hidden;
                } else {
                    cfg.architecture.hidden_size = hidden;
                }
            }
            let default = if pretrained.is_some() { TrainConfig::transfer() } else { TrainConfig::regular() };
            let mut train = cfg.train.take().unwrap_or(default);
            override_train(&mut train, epochs, lr);
            cfg.train = Some(train);
            experiment(&common, &data, pretrained.as_deref(), &cfg)
        }
        Command::CongestionMap {
            common,
            data,
            model,
            hours,
        } => congestion_map(&common, &data, &model, &hours),
    }
}

fn override_train(train: &mut TrainConfig, epochs: Option<usize>, lr: Option<f64>) {
    train.epochs = epochs.unwrap_or(train.epochs);
    train.lr = lr.unwrap_or(train.lr);
}

fn no_config(common: &Common, command: &str) -> Result<()> {
    match &common.config {
        Some(_) => Err(CliError::Config(format!("{command} takes no config file"))),
        None => Ok(()),
    }
}

fn out_dir(common: &Common) -> Result<&Path> {
    let dir = common.out.as_path();
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir)
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

fn timestamp(common: &Common) -> Option<String> {
    if common.no_timestamps {
        return None;
    }
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    chrono::DateTime::from_timestamp(secs as i64, 0).map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing(format!("{what} {} does not exist", path.display())))
    }
}

/// SHA-256 over the names, lengths and bytes of the dataset files present.
pub fn fingerprint(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for name in [TOPOLOGY_FILE, REGULAR_FILE, EVACUATION_FILE, ZONES_FILE, SCENARIO_FILE] {
        let path = dir.join(name);
        if path.exists() {
            let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
            h.update(name.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
    }
    Ok(hex::encode(h.finalize()))
}

fn load_prepared(data: &Path, pipeline: &PipelineConfig) -> Result<Prepared> {
    require(data, "dataset directory")?;
    Ok(prepare(&Dataset::load(data)?, pipeline)?)
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in history {
        writeln!(out, "{},{},{}", e.epoch, e.train_loss, e.val_loss).expect("writing to a String");
    }
    out
}

fn split_parts(split: &Split) -> [(&'static str, &[usize]); 3] {
    [("train", &split.train), ("val", &split.val), ("test", &split.test)]
}

/// What a fit was trained on.
struct FitInputs<'a> {
    data: &'a Path,
    pipeline: PipelineConfig,
    seed: u64,
    train: &'a TrainConfig,
    samples: &'a SampleSet,
    split: &'a Split,
}

/// Writes the model file, loss history and per-split metrics of a fit.
/// `reports` holds extra metrics to store alongside the split scores.
fn save_fit(
    common: &Common,
    dir: &Path,
    outcome: &FitOutcome,
    inputs: FitInputs,
    mut reports: BTreeMap<String, MetricsReport>,
) -> Result<()> {
    let FitInputs {
        data,
        pipeline,
        seed,
        train,
        samples,
        split,
    } = inputs;
    for (name, idx) in split_parts(split) {
        if !idx.is_empty() {
            reports.insert(name.to_string(), evaluate(&outcome.trained, samples, idx)?);
        }
    }
    let provenance = Provenance {
        seed,
        train: train.clone(),
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val_loss,
        metrics: reports.iter().map(|(k, m)| (k.clone(), Score::from(m))).collect(),
        data_fingerprint: fingerprint(data)?,
        created_at: timestamp(common),
    };
    ModelArtifact::new(&outcome.trained, pipeline, provenance).save(dir.join(MODEL_FILE))?;
    write(dir.join(HISTORY_FILE), history_csv(&outcome.history))?;
    write(dir.join(METRICS_JSON), to_json(&reports))?;
    for (name, m) in &reports {
        println!("{name}: rmse {:.3} mae {:.3} r2 {:.4} ({} samples)", m.rmse, m.mae, m.r2, m.samples);
    }
    println!("best epoch {} of {}; wrote {}", outcome.best_epoch, outcome.history.len(), dir.display());
    Ok(())
}

fn synth(common: &Common, nodes: Option<usize>) -> Result<()> {
    let mut cfg: ScenarioConfig = config::load(common.config.as_deref())?;
    cfg.seed = common.seed.unwrap_or(cfg.seed);
    cfg.topology.nodes = nodes.unwrap_or(cfg.topology.nodes);
    let scenario = generate_synthetic(&cfg)?;
    let dir = out_dir(common)?;
    Dataset::from_scenario(&scenario).save(dir)?;
    println!(
        "{} detectors, {} regular and {} evacuation hours written to {}",
        scenario.network.len(),
        scenario.regular.hours(),
        scenario.evacuation.hours(),
        dir.display()
    );
    Ok(())
}

fn clean(common: &Common, data: &Path) -> Result<()> {
    let pipeline: PipelineConfig = config::load(common.config.as_deref())?;
    require(data, "dataset directory")?;
    let ds = Dataset::load(data)?;
    let p = prepare(&ds, &pipeline)?;
    let dir = out_dir(common)?;
    let cleaned = Dataset {
        network: p.network.clone(),
        regular: p.regular_series.clone(),
        evacuation: p.evacuation_series.clone(),
        zones: ds.zones.clone(),
        meta: ds.meta.clone(),
    };
    cleaned.save(dir)?;
    write(dir.join(REPORT_FILE), to_json(&p.report))?;
    let speeds = p.regular_series.speeds_by_hour()?;
    let graph = DynamicGraph::build(&p.network, &speeds[p.regular_offset..], p.tt_std, pipeline.graph)?;
    graph.export_csv(&p.network, dir.join(ADJACENCY_FILE))?;
    println!(
        "kept {} detectors ({} dropped); {} regular and {} evacuation samples; wrote {}",
        p.network.len(),
        p.report.dropped.len(),
        p.regular.len(),
        p.evacuation.as_ref().map_or(0, |e| e.len()),
        dir.display()
    );
    Ok(())
}

fn train(common: &Common, data: &Path, cfg: &TrainRunConfig) -> Result<()> {
    if cfg.model == ModelKind::Transfer {
        return Err(CliError::Config("transfer models are trained with the transfer subcommand".into()));
    }
    let prepared = load_prepared(data, &cfg.pipeline)?;
    let seed = cfg.seed;
    let spec = cfg.architecture.spec(cfg.model, &prepared, seed);
    let train = TrainConfig { seed, ..cfg.train.clone() };
    let samples = &prepared.regular;
    let split = split_samples(samples.len(), train.ratios, seed)?;
    let outcome = fit(init_params(&spec, seed)?, samples, &split, &train)?;
    let dir = out_dir(common)?;
    let inputs = FitInputs {
        data,
        pipeline: cfg.pipeline.clone(),
        seed,
        train: &train,
        samples,
        split: &split,
    };
    save_fit(common, dir, &outcome, inputs, BTreeMap::new())
}

fn evacuation(prepared: &Prepared) -> Result<&SampleSet> {
    prepared
        .evacuation
        .as_ref()
        .ok_or_else(|| CliError::Config("the dataset has no evacuation phase".into()))
}

fn load_pretrained(path: &Path) -> Result<ModelArtifact> {
    let art = ModelArtifact::load(path)?;
    if art.spec.kind != ModelKind::DgcnLstm {
        return Err(CliError::Config(format!(
            "{} holds a {} model; transfer needs a dgcnlstm",
            path.display(),
            art.spec.kind
        )));
    }
    Ok(art)
}

fn transfer(common: &Common, data: &Path, model: &Path, cfg: &TransferRunConfig) -> Result<()> {
    let art = load_pretrained(model)?;
    let prepared = load_prepared(data, &art.pipeline)?;
    art.check_data(prepared.regular.nodes(), prepared.regular.channels(), None)?;
    let samples = evacuation(&prepared)?;
    let pre = art.to_trained()?;
    let seed = cfg.seed;
    let opts = ModelOptions {
        demand_hidden: cfg.demand_hidden,
        ..ModelOptions::default()
    };
    let spec = opts.spec(ModelKind::Transfer, &prepared, seed);
    let train = TrainConfig { seed, ..cfg.train.clone() };
    let split = split_samples(samples.len(), train.ratios, seed)?;
    let outcome = fit_transfer(Model::transfer_from(&pre.model, &spec)?, &pre.scaling, samples, &split, &train)?;
    let mut reports = BTreeMap::new();
    reports.insert("pretrained_test".to_string(), evaluate(&pre, samples, &split.test)?);
    let dir = out_dir(common)?;
    let inputs = FitInputs {
        data,
        pipeline: art.pipeline.clone(),
        seed,
        train: &train,
        samples,
        split: &split,
    };
    save_fit(common, dir, &outcome, inputs, reports)
}

/// The model, its samples, and the series row of frame row 0.
struct Loaded {
    art: ModelArtifact,
    trained: TrainedModel,
    prepared: Prepared,
}

impl Loaded {
    fn new(data: &Path, model: &Path) -> Result<Self> {
        let art = ModelArtifact::load(model)?;
        let prepared = load_prepared(data, &art.pipeline)?;
        let demand = prepared
            .evacuation
            .as_ref()
            .and_then(|e| e.demand.as_ref())
            .map(|d| d.shape()[2]);
        art.check_data(prepared.regular.nodes(), prepared.regular.channels(), demand)?;
        let trained = art.to_trained()?;
        Ok(Loaded { art, trained, prepared })
    }

    /// Transfer models forecast the evacuation phase, the rest the regular
    /// one.
    fn samples(&self) -> Result<(&SampleSet, usize)> {
        if self.art.spec.kind == ModelKind::Transfer {
            Ok((evacuation(&self.prepared)?, self.prepared.evacuation_offset))
        } else {
            Ok((&self.prepared.regular, self.prepared.regular_offset))
        }
    }

    fn indices(&self, samples: &SampleSet, split: SplitName, seed: Option<u64>) -> Result<Vec<usize>> {
        let seed = seed.unwrap_or(self.art.provenance.seed);
        let s = split_samples(samples.len(), self.art.provenance.train.ratios, seed)?;
        Ok(match split {
            SplitName::Train => s.train,
            SplitName::Val => s.val,
            SplitName::Test => s.test,
            SplitName::All => (0..samples.len()).collect(),
        })
    }
}

fn split_label(split: SplitName) -> &'static str {
    match split {
        SplitName::Train => "train",
        SplitName::Val => "val",
        SplitName::Test => "test",
        SplitName::All => "all",
    }
}

fn evaluate_cmd(common: &Common, data: &Path, model: &Path, split: SplitName) -> Result<()> {
    no_config(common, "evaluate")?;
    let loaded = Loaded::new(data, model)?;
    let (samples, _) = loaded.samples()?;
    let idx = loaded.indices(samples, split, common.seed)?;
    let report = evaluate(&loaded.trained, samples, &idx)?;
    let dir = out_dir(common)?;
    let mut out = BTreeMap::new();
    out.insert(split_label(split), &report);
    write(dir.join(METRICS_JSON), to_json(&out))?;
    println!(
        "{}: rmse {:.3} mae {:.3} r2 {:.4} ({} samples)",
        split_label(split),
        report.rmse,
        report.mae,
        report.r2,
        report.samples
    );
    Ok(())
}

fn predict(common: &Common, data: &Path, model: &Path, split: SplitName) -> Result<()> {
    no_config(common, "predict")?;
    let loaded = Loaded::new(data, model)?;
    let (samples, _) = loaded.samples()?;
    let mut idx = loaded.indices(samples, split, common.seed)?;
    idx.sort_unstable();
    let pred = loaded.trained.predict_flows(samples, &idx)?;
    let truth = samples.materialize_targets(&idx);
    let (p, n) = (samples.horizon, samples.nodes());
    let ids: Vec<usize> = loaded.prepared.network.nodes.iter().map(|d| d.source_id()).collect();
    let mut out = String::from("sample,horizon_step,node_id,flow_pred,flow_true\n");
    for (i, &s) in idx.iter().enumerate() {
        for k in 0..p {
            for (j, id) in ids.iter().enumerate() {
                let at = (i * p + k) * n + j;
                writeln!(out, "{s},{},{id},{},{}", k + 1, pred.data()[at], truth.data()[at]).expect("writing to a String");
            }
        }
    }
    let dir = out_dir(common)?;
    write(dir.join(PREDICTIONS_FILE), out)?;
    println!("{} samples x {p} steps x {n} detectors written to {}", idx.len(), dir.display());
    Ok(())
}

/// A small instance: 5 detectors in two corridors, 2 input and 2 output
/// hours, 3 regular and 4 demand channels.
fn gradcheck_spec(kind: ModelKind, seed: u64) -> ModelSpec {
    ModelSpec {
        demand_features: 4,
        hidden_size: 6,
        demand_hidden: 5,
        node_order: vec![vec![0, 2, 4], vec![1, 3]],
        seed,
        ..ModelSpec::new(kind, 5, 2, 2, 3)
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Random symmetric nonnegative weights with self-loops, normalized.
fn random_adjacency(rng: &mut ChaCha8Rng, n: usize) -> Result<Tensor> {
    let mut a = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.5) {
                let w = rng.random_range(0.1..1.0);
                a.data_mut()[i * n + j] = w;
                a.data_mut()[j * n + i] = w;
            }
        }
    }
    Ok(normalize(&add_self_loops(&a), DegreeMode::Weighted)?)
}

fn gradcheck_cmd(common: &Common, kind: Option<ModelKind>, tol: f64, step: f64) -> Result<()> {
    no_config(common, "gradcheck")?;
    if !(tol >= 0.0 && step > 0.0) {
        return Err(CliError::Config(format!("need tol >= 0 and step > 0, got {tol} and {step}")));
    }
    let seed = common.seed.unwrap_or(0);
    let kinds = kind.map_or(ModelKind::ALL.to_vec(), |k| vec![k]);
    let mut csv = String::from("model,param,max_rel_err,max_abs_err,analytic,numeric\n");
    let mut failures = Vec::new();
    for kind in kinds {
        let spec = gradcheck_spec(kind, seed);
        let mut model = if kind == ModelKind::Transfer {
            let block = init_params(&spec.pretrained_spec(), seed)?;
            Model::transfer_from(&block, &spec)?
        } else {
            init_params(&spec, seed)?
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let (b, n) = (2, spec.nodes);
        let steps = |rng: &mut ChaCha8Rng, c: usize| -> Vec<Tensor> {
            (0..spec.input_len).map(|_| uniform(rng, &[b, n, c], -1.0, 1.0)).collect()
        };
        let inputs = steps(&mut rng, spec.features);
        let demand = steps(&mut rng, spec.demand_features);
        let mut adjacency = Vec::with_capacity(spec.input_len);
        for _ in 0..spec.input_len {
            let mats = (0..b).map(|_| random_adjacency(&mut rng, n)).collect::<Result<Vec<_>>>()?;
            adjacency.push(Tensor::stack(&mats.iter().collect::<Vec<_>>()).map_err(evacflow::Error::from)?);
        }
        let batch = Batch {
            inputs,
            demand: Some(demand),
            adjacency: kind.needs_adjacency().then_some(adjacency),
            pretrained: None,
        };
        let target = uniform(&mut rng, &[b, spec.horizon * n], -1.0, 1.0);
        let frozen = model.clone();
        let report = gradcheck(
            &mut model,
            |tape: &mut Tape, vars| {
                let out = frozen.forward(tape, vars, &batch).map_err(|e| NumError::Contract(e.to_string()))?;
                let t = tape.constant(target.clone());
                mse_loss(tape, out, t).map_err(|e| NumError::Contract(e.to_string()))
            },
            step,
            tol,
        )
        .map_err(evacflow::Error::from)?;
        for p in &report.params {
            writeln!(csv, "{kind},{},{},{},{},{}", p.name, p.max_rel_err, p.max_abs_err, p.analytic, p.numeric)
                .expect("writing to a String");
        }
        let worst = report.worst().expect("every kind has trainable parameters");
        let verdict = if report.passed() { "ok" } else { "FAILED" };
        println!("{kind}: {verdict}, worst {} relative error {:.3e}", worst.name, worst.max_rel_err);
        if !report.passed() {
            failures.push(format!("{kind}: worst parameter {} relative error {:.3e} > {tol:e}", worst.name, worst.max_rel_err));
        }
    }
    let dir = out_dir(common)?;
    write(dir.join(GRADCHECK_FILE), csv)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Gradcheck(failures.join("; ")))
    }
}

fn write_experiment(common: &Common, result: &ExperimentResult) -> Result<()> {
    let dir = out_dir(common)?;
    write(dir.join(METRICS_CSV), result.metrics_csv())?;
    write(dir.join(HISTORY_FILE), result.history_csv())?;
    write(dir.join(SUMMARY_FILE), result.summary_json())?;
    for s in &result.summary {
        match (&s.rmse, &s.mae, &s.r2) {
            (Some(rmse), Some(mae), Some(r2)) => println!(
                "{}: rmse {:.3} ± {:.3}, mae {:.3} ± {:.3}, r2 {:.4} ± {:.4} over {} runs",
                s.model, rmse.mean, rmse.std, mae.mean, mae.std, r2.mean, r2.std, s.completed
            ),
            _ => println!("{}: every run failed", s.model),
        }
    }
    let failed: usize = result.summary.iter().map(|s| s.failed).sum();
    if failed > 0 {
        return Err(CliError::Core(evacflow::Error::Contract(format!(
            "{failed} of {} runs failed; see {}",
            result.runs.len(),
            dir.join(SUMMARY_FILE).display()
        ))));
    }
    Ok(())
}

fn experiment(common: &Common, data: &Path, pretrained: Option<&Path>, cfg: &ExperimentRunConfig) -> Result<()> {
    let exp = ExperimentConfig {
        train: cfg.train.clone().unwrap_or_default(),
        seeds: cfg.seeds.clone(),
        jobs: cfg.jobs,
    };
    exp.validate()?;
    let result = match pretrained {
        Some(path) => {
            let art = load_pretrained(path)?;
            let prepared = load_prepared(data, &art.pipeline)?;
            art.check_data(prepared.regular.nodes(), prepared.regular.channels(), None)?;
            let pre = art.to_trained()?;
            let spec = cfg.architecture.spec(ModelKind::Transfer, &prepared, 0);
            run_transfer_experiment(&pre, &spec, evacuation(&prepared)?, &exp)?
        }
        None => {
            if cfg.models.is_empty() || cfg.models.contains(&ModelKind::Transfer) {
                return Err(CliError::Config(
                    "list one or more of lstm, convlstm, gcnlstm, dgcnlstm; transfer needs --pretrained".into(),
                ));
            }
            let prepared = load_prepared(data, &cfg.pipeline)?;
            let entries: Vec<ExperimentEntry> = cfg
                .models
                .iter()
                .map(|&k| ExperimentEntry {
                    name: k.to_string(),
                    spec: cfg.architecture.spec(k, &prepared, 0),
                })
                .collect();
            run_experiment(&entries, &prepared.regular, &exp)?
        }
    };
    write_experiment(common, &result)
}

fn congestion_map(common: &Common, data: &Path, model: &Path, hours: &[usize]) -> Result<()> {
    no_config(common, "congestion-map")?;
    let loaded = Loaded::new(data, model)?;
    let (samples, offset) = loaded.samples()?;
    let l = samples.input_len;
    // First forecast hour of each sample, in series rows.
    let first = |s: usize| samples.starts[s] + l + offset;
    let (lo, hi) = (first(0), first(samples.len() - 1));
    let mut idx = Vec::with_capacity(hours.len());
    for &h in hours {
        let s = (0..samples.len())
            .find(|&s| first(s) == h)
            .ok_or_else(|| CliError::Range(format!("hour {h} is outside the forecastable range {lo}..={hi}")))?;
        idx.push(s);
    }
    let pred = loaded.trained.predict_flows(samples, &idx)?;
    let (p, n) = (samples.horizon, samples.nodes());
    let nodes = &loaded.prepared.network.nodes;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        (&nodes[a].corridor, nodes[a].milepost)
            .partial_cmp(&(&nodes[b].corridor, nodes[b].milepost))
            .expect("mileposts are finite")
    });
    let mut rows: Vec<(usize, usize, usize)> = Vec::with_capacity(hours.len() * p * n);
    for (i, &h) in hours.iter().enumerate() {
        for k in 0..p {
            for &j in &order {
                rows.push((h + k, i, (i * p + k) * n + j));
            }
        }
    }
    // Stable, so equal hours from overlapping requests keep request order.
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = String::from("hour,node_id,lat,lon,corridor,milepost,flow_pred\n");
    for (hour, _, at) in rows {
        let d = &nodes[at % n];
        writeln!(
            out,
            "{hour},{},{},{},{},{},{}",
            d.source_id(),
            d.lat,
            d.lon,
            d.corridor,
            d.milepost,
            pred.data()[at]
        )
        .expect("writing to a String");
    }
    let dir = out_dir(common)?;
    write(dir.join(CONGESTION_FILE), out)?;
    println!("{} request hours x {p} steps x {n} detectors written to {}", hours.len(), dir.display());
    Ok(())
}
