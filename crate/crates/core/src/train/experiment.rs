use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::batch::TrainedModel;
use super::fit::{fit, fit_transfer, EpochRecord, TrainConfig};
use super::metrics::{evaluate, MetricsReport};
use crate::data::{split_samples, SampleSet};
use crate::error::{Error, Result};
use crate::nn::{init_params, Model, ModelSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Worker threads; runs are merged in seed order regardless.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::regular(),
            seeds: (0..5).collect(),
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.seeds.len() < 2 {
            return Err(Error::config("an experiment needs at least two seeds"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs must be at least 1"));
        }
        Ok(())
    }
}

/// A named architecture to train on every seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentEntry {
    pub name: String,
    pub spec: ModelSpec,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub model: String,
    pub seed: u64,
    /// Test metrics, or the error that stopped the run.
    pub outcome: std::result::Result<MetricsReport, String>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Stat> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat {
            mean,
            std,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub completed: usize,
    pub failed: usize,
    /// Absent when every run failed.
    pub rmse: Option<Stat>,
    pub mae: Option<Stat>,
    pub r2: Option<Stat>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    /// Grouped by model in entry order, then by seed in config order.
    pub runs: Vec<RunRecord>,
    pub summary: Vec<ModelSummary>,
}

impl ExperimentResult {
    fn new(runs: Vec<RunRecord>, names: &[String]) -> Self {
        let summary = names
            .iter()
            .map(|name| {
                let ok: Vec<&MetricsReport> = runs
                    .iter()
                    .filter(|r| &r.model == name)
                    .filter_map(|r| r.outcome.as_ref().ok())
                    .collect();
                let failed = runs.iter().filter(|r| &r.model == name && r.outcome.is_err()).count();
                let stat = |f: fn(&MetricsReport) -> f64| Stat::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
                ModelSummary {
                    model: name.clone(),
                    completed: ok.len(),
                    failed,
                    rmse: stat(|m| m.rmse),
                    mae: stat(|m| m.mae),
                    r2: stat(|m| m.r2),
                }
            })
            .collect();
        ExperimentResult { runs, summary }
    }

    pub fn summary_for(&self, model: &str) -> Option<&ModelSummary> {
        self.summary.iter().find(|s| s.model == model)
    }

    /// `model,seed,rmse,mae,r2`; failed runs read `failed` in every metric.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("model,seed,rmse,mae,r2\n");
        for r in &self.runs {
            match &r.outcome {
                Ok(m) => writeln!(out, "{},{},{},{},{}", r.model, r.seed, m.rmse, m.mae, m.r2),
                Err(_) => writeln!(out, "{},{},failed,failed,failed", r.model, r.seed),
            }
            .expect("writing to a String");
        }
        out
    }

    /// `model,seed,epoch,train_loss,val_loss`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("model,seed,epoch,train_loss,val_loss\n");
        for r in &self.runs {
            for e in &r.history {
                writeln!(out, "{},{},{},{},{}", r.model, r.seed, e.epoch, e.train_loss, e.val_loss)
                    .expect("writing to a String");
            }
        }
        out
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Failure<'a> {
            model: &'a str,
            seed: u64,
            error: &'a str,
        }
        #[derive(Serialize)]
        struct Summary<'a> {
            models: &'a [ModelSummary],
            failures: Vec<Failure<'a>>,
        }
        let failures = self
            .runs
            .iter()
            .filter_map(|r| {
                r.outcome.as_ref().err().map(|e| Failure {
                    model: &r.model,
                    seed: r.seed,
                    error: e,
                })
            })
            .collect();
        let s = Summary {
            models: &self.summary,
            failures,
        };
        serde_json::to_string_pretty(&s).expect("plain data serializes") + "\n"
    }
}

/// Runs `work` for every task index on up to `jobs` threads and returns the
/// results in index order.
fn run_parallel<T: Send>(tasks: usize, jobs: usize, work: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..tasks).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(tasks).max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= tasks {
                    break;
                }
                let r = work(i);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|s| s.expect("every task ran"))
        .collect()
}

fn record(model: &str, seed: u64, started: Instant, result: Result<(MetricsReport, Vec<EpochRecord>, usize)>) -> RunRecord {
    let seconds = started.elapsed().as_secs_f64();
    match result {
        Ok((m, history, best_epoch)) => RunRecord {
            model: model.to_string(),
            seed,
            outcome: Ok(m),
            history,
            best_epoch,
            seconds,
        },
        Err(e) => {
            log::warn!("{model} seed {seed} failed: {e}");
            RunRecord {
                model: model.to_string(),
                seed,
                outcome: Err(e.to_string()),
                history: Vec::new(),
                best_epoch: 0,
                seconds,
            }
        }
    }
}

/// Trains every entry once per seed on its own seeded split and reports
/// test metrics. The seed drives the split, the initial parameters and
/// the shuffle. A failing run is recorded and the rest continue.
pub fn run_experiment(entries: &[ExperimentEntry], samples: &SampleSet, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    for e in entries {
        e.spec.validate()?;
    }
    let tasks: Vec<(usize, u64)> = (0..entries.len())
        .flat_map(|m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let runs = run_parallel(tasks.len(), cfg.jobs, |i| {
        let (m, seed) = tasks[i];
        let entry = &entries[m];
        let started = Instant::now();
        let result = (|| {
            let split = split_samples(samples.len(), cfg.train.ratios, seed)?;
            let model = init_params(&entry.spec, seed)?;
            let train = TrainConfig { seed, ..cfg.train.clone() };
            let out = fit(model, samples, &split, &train)?;
            let m = evaluate(&out.trained, samples, &split.test)?;
            Ok((m, out.history, out.best_epoch))
        })();
        let r = record(&entry.name, seed, started, result);
        log::info!("{} seed {seed}: {:?} in {:.1}s", entry.name, r.outcome.as_ref().map(|m| m.rmse), r.seconds);
        r
    });
    let names: Vec<String> = entries.iter().map(|e| e.name.clone()).collect();
    Ok(ExperimentResult::new(runs, &names))
}

/// Name of the direct-application baseline in transfer experiments.
pub const PRETRAINED_RUN: &str = "pretrained";
/// Name of the fine-tuned transfer model in transfer experiments.
pub const TRANSFER_RUN: &str = "transfer";

/// For each seed, splits the evacuation samples, scores `pretrained`
/// applied directly to the test split, then trains a transfer model on top
/// of it and scores that on the same split.
pub fn run_transfer_experiment(
    pretrained: &TrainedModel,
    spec: &ModelSpec,
    samples: &SampleSet,
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let seeds = &cfg.seeds;
    let runs = run_parallel(seeds.len(), cfg.jobs, |i| {
        let seed = seeds[i];
        let started = Instant::now();
        let split = split_samples(samples.len(), cfg.train.ratios, seed);
        let direct = split
            .as_ref()
            .map_err(|e| Error::EmptySamples(e.to_string()))
            .and_then(|s| evaluate(pretrained, samples, &s.test))
            .map(|m| (m, Vec::new(), 0));
        let direct = record(PRETRAINED_RUN, seed, started, direct);
        let started = Instant::now();
        let tuned = (|| {
            let split = split.map_err(|e| Error::EmptySamples(e.to_string()))?;
            let spec = ModelSpec { seed, ..spec.clone() };
            let model = Model::transfer_from(&pretrained.model, &spec)?;
            let train = TrainConfig { seed, ..cfg.train.clone() };
            let out = fit_transfer(model, &pretrained.scaling, samples, &split, &train)?;
            let m = evaluate(&out.trained, samples, &split.test)?;
            Ok((m, out.history, out.best_epoch))
        })();
        let tuned = record(TRANSFER_RUN, seed, started, tuned);
        log::info!("transfer seed {seed}: {:?} in {:.1}s", tuned.outcome.as_ref().map(|m| m.rmse), tuned.seconds);
        (direct, tuned)
    });
    let (direct, tuned): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let names = [PRETRAINED_RUN.to_string(), TRANSFER_RUN.to_string()];
    Ok(ExperimentResult::new(direct.into_iter().chain(tuned).collect(), &names))
}
