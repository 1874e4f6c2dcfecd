use std::path::Path;

use numcore::Tensor;
use serde::{Deserialize, Serialize};

use super::clean::{clean, drop_sparse_detectors, CleaningConfig, CleaningReport};
use super::features::{extract_demand_features, extract_regular_features, Zone, DEMAND_LAG_HOURS};
use super::series::SeriesSet;
use super::synth::{Scenario, ScenarioConfig};
use super::window::{window_samples, SampleSet};
use crate::error::{Error, Result};
use crate::graph::{static_adjacency, DetectorNetwork, DynamicGraph, GraphConfig};

pub const TOPOLOGY_FILE: &str = "topology.json";
pub const REGULAR_FILE: &str = "regular.csv";
pub const EVACUATION_FILE: &str = "evacuation.csv";
pub const ZONES_FILE: &str = "zones.json";
pub const SCENARIO_FILE: &str = "scenario.json";

/// Contents of `scenario.json`: the landfall clock plus, for generated
/// data, the generator configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    /// Hours after the start of the evacuation series.
    pub landfall_hour: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<ScenarioConfig>,
}

/// Raw observations of one study area.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub network: DetectorNetwork,
    pub regular: SeriesSet,
    pub evacuation: Option<SeriesSet>,
    pub zones: Vec<Zone>,
    pub meta: ScenarioMeta,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

impl Dataset {
    pub fn from_scenario(s: &Scenario) -> Self {
        Dataset {
            network: s.network.clone(),
            regular: s.regular.clone(),
            evacuation: Some(s.evacuation.clone()),
            zones: s.zones.clone(),
            meta: ScenarioMeta {
                landfall_hour: s.landfall_hour,
                generator: Some(s.config.clone()),
            },
        }
    }

    /// Writes `topology.json`, `regular.csv`, `evacuation.csv` (when
    /// present), `zones.json` and `scenario.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.network.save(dir.join(TOPOLOGY_FILE))?;
        self.regular.write_csv(dir.join(REGULAR_FILE))?;
        if let Some(ev) = &self.evacuation {
            ev.write_csv(dir.join(EVACUATION_FILE))?;
        }
        write_json(&dir.join(ZONES_FILE), &self.zones)?;
        write_json(&dir.join(SCENARIO_FILE), &self.meta)
    }

    /// Reads a dataset directory. `evacuation.csv`, `zones.json` and
    /// `scenario.json` are optional together.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let network = DetectorNetwork::load(dir.join(TOPOLOGY_FILE))?;
        let regular = SeriesSet::read_csv(dir.join(REGULAR_FILE), &network)?;
        let ev_path = dir.join(EVACUATION_FILE);
        let evacuation = if ev_path.exists() {
            Some(SeriesSet::read_csv(&ev_path, &network)?)
        } else {
            None
        };
        let zones_path = dir.join(ZONES_FILE);
        let zones = if zones_path.exists() { read_json(&zones_path)? } else { Vec::new() };
        let meta_path = dir.join(SCENARIO_FILE);
        let meta = if meta_path.exists() {
            read_json(&meta_path)?
        } else {
            ScenarioMeta {
                landfall_hour: 0,
                generator: None,
            }
        };
        if evacuation.is_some() && (zones.is_empty() || !meta_path.exists()) {
            return Err(Error::config(format!(
                "{} needs {ZONES_FILE} and {SCENARIO_FILE} alongside it",
                ev_path.display()
            )));
        }
        Ok(Dataset {
            network,
            regular,
            evacuation,
            zones,
            meta,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub cleaning: CleaningConfig,
    pub graph: GraphConfig,
    pub input_len: usize,
    pub horizon: usize,
    pub stride: usize,
    /// Leading regular hours used only as feature history.
    pub warmup_hours: usize,
    pub demand_lag_hours: i64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cleaning: CleaningConfig::default(),
            graph: GraphConfig::default(),
            input_len: 6,
            horizon: 6,
            stride: 1,
            warmup_hours: 48,
            demand_lag_hours: DEMAND_LAG_HOURS,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Source ids and worst-phase missing fractions of dropped detectors.
    pub dropped: Vec<(usize, f64)>,
    pub regular: CleaningReport,
    pub evacuation: Option<CleaningReport>,
}

/// Cleaned series and model-ready windows of both phases.
#[derive(Clone, Debug)]
pub struct Prepared {
    /// Network after dropping detectors, renumbered `1..N`.
    pub network: DetectorNetwork,
    pub regular_series: SeriesSet,
    pub evacuation_series: Option<SeriesSet>,
    pub regular: SampleSet,
    pub evacuation: Option<SampleSet>,
    /// Row of the regular series that is row 0 of the regular frames.
    pub regular_offset: usize,
    /// Row of the evacuation series that is row 0 of the evacuation frames.
    pub evacuation_offset: usize,
    pub tt_std: f64,
    pub report: PipelineReport,
}

fn rows_from(t: &Tensor, from: usize) -> Result<Tensor> {
    let row: usize = t.shape()[1..].iter().product();
    let mut shape = t.shape().to_vec();
    shape[0] -= from;
    Ok(Tensor::new(shape, t.data()[from * row..].to_vec())?)
}

fn flow_frame(set: &SeriesSet, from: usize) -> Result<Tensor> {
    let flows = set.flows_by_hour()?;
    let n = set.nodes();
    Ok(Tensor::new(
        vec![set.hours() - from, n],
        flows[from..].iter().flatten().copied().collect(),
    )?)
}

/// Cleans both phases, extracts features, builds the dynamic graphs and
/// windows everything into sample sets.
///
/// A detector dropped in either phase is dropped from both. The graph's
/// travel-time spread is fitted on the regular phase and reused for the
/// evacuation phase. When the evacuation series directly continues the
/// regular one, its features use the regular days as history.
pub fn prepare(ds: &Dataset, cfg: &PipelineConfig) -> Result<Prepared> {
    let max_missing = cfg.cleaning.max_missing;
    let (_, reg_drop) = drop_sparse_detectors(&ds.regular, max_missing)?;
    let ev_drop = ds
        .evacuation
        .as_ref()
        .map(|ev| drop_sparse_detectors(ev, max_missing).map(|(_, r)| r))
        .transpose()?;
    let keep: Vec<usize> = reg_drop
        .kept
        .iter()
        .copied()
        .filter(|id| ev_drop.as_ref().is_none_or(|r| r.kept.contains(id)))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let mut dropped: Vec<(usize, f64)> = Vec::new();
    for (id, f) in reg_drop.dropped.iter().chain(ev_drop.iter().flat_map(|r| &r.dropped)) {
        let source = ds.network.nodes[id - 1].source_id();
        match dropped.iter_mut().find(|(s, _)| *s == source) {
            Some(entry) => entry.1 = entry.1.max(*f),
            None => dropped.push((source, *f)),
        }
    }
    dropped.sort_by_key(|d| d.0);
    if !dropped.is_empty() {
        log::info!("dropping {} sparse detectors: {:?}", dropped.len(), dropped);
    }

    let network = ds.network.retain(&keep)?;
    let (regular_series, mut reg_report) = clean(&ds.regular.retain(&keep), &cfg.cleaning)?;
    reg_report.drop = reg_drop;
    let regular_series = regular_series.renumbered();
    let warmup = cfg.warmup_hours;
    let reg_features = extract_regular_features(&regular_series, warmup)?;
    let speeds = regular_series.speeds_by_hour()?;
    let graph = DynamicGraph::fit_build(&network, &speeds[warmup..], cfg.graph)?;
    let static_adj = static_adjacency(&network, cfg.graph)?;
    let regular = window_samples(
        reg_features.data,
        flow_frame(&regular_series, warmup)?,
        cfg.input_len,
        cfg.horizon,
        cfg.stride,
    )?
    .with_adjacency(graph.normalized_all().to_vec())?
    .with_static_adjacency(static_adj.clone())?;

    let mut evacuation = None;
    let mut evacuation_series = None;
    let mut evacuation_offset = 0;
    let mut ev_report = None;
    if let Some(ev) = &ds.evacuation {
        let (ev_clean, mut report) = clean(&ev.retain(&keep), &cfg.cleaning)?;
        report.drop = ev_drop.expect("evacuation drop report exists");
        let ev_clean = ev_clean.renumbered();
        let (features, offset) = match regular_series.concat(&ev_clean) {
            Ok(joined) => {
                let f = extract_regular_features(&joined, regular_series.hours())?;
                (f.data, 0)
            }
            Err(_) => {
                log::warn!("evacuation series does not continue the regular one; using its own first {warmup} hours as history");
                (extract_regular_features(&ev_clean, warmup)?.data, warmup)
            }
        };
        let demand = extract_demand_features(
            &ds.zones,
            ds.meta.landfall_hour,
            &network,
            ev_clean.start,
            ev_clean.hours(),
            cfg.demand_lag_hours,
        )?;
        let ev_speeds = ev_clean.speeds_by_hour()?;
        let ev_graph = DynamicGraph::build(&network, &ev_speeds[offset..], graph.tt_std, cfg.graph)?;
        let samples = window_samples(
            features,
            flow_frame(&ev_clean, offset)?,
            cfg.input_len,
            cfg.horizon,
            cfg.stride,
        )?
        .with_demand(rows_from(&demand.data, offset)?)?
        .with_adjacency(ev_graph.normalized_all().to_vec())?
        .with_static_adjacency(static_adj)?;
        evacuation = Some(samples);
        evacuation_series = Some(ev_clean);
        evacuation_offset = offset;
        ev_report = Some(report);
    }

    Ok(Prepared {
        network,
        regular_series,
        evacuation_series,
        regular,
        evacuation,
        regular_offset: warmup,
        evacuation_offset,
        tt_std: graph.tt_std,
        report: PipelineReport {
            dropped,
            regular: reg_report,
            evacuation: ev_report,
        },
    })
}
