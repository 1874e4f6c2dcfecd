use std::path::Path;

use chrono::{Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DetectorNetwork;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Hourly flow (veh/h) and mean speed (mph) of one detector; `None` marks a
/// missing reading.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorSeries {
    pub node_id: usize,
    pub lanes: u32,
    pub flow: Vec<Option<f64>>,
    pub speed: Vec<Option<f64>>,
}

impl DetectorSeries {
    /// Fraction of hours where flow or speed is missing.
    pub fn missing_fraction(&self) -> f64 {
        if self.flow.is_empty() {
            return 0.0;
        }
        let missing = self
            .flow
            .iter()
            .zip(&self.speed)
            .filter(|(f, s)| f.is_none() || s.is_none())
            .count();
        missing as f64 / self.flow.len() as f64
    }

    pub fn is_complete(&self) -> bool {
        self.flow.iter().chain(&self.speed).all(Option::is_some)
    }
}

/// Series of every detector over the same contiguous hourly range, ordered
/// like the network's nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSet {
    pub start: NaiveDateTime,
    pub series: Vec<DetectorSeries>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    timestamp: String,
    node_id: usize,
    flow: Option<f64>,
    speed: Option<f64>,
    missing_flag: u8,
}

impl SeriesSet {
    pub fn new(start: NaiveDateTime, series: Vec<DetectorSeries>) -> Result<Self> {
        let hours = series.first().map_or(0, |s| s.flow.len());
        for s in &series {
            if s.flow.len() != hours || s.speed.len() != hours {
                return Err(Error::contract(format!(
                    "detector {} covers {} hours, expected {hours}",
                    s.node_id,
                    s.flow.len().min(s.speed.len())
                )));
            }
            if let Some(f) = s.flow.iter().flatten().find(|f| !(**f >= 0.0) || !f.is_finite()) {
                return Err(Error::contract(format!("detector {} has invalid flow {f}", s.node_id)));
            }
            if let Some(v) = s.speed.iter().flatten().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return Err(Error::contract(format!("detector {} has invalid speed {v}", s.node_id)));
            }
        }
        Ok(SeriesSet { start, series })
    }

    pub fn hours(&self) -> usize {
        self.series.first().map_or(0, |s| s.flow.len())
    }

    pub fn nodes(&self) -> usize {
        self.series.len()
    }

    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        self.start + Duration::hours(t as i64)
    }

    pub fn clock_hour(&self, t: usize) -> u32 {
        self.timestamp(t).hour()
    }

    pub fn end(&self) -> NaiveDateTime {
        self.timestamp(self.hours())
    }

    pub fn is_complete(&self) -> bool {
        self.series.iter().all(DetectorSeries::is_complete)
    }

    fn complete_matrix(&self, pick: impl Fn(&DetectorSeries) -> &[Option<f64>]) -> Result<Vec<Vec<f64>>> {
        (0..self.hours())
            .map(|t| {
                self.series
                    .iter()
                    .map(|s| {
                        pick(s)[t].ok_or_else(|| {
                            Error::contract(format!("detector {} is missing hour {t}; impute first", s.node_id))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// `flows[t][k]` for a complete set.
    pub fn flows_by_hour(&self) -> Result<Vec<Vec<f64>>> {
        self.complete_matrix(|s| &s.flow)
    }

    /// `speeds[t][k]` for a complete set.
    pub fn speeds_by_hour(&self) -> Result<Vec<Vec<f64>>> {
        self.complete_matrix(|s| &s.speed)
    }

    /// Keeps the listed node ids, in their current order.
    pub fn retain(&self, keep_ids: &[usize]) -> SeriesSet {
        SeriesSet {
            start: self.start,
            series: self
                .series
                .iter()
                .filter(|s| keep_ids.contains(&s.node_id))
                .cloned()
                .collect(),
        }
    }

    /// Renumbers node ids `1..` in order.
    pub fn renumbered(mut self) -> SeriesSet {
        for (k, s) in self.series.iter_mut().enumerate() {
            s.node_id = k + 1;
        }
        self
    }

    /// `self` followed by `next`, which must start where `self` ends and
    /// cover the same detectors.
    pub fn concat(&self, next: &SeriesSet) -> Result<SeriesSet> {
        if next.start != self.end() {
            return Err(Error::contract(format!(
                "series starting {} does not continue a series ending {}",
                next.start,
                self.end()
            )));
        }
        if self.nodes() != next.nodes() || self.series.iter().zip(&next.series).any(|(a, b)| a.node_id != b.node_id) {
            return Err(Error::contract("concatenated series cover different detectors"));
        }
        let series = self
            .series
            .iter()
            .zip(&next.series)
            .map(|(a, b)| DetectorSeries {
                node_id: a.node_id,
                lanes: a.lanes,
                flow: a.flow.iter().chain(&b.flow).copied().collect(),
                speed: a.speed.iter().chain(&b.speed).copied().collect(),
            })
            .collect();
        Ok(SeriesSet { start: self.start, series })
    }

    /// Rows `timestamp,node_id,flow,speed,missing_flag` ordered by hour then
    /// node; missing readings are empty fields.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let err = |e: csv::Error| Error::parse(path, e);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        for t in 0..self.hours() {
            let ts = self.timestamp(t).format(TIMESTAMP_FORMAT).to_string();
            for s in &self.series {
                let (flow, speed) = (s.flow[t], s.speed[t]);
                w.serialize(Row {
                    timestamp: ts.clone(),
                    node_id: s.node_id,
                    flow,
                    speed,
                    missing_flag: u8::from(flow.is_none() || speed.is_none()),
                })
                .map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a series file for the detectors of `network`. Every detector
    /// must appear at every hour.
    pub fn read_csv(path: impl AsRef<Path>, network: &DetectorNetwork) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
        let n = network.len();
        let mut start: Option<NaiveDateTime> = None;
        let mut flow: Vec<Vec<Option<f64>>> = vec![Vec::new(); n];
        let mut speed: Vec<Vec<Option<f64>>> = vec![Vec::new(); n];
        for (line, row) in reader.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::parse(path, e))?;
            let ts = NaiveDateTime::parse_from_str(&row.timestamp, TIMESTAMP_FORMAT)
                .map_err(|e| Error::parse(path, format!("row {}: timestamp {}: {e}", line + 2, row.timestamp)))?;
            let start = *start.get_or_insert(ts);
            let hours = ts.signed_duration_since(start);
            if hours.num_seconds() % 3600 != 0 || hours.num_seconds() < 0 {
                return Err(Error::parse(path, format!("row {}: timestamp {ts} is not on the hourly grid", line + 2)));
            }
            let t = hours.num_hours() as usize;
            if row.node_id == 0 || row.node_id > n {
                return Err(Error::parse(path, format!("row {}: unknown node {}", line + 2, row.node_id)));
            }
            let k = row.node_id - 1;
            if flow[k].len() != t {
                return Err(Error::parse(
                    path,
                    format!("row {}: node {} jumps to hour {t} after {} hours", line + 2, row.node_id, flow[k].len()),
                ));
            }
            flow[k].push(row.flow);
            speed[k].push(row.speed);
        }
        let start = start.ok_or_else(|| Error::parse(path, "no rows"))?;
        let series = network
            .nodes
            .iter()
            .zip(flow.into_iter().zip(speed))
            .map(|(d, (flow, speed))| DetectorSeries {
                node_id: d.id,
                lanes: d.lanes,
                flow,
                speed,
            })
            .collect();
        SeriesSet::new(start, series).map_err(|e| Error::parse(path, e))
    }
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT).map_err(|e| Error::config(format!("timestamp {s}: {e}")))
}
