use chrono::{Duration, NaiveDateTime, Timelike};
use numcore::Tensor;
use serde::{Deserialize, Serialize};

use super::series::SeriesSet;
use crate::error::{Error, Result};
use crate::graph::DetectorNetwork;

pub const REGULAR_FEATURES: usize = 12;
pub const DEMAND_FEATURES: usize = 9;
/// Delay between an evacuation order and its effect on traffic.
pub const DEMAND_LAG_HOURS: i64 = 18;

pub const PERIODS: [&str; 6] = ["late_night", "early_morning", "morning", "mid_day", "evening", "night"];

/// Four-hour clock period: 0 = 00–04, 1 = 04–08, …, 5 = 20–24.
pub fn period_of_hour(hour: u32) -> usize {
    (hour / 4) as usize
}

/// Channel layout of the regular feature frame.
pub mod regular {
    pub const ZONE_ID: usize = 0;
    /// First of six period indicators.
    pub const PERIOD: usize = 1;
    pub const FLOW: usize = 7;
    pub const PREV_DAY_MEAN: usize = 8;
    pub const PREV_DAY_STD: usize = 9;
    pub const PREV_PERIOD_MEAN: usize = 10;
    pub const PREV_PERIOD_STD: usize = 11;
}

/// Channel layout of the demand feature frame.
pub mod demand {
    /// First of six period indicators.
    pub const PERIOD: usize = 0;
    pub const ORDERED_POPULATION: usize = 6;
    pub const ZONE_DISTANCE: usize = 7;
    pub const HOURS_TO_LANDFALL: usize = 8;
}

/// Hourly per-node features `[hours, N, channels]` starting at row
/// `first_hour` of the series they were computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFrame {
    pub first_hour: usize,
    pub data: Tensor,
}

impl FeatureFrame {
    pub fn hours(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn nodes(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn get(&self, t: usize, node: usize, channel: usize) -> f64 {
        let (n, c) = (self.nodes(), self.channels());
        self.data.data()[(t * n + node) * c + channel]
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / xs.len() as f64;
    (m, var.sqrt())
}

/// Start rows of the previous-day and previous-period blocks for hour `t`,
/// or `None` when either reaches before the series.
fn history_blocks(set: &SeriesSet, t: usize) -> Option<(usize, usize)> {
    let day = t.checked_sub(24)?;
    let day_start = day.checked_sub(set.clock_hour(day) as usize % 4)?;
    let block = t - set.clock_hour(t) as usize % 4;
    let prev_start = block.checked_sub(4)?;
    Some((day_start, prev_start))
}

/// Regular features for hours `from_hour..` of a complete series:
/// zone id `id/N`, six period indicators, the current flow, and mean and
/// population std of flow over the same clock period one day earlier and
/// over the preceding four-hour period.
pub fn extract_regular_features(set: &SeriesSet, from_hour: usize) -> Result<FeatureFrame> {
    let hours = set.hours();
    let first_valid = (0..hours)
        .find(|&t| history_blocks(set, t).is_some())
        .unwrap_or(hours);
    if from_hour < first_valid || from_hour >= hours {
        return Err(Error::InsufficientHistory {
            first_valid_hour: first_valid,
        });
    }
    let flows = set.flows_by_hour()?;
    let n = set.nodes();
    let c = REGULAR_FEATURES;
    let out_hours = hours - from_hour;
    let mut data = vec![0.0; out_hours * n * c];
    let mut block = [0.0; 4];
    for (row, t) in (from_hour..hours).enumerate() {
        let (day_start, prev_start) = history_blocks(set, t).expect("t >= first valid hour");
        let period = period_of_hour(set.clock_hour(t));
        for k in 0..n {
            let f = &mut data[(row * n + k) * c..(row * n + k + 1) * c];
            f[regular::ZONE_ID] = (k + 1) as f64 / n as f64;
            f[regular::PERIOD + period] = 1.0;
            f[regular::FLOW] = flows[t][k];
            for (slot, start) in [(regular::PREV_DAY_MEAN, day_start), (regular::PREV_PERIOD_MEAN, prev_start)] {
                for (i, b) in block.iter_mut().enumerate() {
                    *b = flows[start + i][k];
                }
                let (m, s) = mean_std(&block);
                f[slot] = m;
                f[slot + 1] = s;
            }
        }
    }
    Ok(FeatureFrame {
        first_hour: from_hour,
        data: Tensor::new(vec![out_hours, n, c], data)?,
    })
}

/// An evacuation zone. `order_issue_hour` counts from the start of the
/// evacuation window and may be negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: usize,
    pub population: f64,
    pub order_issue_hour: i64,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

impl Zone {
    pub fn location(&self) -> Result<(f64, f64)> {
        match (self.lat, self.lon) {
            (Some(lat), Some(lon)) if lat.is_finite() && lon.is_finite() => Ok((lat, lon)),
            _ => Err(Error::config(format!("zone {} has no location", self.id))),
        }
    }
}

const EARTH_RADIUS_MILES: f64 = 3958.8;

/// Great-circle distance in miles.
pub fn haversine_miles(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la1, lo1) = (a.0.to_radians(), a.1.to_radians());
    let (la2, lo2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2) + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MILES * h.sqrt().min(1.0).asin()
}

/// Cumulative population of zones whose order is at least `lag` hours old
/// at hour `t`.
pub fn ordered_population(zones: &[Zone], t: i64, lag: i64) -> f64 {
    zones
        .iter()
        .filter(|z| z.order_issue_hour + lag <= t)
        .map(|z| z.population)
        .sum()
}

/// Demand features for `hours` hours starting at `start`: six period
/// indicators, lagged ordered population, distance to the nearest zone and
/// hours remaining to landfall (clamped at 0).
pub fn extract_demand_features(
    zones: &[Zone],
    landfall_hour: i64,
    network: &DetectorNetwork,
    start: NaiveDateTime,
    hours: usize,
    lag: i64,
) -> Result<FeatureFrame> {
    if zones.is_empty() {
        return Err(Error::config("no evacuation zones"));
    }
    if let Some(z) = zones.iter().find(|z| !(z.population > 0.0)) {
        return Err(Error::config(format!("zone {} has non-positive population", z.id)));
    }
    let locations = zones.iter().map(Zone::location).collect::<Result<Vec<_>>>()?;
    let distance: Vec<f64> = network
        .nodes
        .iter()
        .map(|d| {
            locations
                .iter()
                .map(|&z| haversine_miles((d.lat, d.lon), z))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let n = network.len();
    let c = DEMAND_FEATURES;
    let mut data = vec![0.0; hours * n * c];
    for t in 0..hours {
        let period = period_of_hour((start + Duration::hours(t as i64)).hour());
        let pop = ordered_population(zones, t as i64, lag);
        let to_landfall = (landfall_hour - t as i64).max(0) as f64;
        for (k, d) in distance.iter().enumerate() {
            let f = &mut data[(t * n + k) * c..(t * n + k + 1) * c];
            f[demand::PERIOD + period] = 1.0;
            f[demand::ORDERED_POPULATION] = pop;
            f[demand::ZONE_DISTANCE] = *d;
            f[demand::HOURS_TO_LANDFALL] = to_landfall;
        }
    }
    Ok(FeatureFrame {
        first_hour: 0,
        data: Tensor::new(vec![hours, n, c], data)?,
    })
}
