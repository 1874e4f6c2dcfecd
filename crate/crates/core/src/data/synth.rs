//! Seeded synthetic detector scenarios: a corridor network, a regular
//! period driven by diurnal demand with congestion-dependent speeds and
//! incidents, and an evacuation period with order-driven surge demand.

use chrono::{Datelike, Duration, NaiveDateTime, Timelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::features::{haversine_miles, Zone, DEMAND_LAG_HOURS};
use super::series::{parse_timestamp, DetectorSeries, SeriesSet};
use crate::error::{Error, Result};
use crate::graph::{Detector, DetectorNetwork, Link};

const MILES_PER_DEGREE_LAT: f64 = 69.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub nodes: usize,
    pub corridors: usize,
    /// Detector spacing along a corridor is log-uniform in this range.
    pub min_spacing_miles: f64,
    pub max_spacing_miles: f64,
    /// Longitude offset between neighbouring corridors.
    pub corridor_gap_deg: f64,
    /// Neighbouring corridors are linked at every this-many-th detector.
    pub interchange_every: usize,
    pub interchange_miles: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub min_lanes: u32,
    pub max_lanes: u32,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            nodes: 40,
            corridors: 4,
            min_spacing_miles: 0.25,
            max_spacing_miles: 4.0,
            corridor_gap_deg: 0.15,
            interchange_every: 5,
            interchange_miles: 1.0,
            origin_lat: 27.0,
            origin_lon: -82.0,
            min_lanes: 2,
            max_lanes: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandConfig {
    /// Peak-hour flow per lane is uniform in this range (veh/h/lane).
    pub min_peak_per_lane: f64,
    pub max_peak_per_lane: f64,
    /// Overnight flow as a fraction of peak.
    pub night_level: f64,
    pub am_peak_hour: f64,
    pub pm_peak_hour: f64,
    /// Weekend daytime level as a fraction of weekday peak.
    pub weekend_level: f64,
    /// Speed-flow curve capacity (veh/h/lane).
    pub capacity_per_lane: f64,
    pub min_free_flow_mph: f64,
    pub max_free_flow_mph: f64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        DemandConfig {
            min_peak_per_lane: 1300.0,
            max_peak_per_lane: 1700.0,
            night_level: 0.12,
            am_peak_hour: 8.0,
            pm_peak_hour: 17.0,
            weekend_level: 0.7,
            capacity_per_lane: 2000.0,
            min_free_flow_mph: 60.0,
            max_free_flow_mph: 70.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Relative Gaussian measurement noise on flow.
    pub flow: f64,
    /// Standard deviation of speed noise (mph).
    pub speed: f64,
    /// Hourly AR(1) demand disturbance: coefficient and innovation std.
    pub hourly_ar: f64,
    pub hourly_sigma: f64,
    /// Day-to-day demand level std, shared across nodes.
    pub daily_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            flow: 0.03,
            speed: 1.0,
            hourly_ar: 0.7,
            hourly_sigma: 0.03,
            daily_sigma: 0.06,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig {
            flow: 0.0,
            speed: 0.0,
            hourly_ar: 0.0,
            hourly_sigma: 0.0,
            daily_sigma: 0.0,
        }
    }
}

/// Regular-period incidents: speeds collapse at the incident detector and
/// its linked neighbours at once, while their flows drop `flow_delay` hours
/// later and recover `flow_delay` hours after speeds do.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncidentConfig {
    /// Probability per detector-hour.
    pub rate: f64,
    pub min_hours: usize,
    pub max_hours: usize,
    pub speed_factor: f64,
    pub flow_factor: f64,
    pub flow_delay: usize,
}

impl Default for IncidentConfig {
    fn default() -> Self {
        IncidentConfig {
            rate: 0.004,
            min_hours: 2,
            max_hours: 6,
            speed_factor: 0.35,
            flow_factor: 0.55,
            flow_delay: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneConfig {
    pub population: f64,
    /// Hours after the start of the evacuation window; may be negative.
    pub order_issue_hour: i64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvacuationConfig {
    pub zones: Vec<ZoneConfig>,
    /// Hours after the start of the evacuation window.
    pub landfall_hour: i64,
    /// Detector passes generated per ordered resident.
    pub trip_factor: f64,
    /// Flat background flow as a fraction of each detector's peak.
    pub baseline_level: f64,
    /// Surge share of a detector decays as `exp(-distance / this)`.
    pub spatial_decay_miles: f64,
    /// A zone's departures decay as `exp(-hours since effect / this)`.
    pub decay_hours: f64,
    /// Relative extra departures during 08:00–20:00.
    pub daytime_boost: f64,
    /// Relative extra departures as landfall nears.
    pub urgency: f64,
    /// Hours to landfall beyond which urgency has no effect.
    pub urgency_horizon: f64,
}

impl Default for EvacuationConfig {
    fn default() -> Self {
        EvacuationConfig {
            zones: vec![
                ZoneConfig {
                    population: 80_000.0,
                    order_issue_hour: 6,
                    lat: 26.95,
                    lon: -82.05,
                },
                ZoneConfig {
                    population: 600_000.0,
                    order_issue_hour: 30,
                    lat: 27.05,
                    lon: -81.50,
                },
                ZoneConfig {
                    population: 400_000.0,
                    order_issue_hour: 54,
                    lat: 27.25,
                    lon: -81.75,
                },
            ],
            landfall_hour: 108,
            trip_factor: 1.2,
            baseline_level: 0.45,
            spatial_decay_miles: 12.0,
            decay_hours: 30.0,
            daytime_boost: 1.0,
            urgency: 1.5,
            urgency_horizon: 72.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    /// Probability that a detector-hour reading is lost.
    pub missing_rate: f64,
    /// Probability that a flow reading exceeds the outlier rule.
    pub outlier_rate: f64,
    /// Detectors with heavy outages.
    pub sparse_detectors: usize,
    pub sparse_missing_rate: f64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            missing_rate: 0.01,
            outlier_rate: 0.002,
            sparse_detectors: 0,
            sparse_missing_rate: 0.3,
        }
    }
}

impl CorruptionConfig {
    pub fn none() -> Self {
        CorruptionConfig {
            missing_rate: 0.0,
            outlier_rate: 0.0,
            sparse_detectors: 0,
            sparse_missing_rate: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub start: String,
    pub regular_hours: usize,
    pub evacuation_hours: usize,
    pub topology: TopologyConfig,
    pub demand: DemandConfig,
    pub noise: NoiseConfig,
    pub incidents: IncidentConfig,
    pub evacuation: EvacuationConfig,
    pub corruption: CorruptionConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 7,
            start: "2017-05-01T00:00:00".into(),
            regular_hours: 2148,
            evacuation_hours: 120,
            topology: TopologyConfig::default(),
            demand: DemandConfig::default(),
            noise: NoiseConfig::default(),
            incidents: IncidentConfig::default(),
            evacuation: EvacuationConfig::default(),
            corruption: CorruptionConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        let fail = |m: String| Err(Error::config(m));
        if t.nodes == 0 || t.corridors == 0 || t.corridors > t.nodes {
            return fail(format!("need 1 <= corridors <= nodes, got {} and {}", t.corridors, t.nodes));
        }
        if !(t.min_spacing_miles > 0.0 && t.max_spacing_miles >= t.min_spacing_miles) {
            return fail("spacing range must be positive and ordered".into());
        }
        if t.min_lanes == 0 || t.max_lanes < t.min_lanes {
            return fail("lane range must be positive and ordered".into());
        }
        if !(t.interchange_miles > 0.0) {
            return fail("interchange_miles must be positive".into());
        }
        parse_timestamp(&self.start)?;
        if self.regular_hours == 0 {
            return fail("regular_hours must be positive".into());
        }
        let d = &self.demand;
        if !(d.min_peak_per_lane > 0.0 && d.max_peak_per_lane >= d.min_peak_per_lane && d.capacity_per_lane > 0.0) {
            return fail("demand levels and capacity must be positive and ordered".into());
        }
        if !(d.min_free_flow_mph > 0.0 && d.max_free_flow_mph >= d.min_free_flow_mph) {
            return fail("free-flow speed range must be positive and ordered".into());
        }
        let i = &self.incidents;
        if !(0.0..=1.0).contains(&i.rate) || i.min_hours == 0 || i.max_hours < i.min_hours {
            return fail("incident rate must lie in [0, 1] with 1 <= min_hours <= max_hours".into());
        }
        let e = &self.evacuation;
        if self.evacuation_hours > 0 {
            if e.landfall_hour < 0 || e.landfall_hour > self.evacuation_hours as i64 {
                return fail(format!(
                    "landfall hour {} lies outside the {}-hour evacuation window",
                    e.landfall_hour, self.evacuation_hours
                ));
            }
            if let Some(z) = e.zones.iter().find(|z| !(z.population > 0.0)) {
                return fail(format!("zone population must be positive, got {}", z.population));
            }
            if !(e.spatial_decay_miles > 0.0 && e.decay_hours > 0.0 && e.trip_factor >= 0.0) {
                return fail("evacuation decays must be positive and trip_factor non-negative".into());
            }
        }
        let c = &self.corruption;
        for r in [c.missing_rate, c.outlier_rate, c.sparse_missing_rate] {
            if !(0.0..=1.0).contains(&r) {
                return fail(format!("corruption rates must lie in [0, 1], got {r}"));
            }
        }
        if c.sparse_detectors > t.nodes {
            return fail("more sparse detectors than detectors".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub node: usize,
    pub start: usize,
    pub hours: usize,
}

/// Uncorrupted quantities behind the observed series. Matrices are indexed
/// `[hour][node]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub regular_flow: Vec<Vec<f64>>,
    pub evacuation_flow: Vec<Vec<f64>>,
    /// Flat background flow per node during the evacuation window.
    pub evacuation_baseline: Vec<f64>,
    pub surge: Vec<Vec<f64>>,
    pub incidents: Vec<Incident>,
    /// Zones whose departures fall inside the evacuation window before
    /// landfall, i.e. those that contribute surge.
    pub surging_zones: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub network: DetectorNetwork,
    pub regular: SeriesSet,
    pub evacuation: SeriesSet,
    pub zones: Vec<Zone>,
    pub landfall_hour: i64,
    pub truth: GroundTruth,
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn build_network(cfg: &TopologyConfig, rng: &mut ChaCha8Rng) -> Result<DetectorNetwork> {
    let mut nodes = Vec::with_capacity(cfg.nodes);
    let mut edges = Vec::new();
    let mut corridor_ids: Vec<Vec<usize>> = Vec::new();
    let (ln_lo, ln_hi) = (cfg.min_spacing_miles.ln(), cfg.max_spacing_miles.ln());
    for k in 0..cfg.corridors {
        let count = cfg.nodes / cfg.corridors + usize::from(k < cfg.nodes % cfg.corridors);
        let lon = cfg.origin_lon + k as f64 * cfg.corridor_gap_deg;
        let mut milepost = 0.0;
        let mut ids = Vec::with_capacity(count);
        for m in 0..count {
            if m > 0 {
                let gap = if ln_hi > ln_lo { rng.random_range(ln_lo..=ln_hi).exp() } else { cfg.min_spacing_miles };
                milepost += gap;
                edges.push(Link {
                    i: nodes.len(),
                    j: nodes.len() + 1,
                    distance_miles: gap,
                });
            }
            let id = nodes.len() + 1;
            nodes.push(Detector {
                id,
                corridor: format!("C{}", k + 1),
                milepost,
                lanes: rng.random_range(cfg.min_lanes..=cfg.max_lanes),
                lat: cfg.origin_lat + milepost / MILES_PER_DEGREE_LAT,
                lon,
                source_id: None,
            });
            ids.push(id);
        }
        corridor_ids.push(ids);
    }
    if cfg.interchange_every > 0 {
        for pair in corridor_ids.windows(2) {
            for m in (0..pair[0].len().min(pair[1].len())).step_by(cfg.interchange_every) {
                edges.push(Link {
                    i: pair[0][m],
                    j: pair[1][m],
                    distance_miles: cfg.interchange_miles,
                });
            }
        }
    }
    DetectorNetwork::new(nodes, edges)
}

/// Weekday and weekend demand profiles as a fraction of peak flow.
fn profile(cfg: &DemandConfig, hour: f64, weekend: bool) -> f64 {
    let bump = |centre: f64, width: f64| (-0.5 * ((hour - centre) / width).powi(2)).exp();
    let night = cfg.night_level;
    let shape = if weekend {
        cfg.weekend_level * bump(13.5, 3.5)
    } else {
        let day = bump(13.0, 4.5) * 0.55;
        (day + 0.45 * bump(cfg.am_peak_hour, 1.4) + 0.5 * bump(cfg.pm_peak_hour, 1.8)).min(1.0)
    };
    night + (1.0 - night) * shape
}

fn speed_from_flow(free_flow: f64, flow: f64, capacity: f64) -> f64 {
    free_flow * (1.0 - 0.6 * (flow / capacity).powi(2)).max(0.3)
}

struct NodeParams {
    peak: f64,
    capacity: f64,
    free_flow: f64,
}

/// Hourly demand disturbance `(1 + daily) * (1 + hourly AR)` per node.
fn disturbance(noise: &NoiseConfig, start: NaiveDateTime, hours: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut ar = vec![0.0; n];
    let mut daily = 0.0;
    let mut out = Vec::with_capacity(hours);
    for t in 0..hours {
        if (start + Duration::hours(t as i64)).hour() == 0 || t == 0 {
            daily = noise.daily_sigma * normal(rng);
        }
        let row = (0..n)
            .map(|k| {
                ar[k] = noise.hourly_ar * ar[k] + noise.hourly_sigma * normal(rng);
                ((1.0 + daily) * (1.0 + ar[k])).max(0.0)
            })
            .collect();
        out.push(row);
    }
    out
}

/// Temporal surge weights of one zone over the window, normalized to sum
/// to 1, or `None` when no hour before landfall follows its lagged order.
fn zone_schedule(e: &EvacuationConfig, zone: &ZoneConfig, start: NaiveDateTime, hours: usize) -> Option<Vec<f64>> {
    let effect = zone.order_issue_hour + DEMAND_LAG_HOURS;
    let end = (e.landfall_hour.min(hours as i64)).max(0);
    let mut w = vec![0.0; hours];
    for t in effect.max(0)..end {
        let clock = (start + Duration::hours(t)).hour();
        let day = if (8..20).contains(&clock) { 1.0 + e.daytime_boost } else { 1.0 };
        let to_landfall = (e.landfall_hour - t).max(0) as f64;
        let urgency = 1.0 + e.urgency * (1.0 - (to_landfall / e.urgency_horizon).min(1.0));
        w[t as usize] = day * urgency * (-((t - effect) as f64) / e.decay_hours).exp();
    }
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|v| *v /= total);
        Some(w)
    } else {
        None
    }
}

/// Generates a full scenario. Deterministic in the config, seed included;
/// topology, regular, evacuation and corruption draws use separate streams.
pub fn generate_synthetic(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let start = parse_timestamp(&config.start)?;
    let network = build_network(&config.topology, &mut rng_stream(config.seed, 1))?;
    let n = network.len();
    let d = &config.demand;

    let mut rng = rng_stream(config.seed, 2);
    let params: Vec<NodeParams> = network
        .nodes
        .iter()
        .map(|det| NodeParams {
            peak: det.lanes as f64 * rng.random_range(d.min_peak_per_lane..=d.max_peak_per_lane),
            capacity: det.lanes as f64 * d.capacity_per_lane,
            free_flow: rng.random_range(d.min_free_flow_mph..=d.max_free_flow_mph),
        })
        .collect();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|k| {
            network
                .index_edges()
                .iter()
                .filter_map(|&(i, j, _)| match (i == k, j == k) {
                    (true, _) => Some(j),
                    (_, true) => Some(i),
                    _ => None,
                })
                .collect()
        })
        .collect();

    // Regular period.
    let hours = config.regular_hours;
    let dist = disturbance(&config.noise, start, hours, n, &mut rng);
    let inc = &config.incidents;
    let mut speed_factor = vec![vec![1.0; n]; hours];
    let mut flow_factor = vec![vec![1.0; n]; hours];
    let mut incidents = Vec::new();
    for t in 0..hours {
        for k in 0..n {
            if rng.random_bool(inc.rate) {
                let len = rng.random_range(inc.min_hours..=inc.max_hours);
                incidents.push(Incident {
                    node: k,
                    start: t,
                    hours: len,
                });
                for &m in std::iter::once(&k).chain(&neighbours[k]) {
                    for h in t..(t + len).min(hours) {
                        speed_factor[h][m] = f64::min(speed_factor[h][m], inc.speed_factor);
                    }
                    for h in (t + inc.flow_delay)..(t + len + inc.flow_delay).min(hours) {
                        flow_factor[h][m] = f64::min(flow_factor[h][m], inc.flow_factor);
                    }
                }
            }
        }
    }
    let mut regular_flow = Vec::with_capacity(hours);
    let mut regular_speed = Vec::with_capacity(hours);
    for t in 0..hours {
        let ts = start + Duration::hours(t as i64);
        let weekend = matches!(ts.weekday(), Weekday::Sat | Weekday::Sun);
        let level = profile(d, ts.hour() as f64, weekend);
        let mut flows = Vec::with_capacity(n);
        let mut speeds = Vec::with_capacity(n);
        for (k, p) in params.iter().enumerate() {
            let clean = p.peak * level * dist[t][k] * flow_factor[t][k];
            let observed = (clean * (1.0 + config.noise.flow * normal(&mut rng))).clamp(0.0, 1.05 * p.capacity);
            let s = speed_from_flow(p.free_flow, observed, p.capacity) * speed_factor[t][k]
                + config.noise.speed * normal(&mut rng);
            flows.push(observed);
            speeds.push(s.max(2.0));
        }
        regular_flow.push(flows);
        regular_speed.push(speeds);
    }

    // Evacuation period.
    let e = &config.evacuation;
    let ev_hours = config.evacuation_hours;
    let ev_start = start + Duration::hours(hours as i64);
    let mut rng = rng_stream(config.seed, 3);
    let dist = disturbance(&config.noise, ev_start, ev_hours, n, &mut rng);
    let baseline: Vec<f64> = params.iter().map(|p| p.peak * e.baseline_level).collect();
    let mut surge = vec![vec![0.0; n]; ev_hours];
    let mut surging_zones = Vec::new();
    for (zi, zone) in e.zones.iter().enumerate() {
        let Some(schedule) = zone_schedule(e, zone, ev_start, ev_hours) else {
            continue;
        };
        surging_zones.push(zi);
        let reach: Vec<f64> = network
            .nodes
            .iter()
            .map(|det| (-haversine_miles((det.lat, det.lon), (zone.lat, zone.lon)) / e.spatial_decay_miles).exp())
            .collect();
        let reach_total: f64 = reach.iter().sum();
        let total = e.trip_factor * zone.population;
        for (t, w) in schedule.iter().enumerate() {
            for k in 0..n {
                surge[t][k] += total * w * reach[k] / reach_total;
            }
        }
    }
    let mut evacuation_flow = Vec::with_capacity(ev_hours);
    let mut evacuation_speed = Vec::with_capacity(ev_hours);
    for t in 0..ev_hours {
        let mut flows = Vec::with_capacity(n);
        let mut speeds = Vec::with_capacity(n);
        for (k, p) in params.iter().enumerate() {
            let clean = baseline[k] * dist[t][k] + surge[t][k];
            let observed = (clean * (1.0 + config.noise.flow * normal(&mut rng))).clamp(0.0, 1.05 * p.capacity);
            let s = speed_from_flow(p.free_flow, observed, p.capacity) + config.noise.speed * normal(&mut rng);
            flows.push(observed);
            speeds.push(s.max(2.0));
        }
        evacuation_flow.push(flows);
        evacuation_speed.push(speeds);
    }

    // Observation corruption.
    let mut rng = rng_stream(config.seed, 4);
    let c = &config.corruption;
    let mut sparse = vec![false; n];
    let mut picked = 0;
    while picked < c.sparse_detectors {
        let k = rng.random_range(0..n);
        if !sparse[k] {
            sparse[k] = true;
            picked += 1;
        }
    }
    let mut observe = |flows: &[Vec<f64>], speeds: &[Vec<f64>], from: NaiveDateTime| -> Result<SeriesSet> {
        let series = network
            .nodes
            .iter()
            .enumerate()
            .map(|(k, det)| {
                let miss_rate = if sparse[k] { c.sparse_missing_rate } else { c.missing_rate };
                let mut flow = Vec::with_capacity(flows.len());
                let mut speed = Vec::with_capacity(flows.len());
                for t in 0..flows.len() {
                    if rng.random_bool(miss_rate) {
                        flow.push(None);
                        speed.push(None);
                        continue;
                    }
                    let f = if rng.random_bool(c.outlier_rate) {
                        det.lanes as f64 * super::clean::CAPACITY_PER_LANE * rng.random_range(1.05..1.5)
                    } else {
                        flows[t][k]
                    };
                    flow.push(Some(f));
                    speed.push(Some(speeds[t][k]));
                }
                DetectorSeries {
                    node_id: det.id,
                    lanes: det.lanes,
                    flow,
                    speed,
                }
            })
            .collect();
        SeriesSet::new(from, series)
    };
    let regular = observe(&regular_flow, &regular_speed, start)?;
    let evacuation = observe(&evacuation_flow, &evacuation_speed, ev_start)?;

    let zones = e
        .zones
        .iter()
        .enumerate()
        .map(|(i, z)| Zone {
            id: i + 1,
            population: z.population,
            order_issue_hour: z.order_issue_hour,
            lat: Some(z.lat),
            lon: Some(z.lon),
        })
        .collect();
    Ok(Scenario {
        config: config.clone(),
        network,
        regular,
        evacuation,
        zones,
        landfall_hour: e.landfall_hour,
        truth: GroundTruth {
            regular_flow,
            evacuation_flow,
            evacuation_baseline: baseline,
            surge,
            incidents,
            surging_zones,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_peak_in_rush_hours() {
        let d = DemandConfig::default();
        let at = |h: f64| profile(&d, h, false);
        assert!(at(8.0) > at(3.0) && at(17.0) > at(12.0) && at(17.0) > at(22.0));
        assert!(at(17.0) <= 1.0 && at(3.0) >= d.night_level);
    }

    #[test]
    fn default_topology_has_forty_connected_detectors() {
        let net = build_network(&TopologyConfig::default(), &mut rng_stream(1, 1)).unwrap();
        assert_eq!(net.len(), 40);
        assert_eq!(net.corridor_order().len(), 4);
        // 4 corridors of 10 give 36 corridor links plus 3 × 2 interchanges.
        assert_eq!(net.edges.len(), 42);
    }

    #[test]
    fn invalid_landfall_is_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.evacuation.landfall_hour = 500;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
