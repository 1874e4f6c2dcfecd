//! Detector topology and per-hour travel-time adjacency.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use numcore::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speeds below this are treated as this when forming travel times (mph).
pub const SPEED_FLOOR_MPH: f64 = 5.0;

/// Default sparsity threshold on kernel weights.
pub const DEFAULT_THRESHOLD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub id: usize,
    pub corridor: String,
    pub milepost: f64,
    pub lanes: u32,
    pub lat: f64,
    pub lon: f64,
    /// Identifier in the original dataset; differs from `id` once detectors
    /// have been dropped and the rest renumbered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<usize>,
}

impl Detector {
    pub fn source_id(&self) -> usize {
        self.source_id.unwrap_or(self.id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub i: usize,
    pub j: usize,
    pub distance_miles: f64,
}

/// Detectors ordered by id (`nodes[k].id == k + 1`) and undirected links
/// between them, each pair stored once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorNetwork {
    pub nodes: Vec<Detector>,
    pub edges: Vec<Link>,
}

impl DetectorNetwork {
    /// Sorts nodes by id, merges links listed in both directions and checks
    /// every structural invariant.
    pub fn new(mut nodes: Vec<Detector>, edges: Vec<Link>) -> Result<Self> {
        nodes.sort_by_key(|d| d.id);
        for (k, d) in nodes.iter().enumerate() {
            if d.id != k + 1 {
                return Err(Error::config(format!(
                    "detector ids must be a permutation of 1..{}, found {} at position {}",
                    nodes.len(),
                    d.id,
                    k + 1
                )));
            }
            if d.lanes == 0 {
                return Err(Error::config(format!("detector {} has zero lanes", d.id)));
            }
            if !(d.lat.is_finite() && d.lon.is_finite() && d.milepost.is_finite()) {
                return Err(Error::config(format!("detector {} has non-finite coordinates", d.id)));
            }
        }
        let n = nodes.len();
        let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for e in &edges {
            if e.i == e.j || e.i == 0 || e.j == 0 || e.i > n || e.j > n {
                return Err(Error::config(format!("invalid link ({}, {})", e.i, e.j)));
            }
            if !(e.distance_miles > 0.0 && e.distance_miles.is_finite()) {
                return Err(Error::config(format!(
                    "link ({}, {}) has non-positive distance {}",
                    e.i, e.j, e.distance_miles
                )));
            }
            let key = (e.i.min(e.j), e.i.max(e.j));
            match pairs.get(&key) {
                Some(&d) if d != e.distance_miles => {
                    return Err(Error::config(format!(
                        "link ({}, {}) listed with distances {} and {}",
                        key.0, key.1, d, e.distance_miles
                    )))
                }
                _ => {
                    pairs.insert(key, e.distance_miles);
                }
            }
        }
        let edges = pairs
            .into_iter()
            .map(|((i, j), distance_miles)| Link {
                i,
                j,
                distance_miles,
            })
            .collect();
        Ok(DetectorNetwork { nodes, edges })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: DetectorNetwork =
            serde_json::from_str(text).map_err(|e| Error::config(format!("topology: {e}")))?;
        DetectorNetwork::new(raw.nodes, raw.edges)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DetectorNetwork::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Keeps the detectors whose ids are listed, renumbering them `1..` in
    /// their current order. Links touching a removed detector disappear.
    pub fn retain(&self, keep_ids: &[usize]) -> Result<Self> {
        let mut map = vec![None; self.len() + 1];
        let mut nodes = Vec::with_capacity(keep_ids.len());
        for d in &self.nodes {
            if keep_ids.contains(&d.id) {
                let new_id = nodes.len() + 1;
                map[d.id] = Some(new_id);
                nodes.push(Detector {
                    id: new_id,
                    source_id: Some(d.source_id()),
                    ..d.clone()
                });
            }
        }
        if nodes.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        let edges = self
            .edges
            .iter()
            .filter_map(|e| {
                Some(Link {
                    i: map[e.i]?,
                    j: map[e.j]?,
                    distance_miles: e.distance_miles,
                })
            })
            .collect();
        DetectorNetwork::new(nodes, edges)
    }

    /// Node indices grouped by corridor (first-appearance order) and sorted
    /// by milepost within each corridor.
    pub fn corridor_order(&self) -> Vec<Vec<usize>> {
        let mut names: Vec<&str> = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (k, d) in self.nodes.iter().enumerate() {
            match names.iter().position(|c| *c == d.corridor) {
                Some(g) => groups[g].push(k),
                None => {
                    names.push(&d.corridor);
                    groups.push(vec![k]);
                }
            }
        }
        for g in &mut groups {
            g.sort_by(|&a, &b| {
                self.nodes[a]
                    .milepost
                    .total_cmp(&self.nodes[b].milepost)
                    .then(a.cmp(&b))
            });
        }
        groups
    }

    /// Link endpoints as zero-based node indices with their distances.
    pub fn index_edges(&self) -> Vec<(usize, usize, f64)> {
        self.edges
            .iter()
            .map(|e| (e.i - 1, e.j - 1, e.distance_miles))
            .collect()
    }
}

/// `2d / (S_i + S_j)` in hours, each speed floored at [`SPEED_FLOOR_MPH`].
pub fn travel_time(distance_miles: f64, speed_i: f64, speed_j: f64) -> Result<f64> {
    if !(distance_miles > 0.0) {
        return Err(Error::contract(format!(
            "travel time needs a positive distance, got {distance_miles}"
        )));
    }
    let s = speed_i.max(SPEED_FLOOR_MPH) + speed_j.max(SPEED_FLOOR_MPH);
    Ok(2.0 * distance_miles / s)
}

/// Gaussian kernel `exp(-tt²/std²)`, zeroed below `threshold`.
pub fn kernelize(tt: f64, tt_std: f64, threshold: f64) -> Result<f64> {
    if !(tt_std > 0.0 && tt_std.is_finite()) {
        return Err(Error::DegenerateSpread(tt_std));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::config(format!("threshold must lie in [0, 1), got {threshold}")));
    }
    let w = (-(tt * tt) / (tt_std * tt_std)).exp();
    Ok(if w >= threshold { w } else { 0.0 })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeMode {
    /// Row sums of the self-looped weight matrix.
    #[default]
    Weighted,
    /// Number of nonzero entries per row, self-loop included.
    LinkCount,
}

/// `D^{-1/2} Ā D^{-1/2}` for a square nonnegative matrix with a positive
/// diagonal.
pub fn normalize(a_bar: &Tensor, mode: DegreeMode) -> Result<Tensor> {
    let n = match a_bar.shape() {
        [r, c] if r == c => *r,
        s => return Err(Error::shape("normalize input", "square matrix", format!("{s:?}"))),
    };
    let a = a_bar.data();
    if let Some(v) = a.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::contract(format!("adjacency entries must be finite and >= 0, found {v}")));
    }
    if let Some(i) = (0..n).find(|&i| !(a[i * n + i] > 0.0)) {
        return Err(Error::contract(format!("adjacency diagonal entry {i} is not positive")));
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let row = &a[i * n..(i + 1) * n];
            let deg = match mode {
                DegreeMode::Weighted => row.iter().sum::<f64>(),
                DegreeMode::LinkCount => row.iter().filter(|v| **v != 0.0).count() as f64,
            };
            1.0 / deg.sqrt()
        })
        .collect();
    Ok(Tensor::from_fn(vec![n, n], |k| {
        let (i, j) = (k / n, k % n);
        a[k] * inv_sqrt[i] * inv_sqrt[j]
    }))
}

/// Adds the identity to a square matrix.
pub fn add_self_loops(a: &Tensor) -> Tensor {
    let n = a.shape()[0];
    let mut out = a.clone();
    for i in 0..n {
        out.data_mut()[i * n + i] += 1.0;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub threshold: f64,
    pub degree: DegreeMode,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            threshold: DEFAULT_THRESHOLD,
            degree: DegreeMode::Weighted,
        }
    }
}

/// Population standard deviation of every link travel time over every
/// listed hour. `speeds[t][k]` is node `k`'s speed at hour `t`.
pub fn fit_tt_std(network: &DetectorNetwork, speeds: &[Vec<f64>]) -> Result<f64> {
    let edges = network.index_edges();
    let mut values = Vec::with_capacity(edges.len() * speeds.len());
    for row in speeds {
        check_row(network, row)?;
        for &(i, j, d) in &edges {
            values.push(travel_time(d, row[i], row[j])?);
        }
    }
    if values.is_empty() {
        return Err(Error::DegenerateSpread(0.0));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Err(Error::DegenerateSpread(std));
    }
    Ok(std)
}

fn check_row(network: &DetectorNetwork, row: &[f64]) -> Result<()> {
    if row.len() != network.len() {
        return Err(Error::shape("speed row", network.len(), row.len()));
    }
    if let Some(s) = row.iter().find(|s| !s.is_finite()) {
        return Err(Error::contract(format!("speed series contains {s}")));
    }
    Ok(())
}

/// Per-hour kernel weights on network links and their normalized,
/// self-looped adjacency matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    /// `weights[t][e]` is the kernel weight of link `e` at hour `t`.
    weights: Vec<Vec<f64>>,
    normalized: Vec<Tensor>,
    pub tt_std: f64,
    pub config: GraphConfig,
}

impl DynamicGraph {
    pub fn build(
        network: &DetectorNetwork,
        speeds: &[Vec<f64>],
        tt_std: f64,
        config: GraphConfig,
    ) -> Result<Self> {
        let n = network.len();
        if n == 0 {
            return Err(Error::EmptyNetwork);
        }
        let links = network.index_edges();
        let mut weights = Vec::with_capacity(speeds.len());
        let mut normalized = Vec::with_capacity(speeds.len());
        let mut isolated = 0usize;
        for row in speeds {
            check_row(network, row)?;
            let w = links
                .iter()
                .map(|&(i, j, d)| kernelize(travel_time(d, row[i], row[j])?, tt_std, config.threshold))
                .collect::<Result<Vec<f64>>>()?;
            let a = dense(n, &links, &w);
            isolated += (0..n)
                .filter(|&i| a.data()[i * n..(i + 1) * n].iter().all(|v| *v == 0.0))
                .count();
            normalized.push(normalize(&add_self_loops(&a), config.degree)?);
            weights.push(w);
        }
        if isolated > 0 && n > 1 {
            log::warn!(
                "{isolated} node-hours have every link below the kernel threshold; those nodes only see themselves"
            );
        }
        Ok(DynamicGraph {
            n,
            edges: links.iter().map(|&(i, j, _)| (i, j)).collect(),
            weights,
            normalized,
            tt_std,
            config,
        })
    }

    /// Fits `tt_std` on the given speeds and builds the graph over them.
    pub fn fit_build(network: &DetectorNetwork, speeds: &[Vec<f64>], config: GraphConfig) -> Result<Self> {
        let tt_std = fit_tt_std(network, speeds)?;
        DynamicGraph::build(network, speeds, tt_std, config)
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn hours(&self) -> usize {
        self.normalized.len()
    }

    /// Kernel weights `A_t`, zero on the diagonal and off the link set.
    pub fn adjacency(&self, t: usize) -> Tensor {
        let links: Vec<(usize, usize, f64)> = self.edges.iter().map(|&(i, j)| (i, j, 0.0)).collect();
        dense(self.n, &links, &self.weights[t])
    }

    /// `Ā_t = A_t + I`.
    pub fn with_self_loops(&self, t: usize) -> Tensor {
        add_self_loops(&self.adjacency(t))
    }

    /// `Â_t`.
    pub fn normalized(&self, t: usize) -> &Tensor {
        &self.normalized[t]
    }

    pub fn normalized_all(&self) -> &[Tensor] {
        &self.normalized
    }

    /// Writes the nonzero entries of every `Â_t` as `hour,i,j,weight` rows,
    /// using the detectors' source ids.
    pub fn export_csv(&self, network: &DetectorNetwork, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "hour,i,j,weight").map_err(io)?;
        for (t, a) in self.normalized.iter().enumerate() {
            for i in 0..self.n {
                for j in 0..self.n {
                    let v = a.data()[i * self.n + j];
                    if v != 0.0 {
                        writeln!(
                            w,
                            "{t},{},{},{v}",
                            network.nodes[i].source_id(),
                            network.nodes[j].source_id()
                        )
                        .map_err(io)?;
                    }
                }
            }
        }
        w.flush().map_err(io)
    }
}

fn dense(n: usize, links: &[(usize, usize, f64)], w: &[f64]) -> Tensor {
    let mut a = Tensor::zeros(vec![n, n]);
    for (&(i, j, _), &v) in links.iter().zip(w) {
        a.data_mut()[i * n + j] = v;
        a.data_mut()[j * n + i] = v;
    }
    a
}

/// Time-invariant normalized adjacency with link weights from the kernel of
/// link distances, spread set to their population standard deviation (or
/// the mean distance when all links are equally long).
pub fn static_adjacency(network: &DetectorNetwork, config: GraphConfig) -> Result<Tensor> {
    let n = network.len();
    if n == 0 {
        return Err(Error::EmptyNetwork);
    }
    let links = network.index_edges();
    let d: Vec<f64> = links.iter().map(|l| l.2).collect();
    let a = if d.is_empty() {
        Tensor::zeros(vec![n, n])
    } else {
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        let spread = if std > 0.0 { std } else { mean };
        let w = d
            .iter()
            .map(|&v| kernelize(v, spread, config.threshold))
            .collect::<Result<Vec<f64>>>()?;
        dense(n, &links, &w)
    };
    normalize(&add_self_loops(&a), config.degree)
}
