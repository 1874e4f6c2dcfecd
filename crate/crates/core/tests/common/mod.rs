#![allow(dead_code)]

use evacflow::graph::{Detector, DetectorNetwork, Link};
use numcore::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random connected-ish network: a chain per corridor plus a few random
/// cross links.
pub fn random_network(rng: &mut ChaCha8Rng, n: usize) -> DetectorNetwork {
    let corridors = rng.random_range(1..=n.clamp(1, 3));
    let nodes: Vec<Detector> = (0..n)
        .map(|k| Detector {
            id: k + 1,
            corridor: format!("C{}", k % corridors),
            milepost: (k / corridors) as f64 * 1.5 + rng.random_range(0.0..0.5),
            lanes: rng.random_range(2..=4),
            lat: 27.0 + rng.random_range(0.0..0.3),
            lon: -82.0 + rng.random_range(0.0..0.3),
            source_id: None,
        })
        .collect();
    let mut edges = Vec::new();
    for k in corridors..n {
        edges.push(Link {
            i: k + 1 - corridors,
            j: k + 1,
            distance_miles: rng.random_range(0.2..3.0),
        });
    }
    for _ in 0..rng.random_range(0..=n / 2) {
        let (i, j) = (rng.random_range(1..=n), rng.random_range(1..=n));
        if i != j && !edges.iter().any(|e| (e.i, e.j) == (i, j) || (e.i, e.j) == (j, i)) {
            edges.push(Link {
                i,
                j,
                distance_miles: rng.random_range(0.2..3.0),
            });
        }
    }
    if edges.is_empty() && n > 1 {
        edges.push(Link {
            i: 1,
            j: 2,
            distance_miles: rng.random_range(0.2..3.0),
        });
    }
    DetectorNetwork::new(nodes, edges).expect("valid random network")
}

/// `hours` rows of speeds in mph.
pub fn random_speeds(rng: &mut ChaCha8Rng, n: usize, hours: usize) -> Vec<Vec<f64>> {
    (0..hours)
        .map(|_| (0..n).map(|_| rng.random_range(3.0..75.0)).collect())
        .collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y { 0.0 } else { rel_err(*x, *y) })
        .fold(0.0, f64::max)
}
