use serde::{Deserialize, Serialize};

use super::series::{DetectorSeries, SeriesSet};
use crate::error::{Error, Result};

/// Detectors missing more than this fraction of hours are dropped.
pub const MAX_MISSING: f64 = 0.20;
/// Flows above `lanes × this` (veh/h/lane) are treated as sensor errors.
pub const CAPACITY_PER_LANE: f64 = 2500.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    /// `(node_id, missing_fraction)` of every removed detector.
    pub dropped: Vec<(usize, f64)>,
    pub kept: Vec<usize>,
}

/// Removes detectors whose missing fraction strictly exceeds `max_missing`.
pub fn drop_sparse_detectors(set: &SeriesSet, max_missing: f64) -> Result<(SeriesSet, DropReport)> {
    if !(0.0..=1.0).contains(&max_missing) {
        return Err(Error::config(format!("max_missing must lie in [0, 1], got {max_missing}")));
    }
    let mut report = DropReport::default();
    for s in &set.series {
        let f = s.missing_fraction();
        if f > max_missing {
            report.dropped.push((s.node_id, f));
        } else {
            report.kept.push(s.node_id);
        }
    }
    if report.kept.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    Ok((set.retain(&report.kept), report))
}

/// Marks flows strictly above `lanes × capacity_per_lane` as missing and
/// returns how many were marked.
pub fn flag_outliers(series: &mut DetectorSeries, capacity_per_lane: f64) -> usize {
    let cap = series.lanes as f64 * capacity_per_lane;
    let mut count = 0;
    for f in &mut series.flow {
        if matches!(f, Some(v) if *v > cap) {
            *f = None;
            count += 1;
        }
    }
    count
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputeConfig {
    /// Predictor columns per regression.
    pub k: usize,
    pub max_rounds: usize,
    /// Stop once no imputed cell moves by more than this.
    pub tol: f64,
    pub capacity_per_lane: f64,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        ImputeConfig {
            k: 5,
            max_rounds: 10,
            tol: 1e-3,
            capacity_per_lane: CAPACITY_PER_LANE,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputeReport {
    pub imputed_cells: usize,
    pub rounds: usize,
    /// Largest cell change in the final round.
    pub max_change: f64,
    /// Regressions with no usable predictor that fell back to the column
    /// mean.
    pub fallbacks: usize,
}

struct Column {
    values: Vec<f64>,
    missing: Vec<usize>,
    observed_mean: f64,
    lo: f64,
    hi: f64,
}

/// Round-robin chained regression over every flow and speed column.
///
/// Missing cells start at their column's observed mean. Each round regresses
/// every gappy column on the `k` columns most correlated with it (least
/// squares with intercept, observed rows only, dropping the weakest
/// predictors while the system is singular) and refills its missing
/// cells, clamped to `[0, lanes × capacity]` for flows and to the observed
/// range for speeds.
pub fn impute_iterative(set: &SeriesSet, cfg: &ImputeConfig) -> Result<(SeriesSet, ImputeReport)> {
    let hours = set.hours();
    let mut cols: Vec<Column> = Vec::with_capacity(2 * set.nodes());
    for s in &set.series {
        for (is_flow, data) in [(true, &s.flow), (false, &s.speed)] {
            let observed: Vec<f64> = data.iter().flatten().copied().collect();
            if observed.len() * 2 < hours {
                return Err(Error::contract(format!(
                    "detector {} has {} of {hours} {} readings; imputation needs at least half",
                    s.node_id,
                    observed.len(),
                    if is_flow { "flow" } else { "speed" }
                )));
            }
            let mean = observed.iter().sum::<f64>() / observed.len().max(1) as f64;
            let (lo, hi) = if is_flow {
                (0.0, s.lanes as f64 * cfg.capacity_per_lane)
            } else {
                observed
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)))
            };
            cols.push(Column {
                values: data.iter().map(|v| v.unwrap_or(mean).clamp(lo, hi)).collect(),
                missing: (0..hours).filter(|&t| data[t].is_none()).collect(),
                observed_mean: mean,
                lo,
                hi,
            });
        }
    }

    let mut report = ImputeReport {
        imputed_cells: cols.iter().map(|c| c.missing.len()).sum(),
        ..Default::default()
    };
    if report.imputed_cells > 0 {
        for round in 1..=cfg.max_rounds {
            let mut max_change: f64 = 0.0;
            for j in 0..cols.len() {
                if cols[j].missing.is_empty() {
                    continue;
                }
                let mut predictors = most_correlated(&cols, j, cfg.k);
                // Collinear predictors make the system singular; shed the
                // least correlated ones until it solves.
                let mut fitted = None;
                while !predictors.is_empty() {
                    fitted = regress(&cols, j, &predictors);
                    if fitted.is_some() {
                        break;
                    }
                    predictors.pop();
                }
                if fitted.is_none() {
                    report.fallbacks += 1;
                }
                let col = &cols[j];
                let updates: Vec<(usize, f64)> = col
                    .missing
                    .iter()
                    .map(|&t| {
                        let v = match &fitted {
                            Some((icpt, beta)) => {
                                icpt + predictors.iter().zip(beta).map(|(&p, b)| b * cols[p].values[t]).sum::<f64>()
                            }
                            None => col.observed_mean,
                        };
                        (t, v.clamp(col.lo, col.hi))
                    })
                    .collect();
                let col = &mut cols[j];
                for (t, v) in updates {
                    max_change = max_change.max((v - col.values[t]).abs());
                    col.values[t] = v;
                }
            }
            report.rounds = round;
            report.max_change = max_change;
            if max_change < cfg.tol {
                break;
            }
        }
    }

    let mut out = set.clone();
    for (k, s) in out.series.iter_mut().enumerate() {
        s.flow = cols[2 * k].values.iter().map(|v| Some(*v)).collect();
        s.speed = cols[2 * k + 1].values.iter().map(|v| Some(*v)).collect();
    }
    Ok((out, report))
}

/// Indices of the `k` non-constant columns with the largest absolute
/// correlation to column `j`; ties go to the lower index.
fn most_correlated(cols: &[Column], j: usize, k: usize) -> Vec<usize> {
    let centered = |c: &Column| -> (Vec<f64>, f64) {
        let m = c.values.iter().sum::<f64>() / c.values.len() as f64;
        let d: Vec<f64> = c.values.iter().map(|v| v - m).collect();
        let ss = d.iter().map(|v| v * v).sum::<f64>();
        (d, ss)
    };
    let (y, syy) = centered(&cols[j]);
    let mut scored: Vec<(usize, f64)> = (0..cols.len())
        .filter(|&p| p != j)
        .filter_map(|p| {
            let (x, sxx) = centered(&cols[p]);
            if sxx <= 0.0 || syy <= 0.0 {
                return None;
            }
            let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            Some((p, (sxy / (sxx * syy).sqrt()).abs()))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(p, _)| p).collect()
}

/// Least squares of column `j` on `predictors` over `j`'s observed rows.
/// Returns `(intercept, coefficients)`, or `None` when the normal
/// equations are singular.
fn regress(cols: &[Column], j: usize, predictors: &[usize]) -> Option<(f64, Vec<f64>)> {
    let y = &cols[j];
    let rows: Vec<usize> = {
        let mut is_missing = vec![false; y.values.len()];
        y.missing.iter().for_each(|&t| is_missing[t] = true);
        (0..y.values.len()).filter(|&t| !is_missing[t]).collect()
    };
    let m = predictors.len();
    if rows.len() <= m {
        return None;
    }
    let mean = |c: &Column| rows.iter().map(|&t| c.values[t]).sum::<f64>() / rows.len() as f64;
    let ym = mean(y);
    let xm: Vec<f64> = predictors.iter().map(|&p| mean(&cols[p])).collect();
    let mut a = vec![vec![0.0; m + 1]; m];
    for &t in &rows {
        let dy = y.values[t] - ym;
        for r in 0..m {
            let xr = cols[predictors[r]].values[t] - xm[r];
            for c in 0..m {
                a[r][c] += xr * (cols[predictors[c]].values[t] - xm[c]);
            }
            a[r][m] += xr * dy;
        }
    }
    let beta = solve(a)?;
    let icpt = ym - beta.iter().zip(&xm).map(|(b, x)| b * x).sum::<f64>();
    Some((icpt, beta))
}

/// Gaussian elimination with partial pivoting on an augmented `m × (m+1)`
/// system. Pivots below `1e-12 ×` the largest diagonal count as singular.
fn solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = a.len();
    let scale = (0..m).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    if m > 0 && !(scale > 0.0) {
        return None;
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            for c in col..=m {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][m] - s) / a[r][r];
    }
    Some(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleaningConfig {
    pub max_missing: f64,
    pub capacity_per_lane: f64,
    pub impute: ImputeConfig,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            max_missing: MAX_MISSING,
            capacity_per_lane: CAPACITY_PER_LANE,
            impute: ImputeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub drop: DropReport,
    pub outliers: usize,
    pub impute: ImputeReport,
}

/// Sparse-detector removal, outlier flagging, then imputation.
pub fn clean(set: &SeriesSet, cfg: &CleaningConfig) -> Result<(SeriesSet, CleaningReport)> {
    let (mut kept, drop) = drop_sparse_detectors(set, cfg.max_missing)?;
    let outliers = kept
        .series
        .iter_mut()
        .map(|s| flag_outliers(s, cfg.capacity_per_lane))
        .sum();
    let impute_cfg = ImputeConfig {
        capacity_per_lane: cfg.capacity_per_lane,
        ..cfg.impute
    };
    let (complete, impute) = impute_iterative(&kept, &impute_cfg)?;
    Ok((complete, CleaningReport { drop, outliers, impute }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_matches_hand_solution() {
        // 2x + y = 5, x + 3y = 10
        let x = solve(vec![vec![2.0, 1.0, 5.0], vec![1.0, 3.0, 10.0]]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 3.0).abs() < 1e-12);
        assert!(solve(vec![vec![1.0, 2.0, 1.0], vec![2.0, 4.0, 2.0]]).is_none());
    }

    #[test]
    fn outlier_boundary_is_strict() {
        let mut s = DetectorSeries {
            node_id: 1,
            lanes: 2,
            flow: vec![Some(5000.0), Some(5000.5), Some(0.0)],
            speed: vec![Some(50.0); 3],
        };
        assert_eq!(flag_outliers(&mut s, 2500.0), 1);
        assert_eq!(s.flow, vec![Some(5000.0), None, Some(0.0)]);
    }
}
