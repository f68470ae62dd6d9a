//! Time-energy Pareto frontier and latency-constrained recommendation.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sweep::RunResult;
use crate::task::LatencyMetric;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("no points to optimize over")]
    EmptyInput,
    #[error("point {config_id} has a non-finite coordinate")]
    NonFiniteCoordinate { config_id: String },
    #[error("no configuration meets the latency target {target} s; minimum achievable is {min_latency} s")]
    NoFeasiblePoint { target: f64, min_latency: f64 },
    #[error("latency target must be positive, got {0}")]
    InvalidTarget(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub config_id: String,
    /// Seconds.
    pub latency: f64,
    /// Joules per request.
    pub energy: f64,
}

impl ParetoPoint {
    pub fn new(config_id: impl Into<String>, latency: f64, energy: f64) -> Self {
        Self {
            config_id: config_id.into(),
            latency,
            energy,
        }
    }

    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.latency <= other.latency
            && self.energy <= other.energy
            && (self.latency < other.latency || self.energy < other.energy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub chosen: ParetoPoint,
    pub latency_metric_name: String,
    pub target: f64,
    pub baseline: ParetoPoint,
    pub savings_fraction: f64,
}

/// The emitted recommendation document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationDoc {
    pub metric: String,
    pub aggregation: String,
    pub target: f64,
    pub chosen_config: String,
    pub achieved_latency: f64,
    pub energy: f64,
    pub baseline_config: String,
    pub baseline_latency: f64,
    pub baseline_energy: f64,
    pub savings_fraction: f64,
}

impl Recommendation {
    pub fn document(&self) -> RecommendationDoc {
        RecommendationDoc {
            metric: self.latency_metric_name.clone(),
            aggregation: "mean".into(),
            target: self.target,
            chosen_config: self.chosen.config_id.clone(),
            achieved_latency: self.chosen.latency,
            energy: self.chosen.energy,
            baseline_config: self.baseline.config_id.clone(),
            baseline_latency: self.baseline.latency,
            baseline_energy: self.baseline.energy,
            savings_fraction: self.savings_fraction,
        }
    }
}

fn check(points: &[ParetoPoint]) -> Result<(), OptimizerError> {
    if points.is_empty() {
        return Err(OptimizerError::EmptyInput);
    }
    if let Some(p) = points
        .iter()
        .find(|p| !p.latency.is_finite() || !p.energy.is_finite())
    {
        return Err(OptimizerError::NonFiniteCoordinate {
            config_id: p.config_id.clone(),
        });
    }
    Ok(())
}

fn by_latency(a: &ParetoPoint, b: &ParetoPoint) -> Ordering {
    a.latency
        .total_cmp(&b.latency)
        .then(a.config_id.cmp(&b.config_id))
}

/// Non-dominated points, sorted by latency then config_id. Points with
/// identical coordinates are all kept.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Result<Vec<ParetoPoint>, OptimizerError> {
    check(points)?;
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| {
        a.latency
            .total_cmp(&b.latency)
            .then(a.energy.total_cmp(&b.energy))
            .then(a.config_id.cmp(&b.config_id))
    });
    // Sweep groups of equal latency. Within a group only the minimum energy
    // can survive, and only if it beats everything at strictly lower latency.
    let mut out = Vec::new();
    let mut best = f64::INFINITY;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].latency == sorted[i].latency {
            j += 1;
        }
        let group_min = sorted[i].energy;
        if group_min < best {
            out.extend(
                sorted[i..j]
                    .iter()
                    .filter(|p| p.energy == group_min)
                    .cloned(),
            );
            best = group_min;
        }
        i = j;
    }
    out.sort_by(by_latency);
    Ok(out)
}

/// Minimum-energy point with latency at or under `target`, compared against
/// the minimum-latency point over all inputs.
pub fn recommend(
    points: &[ParetoPoint],
    metric_name: &str,
    target: f64,
) -> Result<Recommendation, OptimizerError> {
    check(points)?;
    if !(target > 0.0) {
        return Err(OptimizerError::InvalidTarget(target));
    }
    let baseline = points
        .iter()
        .min_by(|a, b| {
            a.latency
                .total_cmp(&b.latency)
                .then(a.energy.total_cmp(&b.energy))
                .then(a.config_id.cmp(&b.config_id))
        })
        .expect("non-empty");
    let chosen = points
        .iter()
        .filter(|p| p.latency <= target)
        .min_by(|a, b| {
            a.energy
                .total_cmp(&b.energy)
                .then(a.latency.total_cmp(&b.latency))
                .then(a.config_id.cmp(&b.config_id))
        })
        .ok_or(OptimizerError::NoFeasiblePoint {
            target,
            min_latency: baseline.latency,
        })?;
    Ok(Recommendation {
        chosen: chosen.clone(),
        latency_metric_name: metric_name.to_string(),
        target,
        baseline: baseline.clone(),
        savings_fraction: 1.0 - chosen.energy / baseline.energy,
    })
}

/// Points for successful runs that report `metric`. Runs lacking it (e.g.
/// TPOT for diffusion) are skipped.
pub fn points_from_results(results: &[RunResult], metric: LatencyMetric) -> Vec<ParetoPoint> {
    results
        .iter()
        .filter_map(|r| {
            Some(ParetoPoint::new(
                r.config.config_id.clone(),
                r.latency(metric)?,
                r.energy_per_request_j,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(id: &str, l: f64, e: f64) -> ParetoPoint {
        ParetoPoint::new(id, l, e)
    }

    #[test]
    fn three_point_example() {
        let f = pareto_frontier(&[p("a", 1.0, 10.0), p("b", 2.0, 5.0), p("c", 3.0, 6.0)]).unwrap();
        let ids: Vec<&str> = f.iter().map(|q| q.config_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    #[test]
    fn duplicates_and_ties() {
        let f = pareto_frontier(&[
            p("b", 1.0, 2.0),
            p("a", 1.0, 2.0),
            p("c", 1.0, 3.0),
            p("d", 2.0, 2.0),
        ])
        .unwrap();
        let ids: Vec<&str> = f.iter().map(|q| q.config_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
        assert_eq!(
            pareto_frontier(&[p("x", 1.0, 1.0)]).unwrap(),
            vec![p("x", 1.0, 1.0)]
        );
    }

    #[test]
    fn errors() {
        assert_eq!(pareto_frontier(&[]), Err(OptimizerError::EmptyInput));
        assert!(matches!(
            pareto_frontier(&[p("n", f64::NAN, 1.0)]),
            Err(OptimizerError::NonFiniteCoordinate { .. })
        ));
        assert_eq!(
            recommend(&[p("a", 0.05, 1.0), p("b", 0.02, 3.0)], "tpot", 0.001),
            Err(OptimizerError::NoFeasiblePoint {
                target: 0.001,
                min_latency: 0.02
            })
        );
    }

    #[test]
    fn chat_target_savings() {
        let e1 = 100.0;
        let pts = [
            p("fast", 0.030, e1 / 0.56),
            p("mid", 0.077, e1),
            p("slow", 0.150, 0.5 * e1),
        ];
        let r = recommend(&pts, "tpot", 0.100).unwrap();
        assert_eq!(r.chosen.config_id, "mid");
        assert_eq!(r.baseline.config_id, "fast");
        assert!((r.savings_fraction - 0.44).abs() < 1e-9);
    }

    #[test]
    fn single_point_saves_nothing() {
        let r = recommend(&[p("only", 1.0, 5.0)], "e2e", 2.0).unwrap();
        assert_eq!(r.chosen, r.baseline);
        assert_eq!(r.savings_fraction, 0.0);
    }
}
