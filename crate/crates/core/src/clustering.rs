//! DBSCAN over `(perturbation, cost)` pairs and per-cluster MPPI averaging.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::mppi::{mppi_update, SampleBatch};
use crate::types::ControlSequence;
use crate::{Error, Result};

/// Guards the cost normalisation when every sample costs the same.
pub const COST_RANGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsPolicy {
    Fixed(f64),
    /// Median distance from each point to its `min_pts`-th nearest point (itself included).
    AdaptiveMedian,
}

/// What to do when DBSCAN labels every sample as noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fallback {
    /// Average over the whole batch as if it were one cluster.
    #[default]
    AllSamples,
    /// Use the single lowest-cost sample.
    BestSingleton,
}

/// How cluster candidates are scored for the final choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// Re-roll the averaged sequence and score it; infeasible rollouts rank last.
    #[default]
    Rollout,
    /// Lowest member cost of the cluster.
    ClusterMinCost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    pub eps: EpsPolicy,
    pub min_pts: usize,
    /// Weight of the normalised cost coordinate. `None` uses `√(N·m)`.
    pub cost_scale: Option<f64>,
    pub fallback: Fallback,
    pub selection: Selection,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            eps: EpsPolicy::AdaptiveMedian,
            min_pts: 5,
            cost_scale: None,
            fallback: Fallback::AllSamples,
            selection: Selection::Rollout,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if let EpsPolicy::Fixed(eps) = self.eps {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::invalid("eps", "must be positive"));
            }
        }
        if self.min_pts == 0 {
            return Err(Error::invalid("min_pts", "must be at least 1"));
        }
        if let Some(s) = self.cost_scale {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::invalid("cost_scale", "must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn resolved_cost_scale(&self, horizon: usize) -> f64 {
        self.cost_scale.unwrap_or_else(|| libm::sqrt((horizon * 2) as f64))
    }
}

/// Cost range of a batch, used to min-max normalise the cost coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostRange {
    pub min: f64,
    pub max: f64,
}

impl CostRange {
    pub fn of(costs: &[f64]) -> Self {
        let (min, max) = costs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(*c), hi.max(*c)));
        CostRange { min, max }
    }

    pub fn normalise(&self, cost: f64) -> f64 {
        (cost - self.min) / (self.max - self.min + COST_RANGE_EPS)
    }
}

/// Flattened perturbation, each channel divided by its noise σ, followed by
/// `cost_scale · (S − S_min)/(S_max − S_min + ε)`.
pub fn feature_vector(perturbation: &ControlSequence, cost: f64, range: &CostRange, sigmas: [f64; 2], cost_scale: f64) -> Vec<f64> {
    let mut f = Vec::with_capacity(perturbation.len() * 2 + 1);
    for d in perturbation.iter() {
        f.push(d.v / sigmas[0]);
        f.push(d.w / sigmas[1]);
    }
    f.push(cost_scale * range.normalise(cost));
    f
}

/// Feature points for a whole batch. `cost_bias[k]` is added to sample `k`'s
/// cost before normalisation (used to push infeasible samples apart).
pub fn batch_features(batch: &SampleBatch, sigmas: [f64; 2], cost_scale: f64, cost_bias: Option<&[f64]>) -> Vec<Vec<f64>> {
    let biased: Vec<f64> = match cost_bias {
        Some(bias) => batch.costs.iter().zip(bias).map(|(c, b)| c + b).collect(),
        None => batch.costs.clone(),
    };
    let range = CostRange::of(&biased);
    batch
        .perturbations
        .iter()
        .zip(&biased)
        .map(|(d, c)| feature_vector(d, *c, &range, sigmas, cost_scale))
        .collect()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Symmetric pairwise distance matrix, row-major `K × K`.
pub fn pairwise_distances(points: &[Vec<f64>]) -> Vec<f64> {
    let k = points.len();
    let mut d = alloc::vec![0.0; k * k];
    for i in 0..k {
        for j in (i + 1)..k {
            let v = euclidean(&points[i], &points[j]);
            d[i * k + j] = v;
            d[j * k + i] = v;
        }
    }
    d
}

/// Median over points of the distance to their `min_pts`-th nearest point,
/// counting the point itself as the first.
pub fn adaptive_eps(distances: &[f64], k: usize, min_pts: usize) -> f64 {
    if k == 0 {
        return f64::MIN_POSITIVE;
    }
    let rank = min_pts.clamp(1, k) - 1;
    let mut kth: Vec<f64> = (0..k)
        .map(|i| {
            let mut row: Vec<f64> = distances[i * k..(i + 1) * k].to_vec();
            row.sort_by(f64::total_cmp);
            row[rank]
        })
        .collect();
    kth.sort_by(f64::total_cmp);
    let median = if k % 2 == 1 {
        kth[k / 2]
    } else {
        0.5 * (kth[k / 2 - 1] + kth[k / 2])
    };
    median.max(f64::MIN_POSITIVE)
}

/// DBSCAN output: disjoint clusters plus noise, together covering `0..K`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterSet {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
    /// Which members are core points, parallel to the input.
    pub core: Vec<bool>,
}

impl ClusterSet {
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    /// Per-sample label: cluster index, or `None` for noise.
    pub fn labels(&self) -> Vec<Option<usize>> {
        let k = self.core.len();
        let mut labels = alloc::vec![None; k];
        for (c, members) in self.clusters.iter().enumerate() {
            for &i in members {
                labels[i] = Some(c);
            }
        }
        labels
    }
}

/// DBSCAN on a precomputed `K × K` distance matrix. Neighbourhoods are
/// closed balls (`d ≤ eps`) and include the point itself.
///
/// Clusters are numbered by their lowest-index core point. A border point
/// reachable from several clusters joins the cluster of its lowest-index
/// core neighbour.
pub fn dbscan_with_distances(distances: &[f64], k: usize, eps: f64, min_pts: usize) -> ClusterSet {
    let neighbours: Vec<Vec<usize>> = (0..k)
        .map(|i| (0..k).filter(|&j| distances[i * k + j] <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|n| n.len() >= min_pts).collect();

    let mut label: Vec<Option<usize>> = alloc::vec![None; k];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..k {
        if !core[seed] || label[seed].is_some() {
            continue;
        }
        let id = clusters.len();
        let mut members = Vec::new();
        label[seed] = Some(id);
        stack.push(seed);
        while let Some(p) = stack.pop() {
            members.push(p);
            for &q in &neighbours[p] {
                if core[q] && label[q].is_none() {
                    label[q] = Some(id);
                    stack.push(q);
                }
            }
        }
        clusters.push(members);
    }

    let mut noise = Vec::new();
    for i in 0..k {
        if core[i] {
            continue;
        }
        match neighbours[i].iter().find(|&&j| core[j]) {
            Some(&c) => clusters[label[c].expect("core points are labelled")].push(i),
            None => noise.push(i),
        }
    }
    for members in &mut clusters {
        members.sort_unstable();
    }
    ClusterSet { clusters, noise, core }
}

/// DBSCAN with Euclidean distance.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> ClusterSet {
    let d = pairwise_distances(points);
    dbscan_with_distances(&d, points.len(), eps, min_pts)
}

/// Result of averaging one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterUpdate {
    pub sequence: ControlSequence,
    /// Lowest member cost (the softmax baseline).
    pub min_cost: f64,
    pub size: usize,
}

/// MPPI averaging restricted to one cluster, baseline at the cluster's own minimum.
pub fn cluster_mppi_update(nominal: &ControlSequence, batch: &SampleBatch, cluster: &[usize], lambda: f64) -> Result<ClusterUpdate> {
    if cluster.is_empty() {
        return Err(Error::Empty("cluster"));
    }
    let (sequence, _) = mppi_update(nominal, batch, cluster, lambda)?;
    let min_cost = cluster.iter().map(|&k| batch.costs[k]).fold(f64::INFINITY, f64::min);
    Ok(ClusterUpdate {
        sequence,
        min_cost,
        size: cluster.len(),
    })
}

/// Score used to rank cluster candidates: feasible before infeasible, then by cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub feasible: bool,
    pub cost: f64,
}

impl CandidateScore {
    pub fn feasible(cost: f64) -> Self {
        CandidateScore { feasible: true, cost }
    }

    fn rank(&self, other: &Self) -> Ordering {
        other.feasible.cmp(&self.feasible).then(self.cost.total_cmp(&other.cost))
    }
}

/// Index of the best-scoring candidate; ties go to the lowest index.
pub fn select_optimal(scores: &[CandidateScore]) -> Result<usize> {
    let mut best = 0;
    if scores.is_empty() {
        return Err(Error::Empty("cluster candidates"));
    }
    for (i, s) in scores.iter().enumerate().skip(1) {
        if s.rank(&scores[best]) == Ordering::Less {
            best = i;
        }
    }
    Ok(best)
}
