//! One control iteration for each controller variant.

use alloc::vec::Vec;

use crate::clustering::{
    adaptive_eps, batch_features, cluster_mppi_update, dbscan_with_distances, pairwise_distances, select_optimal,
    CandidateScore, ClusterParams, ClusterSet, EpsPolicy, Fallback, Selection,
};
use crate::costs::{ConstraintSet, CostConfig, TrajectoryCost};
use crate::dynamics::{rollout, Dynamics};
use crate::mppi::{argmin, effective_sample_size, generate_batch, mppi_update, standard_mppi_step, MppiParams, SampleBatch};
use crate::projection::{project_batch, ProjectionParams, ProjectionReport};
use crate::types::{ControlSequence, State, StateTrajectory};
use crate::Result;

/// Slack on top of the projection tolerance when re-checking a re-simulated sequence.
pub const REROLL_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// Soft-constraint MPPI over all samples.
    Standard,
    /// Projection, DBSCAN, per-cluster averaging, lowest-cost selection.
    Csc,
    /// Projection followed by a single all-sample average.
    CscNoDbscan,
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Standard => "standard",
            ControllerKind::Csc => "csc",
            ControllerKind::CscNoDbscan => "csc-no-dbscan",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub mppi: MppiParams,
    pub costs: CostConfig,
    pub projection: ProjectionParams,
    pub clustering: ClusterParams,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        self.mppi.validate()?;
        self.costs.validate()?;
        self.projection.validate()?;
        self.clustering.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepDiagnostics {
    /// Cost of the returned sequence, re-simulated and scored without the soft penalty.
    pub selected_cost: f64,
    /// Whether the returned sequence's own rollout satisfies every hard constraint.
    pub selected_feasible: bool,
    pub selected_max_violation: f64,
    pub min_sample_cost: f64,
    pub mean_sample_cost: f64,
    pub effective_sample_size: f64,
    pub clusters: usize,
    pub noise: usize,
    pub cluster_sizes: Vec<usize>,
    pub cluster_costs: Vec<f64>,
    pub eps: f64,
    /// DBSCAN found no cluster and the fallback policy was applied.
    pub fallback_used: bool,
    pub projection_converged: usize,
    pub projection_sweeps_max: usize,
    pub projection_sweeps_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub sequence: ControlSequence,
    pub rollout: StateTrajectory,
    pub diagnostics: StepDiagnostics,
    pub batch: SampleBatch,
    /// Cluster label per sample; `None` is noise. Empty for non-clustering controllers.
    pub labels: Vec<Option<usize>>,
}

/// A controller variant bound to a model and configuration.
#[derive(Debug, Clone)]
pub struct Controller<D> {
    pub kind: ControllerKind,
    pub config: ControllerConfig,
    pub model: D,
}

struct Evaluated {
    rollout: StateTrajectory,
    cost: f64,
    max_violation: f64,
    feasible: bool,
}

impl<D: Dynamics> Controller<D> {
    pub fn new(kind: ControllerKind, config: ControllerConfig, model: D) -> Result<Self> {
        config.validate()?;
        Ok(Controller { kind, config, model })
    }

    fn hard_cost<'a>(&'a self, constraints: &'a ConstraintSet) -> TrajectoryCost<'a> {
        TrajectoryCost {
            cfg: &self.config.costs,
            cov: &self.config.mppi.noise,
            constraints,
            dt: self.config.mppi.dt,
            soft_constraints: false,
        }
    }

    fn evaluate(&self, x0: &State, nominal: &ControlSequence, seq: &ControlSequence, constraints: &ConstraintSet) -> Evaluated {
        let traj = rollout(&self.model, x0, seq);
        let cost = self.hard_cost(constraints).evaluate(&traj, nominal, seq);
        let max_violation = constraints.max_violation(&traj, self.config.mppi.dt);
        let tol = self.config.projection.tol_violation + REROLL_EPS;
        let feasible = max_violation <= tol && constraints.max_bound_violation(seq) <= tol;
        Evaluated {
            rollout: traj,
            cost,
            max_violation,
            feasible,
        }
    }

    /// Runs one iteration from `x0` with obstacles given at the current time.
    pub fn step(&self, x0: &State, nominal: &ControlSequence, constraints: &ConstraintSet, seed: u64) -> Result<StepOutput> {
        match self.kind {
            ControllerKind::Standard => self.standard_step(x0, nominal, constraints, seed),
            ControllerKind::Csc => self.csc_step(x0, nominal, constraints, seed, true),
            ControllerKind::CscNoDbscan => self.csc_step(x0, nominal, constraints, seed, false),
        }
    }

    fn standard_step(&self, x0: &State, nominal: &ControlSequence, constraints: &ConstraintSet, seed: u64) -> Result<StepOutput> {
        let cfg = &self.config;
        let (sequence, batch, mppi) = standard_mppi_step(x0, nominal, &cfg.mppi, &self.model, &cfg.costs, constraints, seed)?;
        let eval = self.evaluate(x0, nominal, &sequence, constraints);
        Ok(StepOutput {
            diagnostics: StepDiagnostics {
                selected_cost: eval.cost,
                selected_feasible: eval.feasible,
                selected_max_violation: eval.max_violation,
                min_sample_cost: mppi.min_cost,
                mean_sample_cost: mppi.mean_cost,
                effective_sample_size: mppi.effective_sample_size,
                ..StepDiagnostics::default()
            },
            sequence,
            rollout: eval.rollout,
            batch,
            labels: Vec::new(),
        })
    }

    /// Projected, scored batch shared by both constrained variants.
    fn projected_batch(
        &self,
        x0: &State,
        nominal: &ControlSequence,
        constraints: &ConstraintSet,
        seed: u64,
    ) -> Result<(SampleBatch, Vec<ProjectionReport>)> {
        let cfg = &self.config;
        let sampling = MppiParams {
            clamp_samples: false,
            ..cfg.mppi.clone()
        };
        let mut batch = generate_batch(nominal, &sampling, &self.model, x0, seed)?;
        let reports = project_batch(&mut batch, nominal, x0, constraints, &self.model, &cfg.projection);
        batch.score(nominal, &self.hard_cost(constraints));
        Ok((batch, reports))
    }

    fn cluster(&self, batch: &SampleBatch, reports: &[ProjectionReport]) -> (ClusterSet, f64) {
        let cfg = &self.config;
        let bias: Vec<f64> = reports
            .iter()
            .map(|r| if r.converged { 0.0 } else { r.max_violation.max(0.0) })
            .collect();
        let scale = cfg.clustering.resolved_cost_scale(cfg.mppi.horizon);
        let features = batch_features(batch, cfg.mppi.noise.sigmas(), scale, Some(&bias));
        let distances = pairwise_distances(&features);
        let k = features.len();
        let eps = match cfg.clustering.eps {
            EpsPolicy::Fixed(eps) => eps,
            EpsPolicy::AdaptiveMedian => adaptive_eps(&distances, k, cfg.clustering.min_pts),
        };
        (dbscan_with_distances(&distances, k, eps, cfg.clustering.min_pts), eps)
    }

    fn csc_step(
        &self,
        x0: &State,
        nominal: &ControlSequence,
        constraints: &ConstraintSet,
        seed: u64,
        use_clusters: bool,
    ) -> Result<StepOutput> {
        let cfg = &self.config;
        let lambda = cfg.mppi.lambda;
        let (batch, reports) = self.projected_batch(x0, nominal, constraints, seed)?;

        let mut diag = StepDiagnostics {
            min_sample_cost: batch.costs.iter().copied().fold(f64::INFINITY, f64::min),
            mean_sample_cost: batch.costs.iter().sum::<f64>() / batch.len() as f64,
            projection_converged: reports.iter().filter(|r| r.converged).count(),
            projection_sweeps_max: reports.iter().map(|r| r.sweeps).max().unwrap_or(0),
            projection_sweeps_mean: reports.iter().map(|r| r.sweeps as f64).sum::<f64>() / reports.len() as f64,
            ..StepDiagnostics::default()
        };

        let all: Vec<usize> = (0..batch.len()).collect();
        let (groups, labels) = if use_clusters {
            let (set, eps) = self.cluster(&batch, &reports);
            diag.eps = eps;
            diag.clusters = set.cluster_count();
            diag.noise = set.noise.len();
            let labels = set.labels();
            if set.clusters.is_empty() {
                diag.fallback_used = true;
                let group = match cfg.clustering.fallback {
                    Fallback::AllSamples => all,
                    Fallback::BestSingleton => alloc::vec![argmin(&batch.costs).unwrap_or(0)],
                };
                (alloc::vec![group], labels)
            } else {
                (set.clusters, labels)
            }
        } else {
            (alloc::vec![all], Vec::new())
        };

        let mut candidates = Vec::with_capacity(groups.len());
        let mut scores = Vec::with_capacity(groups.len());
        for members in &groups {
            let update = cluster_mppi_update(nominal, &batch, members, lambda)?;
            let eval = self.evaluate(x0, nominal, &update.sequence, constraints);
            scores.push(match cfg.clustering.selection {
                Selection::Rollout => CandidateScore {
                    feasible: eval.feasible,
                    cost: eval.cost,
                },
                Selection::ClusterMinCost => CandidateScore::feasible(update.min_cost),
            });
            diag.cluster_sizes.push(update.size);
            diag.cluster_costs.push(eval.cost);
            candidates.push((update, eval));
        }
        let best = select_optimal(&scores)?;
        let (update, eval) = candidates.swap_remove(best);

        let weights_all = crate::mppi::softmax_weights(&batch.costs, lambda)?;
        diag.effective_sample_size = effective_sample_size(&weights_all);
        diag.selected_cost = eval.cost;
        diag.selected_feasible = eval.feasible;
        diag.selected_max_violation = eval.max_violation;
        Ok(StepOutput {
            sequence: update.sequence,
            rollout: eval.rollout,
            diagnostics: diag,
            batch,
            labels,
        })
    }
}

/// Convenience wrapper running one CSC-MPPI iteration.
pub fn csc_mppi_step<D: Dynamics + Clone>(
    x0: &State,
    nominal: &ControlSequence,
    config: &ControllerConfig,
    model: &D,
    constraints: &ConstraintSet,
    seed: u64,
) -> Result<StepOutput> {
    Controller::new(ControllerKind::Csc, config.clone(), model.clone())?.step(x0, nominal, constraints, seed)
}

/// MPPI update over every sample of a batch.
pub fn all_sample_update(nominal: &ControlSequence, batch: &SampleBatch, lambda: f64) -> Result<ControlSequence> {
    let all: Vec<usize> = (0..batch.len()).collect();
    mppi_update(nominal, batch, &all, lambda).map(|(u, _)| u)
}
