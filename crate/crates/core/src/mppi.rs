//! Standard MPPI: sample, roll out, score, and average perturbations with
//! softmax weights.

use alloc::vec::Vec;

use crate::costs::{ConstraintSet, CostConfig, TrajectoryCost};
use crate::dynamics::{rollout, Dynamics};
use crate::rng::{sample_gaussian_noise, RngStream};
use crate::types::{ControlBounds, ControlSequence, NoiseCovariance, State, StateTrajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MppiParams {
    /// Number of sampled sequences `K`.
    pub samples: usize,
    /// Horizon length `N`.
    pub horizon: usize,
    pub dt: f64,
    /// Softmax temperature `λ`.
    pub lambda: f64,
    pub noise: NoiseCovariance,
    pub bounds: ControlBounds,
    /// Clamp sampled inputs to `bounds` before rollout. Off for the soft-constraint baseline.
    pub clamp_samples: bool,
}

impl MppiParams {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::invalid("samples", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        Ok(())
    }
}

/// The Monte Carlo population of one control step.
///
/// `sequences[k][t] == nominal[t] + perturbations[k][t]` holds for every
/// sample, including after projection rewrites `sequences`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub perturbations: Vec<ControlSequence>,
    pub sequences: Vec<ControlSequence>,
    pub rollouts: Vec<StateTrajectory>,
    pub costs: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Recomputes `perturbations[k] = sequences[k] − nominal`.
    pub fn refresh_perturbation(&mut self, k: usize, nominal: &ControlSequence) {
        self.perturbations[k] = self.sequences[k].iter().zip(nominal.iter()).map(|(v, u)| *v - *u).collect();
    }

    pub fn score(&mut self, nominal: &ControlSequence, cost: &TrajectoryCost<'_>) {
        self.costs = self
            .rollouts
            .iter()
            .zip(&self.sequences)
            .map(|(traj, seq)| cost.evaluate(traj, nominal, seq))
            .collect();
    }
}

/// Draws `K` perturbed copies of `nominal` and rolls each out from `x0`.
/// Sample `k` uses noise stream `(seed, k)`. Costs are left at zero.
pub fn generate_batch<D: Dynamics + ?Sized>(
    nominal: &ControlSequence,
    params: &MppiParams,
    model: &D,
    x0: &State,
    seed: u64,
) -> Result<SampleBatch> {
    nominal.expect_len(params.horizon)?;
    let k = params.samples;
    let mut batch = SampleBatch {
        perturbations: Vec::with_capacity(k),
        sequences: Vec::with_capacity(k),
        rollouts: Vec::with_capacity(k),
        costs: alloc::vec![0.0; k],
    };
    for id in 0..k {
        let noise = sample_gaussian_noise(RngStream::new(seed, id as u64), &params.noise, params.horizon);
        let mut seq: ControlSequence = nominal.iter().zip(&noise).map(|(u, d)| *u + *d).collect();
        let delta = if params.clamp_samples {
            for v in seq.iter_mut() {
                *v = params.bounds.clamp(*v);
            }
            seq.iter().zip(nominal.iter()).map(|(v, u)| *v - *u).collect()
        } else {
            ControlSequence::new(noise)
        };
        batch.rollouts.push(rollout(model, x0, &seq));
        batch.sequences.push(seq);
        batch.perturbations.push(delta);
    }
    Ok(batch)
}

/// Index of the smallest cost; ties go to the lowest index.
pub fn argmin(costs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in costs.iter().enumerate() {
        match best {
            Some(b) if costs[b] <= *c => {}
            _ => best = Some(i),
        }
    }
    best
}

/// `w_i = exp(−(S_i − ρ)/λ) / η` with `ρ = min S`.
pub fn softmax_weights(costs: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::Empty("cost list"));
    }
    if let Some(sample) = costs.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFiniteCost { sample });
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda", "must be positive"));
    }
    let rho = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = costs.iter().map(|s| libm::exp(-(s - rho) / lambda)).collect();
    let eta: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= eta;
    }
    Ok(weights)
}

/// `U + Σ_i w_i δU_i`.
pub fn weighted_update<'a, I>(nominal: &ControlSequence, perturbations: I, weights: &[f64]) -> ControlSequence
where
    I: IntoIterator<Item = &'a ControlSequence>,
{
    let mut out = nominal.clone();
    for (delta, w) in perturbations.into_iter().zip(weights) {
        for (u, d) in out.iter_mut().zip(delta.iter()) {
            *u = *u + *d * *w;
        }
    }
    out
}

/// The MPPI averaging step restricted to the samples in `members`.
pub fn mppi_update(nominal: &ControlSequence, batch: &SampleBatch, members: &[usize], lambda: f64) -> Result<(ControlSequence, Vec<f64>)> {
    if members.is_empty() {
        return Err(Error::Empty("sample subset"));
    }
    let costs: Vec<f64> = members.iter().map(|&k| batch.costs[k]).collect();
    let weights = softmax_weights(&costs, lambda)?;
    let update = weighted_update(nominal, members.iter().map(|&k| &batch.perturbations[k]), &weights);
    Ok((update, weights))
}

/// `1 / Σ w²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Receding-horizon warm start: drop the first input and repeat the last.
pub fn shift_sequence(seq: &ControlSequence) -> ControlSequence {
    match seq.last() {
        None => seq.clone(),
        Some(last) => seq.iter().skip(1).copied().chain(core::iter::once(*last)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MppiDiagnostics {
    pub min_cost: f64,
    pub mean_cost: f64,
    pub effective_sample_size: f64,
    pub best_sample: usize,
}

impl MppiDiagnostics {
    pub fn from_costs(costs: &[f64], weights: &[f64]) -> Self {
        let best_sample = argmin(costs).unwrap_or(0);
        MppiDiagnostics {
            min_cost: costs.get(best_sample).copied().unwrap_or(f64::NAN),
            mean_cost: costs.iter().sum::<f64>() / costs.len() as f64,
            effective_sample_size: effective_sample_size(weights),
            best_sample,
        }
    }
}

/// One soft-constraint MPPI iteration over all `K` samples.
#[allow(clippy::too_many_arguments)]
pub fn standard_mppi_step<D: Dynamics + ?Sized>(
    x0: &State,
    nominal: &ControlSequence,
    params: &MppiParams,
    model: &D,
    cost_cfg: &CostConfig,
    constraints: &ConstraintSet,
    seed: u64,
) -> Result<(ControlSequence, SampleBatch, MppiDiagnostics)> {
    params.validate()?;
    let mut batch = generate_batch(nominal, params, model, x0, seed)?;
    let cost = TrajectoryCost {
        cfg: cost_cfg,
        cov: &params.noise,
        constraints,
        dt: params.dt,
        soft_constraints: true,
    };
    batch.score(nominal, &cost);
    let all: Vec<usize> = (0..batch.len()).collect();
    let (update, weights) = mppi_update(nominal, &batch, &all, params.lambda)?;
    let diag = MppiDiagnostics::from_costs(&batch.costs, &weights);
    Ok((update, batch, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{ControlPenalty, QuadraticWeights};
    use crate::dynamics::DiffDrive;
    use crate::types::Control;
    use alloc::vec;

    fn map_controls(seq: &ControlSequence, f: impl Fn(Control) -> Control) -> ControlSequence {
        seq.iter().map(|u| f(*u)).collect()
    }

    fn params(k: usize, n: usize, sigma: f64) -> MppiParams {
        MppiParams {
            samples: k,
            horizon: n,
            dt: 0.03,
            lambda: 0.7,
            noise: NoiseCovariance::new(sigma, sigma).unwrap(),
            bounds: ControlBounds::new(Control::new(0.0, -3.0), Control::new(0.5, 3.0)).unwrap(),
            clamp_samples: false,
        }
    }

    fn costs_cfg(goal: State) -> CostConfig {
        CostConfig {
            weights: QuadraticWeights::new([10.0, 10.0, 0.0], [50.0, 50.0, 50.0]).unwrap(),
            goal,
            collision_penalty: 1e4,
            control_penalty: ControlPenalty::SampleCoupling { gamma: 1.0 },
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_weights(&[3.0], 0.5).unwrap(), vec![1.0]);
        assert_eq!(softmax_weights(&[2.0; 4], 0.5).unwrap(), vec![0.25; 4]);
        let lambda = 0.7;
        let w = softmax_weights(&[0.0, lambda], lambda).unwrap();
        let e = libm::exp(-1.0);
        assert!((w[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((w[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((w[0] - 0.7311).abs() < 1e-4 && (w[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert_eq!(softmax_weights(&[1.0, f64::NAN], 1.0), Err(Error::NonFiniteCost { sample: 1 }));
        assert_eq!(softmax_weights(&[1.0, f64::INFINITY], 1.0), Err(Error::NonFiniteCost { sample: 1 }));
        assert!(softmax_weights(&[], 1.0).is_err());
    }

    #[test]
    fn softmax_survives_huge_spreads() {
        let w = softmax_weights(&[1e6, 0.0, 5e5], 0.01).unwrap();
        assert_eq!(w, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn weighted_update_examples() {
        let nominal: ControlSequence = (0..3).map(|i| Control::new(0.1 * i as f64, -0.2)).collect();
        let zero = ControlSequence::zeros(3);
        assert_eq!(weighted_update(&nominal, [&zero, &zero], &[0.5, 0.5]), nominal);

        let a = ControlSequence::constant(Control::new(0.05, 0.3), 3);
        let single = weighted_update(&nominal, [&a], &[1.0]);
        for t in 0..3 {
            assert_eq!(single[t], nominal[t] + a[t]);
        }

        let neg = map_controls(&a, |u| u * -1.0);
        assert_eq!(weighted_update(&nominal, [&a, &neg], &[0.5, 0.5]), nominal);
    }

    #[test]
    fn shift_examples() {
        let c = ControlSequence::constant(Control::new(0.2, 0.1), 4);
        assert_eq!(shift_sequence(&c), c);
        let (a, b, d) = (Control::new(1.0, 0.0), Control::new(2.0, 0.0), Control::new(3.0, 0.0));
        let s = ControlSequence::new(vec![a, b, d]);
        assert_eq!(shift_sequence(&s), ControlSequence::new(vec![b, d, d]));
        let one = ControlSequence::new(vec![a]);
        assert_eq!(shift_sequence(&one), one);
    }

    #[test]
    fn batch_shapes_match_configured_sizes() {
        let m = DiffDrive::new(0.03).unwrap();
        let p = params(300, 30, 0.1);
        let batch = generate_batch(&ControlSequence::zeros(30), &p, &m, &State::default(), 11).unwrap();
        assert_eq!(batch.sequences.len(), 300);
        assert_eq!(batch.perturbations.len(), 300);
        assert_eq!(batch.rollouts.len(), 300);
        assert_eq!(batch.costs.len(), 300);
        assert!(batch.sequences.iter().all(|s| s.len() == 30));
        assert!(batch.rollouts.iter().all(|r| r.len() == 31));
    }

    #[test]
    fn batch_is_deterministic_and_consistent() {
        let m = DiffDrive::new(0.03).unwrap();
        let p = params(16, 10, 0.3);
        let nominal = ControlSequence::constant(Control::new(0.2, 0.1), 10);
        let a = generate_batch(&nominal, &p, &m, &State::default(), 5).unwrap();
        let b = generate_batch(&nominal, &p, &m, &State::default(), 5).unwrap();
        assert_eq!(a, b);
        for k in 0..16 {
            for t in 0..10 {
                assert_eq!(a.sequences[k][t], nominal[t] + a.perturbations[k][t]);
            }
        }
    }

    #[test]
    fn clamped_batch_keeps_consistency() {
        let m = DiffDrive::new(0.03).unwrap();
        let mut p = params(16, 10, 1.0);
        p.clamp_samples = true;
        let nominal = ControlSequence::constant(Control::new(0.4, 0.0), 10);
        let b = generate_batch(&nominal, &p, &m, &State::default(), 5).unwrap();
        for k in 0..16 {
            for t in 0..10 {
                assert!(p.bounds.contains(b.sequences[k][t], 0.0));
                let re = nominal[t] + b.perturbations[k][t];
                assert!((re.v - b.sequences[k][t].v).abs() < 1e-15);
                assert!((re.w - b.sequences[k][t].w).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tiny_noise_batch_tracks_nominal() {
        let m = DiffDrive::new(0.03).unwrap();
        let p = params(8, 20, 1e-9);
        let nominal = ControlSequence::constant(Control::new(0.3, 0.5), 20);
        let b = generate_batch(&nominal, &p, &m, &State::default(), 0).unwrap();
        let reference = rollout(&m, &State::default(), &nominal);
        for traj in &b.rollouts {
            for (s, r) in traj.iter().zip(reference.iter()) {
                assert!((s.x() - r.x()).abs() < 1e-8 && (s.y() - r.y()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn standard_step_at_goal_barely_moves() {
        let m = DiffDrive::new(0.03).unwrap();
        let p = params(50, 30, 1e-6);
        let goal = State::new(0.4, 0.2, 0.0);
        let set = ConstraintSet::new(vec![], p.bounds, 0.0).unwrap();
        let (u, _, _) = standard_mppi_step(&goal, &ControlSequence::zeros(30), &p, &m, &costs_cfg(goal), &set, 3).unwrap();
        assert!(u[0].v.abs() < 1e-5 && u[0].w.abs() < 1e-5);
    }

    #[test]
    fn standard_step_with_one_sample_applies_its_perturbation() {
        let m = DiffDrive::new(0.03).unwrap();
        let p = params(1, 30, 0.2);
        let set = ConstraintSet::new(vec![], p.bounds, 0.0).unwrap();
        let nominal = ControlSequence::constant(Control::new(0.2, 0.0), 30);
        let cfg = costs_cfg(State::new(1.0, 1.0, 0.0));
        let (u, batch, diag) = standard_mppi_step(&State::default(), &nominal, &p, &m, &cfg, &set, 9).unwrap();
        assert_eq!(diag.effective_sample_size, 1.0);
        for t in 0..30 {
            assert_eq!(u[t], nominal[t] + batch.perturbations[0][t]);
        }
        let (again, _, _) = standard_mppi_step(&State::default(), &nominal, &p, &m, &cfg, &set, 9).unwrap();
        assert_eq!(u, again);
    }

    #[test]
    fn argmin_breaks_ties_low() {
        assert_eq!(argmin(&[3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmin(&[]), None);
    }
}
