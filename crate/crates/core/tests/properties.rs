use cscmppi_core::clustering::dbscan;
use cscmppi_core::costs::{
    running_cost, terminal_cost, trajectory_cost, ConstraintSet, ControlPenalty, CostConfig, QuadraticWeights,
};
use cscmppi_core::dynamics::{rollout, DiffDrive, Dynamics, Obstacle};
use cscmppi_core::mppi::{argmin, mppi_update, softmax_weights, weighted_update, SampleBatch};
use cscmppi_core::projection::{dual_update, lagrangian_gradient, project_sample, ProjectionMode, ProjectionParams, StepDuals};
use cscmppi_core::types::{Control, ControlBounds, ControlSequence, NoiseCovariance, Point2, State, StateTrajectory};
use proptest::prelude::*;

fn bounds() -> ControlBounds {
    ControlBounds::new(Control::new(0.0, -3.0), Control::new(0.5, 3.0)).unwrap()
}

fn model() -> DiffDrive {
    DiffDrive::new(0.03).unwrap()
}

/// Connected components of the core graph by union-find, then border points
/// attached to their lowest-index core neighbour. Returns one label per
/// point, `None` for noise, with clusters named by first appearance.
fn dbscan_oracle(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let close = |i: usize, j: usize| dist(&points[i], &points[j]) <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| close(i, j)).count() >= min_pts).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..i {
            if core[i] && core[j] && close(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let root: Vec<Option<usize>> = (0..n)
        .map(|i| {
            if core[i] {
                Some(find(&mut parent, i))
            } else {
                (0..n).find(|&j| core[j] && close(i, j)).map(|j| find(&mut parent, j))
            }
        })
        .collect();
    canonical(&root)
}

/// Renames labels by order of first appearance so partitions compare directly.
fn canonical(labels: &[Option<usize>]) -> Vec<Option<usize>> {
    let mut seen: Vec<usize> = Vec::new();
    labels
        .iter()
        .map(|l| {
            l.map(|c| match seen.iter().position(|&s| s == c) {
                Some(p) => p,
                None => {
                    seen.push(c);
                    seen.len() - 1
                }
            })
        })
        .collect()
}

fn blobs() -> impl Strategy<Value = (Vec<Vec<f64>>, f64, usize)> {
    (1usize..40, 1usize..8, 1usize..6).prop_flat_map(|(n, dim, centres)| {
        let centre = prop::collection::vec(-5.0f64..5.0, dim);
        let offset = prop::collection::vec(-1.0f64..1.0, dim);
        (
            prop::collection::vec(centre, centres),
            prop::collection::vec((0..centres, offset), n),
            0.05f64..2.0,
            1usize..6,
        )
            .prop_map(|(cs, pts, eps, min_pts)| {
                let points = pts.into_iter().map(|(c, o)| cs[c].iter().zip(o).map(|(a, b)| a + b).collect()).collect();
                (points, eps, min_pts)
            })
    })
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_peaks_at_min_cost(
        costs in prop::collection::vec(-1e6f64..1e6, 1..200),
        lambda in 1e-3f64..1e3,
    ) {
        let w = softmax_weights(&costs, lambda).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
        let best = argmin(&costs).unwrap();
        prop_assert!(w.iter().all(|x| *x <= w[best]));
    }

    #[test]
    fn duals_stay_non_negative(
        lower in prop::array::uniform2(0.0f64..10.0),
        upper in prop::array::uniform2(0.0f64..10.0),
        v in -5.0f64..5.0,
        w in -10.0f64..10.0,
        beta in prop::array::uniform2(0.0f64..5.0),
    ) {
        let out = dual_update(&StepDuals { lower, upper }, &Control::new(v, w), &bounds(), beta, beta);
        prop_assert!(out.is_non_negative());
    }

    #[test]
    fn constraint_gradient_matches_central_differences(
        x in -1.0f64..1.0, y in -1.0f64..1.0, theta in -3.2f64..3.2,
        v in 0.0f64..0.5, w in -3.0f64..3.0,
        cx in -0.2f64..0.2, cy in -0.2f64..0.2,
    ) {
        let m = model();
        let obs = Obstacle::fixed(Point2::new(x + cx, y + cy), 0.5).unwrap();
        let cs = ConstraintSet::new(vec![obs], bounds(), 0.2).unwrap();
        let x0 = State::new(x, y, theta);
        let u = Control::new(v, w);
        let grad = lagrangian_gradient(&x0, &u, &StepDuals::default(), &cs, &[true], &m, m.dt());
        let g = |u: Control| cs.max_g_at(&m.step(&x0, &u), m.dt());
        let h = 1e-6;
        let fd = [
            (g(Control::new(v + h, w)) - g(Control::new(v - h, w))) / (2.0 * h),
            (g(Control::new(v, w + h)) - g(Control::new(v, w - h))) / (2.0 * h),
        ];
        let err = ((grad[0] - fd[0]).powi(2) + (grad[1] - fd[1]).powi(2)).sqrt();
        let scale = (fd[0].powi(2) + fd[1].powi(2)).sqrt().max(1e-3);
        prop_assert!(err / scale < 1e-5, "analytic {grad:?} fd {fd:?}");
    }

    #[test]
    fn dbscan_matches_union_find_oracle((points, eps, min_pts) in blobs()) {
        let labels = canonical(&dbscan(&points, eps, min_pts).labels());
        prop_assert_eq!(labels, dbscan_oracle(&points, eps, min_pts));
    }

    #[test]
    fn dbscan_core_partition_and_noise_ignore_order((points, eps, min_pts) in blobs(), seed in any::<u64>()) {
        let n = points.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| points[i].clone()).collect();
        let a = dbscan(&points, eps, min_pts);
        let b = dbscan(&shuffled, eps, min_pts);
        let la = a.labels();
        let lb = b.labels();
        for i in 0..n {
            for j in 0..n {
                let (pi, pj) = (perm[i], perm[j]);
                if b.core[i] && b.core[j] {
                    prop_assert_eq!(lb[i] == lb[j], la[pi] == la[pj]);
                }
            }
            prop_assert_eq!(lb[i].is_none(), la[perm[i]].is_none());
        }
    }

    #[test]
    fn weighted_update_ignores_sample_order(
        costs in prop::collection::vec(0.0f64..50.0, 2..20),
        seed in any::<u64>(),
    ) {
        let k = costs.len();
        let horizon = 5;
        let nominal = ControlSequence::constant(Control::new(0.2, 0.1), horizon);
        let delta = |i: usize, t: usize| {
            let z = (seed ^ (i as u64 * 7919 + t as u64 * 104729)).wrapping_mul(0x9E3779B97F4A7C15);
            Control::new((z % 1000) as f64 / 1000.0 - 0.5, ((z >> 20) % 1000) as f64 / 500.0 - 1.0)
        };
        let perturbations: Vec<ControlSequence> = (0..k).map(|i| (0..horizon).map(|t| delta(i, t)).collect()).collect();
        let batch = SampleBatch {
            sequences: perturbations.clone(),
            rollouts: vec![StateTrajectory::new(vec![]); k],
            perturbations,
            costs,
        };
        let forward: Vec<usize> = (0..k).collect();
        let backward: Vec<usize> = (0..k).rev().collect();
        let (a, _) = mppi_update(&nominal, &batch, &forward, 0.7).unwrap();
        let (b, _) = mppi_update(&nominal, &batch, &backward, 0.7).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x.v - y.v).abs() < 1e-12 && (x.w - y.w).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_cost_is_the_sum_of_its_terms(
        x0 in prop::array::uniform3(-2.0f64..2.0),
        us in prop::collection::vec((0.0f64..0.5, -3.0f64..3.0), 1..15),
        gamma in 0.0f64..2.0,
    ) {
        let m = model();
        let goal = State::new(1.0, 0.5, 0.3);
        let cfg = CostConfig {
            weights: QuadraticWeights::new([10.0, 10.0, 0.0], [50.0, 50.0, 50.0]).unwrap(),
            goal,
            collision_penalty: 1e4,
            control_penalty: ControlPenalty::SampleCoupling { gamma },
        };
        let cov = NoiseCovariance::new(0.1, 1.0).unwrap();
        let seq: ControlSequence = us.iter().map(|&(v, w)| Control::new(v, w)).collect();
        let nominal = ControlSequence::constant(Control::new(0.25, -0.5), seq.len());
        let traj = rollout(&m, &State::new(x0[0], x0[1], x0[2]), &seq);
        let obstacle = Obstacle::fixed(Point2::new(0.0, 0.0), 0.3).unwrap();
        let cs = ConstraintSet::new(vec![obstacle], bounds(), 0.2).unwrap();

        let mut expected = terminal_cost(traj.terminal().unwrap(), &cfg);
        for t in 0..seq.len() {
            expected += running_cost(&traj[t], &cfg);
            expected += gamma * (nominal[t].v * seq[t].v / 0.01 + nominal[t].w * seq[t].w);
        }
        let hard = trajectory_cost(&traj, &nominal, &seq, &cfg, &cov, false, &cs, m.dt());
        prop_assert!((hard - expected).abs() <= 1e-9 * expected.abs().max(1.0));

        let hits = traj.iter().any(|x| x.position().norm() < 0.5);
        let soft = trajectory_cost(&traj, &nominal, &seq, &cfg, &cov, true, &cs, m.dt());
        let penalty = if hits { 1e4 } else { 0.0 };
        prop_assert!((soft - hard - penalty).abs() <= 1e-9 * soft.abs().max(1.0));
    }

    #[test]
    fn clamp_mode_lands_exactly_in_the_box(us in prop::collection::vec((-2.0f64..2.0, -8.0f64..8.0), 1..30)) {
        let m = model();
        let seq: ControlSequence = us.iter().map(|&(v, w)| Control::new(v, w)).collect();
        let cs = ConstraintSet::new(vec![], bounds(), 0.2).unwrap();
        let params = ProjectionParams { mode: ProjectionMode::ClampOnly, ..ProjectionParams::default() };
        let out = project_sample(&State::default(), &seq, &cs, &m, &params);
        for (u, raw) in out.sequence.iter().zip(seq.iter()) {
            prop_assert!((0.0..=0.5).contains(&u.v) && (-3.0..=3.0).contains(&u.w));
            prop_assert_eq!(u.v, raw.v.clamp(0.0, 0.5));
            prop_assert_eq!(u.w, raw.w.clamp(-3.0, 3.0));
        }
    }

    #[test]
    fn projected_head_on_runs_are_feasible(v in 0.1f64..0.5, w in -0.5f64..0.5, dx in 0.0f64..0.3) {
        let m = model();
        let cs = ConstraintSet::new(vec![Obstacle::fixed(Point2::ZERO, 0.5).unwrap()], bounds(), 0.2).unwrap();
        let x0 = State::new(-1.0 + dx, 0.0, 0.0);
        let seq = ControlSequence::constant(Control::new(v, w), 30);
        let params = ProjectionParams::default();
        let out = project_sample(&x0, &seq, &cs, &m, &params);
        if out.report.converged {
            prop_assert!(cs.max_violation(&out.rollout, m.dt()) <= params.tol_violation);
            prop_assert!(cs.max_bound_violation(&out.sequence) <= params.tol_violation);
        }
        let replay = rollout(&m, &x0, &out.sequence);
        prop_assert_eq!(replay, out.rollout);
    }
}

#[test]
fn weighted_update_with_one_hot_weights_picks_that_sample() {
    let nominal = ControlSequence::zeros(3);
    let deltas = [ControlSequence::constant(Control::new(1.0, 2.0), 3), ControlSequence::constant(Control::new(-1.0, 0.5), 3)];
    let out = weighted_update(&nominal, deltas.iter(), &[0.0, 1.0]);
    assert_eq!(out, deltas[1]);
}
