use dopt::consensus::run_accelerated;
use dopt::graphs::{build_graph, Family, FamilySpec, GraphSequence};
use dopt::mixing::{spectral, MixingRule, WeightRule};
use dopt::objectives::{Constraint, LocalObjective, ObjectiveSet};
use dopt::optimize::*;
use dopt::NodeStates;

fn absolutes(b: &[f64]) -> ObjectiveSet {
    ObjectiveSet::new(b.iter().map(|&v| LocalObjective::Absolute { b: vec![v] }).collect(), vec![]).unwrap()
}

fn quadratics(a: &[f64], b: &[f64], constraints: Vec<Constraint>) -> ObjectiveSet {
    let locals = a
        .iter()
        .zip(b)
        .map(|(&a, &b)| LocalObjective::Quadratic { a, b: vec![b] })
        .collect();
    ObjectiveSet::new(locals, constraints).unwrap()
}

fn fixed(family: Family, n: usize) -> GraphSequence {
    GraphSequence::fixed(build_graph(&FamilySpec::new(family, n), 0).unwrap())
}

fn interval(lo: f64, hi: f64) -> Constraint {
    Constraint::Box { lo: vec![lo], hi: vec![hi] }
}

#[test]
fn centralized_absolutes_stay_under_the_constant_step_bound() {
    let set = absolutes(&[1.0, 2.0, 5.0]);
    let t = 10_000;
    let trace = centralized_subgradient(&set, &[0.0], StepSchedule::OneOverSqrtT { horizon: t }, Horizon::steps(t)).unwrap();
    let b = &trace.bound_checks[0];
    assert!(b.satisfied && b.checked_steps > 0);
    // (|u0 - x*|^2 + L^2) / (2 sqrt(T)) with u0 = 0, x* = 2, L = 1.
    assert!((b.theoretical_rhs - 5.0 / 200.0).abs() < 1e-12);
    assert!(b.measured <= b.theoretical_rhs);
}

#[test]
fn decentralized_path_gap_stays_under_the_network_bound() {
    let seq = fixed(Family::Path, 8);
    let set = absolutes(&[-3.0, 4.0, 0.5, 2.0, -1.0, 7.0, 1.5, -2.5]);
    let t = 10_000;
    let trace = decentralized_subgradient(
        &seq,
        &WeightRule::LazyMetropolis,
        &set,
        &NodeStates::zeros(8, 1),
        StepSchedule::OneOverSqrtT { horizon: t },
        Horizon::steps(t),
    )
    .unwrap();
    assert!(trace.warnings.is_empty(), "{:?}", trace.warnings);
    let b = &trace.bound_checks[0];
    let m = WeightRule::LazyMetropolis.build(&seq.snapshot(0)).unwrap();
    let lambda = spectral(&[&m]).unwrap().lambda;
    let x_star = set.x_star()[0];
    let sqrt_t = (t as f64).sqrt();
    let rhs = (x_star * x_star + 1.0) / (2.0 * sqrt_t) + 1.0 / (sqrt_t * (1.0 - lambda));
    assert!((b.theoretical_rhs - rhs).abs() <= 1e-12 * rhs);
    assert!(b.satisfied && b.measured <= rhs);
    assert!(trace.diagnostics.average_dynamics_max.unwrap() <= 1e-12);
}

#[test]
fn projection_onto_a_shared_interval_pins_the_boundary() {
    let seq = fixed(Family::Path, 4);
    let set = quadratics(&[1.0; 4], &[2.0; 4], vec![interval(-1.0, 1.0)]);
    let trace = projected_decentralized_subgradient(
        &seq,
        &WeightRule::Metropolis,
        &set,
        &NodeStates::zeros(4, 1),
        StepSchedule::Diminishing { c: 1.0 },
        Horizon::steps(2000),
        SubgradientPoint::PastIterate,
    )
    .unwrap();
    assert_eq!(set.x_star(), &[1.0]);
    assert_eq!(trace.diagnostics.infeasible_steps, Some(0));
    for v in trace.final_state.as_slice() {
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }
}

#[test]
fn per_node_sets_meet_at_the_intersection_optimum() {
    let seq = fixed(Family::Complete, 2);
    let set = quadratics(&[1.0, 1.0], &[-1.0, 1.0], vec![interval(0.0, 2.0), interval(1.0, 3.0)]);
    assert_eq!(set.x_star(), &[1.0]);
    let x0 = NodeStates::from_scalars(&[0.0, 1.0]);
    for at in [SubgradientPoint::PastIterate, SubgradientPoint::PostMix] {
        let trace = projected_decentralized_subgradient(
            &seq,
            &WeightRule::Metropolis,
            &set,
            &x0,
            StepSchedule::Diminishing { c: 1.0 },
            Horizon::steps(20_000),
            at,
        )
        .unwrap();
        assert_eq!(trace.diagnostics.infeasible_steps, Some(0));
        for v in trace.final_state.as_slice() {
            assert!((v - 1.0).abs() < 2e-3, "{at:?}: {v}");
        }
    }
}

#[test]
fn inactive_constraints_leave_the_run_unchanged() {
    let seq = fixed(Family::Cycle, 5);
    let a = [1.0, 2.0, 0.5, 1.5, 1.0];
    let b = [0.3, -0.2, 0.1, 0.4, -0.1];
    let free = quadratics(&a, &b, vec![]);
    let boxed = quadratics(&a, &b, vec![interval(-10.0, 10.0)]);
    let x0 = NodeStates::zeros(5, 1);
    let s = StepSchedule::Diminishing { c: 0.5 };
    let t1 = decentralized_subgradient(&seq, &WeightRule::Metropolis, &free, &x0, s, Horizon::steps(500)).unwrap();
    let t2 = projected_decentralized_subgradient(
        &seq,
        &WeightRule::Metropolis,
        &boxed,
        &x0,
        s,
        Horizon::steps(500),
        SubgradientPoint::PastIterate,
    )
    .unwrap();
    assert_eq!(t1.final_state, t2.final_state);
}

#[test]
fn accelerated_subgradient_two_symmetric_nodes_reach_zero() {
    let g = build_graph(&FamilySpec::new(Family::Complete, 2), 0).unwrap();
    let set = quadratics(&[1.0, 1.0], &[-1.0, 1.0], vec![]);
    let trace =
        accelerated_distributed_subgradient(&g, 2, &set, &NodeStates::from_scalars(&[3.0, -2.0]), 0.05, Horizon::steps(3000))
            .unwrap();
    // Constant beta leaves each node O(beta) off; the pair stays symmetric about zero.
    let x = trace.final_state.as_slice();
    assert!((x[0] + x[1]).abs() < 1e-9, "{x:?}");
    assert!(x[0].abs() < 0.1, "{x:?}");
}

#[test]
fn accelerated_subgradient_without_steps_is_accelerated_consensus() {
    let g = build_graph(&FamilySpec::new(Family::Path, 6), 0).unwrap();
    let set = absolutes(&[0.0; 6]);
    let x0 = NodeStates::from_scalars(&[1.0, -2.0, 0.5, 3.0, 0.0, -1.0]);
    let trace = accelerated_distributed_subgradient(&g, 6, &set, &x0, 0.0, Horizon::steps(50)).unwrap();
    let plain = run_accelerated(&g, 6, &x0, 1e-300, 50).unwrap();
    for (a, b) in trace.final_state.as_slice().iter().zip(plain.final_state.as_slice()) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn accelerated_subgradient_time_grows_about_linearly() {
    let steps = |n: usize| {
        let g = build_graph(&FamilySpec::new(Family::Path, n), 0).unwrap();
        let b: Vec<f64> = (0..n).map(|i| if i < n / 2 { -1.0 } else { 1.0 }).collect();
        let x0: Vec<f64> = (0..n).map(|i| if i < n / 2 { 2.0 } else { -2.0 }).collect();
        let set = absolutes(&b);
        let trace = accelerated_distributed_subgradient(
            &g,
            n,
            &set,
            &NodeStates::from_scalars(&x0),
            0.002,
            Horizon::steps(2_000_000).until(0.02),
        )
        .unwrap();
        trace.converged_at.expect("reached eps = 0.05") as f64
    };
    let ratio = steps(64) / steps(32);
    assert!((1.4..=2.8).contains(&ratio), "ratio {ratio}");
}

#[test]
fn extra_started_at_the_optimum_stays_there() {
    let g = build_graph(&FamilySpec::new(Family::Path, 4), 0).unwrap();
    let set = quadratics(&[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0, -1.0, 2.0], vec![]);
    let x0 = NodeStates::replicated(4, set.x_star());
    let trace = extra(&g, WeightRule::Metropolis, &set, &x0, None, Horizon::steps(200)).unwrap();
    for v in trace.final_state.as_slice() {
        assert!((v - set.x_star()[0]).abs() < 1e-12);
    }
}

#[test]
fn diging_static_recursion_and_tracking() {
    let seq = fixed(Family::Grid2d, 16);
    let a: Vec<f64> = (0..16).map(|i| 0.5 + (i % 4) as f64 * 0.4).collect();
    let b: Vec<f64> = (0..16).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
    let set = quadratics(&a, &b, vec![]);
    let trace = diging(&seq, &WeightRule::LazyMetropolis, &set, &NodeStates::zeros(16, 1), 0.1, Horizon::steps(3000)).unwrap();
    assert!(trace.diagnostics.tracking_max.unwrap() <= 1e-10);
    assert!(trace.diagnostics.recursion_residual_max.unwrap() <= 1e-10);
    assert!(trace.diagnostics.rate_fit.unwrap().r_squared >= 0.99);
    assert!(trace.last().distance <= 1e-8);
}

#[test]
fn diging_started_at_the_optimum_returns_to_it() {
    let seq = fixed(Family::Path, 5);
    let set = quadratics(&[1.0, 2.0, 1.0, 0.5, 3.0], &[0.0, 1.0, -2.0, 4.0, 1.0], vec![]);
    let x0 = NodeStates::replicated(5, set.x_star());
    let trace = diging(&seq, &WeightRule::LazyMetropolis, &set, &x0, 0.05, Horizon::steps(3000)).unwrap();
    // Local gradients are nonzero at x*, so nodes leave it before tracking pulls them back.
    for v in trace.final_state.as_slice() {
        assert!((v - set.x_star()[0]).abs() < 1e-10, "{v}");
    }
}

#[test]
fn subgradient_push_directed_triangle_finds_the_median() {
    let seq = fixed(Family::DirectedCycle, 3);
    let set = absolutes(&[1.0, 2.0, 5.0]);
    let trace = subgradient_push(&seq, &set, &NodeStates::zeros(3, 1), StepSchedule::OneOverSqrtK, Horizon::steps(50_000).every(1000))
        .unwrap();
    for v in trace.final_state.as_slice() {
        assert!((v - 2.0).abs() <= 1e-2, "{v}");
    }
    // The alpha-weighted average carries the early transient; it lags the iterate.
    for v in trace.node_averages.unwrap().as_slice() {
        assert!((v - 2.0).abs() <= 2.5e-2, "{v}");
    }
    assert!(trace.bound_checks[0].satisfied);
}

#[test]
fn subgradient_push_token_ring_quadratics_reach_the_weighted_mean() {
    let seq = GraphSequence::token_ring(4, 4, true).unwrap();
    let set = quadratics(&[1.0, 2.0, 0.5, 1.5], &[3.0, -1.0, 2.0, 0.0], vec![]);
    let target = (3.0 - 2.0 + 1.0 + 0.0) / 5.0;
    assert!((set.x_star()[0] - target).abs() < 1e-12);
    let trace =
        subgradient_push(&seq, &set, &NodeStates::zeros(4, 1), StepSchedule::OneOverSqrtK, Horizon::steps(100_000).every(1000))
            .unwrap();
    // One arc per step makes this slow: max error is about 0.03 after 1e5 steps.
    for v in trace.final_state.as_slice() {
        assert!((v - target).abs() < 5e-2, "{v}");
    }
    let mean = trace.final_state.mean()[0];
    assert!((mean - target).abs() < 1e-2, "{mean}");
    assert!(trace.diagnostics.mass_drift_max.unwrap() <= 1e-12);
}
