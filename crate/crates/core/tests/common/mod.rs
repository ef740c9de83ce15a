#![allow(dead_code)]

use dopt::consensus::run_perturbed_consensus;
use dopt::graphs::{build_graph, make_sequence, Family, FamilySpec, GraphSequence, GraphSnapshot};
use dopt::mixing::{spectral, MixingMatrix, MixingRule, Stochasticity, WeightRule};
use dopt::objectives::{logistic_locals, LocalObjective};
use dopt::NodeStates;
use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const INEQ_TOL: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

pub fn undirected_family() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::Path),
        Just(Family::Cycle),
        Just(Family::Star),
        Just(Family::TwoStar),
        Just(Family::Complete),
        Just(Family::Grid2d),
        Just(Family::Expander),
        Just(Family::ErdosRenyi { eps: 1.0 }),
        Just(Family::Geometric { eps: 1.0 }),
    ]
}

pub fn any_family() -> impl Strategy<Value = Family> {
    prop_oneof![
        4 => undirected_family(),
        1 => Just(Family::DirectedCycle),
        1 => (0.0..0.5f64).prop_map(|p| Family::RandomDirected { p }),
    ]
}

/// Builds `family` on `n` nodes, falling back to a path when the family
/// cannot take that node count (grids, expanders, two-stars on tiny n).
pub fn graph(family: Family, n: usize, seed: u64) -> GraphSnapshot {
    build_graph(&FamilySpec::new(family, n), seed)
        .or_else(|_| build_graph(&FamilySpec::new(Family::Path, n), seed))
        .expect("path always builds")
}

pub fn local_objective(dim: usize) -> impl Strategy<Value = LocalObjective> {
    let point = move || prop::collection::vec(-5.0..5.0f64, dim);
    prop_oneof![
        (0.1..5.0f64, point()).prop_map(|(a, b)| LocalObjective::Quadratic { a, b }),
        point().prop_map(|b| LocalObjective::Absolute { b }),
        (point(), 0.05..3.0f64).prop_map(|(b, delta)| LocalObjective::Huber { b, delta }),
        (1usize..12, any::<u64>()).prop_map(move |(points, seed)| {
            logistic_locals(1, dim, points, seed).unwrap().remove(0)
        }),
    ]
}

pub fn objective_and_points() -> impl Strategy<Value = (LocalObjective, Vec<f64>, Vec<f64>)> {
    (1usize..=3).prop_flat_map(|d| {
        (
            local_objective(d),
            prop::collection::vec(-8.0..8.0f64, d),
            prop::collection::vec(-8.0..8.0f64, d),
        )
    })
}

pub fn two_objectives_and_points() -> impl Strategy<Value = (LocalObjective, LocalObjective, Vec<f64>, Vec<f64>)> {
    (1usize..=3).prop_flat_map(|d| {
        (
            local_objective(d),
            local_objective(d),
            prop::collection::vec(-8.0..8.0f64, d),
            prop::collection::vec(-8.0..8.0f64, d),
        )
    })
}

fn subgradient_holds(fx: f64, fy: f64, g: &[f64], x: &[f64], y: &[f64]) -> Result<(), TestCaseError> {
    let diff: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let rhs = fx + dot(g, &diff);
    let slack = INEQ_TOL * (1.0 + fx.abs() + fy.abs() + norm(g) * norm(&diff));
    prop_assert!(fy >= rhs - slack, "f(y) = {fy} < f(x) + g.(y-x) = {rhs}");
    Ok(())
}

/// `f(y) >= f(x) + g_x^T (y - x)`.
pub fn check_subgradient_inequality((f, x, y): (LocalObjective, Vec<f64>, Vec<f64>)) -> Result<(), TestCaseError> {
    subgradient_holds(f.value(&x), f.value(&y), &f.subgradient(&x), &x, &y)
}

/// The sum of subgradients of two functions is a subgradient of their sum,
/// and scaling a quadratic scales its subgradient.
pub fn check_subgradient_linearity(
    (f, h, x, y): (LocalObjective, LocalObjective, Vec<f64>, Vec<f64>),
) -> Result<(), TestCaseError> {
    let g: Vec<f64> = f.subgradient(&x).iter().zip(h.subgradient(&x)).map(|(a, b)| a + b).collect();
    subgradient_holds(f.value(&x) + h.value(&x), f.value(&y) + h.value(&y), &g, &x, &y)?;
    if let LocalObjective::Quadratic { a, b } = &f {
        let scaled = LocalObjective::Quadratic { a: 3.0 * a, b: b.clone() };
        for (s, v) in scaled.subgradient(&x).iter().zip(f.subgradient(&x)) {
            prop_assert!((s - 3.0 * v).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }
    Ok(())
}

/// `|h(y) - h(x)| <= L ||y - x||` with `L` the larger subgradient norm.
pub fn check_lipschitz((f, x, y): (LocalObjective, Vec<f64>, Vec<f64>)) -> Result<(), TestCaseError> {
    let l = norm(&f.subgradient(&x)).max(norm(&f.subgradient(&y)));
    let diff: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
    let (fx, fy) = (f.value(&x), f.value(&y));
    let lhs = (fy - fx).abs();
    let rhs = l * norm(&diff);
    prop_assert!(lhs <= rhs + INEQ_TOL * (1.0 + fx.abs() + fy.abs()), "{lhs} > {rhs}");
    Ok(())
}

/// Row-stochastic `W` with every entry at least `beta`, plus a vector `u`.
pub fn positive_stochastic() -> impl Strategy<Value = (f64, Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..=8).prop_flat_map(|n| {
        (
            0.0..=1.0f64,
            prop::collection::vec(prop::collection::vec(0.0..1.0f64, n), n),
            prop::collection::vec(-10.0..10.0f64, n),
        )
            .prop_map(move |(frac, raw, u)| {
                let beta = frac / n as f64;
                let rows = raw
                    .into_iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        let free = 1.0 - n as f64 * beta;
                        r.iter()
                            .map(|v| beta + if s > 0.0 { free * v / s } else { free / n as f64 })
                            .collect()
                    })
                    .collect();
                (beta, rows, u)
            })
    })
}

/// `spread(W u) <= (1 - 2 beta) spread(u)`.
pub fn check_spread_contraction((beta, rows, u): (f64, Vec<Vec<f64>>, Vec<f64>)) -> Result<(), TestCaseError> {
    let n = u.len();
    let w = MixingMatrix::new_unchecked(DMatrix::from_fn(n, n, |i, j| rows[i][j]), Stochasticity::Row);
    let v = w.mix(&NodeStates::from_scalars(&u));
    let (before, after) = (spread(&u), spread(v.as_slice()));
    let bound = (1.0 - 2.0 * beta) * before;
    prop_assert!(after <= bound + 1e-12 * (1.0 + before), "{after} > {bound}");
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PerturbedCase {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub deltas: Vec<Vec<f64>>,
}

pub fn perturbed_case() -> impl Strategy<Value = PerturbedCase> {
    (undirected_family(), 2usize..=10, any::<u64>(), 1usize..=30).prop_flat_map(|(family, n, seed, steps)| {
        (
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, n), steps),
        )
            .prop_map(move |(x0, deltas)| PerturbedCase { family, n, seed, x0, deltas })
    })
}

/// `||e^k|| <= lambda^k ||e^0|| + sum_j lambda^{k-1-j} ||Delta^j||`, and its
/// corollary with `L' / (1 - lambda)`.
pub fn check_perturbed_bound(c: PerturbedCase) -> Result<(), TestCaseError> {
    let g = graph(c.family, c.n, c.seed);
    let rule = WeightRule::LazyMetropolis;
    let lambda = spectral(&[&rule.build(&g).unwrap()]).unwrap().lambda;
    let seq = GraphSequence::fixed(g);
    let deltas: Vec<NodeStates> = c.deltas.iter().map(|d| NodeStates::from_scalars(d)).collect();
    let trace = run_perturbed_consensus(&seq, &rule, &NodeStates::from_scalars(&c.x0), &deltas).unwrap();
    let e0 = trace.rows[0].consensus_error;
    let l_prime = c.deltas.iter().map(|d| norm(d)).fold(0.0, f64::max);
    let mut acc = 0.0;
    for (k, row) in trace.rows.iter().enumerate() {
        if k > 0 {
            acc = lambda * acc + norm(&c.deltas[k - 1]);
        }
        let tight = lambda.powi(k as i32) * e0 + acc;
        let slack = 1e-10 * (1.0 + e0 + acc);
        prop_assert!(row.consensus_error <= tight + slack, "k={k}: {} > {tight}", row.consensus_error);
        if lambda < 1.0 {
            let loose = lambda.powi(k as i32) * e0 + l_prime / (1.0 - lambda);
            prop_assert!(row.consensus_error <= loose + slack);
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ProductCase {
    pub family: Family,
    pub n: usize,
    pub block: usize,
    pub seed: u64,
    pub offset: usize,
}

pub fn product_case() -> impl Strategy<Value = ProductCase> {
    (any_family(), 2usize..=5, 1usize..=3, any::<u64>(), 0usize..3)
        .prop_map(|(family, n, block, seed, offset)| ProductCase { family, n, block, seed, offset })
}

/// Every entry of `A^{(l+n)B-1} ... A^{lB}` is at least `alpha^{nB}`, with
/// `alpha` the smallest positive entry over one period of the sequence.
pub fn check_product_positivity(c: ProductCase) -> Result<(), TestCaseError> {
    let seq = make_sequence("split", FamilySpec::new(c.family, c.n), c.block, c.seed)
        .or_else(|_| make_sequence("split", FamilySpec::new(Family::Path, c.n), c.block, c.seed))
        .unwrap();
    let rule: &dyn MixingRule = if seq.is_directed() { &WeightRule::PushSum } else { &WeightRule::LazyMetropolis };
    let n = c.n;
    let len = n * c.block;
    let start = c.offset * c.block;
    let mats: Vec<MixingMatrix> = (start..start + len).map(|k| rule.build(&seq.snapshot(k)).unwrap()).collect();
    let alpha = mats.iter().map(|m| m.min_positive()).fold(f64::INFINITY, f64::min);
    let mut p = vec![vec![0.0; n]; n];
    for (i, row) in p.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for m in &mats {
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = (0..n).map(|t| m.get(i, t) * p[t][j]).sum();
            }
        }
        p = next;
    }
    let floor = alpha.powi(len as i32);
    let min = p.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    prop_assert!(min >= floor * (1.0 - 1e-12), "min entry {min} < alpha^(nB) = {floor}");
    Ok(())
}
