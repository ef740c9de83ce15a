mod common;

use common::*;
use dopt::mixing::{MixingRule, WeightRule};
use dopt::objectives::Constraint;
use proptest::prelude::*;

proptest! {
    #[test]
    fn subgradient_inequality(case in objective_and_points()) {
        check_subgradient_inequality(case)?;
    }

    #[test]
    fn subgradients_add(case in two_objectives_and_points()) {
        check_subgradient_linearity(case)?;
    }

    #[test]
    fn bounded_subgradients_give_lipschitz_values(case in objective_and_points()) {
        check_lipschitz(case)?;
    }

    #[test]
    fn positive_stochastic_matrices_shrink_spread(case in positive_stochastic()) {
        check_spread_contraction(case)?;
    }

    #[test]
    fn perturbed_consensus_stays_in_its_envelope(case in perturbed_case()) {
        check_perturbed_bound(case)?;
    }

    #[test]
    fn long_products_are_entrywise_positive(case in product_case()) {
        check_product_positivity(case)?;
    }

    #[test]
    fn weight_rules_have_the_right_sums(family in any_family(), n in 1usize..=30, seed in any::<u64>()) {
        let g = graph(family, n, seed);
        let sums = |m: &dopt::mixing::MixingMatrix| (m.row_sums(), m.column_sums());
        if !g.is_directed() {
            for rule in [WeightRule::Metropolis, WeightRule::LazyMetropolis] {
                let m = rule.build(&g).unwrap();
                let (r, c) = sums(&m);
                for v in r.iter().chain(&c) {
                    prop_assert!((v - 1.0).abs() <= 1e-12);
                }
                for i in 0..n {
                    for j in 0..n {
                        prop_assert!(m.get(i, j) >= 0.0);
                        prop_assert!((m.get(i, j) - m.get(j, i)).abs() <= 1e-12);
                    }
                }
            }
        }
        let (_, c) = sums(&WeightRule::PushSum.build(&g).unwrap());
        for v in c {
            prop_assert!((v - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn projections_are_idempotent_and_nonexpansive(
        set in prop_oneof![
            (prop::collection::vec(-3.0..0.0f64, 2), prop::collection::vec(0.0..3.0f64, 2))
                .prop_map(|(lo, hi)| Constraint::Box { lo, hi }),
            (prop::collection::vec(-3.0..3.0f64, 2), 0.1..4.0f64)
                .prop_map(|(center, radius)| Constraint::Ball { center, radius }),
            (prop::collection::vec(-3.0..3.0f64, 2), -3.0..3.0f64)
                .prop_map(|(a, b)| Constraint::Halfspace { a, b }),
        ],
        x in prop::collection::vec(-10.0..10.0f64, 2),
        y in prop::collection::vec(-10.0..10.0f64, 2),
    ) {
        let (px, py) = (set.project(&x), set.project(&y));
        prop_assert!(set.contains(&px, 1e-9));
        let again = set.project(&px);
        for (a, b) in again.iter().zip(&px) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let d = |a: &[f64], b: &[f64]| norm(&a.iter().zip(b).map(|(u, v)| u - v).collect::<Vec<_>>());
        prop_assert!(d(&px, &py) <= d(&x, &y) + 1e-12);
    }
}
