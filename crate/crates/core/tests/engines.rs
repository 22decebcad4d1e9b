// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use optiforest::dp::{self, DpOptions, Limits, MultiClassMode, Semantics};
use optiforest::oracle::{self, Budget};
use optiforest::transforms::generate_parity_instance;
use optiforest::tree::dirty_examples;
use optiforest::witness::{self, Mode, Objective, Options, SolveSpec};
use optiforest::{Instance, TreeEnsemble};
use proptest::prelude::*;

fn arb_instance() -> impl Strategy<Value = Instance> {
    (1usize..=2, 2u16..=3, 2usize..=3).prop_flat_map(|(d, dmax, k)| {
        proptest::collection::vec((proptest::collection::vec(0..dmax, d), 0..k), 2..=6).prop_map(
            move |rows| {
                let mut points: Vec<Vec<u16>> = Vec::new();
                let mut labels = Vec::new();
                for (p, l) in rows {
                    let l = points.iter().position(|q| *q == p).map_or(l, |i| labels[i]);
                    points.push(p);
                    labels.push(l);
                }
                Instance::from_points(&points, &labels, k)
            },
        )
    })
}

fn spec(objective: Objective, trees: usize, errors: usize) -> SolveSpec {
    SolveSpec { objective, trees, errors, mode: Mode::FirstSolution }
}

fn parity31() -> Instance {
    Instance::new(&generate_parity_instance(3, 1).unwrap().dataset)
}

#[test]
fn parity_three_one_optima() {
    let inst = parity31();
    let dts = witness::solve_dts(&inst, None, 0, Mode::FirstSolution, Options::default()).unwrap();
    assert_eq!(dts.objective, 5);
    let o = oracle::brute_force_optimum(&inst, spec(Objective::TotalSize(6), 1, 0), Budget::default())
        .unwrap()
        .unwrap();
    assert_eq!(o.objective, 5);
    let mtes = dp::solve_mtes_dp(&inst, 3, 0, DpOptions::default()).unwrap().unwrap();
    assert_eq!(mtes.objective, 3);
    assert!(mtes.ensemble.trees().iter().all(|t| t.size() == 1));
    let mmax = witness::solve_mmax(&inst, 3, 3, 0, Mode::FirstSolution, Options::default()).unwrap();
    assert_eq!(mmax.objective, 1);
    assert_eq!(dp::solve_mmax_dp(&inst, 3, 0, DpOptions::default()).unwrap().unwrap().objective, 1);
}

#[test]
fn parity_errors_shrink_optimum() {
    let inst = parity31();
    let sizes: Vec<usize> = (0..=6)
        .map(|t| dp::solve_dts_dp(&inst, t, Limits::default()).unwrap().unwrap().objective)
        .collect();
    assert!(sizes.windows(2).all(|w| w[0] >= w[1]), "{sizes:?}");
    assert_eq!(sizes[0], 5);
    assert_eq!(sizes[3], 0);
}

#[test]
fn three_stumps_enumerated() {
    let inst = parity31();
    let all = witness::enumerate_solutions(&inst, spec(Objective::TotalSize(3), 3, 0), Options::default())
        .unwrap();
    let o = oracle::brute_force_optimum(
        &inst,
        SolveSpec { mode: Mode::EnumerateAll, ..spec(Objective::TotalSize(3), 3, 0) },
        Budget::default(),
    )
    .unwrap()
    .unwrap();
    let w: BTreeSet<TreeEnsemble> = all.ensembles.into_iter().collect();
    assert!(!w.is_empty());
    assert!(w.is_subset(&o.solutions));
}

#[test]
fn sequential_and_parallel_agree() {
    let inst = parity31();
    let s = spec(Objective::TotalSize(4), 3, 1);
    let a = witness::optimize(&inst, s, Options::default()).unwrap();
    let b = witness::optimize(&inst, s, Options::sequential()).unwrap();
    assert_eq!(a.objective, b.objective);
    assert_eq!(a.ensembles, b.ensembles);
    let e = SolveSpec { mode: Mode::EnumerateAll, ..s };
    let a = witness::optimize(&inst, e, Options::default()).unwrap();
    let b = witness::optimize(&inst, e, Options::sequential()).unwrap();
    assert_eq!(a.ensembles, b.ensembles);
}

#[test]
fn branching_stays_within_bound() {
    let inst = parity31();
    let s = inst.stats();
    for (trees, bound) in [(1, 5), (3, 3)] {
        let sol = witness::solve_mtes(&inst, trees, bound, 0, Mode::EnumerateAll, Options::default()).unwrap();
        let limit = s.delta * s.max_domain * (bound + trees);
        assert!(sol.stats.max_children <= limit, "{} > {limit}", sol.stats.max_children);
        assert!(sol.stats.max_children > 0);
    }
}

#[test]
fn multiclass_branching_stays_within_bound() {
    let inst = Instance::from_points(&[vec![0, 1], vec![1, 1], vec![0, 0], vec![1, 0], vec![2, 2]], &[2, 0, 0, 1, 1], 3);
    let s = inst.stats();
    for (trees, bound, errors) in [(1, 5, 0), (3, 4, 0), (3, 4, 1)] {
        let sol = witness::solve_mtes(&inst, trees, bound, errors, Mode::EnumerateAll, Options::default()).unwrap();
        let limit = s.delta_all * s.max_domain * (bound + trees) * (inst.classes() - 1) * (errors + 1);
        assert!(sol.stats.max_children <= limit, "{} > {limit}", sol.stats.max_children);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn engines_agree_on_total_size(inst in arb_instance(), trees in 1usize..=3, errors in 0usize..=1) {
        let bound = trees * inst.len();
        let w = witness::solve_mtes(&inst, trees, bound, errors, Mode::FirstSolution, Options::default())
            .expect("feasible");
        let d = dp::solve_mtes_dp(&inst, trees, errors, DpOptions::default()).unwrap().expect("feasible");
        let o = oracle::brute_force_optimum(&inst, spec(Objective::TotalSize(bound), trees, errors), Budget(u128::MAX))
            .unwrap()
            .expect("feasible");
        prop_assert_eq!(w.objective, o.objective);
        prop_assert_eq!(d.objective, o.objective);
        prop_assert_eq!(d.semantics, Semantics::Exact);
        for ens in w.ensembles.iter().chain([&d.ensemble]) {
            prop_assert!(dirty_examples(ens, &inst).len() <= errors);
            prop_assert_eq!(ens.len(), trees);
        }
    }

    #[test]
    fn engines_agree_on_max_tree_size(inst in arb_instance(), trees in 1usize..=3, errors in 0usize..=1) {
        let bound = inst.len();
        let w = witness::solve_mmax(&inst, trees, bound, errors, Mode::FirstSolution, Options::default())
            .expect("feasible");
        let d = dp::solve_mmax_dp(&inst, trees, errors, DpOptions::default()).unwrap().expect("feasible");
        let o = oracle::brute_force_optimum(&inst, spec(Objective::MaxTreeSize(bound), trees, errors), Budget(u128::MAX))
            .unwrap()
            .expect("feasible");
        prop_assert_eq!(w.objective, o.objective);
        prop_assert_eq!(d.objective, o.objective);
        prop_assert_eq!(d.ensemble.max_tree_size(), o.objective);
    }

    #[test]
    fn single_tree_enumeration_is_complete(inst in arb_instance(), errors in 0usize..=1) {
        let s = SolveSpec { mode: Mode::EnumerateAll, ..spec(Objective::TotalSize(inst.len()), 1, errors) };
        let w = witness::enumerate_solutions(&inst, s, Options::default()).expect("feasible");
        let o = oracle::brute_force_optimum(&inst, s, Budget(u128::MAX)).unwrap().expect("feasible");
        let ws: BTreeSet<TreeEnsemble> = w.ensembles.into_iter().collect();
        prop_assert_eq!(ws, o.solutions);
    }

    #[test]
    fn absolute_majority_is_an_upper_bound(inst in arb_instance(), errors in 0usize..=1) {
        let exact = dp::solve_mtes_dp(&inst, 3, errors, DpOptions::default()).unwrap().expect("feasible");
        let opts = DpOptions { multiclass: MultiClassMode::AbsoluteMajority, ..DpOptions::default() };
        let upper = dp::solve_mtes_dp(&inst, 3, errors, opts).unwrap().expect("feasible");
        prop_assert!(upper.objective >= exact.objective);
        prop_assert!(dirty_examples(&upper.ensemble, &inst).len() <= errors);
    }
}
