// SPDX-License-Identifier: Apache-2.0

//! Relabeling a tree only to the true class of the branching example can
//! miss optimal multi-class ensembles.

use optiforest::dp::{self, DpOptions};
use optiforest::oracle::{self, Budget};
use optiforest::tree::dirty_examples;
use optiforest::witness::{self, Mode, Objective, Options, Relabel, SolveSpec};
use optiforest::{ClassId, Instance};

fn grid() -> Instance {
    Instance::from_points(&[vec![0, 1], vec![1, 1], vec![0, 0], vec![1, 0]], &[2, 0, 0, 1], 3)
}

fn spec(mode: Mode) -> SolveSpec {
    SolveSpec { objective: Objective::TotalSize(6), trees: 3, errors: 0, mode }
}

fn with(relabel: Relabel) -> Options {
    Options { relabel: Some(relabel), ..Options::default() }
}

#[test]
fn true_class_relabeling_is_incomplete() {
    let inst = grid();
    let o = oracle::brute_force_optimum(&inst, spec(Mode::FirstSolution), Budget::default()).unwrap().unwrap();
    assert_eq!(o.objective, 2);
    let narrow = witness::optimize(&inst, spec(Mode::FirstSolution), with(Relabel::TrueClass)).unwrap();
    assert_eq!(narrow.objective, 3);
    let wide = witness::optimize(&inst, spec(Mode::FirstSolution), with(Relabel::AnyOtherClass)).unwrap();
    assert_eq!(wide.objective, 2);
    let default = witness::optimize(&inst, spec(Mode::FirstSolution), Options::default()).unwrap();
    assert_eq!(default.objective, 2);
    let d = dp::solve_mtes_dp(&inst, 3, 0, DpOptions::default()).unwrap().unwrap();
    assert_eq!(d.objective, 2);
}

#[test]
fn unique_optimum_needs_a_three_way_tie() {
    let inst = grid();
    let all = witness::optimize(&inst, spec(Mode::EnumerateAll), Options::default()).unwrap();
    let o = oracle::brute_force_optimum(&inst, spec(Mode::EnumerateAll), Budget::default()).unwrap().unwrap();
    assert_eq!(all.ensembles.len(), 1);
    assert_eq!(o.solutions.len(), 1);
    let ens = &all.ensembles[0];
    assert!(o.solutions.contains(ens));
    assert!(dirty_examples(ens, &inst).is_empty());
    // (1,1) gets one vote per class and the tie goes to class 0
    let votes: Vec<ClassId> = ens.trees().iter().map(|t| t.classify(inst.rank(1))).collect();
    let mut sorted = votes.clone();
    sorted.sort();
    assert_eq!(sorted, vec![ClassId(0), ClassId(1), ClassId(2)]);
}

#[test]
fn binary_instances_ignore_the_policy() {
    let inst = Instance::from_points(&[vec![0], vec![1], vec![2]], &[0, 1, 0], 2);
    let s = SolveSpec { objective: Objective::TotalSize(4), trees: 3, errors: 0, mode: Mode::EnumerateAll };
    let a = witness::optimize(&inst, s, with(Relabel::TrueClass)).unwrap();
    let b = witness::optimize(&inst, s, with(Relabel::AnyOtherClass)).unwrap();
    assert_eq!(a.objective, b.objective);
    assert_eq!(a.ensembles, b.ensembles);
}
