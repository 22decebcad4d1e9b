// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference solutions for small instances.
//!
//! [`enumerate_trees`] lists every tree over the canonical cuts. The
//! optimizer [`brute_force_optimum`] only enumerates trees whose leaves all
//! receive at least one example: contracting the parent cut of an empty leaf
//! keeps every training classification and lowers the size, so no optimal
//! model has one.

use std::collections::BTreeSet;
use std::rc::Rc;

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::dataset::{ClassId, Instance};
use crate::tree::{plurality, Cut, DecisionTree, Ensemble, Tree, TreeEnsemble};
use crate::witness::{Mode, Objective, SolveSpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("enumeration needs about {estimate} steps, above the budget of {budget}")]
    Budget { estimate: u128, budget: u128 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget(pub u128);

impl Default for Budget {
    fn default() -> Self {
        Budget(50_000_000)
    }
}

struct Meter {
    used: u128,
    budget: u128,
}

impl Meter {
    fn new(b: Budget) -> Self {
        Meter { used: 0, budget: b.0 }
    }

    fn spend(&mut self, amount: u128) -> Result<(), OracleError> {
        self.used += amount;
        if self.used > self.budget {
            Err(OracleError::Budget { estimate: self.used, budget: self.budget })
        } else {
            Ok(())
        }
    }
}

fn catalan(k: usize) -> u128 {
    let mut c = 1u128;
    for i in 0..k as u128 {
        c = c * 2 * (2 * i + 1) / (i + 2);
    }
    c
}

fn cut_universe(inst: &Instance) -> Vec<Cut> {
    (0..inst.dims())
        .flat_map(|dim| (0..inst.threshold_count(dim)).map(move |thr| Cut { dim, thr }))
        .collect()
}

/// Number of trees with at most `max_size` cuts over `cuts` cuts and
/// `classes` classes.
pub fn tree_count(max_size: usize, cuts: usize, classes: usize) -> u128 {
    (0..=max_size)
        .map(|k| {
            catalan(k)
                .saturating_mul((cuts as u128).saturating_pow(k as u32))
                .saturating_mul((classes as u128).saturating_pow(k as u32 + 1))
        })
        .fold(0, u128::saturating_add)
}

/// Tree shapes with `k` inner nodes, leaves all class 0.
fn shapes(k: usize) -> Vec<Tree<()>> {
    if k == 0 {
        return vec![Tree::leaf(ClassId(0))];
    }
    let mut out = Vec::new();
    for left in 0..k {
        for l in shapes(left) {
            for r in shapes(k - 1 - left) {
                out.push(Tree::join((), l.clone(), r));
            }
        }
    }
    out
}

fn odometer(radix: usize, len: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut cur = vec![0usize; len];
    let mut done = radix == 0 && len > 0;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = cur.clone();
        done = true;
        for i in (0..len).rev() {
            cur[i] += 1;
            if cur[i] < radix {
                done = false;
                break;
            }
            cur[i] = 0;
        }
        Some(out)
    })
}

/// Every tree with at most `max_size` cuts, each exactly once: by size,
/// then shape, then cuts in pre-order, then leaf classes left to right.
pub fn enumerate_trees(
    inst: &Instance,
    max_size: usize,
    budget: Budget,
) -> Result<Vec<DecisionTree>, OracleError> {
    let cuts = cut_universe(inst);
    let estimate = tree_count(max_size, cuts.len(), inst.classes());
    if estimate > budget.0 {
        return Err(OracleError::Budget { estimate, budget: budget.0 });
    }
    let mut out = Vec::new();
    for k in 0..=max_size {
        for shape in shapes(k) {
            for choice in odometer(cuts.len(), k) {
                let mut it = choice.iter();
                let cut_tree = shape.map_cuts(|_| cuts[*it.next().expect("one cut per node")]);
                for labels in odometer(inst.classes(), k + 1) {
                    let labels: Vec<ClassId> = labels.into_iter().map(ClassId).collect();
                    out.push(cut_tree.with_leaf_classes(&labels));
                }
            }
        }
    }
    Ok(out)
}

/// Optimal objective and the canonical optimal models.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub objective: usize,
    pub solutions: BTreeSet<TreeEnsemble>,
}

type Partition = Vec<u32>;

/// Trees with no empty leaf, generated from the top.
struct Gen<'a> {
    inst: &'a Instance,
    cuts: Vec<(Cut, u32)>,
    partitions: FxHashMap<(u32, usize), Rc<Vec<Partition>>>,
    meter: Meter,
}

impl<'a> Gen<'a> {
    fn new(inst: &'a Instance, budget: Budget) -> Self {
        let cuts = cut_universe(inst)
            .into_iter()
            .map(|c| {
                let le = (0..inst.len())
                    .filter(|&e| inst.rank(e)[c.dim] as usize <= c.thr)
                    .fold(0u32, |m, e| m | 1 << e);
                (c, le)
            })
            .collect();
        Gen { inst, cuts, partitions: FxHashMap::default(), meter: Meter::new(budget) }
    }

    /// Distinct leaf partitions (sorted) of `a` by trees of exactly `k` cuts.
    fn partitions(&mut self, a: u32, k: usize) -> Result<Rc<Vec<Partition>>, OracleError> {
        if let Some(p) = self.partitions.get(&(a, k)) {
            return Ok(p.clone());
        }
        let mut set = BTreeSet::new();
        if k == 0 {
            set.insert(vec![a]);
        } else {
            for ci in 0..self.cuts.len() {
                let le = self.cuts[ci].1;
                let (l, r) = (a & le, a & !le);
                if l == 0 || r == 0 {
                    continue;
                }
                for left in 0..k {
                    let lp = self.partitions(l, left)?;
                    if lp.is_empty() {
                        continue;
                    }
                    let rp = self.partitions(r, k - 1 - left)?;
                    self.meter.spend((lp.len() * rp.len()) as u128)?;
                    for x in lp.iter() {
                        for y in rp.iter() {
                            let mut p: Partition = x.iter().chain(y).copied().collect();
                            p.sort_unstable();
                            set.insert(p);
                        }
                    }
                }
            }
        }
        let out = Rc::new(set.into_iter().collect::<Vec<_>>());
        self.partitions.insert((a, k), out.clone());
        Ok(out)
    }

    /// Trees of exactly `k` cuts on `a` with their leaf masks, leaf classes
    /// unset.
    fn trees(&mut self, a: u32, k: usize) -> Result<Vec<(DecisionTree, Vec<u32>)>, OracleError> {
        if k == 0 {
            return Ok(vec![(Tree::leaf(ClassId(0)), vec![a])]);
        }
        let mut out = Vec::new();
        for ci in 0..self.cuts.len() {
            let (cut, le) = self.cuts[ci];
            let (l, r) = (a & le, a & !le);
            if l == 0 || r == 0 {
                continue;
            }
            for left in 0..k {
                let lt = self.trees(l, left)?;
                if lt.is_empty() {
                    continue;
                }
                let rt = self.trees(r, k - 1 - left)?;
                self.meter.spend((lt.len() * rt.len()) as u128)?;
                for (x, xm) in &lt {
                    for (y, ym) in &rt {
                        let masks = xm.iter().chain(ym).copied().collect();
                        out.push((Tree::join(cut, x.clone(), y.clone()), masks));
                    }
                }
            }
        }
        Ok(out)
    }

    fn class_counts(&self, mask: u32) -> Vec<usize> {
        let mut counts = vec![0; self.inst.classes()];
        for e in 0..self.inst.len() {
            if mask & (1 << e) != 0 {
                counts[self.inst.label(e)] += 1;
            }
        }
        counts
    }

    fn min_errors(&self, partition: &[u32]) -> usize {
        partition
            .iter()
            .map(|&m| m.count_ones() as usize - self.class_counts(m).into_iter().max().unwrap_or(0))
            .sum()
    }
}

fn all_examples(inst: &Instance) -> u32 {
    if inst.len() == 32 {
        u32::MAX
    } else {
        (1u32 << inst.len()) - 1
    }
}

/// Optimal objective for `spec` by exhaustive search, with every optimal
/// model in `EnumerateAll` mode and one in `FirstSolution` mode. For the
/// per-tree objective, models are limited to trees without empty leaves.
pub fn brute_force_optimum(
    inst: &Instance,
    spec: SolveSpec,
    budget: Budget,
) -> Result<Option<OracleSolution>, OracleError> {
    assert!(spec.trees >= 1);
    let mut gen = Gen::new(inst, budget);
    if spec.trees == 1 {
        single_tree(&mut gen, spec)
    } else {
        ensembles(&mut gen, spec)
    }
}

fn single_tree(gen: &mut Gen, spec: SolveSpec) -> Result<Option<OracleSolution>, OracleError> {
    let all = all_examples(gen.inst);
    for k in 0..=spec.objective.bound() {
        let parts = gen.partitions(all, k)?;
        if parts.iter().all(|p| gen.min_errors(p) > spec.errors) {
            continue;
        }
        let mut solutions = BTreeSet::new();
        for (tree, masks) in gen.trees(all, k)? {
            let options: Vec<Vec<(ClassId, usize)>> = masks
                .iter()
                .map(|&m| {
                    let counts = gen.class_counts(m);
                    let size = m.count_ones() as usize;
                    counts.iter().enumerate().map(|(c, &n)| (ClassId(c), size - n)).collect()
                })
                .collect();
            let mut labels = Vec::new();
            label_leaves(&options, spec.errors, &mut labels, &mut |ls| {
                solutions.insert(Ensemble::single(tree.with_leaf_classes(ls)));
            });
            if spec.mode == Mode::FirstSolution && !solutions.is_empty() {
                break;
            }
        }
        return Ok(Some(OracleSolution { objective: k, solutions }));
    }
    Ok(None)
}

fn label_leaves(
    options: &[Vec<(ClassId, usize)>],
    budget: usize,
    labels: &mut Vec<ClassId>,
    emit: &mut dyn FnMut(&[ClassId]),
) {
    let i = labels.len();
    if i == options.len() {
        emit(labels);
        return;
    }
    for &(c, err) in &options[i] {
        if err <= budget {
            labels.push(c);
            label_leaves(options, budget - err, labels, emit);
            labels.pop();
        }
    }
}

/// One tree behavior: the class it assigns to each example.
type Behavior = Vec<u8>;

fn ensembles(gen: &mut Gen, spec: SolveSpec) -> Result<Option<OracleSolution>, OracleError> {
    let inst = gen.inst;
    let (n, k) = (inst.len(), inst.classes());
    let bound = spec.objective.bound();
    let all = all_examples(inst);

    // cheapest size of every behavior, grown one size at a time; trees of
    // an ensemble meeting `target` have at most `target` cuts
    let mut cost: FxHashMap<Behavior, usize> = FxHashMap::default();
    let mut behaviors: Vec<(usize, Behavior)> = Vec::new();
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut objective = None;
    for target in 0..=bound {
        let parts = gen.partitions(all, target)?;
        for p in parts.iter() {
            gen.meter.spend((k as u128).pow(p.len() as u32))?;
            for labels in odometer(k, p.len()) {
                let mut b = vec![0u8; n];
                for (&m, &c) in p.iter().zip(&labels) {
                    for (e, slot) in b.iter_mut().enumerate() {
                        if m & (1 << e) != 0 {
                            *slot = c as u8;
                        }
                    }
                }
                cost.entry(b).or_insert(target);
            }
        }
        behaviors = cost.iter().map(|(b, &c)| (c, b.clone())).collect();
        behaviors.sort();
        let cands: Vec<usize> = match spec.objective {
            Objective::TotalSize(_) => (0..behaviors.len()).collect(),
            Objective::MaxTreeSize(_) => {
                (0..behaviors.len()).filter(|&i| behaviors[i].0 <= target).collect()
            }
        };
        let mut search = Multisets {
            behaviors: &behaviors,
            cands: &cands,
            labels: inst.labels(),
            classes: k,
            spec,
            target,
            votes: vec![0u32; n * k],
            chosen: Vec::new(),
            found: Vec::new(),
        };
        search.run(0, 0, &mut gen.meter)?;
        if !search.found.is_empty() {
            found = search.found;
            objective = Some(target);
            break;
        }
    }
    let Some(objective) = objective else {
        return Ok(None);
    };

    // every optimal model: each chosen behavior realized by every tree of its
    // cost that reproduces it
    let mut solutions = BTreeSet::new();
    let mut realizations: FxHashMap<usize, Vec<DecisionTree>> = FxHashMap::default();
    for multiset in &found {
        let mut options = Vec::new();
        for &bi in multiset {
            if !realizations.contains_key(&bi) {
                let trees = realize(gen, all, &behaviors[bi])?;
                realizations.insert(bi, trees);
            }
            options.push(bi);
        }
        let mut picked = Vec::new();
        expand(&options, &realizations, &mut picked, &mut solutions);
        if spec.mode == Mode::FirstSolution {
            break;
        }
    }
    Ok(Some(OracleSolution { objective, solutions }))
}

fn realize(gen: &mut Gen, all: u32, b: &(usize, Behavior)) -> Result<Vec<DecisionTree>, OracleError> {
    let mut out = Vec::new();
    for (tree, masks) in gen.trees(all, b.0)? {
        let classes: Option<Vec<ClassId>> = masks
            .iter()
            .map(|&m| {
                let first = m.trailing_zeros() as usize;
                let c = b.1[first];
                (0..gen.inst.len())
                    .all(|e| m & (1 << e) == 0 || b.1[e] == c)
                    .then_some(ClassId(c as usize))
            })
            .collect();
        if let Some(cs) = classes {
            out.push(tree.with_leaf_classes(&cs));
        }
    }
    Ok(out)
}

fn expand(
    options: &[usize],
    realizations: &FxHashMap<usize, Vec<DecisionTree>>,
    picked: &mut Vec<DecisionTree>,
    out: &mut BTreeSet<TreeEnsemble>,
) {
    let i = picked.len();
    if i == options.len() {
        out.insert(Ensemble::new(picked.clone()).canonical());
        return;
    }
    for t in &realizations[&options[i]] {
        picked.push(t.clone());
        expand(options, realizations, picked, out);
        picked.pop();
    }
}

/// Non-decreasing index sequences of behaviors meeting the objective exactly
/// at `target`.
struct Multisets<'a> {
    behaviors: &'a [(usize, Behavior)],
    cands: &'a [usize],
    labels: &'a [usize],
    classes: usize,
    spec: SolveSpec,
    target: usize,
    votes: Vec<u32>,
    chosen: Vec<usize>,
    found: Vec<Vec<usize>>,
}

impl Multisets<'_> {
    fn run(&mut self, from: usize, total: usize, meter: &mut Meter) -> Result<(), OracleError> {
        let left = self.spec.trees - self.chosen.len();
        if left == 0 {
            meter.spend(1)?;
            let met = match self.spec.objective {
                Objective::TotalSize(_) => total == self.target,
                Objective::MaxTreeSize(_) => {
                    self.chosen.iter().any(|&i| self.behaviors[i].0 == self.target)
                }
            };
            if met && self.errors() <= self.spec.errors {
                self.found.push(self.chosen.clone());
            }
            return Ok(());
        }
        for ci in from..self.cands.len() {
            let bi = self.cands[ci];
            let (c, ref b) = self.behaviors[bi];
            if let Objective::TotalSize(_) = self.spec.objective {
                // candidates are sorted by cost
                if total + c * left > self.target {
                    break;
                }
            }
            for (e, &cl) in b.iter().enumerate() {
                self.votes[e * self.classes + cl as usize] += 1;
            }
            self.chosen.push(bi);
            self.run(ci, total + c, meter)?;
            self.chosen.pop();
            for (e, &cl) in b.iter().enumerate() {
                self.votes[e * self.classes + cl as usize] -= 1;
            }
            if self.spec.mode == Mode::FirstSolution && !self.found.is_empty() {
                return Ok(());
            }
        }
        Ok(())
    }

    fn errors(&self) -> usize {
        let k = self.classes;
        (0..self.labels.len())
            .filter(|&e| plurality(&self.votes[e * k..(e + 1) * k]).0 != self.labels[e])
            .count()
    }
}
