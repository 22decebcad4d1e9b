// SPDX-License-Identifier: Apache-2.0

//! Subset dynamic programming.
//!
//! `PartitionTable` stores, for every assignment of a class to a subset of
//! the examples, the size of a smallest tree realizing exactly that
//! assignment. Keys are base-`(k+1)` numbers over example ids: digit 0 means
//! "not in the subset", digit `c+1` means "must be labeled class `c`".
//! `RestrictedTable` is the `2^n` special case where every example keeps its
//! own label. `EnsembleTable` combines correct-sets of trees under truncated
//! count vectors. For three or more classes an exact plurality engine works
//! on vote vectors instead.

use rustc_hash::FxHashMap;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{ClassId, Instance};
use crate::tree::{dirty_examples, plurality, Cut, DecisionTree, Ensemble, Tree, TreeEnsemble};

/// Sentinel for "no tree realizes this entry".
pub const INF: u16 = u16::MAX;

const NO_CUT: u16 = u16::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DpError {
    #[error("{table} needs {required} entries, above the cap of {cap}")]
    TooLarge { table: &'static str, required: u128, cap: u128 },
    #[error("{0} examples exceed the 32-example limit of the subset tables")]
    TooManyExamples(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_entries: u128,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_entries: 1 << 26 }
    }
}

impl Limits {
    fn check(&self, table: &'static str, required: u128) -> Result<(), DpError> {
        if required > self.max_entries {
            Err(DpError::TooLarge { table, required, cap: self.max_entries })
        } else {
            Ok(())
        }
    }
}

/// How three or more classes are combined in the ensemble table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiClassMode {
    /// Exact plurality voting with class-order tie-breaks.
    Plurality,
    /// Counts correct votes only. A count reaching the absolute-majority
    /// demand guarantees a correct vote, so this yields a verified upper
    /// bound; it can miss solutions that win by plurality.
    AbsoluteMajority,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DpOptions {
    pub limits: Limits,
    pub multiclass: MultiClassMode,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions { limits: Limits::default(), multiclass: MultiClassMode::Plurality }
    }
}

/// Whether a reported optimum is exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Semantics {
    Exact,
    UpperBound,
}

#[derive(Clone, Debug)]
pub struct DpSolution {
    pub objective: usize,
    pub ensemble: TreeEnsemble,
    pub semantics: Semantics,
}

fn check_n(inst: &Instance) -> Result<usize, DpError> {
    if inst.len() > 32 {
        return Err(DpError::TooManyExamples(inst.len()));
    }
    Ok(inst.len())
}

/// Every canonical cut with the mask of examples routed to its `<=` side.
#[derive(Clone, Debug)]
struct Cuts {
    cuts: Vec<Cut>,
    le: Vec<u32>,
}

impl Cuts {
    fn new(inst: &Instance) -> Self {
        let mut cuts = Vec::new();
        let mut le = Vec::new();
        for dim in 0..inst.dims() {
            for thr in 0..inst.threshold_count(dim) {
                let mut m = 0u32;
                for e in 0..inst.len() {
                    if (inst.rank(e)[dim] as usize) <= thr {
                        m |= 1 << e;
                    }
                }
                cuts.push(Cut { dim, thr });
                le.push(m);
            }
        }
        Cuts { cuts, le }
    }
}

/// Predicted entry counts of each table for `trees` trees.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TableSizes {
    pub restricted: u128,
    pub partition: u128,
    pub ensemble: u128,
    pub vote_masks: u128,
}

pub fn table_sizes(inst: &Instance, trees: usize) -> TableSizes {
    let n = inst.len() as u32;
    let k = inst.classes() as u128;
    let cap = (trees / 2 + 1) as u128;
    TableSizes {
        restricted: 2u128.saturating_pow(n),
        partition: (k + 1).saturating_pow(n),
        ensemble: (cap + 1).saturating_pow(n).saturating_mul(trees as u128),
        vote_masks: if k > 2 { (1u128 << k).saturating_pow(n) } else { 0 },
    }
}

/// Smallest trees classifying subsets of the examples by their own labels.
#[derive(Clone, Debug)]
pub struct RestrictedTable {
    cuts: Cuts,
    labels: Vec<usize>,
    values: Vec<u16>,
    choice: Vec<u16>,
}

impl RestrictedTable {
    pub fn build(inst: &Instance, limits: Limits) -> Result<Self, DpError> {
        let n = check_n(inst)?;
        limits.check("restricted table", 1u128 << n)?;
        let cuts = Cuts::new(inst);
        let size = 1usize << n;
        let mut class_mask = vec![0u32; inst.classes()];
        for e in 0..n {
            class_mask[inst.label(e)] |= 1 << e;
        }
        let mut values = vec![INF; size];
        let mut choice = vec![NO_CUT; size];
        for a in 0..size {
            let a32 = a as u32;
            if class_mask.iter().filter(|&&m| m & a32 != 0).count() <= 1 {
                values[a] = 0;
                continue;
            }
            let mut best = INF;
            for (ci, &le) in cuts.le.iter().enumerate() {
                let l = a32 & le;
                let r = a32 & !le;
                if l == 0 || r == 0 {
                    continue;
                }
                let (vl, vr) = (values[l as usize], values[r as usize]);
                if vl == INF || vr == INF {
                    continue;
                }
                if vl + vr + 1 < best {
                    best = vl + vr + 1;
                    choice[a] = ci as u16;
                }
            }
            values[a] = best;
        }
        Ok(RestrictedTable { cuts, labels: inst.labels().to_vec(), values, choice })
    }

    pub fn get(&self, subset: u32) -> Option<usize> {
        let v = self.values[subset as usize];
        (v != INF).then_some(v as usize)
    }

    pub fn reconstruct(&self, subset: u32) -> Option<DecisionTree> {
        self.get(subset)?;
        Some(self.rebuild(subset))
    }

    fn rebuild(&self, a: u32) -> DecisionTree {
        if self.values[a as usize] == 0 {
            let class = if a == 0 { 0 } else { self.labels[a.trailing_zeros() as usize] };
            return Tree::leaf(ClassId(class));
        }
        let ci = self.choice[a as usize] as usize;
        let le = self.cuts.le[ci];
        Tree::join(self.cuts.cuts[ci], self.rebuild(a & le), self.rebuild(a & !le))
    }
}

/// Smallest trees realizing every partial class assignment.
#[derive(Clone, Debug)]
pub struct PartitionTable {
    n: usize,
    k: usize,
    pow: Vec<usize>,
    cuts: Cuts,
    values: Vec<u16>,
    choice: Vec<u16>,
}

impl PartitionTable {
    pub fn build(inst: &Instance, limits: Limits) -> Result<Self, DpError> {
        let n = check_n(inst)?;
        let k = inst.classes();
        limits.check("partition table", ((k + 1) as u128).saturating_pow(n as u32))?;
        let cuts = Cuts::new(inst);
        let base = k + 1;
        let pow: Vec<usize> = (0..n).map(|e| base.pow(e as u32)).collect();
        let size = base.pow(n as u32);
        let mut values = vec![INF; size];
        let mut choice = vec![NO_CUT; size];
        let mut digits = vec![0usize; n];
        for key in 0..size {
            // `digits` tracks `key` as an odometer
            if key > 0 {
                let mut e = 0;
                loop {
                    digits[e] += 1;
                    if digits[e] < base {
                        break;
                    }
                    digits[e] = 0;
                    e += 1;
                }
            }
            let mut support = 0u32;
            let mut seen = 0u64;
            for (e, &dg) in digits.iter().enumerate() {
                if dg > 0 {
                    support |= 1 << e;
                    seen |= 1 << (dg - 1);
                }
            }
            if seen.count_ones() <= 1 {
                values[key] = 0;
                continue;
            }
            let mut best = INF;
            for (ci, &le) in cuts.le.iter().enumerate() {
                if support & le == 0 || support & !le == 0 {
                    continue;
                }
                let mut lk = 0;
                for e in 0..n {
                    if le & (1 << e) != 0 {
                        lk += digits[e] * pow[e];
                    }
                }
                let rk = key - lk;
                let (vl, vr) = (values[lk], values[rk]);
                if vl == INF || vr == INF {
                    continue;
                }
                if vl + vr + 1 < best {
                    best = vl + vr + 1;
                    choice[key] = ci as u16;
                }
            }
            values[key] = best;
        }
        Ok(PartitionTable { n, k, pow, cuts, values, choice })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Key for a per-example assignment (`None` = not in the subset).
    pub fn key(&self, assign: &[Option<ClassId>]) -> usize {
        assert_eq!(assign.len(), self.n);
        assign
            .iter()
            .enumerate()
            .map(|(e, a)| a.map_or(0, |c| (c.0 + 1) * self.pow[e]))
            .sum()
    }

    fn full_key(&self, classes: &[usize]) -> usize {
        classes.iter().enumerate().map(|(e, &c)| (c + 1) * self.pow[e]).sum()
    }

    pub fn get(&self, key: usize) -> Option<usize> {
        let v = self.values[key];
        (v != INF).then_some(v as usize)
    }

    fn digit(&self, key: usize, e: usize) -> usize {
        key / self.pow[e] % (self.k + 1)
    }

    pub fn reconstruct(&self, key: usize) -> Option<DecisionTree> {
        self.get(key)?;
        Some(self.rebuild(key))
    }

    fn rebuild(&self, key: usize) -> DecisionTree {
        if self.values[key] == 0 {
            let class = (0..self.n).map(|e| self.digit(key, e)).find(|&d| d > 0).map_or(0, |d| d - 1);
            return Tree::leaf(ClassId(class));
        }
        let ci = self.choice[key] as usize;
        let le = self.cuts.le[ci];
        let lk: usize = (0..self.n)
            .filter(|e| le & (1 << e) != 0)
            .map(|e| self.digit(key, e) * self.pow[e])
            .sum();
        Tree::join(self.cuts.cuts[ci], self.rebuild(lk), self.rebuild(key - lk))
    }

    /// All keys assigning a class to every example, as `(key, classes)`.
    fn full_assignments(&self) -> impl Iterator<Item = (usize, Vec<usize>)> + '_ {
        let mut classes = vec![0usize; self.n];
        let mut first = true;
        std::iter::from_fn(move || {
            if first {
                first = false;
            } else {
                let mut e = 0;
                loop {
                    if e == self.n {
                        return None;
                    }
                    classes[e] += 1;
                    if classes[e] < self.k {
                        break;
                    }
                    classes[e] = 0;
                    e += 1;
                }
            }
            Some((self.full_key(&classes), classes.clone()))
        })
    }
}

/// Smallest single-leaf error count and its class.
fn best_leaf(inst: &Instance) -> (usize, ClassId) {
    let mut counts = vec![0u32; inst.classes()];
    for &l in inst.labels() {
        counts[l] += 1;
    }
    let c = plurality(&counts);
    (inst.len() - counts[c.0] as usize, c)
}

/// Minimum tree size with at most `errors` misclassified examples.
pub fn solve_dts_dp(
    inst: &Instance,
    errors: usize,
    limits: Limits,
) -> Result<Option<DpSolution>, DpError> {
    let (leaf_errors, leaf_class) = best_leaf(inst);
    if leaf_errors <= errors {
        return Ok(Some(DpSolution {
            objective: 0,
            ensemble: Ensemble::single(Tree::leaf(leaf_class)),
            semantics: Semantics::Exact,
        }));
    }
    let tree = if errors == 0 {
        let table = RestrictedTable::build(inst, limits)?;
        let all = if inst.len() == 32 { u32::MAX } else { (1u32 << inst.len()) - 1 };
        table.reconstruct(all)
    } else {
        let table = PartitionTable::build(inst, limits)?;
        best_full_key(&table, inst, errors).and_then(|key| table.reconstruct(key))
    };
    Ok(tree.map(|t| certify(vec![t], inst, errors, Semantics::Exact)))
}

/// Full-support key of least value with at most `errors` disagreements.
fn best_full_key(table: &PartitionTable, inst: &Instance, errors: usize) -> Option<usize> {
    let mut best: Option<(u16, usize)> = None;
    for (key, classes) in table.full_assignments() {
        let v = table.values[key];
        if v == INF || best.is_some_and(|(b, _)| v >= b) {
            continue;
        }
        let wrong = classes.iter().zip(inst.labels()).filter(|(a, b)| a != b).count();
        if wrong <= errors {
            best = Some((v, key));
        }
    }
    best.map(|(_, k)| k)
}

fn certify(trees: Vec<DecisionTree>, inst: &Instance, errors: usize, semantics: Semantics) -> DpSolution {
    let ensemble = Ensemble::new(trees).canonical();
    assert!(
        dirty_examples(&ensemble, inst).len() <= errors,
        "reconstructed model exceeds the error budget"
    );
    DpSolution { objective: ensemble.size(), ensemble, semantics }
}

/// Size-zero answer when constant trees of the most frequent class already
/// stay within the error budget.
fn constant_ensemble(inst: &Instance, trees: usize, errors: usize) -> Option<DpSolution> {
    let mut counts = vec![0u32; inst.classes()];
    for e in 0..inst.len() {
        counts[inst.label(e)] += 1;
    }
    let top = plurality(&counts);
    if inst.len() - counts[top.0] as usize > errors {
        return None;
    }
    Some(certify(vec![Tree::leaf(top); trees], inst, errors, Semantics::Exact))
}

/// Smallest tree whose correctly classified set is exactly `E'`, for every
/// mask `E'`, with the key that attains it.
pub fn exact_tree_sizes(table: &PartitionTable, inst: &Instance) -> Vec<(u16, usize)> {
    let mut out = vec![(INF, usize::MAX); 1 << inst.len()];
    for (key, classes) in table.full_assignments() {
        let v = table.values[key];
        if v == INF {
            continue;
        }
        let mut correct = 0usize;
        for (e, &c) in classes.iter().enumerate() {
            if c == inst.label(e) {
                correct |= 1 << e;
            }
        }
        if v < out[correct].0 {
            out[correct] = (v, key);
        }
    }
    out
}

/// Minimum correct-vote count that makes an example of class `class` win
/// when every other vote is wrong.
fn demand(class: usize, trees: usize) -> usize {
    if class == 0 {
        trees.div_ceil(2)
    } else {
        trees / 2 + 1
    }
}

/// Count-vector table over correct-sets. Digit `e` counts correct votes for
/// example `e`, truncated at `trees / 2 + 1`.
#[derive(Clone, Debug)]
pub struct EnsembleTable {
    n: usize,
    cap: usize,
    pow: Vec<usize>,
    levels: Vec<Vec<u16>>,
    back: Vec<Vec<(u32, u32)>>,
}

impl EnsembleTable {
    /// `tree_cost[mask]` is the cost of a tree correct exactly on `mask`.
    pub fn build(
        tree_cost: &[u16],
        n: usize,
        trees: usize,
        limits: Limits,
    ) -> Result<Self, DpError> {
        let cap = trees / 2 + 1;
        let base = cap + 1;
        let size = (base as u128).saturating_pow(n as u32);
        limits.check("ensemble table", size.saturating_mul(trees as u128))?;
        let size = size as usize;
        let pow: Vec<usize> = (0..n).map(|e| base.pow(e as u32)).collect();
        let mut inc = vec![0usize; 1 << n];
        for m in 1usize..(1 << n) {
            let low = m.trailing_zeros() as usize;
            inc[m] = inc[m & (m - 1)] + pow[low];
        }
        let masks: Vec<(u16, u32)> = tree_cost
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != INF)
            .map(|(m, &c)| (c, m as u32))
            .collect();

        let mut prev = vec![INF; size];
        prev[0] = 0;
        let mut levels = Vec::with_capacity(trees);
        let mut back = Vec::with_capacity(trees);
        let mut digits = vec![0usize; n];
        for _ in 0..trees {
            let mut cur = vec![INF; size];
            let mut bp = vec![(u32::MAX, u32::MAX); size];
            digits.iter_mut().for_each(|d| *d = 0);
            for key in 0..size {
                if key > 0 {
                    let mut e = 0;
                    loop {
                        digits[e] += 1;
                        if digits[e] < base {
                            break;
                        }
                        digits[e] = 0;
                        e += 1;
                    }
                }
                let base_cost = prev[key];
                if base_cost == INF {
                    continue;
                }
                let mut open = 0usize;
                for (e, &d) in digits.iter().enumerate() {
                    if d < cap {
                        open |= 1 << e;
                    }
                }
                for &(c, m) in &masks {
                    let next = key + inc[m as usize & open];
                    let v = base_cost + c;
                    if v < cur[next] {
                        cur[next] = v;
                        bp[next] = (key as u32, m);
                    }
                }
            }
            levels.push(cur.clone());
            back.push(bp);
            prev = cur;
        }
        Ok(EnsembleTable { n, cap, pow, levels, back })
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn get(&self, key: usize, trees: usize) -> Option<usize> {
        let v = self.levels[trees - 1][key];
        (v != INF).then_some(v as usize)
    }

    /// Cheapest full-level entry with at most `errors` examples below their
    /// demand.
    pub fn answer(&self, labels: &[usize], errors: usize) -> Option<(usize, usize)> {
        let trees = self.levels.len();
        let dem: Vec<usize> = labels.iter().map(|&l| demand(l, trees)).collect();
        let last = &self.levels[trees - 1];
        let mut best: Option<(u16, usize)> = None;
        for (key, &v) in last.iter().enumerate() {
            if v == INF || best.is_some_and(|(b, _)| v >= b) {
                continue;
            }
            let short = (0..self.n).filter(|&e| key / self.pow[e] % (self.cap + 1) < dem[e]).count();
            if short <= errors {
                best = Some((v, key));
            }
        }
        best.map(|(v, k)| (v as usize, k))
    }

    /// Correct-set masks of the trees behind the full-level entry `key`.
    pub fn reconstruct(&self, key: usize) -> Vec<u32> {
        let mut out = Vec::new();
        let mut k = key;
        for level in (0..self.levels.len()).rev() {
            let (p, m) = self.back[level][k];
            out.push(m);
            k = p as usize;
        }
        out.reverse();
        out
    }
}

/// Minimum overall size of `trees` trees with at most `errors` errors.
pub fn solve_mtes_dp(
    inst: &Instance,
    trees: usize,
    errors: usize,
    opts: DpOptions,
) -> Result<Option<DpSolution>, DpError> {
    assert!(trees >= 1);
    if trees == 1 {
        return solve_dts_dp(inst, errors, opts.limits);
    }
    best_ensemble(inst, trees, errors, None, opts)
}

/// Minimum largest-tree size of `trees` trees.
pub fn solve_mmax_dp(
    inst: &Instance,
    trees: usize,
    errors: usize,
    opts: DpOptions,
) -> Result<Option<DpSolution>, DpError> {
    assert!(trees >= 1);
    if trees == 1 {
        return solve_dts_dp(inst, errors, opts.limits);
    }
    let table = PartitionTable::build(inst, opts.limits)?;
    let top = inst.distinct_points().saturating_sub(1);
    for s in 0..=top {
        if let Some(mut sol) = ensemble_from_table(&table, inst, trees, errors, Some(s), opts)? {
            sol.objective = sol.ensemble.max_tree_size();
            return Ok(Some(sol));
        }
    }
    Ok(None)
}

fn best_ensemble(
    inst: &Instance,
    trees: usize,
    errors: usize,
    max_tree: Option<usize>,
    opts: DpOptions,
) -> Result<Option<DpSolution>, DpError> {
    let table = PartitionTable::build(inst, opts.limits)?;
    ensemble_from_table(&table, inst, trees, errors, max_tree, opts)
}

fn ensemble_from_table(
    table: &PartitionTable,
    inst: &Instance,
    trees: usize,
    errors: usize,
    max_tree: Option<usize>,
    opts: DpOptions,
) -> Result<Option<DpSolution>, DpError> {
    let within = |v: u16| v != INF && max_tree.is_none_or(|s| (v as usize) <= s);
    if let Some(sol) = constant_ensemble(inst, trees, errors) {
        return Ok(Some(sol));
    }
    if inst.classes() > 2 && opts.multiclass == MultiClassMode::Plurality {
        return plurality_ensemble(table, inst, trees, errors, &within, opts.limits);
    }
    let mut sizes = exact_tree_sizes(table, inst);
    for s in sizes.iter_mut() {
        if !within(s.0) {
            *s = (INF, usize::MAX);
        }
    }
    let costs: Vec<u16> = sizes.iter().map(|s| s.0).collect();
    let ens = EnsembleTable::build(&costs, inst.len(), trees, opts.limits)?;
    let Some((_, key)) = ens.answer(inst.labels(), errors) else {
        return Ok(None);
    };
    let models = ens
        .reconstruct(key)
        .into_iter()
        .map(|m| table.reconstruct(sizes[m as usize].1).expect("finite entry"))
        .collect();
    let semantics = if inst.classes() > 2 { Semantics::UpperBound } else { Semantics::Exact };
    Ok(Some(certify(models, inst, errors, semantics)))
}

/// Final-tree lookup over per-example allowed-class masks. Entry `A` holds
/// the cheapest tree whose class on every example `e` lies in `A[e]`, with
/// up to `relaxed` examples exempt.
struct MaskTable {
    n: usize,
    base: usize,
    exact: Vec<u16>,
    relaxed: Option<Vec<u16>>,
}

impl MaskTable {
    fn build(
        table: &PartitionTable,
        behaviors: &[(u16, usize)],
        n: usize,
        k: usize,
        errors: usize,
        limits: Limits,
    ) -> Result<Self, DpError> {
        let base = 1usize << k;
        limits.check("vote mask table", (base as u128).saturating_pow(n as u32))?;
        let size = base.pow(n as u32);
        let mut exact = vec![INF; size];
        for &(c, key) in behaviors {
            let idx: usize =
                (0..n).map(|e| (1usize << (table.digit(key, e) - 1)) * base.pow(e as u32)).sum();
            exact[idx] = c;
        }
        let mut masks = vec![0usize; n];
        let stride: Vec<usize> = (0..n).map(|e| base.pow(e as u32)).collect();
        for a in 0..size {
            if a > 0 {
                let mut e = 0;
                loop {
                    masks[e] += 1;
                    if masks[e] < base {
                        break;
                    }
                    masks[e] = 0;
                    e += 1;
                }
            }
            if masks.contains(&0) {
                continue;
            }
            let Some(e) = (0..n).find(|&e| masks[e].count_ones() > 1) else {
                continue;
            };
            let low = masks[e] & masks[e].wrapping_neg();
            let single = a - (masks[e] - low) * stride[e];
            let rest = a - low * stride[e];
            exact[a] = exact[single].min(exact[rest]);
        }
        let relaxed = (errors > 0).then(|| {
            let full = base - 1;
            let mut g = exact.clone();
            for _ in 0..errors.min(n) {
                masks.iter_mut().for_each(|m| *m = 0);
                for a in 0..size {
                    if a > 0 {
                        let mut e = 0;
                        loop {
                            masks[e] += 1;
                            if masks[e] < base {
                                break;
                            }
                            masks[e] = 0;
                            e += 1;
                        }
                    }
                    // larger indices are still at the previous round here
                    let mut v = g[a];
                    for e in 0..n {
                        if masks[e] != full {
                            v = v.min(g[a + (full - masks[e]) * stride[e]]);
                        }
                    }
                    g[a] = v;
                }
            }
            g
        });
        Ok(MaskTable { n, base, exact, relaxed })
    }

    fn lookup(&self, a: usize) -> u16 {
        self.relaxed.as_ref().unwrap_or(&self.exact)[a]
    }

    fn index(&self, masks: &[usize]) -> usize {
        masks.iter().rev().fold(0, |acc, &m| acc * self.base + m)
    }

    /// Class per example of a tree attaining `exact[masks]`.
    fn pick(&self, masks: &mut [usize]) -> Vec<usize> {
        loop {
            let Some(e) = (0..self.n).find(|&e| masks[e].count_ones() > 1) else {
                return masks.iter().map(|m| m.trailing_zeros() as usize).collect();
            };
            let target = self.exact[self.index(masks)];
            let low = masks[e] & masks[e].wrapping_neg();
            let old = masks[e];
            masks[e] = low;
            if self.exact[self.index(masks)] != target {
                masks[e] = old & !low;
            }
        }
    }

    /// Resolves the relaxed lookup at `masks` to exact masks.
    fn unrelax(&self, masks: &[usize], errors: usize) -> Vec<usize> {
        let target = self.lookup(self.index(masks));
        let full = self.base - 1;
        let mut chosen = Vec::new();
        fn go(
            t: &MaskTable,
            masks: &[usize],
            from: usize,
            left: usize,
            target: u16,
            full: usize,
            chosen: &mut Vec<usize>,
        ) -> bool {
            let mut m = masks.to_vec();
            for &e in chosen.iter() {
                m[e] = full;
            }
            if t.exact[t.index(&m)] == target {
                return true;
            }
            if left == 0 {
                return false;
            }
            for e in from..t.n {
                if masks[e] != full {
                    chosen.push(e);
                    if go(t, masks, e + 1, left - 1, target, full, chosen) {
                        return true;
                    }
                    chosen.pop();
                }
            }
            false
        }
        let found = go(self, masks, 0, errors, target, full, &mut chosen);
        assert!(found, "relaxed entry has an exact witness");
        let mut m = masks.to_vec();
        for e in chosen {
            m[e] = full;
        }
        m
    }
}

/// Classes `c` such that one more vote for `c` makes `label` win.
fn winning_votes(votes: &[u8], label: usize) -> usize {
    let mut mask = 0;
    let mut tally: Vec<u32> = votes.iter().map(|&v| v as u32).collect();
    for c in 0..votes.len() {
        tally[c] += 1;
        if plurality(&tally).0 == label {
            mask |= 1 << c;
        }
        tally[c] -= 1;
    }
    mask
}

type VoteState = Vec<u8>;

struct Level {
    states: Vec<(VoteState, u16, usize, usize)>,
}

/// Exact plurality for three or more classes. Trees are identified with
/// their behavior (class per example). All but the last tree are combined
/// into per-example vote vectors; the last tree is read from a mask table.
fn plurality_ensemble(
    table: &PartitionTable,
    inst: &Instance,
    trees: usize,
    errors: usize,
    within: &dyn Fn(u16) -> bool,
    limits: Limits,
) -> Result<Option<DpSolution>, DpError> {
    debug_assert!(trees >= 2, "the mask table is the second tree or later");
    let n = inst.len();
    let k = inst.classes();
    let mut behaviors: Vec<(u16, usize)> = table
        .full_assignments()
        .map(|(key, _)| (table.values[key], key))
        .filter(|&(v, _)| within(v))
        .collect();
    behaviors.sort();
    let classes_of =
        |key: usize| -> Vec<usize> { (0..n).map(|e| table.digit(key, e) - 1).collect() };
    let beh_classes: Vec<Vec<usize>> = behaviors.iter().map(|&(_, key)| classes_of(key)).collect();
    let masks = MaskTable::build(table, &behaviors, n, k, errors, limits)?;

    // levels 0 ..= trees - 2 of vote vectors
    let mut levels = vec![Level { states: vec![(vec![0u8; n * k], 0, usize::MAX, usize::MAX)] }];
    for _ in 1..trees.saturating_sub(1) {
        let prev = levels.last().expect("level");
        let mut index: FxHashMap<VoteState, usize> = FxHashMap::default();
        let mut states: Vec<(VoteState, u16, usize, usize)> = Vec::new();
        for (si, (votes, cost, _, _)) in prev.states.iter().enumerate() {
            for (bi, &(c, _)) in behaviors.iter().enumerate() {
                let mut v = votes.clone();
                for (e, &cl) in beh_classes[bi].iter().enumerate() {
                    v[e * k + cl] += 1;
                }
                let total = cost + c;
                match index.get(&v) {
                    Some(&i) if states[i].1 <= total => {}
                    Some(&i) => states[i] = (v, total, si, bi),
                    None => {
                        index.insert(v.clone(), states.len());
                        states.push((v, total, si, bi));
                    }
                }
            }
            limits.check("vote state level", states.len() as u128)?;
        }
        levels.push(Level { states });
    }

    let min_last = behaviors.first().map_or(INF, |b| b.0);
    let last = levels.last().expect("level");
    // With exactly one earlier tree, pairs are unordered.
    let symmetric = trees == 3;
    let mut best: Option<(u16, usize, usize, Vec<usize>)> = None;
    let mut allowed = vec![0usize; n];
    for (si, (votes, cost, _, bi_prev)) in last.states.iter().enumerate() {
        if best.as_ref().is_some_and(|b| cost.saturating_add(min_last) >= b.0) {
            continue;
        }
        for (bi, &(c, _)) in behaviors.iter().enumerate() {
            if symmetric && bi < *bi_prev {
                continue;
            }
            let base = cost + c;
            if best.as_ref().is_some_and(|b| base.saturating_add(min_last) >= b.0) {
                break;
            }
            let mut v = votes.clone();
            for (e, &cl) in beh_classes[bi].iter().enumerate() {
                v[e * k + cl] += 1;
            }
            for e in 0..n {
                allowed[e] = winning_votes(&v[e * k..(e + 1) * k], inst.label(e));
            }
            let tail = masks.lookup(masks.index(&allowed));
            if tail == INF {
                continue;
            }
            let total = base + tail;
            if best.as_ref().is_none_or(|b| total < b.0) {
                best = Some((total, si, bi, allowed.clone()));
            }
        }
    }
    let Some((_, si, bi, allowed)) = best else {
        return Ok(None);
    };

    let mut exact_masks = if errors > 0 { masks.unrelax(&allowed, errors) } else { allowed };
    let last_classes = masks.pick(&mut exact_masks);
    let mut keys = vec![table.full_key(&last_classes), behaviors[bi].1];
    let (mut level, mut s) = (levels.len() - 1, si);
    while level > 0 {
        let (_, _, prev, b) = levels[level].states[s];
        keys.push(behaviors[b].1);
        s = prev;
        level -= 1;
    }
    let models = keys.into_iter().map(|key| table.reconstruct(key).expect("finite")).collect();
    Ok(Some(certify(models, inst, errors, Semantics::Exact)))
}
