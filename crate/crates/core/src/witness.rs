// SPDX-License-Identifier: Apache-2.0

//! Witness-tree branch and bound.
//!
//! Every leaf of every tree carries a witness example routed to it. The search
//! starts from single-leaf trees and repeatedly picks a misclassified
//! ("dirty") example, then branches over the ways of cutting it away from the
//! witness of its leaf in some tree that votes wrongly for it. Each branch
//! adds exactly one cut, so recursion depth is bounded by the size budget.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::dataset::{ClassId, Instance};
use crate::tree::{plurality, Cut, DecisionTree, Ensemble, Tree, TreeEnsemble};

#[derive(Clone, Debug, PartialEq, Eq)]
enum WNode {
    Leaf { class: usize, witness: usize },
    Inner { cut: Cut, le: usize, gt: usize },
}

/// A decision tree whose leaves each carry a witness example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessTree {
    nodes: Vec<WNode>,
    root: usize,
}

impl WitnessTree {
    pub fn trivial(class: ClassId, witness: usize) -> Self {
        WitnessTree { nodes: vec![WNode::Leaf { class: class.0, witness }], root: 0 }
    }

    pub fn size(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, WNode::Inner { .. })).count()
    }

    fn leaf_of(&self, x: &[u16]) -> usize {
        let mut i = self.root;
        loop {
            match self.nodes[i] {
                WNode::Leaf { .. } => return i,
                WNode::Inner { cut, le, gt } => {
                    i = if (x[cut.dim] as usize) <= cut.thr { le } else { gt }
                }
            }
        }
    }

    /// Node ids from the root down to the leaf of `x`.
    fn path_to(&self, x: &[u16]) -> Vec<usize> {
        let mut path = vec![self.root];
        let mut i = self.root;
        while let WNode::Inner { cut, le, gt } = self.nodes[i] {
            i = if (x[cut.dim] as usize) <= cut.thr { le } else { gt };
            path.push(i);
        }
        path
    }

    pub fn classify(&self, x: &[u16]) -> ClassId {
        match self.nodes[self.leaf_of(x)] {
            WNode::Leaf { class, .. } => ClassId(class),
            WNode::Inner { .. } => unreachable!(),
        }
    }

    /// `(leaf node id, witness)` for every leaf.
    fn leaves(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            WNode::Leaf { witness, .. } => Some((i, *witness)),
            WNode::Inner { .. } => None,
        })
    }

    pub fn witnesses(&self) -> Vec<usize> {
        self.leaves().map(|(_, w)| w).collect()
    }

    pub fn has_witness(&self, e: usize) -> bool {
        self.leaves().any(|(_, w)| w == e)
    }

    fn witnesses_under(&self, i: usize, out: &mut Vec<usize>) {
        match self.nodes[i] {
            WNode::Leaf { witness, .. } => out.push(witness),
            WNode::Inner { le, gt, .. } => {
                self.witnesses_under(le, out);
                self.witnesses_under(gt, out);
            }
        }
    }

    /// Every witness is routed to its own leaf.
    pub fn witnesses_in_place(&self, inst: &Instance) -> bool {
        self.leaves().all(|(leaf, w)| self.leaf_of(inst.rank(w)) == leaf)
    }

    pub fn to_tree(&self) -> DecisionTree {
        self.build(self.root)
    }

    fn build(&self, i: usize) -> DecisionTree {
        match self.nodes[i] {
            WNode::Leaf { class, .. } => Tree::leaf(ClassId(class)),
            WNode::Inner { cut, le, gt } => Tree::join(cut, self.build(le), self.build(gt)),
        }
    }
}

/// Where a refinement inserts its cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Position {
    /// A new root above the old one.
    Root,
    /// Subdivides the edge from `parent` to its `<=` (`le = true`) or `>` child.
    Edge { parent: usize, le: bool },
}

/// A one-step refinement that introduces a dirty example as a new witness.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub tree: WitnessTree,
    pub position: Position,
    pub cut: Cut,
    pub class: ClassId,
}

/// Enumerates the important one-step refinements of `wt` that introduce `e`
/// as the witness of a new leaf labeled with one of `classes`.
///
/// Candidates are generated by position (new root, then the edges of the
/// path to `e`'s leaf from the top down), then dimension, then threshold,
/// then class. Candidates that would move an existing witness out of its
/// leaf are skipped. `budget_left` is the number of cuts the caller can still
/// afford; with no budget nothing is returned.
pub fn important_refinements(
    wt: &WitnessTree,
    inst: &Instance,
    e: usize,
    classes: &[ClassId],
    budget_left: usize,
) -> Vec<Refinement> {
    let mut out = Vec::new();
    if budget_left == 0 {
        return out;
    }
    let er = inst.rank(e);
    let path = wt.path_to(er);
    let leaf = *path.last().expect("non-empty path");
    let x = match wt.nodes[leaf] {
        WNode::Leaf { witness, .. } => witness,
        WNode::Inner { .. } => unreachable!(),
    };
    let xr = inst.rank(x);

    let mut positions = vec![(Position::Root, wt.root)];
    for w in path.windows(2) {
        let le = matches!(wt.nodes[w[0]], WNode::Inner { le, .. } if le == w[1]);
        positions.push((Position::Edge { parent: w[0], le }, w[1]));
    }

    let mut wits = Vec::new();
    for (position, sub_root) in positions {
        wits.clear();
        wt.witnesses_under(sub_root, &mut wits);
        for dim in 0..inst.dims() {
            let (a, b) = (er[dim], xr[dim]);
            if a == b {
                continue;
            }
            let (lo, hi) = (a.min(b) as usize, a.max(b) as usize);
            for thr in lo..hi {
                let e_le = (er[dim] as usize) <= thr;
                let evicts = wits.iter().any(|&w| ((inst.rank(w)[dim] as usize) <= thr) == e_le);
                if evicts {
                    continue;
                }
                let cut = Cut { dim, thr };
                for &class in classes {
                    let tree = insert(wt, position, sub_root, cut, e_le, class, e);
                    debug_assert!(tree.witnesses_in_place(inst));
                    debug_assert_eq!(tree.classify(er), class);
                    out.push(Refinement { tree, position, cut, class });
                }
            }
        }
    }
    out
}

fn insert(
    wt: &WitnessTree,
    position: Position,
    sub_root: usize,
    cut: Cut,
    e_le: bool,
    class: ClassId,
    e: usize,
) -> WitnessTree {
    let mut nodes = wt.nodes.clone();
    let v = nodes.len();
    nodes.push(WNode::Leaf { class: class.0, witness: e });
    let u = nodes.len();
    let (le, gt) = if e_le { (v, sub_root) } else { (sub_root, v) };
    nodes.push(WNode::Inner { cut, le, gt });
    let mut root = wt.root;
    match position {
        Position::Root => root = u,
        Position::Edge { parent, le: on_le } => match &mut nodes[parent] {
            WNode::Inner { le, gt, .. } => {
                if on_le {
                    *le = u
                } else {
                    *gt = u
                }
            }
            WNode::Leaf { .. } => unreachable!(),
        },
    }
    WitnessTree { nodes, root }
}

/// Trees of the search state. Frozen trees are trivial trees fixed up front
/// and never refined.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessEnsemble {
    pub trees: Vec<WitnessTree>,
    frozen: Vec<bool>,
}

impl WitnessEnsemble {
    pub fn new(trees: Vec<WitnessTree>) -> Self {
        let frozen = vec![false; trees.len()];
        WitnessEnsemble { trees, frozen }
    }

    fn with_frozen(active: Vec<WitnessTree>, fixed: Vec<WitnessTree>) -> Self {
        let mut frozen = vec![false; active.len()];
        frozen.resize(active.len() + fixed.len(), true);
        let mut trees = active;
        trees.extend(fixed);
        WitnessEnsemble { trees, frozen }
    }

    pub fn size(&self) -> usize {
        self.trees.iter().map(WitnessTree::size).sum()
    }

    pub fn max_tree_size(&self) -> usize {
        self.trees.iter().map(WitnessTree::size).max().unwrap_or(0)
    }

    pub fn classify(&self, inst: &Instance, e: usize) -> ClassId {
        let mut votes = vec![0u32; inst.classes()];
        for t in &self.trees {
            votes[t.classify(inst.rank(e)).0] += 1;
        }
        plurality(&votes)
    }

    pub fn dirty(&self, inst: &Instance) -> Vec<usize> {
        (0..inst.len()).filter(|&e| self.classify(inst, e).0 != inst.label(e)).collect()
    }

    /// Plain ensemble in canonical (sorted) tree order.
    pub fn to_ensemble(&self) -> TreeEnsemble {
        let trees = self.trees.iter().map(WitnessTree::to_tree).collect();
        Ensemble::new(trees).canonical()
    }
}

/// The `|classes|^trees` single-leaf starting ensembles, all witnessed by the
/// lowest-id example, in odometer order (last tree varies fastest).
pub fn init_ensembles(inst: &Instance, trees: usize) -> Vec<WitnessEnsemble> {
    odometer(inst.classes(), trees)
        .into_iter()
        .map(|cls| {
            WitnessEnsemble::new(cls.into_iter().map(|c| WitnessTree::trivial(c, 0)).collect())
        })
        .collect()
}

fn odometer(classes: usize, len: usize) -> Vec<Vec<ClassId>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..classes).map(move |c| {
                    let mut v = prefix.clone();
                    v.push(ClassId(c));
                    v
                })
            })
            .collect();
    }
    out
}

/// Non-decreasing class sequences: one representative per permutation class.
fn multisets(classes: usize, len: usize) -> Vec<Vec<ClassId>> {
    odometer(classes, len).into_iter().filter(|v| v.windows(2).all(|w| w[0] <= w[1])).collect()
}

/// Weak compositions of `total` into `parts` parts, in odometer order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .rev()
        .flat_map(|first| {
            compositions(total - first, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Overall size at most `S`.
    TotalSize(usize),
    /// Every tree of size at most `s`.
    MaxTreeSize(usize),
}

impl Objective {
    pub fn bound(&self) -> usize {
        match *self {
            Objective::TotalSize(b) | Objective::MaxTreeSize(b) => b,
        }
    }

    fn with_bound(&self, b: usize) -> Self {
        match self {
            Objective::TotalSize(_) => Objective::TotalSize(b),
            Objective::MaxTreeSize(_) => Objective::MaxTreeSize(b),
        }
    }

    pub fn value(&self, ens: &TreeEnsemble) -> usize {
        match self {
            Objective::TotalSize(_) => ens.size(),
            Objective::MaxTreeSize(_) => ens.max_tree_size(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    FirstSolution,
    EnumerateAll,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveSpec {
    pub objective: Objective,
    pub trees: usize,
    pub errors: usize,
    pub mode: Mode,
}

/// Which class a newly introduced leaf may take.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relabel {
    /// The dirty example's own class only.
    TrueClass,
    /// Any class other than the wrong vote being replaced (true class first).
    /// Needed for plurality voting with three or more classes, where a wrong
    /// vote switching to another wrong class can decide a tie.
    AnyOtherClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Options {
    /// `None` picks `TrueClass` for two classes and `AnyOtherClass` above.
    pub relabel: Option<Relabel>,
    pub parallel: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { relabel: None, parallel: true }
    }
}

impl Options {
    pub fn sequential() -> Self {
        Options { parallel: false, ..Options::default() }
    }

    fn relabel_for(&self, inst: &Instance) -> Relabel {
        self.relabel.unwrap_or(if inst.classes() > 2 {
            Relabel::AnyOtherClass
        } else {
            Relabel::TrueClass
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: u64,
    pub max_children: usize,
    pub emitted: u64,
}

impl SearchStats {
    fn merge(&mut self, other: &SearchStats) {
        self.nodes += other.nodes;
        self.max_children = self.max_children.max(other.max_children);
        self.emitted += other.emitted;
    }
}

/// Receives solutions; returning `false` stops the search.
pub trait SolutionSink {
    fn emit(&mut self, ens: &WitnessEnsemble) -> bool;
}

/// Collects canonical solutions, stopping after the first in
/// `FirstSolution` mode.
#[derive(Debug, Default)]
pub struct Collector {
    pub first_only: bool,
    pub solutions: BTreeSet<TreeEnsemble>,
    pub first: Option<TreeEnsemble>,
}

impl SolutionSink for Collector {
    fn emit(&mut self, ens: &WitnessEnsemble) -> bool {
        let e = ens.to_ensemble();
        if self.first.is_none() {
            self.first = Some(e.clone());
        }
        self.solutions.insert(e);
        !self.first_only
    }
}

struct Search<'a> {
    inst: &'a Instance,
    spec: SolveSpec,
    relabel: Relabel,
    cancel: &'a (dyn Fn() -> bool + Sync),
    stats: SearchStats,
}

impl Search<'_> {
    /// Returns `false` once the sink asked to stop or the search was cancelled.
    fn refine(&mut self, c: &mut WitnessEnsemble, sink: &mut dyn SolutionSink) -> bool {
        self.stats.nodes += 1;
        if (self.cancel)() {
            return false;
        }
        let size = c.size();
        match self.spec.objective {
            Objective::TotalSize(s) if size > s => return true,
            Objective::MaxTreeSize(s) if c.max_tree_size() > s => return true,
            _ => {}
        }
        let dirty = c.dirty(self.inst);
        if dirty.len() <= self.spec.errors {
            self.stats.emitted += 1;
            return sink.emit(c);
        }
        if let Objective::TotalSize(s) = self.spec.objective {
            if size == s {
                return true;
            }
        }

        let mut children = 0;
        for &e in &dirty[..self.spec.errors + 1] {
            let label = self.inst.label(e);
            for ti in 0..c.trees.len() {
                if c.frozen[ti] {
                    continue;
                }
                let tree = &c.trees[ti];
                let vote = tree.classify(self.inst.rank(e));
                if vote.0 == label || tree.has_witness(e) {
                    continue;
                }
                // Refining either of two identical trees yields the same ensembles.
                if (0..ti).any(|tj| !c.frozen[tj] && c.trees[tj] == *tree) {
                    continue;
                }
                let budget = match self.spec.objective {
                    Objective::TotalSize(s) => s - size,
                    Objective::MaxTreeSize(s) => s.saturating_sub(tree.size()),
                };
                let classes: Vec<ClassId> = match self.relabel {
                    Relabel::TrueClass => vec![ClassId(label)],
                    Relabel::AnyOtherClass => std::iter::once(label)
                        .chain((0..self.inst.classes()).filter(|&k| k != label && k != vote.0))
                        .map(ClassId)
                        .collect(),
                };
                let refinements = important_refinements(tree, self.inst, e, &classes, budget);
                if refinements.is_empty() {
                    continue;
                }
                children += refinements.len();
                let original = std::mem::replace(&mut c.trees[ti], refinements[0].tree.clone());
                let mut keep_going = true;
                for r in refinements {
                    c.trees[ti] = r.tree;
                    if !self.refine(c, sink) {
                        keep_going = false;
                        break;
                    }
                }
                c.trees[ti] = original;
                if !keep_going {
                    return false;
                }
            }
        }
        self.stats.max_children = self.stats.max_children.max(children);
        true
    }
}

/// Runs the recursive refinement from `c` with no cancellation.
pub fn refine_ensemble(
    c: &WitnessEnsemble,
    inst: &Instance,
    spec: SolveSpec,
    relabel: Relabel,
    sink: &mut dyn SolutionSink,
) -> SearchStats {
    let never = || false;
    let mut search = Search { inst, spec, relabel, cancel: &never, stats: SearchStats::default() };
    let mut state = c.clone();
    search.refine(&mut state, sink);
    search.stats
}

/// Starting states for one decision call. In the total-size problem with more
/// trees than cuts, at least `trees - S` trees are trivial; their classes are
/// fixed up front and only `S` trees are searched.
fn starts(inst: &Instance, spec: &SolveSpec) -> Vec<WitnessEnsemble> {
    let k = inst.classes();
    let (active, fixed): (usize, Vec<Vec<ClassId>>) = match spec.objective {
        Objective::TotalSize(s) if spec.trees > s => {
            let fixed = compositions(spec.trees - s, k)
                .into_iter()
                .map(|counts| {
                    counts
                        .iter()
                        .enumerate()
                        .flat_map(|(c, &m)| std::iter::repeat_n(ClassId(c), m))
                        .collect()
                })
                .collect();
            (s, fixed)
        }
        _ => (spec.trees, vec![Vec::new()]),
    };
    let mut out = Vec::new();
    for f in &fixed {
        for cls in multisets(k, active) {
            let act = cls.into_iter().map(|c| WitnessTree::trivial(c, 0)).collect();
            let fro = f.iter().map(|&c| WitnessTree::trivial(c, 0)).collect();
            out.push(WitnessEnsemble::with_frozen(act, fro));
        }
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct DecisionOutcome {
    pub solutions: BTreeSet<TreeEnsemble>,
    pub first: Option<TreeEnsemble>,
    pub stats: SearchStats,
}

/// Decides `spec` at its stated bound.
pub fn decide(inst: &Instance, spec: SolveSpec, opts: Options) -> DecisionOutcome {
    assert!(spec.trees >= 1, "at least one tree");
    let relabel = opts.relabel_for(inst);
    let starts = starts(inst, &spec);
    let first_only = spec.mode == Mode::FirstSolution;
    let best = AtomicUsize::new(usize::MAX);

    let run = |(idx, start): (usize, &WitnessEnsemble)| {
        let mut sink = Collector { first_only, ..Collector::default() };
        if first_only && best.load(Ordering::Relaxed) < idx {
            return (sink, SearchStats::default());
        }
        let cancel = || first_only && best.load(Ordering::Relaxed) < idx;
        let mut search =
            Search { inst, spec, relabel, cancel: &cancel, stats: SearchStats::default() };
        let mut state = start.clone();
        search.refine(&mut state, &mut sink);
        if sink.first.is_some() {
            best.fetch_min(idx, Ordering::Relaxed);
        }
        (sink, search.stats)
    };

    let results: Vec<(Collector, SearchStats)> = if opts.parallel {
        starts.par_iter().enumerate().map(run).collect()
    } else {
        let mut out = Vec::new();
        for (idx, s) in starts.iter().enumerate() {
            let r = run((idx, s));
            let done = first_only && r.0.first.is_some();
            out.push(r);
            if done {
                break;
            }
        }
        out
    };

    let mut outcome = DecisionOutcome::default();
    for (sink, stats) in results {
        outcome.stats.merge(&stats);
        if outcome.first.is_none() {
            outcome.first = sink.first;
        }
        if !first_only {
            outcome.solutions.extend(sink.solutions);
        }
    }
    if first_only {
        outcome.solutions.extend(outcome.first.clone());
    }
    outcome
}

/// An optimal objective value with one or all optimal ensembles.
#[derive(Clone, Debug)]
pub struct Solution {
    pub objective: usize,
    pub ensembles: Vec<TreeEnsemble>,
    pub stats: SearchStats,
}

/// Repeats the decision procedure for bounds `0, 1, ..` up to the bound in
/// `spec` and returns the first feasible one.
pub fn optimize(inst: &Instance, spec: SolveSpec, opts: Options) -> Option<Solution> {
    let mut stats = SearchStats::default();
    for b in 0..=spec.objective.bound() {
        let at = SolveSpec { objective: spec.objective.with_bound(b), ..spec };
        let out = decide(inst, at, opts);
        stats.merge(&out.stats);
        if out.first.is_some() {
            let ensembles = match spec.mode {
                Mode::FirstSolution => out.first.into_iter().collect(),
                Mode::EnumerateAll => out.solutions.into_iter().collect(),
            };
            return Some(Solution { objective: b, ensembles, stats });
        }
    }
    None
}

/// Minimum overall size of `trees` trees with at most `errors` misclassified
/// examples, searching bounds up to `max_total`.
pub fn solve_mtes(
    inst: &Instance,
    trees: usize,
    max_total: usize,
    errors: usize,
    mode: Mode,
    opts: Options,
) -> Option<Solution> {
    let spec = SolveSpec { objective: Objective::TotalSize(max_total), trees, errors, mode };
    optimize(inst, spec, opts)
}

/// Minimum largest-tree size of `trees` trees.
pub fn solve_mmax(
    inst: &Instance,
    trees: usize,
    max_tree: usize,
    errors: usize,
    mode: Mode,
    opts: Options,
) -> Option<Solution> {
    let spec = SolveSpec { objective: Objective::MaxTreeSize(max_tree), trees, errors, mode };
    optimize(inst, spec, opts)
}

/// Minimum-size single tree. Without a bound, `distinct points - 1` cuts are
/// always enough.
pub fn solve_dts(
    inst: &Instance,
    max_size: Option<usize>,
    errors: usize,
    mode: Mode,
    opts: Options,
) -> Option<Solution> {
    let bound = max_size.unwrap_or(inst.distinct_points().saturating_sub(1));
    solve_mmax(inst, 1, bound, errors, mode, opts)
}

/// All optimal ensembles for `spec` (its mode is ignored).
pub fn enumerate_solutions(
    inst: &Instance,
    spec: SolveSpec,
    opts: Options,
) -> Option<Solution> {
    optimize(inst, SolveSpec { mode: Mode::EnumerateAll, ..spec }, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{dirty_examples, Node};

    fn two_points() -> Instance {
        Instance::from_points(&[vec![0], vec![1]], &[0, 1], 2)
    }

    #[test]
    fn forced_single_cut() {
        let inst = two_points();
        let wt = WitnessTree::trivial(ClassId(0), 0);
        let rs = important_refinements(&wt, &inst, 1, &[ClassId(1)], 1);
        assert_eq!(rs.len(), 1);
        let r = &rs[0];
        assert_eq!(r.position, Position::Root);
        assert_eq!(r.cut, Cut { dim: 0, thr: 0 });
        let t = r.tree.to_tree();
        assert_eq!(t.size(), 1);
        assert_eq!(t.leaf_classes(), vec![ClassId(0), ClassId(1)]);
        assert_eq!(r.tree.witnesses(), vec![0, 1]);
        assert!(important_refinements(&wt, &inst, 1, &[ClassId(1)], 0).is_empty());
    }

    #[test]
    fn eviction_filtered() {
        // points 0,1,2 in one dim; tree cuts at thr 1 with witnesses 0 (<=) and 2 (>)
        let inst = Instance::from_points(&[vec![0], vec![1], vec![2]], &[0, 1, 0], 2);
        let wt = WitnessTree::trivial(ClassId(0), 0);
        let first = important_refinements(&wt, &inst, 2, &[ClassId(1)], 5);
        // witness 0 vs e=2: thresholds 0 and 1
        assert_eq!(first.len(), 2);
        let wt = first[1].tree.clone(); // cut thr 1: {0,1} | {2}
        assert_eq!(wt.to_tree().nodes()[0], Node::Inner { cut: Cut { dim: 0, thr: 1 }, gt: 2 });
        // e=1 sits in witness 0's leaf; root insertion with thr 0 would send 1 right-of
        // 0 together with witness 2? e=1 > 0 goes with 2 at the root: eviction.
        let rs = important_refinements(&wt, &inst, 1, &[ClassId(1)], 5);
        assert!(rs.iter().all(|r| r.position != Position::Root));
        assert_eq!(rs.len(), 1);
        assert!(rs[0].tree.witnesses_in_place(&inst));
    }

    #[test]
    fn init_counts() {
        let bin = two_points();
        assert_eq!(init_ensembles(&bin, 1).len(), 2);
        assert_eq!(init_ensembles(&bin, 3).len(), 8);
        let three = Instance::from_points(&[vec![0], vec![1], vec![2]], &[0, 1, 2], 3);
        let inits = init_ensembles(&three, 2);
        assert_eq!(inits.len(), 9);
        assert!(inits.iter().all(|c| c.trees.iter().all(|t| t.witnesses() == vec![0])));
        assert_eq!(inits[1].trees[1].classify(&[0]), ClassId(1));
    }

    #[test]
    fn compositions_cover_all() {
        assert_eq!(compositions(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(compositions(2, 3).len(), 6);
        assert_eq!(multisets(2, 3).len(), 4);
    }

    #[test]
    fn emits_already_classifying() {
        let inst = Instance::from_points(&[vec![0], vec![1]], &[0, 0], 2);
        let spec = SolveSpec {
            objective: Objective::TotalSize(0),
            trees: 1,
            errors: 0,
            mode: Mode::FirstSolution,
        };
        let c = WitnessEnsemble::new(vec![WitnessTree::trivial(ClassId(0), 0)]);
        let mut sink = Collector { first_only: true, ..Default::default() };
        refine_ensemble(&c, &inst, spec, Relabel::TrueClass, &mut sink);
        assert_eq!(sink.first.unwrap().size(), 0);
    }

    #[test]
    fn exhausted_budget_prunes() {
        let inst = two_points();
        let spec = SolveSpec {
            objective: Objective::TotalSize(0),
            trees: 1,
            errors: 0,
            mode: Mode::FirstSolution,
        };
        let c = WitnessEnsemble::new(vec![WitnessTree::trivial(ClassId(0), 0)]);
        let mut sink = Collector::default();
        let stats = refine_ensemble(&c, &inst, spec, Relabel::TrueClass, &mut sink);
        assert!(sink.first.is_none());
        assert_eq!(stats.nodes, 1);
    }

    #[test]
    fn two_points_one_cut() {
        let inst = two_points();
        let sol = solve_dts(&inst, None, 0, Mode::EnumerateAll, Options::sequential()).unwrap();
        assert_eq!(sol.objective, 1);
        assert_eq!(sol.ensembles.len(), 1);
        assert!(dirty_examples(&sol.ensembles[0], &inst).is_empty());
    }

    #[test]
    fn single_class_needs_no_cut() {
        let inst = Instance::from_points(&[vec![0], vec![1], vec![2]], &[0, 0, 0], 2);
        let sol = solve_dts(&inst, None, 0, Mode::EnumerateAll, Options::default()).unwrap();
        assert_eq!(sol.objective, 0);
        assert_eq!(sol.ensembles.len(), 1);
        assert_eq!(sol.ensembles[0].trees()[0], DecisionTree::leaf(ClassId(0)));
    }

    #[test]
    fn more_trees_than_cuts() {
        let inst = two_points();
        let sol = solve_mtes(&inst, 3, 1, 0, Mode::FirstSolution, Options::default()).unwrap();
        assert_eq!(sol.objective, 1);
        let ens = &sol.ensembles[0];
        assert_eq!(ens.len(), 3);
        assert!(dirty_examples(ens, &inst).is_empty());
    }

    #[test]
    fn budget_errors_allow_smaller() {
        let inst = Instance::from_points(&[vec![0], vec![1], vec![2]], &[0, 1, 0], 2);
        let exact = solve_dts(&inst, None, 0, Mode::FirstSolution, Options::default()).unwrap();
        assert_eq!(exact.objective, 2);
        let one = solve_dts(&inst, None, 1, Mode::FirstSolution, Options::default()).unwrap();
        assert_eq!(one.objective, 0);
    }

    #[test]
    fn parallel_matches_sequential() {
        let inst = Instance::from_points(
            &[vec![0, 0], vec![1, 1], vec![0, 1], vec![1, 0], vec![2, 2]],
            &[0, 0, 1, 1, 1],
            2,
        );
        let a = solve_mtes(&inst, 3, 6, 0, Mode::FirstSolution, Options::sequential()).unwrap();
        let b = solve_mtes(&inst, 3, 6, 0, Mode::FirstSolution, Options::default()).unwrap();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.ensembles, b.ensembles);
    }
}
