// SPDX-License-Identifier: Apache-2.0

//! Decision trees and ensembles.
//!
//! A tree is stored in pre-order: the root is node 0 and the `<=` child of an
//! inner node directly follows it. Two trees are therefore structurally equal
//! exactly when their node vectors are equal, which makes derived `Eq`/`Ord`
//! usable as canonical forms.

use crate::dataset::{ClassId, Instance};

/// A cut on a canonical threshold: examples with `rank[dim] <= thr` go left.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cut {
    pub dim: usize,
    pub thr: usize,
}

/// A cut on a raw threshold value.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueCut<T> {
    pub dim: usize,
    pub threshold: T,
}

/// Decides which side of a cut a point falls on.
pub trait Route<X: ?Sized> {
    fn goes_le(&self, x: &X) -> bool;
}

impl Route<[u16]> for Cut {
    fn goes_le(&self, x: &[u16]) -> bool {
        (x[self.dim] as usize) <= self.thr
    }
}

impl<T: PartialOrd> Route<[T]> for ValueCut<T> {
    fn goes_le(&self, x: &[T]) -> bool {
        x[self.dim] <= self.threshold
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node<C> {
    Leaf { class: ClassId },
    /// The `<=` child is the next node; `gt` is the index of the `>` child.
    Inner { cut: C, gt: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tree<C> {
    nodes: Vec<Node<C>>,
}

/// Tree over canonical threshold indices; what every solver produces.
pub type DecisionTree = Tree<Cut>;

/// Tree over raw threshold values; what model documents hold.
pub type ModelTree<T> = Tree<ValueCut<T>>;

impl<C> Tree<C> {
    pub fn leaf(class: ClassId) -> Self {
        Tree { nodes: vec![Node::Leaf { class }] }
    }

    pub fn join(cut: C, le: Tree<C>, gt: Tree<C>) -> Self {
        let le_len = le.nodes.len();
        let mut nodes = Vec::with_capacity(1 + le_len + gt.nodes.len());
        nodes.push(Node::Inner { cut, gt: 1 + le_len });
        nodes.extend(le.nodes.into_iter().map(|n| n.shifted(1)));
        nodes.extend(gt.nodes.into_iter().map(|n| n.shifted(1 + le_len)));
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node<C>] {
        &self.nodes
    }

    /// Number of inner nodes.
    pub fn size(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Inner { .. })).count()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.len() - self.size()
    }

    /// Leaf classes from left to right.
    pub fn leaf_classes(&self) -> Vec<ClassId> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { class } => Some(*class),
                Node::Inner { .. } => None,
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.depth_at(0)
    }

    fn depth_at(&self, i: usize) -> usize {
        match &self.nodes[i] {
            Node::Leaf { .. } => 0,
            Node::Inner { gt, .. } => 1 + self.depth_at(i + 1).max(self.depth_at(*gt)),
        }
    }

    /// Index of the leaf that `x` is routed to.
    pub fn leaf_of<X: ?Sized>(&self, x: &X) -> usize
    where
        C: Route<X>,
    {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Inner { cut, gt } => i = if cut.goes_le(x) { i + 1 } else { *gt },
            }
        }
    }

    pub fn classify<X: ?Sized>(&self, x: &X) -> ClassId
    where
        C: Route<X>,
    {
        match self.nodes[self.leaf_of(x)] {
            Node::Leaf { class } => class,
            Node::Inner { .. } => unreachable!(),
        }
    }

    pub fn map_cuts<D>(&self, mut f: impl FnMut(&C) -> D) -> Tree<D> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { class } => Node::Leaf { class: *class },
                Node::Inner { cut, gt } => Node::Inner { cut: f(cut), gt: *gt },
            })
            .collect();
        Tree { nodes }
    }

    /// Rebuilds the tree bottom-up through `leaf` and `inner` callbacks.
    pub fn fold<R>(
        &self,
        leaf: &mut impl FnMut(ClassId) -> R,
        inner: &mut impl FnMut(&C, R, R) -> R,
    ) -> R {
        self.fold_at(0, leaf, inner)
    }

    fn fold_at<R>(
        &self,
        i: usize,
        leaf: &mut impl FnMut(ClassId) -> R,
        inner: &mut impl FnMut(&C, R, R) -> R,
    ) -> R {
        match &self.nodes[i] {
            Node::Leaf { class } => leaf(*class),
            Node::Inner { cut, gt } => {
                let l = self.fold_at(i + 1, leaf, inner);
                let r = self.fold_at(*gt, leaf, inner);
                inner(cut, l, r)
            }
        }
    }
}

impl<C: Clone> Tree<C> {
    /// Same shape and cuts with the leaf classes replaced, left to right.
    pub fn with_leaf_classes(&self, classes: &[ClassId]) -> Self {
        let mut it = classes.iter();
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { .. } => Node::Leaf { class: *it.next().expect("one class per leaf") },
                inner => inner.clone(),
            })
            .collect();
        assert!(it.next().is_none(), "one class per leaf");
        Tree { nodes }
    }

    /// Subtree rooted at node `i`, re-indexed.
    pub fn subtree(&self, i: usize) -> Tree<C> {
        let end = self.subtree_end(i);
        let nodes = self.nodes[i..end].iter().cloned().map(|n| n.shifted_back(i)).collect();
        Tree { nodes }
    }

    fn subtree_end(&self, i: usize) -> usize {
        match &self.nodes[i] {
            Node::Leaf { .. } => i + 1,
            Node::Inner { gt, .. } => self.subtree_end(*gt),
        }
    }
}

impl<C> Node<C> {
    fn shifted(self, by: usize) -> Self {
        match self {
            Node::Inner { cut, gt } => Node::Inner { cut, gt: gt + by },
            leaf => leaf,
        }
    }

    fn shifted_back(self, by: usize) -> Self {
        match self {
            Node::Inner { cut, gt } => Node::Inner { cut, gt: gt - by },
            leaf => leaf,
        }
    }
}

/// Index of the winning class: most votes, ties to the lowest class id.
pub fn plurality(votes: &[u32]) -> ClassId {
    let mut best = 0;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    ClassId(best)
}

/// A non-empty list of trees voting by plurality.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ensemble<C> {
    trees: Vec<Tree<C>>,
}

pub type TreeEnsemble = Ensemble<Cut>;

pub type ModelEnsemble<T> = Ensemble<ValueCut<T>>;

impl<C> Ensemble<C> {
    pub fn new(trees: Vec<Tree<C>>) -> Self {
        assert!(!trees.is_empty(), "an ensemble has at least one tree");
        Ensemble { trees }
    }

    pub fn single(tree: Tree<C>) -> Self {
        Ensemble { trees: vec![tree] }
    }

    pub fn trees(&self) -> &[Tree<C>] {
        &self.trees
    }

    pub fn into_trees(self) -> Vec<Tree<C>> {
        self.trees
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Overall size: sum of member sizes.
    pub fn size(&self) -> usize {
        self.trees.iter().map(Tree::size).sum()
    }

    pub fn max_tree_size(&self) -> usize {
        self.trees.iter().map(Tree::size).max().unwrap_or(0)
    }

    pub fn classify<X: ?Sized>(&self, x: &X, classes: usize) -> ClassId
    where
        C: Route<X>,
    {
        let mut votes = vec![0u32; classes];
        for t in &self.trees {
            votes[t.classify(x).0] += 1;
        }
        plurality(&votes)
    }

    pub fn map_cuts<D>(&self, mut f: impl FnMut(&C) -> D) -> Ensemble<D> {
        Ensemble { trees: self.trees.iter().map(|t| t.map_cuts(&mut f)).collect() }
    }
}

impl<C: Ord + Clone> Ensemble<C> {
    /// Member trees sorted; equal for ensembles that are permutations of each
    /// other.
    pub fn canonical(&self) -> Self {
        let mut trees = self.trees.clone();
        trees.sort();
        Ensemble { trees }
    }
}

pub fn classify_tree(t: &DecisionTree, inst: &Instance, e: usize) -> ClassId {
    t.classify(inst.rank(e))
}

pub fn classify_ensemble(ens: &TreeEnsemble, inst: &Instance, e: usize) -> ClassId {
    ens.classify(inst.rank(e), inst.classes())
}

/// Misclassified examples in ascending id order.
pub fn dirty_examples(ens: &TreeEnsemble, inst: &Instance) -> Vec<usize> {
    (0..inst.len())
        .filter(|&e| classify_ensemble(ens, inst, e).0 != inst.label(e))
        .collect()
}

pub fn tree_errors(t: &DecisionTree, inst: &Instance) -> usize {
    (0..inst.len()).filter(|&e| classify_tree(t, inst, e).0 != inst.label(e)).count()
}
