// SPDX-License-Identifier: Apache-2.0

//! Ensemble compilation and the parity instances.

use num_rational::BigRational;
use num_traits::One;
use rust_decimal::Decimal;
use thiserror::Error;

use crate::dataset::{canonical_thresholds, ClassId, TrainingSet};
use crate::scalar::big;
use crate::tree::{plurality, Cut, Ensemble, ModelEnsemble, Node, Tree, TreeEnsemble, ValueCut};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParamError {
    #[error("{name} must be a positive odd number, got {value}")]
    NotOdd { name: &'static str, value: usize },
}

fn odd(name: &'static str, value: usize) -> Result<(), ParamError> {
    if value % 2 == 1 {
        Ok(())
    } else {
        Err(ParamError::NotOdd { name, value })
    }
}

/// A single tree voting exactly like `ens`: each tree is appended to every
/// leaf of the previous ones and the leaves take the plurality of the votes
/// on their path. The size is `prod(s_i + 1) - 1`.
pub fn ensemble_to_tree<C: Clone>(ens: &Ensemble<C>, classes: usize) -> Tree<C> {
    let mut votes = vec![0u32; classes];
    compile(ens.trees(), 0, 0, &mut votes)
}

fn compile<C: Clone>(trees: &[Tree<C>], t: usize, node: usize, votes: &mut [u32]) -> Tree<C> {
    if t == trees.len() {
        return Tree::leaf(plurality(votes));
    }
    match &trees[t].nodes()[node] {
        Node::Leaf { class } => {
            votes[class.0] += 1;
            let out = compile(trees, t + 1, 0, votes);
            votes[class.0] -= 1;
            out
        }
        Node::Inner { cut, gt } => Tree::join(
            cut.clone(),
            compile(trees, t, node + 1, votes),
            compile(trees, t, *gt, votes),
        ),
    }
}

/// Merges sibling leaves of the same class, bottom up. Never changes how any
/// point is classified.
pub fn simplify<C: Clone>(tree: &Tree<C>) -> Tree<C> {
    tree.fold(&mut Tree::leaf, &mut |cut, le: Tree<C>, gt: Tree<C>| {
        match (le.nodes(), gt.nodes()) {
            ([Node::Leaf { class: a }], [Node::Leaf { class: b }]) if a == b => Tree::leaf(*a),
            _ => Tree::join(cut.clone(), le, gt),
        }
    })
}

/// `(s+1)^trees - 1`: the size bound of a compiled ensemble of trees of size
/// at most `s`.
pub fn compiled_size_bound(trees: usize, s: usize) -> u128 {
    ((s as u128) + 1).pow(trees as u32) - 1
}

/// `(s+1)^l / (l * ((s+1)/2)^((l-1)/2)) - 1` for odd `l` and `s`: no single
/// tree smaller than this classifies the parity instance.
pub fn single_tree_lower_bound(trees: usize, s: usize) -> Result<BigRational, ParamError> {
    odd("trees", trees)?;
    odd("size", s)?;
    let s1 = big(s as u64 + 1);
    let half = big((s as u64).div_ceil(2));
    let num = num_traits::pow(s1, trees);
    let den = big(trees as u64) * num_traits::pow(half, (trees - 1) / 2);
    Ok(num / den - BigRational::one())
}

pub const BLUE: ClassId = ClassId(0);
pub const RED: ClassId = ClassId(1);

/// The parity instance over `[s+1]^trees` with its reference ensemble.
#[derive(Clone, Debug)]
pub struct ParityInstance {
    pub dataset: TrainingSet<Decimal>,
    /// One chain tree of size `s` per dimension, voting on the parity of
    /// that coordinate.
    pub reference: TreeEnsemble,
    pub lower_bound: BigRational,
}

impl ParityInstance {
    /// The reference ensemble with the canonical threshold values filled in.
    pub fn reference_model(&self) -> ModelEnsemble<Decimal> {
        let thr = canonical_thresholds(&self.dataset);
        self.reference.map_cuts(|c| ValueCut { dim: c.dim, threshold: *thr.get(c.dim, c.thr) })
    }
}

fn parity_class(v: usize) -> ClassId {
    if v % 2 == 0 {
        BLUE
    } else {
        RED
    }
}

/// Points `x` in `[s+1]^trees` whose counts of even and odd coordinates
/// differ by one; blue when the even ones are the majority.
pub fn generate_parity_instance(trees: usize, s: usize) -> Result<ParityInstance, ParamError> {
    let lower_bound = single_tree_lower_bound(trees, s)?;
    let mut rows = Vec::new();
    let mut names = Vec::new();
    let mut x = vec![1usize; trees];
    loop {
        let ev = x.iter().filter(|&&v| v % 2 == 0).count();
        let od = trees - ev;
        if ev.abs_diff(od) == 1 {
            rows.push(x.iter().map(|&v| Decimal::from(v as u64)).collect());
            names.push(if ev > od { "blue" } else { "red" });
        }
        let mut i = trees;
        loop {
            if i == 0 {
                let dataset = TrainingSet::from_named(rows, &names, None)
                    .expect("parity rows are consistent");
                let reference = Ensemble::new((0..trees).map(|i| chain(i, s)).collect());
                return Ok(ParityInstance { dataset, reference, lower_bound });
            }
            i -= 1;
            x[i] += 1;
            if x[i] <= s + 1 {
                break;
            }
            x[i] = 1;
        }
    }
}

/// `x[dim] <= 1.5`, `<= 2.5`, .. `<= s + 0.5` as a right-leaning chain whose
/// `<=` leaf at step `k` holds the class of value `k`.
fn chain(dim: usize, s: usize) -> Tree<Cut> {
    let mut t = Tree::leaf(parity_class(s + 1));
    for k in (1..=s).rev() {
        t = Tree::join(Cut { dim, thr: k - 1 }, Tree::leaf(parity_class(k)), t);
    }
    t
}
