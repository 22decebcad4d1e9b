// SPDX-License-Identifier: Apache-2.0

//! Exact minimum-size decision trees and tree ensembles.
//!
//! Two independent engines solve the same problems: a witness-tree
//! branch and bound ([`witness`]) and subset dynamic programming ([`dp`]).
//! [`oracle`] is a brute-force reference used by the tests, and
//! [`transforms`] compiles ensembles into single trees and generates the
//! parity instances on which ensembles are provably smaller.

pub mod dataset;
pub mod dp;
pub mod scalar;
pub mod tree;
pub mod witness;

pub use dataset::{ClassId, DataError, Instance, InstanceStats, ThresholdSet, TrainingSet};
pub use scalar::Scalar;
pub use tree::{Cut, DecisionTree, Ensemble, Tree, TreeEnsemble};

/// Exact decimal feature values, as read from CSV files.
pub type Exact = rust_decimal::Decimal;
pub type ExactTrainingSet = TrainingSet<Exact>;
pub type FloatTrainingSet = TrainingSet<f64>;
pub type ExactModel = tree::ModelEnsemble<Exact>;
pub mod transforms;
pub mod oracle;
pub mod io;
pub mod cli;
