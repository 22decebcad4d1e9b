// SPDX-License-Identifier: Apache-2.0

//! Training data, canonical thresholds and the rank-encoded instance view
//! shared by every solver.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::scalar::{cmp, Scalar};

/// Index into the class order of a training set. Lower ids win vote ties.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(pub usize);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DataError {
    #[error("training set has no examples")]
    Empty,
    #[error("class list is empty")]
    NoClasses,
    #[error("class {0:?} listed twice")]
    DuplicateClass(String),
    #[error("example {id} has label {label:?} which is not in the class list")]
    UnknownLabel { id: usize, label: String },
    #[error("example {id} has {found} coordinates, expected {expected}")]
    DimensionMismatch { id: usize, expected: usize, found: usize },
    #[error("example {id} has a non-finite value in dimension {dim}")]
    NonFinite { id: usize, dim: usize },
    #[error("examples {first} and {second} have identical coordinates but different labels")]
    ConflictingDuplicate { first: usize, second: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example<T> {
    pub id: usize,
    pub coords: Vec<T>,
}

/// Labeled examples together with the tie-break order of the classes.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet<T> {
    examples: Vec<Example<T>>,
    labels: Vec<ClassId>,
    classes: Vec<String>,
    dims: usize,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(
        rows: Vec<Vec<T>>,
        labels: Vec<ClassId>,
        classes: Vec<String>,
    ) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::Empty);
        }
        if classes.is_empty() {
            return Err(DataError::NoClasses);
        }
        let mut seen = std::collections::HashSet::new();
        for c in &classes {
            if !seen.insert(c.as_str()) {
                return Err(DataError::DuplicateClass(c.clone()));
            }
        }
        assert_eq!(rows.len(), labels.len(), "one label per row");
        let dims = rows[0].len();
        for (id, (row, label)) in rows.iter().zip(&labels).enumerate() {
            if row.len() != dims {
                return Err(DataError::DimensionMismatch { id, expected: dims, found: row.len() });
            }
            if let Some(dim) = row.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { id, dim });
            }
            if label.0 >= classes.len() {
                return Err(DataError::UnknownLabel { id, label: label.0.to_string() });
            }
        }

        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| lex(&rows[a], &rows[b]).then(a.cmp(&b)));
        let mut conflict: Option<(usize, usize)> = None;
        for group in order.chunk_by(|&a, &b| lex(&rows[a], &rows[b]) == Ordering::Equal) {
            let first = group[0];
            if let Some(&other) = group.iter().find(|&&i| labels[i] != labels[first]) {
                if conflict.is_none_or(|c| (first, other) < c) {
                    conflict = Some((first, other));
                }
            }
        }
        if let Some((first, second)) = conflict {
            return Err(DataError::ConflictingDuplicate { first, second });
        }

        let examples = rows
            .into_iter()
            .enumerate()
            .map(|(id, coords)| Example { id, coords })
            .collect();
        Ok(TrainingSet { examples, labels, classes, dims })
    }

    /// Builds a training set from class names. Without an explicit order the
    /// classes are sorted lexicographically.
    pub fn from_named<S: AsRef<str>>(
        rows: Vec<Vec<T>>,
        names: &[S],
        class_order: Option<Vec<String>>,
    ) -> Result<Self, DataError> {
        let classes = match class_order {
            Some(order) => order,
            None => {
                let mut cs: Vec<String> = names.iter().map(|s| s.as_ref().to_owned()).collect();
                cs.sort();
                cs.dedup();
                cs
            }
        };
        if classes.is_empty() {
            return Err(DataError::NoClasses);
        }
        let mut labels = Vec::with_capacity(names.len());
        for (id, name) in names.iter().enumerate() {
            match classes.iter().position(|c| c == name.as_ref()) {
                Some(c) => labels.push(ClassId(c)),
                None => {
                    return Err(DataError::UnknownLabel { id, label: name.as_ref().to_owned() })
                }
            }
        }
        Self::new(rows, labels, classes)
    }
}

impl<T> TrainingSet<T> {
    pub fn examples(&self) -> &[Example<T>] {
        &self.examples
    }

    pub fn label(&self, id: usize) -> ClassId {
        self.labels[id]
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_name(&self, c: ClassId) -> &str {
        &self.classes[c.0]
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }
}

fn lex<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| cmp(x, y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Per-dimension canonical thresholds: midpoints between consecutive distinct
/// values. Threshold `h` of a dimension separates rank `h` from rank `h + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSet<T> {
    dims: Vec<Vec<T>>,
}

impl<T> ThresholdSet<T> {
    pub fn dim(&self, dim: usize) -> &[T] {
        &self.dims[dim]
    }

    pub fn get(&self, dim: usize, idx: usize) -> &T {
        &self.dims[dim][idx]
    }

    pub fn dim_count(&self) -> usize {
        self.dims.len()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().map(Vec::len).sum()
    }
}

fn distinct_values<T: Scalar>(ts: &TrainingSet<T>, dim: usize) -> Vec<T> {
    let mut vals: Vec<T> = ts.examples.iter().map(|e| e.coords[dim].clone()).collect();
    vals.sort_by(cmp);
    vals.dedup_by(|a, b| cmp(a, b) == Ordering::Equal);
    vals
}

pub fn canonical_thresholds<T: Scalar>(ts: &TrainingSet<T>) -> ThresholdSet<T> {
    let dims = (0..ts.dims)
        .map(|i| {
            let vals = distinct_values(ts, i);
            vals.windows(2).map(|w| w[0].midpoint(&w[1])).collect()
        })
        .collect();
    ThresholdSet { dims }
}

/// Splits `subset` (example ids) into `x[dim] <= h` and `x[dim] > h`.
pub fn split<T: Scalar>(
    ts: &TrainingSet<T>,
    subset: &[usize],
    dim: usize,
    h: &T,
) -> (Vec<usize>, Vec<usize>) {
    subset.iter().partition(|&&id| ts.examples[id].coords[dim] <= *h)
}

/// Instance parameters used in the running-time bounds of the solvers.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct InstanceStats {
    pub n: usize,
    pub d: usize,
    /// Largest number of distinct values in any dimension.
    pub max_domain: usize,
    /// Largest number of dimensions in which two differently labeled examples
    /// differ; 0 when all examples share a class.
    pub delta: usize,
    /// Same, over all pairs regardless of label.
    pub delta_all: usize,
}

/// Rank-encoded view of a training set: `rank[e][i]` is the position of
/// example `e`'s value among the distinct values of dimension `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    ranks: Vec<Vec<u16>>,
    labels: Vec<usize>,
    classes: usize,
    thresholds: Vec<usize>,
}

impl Instance {
    pub fn new<T: Scalar>(ts: &TrainingSet<T>) -> Self {
        let mut ranks = vec![vec![0u16; ts.dims]; ts.len()];
        let mut thresholds = Vec::with_capacity(ts.dims);
        for i in 0..ts.dims {
            let vals = distinct_values(ts, i);
            assert!(vals.len() <= u16::MAX as usize, "too many distinct values");
            for (e, ex) in ts.examples.iter().enumerate() {
                let r = vals
                    .binary_search_by(|v| cmp(v, &ex.coords[i]))
                    .expect("value present");
                ranks[e][i] = r as u16;
            }
            thresholds.push(vals.len() - 1);
        }
        let labels = ts.labels.iter().map(|c| c.0).collect();
        Instance { ranks, labels, classes: ts.classes.len(), thresholds }
    }

    /// Convenience constructor from integer points; values are rank-compressed
    /// per dimension. Panics on malformed input.
    pub fn from_points(points: &[Vec<u16>], labels: &[usize], classes: usize) -> Self {
        assert!(!points.is_empty() && points.len() == labels.len());
        let rows = points
            .iter()
            .map(|p| p.iter().map(|&v| v as f64).collect())
            .collect();
        let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
        let ids = labels.iter().map(|&l| ClassId(l)).collect();
        let ts = TrainingSet::<f64>::new(rows, ids, names).expect("consistent points");
        Instance::new(&ts)
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.thresholds.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn rank(&self, e: usize) -> &[u16] {
        &self.ranks[e]
    }

    pub fn label(&self, e: usize) -> usize {
        self.labels[e]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `|Thr(dim)|`.
    pub fn threshold_count(&self, dim: usize) -> usize {
        self.thresholds[dim]
    }

    /// Number of distinct coordinate vectors.
    pub fn distinct_points(&self) -> usize {
        let mut pts: Vec<&Vec<u16>> = self.ranks.iter().collect();
        pts.sort();
        pts.dedup();
        pts.len()
    }

    pub fn stats(&self) -> InstanceStats {
        let mut delta = 0;
        let mut delta_all = 0;
        for a in 0..self.len() {
            for b in a + 1..self.len() {
                let diff = self.ranks[a]
                    .iter()
                    .zip(&self.ranks[b])
                    .filter(|(x, y)| x != y)
                    .count();
                delta_all = delta_all.max(diff);
                if self.labels[a] != self.labels[b] {
                    delta = delta.max(diff);
                }
            }
        }
        InstanceStats {
            n: self.len(),
            d: self.dims(),
            max_domain: self.thresholds.iter().map(|t| t + 1).max().unwrap_or(1),
            delta,
            delta_all,
        }
    }
}

impl<T: Scalar> From<&TrainingSet<T>> for Instance {
    fn from(ts: &TrainingSet<T>) -> Self {
        Instance::new(ts)
    }
}

pub fn instance_stats<T: Scalar>(ts: &TrainingSet<T>) -> InstanceStats {
    Instance::new(ts).stats()
}
