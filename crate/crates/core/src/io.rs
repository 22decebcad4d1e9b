// SPDX-License-Identifier: Apache-2.0

//! CSV training data and JSON model documents.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{canonical_thresholds, ClassId, DataError, TrainingSet};
use crate::tree::{Ensemble, ModelEnsemble, ModelTree, Node, Tree, TreeEnsemble, ValueCut};

pub const FORMAT: &str = "optiforest/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("no header row")]
    NoHeader,
    #[error("no data rows")]
    NoRows,
    #[error("label column {0:?} not found in the header")]
    NoLabelColumn(String),
    #[error("a label column and at least one feature column are required")]
    NoFeatures,
    #[error("line {line}, column {column:?}: cannot parse {value:?} as a number")]
    BadCell { line: u64, column: String, value: String },
    #[error("line {line}: expected {expected} cells, found {found}")]
    ShortRow { line: u64, expected: usize, found: usize },
    #[error("lines {first} and {second} have identical coordinates but different labels")]
    ConflictingRows { first: u64, second: u64 },
    #[error("class order does not contain label {label:?} (line {line})")]
    UnknownLabel { line: u64, label: String },
    #[error("{0}")]
    Data(DataError),
    #[error("invalid model document: {0}")]
    Model(String),
    #[error("invalid model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Feature names and a training set read from CSV.
#[derive(Clone, Debug)]
pub struct CsvData {
    pub features: Vec<String>,
    pub label: String,
    pub set: TrainingSet<Decimal>,
}

/// Reads a CSV file with a header row. The label column is `label_column`
/// or, without one, the last column. Every other column must hold numbers.
pub fn load_csv(
    path: &Path,
    label_column: Option<&str>,
    class_order: Option<Vec<String>>,
) -> Result<CsvData, IoError> {
    read_csv(File::open(path)?, label_column, class_order)
}

pub fn read_csv<R: Read>(
    reader: R,
    label_column: Option<&str>,
    class_order: Option<Vec<String>>,
) -> Result<CsvData, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(IoError::NoHeader),
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_owned()).collect();
    let label_idx = match label_column {
        Some(name) => names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| IoError::NoLabelColumn(name.to_owned()))?,
        None => names.len().checked_sub(1).ok_or(IoError::NoFeatures)?,
    };
    if names.len() < 2 {
        return Err(IoError::NoFeatures);
    }
    let features: Vec<String> =
        names.iter().enumerate().filter(|&(i, _)| i != label_idx).map(|(_, n)| n.clone()).collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut lines = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if rec.len() != names.len() {
            return Err(IoError::ShortRow { line, expected: names.len(), found: rec.len() });
        }
        let mut row = Vec::with_capacity(features.len());
        for (i, cell) in rec.iter().enumerate() {
            if i == label_idx {
                continue;
            }
            let cell = cell.trim();
            let v = Decimal::from_str(cell)
                .or_else(|_| Decimal::from_scientific(cell))
                .map_err(|_| IoError::BadCell {
                    line,
                    column: names[i].clone(),
                    value: cell.to_owned(),
                })?;
            row.push(v);
        }
        rows.push(row);
        labels.push(rec[label_idx].trim().to_owned());
        lines.push(line);
    }
    if rows.is_empty() {
        return Err(IoError::NoRows);
    }
    let set = TrainingSet::from_named(rows, &labels, class_order).map_err(|e| match e {
        DataError::ConflictingDuplicate { first, second } => {
            IoError::ConflictingRows { first: lines[first], second: lines[second] }
        }
        DataError::UnknownLabel { id, label } => IoError::UnknownLabel { line: lines[id], label },
        other => IoError::Data(other),
    })?;
    Ok(CsvData { features, label: names[label_idx].clone(), set })
}

/// Writes `set` with columns `x1, x2, ..` and `label`.
pub fn write_csv<W: Write>(set: &TrainingSet<Decimal>, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=set.dims()).map(|i| format!("x{i}")).collect();
    header.push("label".to_owned());
    w.write_record(&header)?;
    for ex in set.examples() {
        let mut rec: Vec<String> = ex.coords.iter().map(|v| v.normalize().to_string()).collect();
        rec.push(set.class_name(set.label(ex.id)).to_owned());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeDoc {
    Inner { dim: usize, threshold: String, le: Box<NodeDoc>, gt: Box<NodeDoc> },
    Leaf { class: String },
}

/// A serialized ensemble. A single tree is an ensemble of one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub classes: Vec<String>,
    pub trees: Vec<NodeDoc>,
}

/// A parsed model: the ensemble and its class order.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub classes: Vec<String>,
    pub ensemble: ModelEnsemble<Decimal>,
}

impl Model {
    /// Fills canonical threshold values of `set` into an index ensemble.
    pub fn from_indices(ens: &TreeEnsemble, set: &TrainingSet<Decimal>) -> Self {
        let thr = canonical_thresholds(set);
        let ensemble =
            ens.map_cuts(|c| ValueCut { dim: c.dim, threshold: thr.get(c.dim, c.thr).normalize() });
        Model { classes: set.classes().to_vec(), ensemble }
    }

    pub fn to_document(&self) -> ModelDocument {
        let trees = self.ensemble.trees().iter().map(|t| self.node_doc(t, 0)).collect();
        ModelDocument { format: FORMAT.to_owned(), classes: self.classes.clone(), trees }
    }

    fn node_doc(&self, t: &ModelTree<Decimal>, i: usize) -> NodeDoc {
        match &t.nodes()[i] {
            Node::Leaf { class } => NodeDoc::Leaf { class: self.classes[class.0].clone() },
            Node::Inner { cut, gt } => NodeDoc::Inner {
                dim: cut.dim,
                threshold: cut.threshold.normalize().to_string(),
                le: Box::new(self.node_doc(t, i + 1)),
                gt: Box::new(self.node_doc(t, *gt)),
            },
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self, IoError> {
        if doc.format != FORMAT {
            return Err(IoError::Model(format!("unsupported format {:?}", doc.format)));
        }
        if doc.classes.is_empty() {
            return Err(IoError::Model("empty class list".into()));
        }
        if doc.trees.is_empty() {
            return Err(IoError::Model("no trees".into()));
        }
        let trees = doc
            .trees
            .iter()
            .map(|n| tree_from_doc(n, &doc.classes))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Model { classes: doc.classes.clone(), ensemble: Ensemble::new(trees) })
    }

    /// Largest dimension index used by any cut, plus one.
    pub fn dims_used(&self) -> usize {
        self.ensemble
            .trees()
            .iter()
            .flat_map(|t| t.nodes())
            .filter_map(|n| match n {
                Node::Inner { cut, .. } => Some(cut.dim + 1),
                Node::Leaf { .. } => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("documents serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, IoError> {
        Model::from_document(&serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Model::from_json(&std::fs::read_to_string(path)?)
    }
}

fn tree_from_doc(node: &NodeDoc, classes: &[String]) -> Result<ModelTree<Decimal>, IoError> {
    match node {
        NodeDoc::Leaf { class } => {
            let c = classes
                .iter()
                .position(|n| n == class)
                .ok_or_else(|| IoError::Model(format!("unknown class {class:?}")))?;
            Ok(Tree::leaf(ClassId(c)))
        }
        NodeDoc::Inner { dim, threshold, le, gt } => {
            let t = Decimal::from_str(threshold)
                .map_err(|_| IoError::Model(format!("bad threshold {threshold:?}")))?;
            Ok(Tree::join(
                ValueCut { dim: *dim, threshold: t },
                tree_from_doc(le, classes)?,
                tree_from_doc(gt, classes)?,
            ))
        }
    }
}
