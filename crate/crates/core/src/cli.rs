// SPDX-License-Identifier: Apache-2.0

//! Command-line front end.
//!
//! Models go to stdout, a single JSON report object goes to stderr. Exit
//! codes: 0 solved, 1 usage or input error, 2 infeasible, 3 resource
//! refusal, 4 `check` found misclassified examples.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::dataset::{canonical_thresholds, Instance};
use crate::dp::{self, DpError, DpOptions, Limits, MultiClassMode, Semantics};
use crate::io::{self, CsvData, IoError, Model};
use crate::oracle::{self, Budget, OracleError};
use crate::transforms;
use crate::tree::{Ensemble, TreeEnsemble};
use crate::witness::{self, Mode, Objective, Options, Relabel, SolveSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_REFUSED: i32 = 3;
pub const EXIT_CHECK_ERRORS: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "optiforest", version, about = "Exact minimum-size decision trees and ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a smallest decision tree.
    FitTree {
        #[command(flatten)]
        data: DataArgs,
        /// Largest admissible size.
        #[arg(long)]
        max_size: Option<usize>,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Fit a smallest ensemble of voting trees.
    FitEnsemble {
        #[command(flatten)]
        data: DataArgs,
        /// Number of trees.
        #[arg(long)]
        trees: usize,
        /// Bound on the sum of tree sizes; minimizes that sum.
        #[arg(long, conflicts_with = "max_tree_size", required_unless_present = "max_tree_size")]
        total_size: Option<usize>,
        /// Bound on every tree's size; minimizes the largest tree.
        #[arg(long)]
        max_tree_size: Option<usize>,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Count the training examples a model misclassifies.
    Check {
        #[command(flatten)]
        data: DataArgs,
        model: PathBuf,
    },
    /// Compile an ensemble into one equivalent tree.
    Convert {
        model: PathBuf,
        /// Merge same-class sibling leaves afterwards.
        #[arg(long)]
        simplify: bool,
    },
    /// Generate instances.
    #[command(subcommand)]
    Generate(Generate),
    /// Instance parameters and predicted table sizes.
    Stats {
        #[command(flatten)]
        data: DataArgs,
        /// Tree count for the ensemble table prediction.
        #[arg(long, default_value_t = 3)]
        trees: usize,
    },
}

#[derive(Subcommand, Debug)]
enum Generate {
    /// Parity instance on which an ensemble of small trees beats every tree.
    Parity {
        #[arg(long)]
        trees: usize,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    csv: PathBuf,
    /// Label column name (default: the last column).
    #[arg(long)]
    label_column: Option<String>,
    /// Comma-separated class order; earlier classes win vote ties.
    #[arg(long, value_delimiter = ',')]
    class_order: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Number of misclassified examples allowed.
    #[arg(long, default_value_t = 0)]
    errors: usize,
    #[arg(long, value_enum, default_value_t = Engine::Auto)]
    engine: Engine,
    /// Output every optimal model.
    #[arg(long)]
    enumerate: bool,
    /// Output at most this many models in enumerate mode.
    #[arg(long)]
    limit: Option<usize>,
    /// Worker threads for the search (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Largest table the dynamic program may allocate.
    #[arg(long, default_value_t = 1 << 26)]
    max_table_entries: u128,
    /// Step budget of the brute-force engine.
    #[arg(long, default_value_t = 50_000_000)]
    oracle_budget: u128,
    /// Ensemble vote model of the dynamic program for three or more classes.
    #[arg(long, value_enum, default_value_t = VoteModel::Plurality)]
    vote_model: VoteModel,
    /// Classes a new leaf may take in the witness search.
    #[arg(long, value_enum)]
    relabel: Option<RelabelArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Engine {
    Auto,
    Witness,
    Dp,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VoteModel {
    Plurality,
    AbsoluteMajority,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RelabelArg {
    TrueClass,
    AnyOtherClass,
}

/// A failed command: exit code and message.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    fn infeasible() -> Self {
        Failure { code: EXIT_INFEASIBLE, message: "infeasible".into() }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<DpError> for Failure {
    fn from(e: DpError) -> Self {
        Failure { code: EXIT_REFUSED, message: e.to_string() }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Failure { code: EXIT_REFUSED, message: e.to_string() }
    }
}

struct Output {
    stdout: String,
    report: Value,
    code: i32,
}

/// Runs the command line `args` (program name first) and returns the exit
/// code, writing to the given streams.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    let started = Instant::now();
    match execute(cli.command) {
        Ok(mut out) => {
            if let Value::Object(m) = &mut out.report {
                m.insert("wall_ms".into(), json!(started.elapsed().as_secs_f64() * 1e3));
            }
            let _ = write!(stdout, "{}", out.stdout);
            let _ = writeln!(stderr, "{}", out.report);
            out.code
        }
        Err(f) => {
            let report = json!({ "error": f.message, "exit_code": f.code });
            let _ = writeln!(stderr, "{report}");
            f.code
        }
    }
}

fn load(data: &DataArgs) -> Result<CsvData, Failure> {
    Ok(io::load_csv(&data.csv, data.label_column.as_deref(), data.class_order.clone())?)
}

fn execute(cmd: Command) -> Result<Output, Failure> {
    match cmd {
        Command::FitTree { data, max_size, solve } => {
            let csv = load(&data)?;
            let bound = max_size.map(Objective::MaxTreeSize);
            fit(&csv, 1, bound, &solve, "fit-tree")
        }
        Command::FitEnsemble { data, trees, total_size, max_tree_size, solve } => {
            if trees == 0 {
                return Err(Failure::usage("--trees must be at least 1"));
            }
            let csv = load(&data)?;
            let objective = match (total_size, max_tree_size) {
                (Some(s), None) => Objective::TotalSize(s),
                (None, Some(s)) => Objective::MaxTreeSize(s),
                _ => return Err(Failure::usage("give exactly one of --total-size, --max-tree-size")),
            };
            fit(&csv, trees, Some(objective), &solve, "fit-ensemble")
        }
        Command::Check { data, model } => check(&data, &model),
        Command::Convert { model, simplify } => convert(&model, simplify),
        Command::Generate(Generate::Parity { trees, size, out, reference }) => {
            parity(trees, size, &out, &reference)
        }
        Command::Stats { data, trees } => stats(&data, trees),
    }
}

struct Fitted {
    objective: usize,
    models: Vec<TreeEnsemble>,
    extra: Value,
}

fn fit(
    csv: &CsvData,
    trees: usize,
    objective: Option<Objective>,
    args: &SolveArgs,
    command: &str,
) -> Result<Output, Failure> {
    if let Some(t) = args.threads {
        // only the first configuration of the global pool takes effect
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    let inst = Instance::new(&csv.set);
    let limits = Limits { max_entries: args.max_table_entries };
    let engine = match args.engine {
        Engine::Auto if args.enumerate => Engine::Witness,
        Engine::Auto if dp_fits(&inst, trees, limits) => Engine::Dp,
        Engine::Auto => Engine::Witness,
        Engine::Dp if args.enumerate => {
            return Err(Failure::usage("the dp engine cannot enumerate; use witness or oracle"))
        }
        e => e,
    };
    let mode = if args.enumerate { Mode::EnumerateAll } else { Mode::FirstSolution };
    // a single tree on the distinct points always classifies
    let default_bound = inst.distinct_points().saturating_sub(1);
    let objective = objective.unwrap_or(Objective::MaxTreeSize(default_bound));
    let fitted = match engine {
        Engine::Witness => {
            let opts = Options {
                relabel: args.relabel.map(|r| match r {
                    RelabelArg::TrueClass => Relabel::TrueClass,
                    RelabelArg::AnyOtherClass => Relabel::AnyOtherClass,
                }),
                parallel: true,
            };
            let spec = SolveSpec { objective, trees, errors: args.errors, mode };
            let sol = witness::optimize(&inst, spec, opts).ok_or_else(Failure::infeasible)?;
            Fitted {
                objective: sol.objective,
                models: sol.ensembles,
                extra: json!({
                    "search_nodes": sol.stats.nodes,
                    "max_children": sol.stats.max_children,
                }),
            }
        }
        Engine::Dp => {
            let opts = DpOptions {
                limits,
                multiclass: match args.vote_model {
                    VoteModel::Plurality => MultiClassMode::Plurality,
                    VoteModel::AbsoluteMajority => MultiClassMode::AbsoluteMajority,
                },
            };
            let sol = match objective {
                Objective::TotalSize(_) | Objective::MaxTreeSize(_) if trees == 1 => {
                    dp::solve_dts_dp(&inst, args.errors, limits)?
                }
                Objective::TotalSize(_) => dp::solve_mtes_dp(&inst, trees, args.errors, opts)?,
                Objective::MaxTreeSize(_) => dp::solve_mmax_dp(&inst, trees, args.errors, opts)?,
            }
            .ok_or_else(Failure::infeasible)?;
            let value = objective_value(&objective, &sol.ensemble);
            if value > objective.bound() {
                return Err(Failure::infeasible());
            }
            let semantics = match sol.semantics {
                Semantics::Exact => "exact",
                Semantics::UpperBound => "upper-bound (absolute-majority vote counting)",
            };
            Fitted { objective: value, models: vec![sol.ensemble], extra: json!({ "semantics": semantics }) }
        }
        Engine::Oracle => {
            let spec = SolveSpec { objective, trees, errors: args.errors, mode };
            let sol = oracle::brute_force_optimum(&inst, spec, Budget(args.oracle_budget))?
                .ok_or_else(Failure::infeasible)?;
            Fitted { objective: sol.objective, models: sol.solutions.into_iter().collect(), extra: json!({}) }
        }
        Engine::Auto => unreachable!(),
    };

    let total = fitted.models.len();
    let shown = args.limit.unwrap_or(total).min(total);
    let docs: Vec<_> =
        fitted.models[..shown].iter().map(|m| Model::from_indices(m, &csv.set).to_document()).collect();
    let stdout = if args.enumerate {
        serde_json::to_string_pretty(&docs)
    } else {
        serde_json::to_string_pretty(&docs[0])
    }
    .expect("documents serialize")
        + "\n";
    let misclassified = crate::tree::dirty_examples(&fitted.models[0], &inst).len();
    let mut report = json!({
        "command": command,
        "engine": format!("{engine:?}").to_lowercase(),
        "objective": match objective {
            Objective::TotalSize(_) => "total-size",
            Objective::MaxTreeSize(_) if trees == 1 => "size",
            Objective::MaxTreeSize(_) => "max-tree-size",
        },
        "optimum": fitted.objective,
        "trees": trees,
        "errors_allowed": args.errors,
        "misclassified": misclassified,
        "solutions": total,
    });
    if shown < total {
        report["truncated"] = json!(format!("showing {shown} of {total} models"));
    }
    if let (Value::Object(r), Value::Object(x)) = (&mut report, fitted.extra) {
        r.extend(x);
    }
    Ok(Output { stdout, report, code: EXIT_OK })
}

fn objective_value(objective: &Objective, ens: &TreeEnsemble) -> usize {
    match objective {
        Objective::TotalSize(_) => ens.size(),
        Objective::MaxTreeSize(_) => ens.max_tree_size(),
    }
}

fn dp_fits(inst: &Instance, trees: usize, limits: Limits) -> bool {
    if inst.len() > 32 {
        return false;
    }
    let sizes = dp::table_sizes(inst, trees);
    let cap = limits.max_entries;
    if trees == 1 {
        return sizes.partition <= cap;
    }
    sizes.partition <= cap
        && if inst.classes() > 2 { sizes.vote_masks <= cap } else { sizes.ensemble <= cap }
}

fn check(data: &DataArgs, path: &Path) -> Result<Output, Failure> {
    let csv = load(data)?;
    let model = Model::load(path)?;
    if model.dims_used() > csv.set.dims() {
        return Err(Failure::usage(format!(
            "model uses dimension {} but the data has {}",
            model.dims_used() - 1,
            csv.set.dims()
        )));
    }
    let k = model.classes.len();
    let mut wrong = Vec::new();
    for ex in csv.set.examples() {
        let predicted = model.ensemble.classify(&ex.coords[..], k);
        if model.classes[predicted.0] != csv.set.class_name(csv.set.label(ex.id)) {
            wrong.push(ex.id);
        }
    }
    let stdout = serde_json::to_string_pretty(&json!({
        "examples": csv.set.len(),
        "errors": wrong.len(),
        "misclassified": wrong,
    }))
    .expect("serializes")
        + "\n";
    let report = json!({ "command": "check", "errors": wrong.len() });
    let code = if wrong.is_empty() { EXIT_OK } else { EXIT_CHECK_ERRORS };
    Ok(Output { stdout, report, code })
}

fn convert(path: &Path, simplify: bool) -> Result<Output, Failure> {
    let model = Model::load(path)?;
    let ens = &model.ensemble;
    let mut tree = transforms::ensemble_to_tree(ens, model.classes.len());
    if simplify {
        tree = transforms::simplify(&tree);
    }
    let bound = transforms::compiled_size_bound(ens.len(), ens.max_tree_size());
    let out = Model { classes: model.classes.clone(), ensemble: Ensemble::single(tree) };
    let size = out.ensemble.size();
    let report = json!({
        "command": "convert",
        "trees": ens.len(),
        "max_tree_size": ens.max_tree_size(),
        "size": size,
        "bound": bound.to_string(),
    });
    Ok(Output { stdout: out.to_json() + "\n", report, code: EXIT_OK })
}

fn parity(trees: usize, size: usize, out: &Path, reference: &Path) -> Result<Output, Failure> {
    let p = transforms::generate_parity_instance(trees, size)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let file = std::fs::File::create(out).map_err(IoError::from)?;
    io::write_csv(&p.dataset, file)?;
    let model = Model { classes: p.dataset.classes().to_vec(), ensemble: p.reference_model() };
    std::fs::write(reference, model.to_json() + "\n").map_err(IoError::from)?;
    let report = json!({
        "command": "generate parity",
        "examples": p.dataset.len(),
        "trees": trees,
        "size": size,
        "single_tree_lower_bound": p.lower_bound.to_string(),
    });
    Ok(Output { stdout: String::new(), report, code: EXIT_OK })
}

fn stats(data: &DataArgs, trees: usize) -> Result<Output, Failure> {
    let csv = load(data)?;
    let inst = Instance::new(&csv.set);
    let s = inst.stats();
    let thr = canonical_thresholds(&csv.set);
    let sizes = dp::table_sizes(&inst, trees.max(1));
    let stdout = serde_json::to_string_pretty(&json!({
        "n": s.n,
        "d": s.d,
        "D": s.max_domain,
        "delta": s.delta,
        "delta_all_pairs": s.delta_all,
        "classes": csv.set.classes(),
        "thresholds_per_dim": (0..thr.dim_count()).map(|i| thr.dim(i).len()).collect::<Vec<_>>(),
        "table_entries": {
            "restricted": sizes.restricted.to_string(),
            "partition": sizes.partition.to_string(),
            "ensemble": sizes.ensemble.to_string(),
            "vote_masks": sizes.vote_masks.to_string(),
            "trees": trees,
        },
    }))
    .expect("serializes")
        + "\n";
    Ok(Output { stdout, report: json!({ "command": "stats" }), code: EXIT_OK })
}
