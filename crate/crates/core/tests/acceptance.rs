// SPDX-License-Identifier: Apache-2.0

use std::time::{Duration, Instant};

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use optiforest::dp::{self, DpOptions, Limits, PartitionTable, RestrictedTable};
use optiforest::oracle::{self, Budget};
use optiforest::transforms::{compiled_size_bound, ensemble_to_tree, generate_parity_instance};
use optiforest::witness::{self, Mode, Objective, Options, SolveSpec};
use optiforest::{ClassId, Cut, DecisionTree, Ensemble, Instance, TreeEnsemble};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    n: usize,
    d: usize,
    dmax: usize,
    k: usize,
    trees: usize,
    errors: usize,
    inst: Instance,
}

fn grid() -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let mut out = Vec::new();
    for n in 2..=8 {
        for d in 1..=3 {
            for dmax in 2..=3 {
                for k in 2..=3 {
                    for trees in [1, 3] {
                        for errors in 0..=1 {
                            for _ in 0..2 {
                                let mut points: Vec<Vec<u16>> = Vec::new();
                                let mut labels = Vec::new();
                                for _ in 0..n {
                                    let p: Vec<u16> =
                                        (0..d).map(|_| rng.gen_range(0..dmax as u16)).collect();
                                    let l = match points.iter().position(|q| *q == p) {
                                        Some(i) => labels[i],
                                        None => rng.gen_range(0..k),
                                    };
                                    points.push(p);
                                    labels.push(l);
                                }
                                let inst = Instance::from_points(&points, &labels, k);
                                out.push(Case { n, d, dmax, k, trees, errors, inst });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn spec(c: &Case, bound: usize, mode: Mode) -> SolveSpec {
    SolveSpec { objective: Objective::TotalSize(bound), trees: c.trees, errors: c.errors, mode }
}

fn witness_opt(c: &Case) -> usize {
    let bound = c.trees * c.n;
    witness::solve_mtes(&c.inst, c.trees, bound, c.errors, Mode::FirstSolution, Options::default())
        .expect("feasible")
        .objective
}

fn dp_opt(c: &Case) -> usize {
    dp::solve_mtes_dp(&c.inst, c.trees, c.errors, DpOptions::default())
        .expect("within cap")
        .expect("feasible")
        .objective
}

fn oracle_opt(c: &Case) -> usize {
    oracle::brute_force_optimum(&c.inst, spec(c, c.trees * c.n, Mode::FirstSolution), Budget(u128::MAX))
        .expect("budget")
        .expect("feasible")
        .objective
}

fn report(id: usize, name: &str, took: Duration, result: Result<String, String>) -> bool {
    match result {
        Ok(detail) => {
            println!("PASS criterion {id}: {name} ({detail}; {:.2?})", took);
            true
        }
        Err(why) => {
            println!("FAIL criterion {id}: {name} ({why}; {:.2?})", took);
            false
        }
    }
}

fn criterion_1(cases: &[Case]) -> Result<String, String> {
    let mut slow: Vec<(Duration, Duration, Duration, String)> = Vec::new();
    for c in cases {
        let t0 = Instant::now();
        let w = witness_opt(c);
        let t1 = Instant::now();
        let d = dp_opt(c);
        let t2 = Instant::now();
        let o = oracle_opt(c);
        let t3 = Instant::now();
        let tag = format!("n={} d={} D={} k={} l={} t={}", c.n, c.d, c.dmax, c.k, c.trees, c.errors);
        slow.push((t1 - t0, t2 - t1, t3 - t2, tag.clone()));
        if w != d || d != o {
            return Err(format!("{tag}: witness {w}, dp {d}, oracle {o}"));
        }
    }
    slow.sort_by_key(|s| std::cmp::Reverse(s.0 + s.1 + s.2));
    for s in slow.iter().take(8) {
        eprintln!("  slow: {} w={:.2?} dp={:.2?} or={:.2?}", s.3, s.0, s.1, s.2);
    }
    Ok(format!("{} instances agree", cases.len()))
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_optiforest")).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn criterion_2(dir: &Path) -> Result<String, String> {
    let csv = dir.join("parity.csv");
    let model = dir.join("parity.json");
    let t = Instant::now();
    let (code, _, err) = cli(&[
        "generate", "parity", "--trees", "3", "--size", "3",
        "--out", csv.to_str().unwrap(), "--ref", model.to_str().unwrap(),
    ]);
    if code != 0 {
        return Err(format!("generate exited {code}: {err}"));
    }
    let (code, out, err) = cli(&["check", csv.to_str().unwrap(), model.to_str().unwrap()]);
    let took = t.elapsed();
    let v: serde_json::Value = serde_json::from_str(&out).map_err(|e| format!("{e}: {err}"))?;
    let rows = v["examples"].as_u64();
    let errors = v["errors"].as_u64();
    if code != 0 || rows != Some(48) || errors != Some(0) {
        return Err(format!("exit {code}, {rows:?} rows, {errors:?} errors"));
    }
    if took >= Duration::from_secs(1) {
        return Err(format!("took {took:.2?}"));
    }
    Ok("48 rows, 0 errors".into())
}

fn random_tree(rng: &mut ChaCha8Rng, inst: &Instance, size: usize, k: usize) -> DecisionTree {
    let cuts: Vec<Cut> = (0..inst.dims())
        .flat_map(|dim| (0..inst.threshold_count(dim)).map(move |thr| Cut { dim, thr }))
        .collect();
    fn grow(rng: &mut ChaCha8Rng, cuts: &[Cut], size: usize, k: usize) -> DecisionTree {
        if size == 0 || cuts.is_empty() {
            return DecisionTree::leaf(ClassId(rng.gen_range(0..k)));
        }
        let left = rng.gen_range(0..size);
        let cut = cuts[rng.gen_range(0..cuts.len())];
        DecisionTree::join(cut, grow(rng, cuts, left, k), grow(rng, cuts, size - 1 - left, k))
    }
    grow(rng, &cuts, size, k)
}

fn criterion_3() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut biggest = 0;
    for i in 0..100 {
        let n = rng.gen_range(2..=10);
        let d = rng.gen_range(1..=3);
        let k = rng.gen_range(2..=3);
        let points: Vec<Vec<u16>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(0..4)).collect()).collect();
        let mut labels = Vec::new();
        for (j, p) in points.iter().enumerate() {
            let l = match points[..j].iter().position(|q| q == p) {
                Some(a) => labels[a],
                None => rng.gen_range(0..k),
            };
            labels.push(l);
        }
        let inst = Instance::from_points(&points, &labels, k);
        let trees = rng.gen_range(1..=3);
        let ens: TreeEnsemble =
            Ensemble::new((0..trees).map(|_| {
                let size = rng.gen_range(0..=2);
                random_tree(&mut rng, &inst, size, k)
            }).collect());
        let tree = ensemble_to_tree(&ens, k);
        let bound = compiled_size_bound(ens.len(), ens.max_tree_size());
        if tree.size() as u128 > bound {
            return Err(format!("ensemble {i}: size {} > bound {bound}", tree.size()));
        }
        for e in 0..inst.len() {
            if tree.classify(inst.rank(e)) != ens.classify(inst.rank(e), k) {
                return Err(format!("ensemble {i}: example {e} classified differently"));
            }
        }
        biggest = biggest.max(tree.size());
    }
    Ok(format!("100 ensembles agree, largest compiled size {biggest}"))
}

fn dts_spec(bound: usize) -> SolveSpec {
    SolveSpec { objective: Objective::TotalSize(bound), trees: 1, errors: 0, mode: Mode::FirstSolution }
}

fn parity31() -> Instance {
    Instance::new(&generate_parity_instance(3, 1).unwrap().dataset)
}

fn criterion_4() -> Result<String, String> {
    let p = generate_parity_instance(3, 1).unwrap();
    let inst = Instance::new(&p.dataset);
    let d = dp::solve_dts_dp(&inst, 0, Limits::default()).map_err(|e| e.to_string())?.ok_or("dp infeasible")?;
    let o = oracle::brute_force_optimum(&inst, dts_spec(inst.len()), Budget::default())
        .map_err(|e| e.to_string())?
        .ok_or("oracle infeasible")?;
    let floor = p.lower_bound.ceil().to_integer();
    let ok = inst.len() == 6 && d.objective == o.objective && num_bigint::BigInt::from(d.objective) >= floor && d.objective >= 2;
    let detail = format!("{} examples, dp {}, oracle {}, bound {} (ceil {floor})", inst.len(), d.objective, o.objective, p.lower_bound);
    if ok { Ok(detail) } else { Err(detail) }
}

fn criterion_5() -> Result<String, String> {
    let inst = parity31();
    let dts = dp::solve_dts_dp(&inst, 0, Limits::default()).map_err(|e| e.to_string())?.ok_or("dts infeasible")?.objective;
    let w = witness::solve_mtes(&inst, 3, 6, 0, Mode::FirstSolution, Options::default()).ok_or("witness infeasible")?.objective;
    let d = dp::solve_mtes_dp(&inst, 3, 0, DpOptions::default()).map_err(|e| e.to_string())?.ok_or("dp infeasible")?.objective;
    let spec = SolveSpec { objective: Objective::TotalSize(6), trees: 3, errors: 0, mode: Mode::FirstSolution };
    let o = oracle::brute_force_optimum(&inst, spec, Budget::default()).map_err(|e| e.to_string())?.ok_or("oracle infeasible")?.objective;
    let detail = format!("three-tree optimum witness {w}, dp {d}, oracle {o}; single tree {dts}");
    if w == 3 && d == 3 && o == 3 && 3 < dts { Ok(detail) } else { Err(detail) }
}

fn criterion_6(cases: &[Case]) -> Result<String, String> {
    let mut checked = 0;
    for c in cases.iter().filter(|c| c.errors == 0) {
        let mut prev = usize::MAX;
        for t in 0..=c.n {
            let v = dp::solve_mtes_dp(&c.inst, c.trees, t, DpOptions::default())
                .map_err(|e| e.to_string())?
                .ok_or("infeasible")?
                .objective;
            if v > prev {
                return Err(format!("n={} l={}: size {v} at t={t} after {prev}", c.n, c.trees));
            }
            prev = v;
            checked += 1;
        }
        if prev != 0 {
            return Err(format!("n={} l={}: size {prev} at t=n", c.n, c.trees));
        }
    }
    Ok(format!("{checked} (instance, t) pairs"))
}

fn criterion_7(cases: &[Case]) -> Result<String, String> {
    let single: Vec<&Case> = cases.iter().filter(|c| c.trees == 1).collect();
    let step = single.len() / 50;
    let mut total = 0;
    for c in single.iter().step_by(step).take(50) {
        let spec = SolveSpec { objective: Objective::TotalSize(c.n), trees: 1, errors: c.errors, mode: Mode::EnumerateAll };
        let w = witness::enumerate_solutions(&c.inst, spec, Options::default()).ok_or("witness infeasible")?;
        let o = oracle::brute_force_optimum(&c.inst, spec, Budget(u128::MAX)).map_err(|e| e.to_string())?.ok_or("oracle infeasible")?;
        let ws: BTreeSet<TreeEnsemble> = w.ensembles.into_iter().collect();
        if w.objective != o.objective || ws != o.solutions {
            return Err(format!(
                "n={} d={} k={} t={}: witness {} sets of size {}, oracle {} of size {}",
                c.n, c.d, c.k, c.errors, ws.len(), w.objective, o.solutions.len(), o.objective
            ));
        }
        total += ws.len();
    }
    Ok(format!("50 instances, {total} optimal trees in total"))
}

fn criterion_8(cases: &[Case]) -> Result<String, String> {
    let mut count = 0;
    for c in cases.iter().filter(|c| c.k == 2) {
        let r = RestrictedTable::build(&c.inst, Limits::default()).map_err(|e| e.to_string())?;
        let p = PartitionTable::build(&c.inst, Limits::default()).map_err(|e| e.to_string())?;
        for a in 0u32..(1 << c.n) {
            let assign: Vec<Option<ClassId>> =
                (0..c.n).map(|e| (a >> e & 1 == 1).then(|| ClassId(c.inst.label(e)))).collect();
            if r.get(a) != p.get(p.key(&assign)) {
                return Err(format!("n={} d={}: subset {a:b} differs", c.n, c.d));
            }
        }
        count += 1;
    }
    Ok(format!("{count} binary instances, every labelled subset"))
}

fn criterion_9(dir: &Path) -> Result<String, String> {
    let small = dir.join("small.csv");
    std::fs::write(
        &small,
        "x,y,class\n0,0,b\n1,0,a\n2,1,c\n0,2,a\n1,1,c\n2,2,b\n0,1,b\n2,0,a\n",
    )
    .map_err(|e| e.to_string())?;
    let small = small.to_str().unwrap();
    let runs: [&[&str]; 6] = [
        &["fit-tree", small],
        &["fit-tree", small, "--engine", "witness", "--errors", "1"],
        &["fit-tree", small, "--engine", "oracle", "--enumerate"],
        &["fit-ensemble", small, "--trees", "3", "--total-size", "8", "--engine", "witness", "--threads", "4"],
        &["fit-ensemble", small, "--trees", "3", "--max-tree-size", "2", "--engine", "dp"],
        &["fit-ensemble", small, "--trees", "3", "--total-size", "8", "--engine", "witness", "--enumerate", "--limit", "4"],
    ];
    for args in runs {
        let (c1, a, e1) = cli(args);
        let (c2, b, _) = cli(args);
        if c1 != 0 || c2 != 0 || a != b {
            return Err(format!("{args:?}: exit {c1}/{c2}, identical {}: {e1}", a == b));
        }
    }
    Ok(format!("{} commands repeated", runs.len()))
}

fn timed(f: impl FnOnce() -> Result<String, String>) -> (Result<String, String>, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

fn within(r: (Result<String, String>, Duration), limit: Duration) -> (Result<String, String>, Duration) {
    match r {
        (Ok(s), took) if took > limit => (Err(format!("{s}; over {limit:.0?}")), took),
        other => other,
    }
}

fn main() {
    let cases = grid();
    let dir = tempfile::tempdir().expect("temp dir");
    let mut ok = true;
    let mut run = |id, name: &str, (res, took): (Result<String, String>, Duration)| {
        ok &= report(id, name, took, res);
    };
    let secs = Duration::from_secs;
    run(1, "witness, dp and oracle optima agree on the grid", within(timed(|| criterion_1(&cases)), secs(300)));
    run(2, "parity certificate via the command line", within(timed(|| criterion_2(dir.path())), secs(1)));
    run(3, "compiled ensembles agree and respect the size bound", within(timed(criterion_3), secs(30)));
    run(4, "single-tree optimum on the (3,1) parity instance", within(timed(criterion_4), secs(1)));
    run(5, "three trees beat one on the (3,1) parity instance", within(timed(criterion_5), secs(10)));
    run(6, "optimal size is nonincreasing in the error budget", within(timed(|| criterion_6(&cases)), secs(300)));
    run(7, "witness enumeration equals the oracle solution set", within(timed(|| criterion_7(&cases)), secs(120)));
    run(8, "restricted and full partition tables agree", timed(|| criterion_8(&cases)));
    run(9, "repeated fit commands give identical output", timed(|| criterion_9(dir.path())));
    if !ok {
        std::process::exit(1);
    }
}
