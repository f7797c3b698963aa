//! Command-line surface: relax a problem file, generate instances, reproduce the
//! example tables and compare the two relaxation families.

pub mod instances;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::oracle::{sample_upper_bound, verify_bound};
use crate::polynomial::PopProblem;
use crate::relax::{
    build_lifting_map, build_qp_relaxation, build_tensor_relaxation_with, qcqp_reformulate, ConeKind,
    ConicProgram, RelaxError, SliceSet, TensorOptions,
};
use crate::solver::{solve, SolveReport, SolverConfig, Status};

use instances::*;
use report::{comparison_table, fmt_bound, fmt_num, fmt_opt, ratio, ComparisonRow, Table};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("builder error: {0}")]
    Build(String),
    #[error("solver numerical trouble: {0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Build(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) | CliError::Failed(_) => 1,
        }
    }
}

impl From<RelaxError> for CliError {
    fn from(e: RelaxError) -> Self {
        CliError::Build(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Approach {
    Tensor,
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConeArg {
    L,
    Sdp,
    Dnn,
}

impl From<ConeArg> for ConeKind {
    fn from(c: ConeArg) -> Self {
        match c {
            ConeArg::L => ConeKind::L,
            ConeArg::Sdp => ConeKind::Sdp,
            ConeArg::Dnn => ConeKind::Dnn,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SlicesArg {
    Auto,
    All,
    Principal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    Ex5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Md,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "popcone", version, about = "Tensor-cone and quadratic-lifting relaxations of polynomial optimization problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Relax a problem file and solve the relaxation.
    Relax {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "tensor")]
        approach: Approach,
        #[arg(long, value_enum, default_value = "dnn")]
        cone: ConeArg,
        /// Use `<=` instead of `==` for the lifting rows.
        #[arg(long)]
        relaxed_linking: bool,
        /// Add the rows `<T_d(-x_i), X> <= 0`.
        #[arg(long)]
        sign_rows: bool,
        #[arg(long, value_enum, default_value = "auto")]
        slices: SlicesArg,
        /// Write the conic program and the solve report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate random instances of the example families.
    Gen {
        #[arg(long)]
        example: u32,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = ".")]
        outdir: PathBuf,
    },
    /// Rebuild one of the example tables.
    Reproduce {
        #[arg(long, value_enum)]
        target: Target,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
        /// Number of generated instances (ex4, ex5).
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Oracle sample budget.
        #[arg(long, default_value_t = 100_000)]
        budget: usize,
        /// Include the large ex2 cells up to (10,10).
        #[arg(long)]
        full: bool,
    },
    /// Compare TP-DNN and QP-DNN bounds on problem files.
    Compare {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        budget: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
    },
}

/// Worker pool sized by `POPCONE_THREADS` when set.
pub fn pool() -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("POPCONE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        b = b.num_threads(n.max(1));
    }
    b.build().expect("thread pool")
}

pub fn read_problem(path: &Path) -> Result<PopProblem, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    PopProblem::from_json(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Program for one relaxation of `pop`.
pub fn build(
    pop: &PopProblem,
    approach: Approach,
    cone: ConeKind,
    relaxed_linking: bool,
    sign_rows: bool,
    slices: SliceSet,
) -> Result<ConicProgram, RelaxError> {
    match approach {
        Approach::Tensor => {
            build_tensor_relaxation_with(pop, &TensorOptions { cone, sign_rows, slices, order: None })
        }
        Approach::Quadratic => {
            let (lifted, map) = qcqp_reformulate(pop)?;
            build_qp_relaxation(&lifted, &map, cone, relaxed_linking)
        }
    }
}

fn solve_prog(prog: &ConicProgram) -> SolveReport {
    match solve(prog, &SolverConfig::default()) {
        Ok(r) => r,
        Err(e) => {
            let mut r = solve_failure(prog);
            r.message = Some(e.to_string());
            r
        }
    }
}

fn solve_failure(prog: &ConicProgram) -> SolveReport {
    SolveReport {
        status: Status::NumericalTrouble,
        primal_value: f64::NAN,
        dual_value: f64::NAN,
        multipliers: vec![0.0; prog.rows.len()],
        primal_solution: vec![0.0; prog.vars],
        residuals: Default::default(),
        iterations: 0,
        ray: None,
        heuristic: false,
        message: None,
    }
}

fn status_line(r: &SolveReport) -> String {
    let mut s = match r.status {
        Status::Optimal => format!("bound {:.6} {}", r.primal_value, r.status),
        _ => format!("bound {} {}", fmt_bound(r), r.status),
    };
    if r.status == Status::Unbounded {
        s.push_str(if r.ray.is_some() { " (certified ray)" } else { " (heuristic)" });
    }
    s
}

pub fn cmd_relax(
    file: &Path,
    approach: Approach,
    cone: ConeKind,
    relaxed_linking: bool,
    sign_rows: bool,
    slices: SliceSet,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let pop = read_problem(file)?;
    let prog = build(&pop, approach, cone, relaxed_linking, sign_rows, slices)?;
    let rep = solve(&prog, &SolverConfig::default()).map_err(|e| CliError::Build(e.to_string()))?;
    let sh = prog.shape();
    let mut text = format!(
        "vars {} rows {} psd_blocks {} max_block {} nonneg {}\n",
        sh.vars, sh.rows, sh.psd_blocks, sh.max_block, sh.nonneg
    );
    text.push_str(&status_line(&rep));
    text.push('\n');
    if let Some(path) = out {
        let dump = serde_json::json!({
            "program": serde_json::from_str::<serde_json::Value>(&prog.to_json()).expect("program json"),
            "report": rep,
        });
        fs::write(path, serde_json::to_string_pretty(&dump).expect("json"))?;
    }
    if rep.status == Status::NumericalTrouble {
        return Err(CliError::Numerical(format!("{text}{}", rep.message.unwrap_or_default())));
    }
    Ok(text)
}

pub fn generate(example: u32, count: usize, seed: u64, screen_budget: usize) -> Result<Vec<PopProblem>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match example {
        4 => Ok((0..count).map(|_| generate_example4(&mut rng)).collect()),
        5 => Ok((0..count).map(|_| generate_example5(&mut rng, screen_budget)).collect()),
        _ => Err(CliError::Failed(format!("no generator for example {example}; use 4 or 5"))),
    }
}

pub fn cmd_gen(example: u32, count: usize, seed: u64, outdir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if count == 0 {
        return Err(CliError::Failed("count must be at least 1".into()));
    }
    fs::create_dir_all(outdir)?;
    let mut paths = Vec::new();
    for (k, pop) in generate(example, count, seed, 100_000)?.iter().enumerate() {
        let p = outdir.join(format!("ex{example}_{:03}.json", k + 1));
        fs::write(&p, pop.to_json())?;
        paths.push(p);
    }
    Ok(paths)
}

/// Oracle value plus TP-DNN and QP-DNN bounds for one instance.
pub fn compare_instance(id: &str, pop: &PopProblem, budget: usize, seed: u64) -> ComparisonRow {
    let oracle = sample_upper_bound(pop, budget, seed);
    let mut row = ComparisonRow {
        id: id.to_string(),
        oracle_value: oracle.feasible_found.then_some(oracle.best_value),
        tp_bound: f64::NAN,
        qp_bound: f64::NAN,
        tp_status: Status::NumericalTrouble,
        qp_status: Status::NumericalTrouble,
        ratio: None,
        sound: true,
        error: None,
    };
    let bound = |r: &SolveReport| match r.status {
        Status::Optimal => r.primal_value,
        Status::Unbounded => f64::NEG_INFINITY,
        _ => f64::NAN,
    };
    for approach in [Approach::Tensor, Approach::Quadratic] {
        let prog = match build(pop, approach, ConeKind::Dnn, false, false, SliceSet::Auto) {
            Ok(p) => p,
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        };
        let rep = solve_prog(&prog);
        let b = bound(&rep);
        if rep.status == Status::Optimal {
            row.sound &= verify_bound(pop, b, &oracle).unwrap_or(false);
        }
        match approach {
            Approach::Tensor => (row.tp_bound, row.tp_status) = (b, rep.status),
            Approach::Quadratic => (row.qp_bound, row.qp_status) = (b, rep.status),
        }
    }
    if row.tp_status == Status::Optimal && row.qp_status == Status::Optimal {
        row.ratio = row.oracle_value.and_then(|o| ratio(o, row.tp_bound, row.qp_bound));
    }
    row
}

pub fn compare_all(named: &[(String, PopProblem)], budget: usize, seed: u64) -> Vec<ComparisonRow> {
    pool().install(|| {
        named
            .par_iter()
            .enumerate()
            .map(|(k, (id, pop))| compare_instance(id, pop, budget, seed.wrapping_add(k as u64)))
            .collect()
    })
}

pub fn cmd_compare(files: &[PathBuf], budget: usize, seed: u64) -> Table {
    let mut named = Vec::new();
    let mut failed = Vec::new();
    for (k, f) in files.iter().enumerate() {
        match read_problem(f) {
            Ok(p) => named.push((f.display().to_string(), p)),
            Err(e) => failed.push((k, f.display().to_string(), e.to_string())),
        }
    }
    let mut rows = compare_all(&named, budget, seed);
    for (k, id, e) in failed {
        let err = ComparisonRow {
            id,
            oracle_value: None,
            tp_bound: f64::NAN,
            qp_bound: f64::NAN,
            tp_status: Status::NumericalTrouble,
            qp_status: Status::NumericalTrouble,
            ratio: None,
            sound: false,
            error: Some(e),
        };
        rows.insert(k.min(rows.len()), err);
    }
    comparison_table(&rows)
}

#[derive(Clone, Debug)]
pub struct ReproduceOptions {
    pub count: Option<usize>,
    pub seed: u64,
    pub budget: usize,
    pub full: bool,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions { count: None, seed: 1, budget: 100_000, full: false }
    }
}

/// Example 2 cells checked by default; `full` adds the rest of the published grid.
pub fn ex2_cells(full: bool) -> Vec<(usize, usize)> {
    let mut cells = vec![(2, 2), (3, 3), (4, 4), (5, 5), (2, 10), (4, 8)];
    if full {
        cells.extend([(6, 6), (7, 7), (8, 8), (9, 9), (10, 10), (3, 9), (5, 7)]);
    }
    cells
}

/// Table for one target and whether every cell solved and matched its check.
pub fn cmd_reproduce(target: Target, opts: &ReproduceOptions) -> Result<(Table, bool), CliError> {
    match target {
        Target::Ex1 => reproduce_ex1(),
        Target::Ex2 => Ok(reproduce_ex2(opts.full)),
        Target::Ex3 => Ok(reproduce_ex3(opts.budget, opts.seed)),
        Target::Ex4 | Target::Ex5 => {
            let ex = if target == Target::Ex4 { 4 } else { 5 };
            let count = opts.count.unwrap_or(if ex == 4 { 20 } else { 10 });
            let pops = generate(ex, count, opts.seed, opts.budget)?;
            let named: Vec<_> = pops.into_iter().enumerate().map(|(k, p)| ((k + 1).to_string(), p)).collect();
            let rows = compare_all(&named, opts.budget, opts.seed);
            let ok = rows.iter().all(|r| r.error.is_none() && r.sound && r.tp_status == Status::Optimal);
            Ok((comparison_table(&rows), ok))
        }
    }
}

fn reproduce_ex1() -> Result<(Table, bool), CliError> {
    let n = 3;
    let tp = build(&example1(n), Approach::Tensor, ConeKind::L, false, false, SliceSet::Auto)?;
    let q = example1_quadratic(n);
    let qp = build_qp_relaxation(&q, &build_lifting_map(q.n), ConeKind::L, false)?;
    let mut t = Table::new(&["relaxation", "bound", "status"]);
    let mut ok = true;
    for (name, prog) in [("TP-L", tp), ("QP-L", qp)] {
        let r = solve_prog(&prog);
        ok &= r.status == Status::Optimal;
        t.push(vec![name.into(), fmt_bound(&r), r.status.to_string()]);
    }
    Ok((t, ok))
}

fn reproduce_ex2(full: bool) -> (Table, bool) {
    let cells = ex2_cells(full);
    let results: Vec<(SolveReport, Option<SolveReport>)> = pool().install(|| {
        cells
            .par_iter()
            .map(|&(n, m)| {
                let opts = TensorOptions { slices: SliceSet::All, ..TensorOptions::new(ConeKind::Sdp) };
                let tp = build_tensor_relaxation_with(&example2_tensor(n, m), &opts)
                    .map(|p| solve_prog(&p))
                    .expect("well-formed instance");
                let qp = (n + m <= 8).then(|| {
                    build(&example2(n, m), Approach::Quadratic, ConeKind::Sdp, false, false, SliceSet::Auto)
                        .map(|p| solve_prog(&p))
                        .expect("well-formed instance")
                });
                (tp, qp)
            })
            .collect()
    });
    let mut t = Table::new(&["(n,m)", "optimal", "TP-SDP", "QP-SDP", "match"]);
    let mut ok = true;
    for (&(n, m), (tp, qp)) in cells.iter().zip(&results) {
        let opt = example2_optimum(n, m);
        let hit = tp.status == Status::Optimal && (tp.primal_value - opt).abs() <= 1e-3;
        ok &= hit;
        t.push(vec![
            format!("({n},{m})"),
            fmt_num(opt),
            fmt_bound(tp),
            qp.as_ref().map_or_else(|| "-".into(), fmt_bound),
            if hit { "yes" } else { "NO" }.into(),
        ]);
    }
    (t, ok)
}

fn reproduce_ex3(budget: usize, seed: u64) -> (Table, bool) {
    let quad = |pop: &PopProblem, cone| build(pop, Approach::Quadratic, cone, false, false, SliceSet::Auto);
    let q25 = example3_quadratic();
    let progs = [
        quad(&example3(), ConeKind::Sdp),
        quad(&example3_rlt(), ConeKind::Dnn),
        build_qp_relaxation(&q25, &build_lifting_map(q25.n), ConeKind::Dnn, false),
        build(&example3_augmented(), Approach::Tensor, ConeKind::Dnn, false, false, SliceSet::Auto),
    ];
    let pop = example3();
    let oracle = sample_upper_bound(&pop, budget, seed);
    let mut t = Table::new(&["SDP", "COP (DNN)", "QP-DNN", "TP-DNN", "oracle"]);
    let mut ok = oracle.feasible_found;
    let mut row = Vec::new();
    for p in progs {
        match p {
            Ok(prog) => {
                let r = solve_prog(&prog);
                ok &= r.status == Status::Optimal
                    && verify_bound(&pop, r.primal_value, &oracle).unwrap_or(false);
                row.push(fmt_bound(&r));
            }
            Err(_) => {
                ok = false;
                row.push("ERR".into());
            }
        }
    }
    row.push(fmt_opt(oracle.feasible_found.then_some(oracle.best_value)));
    t.push(row);
    (t, ok)
}

fn render(t: &Table, format: Format) -> String {
    match format {
        Format::Md => t.markdown(),
        Format::Csv => t.csv(),
    }
}

/// Runs one parsed command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Relax { file, approach, cone, relaxed_linking, sign_rows, slices, out } => {
            let slices = match slices {
                SlicesArg::Auto => SliceSet::Auto,
                SlicesArg::All => SliceSet::All,
                SlicesArg::Principal => SliceSet::Principal,
            };
            cmd_relax(&file, approach, cone.into(), relaxed_linking, sign_rows, slices, out.as_deref())
                .map(|s| (s, true))
        }
        Command::Gen { example, count, seed, outdir } => cmd_gen(example, count, seed, &outdir).map(|ps| {
            let names: Vec<String> = ps.iter().map(|p| p.display().to_string()).collect();
            (names.join("\n") + "\n", true)
        }),
        Command::Reproduce { target, format, count, seed, budget, full } => {
            let opts = ReproduceOptions { count, seed, budget, full };
            cmd_reproduce(target, &opts).map(|(t, ok)| (render(&t, format), ok))
        }
        Command::Compare { files, budget, seed, format } => {
            let t = cmd_compare(&files, budget, seed);
            Ok((render(&t, format), true))
        }
    };
    match result {
        Ok((text, ok)) => {
            print!("{text}");
            if ok {
                0
            } else {
                eprintln!("one or more cells failed or did not match");
                1
            }
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
