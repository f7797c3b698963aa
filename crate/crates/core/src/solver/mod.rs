//! Interior-point solver for the block conic programs built by `relax`.

mod ipm;

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::polynomial::{Relation, Sense};
use crate::relax::{ConicProgram, PsdBlock, Row};

use ipm::{Block, Exit, Settings, Std};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("program has no rows and no cone constraints")]
    Empty,
    #[error("program has PSD blocks; use solve")]
    HasPsdBlocks,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: usize,
    pub unbounded_threshold: f64,
    /// Print one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_feas: 1e-8,
            tol_gap: 1e-7,
            max_iter: 200,
            unbounded_threshold: 1e8,
            verbose: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Optimal,
    Unbounded,
    Infeasible,
    MaxIter,
    NumericalTrouble,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Optimal => "OPTIMAL",
            Status::Unbounded => "UNBOUNDED",
            Status::Infeasible => "INFEASIBLE",
            Status::MaxIter => "MAX_ITER",
            Status::NumericalTrouble => "NUMERICAL_TROUBLE",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Residuals {
    /// Largest row, nonnegativity or PSD violation of the primal solution.
    pub primal: f64,
    /// Infinity norm of the dual equality residual.
    pub dual: f64,
    /// `|primal_value - dual_value|`.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub status: Status,
    /// Objective bound in the program's own sense; infinite when unbounded.
    pub primal_value: f64,
    pub dual_value: f64,
    /// One multiplier per row: nonnegative for `<=` rows, free for equalities.
    pub multipliers: Vec<f64>,
    pub primal_solution: Vec<f64>,
    pub residuals: Residuals,
    pub iterations: usize,
    /// Recession direction certifying unboundedness, when one was found.
    pub ray: Option<Vec<f64>>,
    /// UNBOUNDED was concluded from the objective threshold, without a ray.
    pub heuristic: bool,
    pub message: Option<String>,
}

impl SolveReport {
    fn bare(status: Status, prog: &ConicProgram) -> Self {
        SolveReport {
            status,
            primal_value: f64::NAN,
            dual_value: f64::NAN,
            multipliers: vec![0.0; prog.rows.len()],
            primal_solution: vec![0.0; prog.vars],
            residuals: Residuals::default(),
            iterations: 0,
            ray: None,
            heuristic: false,
            message: None,
        }
    }

    pub fn is_finite_bound(&self) -> bool {
        self.status == Status::Optimal && self.primal_value.is_finite()
    }
}

/// Standard form of a program after sense normalization, presolve and scaling.
struct Prepared {
    std: Std,
    /// Original variable index of each kept variable.
    keep: Vec<usize>,
    /// Variables appearing in no constraint, with their objective coefficient (min sense).
    loose: Vec<(usize, f64)>,
    /// Origin of each equality row and linear cone row in the program.
    eq_rows: Vec<usize>,
    lin_src: Vec<LinSrc>,
    col: Vec<f64>,
    row_eq: Vec<f64>,
    row_lin: Vec<f64>,
    cost: f64,
}

#[derive(Clone, Copy)]
enum LinSrc {
    Row(usize),
    Nonneg,
}

fn sign(sense: Sense) -> f64 {
    match sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    }
}

fn prepare(prog: &ConicProgram, equilibrate: bool) -> Prepared {
    let nv = prog.vars;
    let mut used = vec![false; nv];
    for r in &prog.rows {
        for &(v, a) in &r.coefs {
            used[v] |= a != 0.0;
        }
    }
    for f in &prog.nonneg {
        for &(v, a) in f {
            used[v] |= a != 0.0;
        }
    }
    for b in &prog.psd_blocks {
        for &(v, _, _, a) in &b.terms {
            used[v] |= a != 0.0;
        }
    }
    let sg = sign(prog.sense);
    let mut cfull = vec![0.0; nv];
    for &(v, a) in &prog.objective {
        cfull[v] += sg * a;
    }
    let keep: Vec<usize> = (0..nv).filter(|&v| used[v]).collect();
    let loose = (0..nv).filter(|&v| !used[v] && cfull[v] != 0.0).map(|v| (v, cfull[v])).collect();
    let mut pos = vec![usize::MAX; nv];
    for (k, &v) in keep.iter().enumerate() {
        pos[v] = k;
    }
    let remap = |e: &[(usize, f64)]| -> Vec<(usize, f64)> {
        let mut m: std::collections::BTreeMap<usize, f64> = Default::default();
        for &(v, a) in e {
            if pos[v] != usize::MAX {
                *m.entry(pos[v]).or_insert(0.0) += a;
            }
        }
        m.into_iter().filter(|(_, a)| *a != 0.0).collect()
    };

    let mut eq = Vec::new();
    let mut b = Vec::new();
    let mut eq_rows = Vec::new();
    let mut lin = Vec::new();
    let mut hl = Vec::new();
    let mut lin_src = Vec::new();
    for (k, r) in prog.rows.iter().enumerate() {
        match r.rel {
            Relation::Eq => {
                eq.push(remap(&r.coefs));
                b.push(r.rhs);
                eq_rows.push(k);
            }
            Relation::Le => {
                lin.push(remap(&r.coefs));
                hl.push(r.rhs);
                lin_src.push(LinSrc::Row(k));
            }
        }
    }
    for f in &prog.nonneg {
        lin.push(remap(f).into_iter().map(|(v, a)| (v, -a)).collect());
        hl.push(0.0);
        lin_src.push(LinSrc::Nonneg);
    }
    let blocks: Vec<Block> = prog.psd_blocks.iter().map(|pb| to_block(pb, &pos)).collect();
    let c: Vec<f64> = keep.iter().map(|&v| cfull[v]).collect();
    let mut std = Std { n: keep.len(), c, eq, b, lin, hl, blocks };

    let n = std.n;
    let mut col = vec![1.0; n];
    let mut row_eq = vec![1.0; std.eq.len()];
    let mut row_lin = vec![1.0; std.lin.len()];
    let mut row_blk = vec![1.0; std.blocks.len()];
    if equilibrate {
        for _ in 0..20 {
            let mut cmax = vec![0.0f64; n];
            let mut req = vec![0.0f64; std.eq.len()];
            let mut rlin = vec![0.0f64; std.lin.len()];
            let mut rblk = vec![0.0f64; std.blocks.len()];
            for (r, row) in std.eq.iter().enumerate() {
                for &(v, a) in row {
                    let t = (a * row_eq[r] * col[v]).abs();
                    cmax[v] = cmax[v].max(t);
                    req[r] = req[r].max(t);
                }
            }
            for (r, row) in std.lin.iter().enumerate() {
                for &(v, a) in row {
                    let t = (a * row_lin[r] * col[v]).abs();
                    cmax[v] = cmax[v].max(t);
                    rlin[r] = rlin[r].max(t);
                }
            }
            for (k, blk) in std.blocks.iter().enumerate() {
                for (v, ents) in &blk.terms {
                    for &(_, _, a) in ents {
                        let t = (a * row_blk[k] * col[*v]).abs();
                        cmax[*v] = cmax[*v].max(t);
                        rblk[k] = rblk[k].max(t);
                    }
                }
            }
            let upd = |s: &mut f64, m: f64| {
                if m > 0.0 {
                    *s = (*s / m.sqrt()).clamp(1e-6, 1e6);
                }
            };
            let mut worst = 0.0f64;
            for (s, m) in col.iter_mut().zip(&cmax) {
                upd(s, *m);
                worst = worst.max((m.ln()).abs());
            }
            for (s, m) in row_eq.iter_mut().zip(&req) {
                upd(s, *m);
            }
            for (s, m) in row_lin.iter_mut().zip(&rlin) {
                upd(s, *m);
            }
            for (s, m) in row_blk.iter_mut().zip(&rblk) {
                upd(s, *m);
            }
            if worst < 1e-3 {
                break;
            }
        }
        for (r, row) in std.eq.iter_mut().enumerate() {
            for (v, a) in row.iter_mut() {
                *a *= row_eq[r] * col[*v];
            }
            std.b[r] *= row_eq[r];
        }
        for (r, row) in std.lin.iter_mut().enumerate() {
            for (v, a) in row.iter_mut() {
                *a *= row_lin[r] * col[*v];
            }
            std.hl[r] *= row_lin[r];
        }
        for (k, blk) in std.blocks.iter_mut().enumerate() {
            for (v, ents) in blk.terms.iter_mut() {
                for e in ents.iter_mut() {
                    e.2 *= row_blk[k] * col[*v];
                }
            }
            blk.f0 *= row_blk[k];
        }
    }
    for (cv, s) in std.c.iter_mut().zip(&col) {
        *cv *= s;
    }
    let cmax = std.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cost = if equilibrate && cmax > 0.0 { 1.0 / cmax } else { 1.0 };
    for cv in std.c.iter_mut() {
        *cv *= cost;
    }
    Prepared { std, keep, loose, eq_rows, lin_src, col, row_eq, row_lin, cost }
}

fn to_block(pb: &PsdBlock, pos: &[usize]) -> Block {
    let k = pb.size;
    let mut f0 = DMatrix::zeros(k, k);
    for &(i, j, c) in &pb.constant {
        f0[(i, j)] += c;
        if i != j {
            f0[(j, i)] += c;
        }
    }
    let mut by_var: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();
    for &(v, i, j, c) in &pb.terms {
        if c != 0.0 && pos[v] != usize::MAX {
            by_var.entry(pos[v]).or_default().push((i, j, c));
        }
    }
    Block { k, f0, terms: by_var.into_iter().collect() }
}

fn full_vector(prep: &Prepared, nv: usize, xs: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; nv];
    for (k, &v) in prep.keep.iter().enumerate() {
        x[v] = prep.col[k] * xs[k];
    }
    x
}

/// Checks a candidate recession direction: homogeneous rows hold, cones contain it,
/// and the objective (in the program's sense) improves by at least `1 - tol` per unit.
pub fn certify_ray(prog: &ConicProgram, ray: &[f64], tol: f64) -> bool {
    if ray.len() != prog.vars {
        return false;
    }
    let sg = sign(prog.sense);
    let gain = -sg * prog.objective_value(ray);
    if !(gain > 0.0) {
        return false;
    }
    let r: Vec<f64> = ray.iter().map(|v| v / gain).collect();
    let scale = 1.0 + r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lin = |e: &[(usize, f64)]| e.iter().map(|&(v, a)| a * r[v]).sum::<f64>();
    for row in &prog.rows {
        let norm = 1.0 + row.coefs.iter().fold(0.0f64, |m, &(_, a)| m.max(a.abs()));
        let a = lin(&row.coefs);
        let bad = match row.rel {
            Relation::Le => a > tol * norm * scale,
            Relation::Eq => a.abs() > tol * norm * scale,
        };
        if bad {
            return false;
        }
    }
    if prog.nonneg.iter().any(|f| lin(f) < -tol * scale) {
        return false;
    }
    prog.psd_blocks.iter().all(|b| {
        let hom = PsdBlock { size: b.size, constant: Vec::new(), terms: b.terms.clone() };
        let m = hom.matrix(&r);
        crate::symtensor::min_eigenvalue(&m) >= -tol * scale
    })
}

fn settings(cfg: &SolverConfig, prep: &Prepared) -> Settings {
    Settings {
        tol_feas: cfg.tol_feas,
        tol_gap: cfg.tol_gap,
        max_iter: cfg.max_iter,
        unbounded_level: cfg.unbounded_threshold * prep.cost,
        log: cfg.verbose,
    }
}

fn primal_violation(prog: &ConicProgram, x: &[f64]) -> f64 {
    let psd = prog.min_block_eigenvalue(x).min(0.0);
    prog.max_linear_violation(x).max(-psd)
}

pub fn solve(prog: &ConicProgram, cfg: &SolverConfig) -> Result<SolveReport, SolverError> {
    if prog.rows.is_empty() && prog.nonneg.is_empty() && prog.psd_blocks.is_empty() {
        return Err(SolverError::Empty);
    }
    if let Err(msg) = prog.validate() {
        let mut rep = SolveReport::bare(Status::NumericalTrouble, prog);
        rep.message = Some(msg);
        return Ok(rep);
    }
    Ok(run(prog, cfg, true))
}

pub fn lp_solve(prog: &ConicProgram, cfg: &SolverConfig) -> Result<SolveReport, SolverError> {
    if !prog.psd_blocks.is_empty() {
        return Err(SolverError::HasPsdBlocks);
    }
    solve(prog, cfg)
}

fn run(prog: &ConicProgram, cfg: &SolverConfig, allow_ray_search: bool) -> SolveReport {
    let prep = prepare(prog, true);
    let sg = sign(prog.sense);
    let mut rep = SolveReport::bare(Status::NumericalTrouble, prog);
    let out = ipm::hsde(&prep.std, &settings(cfg, &prep));
    rep.iterations = out.iters;
    let x = full_vector(&prep, prog.vars, &out.x);

    let unbounded = |rep: &mut SolveReport, ray: Option<Vec<f64>>, heuristic: bool| {
        rep.status = Status::Unbounded;
        rep.primal_value = -sg * f64::INFINITY;
        rep.dual_value = f64::NAN;
        rep.ray = ray;
        rep.heuristic = heuristic;
    };

    match out.exit {
        Exit::Optimal | Exit::MaxIter | Exit::Stalled => {
            let tau = out.tau;
            let xs: Vec<f64> = x.iter().map(|v| v / tau).collect();
            let mut mult = vec![0.0; prog.rows.len()];
            for (k, &r) in prep.eq_rows.iter().enumerate() {
                mult[r] = prep.row_eq[k] * out.y[k] / prep.cost / tau;
            }
            for (k, src) in prep.lin_src.iter().enumerate() {
                if let LinSrc::Row(r) = src {
                    mult[*r] = prep.row_lin[k] * out.z[k] / prep.cost / tau;
                }
            }
            let pval = prog.objective_value(&xs);
            let h = prep.std.h();
            let dmin = -(ipm::dot(&prep.std.b, &out.y) + ipm::dot(&h, &out.z)) / tau / prep.cost;
            let dval = sg * dmin;
            rep.primal_value = pval;
            rep.dual_value = dval;
            rep.multipliers = mult;
            let mut rx = prep.std.aty(&out.y);
            for (a, g) in rx.iter_mut().zip(prep.std.gtz(&out.z)) {
                *a += g;
            }
            let dual = rx
                .iter()
                .zip(&prep.std.c)
                .zip(&prep.col)
                .map(|((r, c), d)| ((r / tau + c) / (prep.cost * d)).abs())
                .fold(0.0, f64::max);
            rep.residuals = Residuals {
                primal: primal_violation(prog, &xs),
                dual,
                gap: (pval - dval).abs(),
            };
            rep.primal_solution = xs;
            rep.status = match out.exit {
                Exit::Optimal => Status::Optimal,
                Exit::MaxIter => Status::MaxIter,
                _ => Status::NumericalTrouble,
            };
            if rep.status == Status::Optimal && !prep.loose.is_empty() {
                let mut ray = vec![0.0; prog.vars];
                let (v, c) = prep.loose[0];
                ray[v] = -c.signum();
                unbounded(&mut rep, Some(ray), false);
            } else if rep.status == Status::Optimal && -sg * pval > cfg.unbounded_threshold {
                unbounded(&mut rep, None, true);
            }
        }
        Exit::HeuristicUnbounded => unbounded(&mut rep, None, true),
        Exit::DualInfeasible => {
            let ray = x;
            if certify_ray(prog, &ray, 1e-6) {
                let gain = -sg * prog.objective_value(&ray);
                unbounded(&mut rep, Some(ray.iter().map(|v| v / gain).collect()), false);
            } else if let Some(r) = allow_ray_search.then(|| find_improving_ray(prog, cfg)).flatten() {
                unbounded(&mut rep, Some(r), false);
            } else {
                rep.message = Some("unboundedness certificate failed verification".into());
            }
        }
        Exit::PrimalInfeasible => {
            rep.status = Status::Infeasible;
        }
    }
    rep
}

/// Searches for a recession direction r with homogeneous rows satisfied, r in the cones,
/// and objective improvement 1 (in the program's sense).
pub fn find_improving_ray(prog: &ConicProgram, cfg: &SolverConfig) -> Option<Vec<f64>> {
    let sg = sign(prog.sense);
    if prog.objective.iter().all(|&(_, a)| a == 0.0) {
        return None;
    }
    let mut hom = prog.clone();
    hom.sense = Sense::Min;
    hom.objective = prog.objective.iter().map(|&(v, a)| (v, sg * a)).collect();
    for r in hom.rows.iter_mut() {
        r.rhs = 0.0;
    }
    for b in hom.psd_blocks.iter_mut() {
        b.constant.clear();
    }
    hom.rows.push(Row {
        coefs: hom.objective.iter().map(|&(v, a)| (v, -a)).collect(),
        rel: Relation::Le,
        rhs: 1.0,
    });
    // Bound the cone part so the optimal face is compact.
    let mut trace: std::collections::BTreeMap<usize, f64> = Default::default();
    for b in &hom.psd_blocks {
        for &(v, i, j, a) in &b.terms {
            if i == j {
                *trace.entry(v).or_insert(0.0) += a;
            }
        }
    }
    for f in &hom.nonneg {
        for &(v, a) in f {
            *trace.entry(v).or_insert(0.0) += a;
        }
    }
    if !trace.is_empty() {
        hom.rows.push(Row { coefs: trace.into_iter().collect(), rel: Relation::Le, rhs: 1e6 });
    }
    let rep = run(&hom, cfg, false);
    if rep.status == Status::Infeasible || rep.status == Status::Unbounded || !(rep.primal_value <= -0.5) {
        return None;
    }
    let r = rep.primal_solution;
    certify_ray(prog, &r, 1e-6).then(|| {
        let gain = -sg * prog.objective_value(&r);
        r.iter().map(|v| v / gain).collect()
    })
}
