//! Checkers and brute-force oracles shared by the property tests and the acceptance runner.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use popcone::polynomial::{Constraint, Domain, Exponent, Polynomial, PopProblem, Relation, Sense};
use popcone::relax::{
    build_lifting_map, build_qp_relaxation, build_tensor_relaxation, ConeKind, ConicProgram, PsdBlock, Row,
};
use popcone::solver::{solve, SolverConfig, Status};
use popcone::symtensor::{
    enumerate_slices, exponents, homogenize, inner_product, m_d, min_eigenvalue, slice, t_d, SymmetricTensor,
};

pub type Check = Result<(), String>;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

pub fn random_poly(rng: &mut ChaCha8Rng, n: usize, deg: u32) -> Polynomial {
    let mut p = Polynomial::zero(n);
    for k in 0..=deg {
        for e in exponents(n, k) {
            if rng.gen_bool(0.6) {
                p.add_term(e, rng.gen_range(-5..=5) as f64);
            }
        }
    }
    p
}

pub fn random_point(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Every index tuple in `{0..n}^d`.
pub fn tuples(n: usize, d: u32) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..n).map(move |i| {
                    let mut t = t.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    out
}

/// `sum over all index tuples of a[i..] * b[i..]`, read through the tuple accessor.
pub fn naive_inner(a: &SymmetricTensor, b: &SymmetricTensor) -> f64 {
    tuples(a.dim(), a.order()).iter().map(|t| a.at(t) * b.at(t)).sum()
}

pub fn check_roundtrip(p: &Polynomial, x: &[f64]) -> Check {
    let d = p.degree().max(1);
    for order in [d, d + 1, d + 2] {
        let lhs = inner_product(&t_d(p, order).map_err(|e| e.to_string())?, &m_d(&homogenize(x), order))
            .map_err(|e| e.to_string())?;
        let rhs = p.eval(x).map_err(|e| e.to_string())?;
        if (lhs - rhs).abs() > 1e-9 * (1.0 + rhs.abs()) {
            return Err(format!("order {order}: <T_d(p), M_d(1,x)> = {lhs}, p(x) = {rhs}"));
        }
        let mut zx = vec![0.0];
        zx.extend_from_slice(x);
        let top = inner_product(&t_d(p, order).unwrap(), &m_d(&zx, order)).unwrap();
        let want = p.homogeneous_part(order).eval(x).unwrap();
        if (top - want).abs() > 1e-9 * (1.0 + want.abs()) {
            return Err(format!("order {order}: <T_d(p), M_d(0,x)> = {top}, top part = {want}"));
        }
    }
    Ok(())
}

pub fn check_prop1(x: &[f64], d: u32) -> Check {
    let n = x.len();
    let brute: f64 = tuples(n, d).iter().map(|t| t.iter().map(|&i| x[i]).product::<f64>()).sum();
    let fast = inner_product(&popcone::symtensor::e_tensor(n, d), &m_d(x, d)).unwrap();
    let closed = x.iter().sum::<f64>().powi(d as i32);
    if close(fast, brute, 1e-10) && close(closed, brute, 1e-10) {
        Ok(())
    } else {
        Err(format!("n={n} d={d}: fast {fast} brute {brute} closed {closed}"))
    }
}

pub fn check_prop2(x: &[f64], y: &[f64], d: u32) -> Check {
    let n = x.len();
    let brute: f64 = tuples(n, d)
        .iter()
        .map(|t| t.iter().map(|&i| x[i]).product::<f64>() * t.iter().map(|&i| y[i]).product::<f64>())
        .sum();
    let (mx, my) = (m_d(x, d), m_d(y, d));
    let fast = inner_product(&mx, &my).unwrap();
    let naive = naive_inner(&mx, &my);
    let closed = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>().powi(d as i32);
    if close(fast, brute, 1e-10) && close(naive, brute, 1e-10) && close(closed, brute, 1e-10) {
        Ok(())
    } else {
        Err(format!("n={n} d={d}: fast {fast} naive {naive} brute {brute} closed {closed}"))
    }
}

fn psd_tol(m: &DMatrix<f64>) -> f64 {
    1e-9 * (1.0 + m.abs().max())
}

/// Nonnegative point: every slice of `M_d(x)` is PSD and every entry is nonnegative.
pub fn check_prop5a(x: &[f64], d: u32) -> Check {
    let t = m_d(x, d);
    if let Some((e, v)) = t.entries().find(|(_, v)| *v < 0.0) {
        return Err(format!("negative entry {v} at {e:?}"));
    }
    for g in enumerate_slices(x.len(), d, false) {
        let m = slice(&t, &g).unwrap();
        let ev = min_eigenvalue(&m);
        if ev < -psd_tol(&m) {
            return Err(format!("slice {:?} has eigenvalue {ev}", g.gamma));
        }
    }
    Ok(())
}

/// Mixed-sign point: every principal slice of `M_{2k}(x)` is PSD.
pub fn check_prop5b(x: &[f64], order: u32) -> Check {
    let t = m_d(x, order);
    for g in enumerate_slices(x.len(), order, true) {
        let m = slice(&t, &g).unwrap();
        let ev = min_eigenvalue(&m);
        if ev < -psd_tol(&m) {
            return Err(format!("principal slice {:?} has eigenvalue {ev}", g.gamma));
        }
    }
    Ok(())
}

pub fn quartic_n3() -> PopProblem {
    let n = 3;
    let obj = (0..n).fold(Polynomial::zero(n), |acc, i| &acc + &Polynomial::var(n, i)).pow(4);
    let ball = (0..n).fold(Polynomial::zero(n), |acc, i| &acc + &Polynomial::var(n, i).pow(2));
    PopProblem::new(n, Sense::Min, Domain::Orthant, obj.scale(-1.0), vec![Constraint::le(ball, 1.0)]).unwrap()
}

/// Program sizes of the tensor and quadratic relaxations of a 3-variable quartic.
pub fn check_table1_shapes() -> Check {
    let pop = quartic_n3();
    let tp = build_tensor_relaxation(&pop, ConeKind::Dnn, false).map_err(|e| e.to_string())?.shape();
    // distinct gammas of degree 2 over 4 coordinates
    let want = (35, 10, 4, 35);
    let got = (tp.vars, tp.psd_blocks, tp.max_block, tp.nonneg);
    if got != want {
        return Err(format!("TP-DNN (vars, blocks, size, nonneg) = {got:?}, expected {want:?}"));
    }
    let mut free = pop.clone();
    free.domain = Domain::Free;
    let sdp = build_tensor_relaxation(&free, ConeKind::Sdp, false).map_err(|e| e.to_string())?.shape();
    if (sdp.vars, sdp.psd_blocks, sdp.max_block) != (35, 4, 4) {
        return Err(format!("TP-SDP shape {sdp:?}"));
    }
    let (lifted, map) = popcone::relax::qcqp_reformulate(&pop).map_err(|e| e.to_string())?;
    let qp = build_qp_relaxation(&lifted, &map, ConeKind::Dnn, false).map_err(|e| e.to_string())?.shape();
    if (qp.psd_blocks, qp.max_block, qp.vars) != (1, 10, 55) {
        return Err(format!("QP-DNN shape {qp:?}"));
    }
    Ok(())
}

pub fn check_lifting_bijective(n: usize) -> Check {
    let map = build_lifting_map(n);
    let r = n * (n + 1) / 2;
    if map.r() != r {
        return Err(format!("n={n}: r = {}, expected {r}", map.r()));
    }
    let mut seen = vec![false; r + 1];
    for a in 1..=n {
        for b in a..=n {
            // c = (n + 1 - a/2)(a - 1) + b - a + 1 evaluated in floating point
            let c_ref = (n as f64 + 1.0 - a as f64 / 2.0) * (a as f64 - 1.0) + (b - a + 1) as f64;
            let c = map.index(a, b);
            if c as f64 != c_ref || c == 0 || c > r || seen[c] {
                return Err(format!("n={n}: ({a},{b}) -> {c}, formula {c_ref}"));
            }
            seen[c] = true;
            if map.pair(c) != (a, b) || map.index(b, a) != c {
                return Err(format!("n={n}: pair({c}) = {:?}", map.pair(c)));
            }
        }
    }
    Ok(())
}

/// Maximization of a nonnegative-coefficient quartic over `sum x_i^4 <= B`, `sum x_i <= r`
/// on the orthant, lifted to `z = (x, y)`. Terms are `x_i^4`, `x_i^2 x_j^2`, `x_i^2` and,
/// with `linear`, `x_i`. A cubic or `x_i x_j` term lets relaxed linking grow `Z_xx`
/// without bound; linear terms let it exceed the equality-linked optimum.
pub fn prop6_instance(rng: &mut ChaCha8Rng, n: usize, linear: bool) -> PopProblem {
    let x = |i| Polynomial::var(n, i);
    let mut obj = Polynomial::zero(n);
    let mut push = |p: Polynomial, rng: &mut ChaCha8Rng| {
        obj = &obj + &p.scale(rng.gen_range(0..=5) as f64);
    };
    for i in 0..n {
        for k in [2, 4] {
            push(x(i).pow(k), rng);
        }
        if linear {
            push(x(i), rng);
        }
        for j in i + 1..n {
            push((&x(i) * &x(j)).pow(2), rng);
        }
    }
    if obj.is_zero() {
        obj = x(0).pow(4);
    }
    let quartic = (0..n).fold(Polynomial::zero(n), |acc, i| &acc + &x(i).pow(4));
    let lin = (0..n).fold(Polynomial::zero(n), |acc, i| &acc + &x(i));
    let cons = vec![
        Constraint::le(quartic, rng.gen_range(2..=10) as f64),
        Constraint::le(lin, rng.gen_range(1..=3) as f64),
    ];
    let pop = PopProblem::new(n, Sense::Max, Domain::Orthant, obj, cons).unwrap();
    popcone::relax::qcqp_reformulate(&pop).unwrap().0
}

/// Optimal values of the QP-DNN relaxation with equality and with relaxed linking rows.
pub fn prop6_values(pop: &PopProblem, n: usize) -> Result<(f64, f64), String> {
    let map = build_lifting_map(n);
    let mut vals = [0.0; 2];
    for (k, relaxed) in [false, true].into_iter().enumerate() {
        let prog = build_qp_relaxation(pop, &map, ConeKind::Dnn, relaxed).map_err(|e| e.to_string())?;
        let rep = solve(&prog, &SolverConfig::default()).map_err(|e| e.to_string())?;
        if rep.status != Status::Optimal {
            return Err(format!("relaxed={relaxed}: {}", rep.status));
        }
        vals[k] = rep.primal_value;
    }
    Ok((vals[0], vals[1]))
}

pub fn check_prop6(pop: &PopProblem, n: usize) -> Check {
    if !popcone::relax::check_prop6_applicability(pop) {
        return Err("instance outside the nonnegative-coefficient regime".into());
    }
    let (eq, rel) = prop6_values(pop, n)?;
    if (eq - rel).abs() <= 1e-6 * (1.0 + eq.abs()) {
        Ok(())
    } else {
        Err(format!("equality linking {eq}, relaxed linking {rel}"))
    }
}

/// Random LP `min c'x, A x <= b, 0 <= x <= u` in two or three variables.
pub fn random_lp(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let n = rng.gen_range(2..=3);
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        a.push((0..n).map(|_| rng.gen_range(-4..=4) as f64).collect());
        b.push(rng.gen_range(1..=10) as f64);
    }
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        a.push(e);
        b.push(rng.gen_range(1..=6) as f64);
    }
    (c, a, b)
}

pub fn lp_program(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> ConicProgram {
    let n = c.len();
    let mut p = ConicProgram::new(n, Sense::Min);
    p.objective = c.iter().enumerate().map(|(i, &v)| (i, v)).collect();
    for (row, &rhs) in a.iter().zip(b) {
        p.rows.push(Row { coefs: row.iter().enumerate().map(|(i, &v)| (i, v)).collect(), rel: Relation::Le, rhs });
    }
    p.nonneg = (0..n).map(|i| vec![(i, 1.0)]).collect();
    p
}

/// Optimum of `min c'x, A x <= b, x >= 0` by enumerating every basis of active constraints.
pub fn lp_vertex_oracle(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let n = c.len();
    let mut rows: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = -1.0;
        rows.push((e, 0.0));
    }
    let m = rows.len();
    let mut best: Option<f64> = None;
    fn combos(m: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            combos(m, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut all = Vec::new();
    combos(m, n, 0, &mut Vec::new(), &mut all);
    for set in all {
        let mat = DMatrix::from_fn(n, n, |i, j| rows[set[i]].0[j]);
        let rhs = DVector::from_fn(n, |i, _| rows[set[i]].1);
        let Some(x) = mat.lu().solve(&rhs) else { continue };
        let feasible = rows.iter().all(|(r, bi)| r.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= bi + 1e-9);
        if feasible {
            let v: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
            best = Some(best.map_or(v, |bv: f64| bv.min(v)));
        }
    }
    best
}

/// 2x2 SDP over `X = [[x0, x1], [x1, x2]]` and its closed-form optimum.
pub fn random_sdp(rng: &mut ChaCha8Rng, kind: usize) -> (ConicProgram, f64) {
    let a = rng.gen_range(-5..=5) as f64;
    let bb = rng.gen_range(-5..=5) as f64;
    let c = rng.gen_range(-5..=5) as f64;
    let mut p = ConicProgram::new(3, Sense::Min);
    p.objective = vec![(0, a), (1, 2.0 * bb), (2, c)];
    p.psd_blocks.push(PsdBlock {
        size: 2,
        constant: Vec::new(),
        terms: vec![(0, 0, 0, 1.0), (1, 0, 1, 1.0), (2, 1, 1, 1.0)],
    });
    let value = if kind % 2 == 0 {
        // trace one: smallest eigenvalue of [[a, b], [b, c]]
        p.rows.push(Row { coefs: vec![(0, 1.0), (2, 1.0)], rel: Relation::Eq, rhs: 1.0 });
        (a + c) / 2.0 - (((a - c) / 2.0).powi(2) + bb * bb).sqrt()
    } else {
        // unit diagonal: a + c - 2|b|
        p.rows.push(Row { coefs: vec![(0, 1.0)], rel: Relation::Eq, rhs: 1.0 });
        p.rows.push(Row { coefs: vec![(2, 1.0)], rel: Relation::Eq, rhs: 1.0 });
        a + c - 2.0 * bb.abs()
    };
    (p, value)
}

pub fn check_solver_lp(rng: &mut ChaCha8Rng) -> Check {
    let (c, a, b) = random_lp(rng);
    let want = lp_vertex_oracle(&c, &a, &b).ok_or("oracle found no vertex")?;
    let rep = solve(&lp_program(&c, &a, &b), &SolverConfig::default()).map_err(|e| e.to_string())?;
    if rep.status == Status::Optimal && (rep.primal_value - want).abs() <= 1e-6 * (1.0 + want.abs()) {
        Ok(())
    } else {
        Err(format!("LP c={c:?}: solver {} {}, vertex oracle {want}", rep.status, rep.primal_value))
    }
}

pub fn check_solver_sdp(rng: &mut ChaCha8Rng, kind: usize) -> Check {
    let (prog, want) = random_sdp(rng, kind);
    let rep = solve(&prog, &SolverConfig::default()).map_err(|e| e.to_string())?;
    if rep.status == Status::Optimal && (rep.primal_value - want).abs() <= 1e-6 * (1.0 + want.abs()) {
        Ok(())
    } else {
        Err(format!("SDP {:?}: solver {} {}, closed form {want}", prog.objective, rep.status, rep.primal_value))
    }
}

pub fn check_json_roundtrip(pop: &PopProblem) -> Check {
    let back = PopProblem::from_json(&pop.to_json()).map_err(|e| e.to_string())?;
    if &back == pop {
        Ok(())
    } else {
        Err("problem changed across a JSON round trip".into())
    }
}

pub fn random_pop(rng: &mut ChaCha8Rng) -> PopProblem {
    let n = rng.gen_range(1..=3);
    let obj = loop {
        let deg = rng.gen_range(1..=4);
        let p = random_poly(rng, n, deg);
        if p.degree() >= 1 {
            break p;
        }
    };
    let mut cons = Vec::new();
    for _ in 0..rng.gen_range(0..=3) {
        let deg = rng.gen_range(0..=4);
        let p = random_poly(rng, n, deg);
        let rhs = rng.gen_range(-3..=3) as f64;
        cons.push(if rng.gen_bool(0.5) { Constraint::le(p, rhs) } else { Constraint::eq(p, rhs) });
    }
    let sense = if rng.gen_bool(0.5) { Sense::Min } else { Sense::Max };
    let domain = if rng.gen_bool(0.5) { Domain::Orthant } else { Domain::Free };
    PopProblem::new(n, sense, domain, obj, cons).unwrap()
}

pub fn exponent(v: &[u32]) -> Exponent {
    Exponent(v.to_vec())
}
