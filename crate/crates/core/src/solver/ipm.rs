//! Homogeneous self-dual interior-point iteration on
//! `min c'x  s.t.  Ax = b,  Gx + s = h,  s in K` with K a product of a nonnegative
//! orthant and PSD cones. PSD cone vectors are stored as full column-major matrices,
//! so the Euclidean dot product is the trace inner product.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};

pub(crate) type SparseRow = Vec<(usize, f64)>;

pub(crate) struct Block {
    pub k: usize,
    /// Constant term of the affine map.
    pub f0: DMatrix<f64>,
    /// Coefficient matrix of each variable, as `(i <= j, value)` entries.
    pub terms: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

/// `G x = (-lin x, ...)`: linear rows `lin x <= hl` and blocks `f0 + sum x_v F_v >= 0`.
pub(crate) struct Std {
    pub n: usize,
    pub c: Vec<f64>,
    pub eq: Vec<SparseRow>,
    pub b: Vec<f64>,
    pub lin: Vec<SparseRow>,
    pub hl: Vec<f64>,
    pub blocks: Vec<Block>,
}

impl Std {
    pub fn cone_dim(&self) -> usize {
        self.lin.len() + self.blocks.iter().map(|b| b.k * b.k).sum::<usize>()
    }

    /// Barrier degree of the cone.
    pub fn degree(&self) -> usize {
        self.lin.len() + self.blocks.iter().map(|b| b.k).sum::<usize>()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len());
        let mut o = self.lin.len();
        for b in &self.blocks {
            off.push(o);
            o += b.k * b.k;
        }
        off
    }

    pub fn h(&self) -> Vec<f64> {
        let mut h = self.hl.clone();
        for b in &self.blocks {
            h.extend_from_slice(b.f0.as_slice());
        }
        h
    }

    pub fn gx(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cone_dim()];
        for (r, row) in self.lin.iter().enumerate() {
            out[r] = row.iter().map(|&(j, a)| a * x[j]).sum();
        }
        for (b, off) in self.blocks.iter().zip(self.offsets()) {
            let k = b.k;
            let m = &mut out[off..off + k * k];
            for (v, ents) in &b.terms {
                let xv = x[*v];
                if xv == 0.0 {
                    continue;
                }
                for &(i, j, c) in ents {
                    m[i + j * k] -= c * xv;
                    if i != j {
                        m[j + i * k] -= c * xv;
                    }
                }
            }
        }
        out
    }

    pub fn gtz(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (r, row) in self.lin.iter().enumerate() {
            for &(j, a) in row {
                out[j] += a * z[r];
            }
        }
        for (b, off) in self.blocks.iter().zip(self.offsets()) {
            let k = b.k;
            let m = &z[off..off + k * k];
            for (v, ents) in &b.terms {
                let mut acc = 0.0;
                for &(i, j, c) in ents {
                    acc += if i == j { c * m[i + i * k] } else { c * (m[i + j * k] + m[j + i * k]) };
                }
                out[*v] -= acc;
            }
        }
        out
    }

    pub fn ax(&self, x: &[f64]) -> Vec<f64> {
        self.eq.iter().map(|row| row.iter().map(|&(j, a)| a * x[j]).sum()).collect()
    }

    pub fn aty(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (row, &yr) in self.eq.iter().zip(y) {
            for &(j, a) in row {
                out[j] += a * yr;
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn mat(v: &[f64], k: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(k, k, v)
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

struct BlockScale {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    lam: Vec<f64>,
    /// `(R R^T)^{-1}`.
    winv: DMatrix<f64>,
}

/// Nesterov-Todd scaling `W` with `W z = W^{-T} s = lambda`.
struct Scaling {
    d: Vec<f64>,
    lam_lin: Vec<f64>,
    blocks: Vec<BlockScale>,
}

impl Scaling {
    fn identity(std: &Std) -> Self {
        Scaling {
            d: vec![1.0; std.lin.len()],
            lam_lin: vec![1.0; std.lin.len()],
            blocks: std
                .blocks
                .iter()
                .map(|b| BlockScale {
                    r: DMatrix::identity(b.k, b.k),
                    rinv: DMatrix::identity(b.k, b.k),
                    lam: vec![1.0; b.k],
                    winv: DMatrix::identity(b.k, b.k),
                })
                .collect(),
        }
    }

    fn nt(std: &Std, s: &[f64], z: &[f64]) -> Option<Self> {
        let ml = std.lin.len();
        let mut d = Vec::with_capacity(ml);
        let mut lam_lin = Vec::with_capacity(ml);
        for i in 0..ml {
            if s[i] <= 0.0 || z[i] <= 0.0 {
                return None;
            }
            d.push((s[i] / z[i]).sqrt());
            lam_lin.push((s[i] * z[i]).sqrt());
        }
        let mut blocks = Vec::with_capacity(std.blocks.len());
        for (b, off) in std.blocks.iter().zip(std.offsets()) {
            let k = b.k;
            let sm = sym(mat(&s[off..off + k * k], k));
            let zm = sym(mat(&z[off..off + k * k], k));
            let ls = Cholesky::new(sm)?.unpack();
            let lz = Cholesky::new(zm)?.unpack();
            let svd = SVD::new(lz.transpose() * &ls, true, true);
            let u = svd.u?;
            let v = svd.v_t?.transpose();
            let lam: Vec<f64> = svd.singular_values.iter().copied().collect();
            if lam.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
                return None;
            }
            let isq = DMatrix::from_diagonal(&DVector::from_iterator(k, lam.iter().map(|l| 1.0 / l.sqrt())));
            let r = &ls * &v * &isq;
            let rinv = &isq * u.transpose() * lz.transpose();
            let winv = rinv.transpose() * &rinv;
            blocks.push(BlockScale { r, rinv, lam, winv });
        }
        Some(Scaling { d, lam_lin, blocks })
    }

    fn map_blocks(
        &self,
        std: &Std,
        u: &[f64],
        lin: impl Fn(usize, f64) -> f64,
        blk: impl Fn(&BlockScale, DMatrix<f64>) -> DMatrix<f64>,
    ) -> Vec<f64> {
        let mut out = Vec::with_capacity(u.len());
        for (i, &ui) in u[..std.lin.len()].iter().enumerate() {
            out.push(lin(i, ui));
        }
        for (b, (sc, off)) in std.blocks.iter().zip(self.blocks.iter().zip(std.offsets())) {
            let m = blk(sc, mat(&u[off..off + b.k * b.k], b.k));
            out.extend_from_slice(m.as_slice());
        }
        out
    }

    /// `W u`.
    fn w(&self, std: &Std, u: &[f64]) -> Vec<f64> {
        self.map_blocks(std, u, |i, x| self.d[i] * x, |sc, m| sc.r.transpose() * m * &sc.r)
    }

    /// `W^T u`.
    fn wt(&self, std: &Std, u: &[f64]) -> Vec<f64> {
        self.map_blocks(std, u, |i, x| self.d[i] * x, |sc, m| &sc.r * m * sc.r.transpose())
    }

    /// `W^{-T} u`.
    fn winvt(&self, std: &Std, u: &[f64]) -> Vec<f64> {
        self.map_blocks(std, u, |i, x| x / self.d[i], |sc, m| &sc.rinv * m * sc.rinv.transpose())
    }

    /// `(W^T W)^{-1} u`.
    fn wtw_inv(&self, std: &Std, u: &[f64]) -> Vec<f64> {
        self.map_blocks(std, u, |i, x| x / (self.d[i] * self.d[i]), |sc, m| &sc.winv * m * &sc.winv)
    }

    /// `(W^T W) u`.
    fn wtw(&self, std: &Std, u: &[f64]) -> Vec<f64> {
        self.map_blocks(std, u, |i, x| x * self.d[i] * self.d[i], |sc, m| {
            let rrt = &sc.r * sc.r.transpose();
            &rrt * m * &rrt
        })
    }

    /// `lambda o lambda`.
    fn lam_sq(&self, std: &Std) -> Vec<f64> {
        let mut out: Vec<f64> = self.lam_lin.iter().map(|l| l * l).collect();
        for (b, sc) in std.blocks.iter().zip(&self.blocks) {
            let m = DMatrix::from_diagonal(&DVector::from_iterator(b.k, sc.lam.iter().map(|l| l * l)));
            out.extend_from_slice(m.as_slice());
        }
        out
    }

    /// Solves `lambda o u = v`.
    fn lam_div(&self, std: &Std, v: &[f64]) -> Vec<f64> {
        self.map_blocks(std, v, |i, x| x / self.lam_lin[i], |sc, m| {
            let k = sc.lam.len();
            DMatrix::from_fn(k, k, |i, j| 2.0 * m[(i, j)] / (sc.lam[i] + sc.lam[j]))
        })
    }

    /// Largest step `a` with `lambda + a * du` in the cone.
    fn max_step(&self, std: &Std, du: &[f64]) -> f64 {
        let mut a = f64::INFINITY;
        for (i, &v) in du[..std.lin.len()].iter().enumerate() {
            if v < 0.0 {
                a = a.min(-self.lam_lin[i] / v);
            }
        }
        for (b, (sc, off)) in std.blocks.iter().zip(self.blocks.iter().zip(std.offsets())) {
            let k = b.k;
            let m = mat(&du[off..off + k * k], k);
            let scaled = DMatrix::from_fn(k, k, |i, j| m[(i, j)] / (sc.lam[i] * sc.lam[j]).sqrt());
            let e = sym(scaled).symmetric_eigenvalues().min();
            if e < 0.0 {
                a = a.min(-1.0 / e);
            }
        }
        a
    }
}

fn jordan(std: &Std, u: &[f64], v: &[f64]) -> Vec<f64> {
    let ml = std.lin.len();
    let mut out: Vec<f64> = (0..ml).map(|i| u[i] * v[i]).collect();
    for (b, off) in std.blocks.iter().zip(std.offsets()) {
        let k = b.k;
        let um = mat(&u[off..off + k * k], k);
        let vm = mat(&v[off..off + k * k], k);
        let p = (&um * &vm + &vm * &um) * 0.5;
        out.extend_from_slice(p.as_slice());
    }
    out
}

fn identity(std: &Std) -> Vec<f64> {
    let mut out = vec![1.0; std.lin.len()];
    for b in &std.blocks {
        out.extend_from_slice(DMatrix::<f64>::identity(b.k, b.k).as_slice());
    }
    out
}

/// Replaces each block of u by its symmetric part.
fn symmetrize(std: &Std, u: &mut [f64]) {
    for (b, off) in std.blocks.iter().zip(std.offsets()) {
        let k = b.k;
        for j in 0..k {
            for i in j + 1..k {
                let v = 0.5 * (u[off + i + j * k] + u[off + j + i * k]);
                u[off + i + j * k] = v;
                u[off + j + i * k] = v;
            }
        }
    }
}

/// Smallest eigenvalue over the cone components of u.
fn cone_min(std: &Std, u: &[f64]) -> f64 {
    let mut m = u[..std.lin.len()].iter().copied().fold(f64::INFINITY, f64::min);
    for (b, off) in std.blocks.iter().zip(std.offsets()) {
        let e = sym(mat(&u[off..off + b.k * b.k], b.k)).symmetric_eigenvalues().min();
        m = m.min(e);
    }
    m
}

struct Kkt {
    l1: Cholesky<f64, Dyn>,
    /// Jacobi scaling applied before factoring `H + A'A`.
    dinv: DVector<f64>,
    ls: Option<Cholesky<f64, Dyn>>,
}

impl Kkt {
    /// `(H + A'A)^{-1} r`.
    fn solve1(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut u = r.component_mul(&self.dinv);
        self.l1.solve_mut(&mut u);
        u.component_mul_assign(&self.dinv);
        u
    }
}

fn assemble_h(std: &Std, sc: &Scaling) -> DMatrix<f64> {
    let n = std.n;
    let mut h = DMatrix::<f64>::zeros(n, n);
    for (r, row) in std.lin.iter().enumerate() {
        let w = 1.0 / (sc.d[r] * sc.d[r]);
        for &(i, a) in row {
            for &(j, bv) in row {
                h[(i, j)] += w * a * bv;
            }
        }
    }
    for (b, bs) in std.blocks.iter().zip(&sc.blocks) {
        let k = b.k;
        let w = &bs.winv;
        let mut y = DMatrix::<f64>::zeros(k, k);
        for (vj, ej) in &b.terms {
            y.fill(0.0);
            for &(p, q, c) in ej {
                for t in 0..k {
                    let wtp = w[(t, p)];
                    let wtq = w[(t, q)];
                    for s in 0..k {
                        if p == q {
                            y[(s, t)] += c * w[(s, p)] * wtp;
                        } else {
                            y[(s, t)] += c * (w[(s, p)] * wtq + w[(s, q)] * wtp);
                        }
                    }
                }
            }
            for (vi, ei) in &b.terms {
                let mut acc = 0.0;
                for &(p, q, c) in ei {
                    acc += if p == q { c * y[(p, p)] } else { c * (y[(p, q)] + y[(q, p)]) };
                }
                h[(*vi, *vj)] += acc;
            }
        }
    }
    h
}

fn factor(std: &Std, sc: &Scaling) -> Option<Kkt> {
    let n = std.n;
    let p = std.eq.len();
    let mut k1 = assemble_h(std, sc);
    for row in &std.eq {
        for &(i, a) in row {
            for &(j, bv) in row {
                k1[(i, j)] += a * bv;
            }
        }
    }
    let maxdiag = (0..n).map(|i| k1[(i, i)]).fold(0.0, f64::max).max(1e-300);
    let dinv = DVector::from_fn(n, |i, _| 1.0 / k1[(i, i)].max(1e-14 * maxdiag).sqrt());
    for j in 0..n {
        for i in 0..n {
            k1[(i, j)] *= dinv[i] * dinv[j];
        }
    }
    let mut delta = 1e-14;
    let l1 = loop {
        let mut m = k1.clone();
        for i in 0..n {
            m[(i, i)] += delta;
        }
        if let Some(c) = Cholesky::new(m) {
            break c;
        }
        delta *= 100.0;
        if delta > 1e-4 {
            return None;
        }
    };
    let mut at = DMatrix::<f64>::zeros(n, p);
    for (r, row) in std.eq.iter().enumerate() {
        for &(j, a) in row {
            at[(j, r)] += a * dinv[j];
        }
    }
    let y = l1.l().solve_lower_triangular(&at)?;
    let ls = if p > 0 {
        let s = y.transpose() * &y;
        let md = (0..p).map(|i| s[(i, i)]).fold(1e-300, f64::max);
        let mut eps = 1e-14 * md;
        loop {
            let mut m = s.clone();
            for i in 0..p {
                m[(i, i)] += eps;
            }
            if let Some(c) = Cholesky::new(m) {
                break Some(c);
            }
            eps *= 100.0;
            if eps > 1e-2 * md {
                return None;
            }
        }
    } else {
        None
    };
    Some(Kkt { l1, dinv, ls })
}

/// Solves `[0 A' G'; A 0 0; G 0 -W'W] (dx, dy, dz) = (bx, by, bz)` with iterative refinement.
fn kkt_solve(
    std: &Std,
    sc: &Scaling,
    kkt: &Kkt,
    bx: &[f64],
    by: &[f64],
    bz: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let once = |bx: &[f64], by: &[f64], bz: &[f64]| {
        let t = sc.wtw_inv(std, bz);
        let mut r1 = bx.to_vec();
        axpy(1.0, &std.gtz(&t), &mut r1);
        axpy(1.0, &std.aty(by), &mut r1);
        let r1v = DVector::from_vec(r1);
        let dy = match &kkt.ls {
            Some(ls) => {
                let u = kkt.solve1(&r1v);
                let au = DVector::from_vec(sub(&std.ax(u.as_slice()), by));
                ls.solve(&au)
            }
            None => DVector::zeros(0),
        };
        let mut rhs = r1v;
        let atdy = std.aty(dy.as_slice());
        for (ri, a) in rhs.iter_mut().zip(&atdy) {
            *ri -= a;
        }
        let dx = kkt.solve1(&rhs);
        let dx: Vec<f64> = dx.iter().copied().collect();
        let dz = sub(&sc.wtw_inv(std, &std.gx(&dx)), &t);
        (dx, dy.iter().copied().collect::<Vec<f64>>(), dz)
    };
    let (mut dx, mut dy, mut dz) = once(bx, by, bz);
    let scale = 1.0 + norm(bx).max(norm(by)).max(norm(bz));
    for _ in 0..3 {
        let mut e1 = bx.to_vec();
        axpy(-1.0, &std.aty(&dy), &mut e1);
        axpy(-1.0, &std.gtz(&dz), &mut e1);
        let e2 = sub(by, &std.ax(&dx));
        let mut e3 = sub(bz, &std.gx(&dx));
        axpy(1.0, &sc.wtw(std, &dz), &mut e3);
        let err = norm(&e1).max(norm(&e2)).max(norm(&e3));
        if err <= 1e-14 * scale {
            break;
        }
        let (cx, cy, cz) = once(&e1, &e2, &e3);
        axpy(1.0, &cx, &mut dx);
        axpy(1.0, &cy, &mut dy);
        axpy(1.0, &cz, &mut dz);
    }
    (dx, dy, dz)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Exit {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    HeuristicUnbounded,
    MaxIter,
    Stalled,
}

pub(crate) struct Settings {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: usize,
    /// Objective level (in the scaled units of `c`) past which a primal-feasible
    /// iterate is taken as unbounded.
    pub unbounded_level: f64,
    pub log: bool,
}

#[derive(Clone)]
pub(crate) struct Outcome {
    pub exit: Exit,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub tau: f64,
    pub iters: usize,
}

struct Metrics {
    pres: f64,
    dres: f64,
    pcost: f64,
    dcost: f64,
    gap: f64,
}

pub(crate) fn hsde(std: &Std, set: &Settings) -> Outcome {
    let n = std.n;
    let h = std.h();
    let e = identity(std);
    let deg = std.degree() as f64;
    let resx0 = norm(&std.c).max(1.0);
    let resy0 = norm(&std.b).max(1.0);
    let resz0 = norm(&h).max(1.0);

    let fail = |exit, iters| Outcome {
        exit,
        x: vec![0.0; n],
        y: vec![0.0; std.eq.len()],
        z: vec![0.0; h.len()],
        tau: 1.0,
        iters,
    };

    let sc0 = Scaling::identity(std);
    let Some(kkt0) = factor(std, &sc0) else { return fail(Exit::Stalled, 0) };
    let zeros_n = vec![0.0; n];
    let zeros_p = vec![0.0; std.eq.len()];
    let zeros_m = vec![0.0; h.len()];
    let (mut x, _, zt) = kkt_solve(std, &sc0, &kkt0, &zeros_n, &std.b, &h);
    let mut s: Vec<f64> = zt.iter().map(|v| -v).collect();
    let negc: Vec<f64> = std.c.iter().map(|v| -v).collect();
    let (_, mut y, mut z) = kkt_solve(std, &sc0, &kkt0, &negc, &zeros_p, &zeros_m);
    for v in [&mut s, &mut z] {
        symmetrize(std, v);
        let t = -cone_min(std, v);
        if t >= -1e-8 * norm(v).max(1.0) {
            axpy(1.0 + t, &e, v);
        }
    }
    let mut tau = 1.0;
    let mut kappa = 1.0;
    let mut stall = 0;
    let mut best: Option<(f64, Outcome)> = None;
    let mut since_best = 0;

    for iter in 0..=set.max_iter {
        let gx = std.gx(&x);
        let ax = std.ax(&x);
        let aty = std.aty(&y);
        let gtz = std.gtz(&z);
        let cx = dot(&std.c, &x);
        let bhz = dot(&std.b, &y) + dot(&h, &z);
        let mut rx = aty.clone();
        axpy(1.0, &gtz, &mut rx);
        axpy(tau, &std.c, &mut rx);
        let mut ry = ax.clone();
        axpy(-tau, &std.b, &mut ry);
        let mut rz = gx.clone();
        axpy(1.0, &s, &mut rz);
        axpy(-tau, &h, &mut rz);
        let rt = cx + bhz + kappa;
        let sz = dot(&s, &z);
        let mu = (sz + tau * kappa) / (deg + 1.0);

        let m = Metrics {
            pres: (norm(&ry) / resy0).max(norm(&rz) / resz0) / tau,
            dres: norm(&rx) / resx0 / tau,
            pcost: cx / tau,
            dcost: -bhz / tau,
            gap: sz / (tau * tau),
        };
        if set.log {
            eprintln!(
                "{iter:3} pcost {:+.8e} dcost {:+.8e} gap {:.2e} pres {:.2e} dres {:.2e} tau {:.2e} kappa {:.2e}",
                m.pcost, m.dcost, m.gap, m.pres, m.dres, tau, kappa
            );
        }
        let done = |exit| Outcome {
            exit,
            x: x.clone(),
            y: y.clone(),
            z: z.clone(),
            tau,
            iters: iter,
        };
        let merit = m.pres.max(m.dres).max((m.pcost - m.dcost).abs() / (1.0 + m.pcost.abs()));
        if best.as_ref().is_none_or(|(b, _)| merit < *b) {
            best = Some((merit, done(Exit::Stalled)));
            since_best = 0;
        } else {
            since_best += 1;
        }
        // Give up on a run that stopped improving and hand back its best iterate.
        let fallback = |exit, best: &mut Option<(f64, Outcome)>| {
            let mut o = best.take().map(|(_, o)| o).unwrap_or_else(|| done(exit));
            o.exit = exit;
            o.iters = iter;
            o
        };
        let gap_tol = set.tol_gap * (1.0 + m.pcost.abs());
        if m.pres <= set.tol_feas
            && m.dres <= set.tol_feas
            && (m.pcost - m.dcost).abs() <= gap_tol
            && m.gap <= gap_tol
        {
            return done(Exit::Optimal);
        }
        if bhz < 0.0 {
            let mut r = aty.clone();
            axpy(1.0, &gtz, &mut r);
            if norm(&r) / resx0 / (-bhz) <= set.tol_feas {
                return done(Exit::PrimalInfeasible);
            }
        }
        if cx < 0.0 {
            let mut r = gx.clone();
            axpy(1.0, &s, &mut r);
            let dinf = (norm(&ax) / resy0).max(norm(&r) / resz0) / (-cx);
            if dinf <= set.tol_feas {
                return done(Exit::DualInfeasible);
            }
        }
        if m.pres <= 1e3 * set.tol_feas && m.pcost < -set.unbounded_level {
            return done(Exit::HeuristicUnbounded);
        }
        if since_best >= 30 {
            return fallback(Exit::Stalled, &mut best);
        }
        if iter == set.max_iter {
            return fallback(Exit::MaxIter, &mut best);
        }

        let Some(sc) = Scaling::nt(std, &s, &z) else { return fallback(Exit::Stalled, &mut best) };
        let Some(kkt) = factor(std, &sc) else { return fallback(Exit::Stalled, &mut best) };
        let hv: Vec<f64> = h.clone();
        let (x1, y1, z1) = kkt_solve(std, &sc, &kkt, &negc, &std.b, &hv);
        let wz1 = sc.w(std, &z1);
        let denom = -dot(&wz1, &wz1) - kappa / tau;
        let lam_sq = sc.lam_sq(std);

        let mut sigma = 0.0;
        let mut corr = vec![0.0; h.len()];
        let mut corr_t = 0.0;
        let mut step = None;
        for phase in 0..2 {
            let eta = 1.0 - sigma;
            let mut ds: Vec<f64> = lam_sq.iter().map(|v| -v).collect();
            axpy(sigma * mu, &e, &mut ds);
            axpy(-1.0, &corr, &mut ds);
            let dt = -tau * kappa + sigma * mu - corr_t;
            let ld = sc.lam_div(std, &ds);
            let wtld = sc.wt(std, &ld);
            let bx: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
            let by: Vec<f64> = ry.iter().map(|v| -eta * v).collect();
            let mut bz: Vec<f64> = rz.iter().map(|v| -eta * v).collect();
            axpy(-1.0, &wtld, &mut bz);
            let (x0, y0, z0) = kkt_solve(std, &sc, &kkt, &bx, &by, &bz);
            let num = -eta * rt - dt / tau - (dot(&std.c, &x0) + dot(&std.b, &y0) + dot(&h, &z0));
            let dtau = num / denom;
            let mut dx = x0;
            axpy(dtau, &x1, &mut dx);
            let mut dy = y0;
            axpy(dtau, &y1, &mut dy);
            let mut dz = z0;
            axpy(dtau, &z1, &mut dz);
            let dkappa = (dt - kappa * dtau) / tau;
            let wdz = sc.w(std, &dz);
            // The final step takes ds from the linearized residual so that round-off in
            // the scaling does not accumulate in Gx + s - h tau.
            let (dst, ds_full) = if phase == 0 {
                (sub(&ld, &wdz), Vec::new())
            } else {
                let mut ds: Vec<f64> = rz.iter().map(|v| -eta * v).collect();
                axpy(-1.0, &std.gx(&dx), &mut ds);
                axpy(dtau, &h, &mut ds);
                symmetrize(std, &mut ds);
                (sc.winvt(std, &ds), ds)
            };
            let mut amax = sc.max_step(std, &dst).min(sc.max_step(std, &wdz));
            if dtau < 0.0 {
                amax = amax.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                amax = amax.min(-kappa / dkappa);
            }
            if phase == 0 {
                let a = amax.min(1.0);
                sigma = (1.0 - a).powi(3).clamp(0.0, 1.0);
                corr = jordan(std, &dst, &wdz);
                corr_t = dtau * dkappa;
            } else {
                step = Some((dx, dy, dz, ds_full, dtau, dkappa, (0.99 * amax).min(1.0)));
            }
        }
        let (dx, dy, mut dz, mut dsf, dtau, dkappa, alpha) = step.expect("combined step");
        symmetrize(std, &mut dz);
        symmetrize(std, &mut dsf);
        if !(alpha > 0.0) || !alpha.is_finite() {
            return fallback(Exit::Stalled, &mut best);
        }
        if alpha < 1e-8 {
            stall += 1;
            if stall >= 3 {
                return fallback(Exit::Stalled, &mut best);
            }
        } else {
            stall = 0;
        }
        axpy(alpha, &dx, &mut x);
        axpy(alpha, &dy, &mut y);
        axpy(alpha, &dz, &mut z);
        axpy(alpha, &dsf, &mut s);
        tau += alpha * dtau;
        kappa += alpha * dkappa;
    }
    unreachable!("loop returns at max_iter")
}
