//! Sampling search for feasible points, used as an upper (MIN) or lower (MAX) reference
//! value against which relaxation bounds are checked.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::polynomial::{Domain, Polynomial, PopProblem, Relation, Sense};

pub const FEAS_TOL: f64 = 1e-8;
const POLISH_POINTS: usize = 10;
const POLISH_ROUNDS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("oracle report belongs to a different problem")]
    ProblemMismatch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    /// Best objective found; +inf (MIN) or -inf (MAX) when nothing feasible was found.
    pub best_value: f64,
    pub best_point: Vec<f64>,
    pub samples_tried: usize,
    pub feasible_found: bool,
    problem: u64,
}

pub fn problem_fingerprint(pop: &PopProblem) -> u64 {
    let mut h = DefaultHasher::new();
    pop.to_json().hash(&mut h);
    h.finish()
}

struct Search<'a> {
    pop: &'a PopProblem,
    lo: Vec<f64>,
    hi: Vec<f64>,
    eqs: Vec<(Polynomial, Vec<Polynomial>)>,
    sign: f64,
}

impl<'a> Search<'a> {
    fn new(pop: &'a PopProblem) -> Self {
        let n = pop.n;
        let (mut lo, mut hi): (Vec<f64>, Vec<f64>) = match pop.domain {
            Domain::Orthant => (vec![0.0; n], vec![10.0; n]),
            Domain::Free => (vec![-10.0; n], vec![10.0; n]),
        };
        for c in pop.constraints.iter().filter(|c| c.rel == Relation::Le) {
            if c.poly.degree() != 1 {
                continue;
            }
            let lin: Vec<_> = c.poly.terms().filter(|(e, _)| e.degree() == 1).collect();
            if lin.len() != 1 {
                continue;
            }
            let (e, a) = lin[0];
            let i = e.0.iter().position(|&p| p == 1).expect("degree-1 term");
            let constant = c.poly.coef(&crate::polynomial::Exponent::zero(n));
            let t = (c.rhs - constant) / a;
            if a > 0.0 {
                hi[i] = hi[i].min(t);
            } else {
                lo[i] = lo[i].max(t);
            }
        }
        for i in 0..n {
            hi[i] = hi[i].max(lo[i]);
        }
        let eqs = pop
            .constraints
            .iter()
            .filter(|c| c.rel == Relation::Eq)
            .map(|c| {
                let p = c.residual_poly();
                let grad = (0..n).map(|i| p.derivative(i)).collect();
                (p, grad)
            })
            .collect();
        let sign = match pop.sense {
            Sense::Min => 1.0,
            Sense::Max => -1.0,
        };
        Search { pop, lo, hi, eqs, sign }
    }

    /// Gauss-Newton projection onto the equality constraints.
    fn project(&self, x: &mut [f64]) -> bool {
        if self.eqs.is_empty() {
            return true;
        }
        let n = x.len();
        let m = self.eqs.len();
        for _ in 0..50 {
            let r: Vec<f64> = self.eqs.iter().map(|(p, _)| p.eval_unchecked(x)).collect();
            if r.iter().all(|v| v.abs() <= 1e-13) {
                return true;
            }
            let j = DMatrix::from_fn(m, n, |a, b| self.eqs[a].1[b].eval_unchecked(x));
            let jjt = &j * j.transpose();
            let Some(lam) = jjt.lu().solve(&DVector::from_vec(r)) else { return false };
            let step = j.transpose() * lam;
            for (k, xk) in x.iter_mut().enumerate() {
                *xk -= step[k];
                if self.pop.domain == Domain::Orthant && *xk < 0.0 {
                    *xk = 0.0;
                }
            }
        }
        self.eqs.iter().all(|(p, _)| p.eval_unchecked(x).abs() <= 1e-10)
    }

    /// Signed objective (smaller is better) of a feasible point, or None.
    fn score(&self, x: &[f64]) -> Option<f64> {
        if self.pop.is_feasible(x, FEAS_TOL) {
            let v = self.pop.objective_value(x);
            v.is_finite().then_some(self.sign * v)
        } else {
            None
        }
    }

    fn repaired_score(&self, x: &mut [f64]) -> Option<f64> {
        if self.project(x) {
            self.score(x)
        } else {
            None
        }
    }

    fn value(&self, x: &[f64], v: &[f64], t: f64) -> (f64, Vec<f64>) {
        let mut y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + t * b).collect();
        let s = self.repaired_score(&mut y);
        (s.unwrap_or(f64::INFINITY), y)
    }

    /// Largest feasible step in `[0, w]` along v, by bisection from a feasible start.
    fn reach(&self, x: &[f64], v: &[f64], w: f64) -> f64 {
        if self.value(x, v, w).0.is_finite() {
            return w;
        }
        let (mut lo, mut hi) = (0.0, w);
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if self.value(x, v, mid).0.is_finite() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Golden-section search along v over the feasible part of `[-w, w]`.
    fn line_search(&self, x: &[f64], v: &[f64], w: f64) -> (f64, Vec<f64>) {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut a = -self.reach(x, &v.iter().map(|c| -c).collect::<Vec<_>>(), w);
        let mut b = self.reach(x, v, w);
        let mut best = self.value(x, v, 0.0);
        for t in [a, b] {
            let cand = self.value(x, v, t);
            if cand.0 < best.0 {
                best = cand;
            }
        }
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let mut fc = self.value(x, v, c);
        let mut fd = self.value(x, v, d);
        for _ in 0..30 {
            if fc.0 <= fd.0 {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = self.value(x, v, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = self.value(x, v, d);
            }
        }
        for cand in [fc, fd] {
            if cand.0 < best.0 {
                best = cand;
            }
        }
        best
    }

    /// Golden-section refinement along the coordinate axes and the pairwise diagonals,
    /// with brackets shrinking each round.
    fn polish(&self, start: &[f64], start_score: f64) -> (Vec<f64>, f64) {
        let n = start.len();
        let mut dirs: Vec<Vec<f64>> = (0..n).map(|i| unit(n, i, 1.0)).collect();
        for i in 0..n {
            for j in i + 1..n {
                for sgn in [1.0, -1.0] {
                    let mut v = unit(n, i, 1.0);
                    v[j] = sgn;
                    dirs.push(v);
                }
            }
        }
        let width = self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).fold(0.0, f64::max);
        let mut x = start.to_vec();
        let mut best = start_score;
        for round in 0..POLISH_ROUNDS {
            let w = 0.5 * width * 0.7f64.powi(round as i32);
            let before = best;
            for v in &dirs {
                let (f, y) = self.line_search(&x, v, w);
                if f < best {
                    best = f;
                    x = y;
                }
            }
            if w < 1e-4 * width && before - best <= 1e-14 * (1.0 + best.abs()) {
                break;
            }
        }
        (x, best)
    }
}

fn unit(n: usize, i: usize, c: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = c;
    v
}

/// Uniform sampling over the domain box followed by coordinate polishing.
///
/// The box is `[0,10]^n` on the orthant and `[-10,10]^n` otherwise, tightened by any
/// single-variable linear constraints. The top samples of every prefix `budget / 2^k`
/// are polished, so a larger budget on the same seed never returns a worse value.
pub fn sample_upper_bound(pop: &PopProblem, budget: usize, seed: u64) -> OracleReport {
    let search = Search::new(pop);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pop.n;
    let mut prefixes = Vec::new();
    let mut p = budget;
    while p >= 1 {
        prefixes.push(p);
        p /= 2;
    }
    prefixes.reverse();

    let mut top: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut polished: Vec<Vec<f64>> = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |s: f64, x: Vec<f64>, best: &mut Option<(f64, Vec<f64>)>| {
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            *best = Some((s, x));
        }
    };
    let mut drawn = 0;
    for &limit in &prefixes {
        while drawn < limit {
            let mut x: Vec<f64> = (0..n).map(|i| rng.gen_range(search.lo[i]..=search.hi[i])).collect();
            drawn += 1;
            if let Some(s) = search.repaired_score(&mut x) {
                consider(s, x.clone(), &mut best);
                let pos = top.partition_point(|(t, _)| *t <= s);
                if pos < POLISH_POINTS {
                    top.insert(pos, (s, x));
                    top.truncate(POLISH_POINTS);
                }
            }
        }
        for (s, x) in top.clone() {
            if polished.contains(&x) {
                continue;
            }
            let (y, f) = search.polish(&x, s);
            polished.push(x);
            if f.is_finite() {
                consider(f, y, &mut best);
            }
        }
    }
    let sign = search.sign;
    match best {
        Some((s, x)) => OracleReport {
            best_value: sign * s,
            best_point: x,
            samples_tried: drawn,
            feasible_found: true,
            problem: problem_fingerprint(pop),
        },
        None => OracleReport {
            best_value: sign * f64::INFINITY,
            best_point: Vec::new(),
            samples_tried: drawn,
            feasible_found: false,
            problem: problem_fingerprint(pop),
        },
    }
}

/// Soundness check of a relaxation bound against the best feasible value found.
pub fn verify_bound(pop: &PopProblem, bound: f64, report: &OracleReport) -> Result<bool, OracleError> {
    if report.problem != problem_fingerprint(pop) {
        return Err(OracleError::ProblemMismatch);
    }
    if !report.feasible_found {
        return Ok(true);
    }
    Ok(match pop.sense {
        Sense::Min => bound <= report.best_value + 1e-6,
        Sense::Max => bound >= report.best_value - 1e-6,
    })
}
