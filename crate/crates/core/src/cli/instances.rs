//! Problem instances used by the reproduction commands.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::oracle::sample_upper_bound;
use crate::polynomial::{Constraint, Domain, Exponent, Polynomial, PopProblem, Sense};
use crate::symtensor::exponents;

fn poly(n: usize, terms: &[(&[u32], f64)]) -> Polynomial {
    Polynomial::from_terms(n, terms.iter().map(|(e, c)| (Exponent(e.to_vec()), *c)))
        .expect("well-formed terms")
}

fn sum_sq(n: usize, vars: impl Iterator<Item = usize>) -> Polynomial {
    let mut p = Polynomial::zero(n);
    for i in vars {
        let mut e = Exponent::zero(n);
        e.0[i] = 2;
        p.add_term(e, 1.0);
    }
    p
}

/// `min (x_1 + ... + x_n)^4  s.t.  x_1^4 = 1, x >= 0`.
pub fn example1(n: usize) -> PopProblem {
    let s = (0..n).fold(Polynomial::zero(n), |acc, i| &acc + &Polynomial::var(n, i));
    let x1 = Polynomial::var(n, 0);
    PopProblem::new(n, Sense::Min, Domain::Orthant, s.pow(4), vec![Constraint::eq(x1.pow(4), 1.0)])
        .expect("valid instance")
}

/// Smallest quadratic reformulation of [`example1`] over `(x, y1, y2)` with
/// `y1 = (sum x)^2`, `y2 = x_1^2`, `y2^2 = 1`, objective `y1^2`.
pub fn example1_quadratic(n: usize) -> PopProblem {
    let m = n + 2;
    let s = (0..n).fold(Polynomial::zero(m), |acc, i| &acc + &Polynomial::var(m, i));
    let y1 = Polynomial::var(m, n);
    let y2 = Polynomial::var(m, n + 1);
    let x1 = Polynomial::var(m, 0);
    let cons = vec![
        Constraint::eq(&y1 - &s.pow(2), 0.0),
        Constraint::eq(&y2 - &x1.pow(2), 0.0),
        Constraint::eq(y2.pow(2), 1.0),
    ];
    PopProblem::new(m, Sense::Min, Domain::Orthant, y1.pow(2), cons).expect("valid instance")
}

/// Bi-quadratic problem `min sum_{i<j, a<b} x_i x_j y_a y_b  s.t. |x|^2 = |y|^2 = 1`
/// over `(x, y)` in `R^{n+m}`.
pub fn example2(n: usize, m: usize) -> PopProblem {
    let dim = n + m;
    let mut obj = Polynomial::zero(dim);
    for i in 0..n {
        for j in i + 1..n {
            for a in 0..m {
                for b in a + 1..m {
                    obj.add_term(Exponent::from_indices(dim, &[i, j, n + a, n + b]), 1.0);
                }
            }
        }
    }
    let cons = vec![
        Constraint::eq(sum_sq(dim, 0..n), 1.0),
        Constraint::eq(sum_sq(dim, n..dim), 1.0),
    ];
    PopProblem::new(dim, Sense::Min, Domain::Free, obj, cons).expect("valid instance")
}

/// [`example2`] with the product of the two sphere constraints, `|x|^2 |y|^2 = 1`.
pub fn example2_tensor(n: usize, m: usize) -> PopProblem {
    let mut pop = example2(n, m);
    let dim = n + m;
    let prod = &sum_sq(dim, 0..n) * &sum_sq(dim, n..dim);
    pop.constraints.push(Constraint::eq(prod, 1.0));
    pop
}

pub fn example2_optimum(n: usize, m: usize) -> f64 {
    -((n.max(m) - 1) as f64) / 4.0
}

fn ex3_parts() -> [Polynomial; 4] {
    [
        poly(2, &[(&[2, 0], -8.0), (&[1, 1], -1.0), (&[0, 2], -13.0), (&[1, 0], -6.0), (&[0, 1], -1.0)]),
        poly(
            2,
            &[(&[2, 0], 1.0), (&[1, 1], 1.0), (&[0, 2], 2.0), (&[1, 0], -3.0), (&[0, 1], -3.0), (&[0, 0], -7.0)],
        ),
        poly(2, &[(&[1, 1], 2.0), (&[1, 0], 33.0), (&[0, 1], 15.0), (&[0, 0], -10.0)]),
        poly(2, &[(&[1, 0], 1.0), (&[0, 1], 2.0), (&[0, 0], -6.0)]),
    ]
}

pub const EXAMPLE3_OPTIMUM: f64 = -58.0 / 9.0;

/// Nonconvex QCQP in two variables with three constraints `f_i <= 0`.
pub fn example3() -> PopProblem {
    let [f0, f1, f2, f3] = ex3_parts();
    let cons = vec![Constraint::le(f1, 0.0), Constraint::le(f2, 0.0), Constraint::le(f3, 0.0)];
    PopProblem::new(2, Sense::Min, Domain::Orthant, f0, cons).expect("valid instance")
}

/// [`example3`] with the quartic valid inequalities `x_2 f_2 <= 0` and `x_1^2 f_1 <= 0`.
pub fn example3_augmented() -> PopProblem {
    let pop = example3();
    let pop = pop.multiply_constraint(1, &Exponent(vec![0, 1])).expect("inequality row");
    pop.multiply_constraint(0, &Exponent(vec![2, 0])).expect("inequality row")
}

/// [`example3`] with the products `x_1 f_3 <= 0` and `x_2 f_3 <= 0`.
pub fn example3_rlt() -> PopProblem {
    let pop = example3();
    let pop = pop.multiply_constraint(2, &Exponent(vec![1, 0])).expect("inequality row");
    pop.multiply_constraint(2, &Exponent(vec![0, 1])).expect("inequality row")
}

/// Quadratic form of [`example3_augmented`] over `(x1, x2, y1, y2, y3)` with slacks
/// `y1 = -f_1`, `y2 = -f_2`, `y3 = x_1^2`, plus the products `x_i f_3 <= 0`.
pub fn example3_quadratic() -> PopProblem {
    let [f0, f1, f2, f3] = ex3_parts();
    let map = [0, 1];
    let [f0, f1, f2, f3] = [f0, f1, f2, f3].map(|p| p.embed(5, &map));
    let v = |i| Polynomial::var(5, i);
    let cons = vec![
        Constraint::eq(&f1 + &v(2), 0.0),
        Constraint::eq(&f2 + &v(3), 0.0),
        Constraint::le(f3.clone(), 0.0),
        Constraint::eq(&v(4) - &v(0).pow(2), 0.0),
        Constraint::le((&v(1) * &v(3)).scale(-1.0), 0.0),
        Constraint::le((&v(2) * &v(4)).scale(-1.0), 0.0),
        Constraint::le(&v(0) * &f3, 0.0),
        Constraint::le(&v(1) * &f3, 0.0),
    ];
    PopProblem::new(5, Sense::Min, Domain::Orthant, f0, cons).expect("valid instance")
}

fn random_quartic(rng: &mut ChaCha8Rng, n: usize, range: i32) -> Polynomial {
    let mut p = Polynomial::zero(n);
    for e in exponents(n, 4) {
        p.add_term(e, rng.gen_range(-range..=range) as f64);
    }
    p
}

/// Random homogeneous quartic objective on the shell `0.2 <= |x - 0.5 e| <= 0.6`
/// inside the unit box; the box enters as the products `x^a (x_i - 1) <= 0`, `|a| <= 3`.
pub fn generate_example4(rng: &mut ChaCha8Rng) -> PopProblem {
    let n = 3;
    let obj = random_quartic(rng, n, 5);
    let mut shell = Polynomial::zero(n);
    for i in 0..n {
        let d = &Polynomial::var(n, i) - &Polynomial::constant(n, 0.5);
        shell = &shell + &d.pow(2);
    }
    let mut cons = vec![Constraint::le(shell.scale(-1.0), -0.04), Constraint::le(shell, 0.36)];
    for i in 0..n {
        for k in 0..=3 {
            for a in exponents(n, k) {
                let p = &Polynomial::monomial(a.add(&Exponent::unit(n, i)), 1.0) - &Polynomial::monomial(a, 1.0);
                cons.push(Constraint::le(p, 0.0));
            }
        }
    }
    PopProblem::new(n, Sense::Min, Domain::Orthant, obj, cons).expect("valid instance")
}

/// Random homogeneous quartic objective with two quartic constraints `h_i <= d_i`,
/// a linear constraint `c'x <= r` and the quartic ball `sum x_i^4 <= B` implied by it
/// on the sampling box. Candidates without a feasible sample are redrawn.
pub fn generate_example5(rng: &mut ChaCha8Rng, screen_budget: usize) -> PopProblem {
    let n = 3;
    loop {
        let obj = random_quartic(rng, n, 5);
        let mut cons = Vec::new();
        for _ in 0..2 {
            let h = random_quartic(rng, n, 10);
            let d = rng.gen_range(-10..=10) as f64;
            cons.push(Constraint::le(h, d));
        }
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=5) as f64).collect();
        let r = rng.gen_range(5..=15) as f64;
        let lin = (0..n).fold(Polynomial::zero(n), |acc, i| &acc + &Polynomial::var(n, i).scale(c[i]));
        let bound: f64 = c.iter().map(|&ci| if ci > 0.0 { (r / ci).min(10.0) } else { 10.0 }.powi(4)).sum();
        let ball = (0..n).fold(Polynomial::zero(n), |acc, i| &acc + &Polynomial::var(n, i).pow(4));
        cons.push(Constraint::le(lin, r));
        cons.push(Constraint::le(ball, bound));
        let Ok(pop) = PopProblem::new(n, Sense::Min, Domain::Orthant, obj, cons) else { continue };
        let seed = rng.gen();
        if sample_upper_bound(&pop, screen_budget, seed).feasible_found {
            return pop;
        }
    }
}
