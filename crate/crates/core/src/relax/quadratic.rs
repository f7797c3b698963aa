use crate::polynomial::{Constraint, Domain, Exponent, Polynomial, PopProblem, Relation, Sense};

use super::tensor::{push_constraint_rows, TensorSpace};
use super::{ConeKind, ConicProgram, RelaxError, Row};

/// Index of the lifted variable `y_c = x_a x_b` for `1 <= a <= b <= n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiftingMap {
    pub n: usize,
    pairs: Vec<(usize, usize)>,
}

impl LiftingMap {
    pub fn r(&self) -> usize {
        self.pairs.len()
    }

    /// `c = (n + 1 - a/2)(a - 1) + b - a + 1`, 1-based.
    pub fn index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        (2 * self.n + 2 - a) * (a - 1) / 2 + b - a + 1
    }

    /// The pair `(a, b)` behind `y_c`, 1-based.
    pub fn pair(&self, c: usize) -> (usize, usize) {
        self.pairs[c - 1]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, (usize, usize))> + '_ {
        self.pairs.iter().enumerate().map(|(k, &p)| (k + 1, p))
    }

    /// `y(x)` for a point x of the original problem.
    pub fn lift_point(&self, x: &[f64]) -> Vec<f64> {
        let mut z = x.to_vec();
        z.extend(self.pairs.iter().map(|&(a, b)| x[a - 1] * x[b - 1]));
        z
    }
}

pub fn build_lifting_map(n: usize) -> LiftingMap {
    let mut map = LiftingMap { n, pairs: vec![(0, 0); n * (n + 1) / 2] };
    for a in 1..=n {
        for b in a..=n {
            let c = map.index(a, b);
            map.pairs[c - 1] = (a, b);
        }
    }
    map
}

/// Rewrites a monomial over x into one over (x, y) with degree at most 2; quadratic
/// monomials become the matching `y_c`.
fn split_monomial(map: &LiftingMap, e: &Exponent) -> Exponent {
    let n = map.n;
    let idx: Vec<usize> = e.indices().into_iter().map(|i| i + 1).collect();
    let y = |a: usize, b: usize| n + map.index(a, b) - 1;
    let mut out = vec![0u32; n + map.r()];
    match idx.len() {
        4 => {
            out[y(idx[0], idx[1])] += 1;
            out[y(idx[2], idx[3])] += 1;
        }
        3 => {
            out[y(idx[0], idx[1])] += 1;
            out[idx[2] - 1] += 1;
        }
        2 => out[y(idx[0], idx[1])] += 1,
        _ => out[..n].copy_from_slice(&e.0),
    }
    Exponent(out)
}

fn lift_poly(map: &LiftingMap, p: &Polynomial) -> Polynomial {
    let mut out = Polynomial::zero(map.n + map.r());
    for (e, c) in p.terms() {
        out.add_term(split_monomial(map, e), c);
    }
    out
}

/// Quadratic reformulation over `(x, y)` with `y_c = x_a x_b`. Problems of degree
/// at most 2 come back unchanged.
pub fn qcqp_reformulate(pop: &PopProblem) -> Result<(PopProblem, LiftingMap), RelaxError> {
    let deg = pop.degree();
    if deg > 4 {
        return Err(RelaxError::DegreeTooHigh(deg));
    }
    let map = build_lifting_map(pop.n);
    if deg <= 2 {
        return Ok((pop.clone(), map));
    }
    let constraints = pop
        .constraints
        .iter()
        .map(|c| Constraint { poly: lift_poly(&map, &c.poly), rel: c.rel, rhs: c.rhs })
        .collect();
    let lifted = PopProblem::new(
        pop.n + map.r(),
        pop.sense,
        pop.domain,
        lift_poly(&map, &pop.objective),
        constraints,
    )?;
    Ok((lifted, map))
}

/// Matrix relaxation over `Z = [1 z^T; z zz^T]`. Linking rows are emitted when `lifted`
/// carries the lifted variables of `map`; a problem over `map.n` variables gets none.
pub fn build_qp_relaxation(
    lifted: &PopProblem,
    map: &LiftingMap,
    cone: ConeKind,
    relaxed_linking: bool,
) -> Result<ConicProgram, RelaxError> {
    lifted.validate()?;
    let deg = lifted.degree();
    if deg > 2 {
        return Err(RelaxError::LiftedDegree(deg));
    }
    if cone != ConeKind::Sdp && lifted.domain == Domain::Free {
        return Err(RelaxError::ConeNeedsOrthant(cone));
    }
    let linked = lifted.n == map.n + map.r();
    if !linked && lifted.n != map.n {
        return Err(RelaxError::LiftedShape { expected: map.n + map.r(), got: lifted.n });
    }
    let dim = lifted.n + 1;
    let space = TensorSpace::new(dim, 2);
    let mut prog = space.program(lifted, "Z");
    push_constraint_rows(&space, &mut prog, lifted)?;

    if linked {
        let pair = |i: usize, j: usize| {
            let mut e = vec![0u32; dim];
            e[i] += 1;
            e[j] += 1;
            space.var(&Exponent(e))
        };
        let rel = if relaxed_linking { Relation::Le } else { Relation::Eq };
        for (c, (a, b)) in map.pairs() {
            prog.rows.push(Row {
                coefs: vec![(pair(0, map.n + c), 1.0), (pair(a, b), -1.0)],
                rel,
                rhs: 0.0,
            });
        }
    }
    if matches!(cone, ConeKind::L | ConeKind::Dnn) {
        prog.nonneg = (0..prog.vars).map(|v| vec![(v, 1.0)]).collect();
    }
    if matches!(cone, ConeKind::Sdp | ConeKind::Dnn) {
        prog.psd_blocks.push(space.slice_block(&Exponent::zero(dim)));
    }
    Ok(prog)
}

/// True when the objective is zero, or a maximization with nonnegative coefficients.
pub fn check_prop6_applicability(pop: &PopProblem) -> bool {
    pop.objective.is_zero()
        || (pop.sense == Sense::Max && pop.objective.terms().all(|(_, c)| c >= 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifting_map_small() {
        let m = build_lifting_map(2);
        assert_eq!(m.r(), 3);
        assert_eq!((m.index(1, 1), m.index(1, 2), m.index(2, 2)), (1, 2, 3));
        assert_eq!(m.pair(2), (1, 2));
        let m1 = build_lifting_map(1);
        assert_eq!((m1.r(), m1.index(1, 1)), (1, 1));
    }

    #[test]
    fn univariate_reformulation() {
        let x = Polynomial::var(1, 0);
        let obj = &(&(&(&x.pow(4) + &x.pow(3)) + &x.pow(2)) + &x) + &Polynomial::constant(1, 1.0);
        let pop = PopProblem::new(1, Sense::Min, Domain::Free, obj, vec![Constraint::le(x.pow(4), 1.0)])
            .unwrap();
        let (lifted, map) = qcqp_reformulate(&pop).unwrap();
        assert_eq!(map.r(), 1);
        let z = |a: u32, b: u32| Exponent(vec![a, b]);
        let expect = Polynomial::from_terms(
            2,
            [(z(0, 2), 1.0), (z(1, 1), 1.0), (z(0, 1), 1.0), (z(1, 0), 1.0), (z(0, 0), 1.0)],
        )
        .unwrap();
        assert_eq!(lifted.objective, expect);
        assert_eq!(lifted.constraints[0].poly, Polynomial::monomial(z(0, 2), 1.0));
    }

    #[test]
    fn quadratic_problem_unchanged() {
        let x = Polynomial::var(2, 0);
        let pop = PopProblem::new(2, Sense::Min, Domain::Orthant, x.pow(2), vec![]).unwrap();
        let (lifted, map) = qcqp_reformulate(&pop).unwrap();
        assert_eq!(lifted, pop);
        let prog = build_qp_relaxation(&lifted, &map, ConeKind::Dnn, false).unwrap();
        assert_eq!(prog.rows.len(), 1);
        assert_eq!(prog.psd_blocks[0].size, 3);
    }

    #[test]
    fn prop6_flags() {
        let x = Polynomial::var(1, 0);
        let mk = |s, p: Polynomial| PopProblem::new(1, s, Domain::Orthant, p, vec![Constraint::le(x.clone(), 1.0)]).unwrap();
        assert!(check_prop6_applicability(&mk(Sense::Max, x.pow(2))));
        assert!(!check_prop6_applicability(&mk(Sense::Max, x.scale(-1.0))));
        assert!(!check_prop6_applicability(&mk(Sense::Min, x.pow(2))));
        assert!(check_prop6_applicability(&mk(Sense::Min, Polynomial::zero(1))));
    }
}
