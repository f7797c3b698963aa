//! Sparse multivariate polynomials and the polynomial optimization problem model.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("zero polynomial has no top homogeneous part")]
    ZeroPolynomial,
    #[error("constraint index {0} out of range")]
    NoSuchConstraint(usize),
    #[error("constraint {0} is an equality")]
    EqualityConstraint(usize),
    #[error("monomial multiplication is only valid on the nonnegative orthant")]
    FreeDomain,
    #[error("problem has total degree 0")]
    ConstantProblem,
    #[error("invalid problem: {0}")]
    Invalid(String),
}

/// Multi-index of variable powers.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exponent(pub Vec<u32>);

impl Exponent {
    pub fn zero(n: usize) -> Self {
        Exponent(vec![0; n])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Exponent(e)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn add(&self, other: &Exponent) -> Exponent {
        Exponent(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Variable indices repeated by multiplicity, ascending.
    pub fn indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.degree() as usize);
        for (i, &p) in self.0.iter().enumerate() {
            out.extend(std::iter::repeat_n(i, p as usize));
        }
        out
    }

    pub fn from_indices(n: usize, idx: &[usize]) -> Exponent {
        let mut e = vec![0; n];
        for &i in idx {
            e[i] += 1;
        }
        Exponent(e)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .filter(|(p, _)| **p > 0)
            .map(|(&p, &v)| v.powi(p as i32))
            .product()
    }
}

impl fmt::Debug for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<Vec<u32>> for Exponent {
    fn from(v: Vec<u32>) -> Self {
        Exponent(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<Exponent, f64>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(Exponent::zero(n), c);
        p
    }

    /// The polynomial x_i (0-based).
    pub fn var(n: usize, i: usize) -> Self {
        Self::monomial(Exponent::unit(n, i), 1.0)
    }

    pub fn monomial(exp: Exponent, coef: f64) -> Self {
        let mut p = Self::zero(exp.len());
        p.add_term(exp, coef);
        p
    }

    pub fn from_terms<I>(n: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Exponent, f64)>,
    {
        let mut p = Self::zero(n);
        for (e, c) in terms {
            if e.len() != n {
                return Err(PolyError::Dimension { expected: n, got: e.len() });
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, f64)> {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coef(&self, e: &Exponent) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds `c * x^e`, merging with an existing term and dropping exact zeros.
    pub fn add_term(&mut self, e: Exponent, c: f64) {
        assert_eq!(e.len(), self.n, "exponent length");
        use std::collections::btree_map::Entry;
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                if c != 0.0 {
                    v.insert(c);
                }
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Exponent::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.n {
            return Err(PolyError::Dimension { expected: self.n, got: x.len() });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(e, c)| c * e.eval(x)).sum()
    }

    pub fn homogeneous_top(&self) -> Result<Polynomial, PolyError> {
        if self.is_zero() {
            return Err(PolyError::ZeroPolynomial);
        }
        Ok(self.homogeneous_part(self.degree()))
    }

    /// Terms of total degree exactly `d` (possibly zero).
    pub fn homogeneous_part(&self, d: u32) -> Polynomial {
        Polynomial {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| e.degree() == d)
                .map(|(e, c)| (e.clone(), *c))
                .collect(),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        let d = self.degree();
        self.terms.keys().all(|e| e.degree() == d)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (e, c) in self.terms() {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    pub fn mul_monomial(&self, e: &Exponent) -> Polynomial {
        Polynomial {
            n: self.n,
            terms: self.terms.iter().map(|(k, c)| (k.add(e), *c)).collect(),
        }
    }

    /// Partial derivative with respect to x_i.
    pub fn derivative(&self, i: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (e, c) in self.terms() {
            let p = e.0[i];
            if p > 0 {
                let mut d = e.clone();
                d.0[i] -= 1;
                out.add_term(d, c * p as f64);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.n, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Reindexes variables into a space of `m` variables, variable i going to `map[i]`.
    pub fn embed(&self, m: usize, map: &[usize]) -> Polynomial {
        let mut out = Polynomial::zero(m);
        for (e, c) in self.terms() {
            let mut ne = vec![0; m];
            for (i, &p) in e.0.iter().enumerate() {
                ne[map[i]] += p;
            }
            out.add_term(Exponent(ne), c);
        }
        out
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.n, rhs.n, "polynomial dimension");
        let mut out = self.clone();
        for (e, c) in rhs.terms() {
            out.add_term(e.clone(), c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.n, rhs.n, "polynomial dimension");
        let mut out = Polynomial::zero(self.n);
        for (e1, c1) in self.terms() {
            for (e2, c2) in rhs.terms() {
                out.add_term(e1.add(e2), c1 * c2);
            }
        }
        out
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (k, (e, c)) in self.terms().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (i, &p) in e.0.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, p)?,
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "==")]
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Orthant,
    Free,
}

/// `poly(x) rel rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub poly: Polynomial,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn le(poly: Polynomial, rhs: f64) -> Self {
        Constraint { poly, rel: Relation::Le, rhs }
    }

    pub fn eq(poly: Polynomial, rhs: f64) -> Self {
        Constraint { poly, rel: Relation::Eq, rhs }
    }

    /// `poly(x) - rhs` as a single polynomial.
    pub fn residual_poly(&self) -> Polynomial {
        &self.poly - &Polynomial::constant(self.poly.n(), self.rhs)
    }

    /// Signed violation at x: positive means infeasible.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.poly.eval_unchecked(x) - self.rhs;
        match self.rel {
            Relation::Le => v,
            Relation::Eq => v.abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopProblem {
    pub n: usize,
    pub sense: Sense,
    pub domain: Domain,
    pub objective: Polynomial,
    pub constraints: Vec<Constraint>,
}

impl PopProblem {
    pub fn new(
        n: usize,
        sense: Sense,
        domain: Domain,
        objective: Polynomial,
        constraints: Vec<Constraint>,
    ) -> Result<Self, PolyError> {
        let pop = PopProblem { n, sense, domain, objective, constraints };
        pop.validate()?;
        Ok(pop)
    }

    pub fn validate(&self) -> Result<(), PolyError> {
        if self.objective.n() != self.n {
            return Err(PolyError::Dimension { expected: self.n, got: self.objective.n() });
        }
        for c in &self.constraints {
            if c.poly.n() != self.n {
                return Err(PolyError::Dimension { expected: self.n, got: c.poly.n() });
            }
            if !c.rhs.is_finite() {
                return Err(PolyError::Invalid("non-finite right-hand side".into()));
            }
        }
        if self.degree() == 0 {
            return Err(PolyError::ConstantProblem);
        }
        Ok(())
    }

    pub fn degree(&self) -> u32 {
        self.constraints
            .iter()
            .map(|c| c.poly.degree())
            .chain(std::iter::once(self.objective.degree()))
            .max()
            .unwrap_or(0)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval_unchecked(x)
    }

    /// Largest constraint violation at x, including the domain; 0 when feasible.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        if self.domain == Domain::Orthant {
            for &v in x {
                worst = worst.max(-v);
            }
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(x));
        }
        worst
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.n && self.max_violation(x) <= tol
    }

    /// Appends `x^mono * (p_i(x) - rhs_i) <= 0`.
    pub fn multiply_constraint(&self, i: usize, mono: &Exponent) -> Result<PopProblem, PolyError> {
        if self.domain != Domain::Orthant {
            return Err(PolyError::FreeDomain);
        }
        let c = self.constraints.get(i).ok_or(PolyError::NoSuchConstraint(i))?;
        if c.rel != Relation::Le {
            return Err(PolyError::EqualityConstraint(i));
        }
        if mono.len() != self.n {
            return Err(PolyError::Dimension { expected: self.n, got: mono.len() });
        }
        let mut out = self.clone();
        let p = c.residual_poly().mul_monomial(mono);
        out.constraints.push(Constraint::le(p, 0.0));
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<PopProblem, PolyError> {
        let wire: WireProblem =
            serde_json::from_str(text).map_err(|e| PolyError::Invalid(e.to_string()))?;
        wire.into_problem()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&WireProblem::from_problem(self)).expect("serializable")
    }
}

#[derive(Serialize, Deserialize)]
struct WireTerm {
    exp: Vec<u32>,
    coef: f64,
}

#[derive(Serialize, Deserialize)]
struct WireConstraint {
    poly: Vec<WireTerm>,
    rel: Relation,
    rhs: f64,
}

#[derive(Serialize, Deserialize)]
struct WireProblem {
    n: usize,
    sense: Sense,
    domain: Domain,
    objective: Vec<WireTerm>,
    #[serde(default)]
    constraints: Vec<WireConstraint>,
}

impl WireProblem {
    fn into_problem(self) -> Result<PopProblem, PolyError> {
        let n = self.n;
        let poly = |terms: Vec<WireTerm>| {
            Polynomial::from_terms(n, terms.into_iter().map(|t| (Exponent(t.exp), t.coef)))
        };
        let objective = poly(self.objective)?;
        let constraints = self
            .constraints
            .into_iter()
            .map(|c| Ok(Constraint { poly: poly(c.poly)?, rel: c.rel, rhs: c.rhs }))
            .collect::<Result<Vec<_>, PolyError>>()?;
        PopProblem::new(n, self.sense, self.domain, objective, constraints)
    }

    fn from_problem(pop: &PopProblem) -> Self {
        let terms = |p: &Polynomial| {
            p.terms().map(|(e, c)| WireTerm { exp: e.0.clone(), coef: c }).collect()
        };
        WireProblem {
            n: pop.n,
            sense: pop.sense,
            domain: pop.domain,
            objective: terms(&pop.objective),
            constraints: pop
                .constraints
                .iter()
                .map(|c| WireConstraint { poly: terms(&c.poly), rel: c.rel, rhs: c.rhs })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: usize, terms: &[(&[u32], f64)]) -> Polynomial {
        Polynomial::from_terms(n, terms.iter().map(|(e, c)| (Exponent(e.to_vec()), *c))).unwrap()
    }

    #[test]
    fn eval_monomial_and_constant() {
        assert_eq!(p(2, &[(&[1, 1], 1.0)]).eval(&[2.0, 3.0]).unwrap(), 6.0);
        assert_eq!(Polynomial::constant(3, 1.0).eval(&[5.0, -1.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn eval_dimension_mismatch() {
        let q = p(2, &[(&[1, 0], 1.0)]);
        assert_eq!(q.eval(&[1.0]), Err(PolyError::Dimension { expected: 2, got: 1 }));
    }

    #[test]
    fn terms_cancel_to_zero() {
        let a = p(1, &[(&[1], 2.0)]);
        let z = &a - &a;
        assert!(z.is_zero());
        assert_eq!(z.degree(), 0);
    }

    #[test]
    fn homogeneous_top_selects_leading_degree() {
        let f1 = p(
            2,
            &[(&[2, 0], 1.0), (&[1, 1], 1.0), (&[0, 2], 2.0), (&[1, 0], -3.0), (&[0, 1], -3.0), (&[0, 0], -7.0)],
        );
        let top = f1.homogeneous_top().unwrap();
        assert_eq!(top, p(2, &[(&[2, 0], 1.0), (&[1, 1], 1.0), (&[0, 2], 2.0)]));
        assert_eq!(top.homogeneous_top().unwrap(), top);
        assert_eq!(Polynomial::zero(2).homogeneous_top(), Err(PolyError::ZeroPolynomial));
    }

    #[test]
    fn multiply_constraint_rules() {
        let x = Polynomial::var(1, 0);
        let pop = PopProblem::new(
            1,
            Sense::Min,
            Domain::Orthant,
            x.clone(),
            vec![Constraint::le(x.clone(), 2.0), Constraint::eq(x.clone(), 1.0)],
        )
        .unwrap();
        let same = pop.multiply_constraint(0, &Exponent::zero(1)).unwrap();
        assert_eq!(same.constraints[2].poly, &x - &Polynomial::constant(1, 2.0));
        assert_eq!(pop.multiply_constraint(1, &Exponent::zero(1)), Err(PolyError::EqualityConstraint(1)));
        let mut free = pop.clone();
        free.domain = Domain::Free;
        assert_eq!(free.multiply_constraint(0, &Exponent::zero(1)), Err(PolyError::FreeDomain));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"n":2,"sense":"max","domain":"free",
            "objective":[{"exp":[1,1],"coef":3}],
            "constraints":[{"poly":[{"exp":[2,0],"coef":1}],"rel":"==","rhs":1}]}"#;
        let pop = PopProblem::from_json(text).unwrap();
        assert_eq!(pop.sense, Sense::Max);
        assert_eq!(pop.constraints[0].rel, Relation::Eq);
        assert_eq!(PopProblem::from_json(&pop.to_json()).unwrap(), pop);
        assert!(PopProblem::from_json(r#"{"n":2,"sense":"min","domain":"free","objective":[{"exp":[1],"coef":1}]}"#).is_err());
    }
}
