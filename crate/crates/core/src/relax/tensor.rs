use std::collections::HashMap;

use crate::polynomial::{Domain, Exponent, Polynomial, PopProblem, Relation};
use crate::symtensor::{enumerate_slices, exponents, multiplicity, t_d, SymmetricTensor};

use super::{ConeKind, ConicProgram, LinExpr, PsdBlock, RelaxError, Row};

/// Which order-2 slices of the tensor variable are constrained PSD.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SliceSet {
    /// Every slice on the orthant, principal slices only on a free domain.
    #[default]
    Auto,
    All,
    Principal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TensorOptions {
    pub cone: ConeKind,
    pub sign_rows: bool,
    pub slices: SliceSet,
    /// Lift order; defaults to the problem degree rounded up to even.
    pub order: Option<u32>,
}

impl TensorOptions {
    pub fn new(cone: ConeKind) -> Self {
        TensorOptions { cone, sign_rows: false, slices: SliceSet::Auto, order: None }
    }
}

/// Variables of an order-d symmetric tensor of dimension `dim`, one per distinct exponent.
pub(crate) struct TensorSpace {
    pub dim: usize,
    pub order: u32,
    pub exps: Vec<Exponent>,
    index: HashMap<Exponent, usize>,
}

impl TensorSpace {
    pub fn new(dim: usize, order: u32) -> Self {
        let exps = exponents(dim, order);
        let index = exps.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
        TensorSpace { dim, order, exps, index }
    }

    pub fn var(&self, e: &Exponent) -> usize {
        self.index[e]
    }

    /// `<T, X>` as a functional of the entries of X.
    pub fn functional(&self, t: &SymmetricTensor) -> LinExpr {
        t.entries().map(|(e, v)| (self.var(e), multiplicity(e) * v)).collect()
    }

    pub fn program(&self, pop: &PopProblem, prefix: &str) -> ConicProgram {
        let mut prog = ConicProgram::new(self.exps.len(), pop.sense);
        prog.labels = self.exps.iter().map(|e| format!("{prefix}{:?}", e.0)).collect();
        prog
    }

    pub fn slice_block(&self, gamma: &Exponent) -> PsdBlock {
        let n = self.dim;
        let mut terms = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            for k in j..n {
                let mut e = gamma.clone();
                e.0[j] += 1;
                e.0[k] += 1;
                terms.push((self.var(&e), j, k, 1.0));
            }
        }
        PsdBlock { size: n, constant: Vec::new(), terms }
    }
}

pub(crate) fn push_constraint_rows(
    space: &TensorSpace,
    prog: &mut ConicProgram,
    pop: &PopProblem,
) -> Result<(), RelaxError> {
    prog.objective = space.functional(&t_d(&pop.objective, space.order)?);
    prog.rows.push(Row { coefs: vec![(0, 1.0)], rel: Relation::Eq, rhs: 1.0 });
    for c in &pop.constraints {
        let coefs = space.functional(&t_d(&c.poly, space.order)?);
        prog.rows.push(Row { coefs, rel: c.rel, rhs: c.rhs });
    }
    Ok(())
}

pub fn build_tensor_relaxation(
    pop: &PopProblem,
    cone: ConeKind,
    add_sign_rows: bool,
) -> Result<ConicProgram, RelaxError> {
    build_tensor_relaxation_with(pop, &TensorOptions { sign_rows: add_sign_rows, ..TensorOptions::new(cone) })
}

pub fn build_tensor_relaxation_with(
    pop: &PopProblem,
    opts: &TensorOptions,
) -> Result<ConicProgram, RelaxError> {
    pop.validate()?;
    if opts.cone != ConeKind::Sdp && pop.domain == Domain::Free {
        return Err(RelaxError::ConeNeedsOrthant(opts.cone));
    }
    if pop.objective.is_zero() {
        return Err(RelaxError::EmptyObjective);
    }
    let deg = pop.degree();
    let d = match opts.order {
        Some(d) if d < deg || d % 2 == 1 => return Err(RelaxError::BadOrder(d)),
        Some(d) => d,
        None => deg + deg % 2,
    };
    let space = TensorSpace::new(pop.n + 1, d);
    let mut prog = space.program(pop, "X");
    push_constraint_rows(&space, &mut prog, pop)?;

    if opts.sign_rows {
        for i in 0..pop.n {
            let t = t_d(&Polynomial::var(pop.n, i).scale(-1.0), d)?;
            prog.rows.push(Row { coefs: space.functional(&t), rel: Relation::Le, rhs: 0.0 });
        }
    }
    if matches!(opts.cone, ConeKind::L | ConeKind::Dnn) {
        prog.nonneg = (0..prog.vars).map(|v| vec![(v, 1.0)]).collect();
    }
    if matches!(opts.cone, ConeKind::Sdp | ConeKind::Dnn) {
        let principal_only = match opts.slices {
            SliceSet::Auto => pop.domain == Domain::Free,
            SliceSet::All => false,
            SliceSet::Principal => true,
        };
        prog.psd_blocks = enumerate_slices(space.dim, d, principal_only)
            .iter()
            .map(|g| space.slice_block(&g.gamma))
            .collect();
    }
    Ok(prog)
}
