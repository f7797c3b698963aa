//! Conic programs and the relaxation builders that produce them.

mod quadratic;
mod tensor;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::polynomial::{PolyError, Relation, Sense};
use crate::symtensor::TensorError;

pub use quadratic::{
    build_lifting_map, build_qp_relaxation, check_prop6_applicability, qcqp_reformulate,
    LiftingMap,
};
pub use tensor::{build_tensor_relaxation, build_tensor_relaxation_with, SliceSet, TensorOptions};

#[derive(Debug, Error, PartialEq)]
pub enum RelaxError {
    #[error("cone {0} requires an orthant-domain problem")]
    ConeNeedsOrthant(ConeKind),
    #[error("objective is the zero polynomial")]
    EmptyObjective,
    #[error("quadratic lifting supports degree <= 4, got {0}")]
    DegreeTooHigh(u32),
    #[error("lifted problem has degree {0}, expected <= 2")]
    LiftedDegree(u32),
    #[error("lifted problem has {got} variables, lifting map expects {expected}")]
    LiftedShape { expected: usize, got: usize },
    #[error("requested order {0} is below the problem degree or odd")]
    BadOrder(u32),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ConeKind {
    L,
    Sdp,
    Dnn,
}

impl fmt::Display for ConeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConeKind::L => "L",
            ConeKind::Sdp => "SDP",
            ConeKind::Dnn => "DNN",
        })
    }
}

impl FromStr for ConeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "l" => Ok(ConeKind::L),
            "sdp" => Ok(ConeKind::Sdp),
            "dnn" => Ok(ConeKind::Dnn),
            other => Err(format!("unknown cone '{other}' (expected l, sdp or dnn)")),
        }
    }
}

/// Sparse linear functional `sum coef * v[var]`.
pub type LinExpr = Vec<(usize, f64)>;

fn eval_lin(e: &LinExpr, x: &[f64]) -> f64 {
    e.iter().map(|&(j, c)| c * x[j]).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub coefs: LinExpr,
    #[serde(serialize_with = "ser_rel")]
    pub rel: Relation,
    pub rhs: f64,
}

fn ser_rel<S: serde::Serializer>(r: &Relation, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match r {
        Relation::Le => "<=",
        Relation::Eq => "==",
    })
}

/// Affine map `constant + sum v[var] * coef * (E_ij + E_ji)/(1 + [i == j])`, required PSD.
/// Entries are stored with `i <= j`; each stands for both symmetric positions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsdBlock {
    pub size: usize,
    pub constant: Vec<(usize, usize, f64)>,
    pub terms: Vec<(usize, usize, usize, f64)>,
}

impl PsdBlock {
    pub fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for &(i, j, c) in &self.constant {
            m[(i, j)] += c;
            if i != j {
                m[(j, i)] += c;
            }
        }
        for &(v, i, j, c) in &self.terms {
            m[(i, j)] += c * x[v];
            if i != j {
                m[(j, i)] += c * x[v];
            }
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConicProgram {
    pub vars: usize,
    pub labels: Vec<String>,
    #[serde(serialize_with = "ser_sense")]
    pub sense: Sense,
    pub objective: LinExpr,
    pub rows: Vec<Row>,
    pub psd_blocks: Vec<PsdBlock>,
    pub nonneg: Vec<LinExpr>,
}

fn ser_sense<S: serde::Serializer>(r: &Sense, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match r {
        Sense::Min => "min",
        Sense::Max => "max",
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Shape {
    pub vars: usize,
    pub rows: usize,
    pub psd_blocks: usize,
    pub max_block: usize,
    pub nonneg: usize,
}

impl ConicProgram {
    pub fn new(vars: usize, sense: Sense) -> Self {
        ConicProgram {
            vars,
            labels: (0..vars).map(|i| format!("v{i}")).collect(),
            sense,
            objective: Vec::new(),
            rows: Vec::new(),
            psd_blocks: Vec::new(),
            nonneg: Vec::new(),
        }
    }

    pub fn shape(&self) -> Shape {
        Shape {
            vars: self.vars,
            rows: self.rows.len(),
            psd_blocks: self.psd_blocks.len(),
            max_block: self.psd_blocks.iter().map(|b| b.size).max().unwrap_or(0),
            nonneg: self.nonneg.len(),
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        eval_lin(&self.objective, x)
    }

    /// Largest violation of rows and nonnegativity functionals at x.
    pub fn max_linear_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| {
            let a = eval_lin(&r.coefs, x) - r.rhs;
            match r.rel {
                Relation::Le => a.max(0.0),
                Relation::Eq => a.abs(),
            }
        });
        let nn = self.nonneg.iter().map(|f| (-eval_lin(f, x)).max(0.0));
        rows.chain(nn).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue over all PSD blocks at x (0 when there are none).
    pub fn min_block_eigenvalue(&self, x: &[f64]) -> f64 {
        self.psd_blocks
            .iter()
            .map(|b| crate::symtensor::min_eigenvalue(&b.matrix(x)))
            .reduce(f64::min)
            .unwrap_or(0.0)
    }

    /// Rows within `tol` and every block PSD up to `tol * (1 + ||B||_inf)`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.vars || self.max_linear_violation(x) > tol {
            return false;
        }
        self.psd_blocks.iter().all(|b| {
            let m = b.matrix(x);
            let scale = m.abs().row_sum().max();
            crate::symtensor::min_eigenvalue(&m) >= -tol * (1.0 + scale)
        })
    }

    /// Checks that every reference names a declared variable and block entries use `i <= j`.
    pub fn validate(&self) -> Result<(), String> {
        let var_ok = |v: usize| v < self.vars;
        if !self.objective.iter().all(|&(v, _)| var_ok(v)) {
            return Err("objective references an undeclared variable".into());
        }
        for (k, r) in self.rows.iter().enumerate() {
            if !r.coefs.iter().all(|&(v, _)| var_ok(v)) {
                return Err(format!("row {k} references an undeclared variable"));
            }
        }
        for (k, f) in self.nonneg.iter().enumerate() {
            if !f.iter().all(|&(v, _)| var_ok(v)) {
                return Err(format!("nonnegativity {k} references an undeclared variable"));
            }
        }
        for (k, b) in self.psd_blocks.iter().enumerate() {
            for &(v, i, j, _) in &b.terms {
                if !var_ok(v) {
                    return Err(format!("block {k} references an undeclared variable"));
                }
                if i > j || j >= b.size {
                    return Err(format!("block {k} has a non-symmetric or out-of-range entry ({i},{j})"));
                }
            }
            for &(i, j, _) in &b.constant {
                if i > j || j >= b.size {
                    return Err(format!("block {k} has a non-symmetric or out-of-range entry ({i},{j})"));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_matrix_and_feasibility() {
        let mut p = ConicProgram::new(2, Sense::Min);
        p.psd_blocks.push(PsdBlock {
            size: 2,
            constant: vec![(0, 0, 1.0)],
            terms: vec![(0, 0, 1, 1.0), (1, 1, 1, 1.0)],
        });
        p.rows.push(Row { coefs: vec![(1, 1.0)], rel: Relation::Eq, rhs: 1.0 });
        let m = p.psd_blocks[0].matrix(&[0.5, 1.0]);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        assert!(p.is_feasible(&[0.5, 1.0], 1e-9));
        assert!(!p.is_feasible(&[2.0, 1.0], 1e-9));
        assert!(!p.is_feasible(&[0.0, 0.5], 1e-9));
        assert!(p.validate().is_ok());
        p.psd_blocks[0].terms.push((0, 1, 0, 1.0));
        assert!(p.validate().is_err());
    }

    #[test]
    fn cone_parse() {
        assert_eq!("DNN".parse::<ConeKind>(), Ok(ConeKind::Dnn));
        assert!("psd".parse::<ConeKind>().is_err());
    }
}
