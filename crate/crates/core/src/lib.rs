//! Tensor-cone and quadratic-lifting relaxations of polynomial optimization problems.

pub mod cli;
pub mod oracle;
pub mod polynomial;
pub mod relax;
pub mod solver;
pub mod symtensor;
