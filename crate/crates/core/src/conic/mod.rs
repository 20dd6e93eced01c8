//! Small second-order cone programming solver.
//!
//! A [`ConicProgram`] is stated over named variable indices:
//!
//! ```text
//! minimize    c'x + offset
//! subject to  A x = b
//!             lo <= x <= hi                      (per variable, infinities allowed)
//!             ||x[u]||_2 <= x[t]                 (second-order cone blocks)
//!             ||x[u]||_2^2 <= 2 x[a] x[b]        (rotated cone blocks, x[a], x[b] >= 0)
//! ```
//!
//! and solved by a primal-dual interior-point method with Nesterov-Todd
//! scaling and Mehrotra predictor-corrector steps (see [`solve`]).

mod cones;
mod ipm;
mod linalg;

use std::collections::HashSet;

use thiserror::Error;

use crate::scalar::Scalar;

pub use ipm::{solve, solve_with, SolverSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("variable index {index} out of range (program has {n_vars} variables)")]
    IndexOutOfRange { index: usize, n_vars: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("variable {0} has lower bound above upper bound")]
    EmptyBounds(usize),
    #[error("variable {0} appears in more than one cone head position")]
    DuplicateHead(usize),
    #[error("quadratic coefficient {0} is negative, epigraph would be non-convex")]
    NonConvex(f64),
    #[error("tolerance must be positive")]
    BadTolerance,
}

/// One sparse row of the equality system.
#[derive(Debug, Clone, PartialEq)]
pub struct EqRow<T> {
    pub coefs: Vec<(usize, T)>,
    pub rhs: T,
}

/// `||x[tail]|| <= x[head]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocBlock {
    pub head: usize,
    pub tail: Vec<usize>,
}

/// `||x[tail]||^2 <= 2 x[a] x[b]`, with `x[a], x[b] >= 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RotatedSocBlock {
    pub a: usize,
    pub b: usize,
    pub tail: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram<T> {
    pub objective: Vec<T>,
    /// Constant added to the reported objective value.
    pub offset: T,
    pub eq_constraints: Vec<EqRow<T>>,
    pub var_bounds: Vec<(T, T)>,
    pub soc_blocks: Vec<SocBlock>,
    pub rotated_soc_blocks: Vec<RotatedSocBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// The objective is unbounded below (dual infeasible).
    Unbounded,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution<T> {
    pub x: Vec<T>,
    /// Multipliers of the equality rows, sign convention `c + A'y + G'z = 0`.
    pub y: Vec<T>,
    pub objective_value: T,
    pub status: SolveStatus,
    pub primal_residual: T,
    pub dual_residual: T,
    pub duality_gap: T,
    pub iterations: usize,
}

impl<T: Scalar> ConicSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

impl<T: Scalar> Default for ConicProgram<T> {
    fn default() -> Self {
        Self::new(0)
    }
}

impl<T: Scalar> ConicProgram<T> {
    /// Program with `n_vars` free variables and a zero objective.
    pub fn new(n_vars: usize) -> Self {
        Self {
            objective: vec![T::zero(); n_vars],
            offset: T::zero(),
            eq_constraints: Vec::new(),
            var_bounds: vec![(T::neg_infinity(), T::infinity()); n_vars],
            soc_blocks: Vec::new(),
            rotated_soc_blocks: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    /// Appends a variable with the given bounds and objective coefficient.
    pub fn add_var(&mut self, lo: T, hi: T, cost: T) -> usize {
        self.objective.push(cost);
        self.var_bounds.push((lo, hi));
        self.objective.len() - 1
    }

    pub fn add_free_var(&mut self) -> usize {
        self.add_var(T::neg_infinity(), T::infinity(), T::zero())
    }

    /// Variable pinned to `value` through an equality row.
    pub fn add_fixed_var(&mut self, value: T) -> usize {
        let v = self.add_free_var();
        self.add_eq(vec![(v, T::one())], value);
        v
    }

    pub fn add_eq(&mut self, coefs: Vec<(usize, T)>, rhs: T) -> usize {
        self.eq_constraints.push(EqRow { coefs, rhs });
        self.eq_constraints.len() - 1
    }

    pub fn add_soc(&mut self, head: usize, tail: Vec<usize>) {
        self.soc_blocks.push(SocBlock { head, tail });
    }

    pub fn add_rotated_soc(&mut self, a: usize, b: usize, tail: Vec<usize>) {
        self.rotated_soc_blocks.push(RotatedSocBlock { a, b, tail });
    }

    /// Checks index ranges, bound ordering and the single-head rule.
    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.n_vars();
        if self.var_bounds.len() != n {
            return Err(ConicError::Dimension(format!(
                "{} bounds for {} variables",
                self.var_bounds.len(),
                n
            )));
        }
        let check = |i: usize| {
            if i < n {
                Ok(())
            } else {
                Err(ConicError::IndexOutOfRange {
                    index: i,
                    n_vars: n,
                })
            }
        };
        for row in &self.eq_constraints {
            for &(i, _) in &row.coefs {
                check(i)?;
            }
        }
        for (i, &(lo, hi)) in self.var_bounds.iter().enumerate() {
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(ConicError::EmptyBounds(i));
            }
        }
        let mut heads = HashSet::new();
        for b in &self.soc_blocks {
            check(b.head)?;
            b.tail.iter().try_for_each(|&i| check(i))?;
            if !heads.insert(b.head) {
                return Err(ConicError::DuplicateHead(b.head));
            }
        }
        for b in &self.rotated_soc_blocks {
            check(b.a)?;
            check(b.b)?;
            b.tail.iter().try_for_each(|&i| check(i))?;
            for h in [b.a, b.b] {
                if !heads.insert(h) {
                    return Err(ConicError::DuplicateHead(h));
                }
            }
        }
        Ok(())
    }

    /// Objective value `c'x + offset` at a point.
    pub fn evaluate(&self, x: &[T]) -> T {
        self.offset + crate::scalar::dot(&self.objective, x)
    }
}

/// Epigraph of `a * x[var]^2`.
///
/// Adds an auxiliary variable `s` (objective coefficient left to the caller)
/// together with the rotated cone `x[var]^2 <= 2 * s * (1 / (2a))`, so that
/// minimizing `s` drives it to `a * x[var]^2`. The constant head `1/(2a)` is a
/// fixed variable. For `a == 0` no cone is needed and `s` is bounded at zero.
pub fn epigraph_quadratic<T: Scalar>(
    prog: &mut ConicProgram<T>,
    coef_a: T,
    var_index: usize,
) -> Result<(usize, Option<RotatedSocBlock>), ConicError> {
    if coef_a < T::zero() || coef_a.is_nan() {
        return Err(ConicError::NonConvex(coef_a.as_f64()));
    }
    if var_index >= prog.n_vars() {
        return Err(ConicError::IndexOutOfRange {
            index: var_index,
            n_vars: prog.n_vars(),
        });
    }
    if coef_a == T::zero() {
        let s = prog.add_var(T::zero(), T::zero(), T::zero());
        return Ok((s, None));
    }
    let s = prog.add_var(T::zero(), T::infinity(), T::zero());
    let k = prog.add_fixed_var(T::one() / (T::lit(2.0) * coef_a));
    let block = RotatedSocBlock {
        a: s,
        b: k,
        tail: vec![var_index],
    };
    prog.rotated_soc_blocks.push(block.clone());
    Ok((s, Some(block)))
}
