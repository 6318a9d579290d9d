//! Sparse linear programming and 0/1 branch-and-bound.
//!
//! * [`LinearProgram`]: minimize `c·x` subject to sparse rows with `<=`, `=`
//!   or `>=` and per-variable bounds (infinite bounds allowed).
//! * [`solve_lp`]: bounded-variable revised simplex over an LU-factored basis
//!   with product-form updates. Primal phase 1 minimizes the sum of
//!   infeasibilities; a Bland's-rule fallback kicks in after a run of
//!   degenerate pivots.
//! * [`solve_milp`]: best-first branch-and-bound over binary variables, warm
//!   started with the dual simplex from the parent basis.

mod bnb;
mod lu;
mod simplex;

pub use bnb::{solve_milp, BnbOptions};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Final check tolerance on constraint rows scaled to unit max-coefficient.
pub const FEASIBILITY_TOL: f64 = 1e-6;
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MilpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("numerical breakdown: {what} (pivot magnitude {pivot:e})")]
    Numerical { what: &'static str, pivot: f64 },
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    constraints: Vec<Constraint>,
    var_names: Vec<String>,
    row_names: Vec<String>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a variable with objective coefficient `cost` and bounds
    /// `[lower, upper]`; returns its index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_named_var(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        let j = self.add_var(cost, lower, upper);
        self.set_var_name(j, name);
        j
    }

    pub fn set_var_name(&mut self, j: usize, name: impl Into<String>) {
        if self.var_names.len() < self.objective.len() {
            let start = self.var_names.len();
            self.var_names.extend((start..self.objective.len()).map(|i| format!("x{i}")));
        }
        self.var_names[j] = name.into();
    }

    pub fn var_name(&self, j: usize) -> String {
        self.var_names
            .get(j)
            .cloned()
            .unwrap_or_else(|| format!("x{j}"))
    }

    pub fn row_name(&self, i: usize) -> String {
        self.row_names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("c{i}"))
    }

    pub fn set_row_name(&mut self, i: usize, name: impl Into<String>) {
        if self.row_names.len() < self.constraints.len() {
            let start = self.row_names.len();
            self.row_names.extend((start..self.constraints.len()).map(|k| format!("c{k}")));
        }
        self.row_names[i] = name.into();
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn set_objective(&mut self, j: usize, cost: f64) {
        self.objective[j] = cost;
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn nnz(&self) -> usize {
        self.constraints.iter().map(|c| c.coeffs.len()).sum()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        let n = self.num_vars();
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(MilpError::Malformed(format!(
                    "variable {} has bounds [{lo}, {hi}]",
                    self.var_name(j)
                )));
            }
            if !self.objective[j].is_finite() {
                return Err(MilpError::Malformed(format!(
                    "objective coefficient of {} is not finite",
                    self.var_name(j)
                )));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(MilpError::Malformed(format!("row {} has rhs {}", self.row_name(i), c.rhs)));
            }
            for &(j, a) in &c.coeffs {
                if j >= n || !a.is_finite() {
                    return Err(MilpError::Malformed(format!(
                        "row {} has entry ({j}, {a})",
                        self.row_name(i)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest violation of any row (after scaling the row to unit
    /// max-coefficient) or bound.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for c in &self.constraints {
            let scale = c.coeffs.iter().fold(0.0f64, |m, (_, a)| m.max(a.abs()));
            if scale == 0.0 {
                continue;
            }
            let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v / scale);
        }
        worst
    }
}

/// A linear program with some variables restricted to {0, 1}.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    pub lp: LinearProgram,
    binaries: Vec<usize>,
}

impl MilpProblem {
    pub fn new(lp: LinearProgram) -> Self {
        Self {
            lp,
            binaries: Vec::new(),
        }
    }

    /// Add a binary variable.
    pub fn add_binary(&mut self, cost: f64) -> usize {
        let j = self.lp.add_var(cost, 0.0, 1.0);
        self.binaries.push(j);
        j
    }

    /// Restrict an existing variable to {0, 1} (bounds become `[0, 1]`).
    pub fn mark_binary(&mut self, j: usize) {
        self.lp.set_bounds(j, 0.0, 1.0);
        if !self.binaries.contains(&j) {
            self.binaries.push(j);
        }
    }

    pub fn binaries(&self) -> &[usize] {
        &self.binaries
    }

    pub fn is_binary(&self, j: usize) -> bool {
        self.binaries.contains(&j)
    }

    /// Same problem with every binary relaxed to the interval `[0, 1]`.
    pub fn relaxation(&self) -> LinearProgram {
        self.lp.clone()
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        self.lp.validate()?;
        for &j in &self.binaries {
            if j >= self.lp.num_vars() {
                return Err(MilpError::Malformed(format!("binary index {j} out of range")));
            }
            if self.lp.lower[j] != 0.0 || self.lp.upper[j] != 1.0 {
                return Err(MilpError::Malformed(format!(
                    "binary {} must have bounds [0, 1]",
                    self.lp.var_name(j)
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node limit hit; `x` holds the best incumbent if one was found.
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: Status,
    pub objective: f64,
    pub x: Vec<f64>,
    /// Row duals (LP solves only; empty after branch-and-bound).
    pub row_duals: Vec<f64>,
    /// Reduced costs of the structural variables (LP solves only).
    pub reduced_costs: Vec<f64>,
    /// Best proven lower bound (equals `objective` when optimal).
    pub bound: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
}

impl MilpSolution {
    pub(crate) fn without_point(status: Status, nodes: usize, lp_iterations: usize) -> Self {
        Self {
            status,
            objective: match status {
                Status::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            x: Vec::new(),
            row_duals: Vec::new(),
            reduced_costs: Vec::new(),
            bound: f64::INFINITY,
            nodes,
            lp_iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Solve a continuous linear program.
pub fn solve_lp(lp: &LinearProgram) -> Result<MilpSolution, MilpError> {
    lp.validate()?;
    let mut s = simplex::Simplex::new(lp);
    let status = s.solve_from_scratch()?;
    let iterations = s.iterations();
    Ok(match status {
        simplex::LpStatus::Optimal => {
            let x = s.primal_values();
            let (row_duals, reduced_costs) = s.dual_values();
            let objective = lp.objective_value(&x);
            MilpSolution {
                status: Status::Optimal,
                objective,
                x,
                row_duals,
                reduced_costs,
                bound: objective,
                nodes: 1,
                lp_iterations: iterations,
            }
        }
        simplex::LpStatus::Infeasible => MilpSolution::without_point(Status::Infeasible, 1, iterations),
        simplex::LpStatus::Unbounded => MilpSolution::without_point(Status::Unbounded, 1, iterations),
    })
}
