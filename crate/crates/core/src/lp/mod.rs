//! Linear programs, their solutions and a plain-text sparse dump format.
//!
//! Duals follow the shadow-price convention for both objective senses:
//! `row_duals[i]` is the rate of change of the optimal objective with respect
//! to the right-hand side of row `i`, and `col_duals[j]` the rate with respect
//! to the active bound of variable `j`. With that convention the identity
//! `c = Aᵀy + z` holds for minimization and maximization alike.

mod highs;
mod text;

pub use highs::LpSession;
pub use text::{read_text, write_text};

use serde::{Deserialize, Serialize};

use crate::error::LpError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            RowSense::Le => (act - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - act).max(0.0),
            RowSense::Eq => (act - self.rhs).abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub sense: Sense,
    pub vars: Vec<Variable>,
    pub rows: Vec<Constraint>,
}

/// Solver algorithm. Both return basic (vertex) solutions; the interior
/// point path runs crossover.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    DualSimplex,
    InteriorPoint,
}

/// Centralized solver tolerances and limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpConfig {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub iteration_cap: u64,
    pub time_limit_secs: Option<f64>,
    pub algorithm: Algorithm,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            gap_tol: 1e-6,
            iteration_cap: 50_000_000,
            time_limit_secs: None,
            algorithm: Algorithm::DualSimplex,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration or time limit reached before a verdict.
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub row_duals: Vec<f64>,
    pub col_duals: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    /// Row multipliers proving infeasibility, see [`LinearProgram::is_farkas_certificate`].
    pub farkas: Option<Vec<f64>>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        Self { sense, vars: Vec::new(), rows: Vec::new() }
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.vars.push(Variable { lower, upper, cost });
        self.vars.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> usize {
        self.rows.push(Constraint { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.coeffs.len()).sum()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        for (j, v) in self.vars.iter().enumerate() {
            if !v.cost.is_finite() || v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(LpError::Invalid(format!("variable {j} has bad bounds or cost")));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(LpError::Invalid(format!("row {i} has non-finite rhs")));
            }
            for &(j, a) in &r.coeffs {
                if j >= self.vars.len() {
                    return Err(LpError::Invalid(format!("row {i} references undeclared variable {j}")));
                }
                if !a.is_finite() {
                    return Err(LpError::Invalid(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, xi)| v.cost * xi).sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lower - xi).max(xi - v.upper).max(0.0))
            .fold(0.0, f64::max);
        self.rows.iter().map(|r| r.violation(x)).fold(bounds, f64::max)
    }

    /// Dual objective of shadow-price multipliers `y`, with reduced costs
    /// recomputed from `c − Aᵀy` and attached to the bound they point at.
    /// Returns `-inf` (min) / `+inf` (max) when a reduced cost points at an
    /// infinite bound by more than `tol`.
    pub fn dual_objective(&self, y: &[f64], tol: f64) -> f64 {
        // Multipliers of the wrong sign are projected to zero so the value
        // stays a valid bound.
        let y: Vec<f64> = self
            .rows
            .iter()
            .zip(y)
            .map(|(r, &yi)| {
                let nonneg = match (r.sense, self.sense) {
                    (RowSense::Eq, _) => return yi,
                    (RowSense::Ge, Sense::Minimize) | (RowSense::Le, Sense::Maximize) => true,
                    _ => false,
                };
                if nonneg { yi.max(0.0) } else { yi.min(0.0) }
            })
            .collect();
        let mut z: Vec<f64> = self.vars.iter().map(|v| v.cost).collect();
        for (row, &yi) in self.rows.iter().zip(&y) {
            for &(j, a) in &row.coeffs {
                z[j] -= a * yi;
            }
        }
        let mut obj: f64 = self.rows.iter().zip(&y).map(|(r, yi)| r.rhs * yi).sum();
        let bad = match self.sense {
            Sense::Minimize => f64::NEG_INFINITY,
            Sense::Maximize => f64::INFINITY,
        };
        for (v, &zj) in self.vars.iter().zip(&z) {
            if zj == 0.0 {
                continue;
            }
            let at_lower = (self.sense == Sense::Minimize) == (zj > 0.0);
            let bound = if at_lower { v.lower } else { v.upper };
            if bound.is_finite() {
                obj += zj * bound;
            } else if zj.abs() > tol {
                return bad;
            }
        }
        obj
    }

    /// Checks that row multipliers `y` prove infeasibility: with `r = Ax`,
    /// every feasible point satisfies `yᵀr = (Aᵀy)ᵀx`, but the box bounds and
    /// the row bounds force the two sides into disjoint ranges.
    pub fn is_farkas_certificate(&self, y: &[f64], tol: f64) -> bool {
        if y.len() != self.rows.len() {
            return false;
        }
        let mut z = vec![0.0; self.vars.len()];
        for (row, &yi) in self.rows.iter().zip(y) {
            for &(j, a) in &row.coeffs {
                z[j] += a * yi;
            }
        }
        let (mut col_lo, mut col_hi) = (0.0, 0.0);
        for (v, &zj) in self.vars.iter().zip(&z) {
            if zj.abs() <= 1e-12 {
                continue;
            }
            let (a, b) = if zj > 0.0 { (zj * v.lower, zj * v.upper) } else { (zj * v.upper, zj * v.lower) };
            col_lo += a;
            col_hi += b;
        }
        let (mut row_lo, mut row_hi) = (0.0, 0.0);
        for (r, &yi) in self.rows.iter().zip(y) {
            if yi.abs() <= 1e-12 {
                continue;
            }
            let (lo, hi) = match r.sense {
                RowSense::Le => (f64::NEG_INFINITY, r.rhs),
                RowSense::Ge => (r.rhs, f64::INFINITY),
                RowSense::Eq => (r.rhs, r.rhs),
            };
            let (a, b) = if yi > 0.0 { (yi * lo, yi * hi) } else { (yi * hi, yi * lo) };
            row_lo += a;
            row_hi += b;
        }
        let scale = 1.0 + y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        col_hi < row_lo - tol * scale || row_hi < col_lo - tol * scale
    }
}

/// Solves `lp` from scratch.
pub fn solve(lp: &LinearProgram, cfg: &LpConfig) -> Result<LpSolution, LpError> {
    let mut session = LpSession::new(lp.clone(), cfg.clone())?;
    session.solve()
}

/// Post-solve verification shared by every backend path.
pub(crate) fn certify(lp: &LinearProgram, cfg: &LpConfig, sol: &mut LpSolution) -> Result<(), LpError> {
    if sol.status != LpStatus::Optimal {
        return Ok(());
    }
    let viol = lp.max_violation(&sol.primal);
    if viol > cfg.feas_tol {
        return Err(LpError::Inaccurate(format!("primal violation {viol:e} exceeds {:e}", cfg.feas_tol)));
    }
    sol.objective = lp.objective_value(&sol.primal);
    sol.dual_objective = lp.dual_objective(&sol.row_duals, cfg.feas_tol);
    let gap = (sol.objective - sol.dual_objective).abs();
    if !(gap <= cfg.gap_tol * (1.0 + sol.objective.abs())) {
        return Err(LpError::Inaccurate(format!(
            "duality gap {gap:e} (primal {}, dual {})",
            sol.objective, sol.dual_objective
        )));
    }
    Ok(())
}
