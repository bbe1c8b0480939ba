use std::ffi::{c_void, CString};

use highs_sys::*;

use super::{certify, Algorithm, Constraint, LinearProgram, LpConfig, LpSolution, LpStatus, RowSense, Sense};
use crate::error::LpError;

/// A HiGHS instance holding one program; rows can be appended between solves
/// and the previous basis is reused.
pub struct LpSession {
    handle: *mut c_void,
    lp: LinearProgram,
    cfg: LpConfig,
}

fn row_bounds(r: &Constraint) -> (f64, f64) {
    match r.sense {
        RowSense::Le => (f64::NEG_INFINITY, r.rhs),
        RowSense::Ge => (r.rhs, f64::INFINITY),
        RowSense::Eq => (r.rhs, r.rhs),
    }
}

fn to_int(v: usize) -> Result<HighsInt, LpError> {
    HighsInt::try_from(v).map_err(|_| LpError::Invalid(format!("size {v} overflows the solver index type")))
}

fn csr(rows: &[Constraint]) -> Result<(Vec<HighsInt>, Vec<HighsInt>, Vec<f64>, Vec<f64>, Vec<f64>), LpError> {
    let mut start = Vec::with_capacity(rows.len());
    let mut index = Vec::new();
    let mut value = Vec::new();
    let mut lower = Vec::with_capacity(rows.len());
    let mut upper = Vec::with_capacity(rows.len());
    for r in rows {
        start.push(to_int(index.len())?);
        for &(j, a) in &r.coeffs {
            index.push(to_int(j)?);
            value.push(a);
        }
        let (lo, hi) = row_bounds(r);
        lower.push(lo);
        upper.push(hi);
    }
    Ok((start, index, value, lower, upper))
}

impl LpSession {
    pub fn new(lp: LinearProgram, cfg: LpConfig) -> Result<Self, LpError> {
        lp.validate()?;
        // SAFETY: Highs_create returns an owned instance released in Drop.
        let handle = unsafe { Highs_create() };
        if handle.is_null() {
            return Err(LpError::Backend("could not create solver instance".into()));
        }
        let session = Self { handle, lp, cfg };
        session.apply_options()?;
        session.pass_model()?;
        Ok(session)
    }

    pub fn program(&self) -> &LinearProgram {
        &self.lp
    }

    pub fn into_program(mut self) -> LinearProgram {
        std::mem::replace(&mut self.lp, LinearProgram::new(Sense::Minimize))
    }

    fn set_bool(&self, name: &str, v: bool) -> Result<(), LpError> {
        let c = CString::new(name).unwrap();
        let st = unsafe { Highs_setBoolOptionValue(self.handle, c.as_ptr(), v as HighsInt) };
        self.check(st, name)
    }

    fn set_int(&self, name: &str, v: HighsInt) -> Result<(), LpError> {
        let c = CString::new(name).unwrap();
        let st = unsafe { Highs_setIntOptionValue(self.handle, c.as_ptr(), v) };
        self.check(st, name)
    }

    fn set_double(&self, name: &str, v: f64) -> Result<(), LpError> {
        let c = CString::new(name).unwrap();
        let st = unsafe { Highs_setDoubleOptionValue(self.handle, c.as_ptr(), v) };
        self.check(st, name)
    }

    fn set_string(&self, name: &str, v: &str) -> Result<(), LpError> {
        let c = CString::new(name).unwrap();
        let cv = CString::new(v).unwrap();
        let st = unsafe { Highs_setStringOptionValue(self.handle, c.as_ptr(), cv.as_ptr()) };
        self.check(st, name)
    }

    fn check(&self, status: HighsInt, what: &str) -> Result<(), LpError> {
        if status == STATUS_ERROR {
            Err(LpError::Backend(format!("solver call failed: {what}")))
        } else {
            Ok(())
        }
    }

    fn apply_options(&self) -> Result<(), LpError> {
        self.set_bool("output_flag", false)?;
        self.set_int("threads", 1)?;
        self.set_int("random_seed", 0)?;
        let tol = (self.cfg.feas_tol * 1e-2).clamp(1e-10, 1e-7);
        self.set_double("primal_feasibility_tolerance", tol)?;
        self.set_double("dual_feasibility_tolerance", tol)?;
        let cap = HighsInt::try_from(self.cfg.iteration_cap).unwrap_or(HighsInt::MAX);
        self.set_int("simplex_iteration_limit", cap)?;
        self.set_int("ipm_iteration_limit", cap)?;
        if let Some(t) = self.cfg.time_limit_secs {
            self.set_double("time_limit", t)?;
        }
        match self.cfg.algorithm {
            Algorithm::DualSimplex => {
                self.set_string("solver", "simplex")?;
                self.set_int("simplex_strategy", 1)?;
            }
            Algorithm::InteriorPoint => {
                self.set_string("solver", "ipm")?;
                self.set_string("run_crossover", "on")?;
            }
        }
        Ok(())
    }

    fn pass_model(&self) -> Result<(), LpError> {
        let lp = &self.lp;
        // Always handed over as a minimization; duals are flipped back for Maximize.
        let flip = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let cost: Vec<f64> = lp.vars.iter().map(|v| flip * v.cost).collect();
        let lower: Vec<f64> = lp.vars.iter().map(|v| v.lower).collect();
        let upper: Vec<f64> = lp.vars.iter().map(|v| v.upper).collect();
        let (start, index, value, rlo, rhi) = csr(&lp.rows)?;
        let st = unsafe {
            Highs_passLp(
                self.handle,
                to_int(lp.vars.len())?,
                to_int(lp.rows.len())?,
                to_int(index.len())?,
                MATRIX_FORMAT_ROW_WISE,
                OBJECTIVE_SENSE_MINIMIZE,
                0.0,
                cost.as_ptr(),
                lower.as_ptr(),
                upper.as_ptr(),
                rlo.as_ptr(),
                rhi.as_ptr(),
                start.as_ptr(),
                index.as_ptr(),
                value.as_ptr(),
            )
        };
        self.check(st, "pass model")
    }

    /// Appends rows to the model; the next [`solve`](Self::solve) warm-starts.
    pub fn add_rows(&mut self, rows: Vec<Constraint>) -> Result<(), LpError> {
        if rows.is_empty() {
            return Ok(());
        }
        for r in &rows {
            for &(j, a) in &r.coeffs {
                if j >= self.lp.vars.len() || !a.is_finite() {
                    return Err(LpError::Invalid("appended row references an undeclared variable".into()));
                }
            }
        }
        let (start, index, value, rlo, rhi) = csr(&rows)?;
        let st = unsafe {
            Highs_addRows(
                self.handle,
                to_int(rows.len())?,
                rlo.as_ptr(),
                rhi.as_ptr(),
                to_int(index.len())?,
                start.as_ptr(),
                index.as_ptr(),
                value.as_ptr(),
            )
        };
        self.check(st, "add rows")?;
        self.lp.rows.extend(rows);
        Ok(())
    }

    fn run(&self) -> Result<HighsInt, LpError> {
        let st = unsafe { Highs_run(self.handle) };
        self.check(st, "run")?;
        Ok(unsafe { Highs_getModelStatus(self.handle) })
    }

    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        let nc = self.lp.vars.len();
        let nr = self.lp.rows.len();
        let mut status = self.run()?;
        if status == MODEL_STATUS_UNBOUNDED_OR_INFEASIBLE {
            self.set_string("presolve", "off")?;
            status = self.run()?;
            self.set_string("presolve", "choose")?;
        }
        let status = match status {
            MODEL_STATUS_OPTIMAL | MODEL_STATUS_MODEL_EMPTY => LpStatus::Optimal,
            MODEL_STATUS_INFEASIBLE => LpStatus::Infeasible,
            MODEL_STATUS_UNBOUNDED | MODEL_STATUS_UNBOUNDED_OR_INFEASIBLE => LpStatus::Unbounded,
            MODEL_STATUS_REACHED_ITERATION_LIMIT | MODEL_STATUS_REACHED_TIME_LIMIT => LpStatus::Stalled,
            other => return Err(LpError::Backend(format!("solver returned model status {other}"))),
        };
        let mut primal = vec![0.0; nc];
        let mut col_duals = vec![0.0; nc];
        let mut row_act = vec![0.0; nr];
        let mut row_duals = vec![0.0; nr];
        let mut farkas = None;
        if status == LpStatus::Optimal {
            let st = unsafe {
                Highs_getSolution(
                    self.handle,
                    primal.as_mut_ptr(),
                    col_duals.as_mut_ptr(),
                    row_act.as_mut_ptr(),
                    row_duals.as_mut_ptr(),
                )
            };
            self.check(st, "get solution")?;
            if self.lp.sense == Sense::Maximize {
                row_duals.iter_mut().for_each(|y| *y = -*y);
                col_duals.iter_mut().for_each(|z| *z = -*z);
            }
        } else if status == LpStatus::Infeasible {
            let mut has: HighsInt = 0;
            let mut ray = vec![0.0; nr];
            let st = unsafe { Highs_getDualRay(self.handle, &mut has, ray.as_mut_ptr()) };
            if st != STATUS_ERROR && has != 0 {
                let tol = self.cfg.feas_tol;
                if self.lp.is_farkas_certificate(&ray, tol) {
                    farkas = Some(ray);
                } else {
                    let neg: Vec<f64> = ray.iter().map(|v| -v).collect();
                    if self.lp.is_farkas_certificate(&neg, tol) {
                        farkas = Some(neg);
                    }
                }
            }
        }
        let mut sol = LpSolution {
            status,
            primal,
            row_duals,
            col_duals,
            objective: f64::NAN,
            dual_objective: f64::NAN,
            farkas,
        };
        certify(&self.lp, &self.cfg, &mut sol)?;
        Ok(sol)
    }
}

impl Drop for LpSession {
    fn drop(&mut self) {
        // SAFETY: handle came from Highs_create and is released exactly once.
        unsafe { Highs_destroy(self.handle) };
    }
}
