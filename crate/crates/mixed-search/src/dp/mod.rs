//! Dynamic-programming solvers for the concatenated stopping problems.
//!
//! Three surfaces drive the search policy, solved in dependency order:
//!
//! 1. `g(p11, pmix)`: expected cost of entering refinement at a given scan
//!    belief. Beliefs reachable during refinement form a one-dimensional
//!    ray per origin, so `g` decomposes into independent one-dimensional
//!    stopping problems in log-likelihood-ratio space
//!    ([`solve_refinement`]).
//! 2. `V_s(p11, pmix)` with its continue branch `A_c` and switch scalar
//!    `A_s`: the scanning-stage value with `g` as stopping cost
//!    ([`solve_scanning`]).
//! 3. `V_b(pi~)`: the single-sequence baseline that examines one sequence
//!    at a time ([`solve_baseline`]), used for delay comparisons.
//!
//! All three are value iterations from the stopping cost, which makes the
//! iterates pointwise non-increasing; each solver records the largest
//! observed increase so a violation is visible in the surface metadata.
//! [`horizon`](self) evaluators compute exact finite-horizon truncations of
//! the same recursions by direct recursion, independent of any grid, and
//! anchor the solvers in tests.

mod baseline;
mod horizon;
mod quad;
mod refinement;
mod scanning;
mod surface;

pub use baseline::{solve_baseline, BaselineSolution};
pub use horizon::{baseline_value_fh, refinement_value_fh, scanning_value_fh};
pub use quad::{gauss_legendre, Integrator, QuadratureSpec};
pub use refinement::{solve_refinement, LogLrGrid, RefinementSolution};
pub use scanning::{expected_next_value, solve_scanning, NextAction, ScanningSolution};
pub use surface::{GridSpec, SurfaceMeta, ValueSurface};

use crate::belief::BeliefError;
use crate::model::ModelError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DpError {
    #[error("quadrature captures mass {mass}, expected 1 within tolerance; widen the range or refine the rule")]
    QuadratureMass { mass: f64 },
    #[error("value iteration residual {residual} above tolerance {tol} after {iterations} sweeps")]
    NoConvergence { residual: f64, tol: f64, iterations: u64 },
    #[error("scanning solve expects the refinement surface on grid m={expected}, got m={got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// Numerical knobs shared by the solvers. The defaults reproduce the
/// reference configuration; every field can be overridden per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Triangular grid resolution for the scan-belief surfaces.
    pub grid_m: usize,
    /// Requested node count for continuous-density quadrature.
    pub quad_points: usize,
    /// Sup-norm residual at which value iteration stops.
    pub tol: f64,
    /// Sweep budget before a solve reports non-convergence.
    pub max_iter: u64,
    /// Half-width of the log-likelihood-ratio grid for refinement.
    pub loglr_bound: f64,
    /// Node count of the log-likelihood-ratio grid; odd so zero is a node.
    pub loglr_points: usize,
    /// Node count of the baseline's one-dimensional belief grid.
    pub baseline_grid: usize,
    /// Interpolation-error allowance used when comparing surface values,
    /// for example in region extraction tie-breaks.
    pub interp_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            grid_m: 201,
            quad_points: 129,
            tol: 1e-7,
            max_iter: 20_000,
            loglr_bound: 40.0,
            loglr_points: 401,
            baseline_grid: 1001,
            interp_tol: 1e-4,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), DpError> {
        let fail = |msg: String| Err(DpError::InvalidSettings(msg));
        if self.grid_m < 20 {
            return fail(format!("grid_m must be at least 20, got {}", self.grid_m));
        }
        if self.quad_points < 5 {
            return fail(format!("quad_points must be at least 5, got {}", self.quad_points));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return fail(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return fail("max_iter must be positive".into());
        }
        if !(self.loglr_bound > 0.0) || !self.loglr_bound.is_finite() {
            return fail(format!("loglr_bound must be positive, got {}", self.loglr_bound));
        }
        if self.loglr_points < 41 || self.loglr_points.is_multiple_of(2) {
            return fail(format!(
                "loglr_points must be odd and at least 41, got {}",
                self.loglr_points
            ));
        }
        if self.baseline_grid < 51 {
            return fail(format!("baseline_grid must be at least 51, got {}", self.baseline_grid));
        }
        if !(self.interp_tol > 0.0) || !self.interp_tol.is_finite() {
            return fail(format!("interp_tol must be positive, got {}", self.interp_tol));
        }
        Ok(())
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec { n_points: self.quad_points }
    }
}
