//! Baseline strategy value: examine one sequence at a time.
//!
//! The comparison strategy observes a single sequence per step. Its belief
//! is the scalar posterior `pi~` that the sequence in hand carries the
//! signal; stopping declares that sequence and pays `1 - pi~`, switching
//! abandons it for a fresh one at the prior. The switch branch `A_b` is one
//! scalar for the same reason as in the paired scanner: a fresh sequence
//! always starts at the prior.
//!
//! Solving on a uniform grid over `[0, 1]` mirrors the paired solver:
//! value iteration from the stopping cost with the switch branch refreshed
//! every sweep, a final pass that stores an exactly consistent triple, and
//! threshold extraction for the executable policy.

use crate::model::ModelParams;
use super::quad::Integrator;
use super::surface::SurfaceMeta;
use super::{DpError, SolverSettings};

/// Solved baseline problem on the uniform belief grid.
#[derive(Debug, Clone)]
pub struct BaselineSolution {
    /// Grid over the scalar belief, `grid[i] = i / (n - 1)`.
    pub grid: Vec<f64>,
    /// `V_b` at the grid points.
    pub values: Vec<f64>,
    /// Continue branch `E[V_b(updated belief)]` at the grid points.
    pub cont: Vec<f64>,
    /// Switch branch: the continue branch evaluated at the prior.
    pub switch_value: f64,
    /// Smallest belief from which stopping is optimal all the way up.
    pub stop_threshold: f64,
    /// Largest belief that strictly prefers switching; 0 when none does.
    pub switch_threshold: f64,
    pub meta: SurfaceMeta,
}

impl BaselineSolution {
    /// Linear interpolation of `V_b` at an arbitrary belief.
    pub fn value_at(&self, pi_tilde: f64) -> f64 {
        let n = self.grid.len();
        let s = pi_tilde.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (s.floor() as usize).min(n - 2);
        let frac = s - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// One Bayes step of the scalar belief after observing `x`.
fn posterior(pi_tilde: f64, v0: f64, v1: f64) -> f64 {
    let denom = pi_tilde * v1 + (1.0 - pi_tilde) * v0;
    if denom <= 0.0 {
        return pi_tilde;
    }
    (pi_tilde * v1 / denom).clamp(0.0, 1.0)
}

/// Solve the single-sequence search problem.
pub fn solve_baseline(
    params: &ModelParams,
    settings: &SolverSettings,
) -> Result<BaselineSolution, DpError> {
    settings.validate()?;
    params.validate()?;
    let pair = &params.density_pair;
    let f0 = pair.f0();
    let f1 = pair.f1();
    let integ = Integrator::for_densities(&settings.quadrature(), &[&f0, &f1])?;
    let n = settings.baseline_grid;
    let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();

    // Stencil cache: predictive weight and interpolation position of the
    // posterior for every (grid point, quadrature point) pair.
    let q = integ.len();
    let mut wpred = vec![0.0; n * q];
    let mut pos = vec![(0u32, 0.0f64); n * q];
    let density_values: Vec<(f64, f64, f64)> = integ
        .nodes
        .iter()
        .zip(&integ.weights)
        .map(|(&x, &w)| (w, f0.eval(x), f1.eval(x)))
        .collect();
    let locate = |p: f64| -> (u32, f64) {
        let s = p.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (s.floor() as usize).min(n - 2);
        (i as u32, s - i as f64)
    };
    let fill = |pi_t: f64, wpred_row: &mut [f64], pos_row: &mut [(u32, f64)]| {
        for (e, &(w, v0, v1)) in density_values.iter().enumerate() {
            let pred = pi_t * v1 + (1.0 - pi_t) * v0;
            if w * pred <= 0.0 {
                continue;
            }
            wpred_row[e] = w * pred;
            pos_row[e] = locate(posterior(pi_t, v0, v1));
        }
    };
    for (i, &pi_t) in grid.iter().enumerate() {
        fill(pi_t, &mut wpred[i * q..(i + 1) * q], &mut pos[i * q..(i + 1) * q]);
    }
    let mut prior_wpred = vec![0.0; q];
    let mut prior_pos = vec![(0u32, 0.0f64); q];
    fill(params.pi, &mut prior_wpred, &mut prior_pos);

    let branch = |v: &[f64], wrow: &[f64], prow: &[(u32, f64)]| -> f64 {
        let mut acc = 0.0;
        for (w, &(i, frac)) in wrow.iter().zip(prow) {
            acc += w * (v[i as usize] * (1.0 - frac) + v[i as usize + 1] * frac);
        }
        acc
    };

    let stop: Vec<f64> = grid.iter().map(|&p| 1.0 - p).collect();
    let mut v = stop.clone();
    let c = params.c;
    let mut iterations = 0u64;
    let mut max_increase = 0.0f64;
    loop {
        iterations += 1;
        let a_b = branch(&v, &prior_wpred, &prior_pos);
        let mut residual = 0.0f64;
        let mut new_v = vec![0.0; n];
        for i in 0..n {
            let cont_i = branch(&v, &wpred[i * q..(i + 1) * q], &pos[i * q..(i + 1) * q]);
            let next = stop[i].min(c + cont_i.min(a_b));
            residual = residual.max((next - v[i]).abs());
            max_increase = max_increase.max(next - v[i]);
            new_v[i] = next;
        }
        v = new_v;
        if residual <= settings.tol {
            break;
        }
        if iterations >= settings.max_iter {
            return Err(DpError::NoConvergence { residual, tol: settings.tol, iterations });
        }
    }

    // Store an exactly consistent triple from the converged surface.
    let switch_value = branch(&v, &prior_wpred, &prior_pos);
    let cont: Vec<f64> = (0..n)
        .map(|i| branch(&v, &wpred[i * q..(i + 1) * q], &pos[i * q..(i + 1) * q]))
        .collect();
    let mut residual = 0.0f64;
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let next = stop[i].min(c + cont[i].min(switch_value));
            residual = residual.max((next - v[i]).abs());
            max_increase = max_increase.max(next - v[i]);
            next
        })
        .collect();

    // Stopping region boundary: the smallest grid point above which
    // stopping stays optimal (ties stop).
    let stops: Vec<bool> = (0..n)
        .map(|i| stop[i] <= c + cont[i].min(switch_value))
        .collect();
    let last_continue = (0..n).rev().find(|&i| !stops[i]);
    let stop_threshold = match last_continue {
        Some(i) if i + 1 < n => grid[i + 1],
        Some(_) => 1.0,
        None => 0.0,
    };
    // Largest belief that strictly prefers a fresh sequence.
    let switch_threshold = (0..n)
        .rev()
        .find(|&i| !stops[i] && switch_value < cont[i])
        .map_or(0.0, |i| grid[i]);

    let meta = SurfaceMeta {
        params_hash: crate::io::params_hash(params, settings),
        iterations,
        residual,
        max_increase,
    };
    Ok(BaselineSolution {
        grid,
        values,
        cont,
        switch_value,
        stop_threshold,
        switch_threshold,
        meta,
    })
}
