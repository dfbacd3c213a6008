//! Stage-two value `g`: the cost of refining a committed pair.
//!
//! From a commitment belief `(p11, pmix)`, refinement observes sequence `a`
//! alone, so every reachable posterior is [`embed`]`(origin, lambda)` for
//! the accumulated log-likelihood ratio `lambda`. Each grid origin therefore
//! yields an independent one-dimensional stopping problem on a uniform
//! `lambda` grid.
//!
//! The iteration runs on likelihood-weighted values `W(lambda) =
//! m(lambda) * V(lambda)` with `m(lambda) = q * exp(lambda) + (1 - q)` and
//! `q = p11 + pmix / 2`. Two things fall out of this form:
//!
//! * The stopping cost becomes `p00 + (pmix / 2) * min(exp(lambda), 1)`,
//!   bounded in `[0, 1]` even where `exp(lambda)` overflows any reasonable
//!   scale, so the solve is well conditioned over the whole grid.
//! * The expectation over the next observation reduces to an integral
//!   against `f0` alone, with a translation-invariant kernel in `lambda`.
//!   On the uniform grid that is a discrete convolution whose kernel is
//!   built once from the quadrature rule and shared by all origins; steps
//!   that leave the grid read the boundary values, which equal the exact
//!   saturated stopping costs once converged.
//!
//! Dividing by `m` recovers `V`, and `g(origin) = V(0)` because `m(0) = 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{DensityPair, ModelParams};

use super::quad::Integrator;
use super::surface::{GridSpec, SurfaceMeta, ValueSurface};
use super::{DpError, SolverSettings};

/// Uniform grid over accumulated log-likelihood ratios `[-bound, bound]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLrGrid {
    pub bound: f64,
    pub n: usize,
}

impl LogLrGrid {
    pub fn step(&self) -> f64 {
        self.bound / self.center() as f64
    }

    /// Grid points spread symmetrically from the center so `lambda = 0` is
    /// exact, which lets `g = V(0)` read off without interpolation.
    pub fn point(&self, t: usize) -> f64 {
        (t as f64 - self.center() as f64) * self.step()
    }

    /// Index of `lambda = 0`; the grid has an odd point count so this is a
    /// node.
    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }
}

/// Solved stage-two problem: the entry-cost surface `g` plus the per-origin
/// value and continuation tables along the log-likelihood-ratio grid, which
/// the refinement policy consults.
#[derive(Debug, Clone)]
pub struct RefinementSolution {
    pub g: ValueSurface,
    pub loglr: LogLrGrid,
    /// `values[node][t] = V(lambda_t)` for the origin at `node`.
    pub values: Vec<Vec<f64>>,
    /// `continuation[node][t] = E[V(lambda_t + logLR(X))]`, so that
    /// `V = min(stop cost, c + continuation)` holds at every table entry.
    pub continuation: Vec<Vec<f64>>,
}

impl RefinementSolution {
    /// Expected cost of one more refinement observation, interpolated
    /// across origins (barycentric on the triangle) and along the ray
    /// (linear in `lambda`, clamped at the grid ends).
    pub fn continuation_at(&self, p11: f64, pmix: f64, log_lr: f64) -> f64 {
        self.ray_interp(&self.continuation, p11, pmix, log_lr)
    }

    /// Interpolated refinement value at an arbitrary ray point.
    pub fn value_at(&self, p11: f64, pmix: f64, log_lr: f64) -> f64 {
        self.ray_interp(&self.values, p11, pmix, log_lr)
    }

    fn ray_interp(&self, table: &[Vec<f64>], p11: f64, pmix: f64, log_lr: f64) -> f64 {
        let (idx, w) = self.g.grid.locate(p11, pmix);
        let s = (log_lr.clamp(-self.loglr.bound, self.loglr.bound) + self.loglr.bound)
            / self.loglr.step();
        let t = (s.floor() as usize).min(self.loglr.n - 2);
        let frac = (s - t as f64).clamp(0.0, 1.0);
        let mut acc = 0.0;
        for (&node, &wn) in idx.iter().zip(&w) {
            let row = &table[node];
            acc += wn * (row[t] * (1.0 - frac) + row[t + 1] * frac);
        }
        acc
    }
}

/// The origin-independent pieces of the likelihood-weighted operator.
struct RefineShared {
    c: f64,
    n: usize,
    /// `exp(lambda_t)`, finite for any practical bound.
    lam_exp: Vec<f64>,
    /// `min(exp(lambda_t), 1)`, the saturated-odds factor in the stop cost.
    lam_min1: Vec<f64>,
    /// Convolution kernel: `bins[i]` is the `f0`-weighted quadrature mass
    /// whose log-likelihood-ratio step lands at grid offset `k_lo + i`.
    bins: Vec<f64>,
    k_lo: i64,
    /// Kernel mass stepping below the grid from row `t` (reads `W[0]`).
    lo_mass: Vec<f64>,
    /// Kernel mass stepping above the grid from row `t` (reads `W[n-1]`).
    hi_mass: Vec<f64>,
}

impl RefineShared {
    fn build(
        params: &ModelParams,
        integ: &Integrator,
        loglr: &LogLrGrid,
    ) -> Result<Self, DpError> {
        let pair = &params.density_pair;
        let f0 = pair.f0();
        let h = loglr.step();
        let n = loglr.n;

        // Split each quadrature atom's step linearly across the two
        // enclosing grid offsets.
        let mut entries: Vec<(i64, f64)> = Vec::with_capacity(2 * integ.len());
        let mut below_all = 0.0;
        for (&x, &w) in integ.nodes.iter().zip(&integ.weights) {
            let mass = w * f0.eval(x);
            if mass <= 0.0 {
                continue;
            }
            let u = pair.log_lr(x)?;
            if u == f64::NEG_INFINITY {
                // f1 vanishes here: the posterior saturates below any grid.
                below_all += mass;
                continue;
            }
            let s = u / h;
            let base = s.floor();
            let frac = s - base;
            entries.push((base as i64, mass * (1.0 - frac)));
            entries.push((base as i64 + 1, mass * frac));
        }

        let k_lo = entries.iter().map(|&(k, _)| k).min().unwrap_or(0);
        let k_hi = entries.iter().map(|&(k, _)| k).max().unwrap_or(0);
        let mut bins = vec![0.0; (k_hi - k_lo + 1) as usize];
        for (k, mass) in entries {
            bins[(k - k_lo) as usize] += mass;
        }

        // Tail masses per row from kernel prefix sums: offsets below
        // -t fall off the low end, offsets above n-1-t off the high end.
        let mut prefix = Vec::with_capacity(bins.len() + 1);
        prefix.push(0.0);
        for &b in &bins {
            prefix.push(prefix.last().expect("nonempty prefix") + b);
        }
        let total = *prefix.last().expect("nonempty prefix");
        let clamp_idx = |k: i64| -> usize { (k - k_lo).clamp(0, bins.len() as i64) as usize };
        let lo_mass: Vec<f64> = (0..n)
            .map(|t| below_all + prefix[clamp_idx(-(t as i64))])
            .collect();
        let hi_mass: Vec<f64> = (0..n)
            .map(|t| total - prefix[clamp_idx((n - 1 - t) as i64 + 1)])
            .collect();

        Ok(RefineShared {
            c: params.c,
            n,
            lam_exp: (0..n).map(|t| loglr.point(t).exp()).collect(),
            lam_min1: (0..n).map(|t| loglr.point(t).exp().min(1.0)).collect(),
            bins,
            k_lo,
            lo_mass,
            hi_mass,
        })
    }

    /// `out[t] = E[W(lambda_t + logLR(X)) ; X ~ f0]` with off-grid steps
    /// clamped to the boundary entries of `w`.
    fn convolve(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n as i64;
        let nb = self.bins.len() as i64;
        let (w_first, w_last) = (w[0], w[self.n - 1]);
        for (t, slot) in out.iter_mut().enumerate() {
            let mut acc = self.lo_mass[t] * w_first + self.hi_mass[t] * w_last;
            let idx_lo = (-(t as i64) - self.k_lo).clamp(0, nb) as usize;
            let idx_hi = ((n - 1 - t as i64) - self.k_lo + 1).clamp(0, nb) as usize;
            if idx_hi > idx_lo {
                let v_start = (t as i64 + self.k_lo + idx_lo as i64) as usize;
                let len = idx_hi - idx_lo;
                let bins = &self.bins[idx_lo..idx_hi];
                let vals = &w[v_start..v_start + len];
                let dot: f64 = bins.iter().zip(vals).map(|(b, v)| b * v).sum();
                acc += dot;
            }
            *slot = acc;
        }
    }
}

struct OriginTables {
    values: Vec<f64>,
    continuation: Vec<f64>,
    g: f64,
    iterations: u64,
    residual: f64,
    max_increase: f64,
}

/// Value iteration for a single origin, in likelihood-weighted form.
fn solve_origin(
    p11: f64,
    pmix: f64,
    shared: &RefineShared,
    settings: &SolverSettings,
) -> Result<OriginTables, DpError> {
    let n = shared.n;
    let q = p11 + 0.5 * pmix;
    let p00 = (1.0 - p11 - pmix).max(0.0);
    let one_minus_q = 0.5 * pmix + p00;

    let mut mstop = vec![0.0; n];
    let mut inv_m = vec![0.0; n];
    let mut m = vec![0.0; n];
    for t in 0..n {
        mstop[t] = p00 + 0.5 * pmix * shared.lam_min1[t];
        m[t] = q * shared.lam_exp[t] + one_minus_q;
        inv_m[t] = 1.0 / m[t];
    }

    let mut w = mstop.clone();
    let mut cont = vec![0.0; n];
    let mut iterations = 0u64;
    let mut max_increase = 0.0f64;
    loop {
        iterations += 1;
        shared.convolve(&w, &mut cont);
        let mut residual = 0.0f64;
        for t in 0..n {
            let next = mstop[t].min(shared.c * m[t] + cont[t]);
            let delta = (next - w[t]) * inv_m[t];
            residual = residual.max(delta.abs());
            max_increase = max_increase.max(delta);
            w[t] = next;
        }
        if residual <= settings.tol {
            break;
        }
        if iterations >= settings.max_iter {
            return Err(DpError::NoConvergence {
                residual,
                tol: settings.tol,
                iterations,
            });
        }
    }

    // One more operator application, assembled directly in normalized
    // space so the stored tables satisfy V = min(stop, c + continuation)
    // exactly as stored.
    shared.convolve(&w, &mut cont);
    let mut values = vec![0.0; n];
    let mut continuation = vec![0.0; n];
    let mut residual = 0.0f64;
    for t in 0..n {
        let next = mstop[t].min(shared.c * m[t] + cont[t]);
        let delta = (next - w[t]) * inv_m[t];
        residual = residual.max(delta.abs());
        max_increase = max_increase.max(delta);
        continuation[t] = cont[t] * inv_m[t];
        let stop = (mstop[t] * inv_m[t]).clamp(0.0, 1.0);
        values[t] = stop.min(shared.c + continuation[t]);
    }

    let center = (n - 1) / 2;
    Ok(OriginTables {
        g: values[center],
        values,
        continuation,
        iterations,
        residual,
        max_increase,
    })
}

/// Solve the refinement stopping problem at every grid origin.
///
/// Returns the entry-cost surface `g` together with the per-origin value
/// and continuation tables. Iteration starts from the stopping cost, so the
/// per-sweep values are non-increasing up to roundoff; the largest observed
/// increase lands in the surface metadata.
pub fn solve_refinement(
    params: &ModelParams,
    settings: &SolverSettings,
) -> Result<RefinementSolution, DpError> {
    settings.validate()?;
    params.validate()?;
    let pair: &DensityPair = &params.density_pair;
    let integ =
        Integrator::for_densities(&settings.quadrature(), &[&pair.f0(), &pair.f1()])?;
    let loglr = LogLrGrid { bound: settings.loglr_bound, n: settings.loglr_points };
    let shared = RefineShared::build(params, &integ, &loglr)?;
    let grid = GridSpec { m: settings.grid_m };

    let origins: Vec<(usize, usize)> = grid.iter_nodes().map(|(_, i, j)| (i, j)).collect();
    let results: Vec<OriginTables> = origins
        .par_iter()
        .map(|&(i, j)| {
            let (p11, pmix) = grid.point(i, j);
            solve_origin(p11, pmix, &shared, settings)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut g_values = Vec::with_capacity(results.len());
    let mut values = Vec::with_capacity(results.len());
    let mut continuation = Vec::with_capacity(results.len());
    let mut meta = SurfaceMeta {
        params_hash: crate::io::params_hash(params, settings),
        ..SurfaceMeta::default()
    };
    for r in results {
        g_values.push(r.g);
        values.push(r.values);
        continuation.push(r.continuation);
        meta.iterations = meta.iterations.max(r.iterations);
        meta.residual = meta.residual.max(r.residual);
        meta.max_increase = meta.max_increase.max(r.max_increase);
    }

    Ok(RefinementSolution {
        g: ValueSurface { grid, values: g_values, meta },
        loglr,
        values,
        continuation,
    })
}
