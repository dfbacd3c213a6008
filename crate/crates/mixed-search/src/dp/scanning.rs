//! Stage-one value `V_s`: scan the current pair, switch it out, or commit.
//!
//! At belief `(p11, pmix)` the scanner chooses among stopping the scan
//! (entering refinement at cost `g`), taking one more mixed observation of
//! the current pair (branch value `A_c`), or discarding the pair for a
//! fresh one and observing that instead (branch value `A_s`). Because a
//! switch restarts from the prior, `A_s` is one scalar shared by the whole
//! surface: the continue branch evaluated at the prior belief.
//!
//! Value iteration starts from `g` and applies
//! `V <- min(g, c + min(A_c, A_s))`, recomputing `A_s` from the current
//! surface once per sweep. Expectations against the mixed observation reuse
//! a per-node cache of quadrature weights and interpolation stencils, since
//! neither depends on the evolving surface.

use rayon::prelude::*;

use crate::belief::{scan_prior, scan_update_likelihoods, ScanBelief};
use crate::model::{mixed_densities, MixedDensities, ModelParams};

use super::quad::Integrator;
use super::refinement::RefinementSolution;
use super::surface::{GridSpec, SurfaceMeta, ValueSurface};
use super::{DpError, SolverSettings};

/// Mass the quadrature must capture when evaluating a branch expectation.
const BRANCH_MASS_TOL: f64 = 1e-4;

/// The two ways to keep scanning: observe the pair in hand again, or swap
/// in a fresh pair and observe that.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextAction {
    Continue,
    Switch,
}

/// Solved stage-one problem: the value surface, the continue branch, and
/// the switch scalar, stored so `V_s = min(g, c + min(A_c, A_s))` holds
/// entry by entry.
#[derive(Debug, Clone)]
pub struct ScanningSolution {
    pub vs: ValueSurface,
    pub ac: ValueSurface,
    pub a_s: f64,
}

/// Quadrature expectation of `surface` at the belief reached by one more
/// observation. `Continue` updates from `belief`, `Switch` from `prior`;
/// both consume an observation. Reports an error if the rule captures less
/// than `1 - 1e-4` of the predictive mass, a sign its range is too narrow
/// for the belief in question.
pub fn expected_next_value(
    surface: &ValueSurface,
    belief: &ScanBelief,
    action: NextAction,
    prior: &ScanBelief,
    mixed: &MixedDensities,
    integ: &Integrator,
) -> Result<f64, DpError> {
    let base = match action {
        NextAction::Continue => belief,
        NextAction::Switch => prior,
    };
    let mut acc = 0.0;
    let mut mass = 0.0;
    for (&z, &w) in integ.nodes.iter().zip(&integ.weights) {
        let (l00, lm, l11) = mixed.likelihoods(z);
        let fz = base.p00() * l00 + base.pmix() * lm + base.p11() * l11;
        if w * fz <= 0.0 {
            continue;
        }
        mass += w * fz;
        let next = scan_update_likelihoods(base, l00, lm, l11)?;
        acc += w * fz * surface.eval(next.p11(), next.pmix());
    }
    if mass < 1.0 - BRANCH_MASS_TOL {
        return Err(DpError::QuadratureMass { mass });
    }
    Ok(acc)
}

/// Precomputed quadrature term for one (node, quadrature point) pair:
/// predictive weight and the interpolation stencil of the posterior.
/// These depend only on geometry, so they are built once and reused by
/// every sweep.
struct BranchCache {
    terms: usize,
    wfz: Vec<f64>,
    idx: [Vec<u32>; 3],
    w: [Vec<f64>; 3],
}

impl BranchCache {
    fn empty(terms: usize, entries: usize) -> Self {
        BranchCache {
            terms,
            wfz: vec![0.0; entries],
            idx: [vec![0; entries], vec![0; entries], vec![0; entries]],
            w: [vec![0.0; entries], vec![0.0; entries], vec![0.0; entries]],
        }
    }

    #[allow(clippy::too_many_arguments)] // one call site; the likelihood triple reads best flat
    fn fill_entry(
        &mut self,
        e: usize,
        grid: &GridSpec,
        base: &ScanBelief,
        w: f64,
        l00: f64,
        lm: f64,
        l11: f64,
    ) {
        let fz = base.p00() * l00 + base.pmix() * lm + base.p11() * l11;
        if w * fz <= 0.0 {
            return;
        }
        let Ok(next) = scan_update_likelihoods(base, l00, lm, l11) else {
            return;
        };
        let (idx, wb) = grid.locate(next.p11(), next.pmix());
        self.wfz[e] = w * fz;
        for k in 0..3 {
            self.idx[k][e] = idx[k] as u32;
            self.w[k][e] = wb[k];
        }
    }

    /// Expectation of the surface `values` for the node owning rows
    /// `[node * terms, (node + 1) * terms)`.
    fn branch(&self, values: &[f64], node: usize) -> f64 {
        let lo = node * self.terms;
        let hi = lo + self.terms;
        let mut acc = 0.0;
        for e in lo..hi {
            let interp = self.w[0][e] * values[self.idx[0][e] as usize]
                + self.w[1][e] * values[self.idx[1][e] as usize]
                + self.w[2][e] * values[self.idx[2][e] as usize];
            acc += self.wfz[e] * interp;
        }
        acc
    }
}

/// Solve the scanning stopping problem on top of a refinement solution.
pub fn solve_scanning(
    params: &ModelParams,
    settings: &SolverSettings,
    refinement: &RefinementSolution,
) -> Result<ScanningSolution, DpError> {
    settings.validate()?;
    params.validate()?;
    let grid = GridSpec { m: settings.grid_m };
    if refinement.g.grid.m != grid.m {
        return Err(DpError::GridMismatch { expected: grid.m, got: refinement.g.grid.m });
    }

    let mixed = mixed_densities(&params.density_pair)?;
    let integ = Integrator::for_densities(
        &settings.quadrature(),
        &[&mixed.f00, &mixed.fm, &mixed.f11],
    )?;
    let prior = scan_prior(params);
    let n_nodes = grid.node_count();
    let terms = integ.len();

    // Likelihood triples per quadrature point, shared by every node.
    let lik: Vec<(f64, f64, f64, f64)> = integ
        .nodes
        .iter()
        .zip(&integ.weights)
        .map(|(&z, &w)| {
            let (l00, lm, l11) = mixed.likelihoods(z);
            (w, l00, lm, l11)
        })
        .collect();

    let beliefs: Vec<ScanBelief> = grid
        .iter_nodes()
        .map(|(_, i, j)| {
            let (p11, pmix) = grid.point(i, j);
            ScanBelief::clamped(p11, pmix)
        })
        .collect();

    let mut cache = BranchCache::empty(terms, n_nodes * terms);
    {
        // Fill per node in parallel by carving the flat arrays into
        // disjoint per-node chunks.
        let BranchCache { terms, wfz, idx, w } = &mut cache;
        let [i0, i1, i2] = idx;
        let [w0, w1, w2] = w;
        wfz.par_chunks_mut(*terms)
            .zip(i0.par_chunks_mut(*terms))
            .zip(i1.par_chunks_mut(*terms))
            .zip(i2.par_chunks_mut(*terms))
            .zip(w0.par_chunks_mut(*terms))
            .zip(w1.par_chunks_mut(*terms))
            .zip(w2.par_chunks_mut(*terms))
            .enumerate()
            .for_each(|(node, ((((((cw, ci0), ci1), ci2), cw0), cw1), cw2))| {
                let base = &beliefs[node];
                for (e, &(w, l00, lm, l11)) in lik.iter().enumerate() {
                    let fz = base.p00() * l00 + base.pmix() * lm + base.p11() * l11;
                    if w * fz <= 0.0 {
                        continue;
                    }
                    let Ok(next) = scan_update_likelihoods(base, l00, lm, l11) else {
                        continue;
                    };
                    let (idx, wb) = grid.locate(next.p11(), next.pmix());
                    cw[e] = w * fz;
                    ci0[e] = idx[0] as u32;
                    ci1[e] = idx[1] as u32;
                    ci2[e] = idx[2] as u32;
                    cw0[e] = wb[0];
                    cw1[e] = wb[1];
                    cw2[e] = wb[2];
                }
            });
    }

    // The switch branch is the continue branch at the prior belief.
    let mut prior_cache = BranchCache::empty(terms, terms);
    for (e, &(w, l00, lm, l11)) in lik.iter().enumerate() {
        prior_cache.fill_entry(e, &grid, &prior, w, l00, lm, l11);
    }

    let g = &refinement.g.values;
    let c = params.c;
    let mut v = g.clone();
    let mut iterations = 0u64;
    let mut max_increase = 0.0f64;
    let a_s_final;
    loop {
        iterations += 1;
        let a_s = prior_cache.branch(&v, 0);
        let new_v: Vec<f64> = (0..n_nodes)
            .into_par_iter()
            .map(|k| g[k].min(c + cache.branch(&v, k).min(a_s)))
            .collect();
        let residual = v
            .par_iter()
            .zip(&new_v)
            .map(|(&old, &new)| (new - old).abs())
            .reduce(|| 0.0, f64::max);
        let increase = v
            .par_iter()
            .zip(&new_v)
            .map(|(&old, &new)| new - old)
            .reduce(|| 0.0, f64::max);
        max_increase = max_increase.max(increase);
        v = new_v;
        if residual <= settings.tol {
            a_s_final = prior_cache.branch(&v, 0);
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

    // Final assembly: recompute both branches from the converged surface
    // and apply the operator once more, so the stored triple satisfies
    // V_s = min(g, c + min(A_c, A_s)) exactly as stored.
    let ac_final: Vec<f64> = (0..n_nodes)
        .into_par_iter()
        .map(|k| cache.branch(&v, k))
        .collect();
    let mut residual = 0.0f64;
    let vs_final: Vec<f64> = (0..n_nodes)
        .map(|k| {
            let next = g[k].min(c + ac_final[k].min(a_s_final));
            residual = residual.max((next - v[k]).abs());
            max_increase = max_increase.max(next - v[k]);
            next
        })
        .collect();

    let meta = SurfaceMeta {
        params_hash: crate::io::params_hash(params, settings),
        iterations,
        residual,
        max_increase,
    };
    Ok(ScanningSolution {
        vs: ValueSurface { grid, values: vs_final, meta: meta.clone() },
        ac: ValueSurface { grid, values: ac_final, meta },
        a_s: a_s_final,
    })
}
