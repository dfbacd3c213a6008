//! Exact finite-horizon truncations of the value recursions.
//!
//! Each function applies its Bellman recursion literally, by direct
//! recursion over the quadrature points, with no grids and no
//! interpolation. Truncating at a small horizon makes the values exactly
//! computable, which pins the solvers' operators against independent
//! enumeration in tests. For discrete observation models the quadrature is
//! an exact sum, so these values carry no numerical error beyond roundoff.

use crate::belief::{refine_update_values, scan_update_likelihoods, RefineBelief, ScanBelief};
use crate::model::{DensityPair, MixedDensities};

use super::quad::Integrator;
use super::DpError;

/// Refinement value truncated at `horizon` remaining observations: stop at
/// cost `1 - max(pi_a, pi_b)` or pay `c` for one more sample of sequence
/// `a` drawn from its marginal predictive density.
pub fn refinement_value_fh(
    c: f64,
    pair: &DensityPair,
    integ: &Integrator,
    belief: &RefineBelief,
    horizon: u32,
) -> Result<f64, DpError> {
    let f0 = pair.f0();
    let f1 = pair.f1();
    let points: Vec<(f64, f64, f64)> = integ
        .nodes
        .iter()
        .zip(&integ.weights)
        .map(|(&x, &w)| (w, f0.eval(x), f1.eval(x)))
        .collect();
    refine_fh_inner(c, &points, belief, horizon)
}

fn refine_fh_inner(
    c: f64,
    points: &[(f64, f64, f64)],
    belief: &RefineBelief,
    horizon: u32,
) -> Result<f64, DpError> {
    let stop = 1.0 - belief.pi_a().max(belief.pi_b());
    if horizon == 0 {
        return Ok(stop);
    }
    let mut cont = 0.0;
    for &(w, v0, v1) in points {
        let pred = belief.pi_a() * v1 + (1.0 - belief.pi_a()) * v0;
        if w * pred <= 0.0 {
            continue;
        }
        let next = refine_update_values(belief, v1, v0)?;
        cont += w * pred * refine_fh_inner(c, points, &next, horizon - 1)?;
    }
    Ok(stop.min(c + cont))
}

/// Scanning value truncated at `horizon` remaining observations.
///
/// `stop_cost` prices committing to refinement at a given scan belief;
/// injecting it lets callers pair this truncation with a matching
/// truncation of the refinement stage. The switch branch depends only on
/// the depth, not the current belief, so it is memoized per level.
pub fn scanning_value_fh<F>(
    c: f64,
    mixed: &MixedDensities,
    integ: &Integrator,
    prior: &ScanBelief,
    belief: &ScanBelief,
    horizon: u32,
    stop_cost: &F,
) -> Result<f64, DpError>
where
    F: Fn(&ScanBelief) -> Result<f64, DpError>,
{
    let points: Vec<(f64, f64, f64, f64)> = integ
        .nodes
        .iter()
        .zip(&integ.weights)
        .map(|(&z, &w)| {
            let (l00, lm, l11) = mixed.likelihoods(z);
            (w, l00, lm, l11)
        })
        .collect();
    let mut switch_memo: Vec<Option<f64>> = vec![None; horizon as usize + 1];
    scan_fh_inner(c, &points, prior, belief, horizon, stop_cost, &mut switch_memo)
}

fn scan_fh_inner<F>(
    c: f64,
    points: &[(f64, f64, f64, f64)],
    prior: &ScanBelief,
    belief: &ScanBelief,
    horizon: u32,
    stop_cost: &F,
    switch_memo: &mut Vec<Option<f64>>,
) -> Result<f64, DpError>
where
    F: Fn(&ScanBelief) -> Result<f64, DpError>,
{
    let stop = stop_cost(belief)?;
    if horizon == 0 {
        return Ok(stop);
    }
    let cont = scan_fh_branch(c, points, prior, belief, horizon, stop_cost, switch_memo)?;
    if switch_memo[horizon as usize].is_none() {
        let sw = scan_fh_branch(c, points, prior, prior, horizon, stop_cost, switch_memo)?;
        switch_memo[horizon as usize] = Some(sw);
    }
    let switch = switch_memo[horizon as usize].expect("just filled");
    Ok(stop.min(c + cont.min(switch)))
}

/// Expected depth-`horizon - 1` value after one observation from `base`.
fn scan_fh_branch<F>(
    c: f64,
    points: &[(f64, f64, f64, f64)],
    prior: &ScanBelief,
    base: &ScanBelief,
    horizon: u32,
    stop_cost: &F,
    switch_memo: &mut Vec<Option<f64>>,
) -> Result<f64, DpError>
where
    F: Fn(&ScanBelief) -> Result<f64, DpError>,
{
    let mut acc = 0.0;
    for &(w, l00, lm, l11) in points {
        let fz = base.p00() * l00 + base.pmix() * lm + base.p11() * l11;
        if w * fz <= 0.0 {
            continue;
        }
        let next = scan_update_likelihoods(base, l00, lm, l11)?;
        acc += w
            * fz
            * scan_fh_inner(c, points, prior, &next, horizon - 1, stop_cost, switch_memo)?;
    }
    Ok(acc)
}

/// Baseline value truncated at `horizon` remaining observations.
pub fn baseline_value_fh(
    c: f64,
    pair: &DensityPair,
    integ: &Integrator,
    prior_pi: f64,
    pi_tilde: f64,
    horizon: u32,
) -> Result<f64, DpError> {
    let f0 = pair.f0();
    let f1 = pair.f1();
    let points: Vec<(f64, f64, f64)> = integ
        .nodes
        .iter()
        .zip(&integ.weights)
        .map(|(&x, &w)| (w, f0.eval(x), f1.eval(x)))
        .collect();
    let mut switch_memo: Vec<Option<f64>> = vec![None; horizon as usize + 1];
    baseline_fh_inner(c, &points, prior_pi, pi_tilde, horizon, &mut switch_memo)
}

fn baseline_fh_inner(
    c: f64,
    points: &[(f64, f64, f64)],
    prior_pi: f64,
    pi_tilde: f64,
    horizon: u32,
    switch_memo: &mut Vec<Option<f64>>,
) -> Result<f64, DpError> {
    let stop = 1.0 - pi_tilde;
    if horizon == 0 {
        return Ok(stop);
    }
    let cont = baseline_fh_branch(c, points, prior_pi, pi_tilde, horizon, switch_memo)?;
    if switch_memo[horizon as usize].is_none() {
        let sw = baseline_fh_branch(c, points, prior_pi, prior_pi, horizon, switch_memo)?;
        switch_memo[horizon as usize] = Some(sw);
    }
    let switch = switch_memo[horizon as usize].expect("just filled");
    Ok(stop.min(c + cont.min(switch)))
}

fn baseline_fh_branch(
    c: f64,
    points: &[(f64, f64, f64)],
    prior_pi: f64,
    base: f64,
    horizon: u32,
    switch_memo: &mut Vec<Option<f64>>,
) -> Result<f64, DpError> {
    let mut acc = 0.0;
    for &(w, v0, v1) in points {
        let pred = base * v1 + (1.0 - base) * v0;
        if w * pred <= 0.0 {
            continue;
        }
        let next = (base * v1 / pred).clamp(0.0, 1.0);
        acc += w * pred * baseline_fh_inner(c, points, prior_pi, next, horizon - 1, switch_memo)?;
    }
    Ok(acc)
}
