//! Executable decision rules extracted from the solved surfaces.
//!
//! Region extraction compares the stored surfaces at the grid nodes: the
//! commit region `R_tau` is where stopping the scan is optimal (`g` ties or
//! beats the scanning value) and the switch region `R_phi` is where, given
//! the scan continues, a fresh pair beats the pair in hand (`A_c` exceeds
//! `A_s`). Ties break toward stopping, and toward continuing over
//! switching, matching the value iteration's argmin convention.
//!
//! Off the grid the same inequalities are re-evaluated on the interpolated
//! surfaces rather than by interpolating the boolean masks, so decisions
//! remain consistent with the surfaces everywhere and reproduce the masks
//! exactly at the nodes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{scan_prior, RefineRay, ScanBelief};
use crate::dp::{
    BaselineSolution, DpError, GridSpec, RefinementSolution, ScanningSolution, ValueSurface,
};
use crate::model::{mixed_densities, MixedDensities, ModelParams};

/// Equality tolerance for the stop/switch tie-breaks.
pub(crate) const EQ_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("stop region is empty; the solve is inconsistent")]
    EmptyStopRegion,
    #[error("surfaces disagree on grid resolution: {0} vs {1}")]
    GridMismatch(usize, usize),
    #[error("calibration target error {target} is below the reachable floor {floor} at this trial budget")]
    CalibrationTargetUnreachable { target: f64, floor: f64 },
    #[error("baseline calibration needs an informative observation model")]
    UninformativeModel,
    #[error("calibration simulation failed: {0}")]
    CalibrationSimulation(String),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Scanning-stage action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanAction {
    /// Commit to the current pair and enter refinement.
    Stop,
    /// Take one more mixed observation of the current pair.
    Continue,
    /// Discard the pair and observe a fresh one.
    Switch,
}

/// Refinement-stage action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefineAction {
    /// Declare now.
    Stop,
    /// Take one more observation of sequence `a`.
    Continue,
}

/// Which member of the committed pair is declared signal-bearing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Declaration {
    SequenceA,
    SequenceB,
}

/// Node masks of the commit region `R_tau` and switch region `R_phi`,
/// together with the switch scalar and the equality tolerance that defined
/// them. The same inequalities, re-evaluated on the interpolated surfaces
/// with the same tolerance, extend the masks to off-node beliefs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRegions {
    pub grid: GridSpec,
    pub stop_mask: Vec<bool>,
    pub switch_mask: Vec<bool>,
    /// Expected value after a switch; the reference the continue branch is
    /// compared against.
    pub a_s: f64,
    /// Slack treated as equality: a base roundoff allowance plus the
    /// solver's interpolation tolerance. Surfaces that interpolation alone
    /// separates must not separate the decisions.
    pub eq_tol: f64,
}

impl PolicyRegions {
    pub fn stop_count(&self) -> usize {
        self.stop_mask.iter().filter(|&&b| b).count()
    }

    pub fn switch_count(&self) -> usize {
        self.switch_mask.iter().filter(|&&b| b).count()
    }
}

/// Extract the decision regions from a solved pair of surfaces.
/// `interp_tol` is the interpolation-error allowance folded into the
/// equality test (`SolverSettings::interp_tol` for the solve that produced
/// the surfaces).
pub fn extract_regions(
    g: &ValueSurface,
    scanning: &ScanningSolution,
    interp_tol: f64,
) -> Result<PolicyRegions, PolicyError> {
    if g.grid.m != scanning.vs.grid.m {
        return Err(PolicyError::GridMismatch(g.grid.m, scanning.vs.grid.m));
    }
    let eq_tol = EQ_TOL + interp_tol.max(0.0);
    let n = g.values.len();
    let mut stop_mask = vec![false; n];
    let mut switch_mask = vec![false; n];
    for k in 0..n {
        stop_mask[k] = g.values[k] <= scanning.vs.values[k] + eq_tol;
        switch_mask[k] = !stop_mask[k] && scanning.ac.values[k] > scanning.a_s + eq_tol;
    }
    if !stop_mask.iter().any(|&b| b) {
        return Err(PolicyError::EmptyStopRegion);
    }
    Ok(PolicyRegions { grid: g.grid, stop_mask, switch_mask, a_s: scanning.a_s, eq_tol })
}

/// The full two-stage policy: solved surfaces plus everything needed to
/// act on beliefs during simulation.
#[derive(Debug, Clone)]
pub struct MixedPolicy {
    pub params: ModelParams,
    pub prior: ScanBelief,
    pub mixed: MixedDensities,
    pub refinement: RefinementSolution,
    pub scanning: ScanningSolution,
    pub regions: PolicyRegions,
}

impl MixedPolicy {
    pub fn new(
        params: ModelParams,
        refinement: RefinementSolution,
        scanning: ScanningSolution,
        regions: PolicyRegions,
    ) -> Result<Self, PolicyError> {
        if refinement.g.grid.m != scanning.vs.grid.m {
            return Err(PolicyError::GridMismatch(refinement.g.grid.m, scanning.vs.grid.m));
        }
        if regions.grid.m != scanning.vs.grid.m {
            return Err(PolicyError::GridMismatch(regions.grid.m, scanning.vs.grid.m));
        }
        let prior = scan_prior(&params);
        let mixed = mixed_densities(&params.density_pair)?;
        Ok(MixedPolicy { params, prior, mixed, refinement, scanning, regions })
    }

    /// Hash of the parameters and solver settings behind these surfaces.
    pub fn params_hash(&self) -> &str {
        &self.scanning.vs.meta.params_hash
    }

    /// Scanning decision at an arbitrary belief: the region inequalities
    /// re-evaluated on the interpolated surfaces, with the regions'
    /// equality tolerance. Stop dominates switch.
    pub fn scan_decide(&self, belief: &ScanBelief) -> ScanAction {
        let (p11, pmix) = (belief.p11(), belief.pmix());
        let eq_tol = self.regions.eq_tol;
        let g = self.refinement.g.eval(p11, pmix);
        let vs = self.scanning.vs.eval(p11, pmix);
        if g <= vs + eq_tol {
            return ScanAction::Stop;
        }
        let ac = self.scanning.ac.eval(p11, pmix);
        if ac > self.regions.a_s + eq_tol {
            ScanAction::Switch
        } else {
            ScanAction::Continue
        }
    }

    /// Refinement decision on the ray: compare the exact stopping cost of
    /// the embedded belief with the interpolated continuation cost.
    pub fn refine_decide(&self, ray: &RefineRay) -> RefineAction {
        let belief = ray.belief();
        let stop_cost = 1.0 - belief.pi_a().max(belief.pi_b());
        let cont = self.refinement.continuation_at(
            ray.origin.p11(),
            ray.origin.pmix(),
            ray.log_lr,
        );
        if stop_cost <= self.params.c + cont + EQ_TOL {
            RefineAction::Stop
        } else {
            RefineAction::Continue
        }
    }

    /// Terminal declaration: the member with the larger posterior marginal,
    /// ties to `b` (its evidence cost nothing extra).
    pub fn final_decision(&self, ray: &RefineRay) -> Declaration {
        let belief = ray.belief();
        if belief.pi_a() > belief.pi_b() {
            Declaration::SequenceA
        } else {
            Declaration::SequenceB
        }
    }
}

/// Baseline action over the scalar belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineAction {
    Stop,
    Continue,
    Switch,
}

/// Threshold policy for the single-sequence baseline: stop at or above
/// `stop_threshold`, abandon the sequence at or below `switch_threshold`,
/// continue in between. Stopping is checked first, so a degenerate policy
/// with both thresholds at the prior stops immediately. Switching consumes
/// an observation (the first look at the fresh sequence), so a belief
/// sitting exactly on the switch threshold cannot loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePolicy {
    pub params: ModelParams,
    pub stop_threshold: f64,
    pub switch_threshold: f64,
    pub params_hash: String,
}

impl BaselinePolicy {
    /// Thresholds read off a solved baseline problem.
    pub fn from_solution(params: &ModelParams, solution: &BaselineSolution) -> Self {
        BaselinePolicy {
            params: params.clone(),
            stop_threshold: solution.stop_threshold,
            switch_threshold: solution.switch_threshold,
            params_hash: solution.meta.params_hash.clone(),
        }
    }

    pub fn decide(&self, pi_tilde: f64) -> BaselineAction {
        if pi_tilde >= self.stop_threshold {
            BaselineAction::Stop
        } else if pi_tilde <= self.switch_threshold {
            BaselineAction::Switch
        } else {
            BaselineAction::Continue
        }
    }
}

/// One probe of the calibration search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub stop_threshold: f64,
    pub error_rate: f64,
    pub se_error: f64,
}

/// Outcome of matching the baseline's error rate to a target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub target_error: f64,
    pub achieved_error: f64,
    pub se_error: f64,
    pub stop_threshold: f64,
    pub trials_per_step: u64,
    pub steps: Vec<CalibrationStep>,
}

/// Bisection budget; each step costs one Monte-Carlo batch.
const CALIBRATION_MAX_STEPS: usize = 25;

/// Find the baseline stopping threshold whose empirical error rate matches
/// `target_error`, by bisection over `(pi, 1)` with `trials` Monte-Carlo
/// trials per probe. The switch threshold stays at the prior: a sequence
/// whose posterior drops below a fresh sequence's prior is worth less than
/// a fresh sequence.
///
/// Stops when the estimate is within twice its standard error of the
/// target or the step budget runs out, whichever comes first; reports an
/// error if even the most patient bracket endpoint cannot reach the target.
pub fn calibrate_baseline(
    params: &ModelParams,
    target_error: f64,
    trials: u64,
    base_seed: u64,
) -> Result<(BaselinePolicy, CalibrationReport), PolicyError> {
    if params.density_pair.is_uninformative() {
        return Err(PolicyError::UninformativeModel);
    }
    let make_policy = |threshold: f64| BaselinePolicy {
        params: params.clone(),
        stop_threshold: threshold,
        switch_threshold: params.pi,
        params_hash: String::new(),
    };
    let probe = |threshold: f64, step: usize| -> Result<(f64, f64), PolicyError> {
        let policy = make_policy(threshold);
        let seed = base_seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(step as u64 + 1));
        let summary = crate::sim::run_baseline_batch(&policy, trials, seed, None)
            .map_err(|e| PolicyError::CalibrationSimulation(e.to_string()))?;
        Ok((summary.error_rate, summary.se_error))
    };

    let mut lo = params.pi + 1e-9;
    let mut hi = 1.0 - 1e-9;
    let mut steps = Vec::new();

    // The most patient threshold bounds how low the error can go.
    let (floor_err, floor_se) = probe(hi, 0)?;
    steps.push(CalibrationStep { stop_threshold: hi, error_rate: floor_err, se_error: floor_se });
    if floor_err - 2.0 * floor_se > target_error {
        return Err(PolicyError::CalibrationTargetUnreachable {
            target: target_error,
            floor: floor_err,
        });
    }

    // Standard error the target itself would have at this trial count,
    // guarding the stop rule when a probe sees zero errors.
    let target_se = (target_error.max(1e-12) * (1.0 - target_error) / trials as f64).sqrt();
    let mut best = (hi, floor_err, floor_se);
    for step in 1..=CALIBRATION_MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        let (err, se) = probe(mid, step)?;
        steps.push(CalibrationStep { stop_threshold: mid, error_rate: err, se_error: se });
        if (err - target_error).abs() < (best.1 - target_error).abs() {
            best = (mid, err, se);
        }
        if (err - target_error).abs() <= 2.0 * se.max(target_se) {
            break;
        }
        if err > target_error {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let (threshold, achieved, se) = best;
    let mut policy = make_policy(threshold);
    policy.params_hash = format!("calibrated-{}", threshold);
    let report = CalibrationReport {
        target_error,
        achieved_error: achieved,
        se_error: se,
        stop_threshold: threshold,
        trials_per_step: trials,
        steps,
    };
    Ok((policy, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{SurfaceMeta, ValueSurface};
    use crate::model::DensityPair;

    fn params() -> ModelParams {
        ModelParams::new(0.05, 0.01, DensityPair::gaussian_snr_db(1.0, 3.0).unwrap(), 7).unwrap()
    }

    /// Hand-built surfaces with a known stop/switch pattern.
    fn synthetic() -> (ValueSurface, ScanningSolution) {
        let grid = GridSpec { m: 20 };
        let n = grid.node_count();
        let meta = SurfaceMeta::default();
        let g_values: Vec<f64> = (0..n).map(|k| 0.2 + 0.5 * (k as f64 / n as f64)).collect();
        let a_s = 0.4;
        let mut vs = vec![0.0; n];
        let mut ac = vec![0.0; n];
        for k in 0..n {
            match k % 4 {
                // Stop: scanning cannot beat g.
                0 => {
                    vs[k] = g_values[k];
                    ac[k] = 0.9;
                }
                // Switch: continue branch worse than the switch scalar.
                1 => {
                    vs[k] = g_values[k] - 0.05;
                    ac[k] = a_s + 0.2;
                }
                // Continue: continue branch at least as good.
                _ => {
                    vs[k] = g_values[k] - 0.05;
                    ac[k] = a_s - 0.1;
                }
            }
        }
        let g = ValueSurface { grid, values: g_values, meta: meta.clone() };
        let scanning = ScanningSolution {
            vs: ValueSurface { grid, values: vs, meta: meta.clone() },
            ac: ValueSurface { grid, values: ac, meta },
            a_s,
        };
        (g, scanning)
    }

    #[test]
    fn regions_follow_the_stored_inequalities() {
        let (g, scanning) = synthetic();
        let regions = extract_regions(&g, &scanning, 0.0).unwrap();
        for k in 0..g.values.len() {
            match k % 4 {
                0 => {
                    assert!(regions.stop_mask[k], "node {k} should stop");
                    assert!(!regions.switch_mask[k]);
                }
                1 => {
                    assert!(!regions.stop_mask[k]);
                    assert!(regions.switch_mask[k], "node {k} should switch");
                }
                _ => {
                    assert!(!regions.stop_mask[k]);
                    assert!(!regions.switch_mask[k], "node {k} should continue");
                }
            }
        }
    }

    #[test]
    fn empty_stop_region_is_rejected() {
        let (g, mut scanning) = synthetic();
        for (k, v) in scanning.vs.values.iter_mut().enumerate() {
            *v = g.values[k] - 0.05;
        }
        assert!(matches!(extract_regions(&g, &scanning, 0.0), Err(PolicyError::EmptyStopRegion)));
    }

    #[test]
    fn exact_ties_stop_and_prefer_continue_over_switch() {
        let (g, mut scanning) = synthetic();
        // Make node 2 an exact stop tie and node 3 an exact switch tie.
        scanning.vs.values[2] = g.values[2];
        scanning.ac.values[2] = scanning.a_s + 1.0;
        scanning.ac.values[3] = scanning.a_s;
        let regions = extract_regions(&g, &scanning, 0.0).unwrap();
        assert!(regions.stop_mask[2], "stop wins its tie");
        assert!(!regions.switch_mask[3], "continue wins the switch tie");
    }

    #[test]
    fn baseline_policy_applies_thresholds() {
        let policy = BaselinePolicy {
            params: params(),
            stop_threshold: 0.8,
            switch_threshold: 0.05,
            params_hash: String::new(),
        };
        assert_eq!(policy.decide(0.9), BaselineAction::Stop);
        assert_eq!(policy.decide(0.8), BaselineAction::Stop);
        assert_eq!(policy.decide(0.5), BaselineAction::Continue);
        assert_eq!(policy.decide(0.051), BaselineAction::Continue);
        assert_eq!(policy.decide(0.05), BaselineAction::Switch);
        assert_eq!(policy.decide(0.049), BaselineAction::Switch);
    }

    #[test]
    fn calibration_rejects_uninformative_models() {
        let params =
            ModelParams::new(0.05, 0.01, DensityPair::gaussian(1.0, 0.0).unwrap(), 7).unwrap();
        assert!(matches!(
            calibrate_baseline(&params, 0.01, 100, 1),
            Err(PolicyError::UninformativeModel)
        ));
    }
}
