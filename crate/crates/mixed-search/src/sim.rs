//! Monte-Carlo harness: ground-truth generation, trial loops for both
//! strategies, deterministic batch aggregation, the error-matched delay
//! comparison, and the SNR sweep.
//!
//! Determinism contract: a batch is fully determined by `(base_seed,
//! params, solver settings)`. Every trial owns a counter-derived RNG, the
//! trial results are collected in index order, and the statistics are
//! folded sequentially, so worker count cannot change a single bit of the
//! summary.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{scan_update, BeliefError, RefineRay};
use crate::dp::{solve_refinement, solve_scanning, DpError, SolverSettings};
use crate::model::{
    sample_observation, sample_pair_truth, DensityPair, Hypothesis, ModelError, ModelParams,
};
use crate::policy::{
    calibrate_baseline, extract_regions, BaselineAction, BaselinePolicy, CalibrationReport,
    Declaration, MixedPolicy, PolicyError, RefineAction, ScanAction,
};

/// Hard per-trial observation budget; exceeding it is a policy bug, not a
/// valid outcome.
pub const RUNAWAY_CAP: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("trial exceeded the runaway cap of {cap} observations")]
    RunawayTrial { cap: u64 },
    #[error("trial {trial} failed: {message}")]
    BatchTrial { trial: u64, message: String },
    #[error("batches need at least one trial")]
    EmptyBatch,
    #[error("SNR sweeps need a Gaussian density pair to rescale")]
    SweepNeedsGaussian,
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// One simulated search, both stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// Scanning-stage observations.
    pub tau1: u64,
    /// Refinement-stage observations (zero for the baseline).
    pub tau2: u64,
    /// Pairs (or sequences) abandoned along the way.
    pub n_switches: u64,
    /// True hypothesis of the declared sequence.
    pub declared_truth: Hypothesis,
    /// Whether the declared sequence truly carries the signal.
    pub correct: bool,
}

impl TrialRecord {
    pub fn delay(&self) -> u64 {
        self.tau1 + self.tau2
    }
}

/// Batch statistics with standard errors for every mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub n_trials: u64,
    pub mean_tau1: f64,
    pub se_tau1: f64,
    pub mean_tau2: f64,
    pub se_tau2: f64,
    pub mean_delay: f64,
    pub se_delay: f64,
    pub mean_switches: f64,
    pub error_rate: f64,
    pub se_error: f64,
    /// `c * mean_delay + error_rate`, the empirical search cost.
    pub mean_cost: f64,
    pub se_cost: f64,
    pub seed: u64,
    pub params_hash: String,
}

/// Mix a trial counter into the base seed (splitmix64 finalizer), giving
/// every trial an independent, platform-stable stream.
fn trial_seed(base_seed: u64, trial: u64) -> u64 {
    let mut z = base_seed.wrapping_add((trial + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Simulate one run of the two-stage policy.
///
/// The loop decides before it observes, so a policy that stops at the
/// prior records `tau1 = 0`. Switching draws a fresh pair of truths and
/// still consumes the observation that triggers the belief restart.
pub fn run_trial<R: Rng + ?Sized>(
    policy: &MixedPolicy,
    rng: &mut R,
) -> Result<TrialRecord, SimError> {
    let params = &policy.params;
    let mut truths = sample_pair_truth(params, rng);
    let mut belief = policy.prior;
    let mut tau1 = 0u64;
    let mut n_switches = 0u64;

    loop {
        match policy.scan_decide(&belief) {
            ScanAction::Stop => break,
            ScanAction::Continue => {
                let z = sample_observation(policy.mixed.for_truths(truths.0, truths.1), rng);
                belief = scan_update(&belief, z, false, &policy.prior, &policy.mixed)?;
                tau1 += 1;
            }
            ScanAction::Switch => {
                truths = sample_pair_truth(params, rng);
                let z = sample_observation(policy.mixed.for_truths(truths.0, truths.1), rng);
                belief = scan_update(&belief, z, true, &policy.prior, &policy.mixed)?;
                tau1 += 1;
                n_switches += 1;
            }
        }
        if tau1 >= RUNAWAY_CAP {
            return Err(SimError::RunawayTrial { cap: RUNAWAY_CAP });
        }
    }

    let f0 = params.density_pair.f0();
    let f1 = params.density_pair.f1();
    let density_a = match truths.0 {
        Hypothesis::Signal => &f1,
        Hypothesis::Noise => &f0,
    };
    let mut ray = RefineRay { origin: belief, log_lr: 0.0 };
    let mut tau2 = 0u64;
    loop {
        match policy.refine_decide(&ray) {
            RefineAction::Stop => break,
            RefineAction::Continue => {
                let x = sample_observation(density_a, rng);
                ray.log_lr += params.density_pair.log_lr(x)?;
                if ray.log_lr.is_nan() {
                    return Err(SimError::Belief(BeliefError::DegenerateObservation(x)));
                }
                tau2 += 1;
            }
        }
        if tau1 + tau2 >= RUNAWAY_CAP {
            return Err(SimError::RunawayTrial { cap: RUNAWAY_CAP });
        }
    }

    let declared_truth = match policy.final_decision(&ray) {
        Declaration::SequenceA => truths.0,
        Declaration::SequenceB => truths.1,
    };
    Ok(TrialRecord {
        tau1,
        tau2,
        n_switches,
        declared_truth,
        correct: declared_truth == Hypothesis::Signal,
    })
}

/// Simulate one run of the single-sequence threshold policy. All
/// observations are recorded as first-stage delay; there is no refinement.
pub fn run_baseline_trial<R: Rng + ?Sized>(
    policy: &BaselinePolicy,
    rng: &mut R,
) -> Result<TrialRecord, SimError> {
    let params = &policy.params;
    let f0 = params.density_pair.f0();
    let f1 = params.density_pair.f1();
    let sample_truth =
        |rng: &mut R| if rng.gen::<f64>() < params.pi { Hypothesis::Signal } else { Hypothesis::Noise };

    let mut truth = sample_truth(rng);
    let mut pi_tilde = params.pi;
    let mut tau1 = 0u64;
    let mut n_switches = 0u64;

    loop {
        match policy.decide(pi_tilde) {
            BaselineAction::Stop => break,
            action => {
                if action == BaselineAction::Switch {
                    truth = sample_truth(rng);
                    pi_tilde = params.pi;
                    n_switches += 1;
                }
                let x = sample_observation(
                    match truth {
                        Hypothesis::Signal => &f1,
                        Hypothesis::Noise => &f0,
                    },
                    rng,
                );
                let v1 = f1.eval(x);
                let v0 = f0.eval(x);
                let fz = pi_tilde * v1 + (1.0 - pi_tilde) * v0;
                if !(fz > 0.0) || !fz.is_finite() {
                    return Err(SimError::Belief(BeliefError::DegenerateObservation(x)));
                }
                pi_tilde = (pi_tilde * v1 / fz).clamp(0.0, 1.0);
                tau1 += 1;
            }
        }
        if tau1 >= RUNAWAY_CAP {
            return Err(SimError::RunawayTrial { cap: RUNAWAY_CAP });
        }
    }

    Ok(TrialRecord {
        tau1,
        tau2: 0,
        n_switches,
        declared_truth: truth,
        correct: truth == Hypothesis::Signal,
    })
}

fn summarize(records: &[TrialRecord], c: f64, seed: u64, params_hash: &str) -> SimSummary {
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&TrialRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let se = |f: &dyn Fn(&TrialRecord) -> f64, m: f64| {
        if records.len() < 2 {
            return 0.0;
        }
        let ss = records.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>();
        (ss / (n - 1.0)).sqrt() / n.sqrt()
    };

    let tau1 = |r: &TrialRecord| r.tau1 as f64;
    let tau2 = |r: &TrialRecord| r.tau2 as f64;
    let delay = |r: &TrialRecord| r.delay() as f64;
    let switches = |r: &TrialRecord| r.n_switches as f64;
    let err = |r: &TrialRecord| if r.correct { 0.0 } else { 1.0 };
    let cost = move |r: &TrialRecord| c * r.delay() as f64 + if r.correct { 0.0 } else { 1.0 };

    let mean_tau1 = mean(&tau1);
    let mean_tau2 = mean(&tau2);
    let mean_delay = mean(&delay);
    let error_rate = mean(&err);
    SimSummary {
        n_trials: records.len() as u64,
        mean_tau1,
        se_tau1: se(&tau1, mean_tau1),
        mean_tau2,
        se_tau2: se(&tau2, mean_tau2),
        mean_delay,
        se_delay: se(&delay, mean_delay),
        mean_switches: mean(&switches),
        error_rate,
        se_error: se(&err, error_rate),
        mean_cost: c * mean_delay + error_rate,
        se_cost: se(&cost, c * mean_delay + error_rate),
        seed,
        params_hash: params_hash.to_string(),
    }
}

fn run_many<F>(
    n_trials: u64,
    base_seed: u64,
    workers: Option<usize>,
    trial: F,
) -> Result<Vec<TrialRecord>, SimError>
where
    F: Fn(&mut ChaCha8Rng) -> Result<TrialRecord, SimError> + Sync,
{
    if n_trials == 0 {
        return Err(SimError::EmptyBatch);
    }
    let run = || {
        (0..n_trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(base_seed, i));
                trial(&mut rng)
                    .map_err(|e| SimError::BatchTrial { trial: i, message: e.to_string() })
            })
            .collect::<Result<Vec<_>, _>>()
    };
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("worker pool")
            .install(run),
        None => run(),
    }
}

/// Run `n_trials` independent searches under the two-stage policy.
pub fn run_batch(
    policy: &MixedPolicy,
    n_trials: u64,
    base_seed: u64,
    workers: Option<usize>,
) -> Result<SimSummary, SimError> {
    let records = run_many(n_trials, base_seed, workers, |rng| run_trial(policy, rng))?;
    Ok(summarize(&records, policy.params.c, base_seed, policy.params_hash()))
}

/// As `run_batch`, but also return the per-trial records for export.
pub fn run_batch_with_records(
    policy: &MixedPolicy,
    n_trials: u64,
    base_seed: u64,
    workers: Option<usize>,
) -> Result<(SimSummary, Vec<TrialRecord>), SimError> {
    let records = run_many(n_trials, base_seed, workers, |rng| run_trial(policy, rng))?;
    let summary = summarize(&records, policy.params.c, base_seed, policy.params_hash());
    Ok((summary, records))
}

/// Run `n_trials` independent searches under the baseline policy.
pub fn run_baseline_batch(
    policy: &BaselinePolicy,
    n_trials: u64,
    base_seed: u64,
    workers: Option<usize>,
) -> Result<SimSummary, SimError> {
    let records =
        run_many(n_trials, base_seed, workers, |rng| run_baseline_trial(policy, rng))?;
    Ok(summarize(&records, policy.params.c, base_seed, &policy.params_hash))
}

/// Error-matched delay comparison of the two strategies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub mixed: SimSummary,
    pub baseline: SimSummary,
    /// `None` when the model is uninformative (no calibration to run).
    pub calibration: Option<CalibrationReport>,
    /// Both strategies degenerate to guessing when `f0 = f1`.
    pub uninformative: bool,
    /// `mixed mean delay / baseline mean delay`; `None` if the baseline
    /// records zero delay.
    pub delay_ratio: Option<f64>,
    /// `1 - delay_ratio`, the fraction of search time saved.
    pub savings: Option<f64>,
    /// 95% confidence interval for the savings, by the delta method.
    pub savings_ci: Option<(f64, f64)>,
}

/// Run the mixed policy, calibrate the baseline's stopping threshold to
/// the error rate the mixed policy actually achieved, run the baseline,
/// and report both delays. `calib_trials` is the Monte-Carlo budget per
/// calibration probe.
pub fn compare_strategies(
    policy: &MixedPolicy,
    n_trials: u64,
    calib_trials: u64,
    base_seed: u64,
    workers: Option<usize>,
) -> Result<ComparisonReport, SimError> {
    let mixed = run_batch(policy, n_trials, base_seed, workers)?;
    let params = &policy.params;
    let uninformative = params.density_pair.is_uninformative();

    let (baseline_policy, calibration) = if uninformative {
        // No evidence to wait for: the most sensible baseline declares at
        // the prior, which is what any threshold at or below pi does.
        let degenerate = BaselinePolicy {
            params: params.clone(),
            stop_threshold: params.pi,
            switch_threshold: params.pi,
            params_hash: "uninformative".to_string(),
        };
        (degenerate, None)
    } else {
        let (p, report) = calibrate_baseline(
            params,
            mixed.error_rate,
            calib_trials,
            trial_seed(base_seed, u64::MAX / 3),
        )?;
        (p, Some(report))
    };

    let baseline = run_baseline_batch(
        &baseline_policy,
        n_trials,
        trial_seed(base_seed, u64::MAX / 2),
        workers,
    )?;

    let (delay_ratio, savings, savings_ci) = if baseline.mean_delay > 0.0 {
        let ratio = mixed.mean_delay / baseline.mean_delay;
        let rel_m = mixed.se_delay / mixed.mean_delay.max(f64::MIN_POSITIVE);
        let rel_b = baseline.se_delay / baseline.mean_delay;
        let se_ratio = ratio * (rel_m * rel_m + rel_b * rel_b).sqrt();
        let save = 1.0 - ratio;
        (
            Some(ratio),
            Some(save),
            Some((save - 1.96 * se_ratio, save + 1.96 * se_ratio)),
        )
    } else {
        (None, None, None)
    };

    Ok(ComparisonReport {
        mixed,
        baseline,
        calibration,
        uninformative,
        delay_ratio,
        savings,
        savings_ci,
    })
}

/// One SNR point of a sweep: either a summary or the error that kept the
/// point from solving. The sweep always visits every requested point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub summary: Option<SimSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of mean cost against SNR over the successful
    /// points; `None` with fewer than two.
    pub cost_slope: Option<f64>,
}

/// Solve and simulate the two-stage policy at each SNR. The noise floor
/// comes from the template's Gaussian pair; every point reuses `base_seed`
/// so a repeated SNR value reproduces its summary exactly.
pub fn sweep_snr(
    params: &ModelParams,
    settings: &SolverSettings,
    snr_list_db: &[f64],
    n_trials: u64,
    base_seed: u64,
    workers: Option<usize>,
) -> Result<SweepReport, SimError> {
    let sigma2 = match params.density_pair {
        DensityPair::Gaussian { sigma2, .. } => sigma2,
        _ => return Err(SimError::SweepNeedsGaussian),
    };

    let solve_point = |snr_db: f64| -> Result<SimSummary, SimError> {
        let pair = DensityPair::gaussian_snr_db(sigma2, snr_db)?;
        let point_params = ModelParams::new(params.pi, params.c, pair, params.rng_seed)?;
        let refinement = solve_refinement(&point_params, settings)?;
        let scanning = solve_scanning(&point_params, settings, &refinement)?;
        let regions = extract_regions(&refinement.g, &scanning, settings.interp_tol)?;
        let policy = MixedPolicy::new(point_params, refinement, scanning, regions)?;
        run_batch(&policy, n_trials, base_seed, workers)
    };

    let mut points = Vec::with_capacity(snr_list_db.len());
    for &snr_db in snr_list_db {
        match solve_point(snr_db) {
            Ok(summary) => {
                points.push(SweepPoint { snr_db, summary: Some(summary), error: None })
            }
            Err(e) => points.push(SweepPoint { snr_db, summary: None, error: Some(e.to_string()) }),
        }
    }

    let ok: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.summary.as_ref().map(|s| (p.snr_db, s.mean_cost)))
        .collect();
    let cost_slope = if ok.len() >= 2 {
        let n = ok.len() as f64;
        let mx = ok.iter().map(|(x, _)| x).sum::<f64>() / n;
        let my = ok.iter().map(|(_, y)| y).sum::<f64>() / n;
        let sxy: f64 = ok.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = ok.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        if sxx > 0.0 {
            Some(sxy / sxx)
        } else {
            None
        }
    } else {
        None
    };

    Ok(SweepReport { points, cost_slope })
}
