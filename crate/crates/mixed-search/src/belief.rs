//! Posterior beliefs for both search stages.
//!
//! While scanning, the sufficient statistic is the pair `(p11, pmix)`: the
//! posterior probabilities that both or exactly one member of the current
//! pair carries the signal (`p00` is the remainder). A switch discards the
//! pair, so the posterior restarts from the prior before absorbing the next
//! observation.
//!
//! During refinement only sequence `a` of the committed pair is sampled, and
//! the belief over the four joint truths collapses onto a one-dimensional
//! ray: starting from the scan belief at commitment, every reachable
//! posterior is determined by the accumulated log-likelihood ratio of the
//! refinement observations. [`embed`] maps `(origin, log_lr)` to the full
//! posterior in closed form; the solvers and policies exploit this to work
//! in log-likelihood-ratio space.

use crate::model::{DensityPair, MixedDensities, ModelError, ModelParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Accumulated log-likelihood ratios are clamped to this magnitude before
/// exponentiation, keeping `exp` finite while leaving posteriors saturated
/// far beyond any decision boundary.
pub const LOG_LR_CLAMP: f64 = 700.0;

/// Slack for validating that belief components form a sub-probability
/// vector; anything beyond this is a logic error, not roundoff.
const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("belief components ({0}, {1}) leave the probability simplex")]
    OutsideSimplex(f64, f64),
    #[error("belief components ({0}, {1}, {2}) leave the probability simplex")]
    OutsideSimplex3(f64, f64, f64),
    #[error("observation {0} has zero predictive density under the current belief")]
    DegenerateObservation(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Scanning-stage posterior `(p11, pmix)` over the current pair's truths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanBelief {
    p11: f64,
    pmix: f64,
}

impl ScanBelief {
    pub fn new(p11: f64, pmix: f64) -> Result<Self, BeliefError> {
        let ok = p11 >= -SIMPLEX_TOL
            && pmix >= -SIMPLEX_TOL
            && p11 + pmix <= 1.0 + SIMPLEX_TOL
            && p11.is_finite()
            && pmix.is_finite();
        if !ok {
            return Err(BeliefError::OutsideSimplex(p11, pmix));
        }
        Ok(Self::clamped(p11, pmix))
    }

    /// Clamp roundoff dust back onto the simplex.
    pub(crate) fn clamped(p11: f64, pmix: f64) -> Self {
        let p11 = p11.clamp(0.0, 1.0);
        let pmix = pmix.clamp(0.0, 1.0 - p11);
        ScanBelief { p11, pmix }
    }

    /// Posterior probability that both members carry the signal.
    pub fn p11(&self) -> f64 {
        self.p11
    }

    /// Posterior probability that exactly one member carries the signal.
    pub fn pmix(&self) -> f64 {
        self.pmix
    }

    /// Posterior probability that neither member carries the signal.
    pub fn p00(&self) -> f64 {
        (1.0 - self.p11 - self.pmix).max(0.0)
    }
}

/// Prior scan belief for a fresh pair: with each sequence independently
/// signal-bearing with probability `pi`, the pair starts at
/// `(pi^2, 2 pi (1 - pi))`.
pub fn scan_prior(params: &ModelParams) -> ScanBelief {
    let pi = params.pi;
    ScanBelief { p11: pi * pi, pmix: 2.0 * pi * (1.0 - pi) }
}

/// One Bayes step of the scanning posterior given mixed observation `z`.
///
/// `switched` selects the belief the update starts from: the pair in hand
/// (`false`) or the prior of the fresh pair just switched to (`true`). The
/// observation is always consumed; switching does not skip a sample.
pub fn scan_update(
    belief: &ScanBelief,
    z: f64,
    switched: bool,
    prior: &ScanBelief,
    mixed: &MixedDensities,
) -> Result<ScanBelief, BeliefError> {
    let base = if switched { prior } else { belief };
    let (l00, lm, l11) = mixed.likelihoods(z);
    scan_update_likelihoods(base, l00, lm, l11)
        .map_err(|_| BeliefError::DegenerateObservation(z))
}

/// The scanning Bayes step with the three mixed likelihoods already
/// evaluated; the solvers use this form to share likelihood evaluations
/// across grid nodes.
pub fn scan_update_likelihoods(
    belief: &ScanBelief,
    l00: f64,
    lm: f64,
    l11: f64,
) -> Result<ScanBelief, BeliefError> {
    let fz = belief.p00() * l00 + belief.pmix * lm + belief.p11 * l11;
    if !(fz > 0.0) || !fz.is_finite() {
        return Err(BeliefError::DegenerateObservation(f64::NAN));
    }
    Ok(ScanBelief::clamped(belief.p11 * l11 / fz, belief.pmix * lm / fz))
}

/// Refinement-stage posterior over the committed pair's joint truths.
/// `r11` is the probability both carry the signal, `r10` that only the
/// sampled sequence `a` does, `r01` that only `b` does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineBelief {
    r11: f64,
    r10: f64,
    r01: f64,
}

impl RefineBelief {
    pub fn new(r11: f64, r10: f64, r01: f64) -> Result<Self, BeliefError> {
        let ok = r11 >= -SIMPLEX_TOL
            && r10 >= -SIMPLEX_TOL
            && r01 >= -SIMPLEX_TOL
            && r11 + r10 + r01 <= 1.0 + SIMPLEX_TOL
            && r11.is_finite()
            && r10.is_finite()
            && r01.is_finite();
        if !ok {
            return Err(BeliefError::OutsideSimplex3(r11, r10, r01));
        }
        Ok(Self::clamped(r11, r10, r01))
    }

    fn clamped(r11: f64, r10: f64, r01: f64) -> Self {
        let r11 = r11.clamp(0.0, 1.0);
        let r10 = r10.clamp(0.0, 1.0 - r11);
        let r01 = r01.clamp(0.0, 1.0 - r11 - r10);
        RefineBelief { r11, r10, r01 }
    }

    /// Belief at the moment of commitment: the scan posterior's `pmix` mass
    /// splits evenly between "only a" and "only b" by symmetry.
    pub fn from_scan(scan: &ScanBelief) -> Self {
        RefineBelief { r11: scan.p11(), r10: 0.5 * scan.pmix(), r01: 0.5 * scan.pmix() }
    }

    pub fn r11(&self) -> f64 {
        self.r11
    }

    pub fn r10(&self) -> f64 {
        self.r10
    }

    pub fn r01(&self) -> f64 {
        self.r01
    }

    pub fn r00(&self) -> f64 {
        (1.0 - self.r11 - self.r10 - self.r01).max(0.0)
    }

    /// Marginal probability that the sampled sequence `a` carries the signal.
    pub fn pi_a(&self) -> f64 {
        self.r11 + self.r10
    }

    /// Marginal probability that the companion sequence `b` carries the signal.
    pub fn pi_b(&self) -> f64 {
        self.r11 + self.r01
    }
}

/// Marginals `(pi_a, pi_b)` of a refinement belief.
pub fn marginals(belief: &RefineBelief) -> (f64, f64) {
    (belief.pi_a(), belief.pi_b())
}

/// One Bayes step of the refinement posterior given an observation of
/// sequence `a`: components with `a` signal-bearing reweight by `f1(x)`,
/// the rest by `f0(x)`.
pub fn refine_update(
    belief: &RefineBelief,
    x: f64,
    pair: &DensityPair,
) -> Result<RefineBelief, BeliefError> {
    refine_update_values(belief, pair.f1().eval(x), pair.f0().eval(x))
        .map_err(|_| BeliefError::DegenerateObservation(x))
}

/// The refinement Bayes step with density values `v1 = f1(x)`, `v0 = f0(x)`
/// already evaluated.
pub fn refine_update_values(
    belief: &RefineBelief,
    v1: f64,
    v0: f64,
) -> Result<RefineBelief, BeliefError> {
    let denom = belief.pi_a() * v1 + (1.0 - belief.pi_a()) * v0;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(BeliefError::DegenerateObservation(f64::NAN));
    }
    Ok(RefineBelief::clamped(
        belief.r11 * v1 / denom,
        belief.r10 * v1 / denom,
        belief.r01 * v0 / denom,
    ))
}

/// The refinement Bayes step expressed through a likelihood ratio
/// `lr = f1(x) / f0(x)`.
pub fn refine_update_lr(belief: &RefineBelief, lr: f64) -> Result<RefineBelief, BeliefError> {
    refine_update_values(belief, lr, 1.0)
}

/// A point on the refinement ray: the scan belief at commitment plus the
/// log-likelihood ratio accumulated since.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineRay {
    pub origin: ScanBelief,
    pub log_lr: f64,
}

impl RefineRay {
    pub fn belief(&self) -> RefineBelief {
        embed(&self.origin, self.log_lr)
    }
}

/// Closed form for the refinement posterior reached from `origin` after
/// accumulating `log_lr`: with `L = exp(log_lr)` (clamped to
/// [`LOG_LR_CLAMP`]) and the commitment belief `(p11, pmix/2, pmix/2)`,
/// the components with `a` signal-bearing scale by `L` and everything
/// renormalizes. Equal to folding [`refine_update_lr`] over the individual
/// observations, but immune to drift from repeated renormalization.
pub fn embed(origin: &ScanBelief, log_lr: f64) -> RefineBelief {
    let lam = log_lr.clamp(-LOG_LR_CLAMP, LOG_LR_CLAMP).exp();
    let half_mix = 0.5 * origin.pmix();
    let denom = (origin.p11() + half_mix) * lam + half_mix + origin.p00();
    RefineBelief::clamped(
        origin.p11() * lam / denom,
        half_mix * lam / denom,
        half_mix / denom,
    )
}
