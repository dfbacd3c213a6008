//! Observation model: per-sequence densities, mixed-pair densities, priors,
//! and sampling.
//!
//! Each sequence independently carries a signal with probability `pi`. A
//! noise-only sequence emits samples from `f0`, a signal-bearing one from
//! `f1`. While a pair is scanned jointly, each observation is the sum of one
//! sample from each member, so its density is a convolution determined by
//! how many members carry the signal: `f00 = f0 * f0` when neither does,
//! `fm = f0 * f1` when exactly one does, and `f11 = f1 * f1` when both do.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling cost per observation and the tolerances below are dimensionless;
/// densities are over the real line.
const TABULATED_MIN_POINTS: usize = 16;
const MASS_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("prior pi must lie strictly between 0 and 1, got {0}")]
    InvalidPrior(f64),
    #[error("sampling cost c must be positive, got {0}")]
    InvalidCost(f64),
    #[error("noise variance sigma2 must be positive, got {0}")]
    InvalidVariance(f64),
    #[error("signal power must be nonnegative, got {0}")]
    InvalidPower(f64),
    #[error("tabulated density needs at least {TABULATED_MIN_POINTS} support points, got {0}")]
    SupportTooCoarse(usize),
    #[error("tabulated support must satisfy lo < hi, got [{lo}, {hi}]")]
    InvalidSupport { lo: f64, hi: f64 },
    #[error("density table has {values} values for a grid of {points} points")]
    TableLengthMismatch { values: usize, points: usize },
    #[error("density values must be finite and nonnegative, found {0}")]
    NegativeDensity(f64),
    #[error("density mass is {mass}, expected 1 within {MASS_TOL}; renormalize or refine the grid")]
    NotNormalized { mass: f64 },
    #[error("discrete support must be strictly increasing")]
    UnsortedSupport,
    #[error("discrete support has {support} points but pmfs have {p0} and {p1}")]
    PmfLengthMismatch { support: usize, p0: usize, p1: usize },
    #[error("discrete support must be nonempty")]
    EmptySupport,
    #[error("observation {0} has zero density under both hypotheses")]
    DegenerateObservation(f64),
}

/// Truth of a single sequence: noise-only or signal-bearing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    Noise,
    Signal,
}

/// Uniformly spaced support for a tabulated density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl SupportGrid {
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.lo + self.step() * i as f64
    }

    fn validate(&self, min_points: usize) -> Result<(), ModelError> {
        if self.n < min_points {
            return Err(ModelError::SupportTooCoarse(self.n));
        }
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(ModelError::InvalidSupport { lo: self.lo, hi: self.hi });
        }
        Ok(())
    }
}

/// A single probability density, in one of three representations.
///
/// `Gaussian` is zero-mean with the given variance. `Tabulated` holds values
/// on a uniform grid, interpreted piecewise-linearly and as zero outside the
/// support. `Discrete` is a pmf on a finite set of atoms; integrals against
/// it are exact sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density {
    Gaussian { variance: f64 },
    Tabulated { grid: SupportGrid, values: Vec<f64> },
    Discrete { support: Vec<f64>, probs: Vec<f64> },
}

impl Density {
    /// Density value at `x` (probability mass for the discrete kind).
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Density::Gaussian { variance } => {
                (-x * x / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
            }
            Density::Tabulated { grid, values } => {
                if x < grid.lo || x > grid.hi {
                    return 0.0;
                }
                let t = (x - grid.lo) / grid.step();
                let i = (t.floor() as usize).min(grid.n - 2);
                let frac = t - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
            Density::Discrete { support, probs } => support
                .iter()
                .position(|&s| s == x)
                .map_or(0.0, |i| probs[i]),
        }
    }

    /// Natural log of [`eval`](Self::eval); `-inf` where the density is zero.
    pub fn ln(&self, x: f64) -> f64 {
        match self {
            Density::Gaussian { variance } => {
                -x * x / (2.0 * variance) - 0.5 * (2.0 * std::f64::consts::PI * variance).ln()
            }
            _ => self.eval(x).ln(),
        }
    }

    /// Variance of the distribution (second moment about its mean).
    pub fn variance(&self) -> f64 {
        match self {
            Density::Gaussian { variance } => *variance,
            Density::Tabulated { grid, values } => {
                let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
                let h = grid.step();
                for (i, &v) in values.iter().enumerate() {
                    let w = if i == 0 || i == grid.n - 1 { 0.5 * h } else { h };
                    let x = grid.point(i);
                    m0 += w * v;
                    m1 += w * v * x;
                    m2 += w * v * x * x;
                }
                m2 / m0 - (m1 / m0) * (m1 / m0)
            }
            Density::Discrete { support, probs } => {
                let mean: f64 = support.iter().zip(probs).map(|(x, p)| x * p).sum();
                support
                    .iter()
                    .zip(probs)
                    .map(|(x, p)| p * (x - mean) * (x - mean))
                    .sum()
            }
        }
    }

    /// Total mass under the native quadrature: exact for Gaussian and
    /// discrete kinds, trapezoid on the grid for tabulated ones.
    pub fn mass(&self) -> f64 {
        match self {
            Density::Gaussian { .. } => 1.0,
            Density::Tabulated { grid, values } => {
                let h = grid.step();
                let interior: f64 = values[1..grid.n - 1].iter().sum();
                h * (interior + 0.5 * (values[0] + values[grid.n - 1]))
            }
            Density::Discrete { probs, .. } => probs.iter().sum(),
        }
    }

    /// Draw one sample. Tabulated densities sample by inverting the
    /// piecewise-linear cdf implied by trapezoid node masses.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Density::Gaussian { variance } => {
                Normal::new(0.0, variance.sqrt()).expect("validated variance").sample(rng)
            }
            Density::Tabulated { grid, values } => {
                let h = grid.step();
                let node_mass = |i: usize| {
                    let w = if i == 0 || i == grid.n - 1 { 0.5 } else { 1.0 };
                    w * h * values[i]
                };
                let total: f64 = (0..grid.n).map(node_mass).sum();
                let mut target = rng.gen::<f64>() * total;
                for i in 0..grid.n {
                    let m = node_mass(i);
                    if target <= m || i == grid.n - 1 {
                        let frac = if m > 0.0 { target / m } else { 0.5 };
                        let half = 0.5 * h;
                        return match i {
                            0 => grid.lo + frac * half,
                            i if i == grid.n - 1 => grid.hi - half + frac * half,
                            _ => grid.point(i) - half + frac * h,
                        };
                    }
                    target -= m;
                }
                unreachable!("cdf inversion always lands in a segment");
            }
            Density::Discrete { support, probs } => {
                let mut target = rng.gen::<f64>();
                for (x, p) in support.iter().zip(probs) {
                    if target <= *p {
                        return *x;
                    }
                    target -= p;
                }
                *support.last().expect("validated nonempty support")
            }
        }
    }
}

/// The `(f0, f1)` pair of per-sequence densities under noise and signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityPair {
    /// `f0 = N(0, sigma2)`, `f1 = N(0, sigma2 + p)`.
    Gaussian { sigma2: f64, p: f64 },
    /// Both densities tabulated on one shared uniform grid.
    Tabulated { grid: SupportGrid, f0: Vec<f64>, f1: Vec<f64> },
    /// Both pmfs on one shared finite support.
    Discrete { support: Vec<f64>, p0: Vec<f64>, p1: Vec<f64> },
}

impl DensityPair {
    pub fn gaussian(sigma2: f64, p: f64) -> Result<Self, ModelError> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(ModelError::InvalidVariance(sigma2));
        }
        if !(p >= 0.0) || !p.is_finite() {
            return Err(ModelError::InvalidPower(p));
        }
        Ok(DensityPair::Gaussian { sigma2, p })
    }

    /// Gaussian pair with the signal power set from an SNR in decibels,
    /// `p = sigma2 * 10^(snr_db / 10)`.
    pub fn gaussian_snr_db(sigma2: f64, snr_db: f64) -> Result<Self, ModelError> {
        let p = sigma2 * 10f64.powf(snr_db / 10.0);
        Self::gaussian(sigma2, p)
    }

    /// SNR in decibels for the Gaussian kind, `None` otherwise.
    pub fn snr_db(&self) -> Option<f64> {
        match self {
            DensityPair::Gaussian { sigma2, p } => Some(10.0 * (p / sigma2).log10()),
            _ => None,
        }
    }

    pub fn tabulated(grid: SupportGrid, f0: Vec<f64>, f1: Vec<f64>) -> Result<Self, ModelError> {
        grid.validate(TABULATED_MIN_POINTS)?;
        for values in [&f0, &f1] {
            if values.len() != grid.n {
                return Err(ModelError::TableLengthMismatch { values: values.len(), points: grid.n });
            }
        }
        let pair = DensityPair::Tabulated { grid, f0, f1 };
        pair.check_mass()?;
        Ok(pair)
    }

    pub fn discrete(support: Vec<f64>, p0: Vec<f64>, p1: Vec<f64>) -> Result<Self, ModelError> {
        if support.is_empty() {
            return Err(ModelError::EmptySupport);
        }
        if !support.windows(2).all(|w| w[0] < w[1]) {
            return Err(ModelError::UnsortedSupport);
        }
        if p0.len() != support.len() || p1.len() != support.len() {
            return Err(ModelError::PmfLengthMismatch {
                support: support.len(),
                p0: p0.len(),
                p1: p1.len(),
            });
        }
        let pair = DensityPair::Discrete { support, p0, p1 };
        pair.check_mass()?;
        Ok(pair)
    }

    fn check_mass(&self) -> Result<(), ModelError> {
        for d in [self.f0(), self.f1()] {
            if let Density::Tabulated { values, .. } | Density::Discrete { probs: values, .. } = &d {
                if let Some(&bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
                    return Err(ModelError::NegativeDensity(bad));
                }
            }
            let mass = d.mass();
            if (mass - 1.0).abs() > MASS_TOL {
                return Err(ModelError::NotNormalized { mass });
            }
        }
        Ok(())
    }

    /// The noise density `f0`.
    pub fn f0(&self) -> Density {
        match self {
            DensityPair::Gaussian { sigma2, .. } => Density::Gaussian { variance: *sigma2 },
            DensityPair::Tabulated { grid, f0, .. } => {
                Density::Tabulated { grid: *grid, values: f0.clone() }
            }
            DensityPair::Discrete { support, p0, .. } => {
                Density::Discrete { support: support.clone(), probs: p0.clone() }
            }
        }
    }

    /// The signal density `f1`.
    pub fn f1(&self) -> Density {
        match self {
            DensityPair::Gaussian { sigma2, p } => Density::Gaussian { variance: sigma2 + p },
            DensityPair::Tabulated { grid, f1, .. } => {
                Density::Tabulated { grid: *grid, values: f1.clone() }
            }
            DensityPair::Discrete { support, p1, .. } => {
                Density::Discrete { support: support.clone(), probs: p1.clone() }
            }
        }
    }

    /// Log-likelihood ratio `ln f1(x) - ln f0(x)`. Infinite values are
    /// legitimate where exactly one density vanishes; an observation with
    /// zero density under both is an error.
    pub fn log_lr(&self, x: f64) -> Result<f64, ModelError> {
        if let DensityPair::Gaussian { sigma2, p } = self {
            let v1 = sigma2 + p;
            return Ok(0.5 * (sigma2 / v1).ln() + 0.5 * x * x * (1.0 / sigma2 - 1.0 / v1));
        }
        let (d0, d1) = (self.f0().eval(x), self.f1().eval(x));
        if d0 == 0.0 && d1 == 0.0 {
            return Err(ModelError::DegenerateObservation(x));
        }
        Ok(d1.ln() - d0.ln())
    }

    /// True when `f0` and `f1` coincide, so observations carry no
    /// information about the hypothesis.
    pub fn is_uninformative(&self) -> bool {
        match self {
            DensityPair::Gaussian { p, .. } => *p == 0.0,
            DensityPair::Tabulated { f0, f1, .. } => f0 == f1,
            DensityPair::Discrete { p0, p1, .. } => p0 == p1,
        }
    }
}

/// Densities of a mixed observation `Z = Y^a + Y^b` under the three pair
/// truths: neither, exactly one, or both sequences carrying the signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedDensities {
    pub f00: Density,
    pub fm: Density,
    pub f11: Density,
}

impl MixedDensities {
    /// The mixed density matching a pair's truths.
    pub fn for_truths(&self, a: Hypothesis, b: Hypothesis) -> &Density {
        match (a, b) {
            (Hypothesis::Noise, Hypothesis::Noise) => &self.f00,
            (Hypothesis::Signal, Hypothesis::Signal) => &self.f11,
            _ => &self.fm,
        }
    }

    /// Likelihoods `(f00(z), fm(z), f11(z))` of one mixed observation.
    pub fn likelihoods(&self, z: f64) -> (f64, f64, f64) {
        (self.f00.eval(z), self.fm.eval(z), self.f11.eval(z))
    }
}

/// Convolution of two densities tabulated on the same uniform grid,
/// evaluated on the doubled grid by direct summation. Exact grid alignment
/// (`z_k - x_i` is again a grid point) keeps this a plain discrete
/// convolution scaled by the step.
fn convolve_tables(grid: &SupportGrid, a: &[f64], b: &[f64]) -> (SupportGrid, Vec<f64>) {
    let n = grid.n;
    let h = grid.step();
    let out_grid = SupportGrid { lo: 2.0 * grid.lo, hi: 2.0 * grid.hi, n: 2 * n - 1 };
    let mut out = vec![0.0; 2 * n - 1];
    for (k, o) in out.iter_mut().enumerate() {
        let i_lo = k.saturating_sub(n - 1);
        let i_hi = k.min(n - 1);
        let mut acc = 0.0;
        for i in i_lo..=i_hi {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            acc += w * a[i] * b[k - i];
        }
        *o = acc * h;
    }
    (out_grid, out)
}

/// Convolution of two pmfs on the same support: atoms at pairwise sums.
fn convolve_pmfs(support: &[f64], a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in support.iter().enumerate() {
        for (j, &y) in support.iter().enumerate() {
            let s = x + y;
            let p = a[i] * b[j];
            match atoms.iter_mut().find(|(t, _)| *t == s) {
                Some((_, q)) => *q += p,
                None => atoms.push((s, p)),
            }
        }
    }
    atoms.sort_by(|u, v| u.0.partial_cmp(&v.0).expect("finite support sums"));
    atoms.into_iter().unzip()
}

/// Build the three mixed-observation densities from a per-sequence pair.
///
/// Gaussian pairs convolve in closed form: variances `2 sigma2`,
/// `2 sigma2 + p`, and `2 sigma2 + 2 p`. Tabulated pairs convolve by direct
/// summation onto the doubled grid; a resulting mass off 1 by more than
/// `1e-6` reports as an error rather than being silently renormalized.
pub fn mixed_densities(pair: &DensityPair) -> Result<MixedDensities, ModelError> {
    match pair {
        DensityPair::Gaussian { sigma2, p } => Ok(MixedDensities {
            f00: Density::Gaussian { variance: 2.0 * sigma2 },
            fm: Density::Gaussian { variance: 2.0 * sigma2 + p },
            f11: Density::Gaussian { variance: 2.0 * sigma2 + 2.0 * p },
        }),
        DensityPair::Tabulated { grid, f0, f1 } => {
            let mut out = Vec::with_capacity(3);
            for (a, b) in [(f0, f0), (f0, f1), (f1, f1)] {
                let (g, values) = convolve_tables(grid, a, b);
                let d = Density::Tabulated { grid: g, values };
                let mass = d.mass();
                if (mass - 1.0).abs() > MASS_TOL {
                    return Err(ModelError::NotNormalized { mass });
                }
                out.push(d);
            }
            let f11 = out.pop().expect("three convolutions");
            let fm = out.pop().expect("three convolutions");
            let f00 = out.pop().expect("three convolutions");
            Ok(MixedDensities { f00, fm, f11 })
        }
        DensityPair::Discrete { support, p0, p1 } => {
            let mut out = Vec::with_capacity(3);
            for (a, b) in [(p0, p0), (p0, p1), (p1, p1)] {
                let (s, probs) = convolve_pmfs(support, a, b);
                out.push(Density::Discrete { support: s, probs });
            }
            let f11 = out.pop().expect("three convolutions");
            let fm = out.pop().expect("three convolutions");
            let f00 = out.pop().expect("three convolutions");
            Ok(MixedDensities { f00, fm, f11 })
        }
    }
}

/// Full problem specification: prior, sampling cost, densities, and the
/// base seed for reproducible simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Prior probability that any one sequence carries the signal.
    pub pi: f64,
    /// Cost per observation, traded against the terminal error probability.
    pub c: f64,
    pub density_pair: DensityPair,
    pub rng_seed: u64,
}

impl ModelParams {
    pub fn new(pi: f64, c: f64, density_pair: DensityPair, rng_seed: u64) -> Result<Self, ModelError> {
        let params = ModelParams { pi, c, density_pair, rng_seed };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(ModelError::InvalidPrior(self.pi));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(ModelError::InvalidCost(self.c));
        }
        match &self.density_pair {
            DensityPair::Gaussian { sigma2, p } => {
                DensityPair::gaussian(*sigma2, *p).map(|_| ())
            }
            DensityPair::Tabulated { grid, f0, f1 } => {
                DensityPair::tabulated(*grid, f0.clone(), f1.clone()).map(|_| ())
            }
            DensityPair::Discrete { support, p0, p1 } => {
                DensityPair::discrete(support.clone(), p0.clone(), p1.clone()).map(|_| ())
            }
        }
    }
}

/// Draw the truths of a fresh pair: each member independently carries the
/// signal with probability `pi`. The pool of unexamined sequences is treated
/// as unlimited, so every switch sees the same prior.
pub fn sample_pair_truth<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> (Hypothesis, Hypothesis) {
    let mut draw = || {
        if rng.gen::<f64>() < params.pi {
            Hypothesis::Signal
        } else {
            Hypothesis::Noise
        }
    };
    (draw(), draw())
}

/// Draw one observation from a density.
pub fn sample_observation<R: Rng + ?Sized>(density: &Density, rng: &mut R) -> f64 {
    density.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snr3_pair() -> DensityPair {
        DensityPair::gaussian_snr_db(1.0, 3.0).unwrap()
    }

    #[test]
    fn snr_3db_sets_power_to_ten_to_the_0_3() {
        let DensityPair::Gaussian { p, .. } = snr3_pair() else { panic!("gaussian") };
        assert!((p - 1.9952623149688795).abs() < 1e-12, "p = {p}");
        assert!((snr3_pair().snr_db().unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_gaussian_variances_add() {
        let mixed = mixed_densities(&snr3_pair()).unwrap();
        let p = 1.9952623149688795;
        assert!((mixed.f00.variance() - 2.0).abs() < 1e-3);
        assert!((mixed.fm.variance() - (2.0 + p)).abs() < 1e-3);
        assert!((mixed.f11.variance() - (2.0 + 2.0 * p)).abs() < 1e-3);
    }

    #[test]
    fn gaussian_log_lr_matches_density_ratio() {
        let pair = snr3_pair();
        for x in [-3.0, -0.7, 0.0, 1.3, 5.0] {
            let direct = pair.f1().ln(x) - pair.f0().ln(x);
            assert!((pair.log_lr(x).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_mixing_is_the_outer_product() {
        let pair = DensityPair::discrete(
            vec![0.0, 1.0],
            vec![0.8, 0.2],
            vec![0.2, 0.8],
        )
        .unwrap();
        let mixed = mixed_densities(&pair).unwrap();
        let expect = |d: &Density, probs: [f64; 3]| {
            let Density::Discrete { support, probs: got } = d else { panic!("discrete") };
            assert_eq!(support, &[0.0, 1.0, 2.0]);
            for (g, e) in got.iter().zip(probs) {
                assert!((g - e).abs() < 1e-15, "got {got:?}, expected {probs:?}");
            }
        };
        expect(&mixed.f00, [0.64, 0.32, 0.04]);
        expect(&mixed.fm, [0.16, 0.68, 0.16]);
        expect(&mixed.f11, [0.04, 0.32, 0.64]);
    }

    #[test]
    fn tabulated_convolution_matches_direct_sum() {
        // Triangular density on [-1, 1], zero at the endpoints so the
        // trapezoid mass is exact enough for validation.
        let n = 41;
        let grid = SupportGrid { lo: -1.0, hi: 1.0, n };
        let tri: Vec<f64> = (0..n).map(|i| 1.0 - grid.point(i).abs()).collect();
        let pair = DensityPair::tabulated(grid, tri.clone(), tri.clone()).unwrap();
        let mixed = mixed_densities(&pair).unwrap();

        let Density::Tabulated { grid: g2, values } = &mixed.f00 else { panic!("tabulated") };
        assert_eq!(g2.n, 2 * n - 1);
        let h = grid.step();
        for k in 0..g2.n {
            let mut direct = 0.0;
            for i in 0..n {
                if k >= i && k - i < n {
                    let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                    direct += w * tri[i] * tri[k - i] * h;
                }
            }
            assert!((values[k] - direct).abs() < 1e-9, "node {k}");
        }
    }

    #[test]
    fn coarse_tabulated_support_is_rejected() {
        let grid = SupportGrid { lo: 0.0, hi: 1.0, n: 8 };
        let flat = vec![1.0; 8];
        assert!(matches!(
            DensityPair::tabulated(grid, flat.clone(), flat),
            Err(ModelError::SupportTooCoarse(8))
        ));
    }

    #[test]
    fn unnormalized_table_is_rejected() {
        let n = 21;
        let grid = SupportGrid { lo: 0.0, hi: 1.0, n };
        let ok = vec![1.0; n];
        let bad = vec![2.0; n];
        assert!(matches!(
            DensityPair::tabulated(grid, ok, bad),
            Err(ModelError::NotNormalized { .. })
        ));
    }

    #[test]
    fn gaussian_sampling_matches_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = Density::Gaussian { variance: 4.0 };
        let n = 200_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = d.sample(&mut rng);
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        // 3 sigma bands: sd(mean) = 2/sqrt(n), sd(var) ~ sqrt(2/n)*4.
        assert!(mean.abs() < 3.0 * 2.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 4.0).abs() < 3.0 * 4.0 * (2.0 / n as f64).sqrt(), "var {var}");
    }

    #[test]
    fn tabulated_uniform_sampling_centers_on_half() {
        let n = 33;
        let grid = SupportGrid { lo: 0.0, hi: 1.0, n };
        let d = Density::Tabulated { grid, values: vec![1.0; n] };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 100_000;
        let mean: f64 = (0..trials).map(|_| d.sample(&mut rng)).sum::<f64>() / trials as f64;
        // sd of the mean of U[0,1] samples is 1/sqrt(12 n).
        let tol = 3.0 / (12.0 * trials as f64).sqrt();
        assert!((mean - 0.5).abs() < tol, "mean {mean}");
        for _ in 0..1000 {
            let x = d.sample(&mut rng);
            assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn discrete_sampling_matches_pmf() {
        let d = Density::Discrete { support: vec![0.0, 1.0], probs: vec![0.8, 0.2] };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let ones = (0..n).filter(|_| d.sample(&mut rng) == 1.0).count();
        let freq = ones as f64 / n as f64;
        let tol = 3.0 * (0.2 * 0.8 / n as f64).sqrt();
        assert!((freq - 0.2).abs() < tol, "freq {freq}");
    }

    #[test]
    fn pair_truths_are_independent_bernoulli() {
        let params = ModelParams::new(0.05, 0.01, snr3_pair(), 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
        let n = 200_000;
        let (mut a_signal, mut both) = (0u64, 0u64);
        for _ in 0..n {
            let (a, b) = sample_pair_truth(&params, &mut rng);
            if a == Hypothesis::Signal {
                a_signal += 1;
            }
            if a == Hypothesis::Signal && b == Hypothesis::Signal {
                both += 1;
            }
        }
        let fa = a_signal as f64 / n as f64;
        let fboth = both as f64 / n as f64;
        assert!((fa - 0.05).abs() < 3.0 * (0.05 * 0.95 / n as f64).sqrt(), "fa {fa}");
        assert!((fboth - 0.0025).abs() < 3.0 * (0.0025f64 / n as f64).sqrt(), "fboth {fboth}");
    }

    #[test]
    fn params_reject_bad_priors_and_costs() {
        assert!(matches!(
            ModelParams::new(0.0, 0.01, snr3_pair(), 0),
            Err(ModelError::InvalidPrior(_))
        ));
        assert!(matches!(
            ModelParams::new(1.0, 0.01, snr3_pair(), 0),
            Err(ModelError::InvalidPrior(_))
        ));
        assert!(matches!(
            ModelParams::new(0.05, 0.0, snr3_pair(), 0),
            Err(ModelError::InvalidCost(_))
        ));
        // A cost of 1 or more is legal; it just makes immediate stopping optimal.
        assert!(ModelParams::new(0.05, 1.5, snr3_pair(), 0).is_ok());
    }

    #[test]
    fn params_serde_round_trip() {
        let params = ModelParams::new(0.05, 0.01, snr3_pair(), 42).unwrap();
        let json = serde_json::to_string(&params).unwrap();
        let back: ModelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(params, back);
    }
}
