//! Numerical integration against the model densities.
//!
//! Gaussian densities integrate over `[-L, L]` with `L` six standard
//! deviations of the widest density, using composite Gauss-Legendre panels.
//! Tabulated densities integrate on their native grid with trapezoid
//! weights, and discrete ones by exact summation over their atoms. Every
//! built integrator is checked to capture at least `1 - 1e-6` of each
//! density's mass, so a truncated or too-coarse rule surfaces as an error
//! instead of a silently biased expectation.

use crate::model::Density;
use serde::{Deserialize, Serialize};

use super::DpError;

/// Mass each density must retain under a freshly built rule.
const BUILD_MASS_TOL: f64 = 1e-6;

/// Gaussian integration range in standard deviations.
const RANGE_SIGMAS: f64 = 8.0;

/// Nodes per Gauss-Legendre panel; the panel count grows with the requested
/// total so accuracy scales by adding panels, not degree.
const PANEL_POINTS: usize = 16;

/// Floor on the Gaussian rule size so no panel spans more than about four
/// standard deviations regardless of how few points were requested.
const MIN_GAUSSIAN_POINTS: usize = PANEL_POINTS * (RANGE_SIGMAS as usize / 2);

/// Requested size of the integration rule for continuous densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub n_points: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { n_points: 129 }
    }
}

/// A fixed integration rule: `integral f ~= sum_i weights[i] * f(nodes[i])`.
/// For discrete densities the nodes are the atoms and the weights are 1, so
/// sums against pmf values are exact.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Integrator {
    /// Build a rule adequate for every density in `densities` at once.
    pub fn for_densities(spec: &QuadratureSpec, densities: &[&Density]) -> Result<Self, DpError> {
        if spec.n_points < 5 {
            return Err(DpError::InvalidSettings(format!(
                "quadrature needs at least 5 points, got {}",
                spec.n_points
            )));
        }
        let integ = if densities.iter().any(|d| matches!(d, Density::Discrete { .. })) {
            Self::for_atoms(densities)
        } else if densities.iter().any(|d| matches!(d, Density::Tabulated { .. })) {
            Self::for_tables(densities)
        } else {
            let max_var = densities
                .iter()
                .map(|d| d.variance())
                .fold(0.0f64, f64::max);
            let min_var = densities
                .iter()
                .map(|d| d.variance())
                .fold(f64::INFINITY, f64::min);
            let range = RANGE_SIGMAS * max_var.sqrt();
            // The widest density sets the range, but the narrowest one sets
            // how fine the panels must be: a 16-point panel loses mass once
            // it spans much more than ~3 standard deviations of a density.
            // Scale the panel count with the spread ratio (capped so wildly
            // mismatched scales still fall through to the mass check below
            // instead of allocating an unbounded rule).
            let min_sd = min_var.sqrt();
            let needed_panels = if min_sd.is_finite() && min_sd > 0.0 {
                ((2.0 * range / (3.0 * min_sd)).ceil() as usize).min(4096)
            } else {
                0
            };
            let n_points = spec
                .n_points
                .max(MIN_GAUSSIAN_POINTS)
                .max(needed_panels * PANEL_POINTS);
            Self::gauss_legendre_composite(-range, range, n_points)
        };
        for d in densities {
            let mass: f64 = integ
                .nodes
                .iter()
                .zip(&integ.weights)
                .map(|(&x, &w)| w * d.eval(x))
                .sum();
            if (mass - 1.0).abs() > BUILD_MASS_TOL {
                return Err(DpError::QuadratureMass { mass });
            }
        }
        Ok(integ)
    }

    /// Union of all discrete supports, unit weights.
    fn for_atoms(densities: &[&Density]) -> Self {
        let mut nodes: Vec<f64> = Vec::new();
        for d in densities {
            if let Density::Discrete { support, .. } = d {
                for &x in support {
                    if !nodes.contains(&x) {
                        nodes.push(x);
                    }
                }
            }
        }
        nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite atoms"));
        let weights = vec![1.0; nodes.len()];
        Integrator { nodes, weights }
    }

    /// Native grid of the widest tabulated density, trapezoid weights.
    fn for_tables(densities: &[&Density]) -> Self {
        let grid = densities
            .iter()
            .filter_map(|d| match d {
                Density::Tabulated { grid, .. } => Some(*grid),
                _ => None,
            })
            .max_by(|a, b| (a.hi - a.lo).partial_cmp(&(b.hi - b.lo)).expect("finite spans"))
            .expect("caller checked a tabulated density exists");
        let h = grid.step();
        let nodes: Vec<f64> = (0..grid.n).map(|i| grid.point(i)).collect();
        let weights: Vec<f64> = (0..grid.n)
            .map(|i| if i == 0 || i == grid.n - 1 { 0.5 * h } else { h })
            .collect();
        Integrator { nodes, weights }
    }

    /// Composite Gauss-Legendre rule over `[lo, hi]` with at least
    /// `n_points` nodes split into panels of [`PANEL_POINTS`].
    pub fn gauss_legendre_composite(lo: f64, hi: f64, n_points: usize) -> Self {
        let panels = n_points.div_ceil(PANEL_POINTS);
        let per_panel = n_points.div_ceil(panels);
        let (ref_nodes, ref_weights) = gauss_legendre(per_panel);
        let width = (hi - lo) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * per_panel);
        let mut weights = Vec::with_capacity(panels * per_panel);
        for p in 0..panels {
            let a = lo + width * p as f64;
            let mid = a + 0.5 * width;
            let half = 0.5 * width;
            for (&x, &w) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
        Integrator { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature sum of `f` against these nodes and weights.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// found by Newton iteration on the Legendre polynomial `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Nodes come in +/- pairs; solve the upper half and mirror.
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, accurate enough for Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    if n == 1 {
        return (x, 1.0);
    }
    let d = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SupportGrid;

    #[test]
    fn gauss_legendre_five_matches_reference() {
        let (nodes, weights) = gauss_legendre(5);
        // Classical five-point rule values.
        let expected_nodes = [
            -0.906179845938664,
            -0.538469310105683,
            0.0,
            0.538469310105683,
            0.906179845938664,
        ];
        let expected_weights = [
            0.236926885056189,
            0.478628670499366,
            0.568888888888889,
            0.478628670499366,
            0.236926885056189,
        ];
        for i in 0..5 {
            assert!((nodes[i] - expected_nodes[i]).abs() < 1e-12, "node {i}");
            assert!((weights[i] - expected_weights[i]).abs() < 1e-12, "weight {i}");
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // An n-point rule is exact through degree 2n - 1.
        let (nodes, weights) = gauss_legendre(8);
        for degree in 0..=15u32 {
            let got: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(&x, &w)| w * x.powi(degree as i32))
                .sum();
            let exact = if degree % 2 == 1 { 0.0 } else { 2.0 / (degree as f64 + 1.0) };
            assert!((got - exact).abs() < 1e-13, "degree {degree}: {got} vs {exact}");
        }
    }

    #[test]
    fn gaussian_rule_captures_the_mass() {
        let d = Density::Gaussian { variance: 3.0 };
        let integ =
            Integrator::for_densities(&QuadratureSpec { n_points: 129 }, &[&d]).unwrap();
        assert!(integ.len() >= 129);
        let mass = integ.integrate(|x| d.eval(x));
        assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        let second = integ.integrate(|x| x * x * d.eval(x));
        assert!((second - 3.0).abs() < 1e-8, "second moment {second}");
    }

    #[test]
    fn discrete_rule_is_an_exact_sum() {
        let d = Density::Discrete { support: vec![0.0, 1.0, 2.0], probs: vec![0.2, 0.5, 0.3] };
        let integ = Integrator::for_densities(&QuadratureSpec::default(), &[&d]).unwrap();
        assert_eq!(integ.nodes, vec![0.0, 1.0, 2.0]);
        assert_eq!(integ.weights, vec![1.0, 1.0, 1.0]);
        let mean = integ.integrate(|x| x * d.eval(x));
        assert!((mean - 1.1).abs() < 1e-15);
    }

    #[test]
    fn tabulated_rule_uses_trapezoid_weights() {
        let n = 17;
        let grid = SupportGrid { lo: 0.0, hi: 1.0, n };
        let d = Density::Tabulated { grid, values: vec![1.0; n] };
        let integ = Integrator::for_densities(&QuadratureSpec::default(), &[&d]).unwrap();
        assert_eq!(integ.len(), n);
        let mass = integ.integrate(|x| d.eval(x));
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn panel_count_scales_with_the_spread_ratio() {
        // A spike four orders of magnitude narrower than the widest member
        // forces a finer rule than requested; both densities still carry
        // unit mass under the shared rule.
        let narrow = Density::Gaussian { variance: 0.01 };
        let wide = Density::Gaussian { variance: 100.0 };
        let spec = QuadratureSpec { n_points: 65 };
        let integ = Integrator::for_densities(&spec, &[&narrow, &wide]).unwrap();
        assert!(integ.len() > 65, "rule was not refined: {}", integ.len());
        for d in [&narrow, &wide] {
            let mass = integ.integrate(|x| d.eval(x));
            assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
        }
        // Comparable scales keep the requested size.
        let near = Density::Gaussian { variance: 1.0 };
        let far = Density::Gaussian { variance: 4.0 };
        assert!(Integrator::for_densities(&spec, &[&near, &far]).is_ok());
    }

    #[test]
    fn truncated_rule_is_rejected() {
        // Beyond the panel-count cap the shared rule cannot resolve the
        // spike; the build-time mass check reports it instead of silently
        // losing probability.
        let spike = Density::Gaussian { variance: 1e-8 };
        let sprawl = Density::Gaussian { variance: 1e8 };
        assert!(matches!(
            Integrator::for_densities(&QuadratureSpec::default(), &[&spike, &sprawl]),
            Err(DpError::QuadratureMass { .. })
        ));
    }
}
