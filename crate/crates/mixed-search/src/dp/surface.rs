//! Value surfaces on the triangular belief simplex.
//!
//! The scanning belief `(p11, pmix)` lives on the triangle
//! `p11 >= 0, pmix >= 0, p11 + pmix <= 1`. Surfaces are stored at the nodes
//! `(i/M, j/M)` with `i + j <= M` and evaluated anywhere by barycentric
//! interpolation on the half-cell triangles, which preserves concavity
//! bounds and reproduces node values exactly.

use serde::{Deserialize, Serialize};

/// Resolution of the triangular grid: nodes at multiples of `1/m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m: usize,
}

impl GridSpec {
    pub fn node_count(&self) -> usize {
        (self.m + 1) * (self.m + 2) / 2
    }

    /// Flat index of node `(i, j)`, rows ordered by `i` then `j`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + j <= self.m);
        i * (self.m + 1) - i * i.saturating_sub(1) / 2 + j
    }

    /// Inverse of [`index`](Self::index).
    pub fn coords(&self, mut idx: usize) -> (usize, usize) {
        let mut i = 0;
        let mut row = self.m + 1;
        while idx >= row {
            idx -= row;
            row -= 1;
            i += 1;
        }
        (i, idx)
    }

    /// Belief coordinates of node `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 / self.m as f64, j as f64 / self.m as f64)
    }

    /// All nodes as `(flat index, i, j)`.
    pub fn iter_nodes(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let m = self.m;
        (0..=m)
            .flat_map(move |i| (0..=m - i).map(move |j| (i, j)))
            .enumerate()
            .map(|(k, (i, j))| (k, i, j))
    }

    /// Clamp a query point onto the simplex.
    pub fn sanitize(p11: f64, pmix: f64) -> (f64, f64) {
        let p11 = if p11.is_finite() { p11.clamp(0.0, 1.0) } else { 0.0 };
        let pmix = if pmix.is_finite() { pmix.clamp(0.0, 1.0 - p11) } else { 0.0 };
        (p11, pmix)
    }

    /// Vertices and barycentric weights of the half-cell triangle containing
    /// `(p11, pmix)`. Coordinates within `1e-9` grid units of a node snap to
    /// it, so evaluation at node coordinates reproduces stored values
    /// exactly even when `i/m * m` does not round-trip in floating point.
    pub fn locate(&self, p11: f64, pmix: f64) -> ([usize; 3], [f64; 3]) {
        let (p11, pmix) = Self::sanitize(p11, pmix);
        let m = self.m as f64;
        let snap = |t: f64| {
            let r = t.round();
            if (t - r).abs() <= 1e-9 {
                r
            } else {
                t
            }
        };
        let x = snap(p11 * m).clamp(0.0, m);
        let y = snap(pmix * m).clamp(0.0, m - x);

        let mut i = x.floor() as usize;
        let mut j = y.floor() as usize;
        if i >= self.m {
            i = self.m - 1;
        }
        if j >= self.m - i {
            j = self.m - i - 1;
        }
        let mut u = x - i as f64;
        let mut v = y - j as f64;
        if u + v > 1.0 && i + j + 2 <= self.m {
            (
                [self.index(i + 1, j + 1), self.index(i, j + 1), self.index(i + 1, j)],
                [u + v - 1.0, 1.0 - u, 1.0 - v],
            )
        } else {
            // On boundary cells (i + j == m - 1) the upper half-cell has no
            // grid vertex, yet clamping `pmix` against the rounded `1 - p11`
            // can leave `u + v` above 1 by roundoff dust. Project that dust
            // back onto the diagonal edge; interior queries are untouched so
            // their weights stay bit-identical.
            let mut w0 = 1.0 - u - v;
            if w0 < 0.0 {
                w0 = 0.0;
                let s = u + v;
                u /= s;
                v /= s;
            }
            (
                [self.index(i, j), self.index(i + 1, j), self.index(i, j + 1)],
                [w0, u, v],
            )
        }
    }
}

/// Convergence diagnostics attached to a solved surface.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMeta {
    /// Hash of the model parameters and solver settings that produced it.
    pub params_hash: String,
    /// Sweeps the value iteration ran (largest per-subproblem count where
    /// subproblems converge independently).
    pub iterations: u64,
    /// Final sup-norm residual between consecutive sweeps.
    pub residual: f64,
    /// Largest pointwise increase observed across all sweeps. The iteration
    /// is monotone non-increasing, so anything beyond roundoff here flags a
    /// solver defect.
    pub max_increase: f64,
}

/// A scalar field over the triangular grid with its solve diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSurface {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub meta: SurfaceMeta,
}

impl ValueSurface {
    /// Interpolated value at `(p11, pmix)`; queries outside the simplex
    /// clamp onto it.
    pub fn eval(&self, p11: f64, pmix: f64) -> f64 {
        let (idx, w) = self.grid.locate(p11, pmix);
        w[0] * self.values[idx[0]] + w[1] * self.values[idx[1]] + w[2] * self.values[idx[2]]
    }

    /// Value stored at node `(i, j)`.
    pub fn at_node(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_and_coords_are_inverse() {
        for m in [1usize, 2, 3, 7, 20] {
            let grid = GridSpec { m };
            let mut seen = 0;
            for (k, i, j) in grid.iter_nodes() {
                assert_eq!(grid.index(i, j), k);
                assert_eq!(grid.coords(k), (i, j));
                seen += 1;
            }
            assert_eq!(seen, grid.node_count());
            assert_eq!(grid.node_count(), (m + 1) * (m + 2) / 2);
        }
    }

    #[test]
    fn evaluation_at_nodes_reproduces_stored_values() {
        // m = 3 makes i/m inexact in binary, exercising the snap.
        let grid = GridSpec { m: 3 };
        let values: Vec<f64> = (0..grid.node_count()).map(|k| (k * k) as f64 * 0.1).collect();
        let surface = ValueSurface { grid, values: values.clone(), meta: SurfaceMeta::default() };
        for (k, i, j) in grid.iter_nodes() {
            let (p11, pmix) = grid.point(i, j);
            assert_eq!(surface.eval(p11, pmix), values[k], "node ({i}, {j})");
        }
    }

    #[test]
    fn interpolation_reproduces_affine_functions() {
        // Barycentric-linear interpolation is exact on affine surfaces.
        let grid = GridSpec { m: 7 };
        let f = |x: f64, y: f64| 0.3 + 1.7 * x - 0.9 * y;
        let values: Vec<f64> = grid
            .iter_nodes()
            .map(|(_, i, j)| {
                let (x, y) = grid.point(i, j);
                f(x, y)
            })
            .collect();
        let surface = ValueSurface { grid, values, meta: SurfaceMeta::default() };
        for &(x, y) in &[(0.01, 0.02), (0.3, 0.41), (0.55, 0.25), (0.0, 0.99), (0.62, 0.38)] {
            assert!((surface.eval(x, y) - f(x, y)).abs() < 1e-12, "at ({x}, {y})");
        }
    }

    #[test]
    fn queries_outside_the_simplex_clamp_onto_it() {
        let grid = GridSpec { m: 4 };
        let values: Vec<f64> = grid
            .iter_nodes()
            .map(|(_, i, j)| {
                let (x, y) = grid.point(i, j);
                x + y
            })
            .collect();
        let surface = ValueSurface { grid, values, meta: SurfaceMeta::default() };
        // Beyond the diagonal: clamps pmix to 1 - p11.
        assert!((surface.eval(0.5, 0.9) - 1.0).abs() < 1e-12);
        // Negative coordinates clamp to zero.
        assert!((surface.eval(-0.3, -0.3) - 0.0).abs() < 1e-12);
        assert!((surface.eval(1.5, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn barycentric_weights_are_convex() {
        let grid = GridSpec { m: 11 };
        for &(x, y) in &[(0.09, 0.33), (0.5, 0.5), (0.9999, 0.0), (0.23, 0.77), (1.0, 0.0)] {
            let (idx, w) = grid.locate(x, y);
            assert!(w.iter().all(|&wi| (-1e-12..=1.0 + 1e-12).contains(&wi)), "weights {w:?}");
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for &k in &idx {
                assert!(k < grid.node_count());
            }
        }
    }
}
