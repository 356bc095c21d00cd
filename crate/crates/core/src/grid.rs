//! Tensor grid on a rectangle with homogeneous Dirichlet boundary,
//! plus the trapezoidal quadrature weights shared by every integral in the
//! crate.
//!
//! Fields are stored at *all* nodes (boundary included) so that space-time
//! integrals of data that does not vanish on the boundary (running costs,
//! controls) use the honest trapezoidal rule; states and adjoints carry
//! zeros on the boundary and the elliptic operator acts on packed interior
//! vectors only.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    /// Spatial dimension, 1 or 2.
    pub dim: usize,
    /// Nodes per axis (including both boundary nodes).
    pub counts: Vec<usize>,
    /// Mesh spacing per axis.
    pub spacing: Vec<f64>,
    /// Domain extent per axis.
    pub extent: Vec<f64>,
    /// Number of time steps on the unit interval; levels run 0..=n_time.
    pub n_time: usize,
    /// Trapezoidal quadrature weight per node (tensor product).
    pub weights: Vec<f64>,
    /// Packed index of each interior node, in node order.
    pub interior: Vec<usize>,
    /// For each node: Some(packed interior index) or None on the boundary.
    pub interior_index: Vec<Option<usize>>,
}

impl Grid {
    /// Total number of spatial nodes.
    pub fn n_nodes(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// Time step on the unit interval.
    pub fn dt(&self) -> f64 {
        1.0 / self.n_time as f64
    }

    /// Number of stored time levels (0..=n_time).
    pub fn n_levels(&self) -> usize {
        self.n_time + 1
    }

    /// Unit-interval coordinate of time level `k`.
    pub fn s_level(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Trapezoidal weight of time level `k` on the unit interval.
    pub fn time_weight(&self, k: usize) -> f64 {
        let dt = self.dt();
        if k == 0 || k == self.n_time {
            0.5 * dt
        } else {
            dt
        }
    }

    /// Coordinates of node `idx`.
    pub fn node_coord(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [idx as f64 * self.spacing[0], 0.0],
            _ => {
                let nx = self.counts[0];
                let i = idx % nx;
                let j = idx / nx;
                [i as f64 * self.spacing[0], j as f64 * self.spacing[1]]
            }
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.interior_index[idx].is_none()
    }

    /// `∫_Ω f dx` by the grid's trapezoidal rule, `f` given nodally.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n_nodes());
        f.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Measure of the domain under the quadrature (equals the exact |Ω|).
    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Packs a full nodal field into an interior vector.
    pub fn pack(&self, full: &[f64], packed: &mut [f64]) {
        for (p, &idx) in packed.iter_mut().zip(&self.interior) {
            *p = full[idx];
        }
    }

    /// Scatters an interior vector into a full nodal field, zero boundary.
    pub fn scatter(&self, packed: &[f64], full: &mut [f64]) {
        full.fill(0.0);
        for (p, &idx) in packed.iter().zip(&self.interior) {
            full[idx] = *p;
        }
    }
}

/// Builds a uniform tensor grid.
///
/// `resolution` is the per-axis node count (≥ 3 so at least one interior
/// node exists); `n_time ≥ 2` steps discretize the unit time interval.
pub fn build_grid(extent: &[f64], resolution: &[usize], n_time: usize) -> Result<Grid> {
    let dim = extent.len();
    if dim == 0 || dim > 2 {
        return Err(Error::InvalidParameter(format!(
            "spatial_dim must be 1 or 2, got {dim}"
        )));
    }
    if resolution.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "resolution has {} entries for a {dim}-d domain",
            resolution.len()
        )));
    }
    for (&n, &ext) in resolution.iter().zip(extent) {
        if n < 3 {
            return Err(Error::GridTooSmall(format!(
                "need at least 3 nodes per axis, got {n}"
            )));
        }
        if ext <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "domain extent must be positive, got {ext}"
            )));
        }
    }
    if n_time < 2 {
        return Err(Error::GridTooSmall(format!(
            "need at least 2 time steps, got {n_time}"
        )));
    }

    let spacing: Vec<f64> = extent
        .iter()
        .zip(resolution)
        .map(|(ext, &n)| ext / (n - 1) as f64)
        .collect();

    let axis_weight = |n: usize, h: f64, i: usize| -> f64 {
        if i == 0 || i == n - 1 {
            0.5 * h
        } else {
            h
        }
    };

    let n_nodes: usize = resolution.iter().product();
    let mut weights = vec![0.0; n_nodes];
    let mut interior = Vec::new();
    let mut interior_index = vec![None; n_nodes];

    match dim {
        1 => {
            let n = resolution[0];
            for i in 0..n {
                weights[i] = axis_weight(n, spacing[0], i);
                if i > 0 && i < n - 1 {
                    interior_index[i] = Some(interior.len());
                    interior.push(i);
                }
            }
        }
        _ => {
            let (nx, ny) = (resolution[0], resolution[1]);
            for j in 0..ny {
                for i in 0..nx {
                    let idx = j * nx + i;
                    weights[idx] =
                        axis_weight(nx, spacing[0], i) * axis_weight(ny, spacing[1], j);
                    if i > 0 && i < nx - 1 && j > 0 && j < ny - 1 {
                        interior_index[idx] = Some(interior.len());
                        interior.push(idx);
                    }
                }
            }
        }
    }

    Ok(Grid {
        dim,
        counts: resolution.to_vec(),
        spacing,
        extent: extent.to_vec(),
        n_time,
        weights,
        interior,
        interior_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_d_five_nodes() {
        let g = build_grid(&[1.0], &[5], 10).unwrap();
        assert!((g.spacing[0] - 0.25).abs() < 1e-15);
        assert_eq!(g.n_interior(), 3);
        assert!((g.dt() - 0.1).abs() < 1e-15);
        assert!((g.volume() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_d_interior_count() {
        let g = build_grid(&[1.0, 1.0], &[5, 5], 4).unwrap();
        assert_eq!(g.n_interior(), 9);
        assert!((g.volume() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(build_grid(&[1.0], &[2], 10).is_err());
        assert!(build_grid(&[1.0], &[5], 1).is_err());
        assert!(build_grid(&[-1.0], &[5], 4).is_err());
    }

    #[test]
    fn pack_scatter_roundtrip() {
        let g = build_grid(&[1.0], &[6], 4).unwrap();
        let full: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let mut packed = vec![0.0; g.n_interior()];
        g.pack(&full, &mut packed);
        assert_eq!(packed, vec![1.0, 2.0, 3.0, 4.0]);
        let mut back = vec![9.0; 6];
        g.scatter(&packed, &mut back);
        assert_eq!(back, vec![0.0, 1.0, 2.0, 3.0, 4.0, 0.0]);
    }
}
