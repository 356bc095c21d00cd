//! Space-time fields sampled on the tensor grid.

use crate::error::{Error, Result};
use crate::grid::Grid;
use serde::{Deserialize, Serialize};

/// Which time axis a field lives on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    /// The unit interval of the reduced problem.
    Unit,
    /// The physical interval [0, T].
    Physical(f64),
}

impl Horizon {
    /// Physical duration represented by the field.
    pub fn span(&self) -> f64 {
        match self {
            Horizon::Unit => 1.0,
            Horizon::Physical(t) => *t,
        }
    }
}

/// A scalar field sampled at every (time level, spatial node) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    pub n_levels: usize,
    pub n_nodes: usize,
    pub horizon: Horizon,
    data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid, horizon: Horizon) -> Self {
        SpaceTimeField {
            n_levels: grid.n_levels(),
            n_nodes: grid.n_nodes(),
            horizon,
            data: vec![0.0; grid.n_levels() * grid.n_nodes()],
        }
    }

    pub fn constant(grid: &Grid, horizon: Horizon, value: f64) -> Self {
        let mut f = Self::zeros(grid, horizon);
        f.data.fill(value);
        f
    }

    pub fn from_raw(n_levels: usize, n_nodes: usize, horizon: Horizon, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_levels * n_nodes);
        SpaceTimeField {
            n_levels,
            n_nodes,
            horizon,
            data,
        }
    }

    /// Samples `f(x, t)` at every node and level; `t` is the physical time
    /// of the level (`span * s_k`).
    pub fn from_fn(
        grid: &Grid,
        horizon: Horizon,
        f: impl Fn(&[f64], f64) -> f64,
    ) -> Self {
        let span = horizon.span();
        let mut out = Self::zeros(grid, horizon);
        for k in 0..out.n_levels {
            let t = span * grid.s_level(k);
            for i in 0..out.n_nodes {
                let x = grid.node_coord(i);
                out.data[k * out.n_nodes + i] = f(&x[..grid.dim], t);
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, level: usize, node: usize) -> f64 {
        self.data[level * self.n_nodes + node]
    }

    #[inline]
    pub fn set(&mut self, level: usize, node: usize, v: f64) {
        self.data[level * self.n_nodes + node] = v;
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_nodes..(k + 1) * self.n_nodes]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n_nodes..(k + 1) * self.n_nodes]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Weighted L2 norm over space-time: `(Σ_k wt_k Σ_i w_i f²)^{1/2}`
    /// on the field's own horizon.
    pub fn weighted_l2(&self, grid: &Grid) -> f64 {
        let span = self.horizon.span();
        let mut acc = 0.0;
        for k in 0..self.n_levels {
            let wt = grid.time_weight(k) * span;
            let lv = self.level(k);
            let mut s = 0.0;
            for (v, w) in lv.iter().zip(&grid.weights) {
                s += w * v * v;
            }
            acc += wt * s;
        }
        acc.sqrt()
    }

    /// Weighted Lp norm over space-time.
    pub fn weighted_lp(&self, grid: &Grid, p: f64) -> f64 {
        let span = self.horizon.span();
        let mut acc = 0.0;
        for k in 0..self.n_levels {
            let wt = grid.time_weight(k) * span;
            let lv = self.level(k);
            let mut s = 0.0;
            for (v, w) in lv.iter().zip(&grid.weights) {
                s += w * v.abs().powf(p);
            }
            acc += wt * s;
        }
        acc.powf(1.0 / p)
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn matches_grid(&self, grid: &Grid) -> bool {
        self.n_levels == grid.n_levels() && self.n_nodes == grid.n_nodes()
    }

    /// Elementwise `self + alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &SpaceTimeField) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn retagged(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }
}
