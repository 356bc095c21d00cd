//! Assembly of the second-order elliptic operator with homogeneous
//! Dirichlet conditions on the tensor grid.
//!
//! The operator is `A y = -Σ D_j(a_ij D_i y)` with a symmetric coefficient
//! matrix. Diffusion terms use half-point coefficient evaluation so the
//! assembled matrix stays exactly symmetric even for variable coefficients
//! (v1 ships constant coefficients; the evaluator signature is the
//! extension point). Rows exist for interior nodes only; Dirichlet values
//! are eliminated.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::SymBanded;
use serde::{Deserialize, Serialize};

/// Symmetric coefficient matrix of the elliptic operator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Coefficients {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Coefficients {
    pub fn isotropic(kappa: f64) -> Self {
        Coefficients {
            a11: kappa,
            a12: 0.0,
            a22: kappa,
        }
    }

    /// Validates a full 2x2 (or 1x1) coefficient matrix.
    pub fn new(dim: usize, a11: f64, a12: f64, a21: f64, a22: f64) -> Result<Self> {
        if a12 != a21 {
            return Err(Error::BadCoefficients);
        }
        let pd = match dim {
            1 => a11 > 0.0,
            _ => a11 > 0.0 && a11 * a22 - a12 * a12 > 0.0,
        };
        if !pd {
            return Err(Error::BadCoefficients);
        }
        Ok(Coefficients { a11, a12, a22 })
    }
}

/// The assembled operator acting on packed interior vectors.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    mat: SymBanded,
}

impl DiscreteOperator {
    pub fn matrix(&self) -> &SymBanded {
        &self.mat
    }

    pub fn n(&self) -> usize {
        self.mat.n()
    }

    /// y = A x on packed interior vectors.
    pub fn apply_packed(&self, x: &[f64], y: &mut [f64]) {
        self.mat.apply(x, y);
    }

    /// Applies A to a full nodal field that vanishes on the boundary,
    /// returning a full nodal field (zero on the boundary).
    pub fn apply_full(&self, grid: &Grid, full: &[f64]) -> Vec<f64> {
        let mut packed = vec![0.0; grid.n_interior()];
        grid.pack(full, &mut packed);
        let mut out_packed = vec![0.0; grid.n_interior()];
        self.apply_packed(&packed, &mut out_packed);
        let mut out = vec![0.0; grid.n_nodes()];
        grid.scatter(&out_packed, &mut out);
        out
    }
}

/// Assembles the operator; `coeff_at` maps a point to the local coefficient
/// matrix (constant in v1 scenarios).
pub fn assemble_operator(
    grid: &Grid,
    coeff_at: &dyn Fn([f64; 2]) -> Coefficients,
) -> Result<DiscreteOperator> {
    let n_int = grid.n_interior();
    match grid.dim {
        1 => {
            let h = grid.spacing[0];
            let mut mat = SymBanded::zeros(n_int, 1);
            for (p, &idx) in grid.interior.iter().enumerate() {
                let x = grid.node_coord(idx);
                let a_right =
                    coeff_at([x[0] + 0.5 * h, 0.0]).a11;
                let a_left = coeff_at([x[0] - 0.5 * h, 0.0]).a11;
                mat.add(p, p, (a_right + a_left) / (h * h));
                // neighbor couplings only when the neighbor is interior
                if grid.interior_index[idx + 1].is_some() {
                    mat.add(p + 1, p, -a_right / (h * h));
                }
            }
            Ok(DiscreteOperator { mat })
        }
        _ => {
            let (h1, h2) = (grid.spacing[0], grid.spacing[1]);
            let nx = grid.counts[0];
            let has_cross = grid
                .interior
                .iter()
                .any(|&idx| coeff_at(coord2(grid, idx)).a12 != 0.0);
            let bw_row = grid.counts[0] - 2; // interior row stride
            let bw = if has_cross { bw_row + 1 } else { bw_row };
            let mut mat = SymBanded::zeros(n_int, bw);
            for (p, &idx) in grid.interior.iter().enumerate() {
                let x = coord2(grid, idx);
                let c = coeff_at(x);
                let a_e = coeff_at([x[0] + 0.5 * h1, x[1]]).a11;
                let a_w = coeff_at([x[0] - 0.5 * h1, x[1]]).a11;
                let a_n = coeff_at([x[0], x[1] + 0.5 * h2]).a22;
                let a_s = coeff_at([x[0], x[1] - 0.5 * h2]).a22;
                mat.add(p, p, (a_e + a_w) / (h1 * h1) + (a_n + a_s) / (h2 * h2));

                let add_pair = |mat: &mut SymBanded, other: usize, v: f64| {
                    if other > p {
                        mat.add(other, p, v);
                    }
                };
                let east = idx + 1;
                let north = idx + nx;
                if let Some(q) = grid.interior_index[east] {
                    add_pair(&mut mat, q, -a_e / (h1 * h1));
                }
                if let Some(q) = grid.interior_index[north] {
                    add_pair(&mut mat, q, -a_n / (h2 * h2));
                }
                if has_cross {
                    // cross stencil: -2 a12 ∂xy via the 4-corner formula,
                    // averaged between the paired nodes to keep symmetry
                    let ne = idx + nx + 1;
                    let nw = idx + nx - 1;
                    if let Some(q) = grid.interior_index[ne] {
                        let a = 0.5 * (c.a12 + coeff_at(coord2(grid, ne)).a12);
                        add_pair(&mut mat, q, -a / (2.0 * h1 * h2));
                    }
                    if let Some(q) = grid.interior_index[nw] {
                        let a = 0.5 * (c.a12 + coeff_at(coord2(grid, nw)).a12);
                        add_pair(&mut mat, q, a / (2.0 * h1 * h2));
                    }
                }
            }
            Ok(DiscreteOperator { mat })
        }
    }
}

fn coord2(grid: &Grid, idx: usize) -> [f64; 2] {
    grid.node_coord(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use std::f64::consts::PI;

    #[test]
    fn one_d_laplacian_stencil_values() {
        let g = build_grid(&[1.0], &[5], 4).unwrap();
        let op = assemble_operator(&g, &|_| Coefficients::isotropic(1.0)).unwrap();
        let m = op.matrix();
        assert_eq!(m.get(0, 0), 32.0);
        assert_eq!(m.get(1, 0), -16.0);
        assert_eq!(m.get(0, 1), -16.0);
        assert_eq!(m.get(2, 0), 0.0);
    }

    #[test]
    fn rayleigh_quotient_near_pi_squared() {
        // discrete sin(pi x) on a fine grid: <Ax,x>/<x,x> within 1% of pi^2
        let g = build_grid(&[1.0], &[101], 4).unwrap();
        let op = assemble_operator(&g, &|_| Coefficients::isotropic(1.0)).unwrap();
        let x: Vec<f64> = g
            .interior
            .iter()
            .map(|&i| (PI * g.node_coord(i)[0]).sin())
            .collect();
        let mut ax = vec![0.0; x.len()];
        op.apply_packed(&x, &mut ax);
        let num: f64 = ax.iter().zip(&x).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().map(|v| v * v).sum();
        let lambda = num / den;
        assert!(
            (lambda - PI * PI).abs() / (PI * PI) < 0.01,
            "rayleigh {lambda} vs {}",
            PI * PI
        );
    }

    #[test]
    fn two_d_interior_row_sums_vanish() {
        let g = build_grid(&[1.0, 1.0], &[7, 7], 4).unwrap();
        let op = assemble_operator(&g, &|_| Coefficients::isotropic(1.0)).unwrap();
        // rows whose full 5-point neighborhood is interior
        for (p, &idx) in g.interior.iter().enumerate() {
            let x = g.node_coord(idx);
            let h = g.spacing[0];
            let inner = x[0] > 1.5 * h
                && x[0] < 1.0 - 1.5 * h
                && x[1] > 1.5 * h
                && x[1] < 1.0 - 1.5 * h;
            if inner {
                let sum: f64 = (0..op.n()).map(|q| op.matrix().get(p, q)).sum();
                assert!(sum.abs() < 1e-10, "row {p} sums to {sum}");
            }
        }
    }

    #[test]
    fn laplacian_psd_and_symmetric() {
        let g = build_grid(&[1.0], &[33], 4).unwrap();
        let op = assemble_operator(&g, &|_| Coefficients::isotropic(1.0)).unwrap();
        let dense = op.matrix().to_dense();
        let asym = (&dense - &dense.transpose()).abs().max();
        assert_eq!(asym, 0.0);
        let eig = dense.symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-12, "smallest eigenvalue {min}");
    }

    #[test]
    fn second_order_consistency() {
        // A applied to a smooth function converges at rate >= 1.9
        let f = |x: f64| (PI * x).sin() + 0.3 * (2.0 * PI * x).sin();
        let exact = |x: f64| {
            PI * PI * (PI * x).sin() + 0.3 * 4.0 * PI * PI * (2.0 * PI * x).sin()
        };
        let mut errs = Vec::new();
        for &n in &[17usize, 33, 65] {
            let g = build_grid(&[1.0], &[n], 4).unwrap();
            let op = assemble_operator(&g, &|_| Coefficients::isotropic(1.0)).unwrap();
            let x: Vec<f64> = g
                .interior
                .iter()
                .map(|&i| f(g.node_coord(i)[0]))
                .collect();
            let mut ax = vec![0.0; x.len()];
            op.apply_packed(&x, &mut ax);
            let err = g
                .interior
                .iter()
                .zip(&ax)
                .map(|(&i, a)| (a - exact(g.node_coord(i)[0])).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(order1 >= 1.9 && order2 >= 1.9, "orders {order1} {order2}");
    }

    #[test]
    fn coefficient_validation() {
        assert!(Coefficients::new(2, 1.0, 0.3, 0.3, 1.0).is_ok());
        assert!(Coefficients::new(2, 1.0, 0.3, 0.2, 1.0).is_err());
        assert!(Coefficients::new(2, 1.0, 1.5, 1.5, 1.0).is_err());
        assert!(Coefficients::new(1, -1.0, 0.0, 0.0, 0.0).is_err());
    }
}
