//! Implicit θ-scheme time stepping for the semilinear state equation and
//! its linearization.
//!
//! One kernel integrates on unit-interval levels with a time scale `T`;
//! the physical-horizon solve and the reduced solve of the fixed-horizon
//! problem are the same arithmetic, so the rescaling equivalence holds to
//! the last bit. The semilinear term is evaluated fully implicitly and each
//! step runs a Newton iteration on the banded step system.

use crate::error::{Error, Result};
use crate::field::{Horizon, SpaceTimeField};
use crate::grid::Grid;
use crate::linalg::SymBanded;
use crate::operator::{assemble_operator, Coefficients, DiscreteOperator};
use crate::problem::ProblemSpec;
use serde::{Deserialize, Serialize};

pub const NEWTON_TOL: f64 = 1e-11;
pub const NEWTON_MAX_ITERS: usize = 25;

/// Time discretization mode.
///
/// Backward Euler keeps the discrete maximum principle (positivity proofs);
/// Crank–Nicolson is the accuracy default. The control is sampled where the
/// scheme needs it: at the new level for backward Euler (piecewise-constant
/// on each step, so cost quadrature drops level 0), at both levels for
/// Crank–Nicolson (trapezoidal quadrature).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    BackwardEuler,
    CrankNicolson,
}

impl Scheme {
    pub fn theta(self) -> f64 {
        match self {
            Scheme::BackwardEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        }
    }

    /// Time-quadrature weight of level `k`, matched to the control
    /// convention of the scheme.
    pub fn time_weight(self, grid: &Grid, k: usize) -> f64 {
        let dt = grid.dt();
        match self {
            Scheme::BackwardEuler => {
                if k == 0 {
                    0.0
                } else {
                    dt
                }
            }
            Scheme::CrankNicolson => grid.time_weight(k),
        }
    }

    /// Whether control level `k` participates in dynamics and cost.
    pub fn level_active(self, k: usize) -> bool {
        match self {
            Scheme::BackwardEuler => k > 0,
            Scheme::CrankNicolson => true,
        }
    }
}

/// Grid, operator and scheme bundled for the solver stack.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Grid,
    pub operator: DiscreteOperator,
    pub scheme: Scheme,
}

impl Discretization {
    pub fn build(
        spec: &ProblemSpec,
        resolution: &[usize],
        n_time: usize,
        scheme: Scheme,
    ) -> Result<Self> {
        let grid = crate::grid::build_grid(&spec.domain_extent, resolution, n_time)?;
        let coeff = spec.coefficients;
        let operator = assemble_operator(&grid, &move |_x| coeff)?;
        Ok(Discretization {
            grid,
            operator,
            scheme,
        })
    }

    pub fn from_parts(grid: Grid, operator: DiscreteOperator, scheme: Scheme) -> Self {
        Discretization {
            grid,
            operator,
            scheme,
        }
    }
}

/// Re-export: assembles a standalone operator from a coefficient evaluator.
pub fn operator_from_constant(grid: &Grid, c: Coefficients) -> Result<DiscreteOperator> {
    assemble_operator(grid, &move |_| c)
}

fn nodal_initial_state(spec: &ProblemSpec, grid: &Grid) -> Vec<f64> {
    (0..grid.n_nodes())
        .map(|i| spec.y0.eval(&grid.node_coord(i)[..spec.spatial_dim]))
        .collect()
}

/// Integrates the semilinear equation
/// `dζ/ds + T(Aζ + ψ(x, T s, ζ)) = T v` on unit levels.
///
/// With `horizon = Physical(T)` callers read the result as the state on
/// `[0, T]` sampled at `t_k = T s_k`; with `Unit` it is the reduced state.
pub fn integrate_semilinear(
    spec: &ProblemSpec,
    disc: &Discretization,
    scale_t: f64,
    control: &SpaceTimeField,
    horizon: Horizon,
) -> Result<SpaceTimeField> {
    if scale_t <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "time horizon must be positive, got {scale_t}"
        )));
    }
    let grid = &disc.grid;
    if !control.matches_grid(grid) {
        return Err(Error::DimensionMismatch(
            "control field does not match the grid".into(),
        ));
    }
    let n_int = grid.n_interior();
    let dt = grid.dt();
    let theta = disc.scheme.theta();
    let c_imp = dt * scale_t * theta;
    let c_exp = dt * scale_t * (1.0 - theta);

    let mut out = SpaceTimeField::zeros(grid, horizon);
    let y0 = nodal_initial_state(spec, grid);
    out.level_mut(0).copy_from_slice(&y0);

    let mut z = vec![0.0; n_int];
    grid.pack(&y0, &mut z);

    let mut v_new = vec![0.0; n_int];
    let mut v_old = vec![0.0; n_int];
    let mut az = vec![0.0; n_int];
    let mut rhs = vec![0.0; n_int];
    let mut residual = vec![0.0; n_int];
    let mut psiy = vec![0.0; n_int];

    for k in 0..grid.n_time {
        let s_old = grid.s_level(k);
        let s_new = grid.s_level(k + 1);
        let t_old = scale_t * s_old;
        let t_new = scale_t * s_new;
        grid.pack(control.level(k), &mut v_old);
        grid.pack(control.level(k + 1), &mut v_new);

        // explicit contribution: b = z_k - c_exp (A z_k + psi_k - v_k)
        disc.operator.apply_packed(&z, &mut az);
        let mut b = vec![0.0; n_int];
        for (p, &idx) in grid.interior.iter().enumerate() {
            let x = grid.node_coord(idx);
            let psi_old = spec.psi.eval(&x[..spec.spatial_dim], t_old, z[p]);
            b[p] = z[p] - c_exp * (az[p] + psi_old - v_old[p]);
        }

        // Newton on z_{k+1}: z + c_imp (A z + psi(t_new, z) - v_new) = b
        let mut w = z.clone();
        let mut converged = false;
        let mut last_res = f64::INFINITY;
        for it in 0..NEWTON_MAX_ITERS {
            disc.operator.apply_packed(&w, &mut az);
            let mut sup = 0.0f64;
            for (p, &idx) in grid.interior.iter().enumerate() {
                let x = grid.node_coord(idx);
                let psi_new = spec.psi.eval(&x[..spec.spatial_dim], t_new, w[p]);
                residual[p] = w[p] + c_imp * (az[p] + psi_new - v_new[p]) - b[p];
                sup = sup.max(residual[p].abs());
                psiy[p] = spec.psi.d_y(&x[..spec.spatial_dim], t_new, w[p]);
            }
            if !sup.is_finite() {
                return Err(Error::NonFinite(format!("state solve at step {}", k + 1)));
            }
            last_res = sup;
            if sup <= NEWTON_TOL {
                converged = true;
                break;
            }
            let _ = it;
            // J = I + c_imp (A + diag psi_y)
            let diag: Vec<f64> = psiy.iter().map(|p| 1.0 + c_imp * p).collect();
            let jac: SymBanded = disc
                .operator
                .matrix()
                .scaled_plus_diag(c_imp, &diag);
            let chol = jac.cholesky().map_err(|e| match e {
                Error::SingularStep { pivot, .. } => Error::SingularStep {
                    level: k + 1,
                    pivot,
                },
                other => other,
            })?;
            for p in 0..n_int {
                rhs[p] = -residual[p];
            }
            chol.solve_in_place(&mut rhs);
            for p in 0..n_int {
                w[p] += rhs[p];
            }
        }
        if !converged {
            return Err(Error::NewtonDiverged {
                step: k + 1,
                residual: last_res,
                iters: NEWTON_MAX_ITERS,
            });
        }
        z.copy_from_slice(&w);
        grid.scatter(&z, out.level_mut(k + 1));
    }
    out.check_finite("state trajectory")?;
    Ok(out)
}

/// Solves the state equation on the physical horizon `[0, T]`.
pub fn solve_state(
    spec: &ProblemSpec,
    disc: &Discretization,
    t_horizon: f64,
    control: &SpaceTimeField,
) -> Result<SpaceTimeField> {
    integrate_semilinear(spec, disc, t_horizon, control, Horizon::Physical(t_horizon))
}

/// Solves the linear equation `dδ/ds + T(Aδ + c δ) = T · rhs` on unit
/// levels with the same θ-scheme (one banded solve per step, no Newton).
///
/// `coeff` holds the zeroth-order coefficient at every level (typically
/// `ψ_y` along a base trajectory) and `rhs` the right-hand side.
pub fn solve_linearized(
    disc: &Discretization,
    scale_t: f64,
    coeff: &SpaceTimeField,
    rhs: &SpaceTimeField,
    init: &[f64],
    horizon: Horizon,
) -> Result<SpaceTimeField> {
    let grid = &disc.grid;
    if !coeff.matches_grid(grid) || !rhs.matches_grid(grid) {
        return Err(Error::DimensionMismatch(
            "coefficient or rhs field does not match the grid".into(),
        ));
    }
    if init.len() != grid.n_nodes() {
        return Err(Error::DimensionMismatch(
            "initial field does not match the grid".into(),
        ));
    }
    let n_int = grid.n_interior();
    let dt = grid.dt();
    let theta = disc.scheme.theta();
    let c_imp = dt * scale_t * theta;
    let c_exp = dt * scale_t * (1.0 - theta);

    let mut out = SpaceTimeField::zeros(grid, horizon);
    out.level_mut(0).copy_from_slice(init);

    let mut z = vec![0.0; n_int];
    grid.pack(init, &mut z);
    let mut az = vec![0.0; n_int];
    let mut c_old = vec![0.0; n_int];
    let mut c_new = vec![0.0; n_int];
    let mut r_old = vec![0.0; n_int];
    let mut r_new = vec![0.0; n_int];

    for k in 0..grid.n_time {
        grid.pack(coeff.level(k), &mut c_old);
        grid.pack(coeff.level(k + 1), &mut c_new);
        grid.pack(rhs.level(k), &mut r_old);
        grid.pack(rhs.level(k + 1), &mut r_new);

        disc.operator.apply_packed(&z, &mut az);
        let mut b = vec![0.0; n_int];
        for p in 0..n_int {
            b[p] = z[p] - c_exp * (az[p] + c_old[p] * z[p] - r_old[p]) + c_imp * r_new[p];
        }
        // (I + c_imp (A + diag c_new)) z_{k+1} = b
        let diag: Vec<f64> = c_new.iter().map(|c| 1.0 + c_imp * c).collect();
        let m = disc.operator.matrix().scaled_plus_diag(c_imp, &diag);
        let chol = m.cholesky().map_err(|e| match e {
            Error::SingularStep { pivot, .. } => Error::SingularStep { level: k + 1, pivot },
            other => other,
        })?;
        chol.solve_in_place(&mut b);
        z.copy_from_slice(&b);
        grid.scatter(&z, out.level_mut(k + 1));
    }
    out.check_finite("linearized trajectory")?;
    Ok(out)
}

/// Stability telemetry from the key a-priori estimate: the ratio
/// `‖y‖_∞ / (‖u‖_p + ‖y₀‖_∞ + ‖ψ(·,·,0)‖_p + ε)`.
pub fn sup_norm_bound_check(
    spec: &ProblemSpec,
    grid: &Grid,
    state: &SpaceTimeField,
    control: &SpaceTimeField,
    p: f64,
) -> f64 {
    let y0_sup = (0..grid.n_nodes())
        .map(|i| spec.y0.eval(&grid.node_coord(i)[..spec.spatial_dim]).abs())
        .fold(0.0f64, f64::max);
    let psi0 = SpaceTimeField::from_fn(grid, state.horizon, |x, t| spec.psi.eval(x, t, 0.0));
    let denom = control.weighted_lp(grid, p) + y0_sup + psi0.weighted_lp(grid, p) + f64::EPSILON;
    state.sup_norm() / denom
}

/// Applies one linearized forward step `z_{k+1} = M₊⁻¹ M₋ z_k` on packed
/// interior vectors (no sources); used by the transpose audit.
pub fn linear_forward_step(
    disc: &Discretization,
    scale_t: f64,
    c_old: &[f64],
    c_new: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    let dt = disc.grid.dt();
    let theta = disc.scheme.theta();
    let c_imp = dt * scale_t * theta;
    let c_exp = dt * scale_t * (1.0 - theta);
    let n = z.len();
    let mut az = vec![0.0; n];
    disc.operator.apply_packed(z, &mut az);
    let mut b = vec![0.0; n];
    for p in 0..n {
        b[p] = z[p] - c_exp * (az[p] + c_old[p] * z[p]);
    }
    let diag: Vec<f64> = c_new.iter().map(|c| 1.0 + c_imp * c).collect();
    let m = disc.operator.matrix().scaled_plus_diag(c_imp, &diag);
    m.cholesky()?.solve_in_place(&mut b);
    Ok(b)
}

/// Applies the exact transpose of [`linear_forward_step`]:
/// `w_k = M₋ᵀ M₊⁻ᵀ w_{k+1}` (all matrices symmetric).
pub fn linear_adjoint_step(
    disc: &Discretization,
    scale_t: f64,
    c_old: &[f64],
    c_new: &[f64],
    w: &[f64],
) -> Result<Vec<f64>> {
    let dt = disc.grid.dt();
    let theta = disc.scheme.theta();
    let c_imp = dt * scale_t * theta;
    let c_exp = dt * scale_t * (1.0 - theta);
    let n = w.len();
    let diag: Vec<f64> = c_new.iter().map(|c| 1.0 + c_imp * c).collect();
    let m = disc.operator.matrix().scaled_plus_diag(c_imp, &diag);
    let mut tmp = w.to_vec();
    m.cholesky()?.solve_in_place(&mut tmp);
    let mut atmp = vec![0.0; n];
    disc.operator.apply_packed(&tmp, &mut atmp);
    let mut out = vec![0.0; n];
    for p in 0..n {
        out[p] = tmp[p] - c_exp * (atmp[p] + c_old[p] * tmp[p]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{build_problem, CatalogEntry};
    use std::f64::consts::PI;

    fn lin_spec(psi: CatalogEntry, y0: CatalogEntry) -> ProblemSpec {
        build_problem(
            &[
                psi,
                CatalogEntry::CostTrackingQuadratic {
                    q: 0.0,
                    beta: 1.0,
                    c0: 0.0,
                    t_lin: 0.0,
                    target_amp: 0.0,
                    target_decay: 0.0,
                },
                CatalogEntry::GIdentity,
                y0,
                CatalogEntry::OpLaplacian { kappa: 1.0 },
            ],
            1,
            &[1.0],
            (-5.0, 5.0),
            (0.5, 2.0),
        )
        .unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let spec = lin_spec(CatalogEntry::PsiZero, CatalogEntry::Y0Zero);
        let disc = Discretization::build(&spec, &[9], 8, Scheme::CrankNicolson).unwrap();
        let u = SpaceTimeField::zeros(&disc.grid, Horizon::Physical(1.0));
        let y = solve_state(&spec, &disc, 1.0, &u).unwrap();
        assert_eq!(y.sup_norm(), 0.0);
    }

    #[test]
    fn heat_eigenfunction_decay_converges() {
        // y0 = sin(pi x), psi = 0, u = 0: y = exp(-pi^2 t) sin(pi x)
        let spec = lin_spec(CatalogEntry::PsiZero, CatalogEntry::Y0Sine { amp: 1.0 });
        let t_end = 0.25;
        let mut errs = Vec::new();
        for &(n, nt) in &[(17usize, 16usize), (33, 32), (65, 64)] {
            let disc = Discretization::build(&spec, &[n], nt, Scheme::CrankNicolson).unwrap();
            let u = SpaceTimeField::zeros(&disc.grid, Horizon::Physical(t_end));
            let y = solve_state(&spec, &disc, t_end, &u).unwrap();
            let mut err = 0.0f64;
            for k in 0..=nt {
                let t = t_end * disc.grid.s_level(k);
                for i in 0..disc.grid.n_nodes() {
                    let x = disc.grid.node_coord(i)[0];
                    let exact = (-PI * PI * t).exp() * (PI * x).sin();
                    err = err.max((y.get(k, i) - exact).abs());
                }
            }
            errs.push(err);
        }
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        assert!(o1 > 1.9 && o2 > 1.9, "orders {o1} {o2}, errs {errs:?}");
    }

    #[test]
    fn backward_euler_positivity() {
        // psi(0)=0, psi_y >= 0, u >= 0, y0 >= 0 -> y >= 0 nodewise
        let spec = lin_spec(CatalogEntry::PsiCubic { c: 1.0 }, CatalogEntry::Y0Sine { amp: 1.0 });
        let disc = Discretization::build(&spec, &[21], 12, Scheme::BackwardEuler).unwrap();
        let u = SpaceTimeField::from_fn(&disc.grid, Horizon::Physical(0.8), |x, _| {
            (PI * x[0]).sin().max(0.0)
        });
        let y = solve_state(&spec, &disc, 0.8, &u).unwrap();
        let min = y.data().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-10, "min state value {min}");
    }

    #[test]
    fn linearized_matches_eigen_decay() {
        // c = 1, A = -d_xx, init sin(pi x): decay exp(-(pi^2+1) t)
        let spec = lin_spec(CatalogEntry::PsiZero, CatalogEntry::Y0Zero);
        let t_end = 0.2;
        let mut errs = Vec::new();
        for &(n, nt) in &[(21usize, 20usize), (41, 40)] {
            let disc = Discretization::build(&spec, &[n], nt, Scheme::CrankNicolson).unwrap();
            let ones = SpaceTimeField::constant(&disc.grid, Horizon::Physical(t_end), 1.0);
            let rhs = SpaceTimeField::zeros(&disc.grid, Horizon::Physical(t_end));
            let init: Vec<f64> = (0..disc.grid.n_nodes())
                .map(|i| (PI * disc.grid.node_coord(i)[0]).sin())
                .collect();
            let y = solve_linearized(&disc, t_end, &ones, &rhs, &init, Horizon::Physical(t_end))
                .unwrap();
            let mut err = 0.0f64;
            for k in 0..=nt {
                let t = t_end * disc.grid.s_level(k);
                for i in 0..disc.grid.n_nodes() {
                    let x = disc.grid.node_coord(i)[0];
                    let exact = (-(PI * PI + 1.0) * t).exp() * (PI * x).sin();
                    err = err.max((y.get(k, i) - exact).abs());
                }
            }
            errs.push(err);
        }
        assert!(
            errs[1] < 0.3 * errs[0],
            "no refinement improvement: {errs:?}"
        );
    }

    #[test]
    fn per_step_transpose_identity() {
        use rand::Rng;
        use rand::SeedableRng;
        let spec = lin_spec(CatalogEntry::PsiCubic { c: 0.7 }, CatalogEntry::Y0Zero);
        for scheme in [Scheme::BackwardEuler, Scheme::CrankNicolson] {
            let disc = Discretization::build(&spec, &[13], 6, scheme).unwrap();
            let n = disc.grid.n_interior();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
            let c_old: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            let c_new: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fx = linear_forward_step(&disc, 1.7, &c_old, &c_new, &x).unwrap();
            let by = linear_adjoint_step(&disc, 1.7, &c_old, &c_new, &y).unwrap();
            let lhs: f64 = fx.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&by).map(|(a, b)| a * b).sum();
            let scale = lhs.abs().max(rhs.abs()).max(1e-30);
            assert!(
                (lhs - rhs).abs() / scale < 1e-13,
                "{scheme:?}: <Fx,y>={lhs} <x,F*y>={rhs}"
            );
        }
    }

    #[test]
    fn sup_norm_ratio_is_linear_in_alpha() {
        let spec = lin_spec(CatalogEntry::PsiZero, CatalogEntry::Y0Zero);
        let disc = Discretization::build(&spec, &[17], 10, Scheme::CrankNicolson).unwrap();
        let mut ratios = Vec::new();
        for &alpha in &[1.0, 2.0, 4.0] {
            let u = SpaceTimeField::from_fn(&disc.grid, Horizon::Physical(0.5), |x, _| {
                alpha * (PI * x[0]).sin()
            });
            let y = solve_state(&spec, &disc, 0.5, &u).unwrap();
            ratios.push(sup_norm_bound_check(&spec, &disc.grid, &y, &u, 2.0));
        }
        assert!((ratios[0] - ratios[1]).abs() < 1e-10, "{ratios:?}");
        assert!((ratios[1] - ratios[2]).abs() < 1e-10, "{ratios:?}");
    }
}
