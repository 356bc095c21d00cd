//! Second-order machinery: the quadratic form of the Lagrangian, critical
//! cone sampling, the Legendre–Clebsch margin and the verdict report.
//!
//! Cone verification is randomized sampling with projection, not an
//! eigenvalue analysis: the report presents evidence for the second-order
//! conditions, never a proof.

use crate::error::{Error, Result};
use crate::field::{Horizon, SpaceTimeField};
use crate::optimality::{classify_activity, grad_lagrangian, Activity, MultiplierSet};
use crate::problem::ProblemSpec;
use crate::reduction::ControlPoint;
use crate::state::{solve_linearized, Discretization};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DIR_TOL: f64 = 1e-9;
pub const SOC_TOL: f64 = 1e-8;
pub const DEFAULT_SAMPLES: usize = 500;
pub const DEFAULT_SEED: u64 = 42;

/// Feasibility residuals of one sampled direction against the linearized
/// cone conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionResiduals {
    /// Positive part of the linearized objective descent condition.
    pub objective: f64,
    /// Sup-norm residual of the linearized state equation.
    pub linearized_state: f64,
    /// Worst positive part over active terminal constraints.
    pub terminal: f64,
    /// Worst one-sided violation of the linearized mixed constraint.
    pub cone: f64,
}

impl DirectionResiduals {
    pub fn max(&self) -> f64 {
        self.objective
            .max(self.linearized_state)
            .max(self.terminal)
            .max(self.cone)
    }
}

/// A critical direction (T-component, state response, control direction);
/// the time reparameterization component is ξ(s) = T·s by construction.
#[derive(Debug, Clone)]
pub struct CriticalDirection {
    pub d_horizon: f64,
    pub state: SpaceTimeField,
    pub control: SpaceTimeField,
    pub residuals: DirectionResiduals,
}

/// Solves the linearized state equation of the cone (discrete derivative
/// of the forward scheme along the direction), starting from zero.
pub fn linearized_state_direction(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    d_horizon: f64,
    control_dir: &SpaceTimeField,
) -> Result<SpaceTimeField> {
    let grid = &disc.grid;
    let t_hor = cp.t_horizon;
    // coefficient field psi_y along the base trajectory
    let mut coeff = SpaceTimeField::zeros(grid, Horizon::Unit);
    for k in 0..grid.n_levels() {
        let t = t_hor * grid.s_level(k);
        let sl = state.level(k);
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            coeff.set(k, i, spec.psi.d_y(&x[..spec.spatial_dim], t, sl[i]));
        }
    }
    // rhs: dv - dT*psi_t*s - (dT/T) (A zeta + psi - v)
    let mut rhs = SpaceTimeField::zeros(grid, Horizon::Unit);
    for k in 0..grid.n_levels() {
        let s = grid.s_level(k);
        let t = t_hor * s;
        let sl = state.level(k);
        let cl = cp.v.level(k);
        let dl = control_dir.level(k);
        let a_state = disc.operator.apply_full(grid, sl);
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            let xs = &x[..spec.spatial_dim];
            let f = a_state[i] + spec.psi.eval(xs, t, sl[i]) - cl[i];
            let v = dl[i] - d_horizon * spec.psi.d_t(xs, t, sl[i]) * s - (d_horizon / t_hor) * f;
            rhs.set(k, i, v);
        }
    }
    let init = vec![0.0; grid.n_nodes()];
    solve_linearized(disc, t_hor, &coeff, &rhs, &init, Horizon::Unit)
}

/// Residual of the discrete linearized state equation for a direction.
fn linearized_residual(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    d: &CriticalDirection,
) -> f64 {
    let grid = &disc.grid;
    let t_hor = cp.t_horizon;
    let dt = grid.dt();
    let theta = disc.scheme.theta();
    let n_int = grid.n_interior();
    let eval_g = |k: usize, out: &mut Vec<f64>| {
        // dF at level k: (A + psi_y) zeta_d + psi_t * dT s - dv, plus
        // (dT/T)(A zeta + psi - v) from the T-linearization
        let s = grid.s_level(k);
        let t = t_hor * s;
        let sl = state.level(k);
        let cl = cp.v.level(k);
        let zl = d.state.level(k);
        let dl = d.control.level(k);
        let a_state = disc.operator.apply_full(grid, sl);
        let a_dir = disc.operator.apply_full(grid, zl);
        out.clear();
        for &idx in &grid.interior {
            let x = grid.node_coord(idx);
            let xs = &x[..spec.spatial_dim];
            let f = a_state[idx] + spec.psi.eval(xs, t, sl[idx]) - cl[idx];
            let df = a_dir[idx]
                + spec.psi.d_y(xs, t, sl[idx]) * zl[idx]
                + spec.psi.d_t(xs, t, sl[idx]) * d.d_horizon * s
                - dl[idx];
            out.push(t_hor * df + d.d_horizon * f);
        }
    };
    let mut worst = 0.0f64;
    let mut g_old = Vec::with_capacity(n_int);
    let mut g_new = Vec::with_capacity(n_int);
    eval_g(0, &mut g_old);
    for k in 0..grid.n_time {
        eval_g(k + 1, &mut g_new);
        let zl_old = d.state.level(k);
        let zl_new = d.state.level(k + 1);
        for (p, &idx) in grid.interior.iter().enumerate() {
            let r = (zl_new[idx] - zl_old[idx]) / dt
                + theta * g_new[p]
                + (1.0 - theta) * g_old[p];
            worst = worst.max(r.abs());
        }
        std::mem::swap(&mut g_old, &mut g_new);
    }
    worst
}

/// The full second-order quadratic form of the Lagrangian on a direction.
pub fn quadratic_form(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    mult: &MultiplierSet,
    d: &CriticalDirection,
) -> f64 {
    let grid = &disc.grid;
    let t_hor = cp.t_horizon;
    let lambda = mult.lambda;
    let terminal_state = state.level(grid.n_time);
    let terminal_dir = d.state.level(grid.n_time);
    let dt_comp = d.d_horizon;

    // terminal blocks
    let mut acc = lambda
        * (spec.terminal_cost.d_tt(t_hor, terminal_state, grid) * dt_comp * dt_comp
            + 2.0 * spec.terminal_cost.mixed_tz(t_hor, terminal_dir, grid) * dt_comp
            + spec
                .terminal_cost
                .state_quadratic(t_hor, terminal_dir, grid));
    for (m, tf) in mult.mu.iter().zip(&spec.terminal_constraints) {
        acc += m
            * (tf.d_tt(t_hor, terminal_state, grid) * dt_comp * dt_comp
                + 2.0 * tf.mixed_tz(t_hor, terminal_dir, grid) * dt_comp
                + tf.state_quadratic(t_hor, terminal_dir, grid));
    }

    for k in 0..grid.n_levels() {
        let wt = disc.scheme.time_weight(&disc.grid, k);
        if wt == 0.0 {
            continue;
        }
        let s = grid.s_level(k);
        let t = t_hor * s;
        let xi = dt_comp * s;
        let sl = state.level(k);
        let cl = cp.v.level(k);
        let zl = d.state.level(k);
        let dl = d.control.level(k);
        let pl = mult.adjoint.level(k);
        let el = mult.e_field.level(k);
        let a_dir = disc.operator.apply_full(grid, zl);
        let mut lvl = 0.0;
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            let xs = &x[..spec.spatial_dim];
            let (y, u, z, v) = (sl[i], cl[i], zl[i], dl[i]);
            let c = &spec.cost;
            // running-cost second-derivative block, T_* weighted
            let mut term = lambda
                * t_hor
                * (c.d_tt(xs, t, y, u) * xi * xi
                    + 2.0 * c.d_ty(xs, t, y, u) * xi * z
                    + 2.0 * c.d_tu(xs, t, y, u) * xi * v
                    + c.d_yy(xs, t, y, u) * z * z
                    + c.d_uu(xs, t, y, u) * v * v
                    + 2.0 * c.d_yu(xs, t, y, u) * z * v);
            // first-order cross block with the direction's T-component
            term += 2.0
                * lambda
                * dt_comp
                * (c.d_t(xs, t, y, u) * xi + c.d_y(xs, t, y, u) * z + c.d_u(xs, t, y, u) * v);
            // adjoint-weighted semilinear block
            if pl[i] != 0.0 {
                let p = &spec.psi;
                term += pl[i]
                    * (t_hor
                        * (p.d_tt(xs, t, y) * xi * xi
                            + 2.0 * p.d_ty(xs, t, y) * xi * z
                            + p.d_yy(xs, t, y) * z * z)
                        + 2.0
                            * dt_comp
                            * (a_dir[i] + p.d_t(xs, t, y) * xi + p.d_y(xs, t, y) * z - v));
            }
            // mixed-constraint multiplier block
            if el[i] != 0.0 {
                let g = &spec.g;
                term += el[i]
                    * (g.d_tt(xs, t, y, u) * xi * xi
                        + g.d_yy(xs, t, y, u) * z * z
                        + g.d_uu(xs, t, y, u) * v * v
                        + 2.0 * g.d_ty(xs, t, y, u) * xi * z
                        + 2.0 * g.d_tu(xs, t, y, u) * xi * v
                        + 2.0 * g.d_yu(xs, t, y, u) * z * v);
            }
            lvl += grid.weights[i] * term;
        }
        acc += wt * lvl;
    }
    acc
}

/// The same form assembled in physical coordinates on [0, T*] with the
/// transported multipliers; used by the transport-consistency audit.
pub fn quadratic_form_physical(
    spec: &ProblemSpec,
    disc: &Discretization,
    t_hor: f64,
    state: &SpaceTimeField,
    control: &SpaceTimeField,
    mult_phys: &MultiplierSet,
    d_horizon: f64,
    state_dir: &SpaceTimeField,
    control_dir: &SpaceTimeField,
) -> f64 {
    let grid = &disc.grid;
    let lambda = mult_phys.lambda;
    let terminal_state = state.level(grid.n_time);
    let terminal_dir = state_dir.level(grid.n_time);

    let mut acc = lambda
        * (spec.terminal_cost.d_tt(t_hor, terminal_state, grid) * d_horizon * d_horizon
            + 2.0 * spec.terminal_cost.mixed_tz(t_hor, terminal_dir, grid) * d_horizon
            + spec
                .terminal_cost
                .state_quadratic(t_hor, terminal_dir, grid));
    for (m, tf) in mult_phys.mu.iter().zip(&spec.terminal_constraints) {
        acc += m
            * (tf.d_tt(t_hor, terminal_state, grid) * d_horizon * d_horizon
                + 2.0 * tf.mixed_tz(t_hor, terminal_dir, grid) * d_horizon
                + tf.state_quadratic(t_hor, terminal_dir, grid));
    }

    for k in 0..grid.n_levels() {
        let wt = disc.scheme.time_weight(&disc.grid, k) * t_hor;
        if wt == 0.0 {
            continue;
        }
        let t = t_hor * grid.s_level(k);
        let xi = d_horizon * t / t_hor;
        let sl = state.level(k);
        let cl = control.level(k);
        let zl = state_dir.level(k);
        let dl = control_dir.level(k);
        let pl = mult_phys.adjoint.level(k);
        let el = mult_phys.e_field.level(k);
        let a_dir = disc.operator.apply_full(grid, zl);
        let mut lvl = 0.0;
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            let xs = &x[..spec.spatial_dim];
            let (y, u, z, v) = (sl[i], cl[i], zl[i], dl[i]);
            let c = &spec.cost;
            let mut term = lambda
                * (c.d_tt(xs, t, y, u) * xi * xi
                    + 2.0 * c.d_ty(xs, t, y, u) * xi * z
                    + 2.0 * c.d_tu(xs, t, y, u) * xi * v
                    + c.d_yy(xs, t, y, u) * z * z
                    + c.d_uu(xs, t, y, u) * v * v
                    + 2.0 * c.d_yu(xs, t, y, u) * z * v);
            term += 2.0
                * lambda
                * (d_horizon / t_hor)
                * (c.d_t(xs, t, y, u) * xi + c.d_y(xs, t, y, u) * z + c.d_u(xs, t, y, u) * v);
            if pl[i] != 0.0 {
                let p = &spec.psi;
                term += pl[i]
                    * (p.d_tt(xs, t, y) * xi * xi
                        + 2.0 * p.d_ty(xs, t, y) * xi * z
                        + p.d_yy(xs, t, y) * z * z
                        + 2.0
                            * (d_horizon / t_hor)
                            * (a_dir[i] + p.d_t(xs, t, y) * xi + p.d_y(xs, t, y) * z - v));
            }
            if el[i] != 0.0 {
                let g = &spec.g;
                term += el[i]
                    * (g.d_tt(xs, t, y, u) * xi * xi
                        + g.d_yy(xs, t, y, u) * z * z
                        + g.d_uu(xs, t, y, u) * v * v
                        + 2.0 * g.d_ty(xs, t, y, u) * xi * z
                        + 2.0 * g.d_tu(xs, t, y, u) * xi * v
                        + 2.0 * g.d_yu(xs, t, y, u) * z * v);
            }
            lvl += grid.weights[i] * term;
        }
        acc += wt * lvl;
    }
    acc
}

/// Normalizes a direction to `T² + ‖v‖²₂ = 1` (the paper's metric),
/// scaling the linear state response along with it.
fn normalize(disc: &Discretization, d: &mut CriticalDirection) -> bool {
    let grid = &disc.grid;
    let mut nrm = d.d_horizon * d.d_horizon;
    for k in 0..grid.n_levels() {
        let wt = disc.scheme.time_weight(grid, k);
        let lv = d.control.level(k);
        let mut s = 0.0;
        for i in 0..grid.n_nodes() {
            s += grid.weights[i] * lv[i] * lv[i];
        }
        nrm += wt * s;
    }
    if nrm <= 1e-24 {
        return false;
    }
    let scale = 1.0 / nrm.sqrt();
    d.d_horizon *= scale;
    d.control.scale(scale);
    d.state.scale(scale);
    true
}

struct HalfSpace {
    /// T-component of the Riesz representative.
    alpha: f64,
    /// Control-field component of the Riesz representative.
    field: SpaceTimeField,
}

fn halfspace_value(disc: &Discretization, hs: &HalfSpace, d: &CriticalDirection) -> f64 {
    let grid = &disc.grid;
    let mut acc = hs.alpha * d.d_horizon;
    for k in 0..grid.n_levels() {
        let wt = disc.scheme.time_weight(grid, k);
        if wt == 0.0 {
            continue;
        }
        let rl = hs.field.level(k);
        let dl = d.control.level(k);
        let mut s = 0.0;
        for i in 0..grid.n_nodes() {
            s += grid.weights[i] * rl[i] * dl[i];
        }
        acc += wt * s;
    }
    acc
}

/// Per-node activity pattern of the base solution; levels outside the
/// scheme's active range are treated as inactive.
fn activity_pattern(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
) -> Vec<Activity> {
    let grid = &disc.grid;
    let act_tol = spec.activity_tol();
    let mut out = vec![Activity::Inactive; grid.n_levels() * grid.n_nodes()];
    for k in 0..grid.n_levels() {
        if !disc.scheme.level_active(k) {
            continue;
        }
        let t = cp.t_horizon * grid.s_level(k);
        let sl = state.level(k);
        let cl = cp.v.level(k);
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            let g = spec.g.eval(&x[..spec.spatial_dim], t, sl[i], cl[i]);
            out[k * grid.n_nodes() + i] = classify_activity(g, spec.bounds, act_tol);
        }
    }
    out
}

/// One-sided projection of the control direction at active nodes: zero at
/// strongly active nodes (nonzero multiplier), sign-clipped against
/// `g_u · v` at weakly active ones.
fn project_cone(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    mult: &MultiplierSet,
    pattern: &[Activity],
    v: &mut SpaceTimeField,
) {
    let grid = &disc.grid;
    let strong = 1e-8 * (1.0 + mult.e_field.sup_norm());
    for k in 0..grid.n_levels() {
        if !disc.scheme.level_active(k) {
            for i in 0..grid.n_nodes() {
                v.set(k, i, 0.0);
            }
            continue;
        }
        let t = cp.t_horizon * grid.s_level(k);
        let sl = state.level(k);
        let cl = cp.v.level(k);
        for i in 0..grid.n_nodes() {
            let act = pattern[k * grid.n_nodes() + i];
            if act == Activity::Inactive {
                continue;
            }
            if mult.e_field.get(k, i).abs() > strong {
                v.set(k, i, 0.0);
                continue;
            }
            let x = grid.node_coord(i);
            let gu = spec.g.d_u(&x[..spec.spatial_dim], t, sl[i], cl[i]);
            let dgu = gu * v.get(k, i);
            let violates = match act {
                Activity::Lower => dgu < 0.0,
                Activity::Upper => dgu > 0.0,
                Activity::Inactive => false,
            };
            if violates {
                v.set(k, i, 0.0);
            }
        }
    }
}

/// Worst one-sided violation of the linearized mixed constraint.
fn cone_residual(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    pattern: &[Activity],
    d: &CriticalDirection,
) -> f64 {
    let grid = &disc.grid;
    let mut worst = 0.0f64;
    for k in 0..grid.n_levels() {
        if !disc.scheme.level_active(k) {
            continue;
        }
        let s = grid.s_level(k);
        let t = cp.t_horizon * s;
        let sl = state.level(k);
        let cl = cp.v.level(k);
        let zl = d.state.level(k);
        let dl = d.control.level(k);
        for i in 0..grid.n_nodes() {
            let act = pattern[k * grid.n_nodes() + i];
            if act == Activity::Inactive {
                continue;
            }
            let x = grid.node_coord(i);
            let xs = &x[..spec.spatial_dim];
            let dg = spec.g.d_t(xs, t, sl[i], cl[i]) * d.d_horizon * s
                + spec.g.d_y(xs, t, sl[i], cl[i]) * zl[i]
                + spec.g.d_u(xs, t, sl[i], cl[i]) * dl[i];
            let viol = match act {
                Activity::Lower => (-dg).max(0.0),
                Activity::Upper => dg.max(0.0),
                Activity::Inactive => 0.0,
            };
            worst = worst.max(viol);
        }
    }
    worst
}

/// Outcome of a critical-cone sampling run.
#[derive(Debug)]
pub struct ConeSample {
    pub directions: Vec<CriticalDirection>,
    pub n_requested: usize,
    pub n_discarded: usize,
}

/// Draws seeded Gaussian directions, projects them onto the linearized
/// cone conditions, and keeps those whose residuals pass `DIR_TOL`.
pub fn sample_critical_cone(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    mult: &MultiplierSet,
    n: usize,
    seed: u64,
) -> Result<ConeSample> {
    let grid = &disc.grid;
    let pattern = activity_pattern(spec, disc, cp, state);
    let t_free = spec.horizon.1 > spec.horizon.0;
    let term_act_tol = 1e-6;

    // Riesz representatives of the objective-descent and active terminal
    // half-spaces (one adjoint solve each, shared across samples)
    let zeros = SpaceTimeField::zeros(grid, Horizon::Unit);
    let mu0 = vec![0.0; spec.terminal_constraints.len()];
    let obj_grad = grad_lagrangian(spec, disc, cp, state, 1.0, &mu0, &zeros)?;
    let mut halfspaces = vec![HalfSpace {
        alpha: obj_grad.d_horizon,
        field: obj_grad.dv,
    }];
    let terminal_state = state.level(grid.n_time);
    for (i, tf) in spec.terminal_constraints.iter().enumerate() {
        if tf.value(cp.t_horizon, terminal_state, grid).abs() <= term_act_tol {
            let mut mu = vec![0.0; spec.terminal_constraints.len()];
            mu[i] = 1.0;
            let g = grad_lagrangian(spec, disc, cp, state, 0.0, &mu, &zeros)?;
            halfspaces.push(HalfSpace {
                alpha: g.d_horizon,
                field: g.dv,
            });
        }
    }

    let strong = 1e-8 * (1.0 + mult.e_field.sup_norm());
    let results: Vec<Option<CriticalDirection>> = (0..n)
        .into_par_iter()
        .map(|idx| -> Result<Option<CriticalDirection>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(idx as u64));
            let mut d_horizon = if t_free {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            } else {
                0.0
            };
            let mut v = SpaceTimeField::zeros(grid, Horizon::Unit);
            for k in 0..grid.n_levels() {
                if !disc.scheme.level_active(k) {
                    continue;
                }
                for i in 0..grid.n_nodes() {
                    v.set(k, i, rng.sample::<f64, _>(rand_distr::StandardNormal));
                }
            }
            project_cone(spec, disc, cp, state, mult, &pattern, &mut v);

            // enforce the half-space conditions by projection along the
            // free components of their representatives
            for _pass in 0..3 {
                let zeta = linearized_state_direction(spec, disc, cp, state, d_horizon, &v)?;
                let mut dcur = CriticalDirection {
                    d_horizon,
                    state: zeta,
                    control: v.clone(),
                    residuals: DirectionResiduals {
                        objective: 0.0,
                        linearized_state: 0.0,
                        terminal: 0.0,
                        cone: 0.0,
                    },
                };
                let mut any_violated = false;
                for hs in &halfspaces {
                    let val = halfspace_value(disc, hs, &dcur);
                    if val <= DIR_TOL {
                        continue;
                    }
                    any_violated = true;
                    // restrict the representative to the free components
                    let mut free = hs.field.clone();
                    for k in 0..grid.n_levels() {
                        for i in 0..grid.n_nodes() {
                            let pat = pattern[k * grid.n_nodes() + i];
                            let strongly =
                                pat != Activity::Inactive && mult.e_field.get(k, i).abs() > strong;
                            if strongly || !disc.scheme.level_active(k) {
                                free.set(k, i, 0.0);
                            }
                        }
                    }
                    let alpha_free = if t_free { hs.alpha } else { 0.0 };
                    let hs_free = HalfSpace {
                        alpha: alpha_free,
                        field: free,
                    };
                    let nrm = {
                        let unit = CriticalDirection {
                            d_horizon: hs_free.alpha,
                            state: dcur.state.clone(),
                            control: hs_free.field.clone(),
                            residuals: dcur.residuals.clone(),
                        };
                        halfspace_value(disc, &hs_free, &unit)
                    };
                    if nrm <= 1e-20 {
                        continue;
                    }
                    let coef = val / nrm;
                    d_horizon -= coef * hs_free.alpha;
                    v.axpy(-coef, &hs_free.field);
                    project_cone(spec, disc, cp, state, mult, &pattern, &mut v);
                    dcur.d_horizon = d_horizon;
                    dcur.control = v.clone();
                }
                if !any_violated {
                    break;
                }
            }

            let zeta = linearized_state_direction(spec, disc, cp, state, d_horizon, &v)?;
            let mut dir = CriticalDirection {
                d_horizon,
                state: zeta,
                control: v,
                residuals: DirectionResiduals {
                    objective: 0.0,
                    linearized_state: 0.0,
                    terminal: 0.0,
                    cone: 0.0,
                },
            };
            if !normalize(disc, &mut dir) {
                return Ok(None);
            }

            // post-hoc residuals
            let obj = halfspace_value(disc, &halfspaces[0], &dir).max(0.0);
            let mut term = 0.0f64;
            for hs in halfspaces.iter().skip(1) {
                term = term.max(halfspace_value(disc, hs, &dir).max(0.0));
            }
            let lin = linearized_residual(spec, disc, cp, state, &dir);
            let cone = cone_residual(spec, disc, cp, state, &pattern, &dir);
            dir.residuals = DirectionResiduals {
                objective: obj,
                linearized_state: lin,
                terminal: term,
                cone,
            };
            if dir.residuals.max() > DIR_TOL {
                return Ok(None);
            }
            Ok(Some(dir))
        })
        .collect::<Result<Vec<_>>>()?;

    let directions: Vec<CriticalDirection> = results.into_iter().flatten().collect();
    let n_discarded = n - directions.len();
    Ok(ConeSample {
        directions,
        n_requested: n,
        n_discarded,
    })
}

/// Pointwise Legendre–Clebsch margin and its infimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcReport {
    pub margin: SpaceTimeField,
    /// inf over nodes of `T* L_uu + e g_uu`.
    pub infimum: f64,
    pub pass: bool,
    /// Same margin divided by T*: the physical-coordinate constant, so the
    /// scaling relation Λ = T*·Λ₀ is explicit in the report.
    pub infimum_physical: f64,
}

pub fn legendre_clebsch(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    mult: &MultiplierSet,
) -> LcReport {
    let grid = &disc.grid;
    let t_hor = cp.t_horizon;
    let mut margin = SpaceTimeField::zeros(grid, Horizon::Unit);
    let mut inf = f64::INFINITY;
    for k in 0..grid.n_levels() {
        if !disc.scheme.level_active(k) {
            continue;
        }
        let t = t_hor * grid.s_level(k);
        let sl = state.level(k);
        let cl = cp.v.level(k);
        let el = mult.e_field.level(k);
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            let xs = &x[..spec.spatial_dim];
            let m = t_hor * spec.cost.d_uu(xs, t, sl[i], cl[i])
                + el[i] * spec.g.d_uu(xs, t, sl[i], cl[i]);
            margin.set(k, i, m);
            inf = inf.min(m);
        }
    }
    LcReport {
        margin,
        infimum: inf,
        pass: inf > 0.0,
        infimum_physical: inf / t_hor,
    }
}

/// Per-direction record in the serialized report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionRecord {
    pub q_value: f64,
    pub d_horizon: f64,
    pub residuals: DirectionResiduals,
}

/// Second-order verdict over a cone sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SOCReport {
    pub n_requested: usize,
    pub n_accepted: usize,
    pub n_discarded: usize,
    pub seed: u64,
    pub min_q: f64,
    /// min Q ≥ -soc_tol: the nonnegativity audit of the necessary
    /// condition.
    pub necessary_pass: bool,
    /// min Q > 0 and positive Legendre–Clebsch margin: evidence for the
    /// sufficient condition.
    pub sufficient_pass: bool,
    pub lc_infimum: f64,
    pub lc_pass: bool,
    pub directions: Vec<DirectionRecord>,
    pub disclaimer: String,
}

/// Evaluates the quadratic form over the sample and issues the verdict.
pub fn soc_verdict(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    mult: &MultiplierSet,
    sample: &ConeSample,
    lc: &LcReport,
    seed: u64,
) -> Result<SOCReport> {
    if sample.directions.is_empty() {
        return Err(Error::EmptySample(
            "no accepted critical directions".into(),
        ));
    }
    let records: Vec<DirectionRecord> = sample
        .directions
        .par_iter()
        .map(|d| DirectionRecord {
            q_value: quadratic_form(spec, disc, cp, state, mult, d),
            d_horizon: d.d_horizon,
            residuals: d.residuals.clone(),
        })
        .collect();
    let min_q = records
        .iter()
        .map(|r| r.q_value)
        .fold(f64::INFINITY, f64::min);
    Ok(SOCReport {
        n_requested: sample.n_requested,
        n_accepted: sample.directions.len(),
        n_discarded: sample.n_discarded,
        seed,
        min_q,
        necessary_pass: min_q >= -SOC_TOL,
        sufficient_pass: min_q > 0.0 && lc.pass,
        lc_infimum: lc.infimum,
        lc_pass: lc.pass,
        directions: records,
        disclaimer: "randomized sampling of the discretized critical cone: \
                     evidence for the second-order conditions, not a proof; \
                     near-degenerate active sets may over- or \
                     under-approximate the cone"
            .into(),
    })
}
