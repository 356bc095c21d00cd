//! First-order optimality machinery: the discrete adjoint, the scalar
//! time-adjoint, mixed-constraint multiplier recovery, Lagrangian
//! gradients and the KKT residual report.
//!
//! The adjoint is the exact transpose of the discretized forward scheme,
//! so the assembled gradients are the true gradients of the discrete
//! objective and finite-difference checks are tight. The stored adjoint
//! field holds the gradient-consistent multiplier values at every level;
//! the nodal terminal condition is kept alongside it (the two agree in the
//! refinement limit but differ by one half-step at finite resolution).

use crate::error::{Error, Result};
use crate::field::{Horizon, SpaceTimeField};
use crate::grid::Grid;
use crate::reduction::{objective, ControlPoint};
use crate::state::{integrate_semilinear, Discretization, Scheme};
use crate::problem::ProblemSpec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Lagrange multipliers of the reduced problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplierSet {
    /// Objective multiplier; 1 in all solver paths, 0 only in audit
    /// experiments.
    pub lambda: f64,
    /// Terminal-constraint multipliers, componentwise nonnegative.
    pub mu: Vec<f64>,
    /// Adjoint field on the unit interval (gradient-consistent values).
    pub adjoint: SpaceTimeField,
    /// Scalar time-adjoint at the time levels; last entry is zero.
    pub phi_scalar: Vec<f64>,
    /// Mixed-constraint multiplier field.
    pub e_field: SpaceTimeField,
    /// Nodal terminal condition `-λ ψ₀ζ - Σ μ_i ψ_iζ`.
    pub terminal_condition: Vec<f64>,
}

/// Result of one adjoint solve.
#[derive(Debug, Clone)]
pub struct AdjointSolve {
    /// Gradient-consistent adjoint values at every level, zero boundary.
    pub phi: SpaceTimeField,
    /// Raw step multipliers p_k at slots 1..=N (slot 0 unused).
    pub step_multipliers: SpaceTimeField,
    /// Nodal terminal condition `-λ ψ₀ζ - Σ μ_i ψ_iζ`.
    pub terminal_condition: Vec<f64>,
}

fn terminal_gradient(
    spec: &ProblemSpec,
    grid: &Grid,
    t_horizon: f64,
    terminal_state: &[f64],
    lambda: f64,
    mu: &[f64],
) -> Vec<f64> {
    let n = grid.n_nodes();
    let mut acc = vec![0.0; n];
    let mut buf = vec![0.0; n];
    spec.terminal_cost
        .grad_state(t_horizon, terminal_state, grid, &mut buf);
    for i in 0..n {
        acc[i] += lambda * buf[i];
    }
    for (m, tf) in mu.iter().zip(&spec.terminal_constraints) {
        tf.grad_state(t_horizon, terminal_state, grid, &mut buf);
        for i in 0..n {
            acc[i] += m * buf[i];
        }
    }
    acc
}

/// Solves the backward adjoint system for given multipliers and
/// mixed-constraint field (`e` may be zero on a first pass).
pub fn solve_adjoint(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    lambda: f64,
    mu: &[f64],
    e_field: &SpaceTimeField,
) -> Result<AdjointSolve> {
    let grid = &disc.grid;
    if !state.matches_grid(grid) || !e_field.matches_grid(grid) {
        return Err(Error::DimensionMismatch("adjoint inputs".into()));
    }
    if mu.len() != spec.terminal_constraints.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} multipliers for {} terminal constraints",
            mu.len(),
            spec.terminal_constraints.len()
        )));
    }
    let n_time = grid.n_time;
    let n_int = grid.n_interior();
    let dt = grid.dt();
    let t_hor = cp.t_horizon;
    let theta = disc.scheme.theta();
    let c_imp = dt * t_hor * theta;
    let c_exp = dt * t_hor * (1.0 - theta);

    // nodal terminal condition
    let term_full = terminal_gradient(spec, grid, t_hor, state.level(n_time), lambda, mu);
    let terminal_condition: Vec<f64> = term_full.iter().map(|v| -v).collect();

    // packed source at a level: lambda*T*L_y + e*g_y
    let source_at = |k: usize, out: &mut [f64]| {
        let t = t_hor * grid.s_level(k);
        let sl = state.level(k);
        let cl = cp.v.level(k);
        let el = e_field.level(k);
        for (p, &idx) in grid.interior.iter().enumerate() {
            let x = grid.node_coord(idx);
            let xs = &x[..spec.spatial_dim];
            out[p] = lambda * t_hor * spec.cost.d_y(xs, t, sl[idx], cl[idx])
                + el[idx] * spec.g.d_y(xs, t, sl[idx], cl[idx]);
        }
    };
    let coeff_at = |k: usize, out: &mut [f64]| {
        let t = t_hor * grid.s_level(k);
        let sl = state.level(k);
        for (p, &idx) in grid.interior.iter().enumerate() {
            let x = grid.node_coord(idx);
            out[p] = spec.psi.d_y(&x[..spec.spatial_dim], t, sl[idx]);
        }
    };

    let mut p_field = SpaceTimeField::zeros(grid, Horizon::Unit);
    let mut src = vec![0.0; n_int];
    let mut coeff = vec![0.0; n_int];
    let mut term_packed = vec![0.0; n_int];
    grid.pack(&terminal_condition, &mut term_packed);

    // seed: (I + c_imp (A + c_N)) p_N = terminal - seed_weight * src_N
    let seed_weight = disc.scheme.time_weight(grid, n_time);
    source_at(n_time, &mut src);
    coeff_at(n_time, &mut coeff);
    let diag: Vec<f64> = coeff.iter().map(|c| 1.0 + c_imp * c).collect();
    let m = disc.operator.matrix().scaled_plus_diag(c_imp, &diag);
    let mut p_new: Vec<f64> = (0..n_int)
        .map(|p| term_packed[p] - seed_weight * src[p])
        .collect();
    m.cholesky()?.solve_in_place(&mut p_new);
    grid.scatter(&p_new, p_field.level_mut(n_time));

    // recursion: (I + c_imp(A + c_k)) p_k = (I - c_exp(A + c_k)) p_{k+1} - dt*src_k
    let mut az = vec![0.0; n_int];
    for k in (1..n_time).rev() {
        source_at(k, &mut src);
        coeff_at(k, &mut coeff);
        disc.operator.apply_packed(&p_new, &mut az);
        let mut rhs = vec![0.0; n_int];
        for p in 0..n_int {
            rhs[p] = p_new[p] - c_exp * (az[p] + coeff[p] * p_new[p]) - dt * src[p];
        }
        let diag: Vec<f64> = coeff.iter().map(|c| 1.0 + c_imp * c).collect();
        let m = disc.operator.matrix().scaled_plus_diag(c_imp, &diag);
        m.cholesky()?.solve_in_place(&mut rhs);
        p_new = rhs;
        grid.scatter(&p_new, p_field.level_mut(k));
    }

    // extraction of the level-consistent adjoint
    let mut phi = SpaceTimeField::zeros(grid, Horizon::Unit);
    match disc.scheme {
        Scheme::BackwardEuler => {
            for k in 1..=n_time {
                let lv = p_field.level(k).to_vec();
                phi.level_mut(k).copy_from_slice(&lv);
            }
            // cosmetic extension to level 0 by one more backward step
            source_at(0, &mut src);
            coeff_at(0, &mut coeff);
            let mut rhs = vec![0.0; n_int];
            let mut p1 = vec![0.0; n_int];
            grid.pack(p_field.level(1), &mut p1);
            for p in 0..n_int {
                rhs[p] = p1[p] - dt * src[p];
            }
            let diag: Vec<f64> = coeff.iter().map(|c| 1.0 + c_imp * c).collect();
            let m = disc.operator.matrix().scaled_plus_diag(c_imp, &diag);
            m.cholesky()?.solve_in_place(&mut rhs);
            grid.scatter(&rhs, phi.level_mut(0));
        }
        Scheme::CrankNicolson => {
            let n_nodes = grid.n_nodes();
            for k in 0..=n_time {
                for i in 0..n_nodes {
                    let v = if k == 0 {
                        p_field.get(1, i)
                    } else if k == n_time {
                        p_field.get(n_time, i)
                    } else {
                        0.5 * (p_field.get(k, i) + p_field.get(k + 1, i))
                    };
                    phi.set(k, i, v);
                }
            }
        }
    }
    phi.check_finite("adjoint field")?;
    Ok(AdjointSolve {
        phi,
        step_multipliers: p_field,
        terminal_condition,
    })
}

/// Backward trapezoidal integration of the scalar time-adjoint
/// `φ'(s) = -∫ (λ T L_t + φ T ψ_t + e g_t) dx`, `φ(1) = 0`.
pub fn solve_phi_scalar(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    phi: &SpaceTimeField,
    lambda: f64,
    e_field: &SpaceTimeField,
) -> Vec<f64> {
    let grid = &disc.grid;
    let t_hor = cp.t_horizon;
    let integrand: Vec<f64> = (0..grid.n_levels())
        .map(|k| {
            let t = t_hor * grid.s_level(k);
            let sl = state.level(k);
            let cl = cp.v.level(k);
            let pl = phi.level(k);
            let el = e_field.level(k);
            let mut s = 0.0;
            for i in 0..grid.n_nodes() {
                let x = grid.node_coord(i);
                let xs = &x[..spec.spatial_dim];
                s += grid.weights[i]
                    * (lambda * t_hor * spec.cost.d_t(xs, t, sl[i], cl[i])
                        + pl[i] * t_hor * spec.psi.d_t(xs, t, sl[i])
                        + el[i] * spec.g.d_t(xs, t, sl[i], cl[i]));
            }
            s
        })
        .collect();
    let n = grid.n_time;
    let dt = grid.dt();
    let mut out = vec![0.0; n + 1];
    for k in (0..n).rev() {
        out[k] = out[k + 1] + 0.5 * dt * (integrand[k] + integrand[k + 1]);
    }
    out
}

/// Residual bookkeeping from the normal-cone projection in
/// [`recover_e`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EClipReport {
    /// Largest raw multiplier discarded at an inactive node.
    pub max_inactive_discard: f64,
    /// Largest wrong-signed mass clipped at an active node.
    pub max_sign_clip: f64,
}

/// Activity classification of the mixed constraint at one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Lower,
    Upper,
    Inactive,
}

pub fn classify_activity(g_value: f64, bounds: (f64, f64), act_tol: f64) -> Activity {
    if g_value <= bounds.0 + act_tol {
        Activity::Lower
    } else if g_value >= bounds.1 - act_tol {
        Activity::Upper
    } else {
        Activity::Inactive
    }
}

/// Recovers the mixed-constraint multiplier from the stationarity identity
/// `e = (T φ - λ T L_u) / g_u`, then projects onto the admissible
/// normal-cone sign pattern. The discarded mass is reported.
pub fn recover_e(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    phi: &SpaceTimeField,
    lambda: f64,
) -> Result<(SpaceTimeField, EClipReport)> {
    let grid = &disc.grid;
    let t_hor = cp.t_horizon;
    let act_tol = spec.activity_tol();
    let mut e = SpaceTimeField::zeros(grid, Horizon::Unit);
    let mut report = EClipReport::default();
    for k in 0..grid.n_levels() {
        if !disc.scheme.level_active(k) {
            continue;
        }
        let t = t_hor * grid.s_level(k);
        let sl = state.level(k);
        let cl = cp.v.level(k);
        let pl = phi.level(k);
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            let xs = &x[..spec.spatial_dim];
            let gu = spec.g.d_u(xs, t, sl[i], cl[i]);
            if gu.abs() < 1e-12 {
                return Err(Error::GuVanishes {
                    node: i,
                    level: k,
                    value: gu.abs(),
                });
            }
            let raw = (t_hor * pl[i] - lambda * t_hor * spec.cost.d_u(xs, t, sl[i], cl[i])) / gu;
            let gval = spec.g.eval(xs, t, sl[i], cl[i]);
            let clipped = match classify_activity(gval, spec.bounds, act_tol) {
                Activity::Inactive => {
                    report.max_inactive_discard = report.max_inactive_discard.max(raw.abs());
                    0.0
                }
                Activity::Lower => {
                    if raw > 0.0 {
                        report.max_sign_clip = report.max_sign_clip.max(raw);
                        0.0
                    } else {
                        raw
                    }
                }
                Activity::Upper => {
                    if raw < 0.0 {
                        report.max_sign_clip = report.max_sign_clip.max(-raw);
                        0.0
                    } else {
                        raw
                    }
                }
            };
            e.set(k, i, clipped);
        }
    }
    Ok((e, report))
}

/// Adjoint, scalar adjoint and recovered mixed-constraint multiplier for
/// given (λ, μ), iterated to a fixed point in `e` when the constraint
/// couples to the state.
pub fn compute_multipliers(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    lambda: f64,
    mu: &[f64],
) -> Result<MultiplierSet> {
    let grid = &disc.grid;
    let mut e = SpaceTimeField::zeros(grid, Horizon::Unit);
    let mut adj = solve_adjoint(spec, disc, cp, state, lambda, mu, &e)?;
    for _ in 0..40 {
        let (e_new, _clip) = recover_e(spec, disc, cp, state, &adj.phi, lambda)?;
        let mut diff = 0.0f64;
        for (a, b) in e_new.data().iter().zip(e.data()) {
            diff = diff.max((a - b).abs());
        }
        e = e_new;
        adj = solve_adjoint(spec, disc, cp, state, lambda, mu, &e)?;
        if diff <= 1e-12 * (1.0 + e.sup_norm()) {
            break;
        }
    }
    let phi_scalar = solve_phi_scalar(spec, disc, cp, state, &adj.phi, lambda, &e);
    Ok(MultiplierSet {
        lambda,
        mu: mu.to_vec(),
        adjoint: adj.phi,
        phi_scalar,
        e_field: e,
        terminal_condition: adj.terminal_condition,
    })
}

/// Exact gradient of the discrete Lagrangian in (T, v).
#[derive(Debug, Clone)]
pub struct LagrangianGradient {
    pub d_horizon: f64,
    /// Riesz representative with respect to the space-time quadrature:
    /// `dv = λ T L_u - T φ + e g_u` nodally.
    pub dv: SpaceTimeField,
    pub adjoint: AdjointSolve,
}

/// Assembles the exact gradient of the discrete Lagrangian
/// `λ Ĵ + Σ μ_i ψ_i + ⟨p, dynamics⟩ + ⟨e, g⟩` in (T, v).
pub fn grad_lagrangian(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    lambda: f64,
    mu: &[f64],
    e_field: &SpaceTimeField,
) -> Result<LagrangianGradient> {
    let grid = &disc.grid;
    let adj = solve_adjoint(spec, disc, cp, state, lambda, mu, e_field)?;
    let t_hor = cp.t_horizon;

    let mut dv = SpaceTimeField::zeros(grid, Horizon::Unit);
    for k in 0..grid.n_levels() {
        if !disc.scheme.level_active(k) {
            continue;
        }
        let t = t_hor * grid.s_level(k);
        let sl = state.level(k);
        let cl = cp.v.level(k);
        let pl = adj.phi.level(k);
        let el = e_field.level(k);
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            let xs = &x[..spec.spatial_dim];
            let v = lambda * t_hor * spec.cost.d_u(xs, t, sl[i], cl[i]) - t_hor * pl[i]
                + el[i] * spec.g.d_u(xs, t, sl[i], cl[i]);
            dv.set(k, i, v);
        }
    }

    // dT assembled with the extracted adjoint; exact for the discrete
    // Lagrangian by the trapezoid/step-multiplier grouping identity.
    let terminal_state = state.level(grid.n_time);
    let mut d_t = lambda * spec.terminal_cost.d_t(t_hor, terminal_state, grid);
    for (m, tf) in mu.iter().zip(&spec.terminal_constraints) {
        d_t += m * tf.d_t(t_hor, terminal_state, grid);
    }
    for k in 0..grid.n_levels() {
        let wt = disc.scheme.time_weight(grid, k);
        if wt == 0.0 {
            continue;
        }
        let s_k = grid.s_level(k);
        let t = t_hor * s_k;
        let sl = state.level(k);
        let cl = cp.v.level(k);
        let pl = adj.phi.level(k);
        let el = e_field.level(k);
        let a_state = disc.operator.apply_full(grid, sl);
        let mut acc = 0.0;
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            let xs = &x[..spec.spatial_dim];
            let l_val = spec.cost.eval(xs, t, sl[i], cl[i]);
            let l_t = spec.cost.d_t(xs, t, sl[i], cl[i]);
            let g_t = spec.g.d_t(xs, t, sl[i], cl[i]);
            let mut term = lambda * (l_val + t_hor * s_k * l_t) + el[i] * g_t * s_k;
            if pl[i] != 0.0 {
                let psi_val = spec.psi.eval(xs, t, sl[i]);
                let psi_t = spec.psi.d_t(xs, t, sl[i]);
                term += pl[i] * (a_state[i] + psi_val - cl[i] + t_hor * psi_t * s_k);
            }
            acc += grid.weights[i] * term;
        }
        d_t += wt * acc;
    }

    Ok(LagrangianGradient {
        d_horizon: d_t,
        dv,
        adjoint: adj,
    })
}

/// Value of the discrete Lagrangian at an arbitrary space-time point
/// (the state need not solve anything); used by the second-difference
/// oracle for the quadratic form.
pub fn lagrangian_value(
    spec: &ProblemSpec,
    disc: &Discretization,
    t_horizon: f64,
    state: &SpaceTimeField,
    control: &SpaceTimeField,
    lambda: f64,
    mu: &[f64],
    e_field: &SpaceTimeField,
    step_multipliers: &SpaceTimeField,
) -> f64 {
    let grid = &disc.grid;
    let mut acc = lambda * objective(spec, grid, disc.scheme, t_horizon, state, control);
    let terminal_state = state.level(grid.n_time);
    for (m, tf) in mu.iter().zip(&spec.terminal_constraints) {
        acc += m * tf.value(t_horizon, terminal_state, grid);
    }
    // mixed-constraint pairing
    for k in 0..grid.n_levels() {
        let wt = disc.scheme.time_weight(grid, k);
        if wt == 0.0 {
            continue;
        }
        let t = t_horizon * grid.s_level(k);
        let sl = state.level(k);
        let cl = control.level(k);
        let el = e_field.level(k);
        let mut s = 0.0;
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            s += grid.weights[i] * el[i] * spec.g.eval(&x[..spec.spatial_dim], t, sl[i], cl[i]);
        }
        acc += wt * s;
    }
    // dynamics pairing sum_k <p_{k+1}, R_{k+1}>
    let dt = grid.dt();
    let theta = disc.scheme.theta();
    let c_imp = dt * t_horizon * theta;
    let c_exp = dt * t_horizon * (1.0 - theta);
    let n_int = grid.n_interior();
    let mut cur = vec![0.0; n_int];
    let mut nxt = vec![0.0; n_int];
    let mut f_cur = vec![0.0; n_int];
    let mut f_nxt = vec![0.0; n_int];
    let eval_f = |k: usize, packed: &[f64], out: &mut [f64]| {
        let t = t_horizon * grid.s_level(k);
        let cl = control.level(k);
        let mut az = vec![0.0; n_int];
        disc.operator.apply_packed(packed, &mut az);
        for (p, &idx) in grid.interior.iter().enumerate() {
            let x = grid.node_coord(idx);
            out[p] = az[p] + spec.psi.eval(&x[..spec.spatial_dim], t, packed[p]) - cl[idx];
        }
    };
    grid.pack(state.level(0), &mut cur);
    eval_f(0, &cur, &mut f_cur);
    for k in 0..grid.n_time {
        grid.pack(state.level(k + 1), &mut nxt);
        eval_f(k + 1, &nxt, &mut f_nxt);
        let pl = step_multipliers.level(k + 1);
        let mut s = 0.0;
        for (p, &idx) in grid.interior.iter().enumerate() {
            let r = nxt[p] - cur[p] + c_imp * f_nxt[p] + c_exp * f_cur[p];
            s += grid.weights[idx] * pl[idx] * r;
        }
        acc += s;
        std::mem::swap(&mut cur, &mut nxt);
        std::mem::swap(&mut f_cur, &mut f_nxt);
    }
    acc
}

/// Residuals of the first-order conditions at a point with multipliers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KKTReport {
    /// Sup-norm of the stationarity-in-control field
    /// `λ T L_u - T φ + e g_u`.
    pub r_u: f64,
    /// Absolute value of the stationarity-in-time expression.
    pub r_t: f64,
    /// max_i |μ_i ψ_i| plus the worst sign violation of `e`.
    pub r_comp: f64,
    /// Max violation of the reduced problem's constraints.
    pub r_feas: f64,
    /// Sup-norm discrepancy between the stored adjoint and a fresh solve
    /// of the discrete adjoint system.
    pub r_adj: f64,
    /// The stationarity-in-time expression evaluated with the literal
    /// trapezoid of the scalar adjoint (agrees with `r_t` to O(Δ²)).
    pub r_t_scalar_form: f64,
    pub fd_crosschecks: Option<FdCrosschecks>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FdCrosschecks {
    pub dv_rel_err: f64,
    pub dt_rel_err: f64,
    pub directions: usize,
    pub eps_swept: Vec<f64>,
}

/// Violation measures of the reduced problem's constraints.
fn feasibility_violation(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
) -> f64 {
    let grid = &disc.grid;
    let t_hor = cp.t_horizon;
    let mut worst = 0.0f64;
    // horizon bracket
    worst = worst.max(spec.horizon.0 - t_hor).max(t_hor - spec.horizon.1);
    // terminal constraints
    let terminal_state = state.level(grid.n_time);
    for tf in &spec.terminal_constraints {
        worst = worst.max(tf.value(t_hor, terminal_state, grid));
    }
    // mixed constraint bounds
    for k in 0..grid.n_levels() {
        if !disc.scheme.level_active(k) {
            continue;
        }
        let t = t_hor * grid.s_level(k);
        let sl = state.level(k);
        let cl = cp.v.level(k);
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            let g = spec.g.eval(&x[..spec.spatial_dim], t, sl[i], cl[i]);
            worst = worst.max(g - spec.bounds.1).max(spec.bounds.0 - g);
        }
    }
    // state-equation residual (per-level scale)
    let dt = grid.dt();
    let theta = disc.scheme.theta();
    let c_imp = dt * t_hor * theta;
    let c_exp = dt * t_hor * (1.0 - theta);
    let n_int = grid.n_interior();
    let mut cur = vec![0.0; n_int];
    let mut nxt = vec![0.0; n_int];
    let eval_f = |k: usize, packed: &[f64]| -> Vec<f64> {
        let t = t_hor * grid.s_level(k);
        let cl = cp.v.level(k);
        let mut az = vec![0.0; n_int];
        disc.operator.apply_packed(packed, &mut az);
        grid.interior
            .iter()
            .enumerate()
            .map(|(p, &idx)| {
                let x = grid.node_coord(idx);
                az[p] + spec.psi.eval(&x[..spec.spatial_dim], t, packed[p]) - cl[idx]
            })
            .collect()
    };
    grid.pack(state.level(0), &mut cur);
    let mut f_cur = eval_f(0, &cur);
    for k in 0..grid.n_time {
        grid.pack(state.level(k + 1), &mut nxt);
        let f_nxt = eval_f(k + 1, &nxt);
        for p in 0..n_int {
            let r = (nxt[p] - cur[p] + c_imp * f_nxt[p] + c_exp * f_cur[p]) / dt;
            worst = worst.max(r.abs());
        }
        cur.copy_from_slice(&nxt);
        f_cur = f_nxt;
    }
    worst
}

/// Evaluates every first-order residual of the reduced optimality system
/// at the given multipliers.
pub fn kkt_residuals(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    mult: &MultiplierSet,
    fd: Option<&FdCheckConfig>,
) -> Result<KKTReport> {
    let grid = &disc.grid;
    let t_hor = cp.t_horizon;

    let grad = grad_lagrangian(
        spec,
        disc,
        cp,
        state,
        mult.lambda,
        &mult.mu,
        &mult.e_field,
    )?;

    // r_u with the *given* adjoint field (audit semantics)
    let mut r_u = 0.0f64;
    for k in 0..grid.n_levels() {
        if !disc.scheme.level_active(k) {
            continue;
        }
        let t = t_hor * grid.s_level(k);
        let sl = state.level(k);
        let cl = cp.v.level(k);
        let pl = mult.adjoint.level(k);
        let el = mult.e_field.level(k);
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            let xs = &x[..spec.spatial_dim];
            let v = mult.lambda * t_hor * spec.cost.d_u(xs, t, sl[i], cl[i]) - t_hor * pl[i]
                + el[i] * spec.g.d_u(xs, t, sl[i], cl[i]);
            r_u = r_u.max(v.abs());
        }
    }

    let r_adj = {
        let mut worst = 0.0f64;
        let scale = 1.0f64.max(grad.adjoint.phi.sup_norm());
        for (a, b) in mult.adjoint.data().iter().zip(grad.adjoint.phi.data()) {
            worst = worst.max((a - b).abs());
        }
        worst / scale
    };

    // r_T: exact assembled stationarity-in-time with the given multipliers
    let r_t = grad.d_horizon.abs();

    // literal scalar-adjoint form of the same expression
    let r_t_scalar_form = {
        let dt = grid.dt();
        let mut int_phi = 0.0;
        for k in 0..grid.n_levels() {
            let wt = if k == 0 || k == grid.n_time {
                0.5 * dt
            } else {
                dt
            };
            int_phi += wt * mult.phi_scalar[k];
        }
        let terminal_state = state.level(grid.n_time);
        let mut v = int_phi
            + mult.lambda * spec.terminal_cost.d_t(t_hor, terminal_state, grid);
        for (m, tf) in mult.mu.iter().zip(&spec.terminal_constraints) {
            v += m * tf.d_t(t_hor, terminal_state, grid);
        }
        for k in 0..grid.n_levels() {
            let wt = disc.scheme.time_weight(grid, k);
            if wt == 0.0 {
                continue;
            }
            let t = t_hor * grid.s_level(k);
            let sl = state.level(k);
            let cl = cp.v.level(k);
            let pl = mult.adjoint.level(k);
            let a_state = disc.operator.apply_full(grid, sl);
            let mut acc = 0.0;
            for i in 0..grid.n_nodes() {
                let x = grid.node_coord(i);
                let xs = &x[..spec.spatial_dim];
                acc += grid.weights[i]
                    * (mult.lambda * spec.cost.eval(xs, t, sl[i], cl[i])
                        + pl[i]
                            * (a_state[i] + spec.psi.eval(xs, t, sl[i]) - cl[i]));
            }
            v += wt * acc;
        }
        v.abs()
    };

    // complementarity
    let terminal_state = state.level(grid.n_time);
    let mut r_comp = 0.0f64;
    for (m, tf) in mult.mu.iter().zip(&spec.terminal_constraints) {
        let psi = tf.value(t_hor, terminal_state, grid);
        r_comp = r_comp.max((m * psi).abs()).max(-m);
    }
    let act_tol = spec.activity_tol();
    let mut sign_violation = 0.0f64;
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
            let g = spec.g.eval(&x[..spec.spatial_dim], t, sl[i], cl[i]);
            let viol = match classify_activity(g, spec.bounds, act_tol) {
                Activity::Inactive => el[i].abs(),
                Activity::Lower => el[i].max(0.0),
                Activity::Upper => (-el[i]).max(0.0),
            };
            sign_violation = sign_violation.max(viol);
        }
    }
    r_comp += sign_violation;

    let r_feas = feasibility_violation(spec, disc, cp, state);

    let fd_crosschecks = match fd {
        Some(cfg) => Some(fd_crosscheck(spec, disc, cp, mult, &grad, cfg)?),
        None => None,
    };

    Ok(KKTReport {
        r_u,
        r_t,
        r_comp,
        r_feas,
        r_adj,
        r_t_scalar_form,
        fd_crosschecks,
    })
}

#[derive(Debug, Clone)]
pub struct FdCheckConfig {
    pub directions: usize,
    pub seed: u64,
}

impl Default for FdCheckConfig {
    fn default() -> Self {
        FdCheckConfig {
            directions: 20,
            seed: 42,
        }
    }
}

/// State-eliminated Lagrangian value as a function of (T, v): the state is
/// re-solved, multipliers held fixed. Central differences of this function
/// are the ground truth for the assembled gradients.
pub fn eliminated_lagrangian(
    spec: &ProblemSpec,
    disc: &Discretization,
    t_horizon: f64,
    control: &SpaceTimeField,
    lambda: f64,
    mu: &[f64],
    e_field: &SpaceTimeField,
) -> Result<f64> {
    let grid = &disc.grid;
    let state = integrate_semilinear(spec, disc, t_horizon, control, Horizon::Unit)?;
    let mut acc = lambda * objective(spec, grid, disc.scheme, t_horizon, &state, control);
    let terminal_state = state.level(grid.n_time);
    for (m, tf) in mu.iter().zip(&spec.terminal_constraints) {
        acc += m * tf.value(t_horizon, terminal_state, grid);
    }
    for k in 0..grid.n_levels() {
        let wt = disc.scheme.time_weight(grid, k);
        if wt == 0.0 {
            continue;
        }
        let t = t_horizon * grid.s_level(k);
        let sl = state.level(k);
        let cl = control.level(k);
        let el = e_field.level(k);
        let mut s = 0.0;
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            s += grid.weights[i] * el[i] * spec.g.eval(&x[..spec.spatial_dim], t, sl[i], cl[i]);
        }
        acc += wt * s;
    }
    Ok(acc)
}

const FD_EPS_SWEEP: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];

fn fd_crosscheck(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    mult: &MultiplierSet,
    grad: &LagrangianGradient,
    cfg: &FdCheckConfig,
) -> Result<FdCrosschecks> {
    let grid = &disc.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst_dv = 0.0f64;
    for _ in 0..cfg.directions {
        let mut dir = SpaceTimeField::zeros(grid, Horizon::Unit);
        for k in 0..grid.n_levels() {
            if !disc.scheme.level_active(k) {
                continue;
            }
            for i in 0..grid.n_nodes() {
                dir.set(k, i, rng.gen_range(-1.0..1.0));
            }
        }
        let rel = fd_directional_dv(spec, disc, cp, mult, grad, &dir)?;
        worst_dv = worst_dv.max(rel);
    }
    let dt_rel = fd_directional_dt(spec, disc, cp, mult, grad)?;
    Ok(FdCrosschecks {
        dv_rel_err: worst_dv,
        dt_rel_err: dt_rel,
        directions: cfg.directions,
        eps_swept: FD_EPS_SWEEP.to_vec(),
    })
}

/// Relative error between `⟨dv, dir⟩` and a central difference of the
/// eliminated Lagrangian along `dir`, best over the ε sweep.
pub fn fd_directional_dv(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    mult: &MultiplierSet,
    grad: &LagrangianGradient,
    dir: &SpaceTimeField,
) -> Result<f64> {
    let grid = &disc.grid;
    let mut pairing = 0.0;
    for k in 0..grid.n_levels() {
        let wt = disc.scheme.time_weight(grid, k);
        if wt == 0.0 {
            continue;
        }
        let gl = grad.dv.level(k);
        let dl = dir.level(k);
        let mut s = 0.0;
        for i in 0..grid.n_nodes() {
            s += grid.weights[i] * gl[i] * dl[i];
        }
        pairing += wt * s;
    }
    let mut best = f64::INFINITY;
    for &eps in &FD_EPS_SWEEP {
        let mut vp = cp.v.clone();
        vp.axpy(eps, dir);
        let mut vm = cp.v.clone();
        vm.axpy(-eps, dir);
        let fp = eliminated_lagrangian(
            spec,
            disc,
            cp.t_horizon,
            &vp,
            mult.lambda,
            &mult.mu,
            &mult.e_field,
        )?;
        let fm = eliminated_lagrangian(
            spec,
            disc,
            cp.t_horizon,
            &vm,
            mult.lambda,
            &mult.mu,
            &mult.e_field,
        )?;
        let fd = (fp - fm) / (2.0 * eps);
        let rel = (fd - pairing).abs() / pairing.abs().max(fd.abs()).max(1e-10);
        best = best.min(rel);
    }
    Ok(best)
}

/// Relative error between the assembled `dT` and a central difference of
/// the eliminated Lagrangian in T, best over the ε sweep.
pub fn fd_directional_dt(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    mult: &MultiplierSet,
    grad: &LagrangianGradient,
) -> Result<f64> {
    let mut best = f64::INFINITY;
    for &eps in &FD_EPS_SWEEP {
        let fp = eliminated_lagrangian(
            spec,
            disc,
            cp.t_horizon + eps,
            &cp.v,
            mult.lambda,
            &mult.mu,
            &mult.e_field,
        )?;
        let fm = eliminated_lagrangian(
            spec,
            disc,
            cp.t_horizon - eps,
            &cp.v,
            mult.lambda,
            &mult.mu,
            &mult.e_field,
        )?;
        let fd = (fp - fm) / (2.0 * eps);
        let rel = (fd - grad.d_horizon).abs() / grad.d_horizon.abs().max(fd.abs()).max(1e-10);
        best = best.min(rel);
    }
    Ok(best)
}

/// Multipliers transported to the physical horizon:
/// `φ̃(x,t) = φ(x, t/T)`, `φ̃(t) = φ(t/T)`, `ẽ(x,t) = e(x, t/T) / T`.
pub fn transport_multipliers(mult: &MultiplierSet, t_horizon: f64) -> MultiplierSet {
    let mut e = mult.e_field.clone().retagged(Horizon::Physical(t_horizon));
    e.scale(1.0 / t_horizon);
    MultiplierSet {
        lambda: mult.lambda,
        mu: mult.mu.clone(),
        adjoint: mult
            .adjoint
            .clone()
            .retagged(Horizon::Physical(t_horizon)),
        phi_scalar: mult.phi_scalar.clone(),
        e_field: e,
        terminal_condition: mult.terminal_condition.clone(),
    }
}

/// First-order residuals of the physical-horizon optimality system,
/// evaluated directly on physical fields with physical quadrature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhysicalResiduals {
    /// Sup-norm of `λ L_u - φ̃ + ẽ g_u`.
    pub r_u: f64,
    /// Stationarity-in-time assembled with the horizon partial ψ_{0T}
    /// (the variant that matches the finite difference of the objective).
    pub r_t_time_partial: f64,
    /// Stationarity-in-time with the terminal terms read literally as the
    /// printed ζ-derivative form, scalarized by spatial integration.
    pub r_t_as_printed: f64,
    pub r_comp: f64,
}

pub fn theorem31_residuals(
    spec: &ProblemSpec,
    disc: &Discretization,
    t_horizon: f64,
    state: &SpaceTimeField,
    control: &SpaceTimeField,
    mult_phys: &MultiplierSet,
) -> PhysicalResiduals {
    let grid = &disc.grid;
    let mut r_u = 0.0f64;
    for k in 0..grid.n_levels() {
        if !disc.scheme.level_active(k) {
            continue;
        }
        let t = t_horizon * grid.s_level(k);
        let sl = state.level(k);
        let cl = control.level(k);
        let pl = mult_phys.adjoint.level(k);
        let el = mult_phys.e_field.level(k);
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            let xs = &x[..spec.spatial_dim];
            let v = mult_phys.lambda * spec.cost.d_u(xs, t, sl[i], cl[i]) - pl[i]
                + el[i] * spec.g.d_u(xs, t, sl[i], cl[i]);
            r_u = r_u.max(v.abs());
        }
    }

    // time stationarity with physical weights wt_phys = T * wt_unit
    let terminal_state = state.level(grid.n_time);
    let lambda = mult_phys.lambda;
    let mut time_partial_terms = lambda
        * t_horizon
        * spec.terminal_cost.d_t(t_horizon, terminal_state, grid);
    let mut printed_terms = 0.0;
    {
        // printed form reads the terminal terms as T*ψ_{0ζ}; scalarize by
        // integrating the ζ-derivative density over the domain
        let mut buf = vec![0.0; grid.n_nodes()];
        spec.terminal_cost
            .grad_state(t_horizon, terminal_state, grid, &mut buf);
        printed_terms += lambda * t_horizon * grid.integrate(&buf);
        for (m, tf) in mult_phys.mu.iter().zip(&spec.terminal_constraints) {
            tf.grad_state(t_horizon, terminal_state, grid, &mut buf);
            printed_terms += m * t_horizon * grid.integrate(&buf);
        }
    }
    for (m, tf) in mult_phys.mu.iter().zip(&spec.terminal_constraints) {
        time_partial_terms += m * t_horizon * tf.d_t(t_horizon, terminal_state, grid);
    }
    let mut integral = 0.0;
    for k in 0..grid.n_levels() {
        let wt = disc.scheme.time_weight(grid, k) * t_horizon;
        if wt == 0.0 {
            continue;
        }
        let t = t_horizon * grid.s_level(k);
        let sl = state.level(k);
        let cl = control.level(k);
        let pl = mult_phys.adjoint.level(k);
        let el = mult_phys.e_field.level(k);
        let a_state = disc.operator.apply_full(grid, sl);
        let mut acc = 0.0;
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            let xs = &x[..spec.spatial_dim];
            let mut term = lambda
                * (spec.cost.eval(xs, t, sl[i], cl[i]) + t * spec.cost.d_t(xs, t, sl[i], cl[i]))
                + el[i] * spec.g.d_t(xs, t, sl[i], cl[i]) * t;
            if pl[i] != 0.0 {
                term += pl[i]
                    * (a_state[i] + spec.psi.eval(xs, t, sl[i]) - cl[i]
                        + spec.psi.d_t(xs, t, sl[i]) * t);
            }
            acc += grid.weights[i] * term;
        }
        integral += wt * acc;
    }
    let r_t_time_partial = (integral + time_partial_terms).abs();
    let r_t_as_printed = (integral + printed_terms).abs();

    let mut r_comp = 0.0f64;
    for (m, tf) in mult_phys.mu.iter().zip(&spec.terminal_constraints) {
        let psi = tf.value(t_horizon, terminal_state, grid);
        r_comp = r_comp.max((m * psi).abs()).max(-m);
    }

    PhysicalResiduals {
        r_u,
        r_t_time_partial,
        r_t_as_printed,
        r_comp,
    }
}
