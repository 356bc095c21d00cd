//! Solvers for the reduced problem over (T, v): projected gradient for
//! pure control boxes, augmented Lagrangian for terminal constraints and
//! general mixed constraints, plus the empirical quadratic-growth
//! certificate.

use crate::error::{Error, Result};
use crate::field::{Horizon, SpaceTimeField};
use crate::optimality::{
    compute_multipliers, grad_lagrangian, kkt_residuals, KKTReport, MultiplierSet,
};
use crate::problem::{MixedConstraint, ProblemSpec};
use crate::reduction::{objective, reduced_state, ControlPoint};
use crate::state::Discretization;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMode {
    ProjectedGradient,
    AugmentedLagrangian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: SolverMode,
    pub grad_tol: f64,
    pub feas_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub armijo_c1: f64,
    pub armijo_shrink: f64,
    pub initial_step: f64,
    pub penalty_initial: f64,
    pub penalty_growth: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: SolverMode::ProjectedGradient,
            grad_tol: 1e-8,
            feas_tol: 1e-8,
            max_outer: 30,
            max_inner: 4000,
            armijo_c1: 1e-4,
            armijo_shrink: 0.5,
            initial_step: 1.0,
            penalty_initial: 1.0,
            penalty_growth: 10.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grad_tol <= 0.0 || self.feas_tol <= 0.0 {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(Error::InvalidParameter(
                "armijo shrink must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIters,
    LineSearchStall,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub outer: usize,
    pub inner: usize,
    pub objective: f64,
    pub stationarity: f64,
    pub feasibility: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub control: ControlPoint,
    pub objective: f64,
    pub multipliers: MultiplierSet,
    pub kkt: KKTReport,
    pub termination: Termination,
    pub trace: Vec<IterationRecord>,
}

/// Nodewise clamp of a control field onto [a, b]; idempotent and the
/// nearest feasible point at every node.
pub fn project_box(v: &SpaceTimeField, bounds: (f64, f64)) -> SpaceTimeField {
    let mut out = v.clone();
    for x in out.data_mut() {
        *x = x.clamp(bounds.0, bounds.1);
    }
    out
}

/// Exact gradient of the plain reduced objective at a control point.
pub fn gradient(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
) -> Result<(f64, SpaceTimeField)> {
    let state = reduced_state(spec, disc, cp)?;
    let e = SpaceTimeField::zeros(&disc.grid, Horizon::Unit);
    let mu = vec![0.0; spec.terminal_constraints.len()];
    let g = grad_lagrangian(spec, disc, cp, &state, 1.0, &mu, &e)?;
    Ok((g.d_horizon, g.dv))
}

/// Weighted duality pairing between a Riesz-representative gradient field
/// and a direction.
fn pair(disc: &Discretization, grad: &SpaceTimeField, dir: &SpaceTimeField) -> f64 {
    let grid = &disc.grid;
    let mut acc = 0.0;
    for k in 0..grid.n_levels() {
        let wt = disc.scheme.time_weight(grid, k);
        if wt == 0.0 {
            continue;
        }
        let gl = grad.level(k);
        let dl = dir.level(k);
        let mut s = 0.0;
        for i in 0..grid.n_nodes() {
            s += grid.weights[i] * gl[i] * dl[i];
        }
        acc += wt * s;
    }
    acc
}

/// Augmented-Lagrangian bookkeeping for one inner problem.
struct AlState {
    mu: Vec<f64>,
    eta_plus: SpaceTimeField,
    eta_minus: SpaceTimeField,
    rho: f64,
    /// Box projection applies to v directly (identity constraint); general
    /// g goes through the penalty fields instead.
    box_on_v: bool,
}

impl AlState {
    fn effective_mu(&self, psi: &[f64]) -> Vec<f64> {
        self.mu
            .iter()
            .zip(psi)
            .map(|(m, p)| (m + self.rho * p).max(0.0))
            .collect()
    }

    fn effective_e(
        &self,
        spec: &ProblemSpec,
        disc: &Discretization,
        cp: &ControlPoint,
        state: &SpaceTimeField,
    ) -> SpaceTimeField {
        let grid = &disc.grid;
        let mut e = SpaceTimeField::zeros(grid, Horizon::Unit);
        if self.box_on_v {
            return e;
        }
        let (a, b) = spec.bounds;
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
                let up = (self.eta_plus.get(k, i) + self.rho * (g - b)).max(0.0);
                let lo = (self.eta_minus.get(k, i) + self.rho * (a - g)).max(0.0);
                e.set(k, i, up - lo);
            }
        }
        e
    }

    /// Value of the augmented terms added to the objective.
    fn penalty_value(
        &self,
        spec: &ProblemSpec,
        disc: &Discretization,
        cp: &ControlPoint,
        state: &SpaceTimeField,
        psi: &[f64],
    ) -> f64 {
        let mut acc = 0.0;
        for (m, p) in self.mu.iter().zip(psi) {
            let hat = (m + self.rho * p).max(0.0);
            acc += (hat * hat - m * m) / (2.0 * self.rho);
        }
        if !self.box_on_v {
            let grid = &disc.grid;
            let (a, b) = spec.bounds;
            for k in 0..grid.n_levels() {
                let wt = disc.scheme.time_weight(grid, k);
                if wt == 0.0 {
                    continue;
                }
                let t = cp.t_horizon * grid.s_level(k);
                let sl = state.level(k);
                let cl = cp.v.level(k);
                let mut s = 0.0;
                for i in 0..grid.n_nodes() {
                    let x = grid.node_coord(i);
                    let g = spec.g.eval(&x[..spec.spatial_dim], t, sl[i], cl[i]);
                    let up = (self.eta_plus.get(k, i) + self.rho * (g - b)).max(0.0);
                    let lo = (self.eta_minus.get(k, i) + self.rho * (a - g)).max(0.0);
                    s += grid.weights[i]
                        * ((up * up - self.eta_plus.get(k, i).powi(2))
                            + (lo * lo - self.eta_minus.get(k, i).powi(2)));
                }
                acc += wt * s / (2.0 * self.rho);
            }
        }
        acc
    }
}

fn terminal_values(
    spec: &ProblemSpec,
    disc: &Discretization,
    t_horizon: f64,
    state: &SpaceTimeField,
) -> Vec<f64> {
    let grid = &disc.grid;
    let terminal_state = state.level(grid.n_time);
    spec.terminal_constraints
        .iter()
        .map(|tf| tf.value(t_horizon, terminal_state, grid))
        .collect()
}

fn constraint_violation(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
    psi: &[f64],
) -> f64 {
    let grid = &disc.grid;
    let mut worst = psi.iter().fold(0.0f64, |m, p| m.max(*p));
    let (a, b) = spec.bounds;
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
            worst = worst.max(g - b).max(a - g);
        }
    }
    worst
}

struct InnerOutcome {
    cp: ControlPoint,
    state: SpaceTimeField,
    stationarity: f64,
    stalled: bool,
}

/// Projected-gradient (or plain-gradient when the box does not apply to v)
/// minimization of the augmented objective.
#[allow(clippy::too_many_arguments)]
fn inner_minimize(
    spec: &ProblemSpec,
    disc: &Discretization,
    cfg: &SolverConfig,
    al: &AlState,
    start: ControlPoint,
    tol: f64,
    outer: usize,
    trace: &mut Vec<IterationRecord>,
) -> Result<InnerOutcome> {
    let grid = &disc.grid;
    let (t_lo, t_hi) = spec.horizon;
    let mut cp = start;
    if al.box_on_v {
        cp.v = project_box(&cp.v, spec.bounds);
    }
    cp.t_horizon = cp.t_horizon.clamp(t_lo, t_hi);

    let mut state = reduced_state(spec, disc, &cp)?;
    let mut psi = terminal_values(spec, disc, cp.t_horizon, &state);
    let mut value = objective(spec, grid, disc.scheme, cp.t_horizon, &state, &cp.v)
        + al.penalty_value(spec, disc, &cp, &state, &psi);
    let mut step = cfg.initial_step;
    let mut stationarity = f64::INFINITY;
    let mut stalled = false;

    for it in 0..cfg.max_inner {
        let mu_hat = al.effective_mu(&psi);
        let e_hat = al.effective_e(spec, disc, &cp, &state);
        let grad = grad_lagrangian(spec, disc, &cp, &state, 1.0, &mu_hat, &e_hat)?;

        // projected-gradient stationarity at unit step
        let t_proj = (cp.t_horizon - grad.d_horizon).clamp(t_lo, t_hi);
        let mut stat = (cp.t_horizon - t_proj).abs();
        for k in 0..grid.n_levels() {
            if !disc.scheme.level_active(k) {
                continue;
            }
            for i in 0..grid.n_nodes() {
                let g = grad.dv.get(k, i);
                let moved = if al.box_on_v {
                    cp.v.get(k, i) - (cp.v.get(k, i) - g).clamp(spec.bounds.0, spec.bounds.1)
                } else {
                    g
                };
                stat = stat.max(moved.abs());
            }
        }
        stationarity = stat;
        trace.push(IterationRecord {
            outer,
            inner: it,
            objective: value,
            stationarity: stat,
            feasibility: constraint_violation(spec, disc, &cp, &state, &psi),
            penalty: al.rho,
        });
        if stat <= tol {
            break;
        }

        // Armijo backtracking on the projected step
        let mut alpha = step;
        let mut accepted = false;
        while alpha >= 1e-14 {
            let t_new = (cp.t_horizon - alpha * grad.d_horizon).clamp(t_lo, t_hi);
            let mut v_new = cp.v.clone();
            v_new.axpy(-alpha, &grad.dv);
            if al.box_on_v {
                v_new = project_box(&v_new, spec.bounds);
            }
            let cand = ControlPoint {
                t_horizon: t_new,
                v: v_new,
            };
            let state_new = reduced_state(spec, disc, &cand)?;
            let psi_new = terminal_values(spec, disc, cand.t_horizon, &state_new);
            let value_new = objective(spec, grid, disc.scheme, cand.t_horizon, &state_new, &cand.v)
                + al.penalty_value(spec, disc, &cand, &state_new, &psi_new);
            let mut dv_dir = cand.v.clone();
            dv_dir.axpy(-1.0, &cp.v);
            let pred = grad.d_horizon * (cand.t_horizon - cp.t_horizon) + pair(disc, &grad.dv, &dv_dir);
            if value_new <= value + cfg.armijo_c1 * pred {
                cp = cand;
                state = state_new;
                psi = psi_new;
                value = value_new;
                accepted = true;
                break;
            }
            alpha *= cfg.armijo_shrink;
        }
        if !accepted {
            stalled = true;
            break;
        }
        step = (alpha * 2.0).min(cfg.initial_step.max(1.0));
    }

    Ok(InnerOutcome {
        cp,
        state,
        stationarity,
        stalled,
    })
}

/// Solves the reduced problem from an initial control point. The default
/// initial point (midpoint control, midpoint horizon) is available from
/// [`default_initial_point`].
pub fn solve(
    spec: &ProblemSpec,
    disc: &Discretization,
    cfg: &SolverConfig,
    initial: ControlPoint,
) -> Result<SolveResult> {
    cfg.validate()?;
    initial.validate(spec, &disc.grid)?;
    let grid = &disc.grid;
    let m = spec.terminal_constraints.len();
    let box_on_v = matches!(spec.g, MixedConstraint::Identity);
    let mut trace = Vec::new();

    let pg_only = cfg.mode == SolverMode::ProjectedGradient;
    if pg_only && (m > 0 || !box_on_v) {
        return Err(Error::InvalidParameter(
            "projected-gradient mode requires g = u and no terminal constraints".into(),
        ));
    }

    let mut al = AlState {
        mu: vec![0.0; m],
        eta_plus: SpaceTimeField::zeros(grid, Horizon::Unit),
        eta_minus: SpaceTimeField::zeros(grid, Horizon::Unit),
        rho: cfg.penalty_initial,
        box_on_v,
    };

    let n_outer = if pg_only { 1 } else { cfg.max_outer };
    let mut cp = initial;
    let mut last: Option<InnerOutcome> = None;
    let mut prev_viol = f64::INFINITY;
    let mut termination = Termination::MaxIters;

    for outer in 0..n_outer {
        let outcome = inner_minimize(spec, disc, cfg, &al, cp.clone(), cfg.grad_tol, outer, &mut trace)?;
        cp = outcome.cp.clone();
        let psi = terminal_values(spec, disc, cp.t_horizon, &outcome.state);
        let viol = constraint_violation(spec, disc, &cp, &outcome.state, &psi);
        let inner_done = outcome.stationarity <= cfg.grad_tol;
        let stalled = outcome.stalled;
        last = Some(outcome);

        if viol <= cfg.feas_tol && inner_done {
            termination = Termination::Converged;
            break;
        }
        if pg_only {
            termination = if stalled {
                Termination::LineSearchStall
            } else if inner_done {
                Termination::Converged
            } else {
                Termination::MaxIters
            };
            break;
        }

        // multiplier and penalty updates
        for (mu, p) in al.mu.iter_mut().zip(&psi) {
            *mu = (*mu + al.rho * p).max(0.0);
        }
        if !al.box_on_v {
            let st = &last.as_ref().unwrap().state;
            let (a, b) = spec.bounds;
            for k in 0..grid.n_levels() {
                if !disc.scheme.level_active(k) {
                    continue;
                }
                let t = cp.t_horizon * grid.s_level(k);
                for i in 0..grid.n_nodes() {
                    let x = grid.node_coord(i);
                    let g = spec
                        .g
                        .eval(&x[..spec.spatial_dim], t, st.get(k, i), cp.v.get(k, i));
                    let up = (al.eta_plus.get(k, i) + al.rho * (g - b)).max(0.0);
                    let lo = (al.eta_minus.get(k, i) + al.rho * (a - g)).max(0.0);
                    al.eta_plus.set(k, i, up);
                    al.eta_minus.set(k, i, lo);
                }
            }
        }
        if viol > 0.25 * prev_viol {
            al.rho *= cfg.penalty_growth;
        }
        prev_viol = viol;
        if stalled && viol <= cfg.feas_tol {
            termination = Termination::LineSearchStall;
            break;
        }
    }

    let outcome = last.expect("at least one inner solve ran");
    let state = outcome.state;
    let obj = objective(spec, grid, disc.scheme, cp.t_horizon, &state, &cp.v);
    let multipliers = compute_multipliers(spec, disc, &cp, &state, 1.0, &al.mu)?;
    let kkt = kkt_residuals(spec, disc, &cp, &state, &multipliers, None)?;
    if termination == Termination::Converged
        && !(kkt.r_u <= 10.0 * cfg.grad_tol && kkt.r_feas <= 10.0 * cfg.feas_tol)
    {
        termination = Termination::MaxIters;
    }
    Ok(SolveResult {
        control: cp,
        objective: obj,
        multipliers,
        kkt,
        termination,
        trace,
    })
}

/// Midpoint control and midpoint horizon; the deterministic default start.
pub fn default_initial_point(spec: &ProblemSpec, disc: &Discretization) -> ControlPoint {
    let v = SpaceTimeField::constant(
        &disc.grid,
        Horizon::Unit,
        0.5 * (spec.bounds.0 + spec.bounds.1),
    );
    ControlPoint {
        t_horizon: 0.5 * (spec.horizon.0 + spec.horizon.1),
        v,
    }
}

/// Empirical quadratic-growth certificate around a converged solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthReport {
    /// min over probes of (J(probe) - J*) / (ΔT² + ‖Δv‖²).
    pub kappa_hat: f64,
    pub n_accepted: usize,
    pub n_discarded: usize,
    pub radius: f64,
    pub seed: u64,
    /// Set when kappa_hat ≤ 0: a probe did at least as well as the
    /// reported optimum.
    pub flagged_nonpositive: bool,
}

/// Samples feasible perturbations within the local distance `radius` and
/// reports the worst growth ratio. Infeasible probes that cannot be
/// restored by increasing the horizon are discarded and counted.
pub fn growth_certificate(
    spec: &ProblemSpec,
    disc: &Discretization,
    result: &SolveResult,
    radius: f64,
    n_probes: usize,
    seed: u64,
) -> Result<GrowthReport> {
    let grid = &disc.grid;
    let base_obj = result.objective;
    let feas_tol = 1e-9;

    let ratios: Vec<Option<f64>> = (0..n_probes)
        .into_par_iter()
        .map(|p| -> Result<Option<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(p as u64));
            let dt: f64 = rng.gen_range(-0.5..0.5) * radius;
            let mut dv = SpaceTimeField::zeros(grid, Horizon::Unit);
            let mut sup = 0.0f64;
            for k in 0..grid.n_levels() {
                if !disc.scheme.level_active(k) {
                    continue;
                }
                for i in 0..grid.n_nodes() {
                    let val: f64 = rng.sample(rand_distr::StandardNormal);
                    dv.set(k, i, val);
                    sup = sup.max(val.abs());
                }
            }
            let amp: f64 = rng.gen_range(0.1..0.5) * radius;
            if sup > 0.0 {
                dv.scale(amp / sup);
            }

            let mut t_probe = (result.control.t_horizon + dt).clamp(spec.horizon.0, spec.horizon.1);
            let mut v_probe = result.control.v.clone();
            v_probe.axpy(1.0, &dv);
            if matches!(spec.g, MixedConstraint::Identity) {
                v_probe = project_box(&v_probe, spec.bounds);
            }
            let cp = ControlPoint {
                t_horizon: t_probe,
                v: v_probe.clone(),
            };
            let mut state = reduced_state(spec, disc, &cp)?;
            let mut psi = terminal_values(spec, disc, t_probe, &state);

            // restore terminal feasibility by pushing the horizon up
            if psi.iter().any(|&p| p > feas_tol) {
                let mut lo = t_probe;
                let mut hi = spec.horizon.1;
                let feasible_at = |t: f64| -> Result<bool> {
                    let cpt = ControlPoint {
                        t_horizon: t,
                        v: v_probe.clone(),
                    };
                    let st = reduced_state(spec, disc, &cpt)?;
                    Ok(terminal_values(spec, disc, t, &st)
                        .iter()
                        .all(|&p| p <= feas_tol))
                };
                if !feasible_at(hi)? {
                    return Ok(None);
                }
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if feasible_at(mid)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo < 1e-12 {
                        break;
                    }
                }
                t_probe = hi;
                let cpt = ControlPoint {
                    t_horizon: t_probe,
                    v: v_probe.clone(),
                };
                state = reduced_state(spec, disc, &cpt)?;
                psi = terminal_values(spec, disc, t_probe, &state);
                if psi.iter().any(|&p| p > feas_tol) {
                    return Ok(None);
                }
            }

            // mixed-constraint feasibility for non-identity g
            if !matches!(spec.g, MixedConstraint::Identity) {
                let cpt = ControlPoint {
                    t_horizon: t_probe,
                    v: v_probe.clone(),
                };
                if constraint_violation(spec, disc, &cpt, &state, &psi) > feas_tol {
                    return Ok(None);
                }
            }

            let delta_t = t_probe - result.control.t_horizon;
            let mut delta_v = v_probe.clone();
            delta_v.axpy(-1.0, &result.control.v);
            let denom = delta_t * delta_t + {
                let mut s = 0.0;
                for k in 0..grid.n_levels() {
                    let wt = disc.scheme.time_weight(grid, k);
                    let lv = delta_v.level(k);
                    let mut acc = 0.0;
                    for i in 0..grid.n_nodes() {
                        acc += grid.weights[i] * lv[i] * lv[i];
                    }
                    s += wt * acc;
                }
                s
            };
            if denom <= 1e-16 {
                return Ok(None);
            }
            let obj = objective(spec, grid, disc.scheme, t_probe, &state, &v_probe);
            Ok(Some((obj - base_obj) / denom))
        })
        .collect::<Result<Vec<_>>>()?;

    let accepted: Vec<f64> = ratios.iter().filter_map(|r| *r).collect();
    if accepted.is_empty() {
        return Err(Error::EmptySample(
            "all growth probes were discarded".into(),
        ));
    }
    let kappa_hat = accepted.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(GrowthReport {
        kappa_hat,
        n_accepted: accepted.len(),
        n_discarded: n_probes - accepted.len(),
        radius,
        seed,
        flagged_nonpositive: kappa_hat <= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{build_problem, CatalogEntry};

    #[test]
    fn projection_is_idempotent_clamp() {
        let spec = build_problem(
            &[
                CatalogEntry::PsiZero,
                CatalogEntry::CostTrackingQuadratic {
                    q: 0.0,
                    beta: 1.0,
                    c0: 0.0,
                    t_lin: 0.0,
                    target_amp: 0.0,
                    target_decay: 0.0,
                },
                CatalogEntry::GIdentity,
            ],
            1,
            &[1.0],
            (-1.0, 1.0),
            (1.0, 1.0),
        )
        .unwrap();
        let disc = Discretization::build(&spec, &[5], 4, Scheme::CrankNicolson).unwrap();
        let v = SpaceTimeField::from_fn(&disc.grid, Horizon::Unit, |x, s| 3.0 * (x[0] - s));
        let p1 = project_box(&v, spec.bounds);
        let p2 = project_box(&p1, spec.bounds);
        assert_eq!(p1.data(), p2.data());
        assert!(p1.sup_norm() <= 1.0);
        let above = SpaceTimeField::constant(&disc.grid, Horizon::Unit, 2.0);
        let pa = project_box(&above, spec.bounds);
        assert!(pa.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pure_time_cost_drives_horizon_to_lower_bracket() {
        let spec = build_problem(
            &[
                CatalogEntry::PsiZero,
                CatalogEntry::CostTrackingQuadratic {
                    q: 0.0,
                    beta: 0.0,
                    c0: 1.0,
                    t_lin: 0.0,
                    target_amp: 0.0,
                    target_decay: 0.0,
                },
                CatalogEntry::GIdentity,
                CatalogEntry::Y0Zero,
            ],
            1,
            &[1.0],
            (-1.0, 1.0),
            (0.5, 2.0),
        )
        .unwrap();
        let disc = Discretization::build(&spec, &[7], 6, Scheme::CrankNicolson).unwrap();
        let cfg = SolverConfig::default();
        let init = default_initial_point(&spec, &disc);
        let result = solve(&spec, &disc, &cfg, init).unwrap();
        assert!(
            (result.control.t_horizon - 0.5).abs() < 1e-9,
            "T = {}",
            result.control.t_horizon
        );
        // objective J = T * |domain| * c0 at v irrelevant
        assert!((result.objective - 0.5).abs() < 1e-9);
    }

    #[test]
    fn armijo_iterations_never_increase_objective() {
        let spec = build_problem(
            &[
                CatalogEntry::PsiCubic { c: 1.0 },
                CatalogEntry::CostTrackingQuadratic {
                    q: 1.0,
                    beta: 0.5,
                    c0: 0.0,
                    t_lin: 0.0,
                    target_amp: 1.5,
                    target_decay: 0.0,
                },
                CatalogEntry::GIdentity,
                CatalogEntry::Y0Zero,
            ],
            1,
            &[1.0],
            (-2.0, 2.0),
            (1.0, 1.0),
        )
        .unwrap();
        let disc = Discretization::build(&spec, &[7], 6, Scheme::CrankNicolson).unwrap();
        let cfg = SolverConfig {
            grad_tol: 1e-9,
            ..SolverConfig::default()
        };
        let result = solve(&spec, &disc, &cfg, default_initial_point(&spec, &disc)).unwrap();
        assert_eq!(result.termination, Termination::Converged);
        for w in result.trace.windows(2) {
            assert!(
                w[1].objective <= w[0].objective + 1e-12,
                "objective increased: {} -> {}",
                w[0].objective,
                w[1].objective
            );
        }
    }
}
