//! Finite-difference ground-truth checks for the assembled Lagrangian
//! gradient: directional derivatives in the control and in the horizon
//! must match central differences of the state-eliminated Lagrangian.

use chronopt_core::field::{Horizon, SpaceTimeField};
use chronopt_core::optimality::{
    fd_directional_dt, fd_directional_dv, grad_lagrangian, solve_phi_scalar, MultiplierSet,
};
use chronopt_core::problem::{build_problem, CatalogEntry, ProblemSpec};
use chronopt_core::reduction::{reduced_state, ControlPoint};
use chronopt_core::state::{Discretization, Scheme};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn nonlinear_spec() -> ProblemSpec {
    build_problem(
        &[
            CatalogEntry::PsiCubic { c: 1.0 },
            CatalogEntry::CostTrackingQuadratic {
                q: 1.0,
                beta: 0.4,
                c0: 0.2,
                t_lin: 0.3,
                target_amp: 1.0,
                target_decay: 0.5,
            },
            CatalogEntry::GIdentity,
            CatalogEntry::Y0Sine { amp: 0.7 },
            CatalogEntry::OpLaplacian { kappa: 0.8 },
            CatalogEntry::Psi0Combo {
                time_lin: 0.5,
                time_quad: 0.0,
                time_ref: 0.0,
                state_weight: 1.0,
                target_amp: 0.0,
            },
            CatalogEntry::TerminalNormBall {
                radius: 0.2,
                weight: 1.0,
            },
        ],
        1,
        &[1.0],
        (-4.0, 4.0),
        (0.3, 3.0),
    )
    .unwrap()
}

fn control_point(disc: &Discretization, t: f64) -> ControlPoint {
    let v = SpaceTimeField::from_fn(&disc.grid, Horizon::Unit, |x, s| {
        0.5 * (3.0 * x[0] + 2.0 * s).sin()
    });
    ControlPoint { t_horizon: t, v }
}

fn run_mode(scheme: Scheme, with_multipliers: bool) {
    let spec = nonlinear_spec();
    let disc = Discretization::build(&spec, &[9], 8, scheme).unwrap();
    let cp = control_point(&disc, 1.3);
    let state = reduced_state(&spec, &disc, &cp).unwrap();

    let (lambda, mu) = (1.0, if with_multipliers { vec![0.7] } else { vec![0.0] });
    let mut e = SpaceTimeField::zeros(&disc.grid, Horizon::Unit);
    if with_multipliers {
        // a fixed, sign-free pairing field exercises the e-terms of the
        // gradient; the eliminated Lagrangian uses the same fixed field
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..disc.grid.n_levels() {
            if !scheme.level_active(k) {
                continue;
            }
            for i in 0..disc.grid.n_nodes() {
                e.set(k, i, 0.3 * rng.gen_range(-1.0..1.0));
            }
        }
    }

    let grad = grad_lagrangian(&spec, &disc, &cp, &state, lambda, &mu, &e).unwrap();
    let phi_scalar = solve_phi_scalar(&spec, &disc, &cp, &state, &grad.adjoint.phi, lambda, &e);
    let mult = MultiplierSet {
        lambda,
        mu: mu.clone(),
        adjoint: grad.adjoint.phi.clone(),
        phi_scalar,
        e_field: e.clone(),
        terminal_condition: grad.adjoint.terminal_condition.clone(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut dir = SpaceTimeField::zeros(&disc.grid, Horizon::Unit);
        for k in 0..disc.grid.n_levels() {
            for i in 0..disc.grid.n_nodes() {
                dir.set(k, i, rng.gen_range(-1.0..1.0));
            }
        }
        let rel = fd_directional_dv(&spec, &disc, &cp, &mult, &grad, &dir).unwrap();
        worst = worst.max(rel);
    }
    assert!(
        worst <= 1e-5,
        "{scheme:?} mult={with_multipliers}: worst dv FD mismatch {worst:.3e}"
    );

    let rel_t = fd_directional_dt(&spec, &disc, &cp, &mult, &grad).unwrap();
    assert!(
        rel_t <= 1e-5,
        "{scheme:?} mult={with_multipliers}: dT FD mismatch {rel_t:.3e}"
    );
}

#[test]
fn gradient_matches_fd_crank_nicolson_plain() {
    run_mode(Scheme::CrankNicolson, false);
}

#[test]
fn gradient_matches_fd_crank_nicolson_with_multipliers() {
    run_mode(Scheme::CrankNicolson, true);
}

#[test]
fn gradient_matches_fd_backward_euler_plain() {
    run_mode(Scheme::BackwardEuler, false);
}

#[test]
fn gradient_matches_fd_backward_euler_with_multipliers() {
    run_mode(Scheme::BackwardEuler, true);
}
