//! The continuous optimal-control problem as data.
//!
//! All nonlinearities, costs and constraints come from a fixed catalog of
//! named, parameterized ingredients, so a scenario is fully described by a
//! JSON entry list and reconstruction is deterministic. Evaluators capture
//! their parameters by value at build time.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::operator::Coefficients;
use serde::{Deserialize, Serialize};

fn one() -> f64 {
    1.0
}

/// A serializable catalog item. `build_problem` maps a list of these onto
/// the slots of a [`ProblemSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CatalogEntry {
    /// ψ ≡ 0 (linear state equation).
    PsiZero,
    /// ψ(y) = c y³ with c ≥ 0.
    PsiCubic {
        #[serde(default = "one")]
        c: f64,
    },
    /// ψ(t, y) = c (1 + rate·t) y³; time-dependent monotone nonlinearity.
    PsiCubicRamp { c: f64, rate: f64 },
    /// ψ(y) = c y. Negative c violates the monotonicity hypothesis; kept in
    /// the catalog so the hypothesis checker has something to flag.
    PsiLinear { c: f64 },
    /// L = q/2 (y - y_d)² + beta/2 u² + c0 + t_lin·t with
    /// y_d(x,t) = target_amp · Π sin(π x_i/ℓ_i) · exp(-target_decay·t).
    CostTrackingQuadratic {
        #[serde(default)]
        q: f64,
        #[serde(default)]
        beta: f64,
        #[serde(default)]
        c0: f64,
        #[serde(default)]
        t_lin: f64,
        #[serde(default)]
        target_amp: f64,
        #[serde(default)]
        target_decay: f64,
    },
    /// g = u (pure control box).
    GIdentity,
    /// g = -u³ - u(y² + 1).
    GExample31,
    /// g = u + gamma·u².
    GQuadraticBend { gamma: f64 },
    /// ψ_i(T, ζ) = weight/2 ∫ ζ² dx - radius ≤ 0.
    TerminalNormBall {
        radius: f64,
        #[serde(default = "one")]
        weight: f64,
    },
    /// ψ₀ = time_lin·T + time_quad/2 (T - time_ref)²
    ///      + state_weight/2 ∫ (ζ - target_amp·Πsin)² dx.
    Psi0Combo {
        #[serde(default)]
        time_lin: f64,
        #[serde(default)]
        time_quad: f64,
        #[serde(default)]
        time_ref: f64,
        #[serde(default)]
        state_weight: f64,
        #[serde(default)]
        target_amp: f64,
    },
    /// y₀ ≡ 0.
    Y0Zero,
    /// y₀ = amp · Π sin(π x_i/ℓ_i).
    Y0Sine { amp: f64 },
    /// a_ij = kappa δ_ij.
    OpLaplacian {
        #[serde(default = "one")]
        kappa: f64,
    },
    /// Full symmetric coefficient matrix (a12 must equal a21).
    OpAnisotropic { a11: f64, a12: f64, a21: f64, a22: f64 },
}

/// Spatial profile used for initial states and tracking targets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SpatialProfile {
    Zero,
    SineProduct { amp: f64, extent: Vec<f64> },
}

impl SpatialProfile {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            SpatialProfile::Zero => 0.0,
            SpatialProfile::SineProduct { amp, extent } => {
                let mut v = *amp;
                for (xi, li) in x.iter().zip(extent) {
                    v *= (std::f64::consts::PI * xi / li).sin();
                }
                v
            }
        }
    }
}

/// Semilinear term ψ(x, t, y) with its first and second partials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Nonlinearity {
    Zero,
    Cubic { c: f64 },
    CubicRamp { c: f64, rate: f64 },
    Linear { c: f64 },
}

impl Nonlinearity {
    pub fn eval(&self, _x: &[f64], t: f64, y: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Cubic { c } => c * y * y * y,
            Nonlinearity::CubicRamp { c, rate } => c * (1.0 + rate * t) * y * y * y,
            Nonlinearity::Linear { c } => c * y,
        }
    }

    pub fn d_t(&self, _x: &[f64], _t: f64, y: f64) -> f64 {
        match self {
            Nonlinearity::CubicRamp { c, rate } => c * rate * y * y * y,
            _ => 0.0,
        }
    }

    pub fn d_y(&self, _x: &[f64], t: f64, y: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Cubic { c } => 3.0 * c * y * y,
            Nonlinearity::CubicRamp { c, rate } => 3.0 * c * (1.0 + rate * t) * y * y,
            Nonlinearity::Linear { c } => *c,
        }
    }

    pub fn d_tt(&self, _x: &[f64], _t: f64, _y: f64) -> f64 {
        0.0
    }

    pub fn d_ty(&self, _x: &[f64], _t: f64, y: f64) -> f64 {
        match self {
            Nonlinearity::CubicRamp { c, rate } => 3.0 * c * rate * y * y,
            _ => 0.0,
        }
    }

    pub fn d_yy(&self, _x: &[f64], t: f64, y: f64) -> f64 {
        match self {
            Nonlinearity::Zero | Nonlinearity::Linear { .. } => 0.0,
            Nonlinearity::Cubic { c } => 6.0 * c * y,
            Nonlinearity::CubicRamp { c, rate } => 6.0 * c * (1.0 + rate * t) * y,
        }
    }
}

/// Running cost L(x, t, y, u) with all first and second partials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunningCost {
    pub q: f64,
    pub beta: f64,
    pub c0: f64,
    pub t_lin: f64,
    pub target: SpatialProfile,
    pub target_decay: f64,
}

impl RunningCost {
    fn yd(&self, x: &[f64], t: f64) -> (f64, f64, f64) {
        let base = self.target.eval(x);
        let e = (-self.target_decay * t).exp();
        let yd = base * e;
        (yd, -self.target_decay * yd, self.target_decay * self.target_decay * yd)
    }

    pub fn eval(&self, x: &[f64], t: f64, y: f64, u: f64) -> f64 {
        let (yd, _, _) = self.yd(x, t);
        0.5 * self.q * (y - yd) * (y - yd) + 0.5 * self.beta * u * u + self.c0
            + self.t_lin * t
    }

    pub fn d_t(&self, x: &[f64], t: f64, y: f64, _u: f64) -> f64 {
        let (yd, yd_t, _) = self.yd(x, t);
        -self.q * (y - yd) * yd_t + self.t_lin
    }

    pub fn d_y(&self, x: &[f64], t: f64, y: f64, _u: f64) -> f64 {
        let (yd, _, _) = self.yd(x, t);
        self.q * (y - yd)
    }

    pub fn d_u(&self, _x: &[f64], _t: f64, _y: f64, u: f64) -> f64 {
        self.beta * u
    }

    pub fn d_tt(&self, x: &[f64], t: f64, y: f64, _u: f64) -> f64 {
        let (yd, yd_t, yd_tt) = self.yd(x, t);
        self.q * yd_t * yd_t - self.q * (y - yd) * yd_tt
    }

    pub fn d_ty(&self, x: &[f64], t: f64, _y: f64, _u: f64) -> f64 {
        let (_, yd_t, _) = self.yd(x, t);
        -self.q * yd_t
    }

    pub fn d_tu(&self, _x: &[f64], _t: f64, _y: f64, _u: f64) -> f64 {
        0.0
    }

    pub fn d_yy(&self, _x: &[f64], _t: f64, _y: f64, _u: f64) -> f64 {
        self.q
    }

    pub fn d_yu(&self, _x: &[f64], _t: f64, _y: f64, _u: f64) -> f64 {
        0.0
    }

    pub fn d_uu(&self, _x: &[f64], _t: f64, _y: f64, _u: f64) -> f64 {
        self.beta
    }
}

/// Mixed pointwise constraint integrand g(x, t, y, u).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum MixedConstraint {
    Identity,
    Example31,
    QuadraticBend { gamma: f64 },
}

impl MixedConstraint {
    pub fn eval(&self, _x: &[f64], _t: f64, y: f64, u: f64) -> f64 {
        match self {
            MixedConstraint::Identity => u,
            MixedConstraint::Example31 => -u * u * u - u * (y * y + 1.0),
            MixedConstraint::QuadraticBend { gamma } => u + gamma * u * u,
        }
    }

    pub fn d_t(&self, _x: &[f64], _t: f64, _y: f64, _u: f64) -> f64 {
        0.0
    }

    pub fn d_y(&self, _x: &[f64], _t: f64, y: f64, u: f64) -> f64 {
        match self {
            MixedConstraint::Example31 => -2.0 * u * y,
            _ => 0.0,
        }
    }

    pub fn d_u(&self, _x: &[f64], _t: f64, y: f64, u: f64) -> f64 {
        match self {
            MixedConstraint::Identity => 1.0,
            MixedConstraint::Example31 => -3.0 * u * u - (y * y + 1.0),
            MixedConstraint::QuadraticBend { gamma } => 1.0 + 2.0 * gamma * u,
        }
    }

    pub fn d_tt(&self, _x: &[f64], _t: f64, _y: f64, _u: f64) -> f64 {
        0.0
    }

    pub fn d_ty(&self, _x: &[f64], _t: f64, _y: f64, _u: f64) -> f64 {
        0.0
    }

    pub fn d_tu(&self, _x: &[f64], _t: f64, _y: f64, _u: f64) -> f64 {
        0.0
    }

    pub fn d_yy(&self, _x: &[f64], _t: f64, _y: f64, u: f64) -> f64 {
        match self {
            MixedConstraint::Example31 => -2.0 * u,
            _ => 0.0,
        }
    }

    pub fn d_yu(&self, _x: &[f64], _t: f64, y: f64, _u: f64) -> f64 {
        match self {
            MixedConstraint::Example31 => -2.0 * y,
            _ => 0.0,
        }
    }

    pub fn d_uu(&self, _x: &[f64], _t: f64, _y: f64, u: f64) -> f64 {
        match self {
            MixedConstraint::Example31 => -6.0 * u,
            MixedConstraint::QuadraticBend { gamma } => 2.0 * gamma,
            MixedConstraint::Identity => 0.0,
        }
    }
}

/// Terminal functional in the integral form
/// `offset + time_lin·T + time_quad/2 (T - time_ref)² + state_weight/2 ∫ (ζ - z_d)² dx`.
///
/// Both the terminal cost ψ₀ and the terminal constraints ψ_i use this
/// shape; the mixed T-ζ second derivative vanishes for it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TerminalFunctional {
    pub offset: f64,
    pub time_lin: f64,
    pub time_quad: f64,
    pub time_ref: f64,
    pub state_weight: f64,
    pub target: SpatialProfile,
}

impl TerminalFunctional {
    pub fn zero() -> Self {
        TerminalFunctional {
            offset: 0.0,
            time_lin: 0.0,
            time_quad: 0.0,
            time_ref: 0.0,
            state_weight: 0.0,
            target: SpatialProfile::Zero,
        }
    }

    pub fn value(&self, t_horizon: f64, state: &[f64], grid: &Grid) -> f64 {
        let mut acc = self.offset + self.time_lin * t_horizon
            + 0.5 * self.time_quad * (t_horizon - self.time_ref) * (t_horizon - self.time_ref);
        if self.state_weight != 0.0 {
            let mut s = 0.0;
            for (i, (&z, &w)) in state.iter().zip(&grid.weights).enumerate() {
                let x = grid.node_coord(i);
                let d = z - self.target.eval(&x[..grid.dim]);
                s += w * d * d;
            }
            acc += 0.5 * self.state_weight * s;
        }
        acc
    }

    pub fn d_t(&self, t_horizon: f64, _state: &[f64], _grid: &Grid) -> f64 {
        self.time_lin + self.time_quad * (t_horizon - self.time_ref)
    }

    pub fn d_tt(&self, _t_horizon: f64, _state: &[f64], _grid: &Grid) -> f64 {
        self.time_quad
    }

    /// Nodal density of the state derivative: pairing with a direction h is
    /// `Σ_i w_i grad_i h_i`.
    pub fn grad_state(&self, _t_horizon: f64, state: &[f64], grid: &Grid, out: &mut [f64]) {
        for (i, (&z, o)) in state.iter().zip(out.iter_mut()).enumerate() {
            let x = grid.node_coord(i);
            *o = self.state_weight * (z - self.target.eval(&x[..grid.dim]));
        }
    }

    /// Quadratic form of the second state derivative on a direction.
    pub fn state_quadratic(&self, _t_horizon: f64, dir: &[f64], grid: &Grid) -> f64 {
        if self.state_weight == 0.0 {
            return 0.0;
        }
        let mut s = 0.0;
        for (&d, &w) in dir.iter().zip(&grid.weights) {
            s += w * d * d;
        }
        self.state_weight * s
    }

    /// Mixed T-state second derivative paired with (T, h). Zero for the
    /// separable catalog form.
    pub fn mixed_tz(&self, _t: f64, _dir: &[f64], _grid: &Grid) -> f64 {
        0.0
    }
}

/// Initial state evaluator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialState {
    pub profile: SpatialProfile,
}

impl InitialState {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.profile.eval(x)
    }
}

/// The fully resolved continuous problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub spatial_dim: usize,
    pub domain_extent: Vec<f64>,
    pub y0: InitialState,
    pub psi: Nonlinearity,
    pub cost: RunningCost,
    pub terminal_cost: TerminalFunctional,
    pub terminal_constraints: Vec<TerminalFunctional>,
    pub g: MixedConstraint,
    /// Mixed-constraint bounds a < b.
    pub bounds: (f64, f64),
    /// Horizon bracket [T_lo, T_hi] with T_lo > 0.
    pub horizon: (f64, f64),
    pub coefficients: Coefficients,
}

impl ProblemSpec {
    pub fn n_terminal_constraints(&self) -> usize {
        self.terminal_constraints.len()
    }

    /// Activity tolerance for the mixed constraint, scale-free in (b - a).
    pub fn activity_tol(&self) -> f64 {
        1e-8 * (self.bounds.1 - self.bounds.0)
    }
}

/// Builds a [`ProblemSpec`] from a catalog entry list.
///
/// The nonlinearity, running cost and mixed-constraint slots must be filled
/// exactly once; terminal constraints may repeat; the terminal cost,
/// initial state and operator coefficients default to zero / zero /
/// unit Laplacian.
pub fn build_problem(
    entries: &[CatalogEntry],
    spatial_dim: usize,
    domain_extent: &[f64],
    bounds: (f64, f64),
    horizon: (f64, f64),
) -> Result<ProblemSpec> {
    if spatial_dim != 1 && spatial_dim != 2 {
        return Err(Error::InvalidParameter(format!(
            "spatial_dim must be 1 or 2, got {spatial_dim}"
        )));
    }
    if domain_extent.len() != spatial_dim {
        return Err(Error::DimensionMismatch(format!(
            "domain_extent has {} entries for dim {spatial_dim}",
            domain_extent.len()
        )));
    }
    if !(bounds.0 < bounds.1) {
        return Err(Error::InvalidParameter(format!(
            "bounds must satisfy a < b, got a={} b={}",
            bounds.0, bounds.1
        )));
    }
    if !(horizon.0 > 0.0 && horizon.0 <= horizon.1) {
        return Err(Error::InvalidParameter(format!(
            "horizon bracket must satisfy 0 < lo <= hi, got [{}, {}]",
            horizon.0, horizon.1
        )));
    }

    let mut psi: Option<Nonlinearity> = None;
    let mut cost: Option<RunningCost> = None;
    let mut g: Option<MixedConstraint> = None;
    let mut psi0: Option<TerminalFunctional> = None;
    let mut y0: Option<InitialState> = None;
    let mut coeffs: Option<Coefficients> = None;
    let mut terminals = Vec::new();

    fn fill<T>(slot: &mut Option<T>, v: T, name: &'static str) -> Result<()> {
        if slot.is_some() {
            return Err(Error::DuplicateSlot(name));
        }
        *slot = Some(v);
        Ok(())
    }

    let sine = |amp: f64| SpatialProfile::SineProduct {
        amp,
        extent: domain_extent.to_vec(),
    };

    for entry in entries {
        match entry.clone() {
            CatalogEntry::PsiZero => fill(&mut psi, Nonlinearity::Zero, "psi")?,
            CatalogEntry::PsiCubic { c } => fill(&mut psi, Nonlinearity::Cubic { c }, "psi")?,
            CatalogEntry::PsiCubicRamp { c, rate } => {
                fill(&mut psi, Nonlinearity::CubicRamp { c, rate }, "psi")?
            }
            CatalogEntry::PsiLinear { c } => fill(&mut psi, Nonlinearity::Linear { c }, "psi")?,
            CatalogEntry::CostTrackingQuadratic {
                q,
                beta,
                c0,
                t_lin,
                target_amp,
                target_decay,
            } => {
                let target = if target_amp == 0.0 {
                    SpatialProfile::Zero
                } else {
                    sine(target_amp)
                };
                fill(
                    &mut cost,
                    RunningCost {
                        q,
                        beta,
                        c0,
                        t_lin,
                        target,
                        target_decay,
                    },
                    "cost",
                )?
            }
            CatalogEntry::GIdentity => fill(&mut g, MixedConstraint::Identity, "g")?,
            CatalogEntry::GExample31 => fill(&mut g, MixedConstraint::Example31, "g")?,
            CatalogEntry::GQuadraticBend { gamma } => {
                fill(&mut g, MixedConstraint::QuadraticBend { gamma }, "g")?
            }
            CatalogEntry::TerminalNormBall { radius, weight } => {
                if radius <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "terminal-norm-ball radius must be positive".into(),
                    ));
                }
                terminals.push(TerminalFunctional {
                    offset: -radius,
                    time_lin: 0.0,
                    time_quad: 0.0,
                    time_ref: 0.0,
                    state_weight: weight,
                    target: SpatialProfile::Zero,
                });
            }
            CatalogEntry::Psi0Combo {
                time_lin,
                time_quad,
                time_ref,
                state_weight,
                target_amp,
            } => {
                let target = if target_amp == 0.0 {
                    SpatialProfile::Zero
                } else {
                    sine(target_amp)
                };
                fill(
                    &mut psi0,
                    TerminalFunctional {
                        offset: 0.0,
                        time_lin,
                        time_quad,
                        time_ref,
                        state_weight,
                        target,
                    },
                    "psi0",
                )?
            }
            CatalogEntry::Y0Zero => fill(
                &mut y0,
                InitialState {
                    profile: SpatialProfile::Zero,
                },
                "y0",
            )?,
            CatalogEntry::Y0Sine { amp } => fill(
                &mut y0,
                InitialState {
                    profile: sine(amp),
                },
                "y0",
            )?,
            CatalogEntry::OpLaplacian { kappa } => {
                if kappa <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "laplacian coefficient must be positive".into(),
                    ));
                }
                fill(&mut coeffs, Coefficients::isotropic(kappa), "operator")?
            }
            CatalogEntry::OpAnisotropic { a11, a12, a21, a22 } => fill(
                &mut coeffs,
                Coefficients::new(spatial_dim, a11, a12, a21, a22)?,
                "operator",
            )?,
        }
    }

    Ok(ProblemSpec {
        spatial_dim,
        domain_extent: domain_extent.to_vec(),
        y0: y0.unwrap_or(InitialState {
            profile: SpatialProfile::Zero,
        }),
        psi: psi.ok_or(Error::MissingSlot("psi"))?,
        cost: cost.ok_or(Error::MissingSlot("cost"))?,
        terminal_cost: psi0.unwrap_or_else(TerminalFunctional::zero),
        terminal_constraints: terminals,
        g: g.ok_or(Error::MissingSlot("g"))?,
        bounds,
        horizon,
        coefficients: coeffs.unwrap_or_else(|| Coefficients::isotropic(1.0)),
    })
}
