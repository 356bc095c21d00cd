//! Change of variables between the free-horizon problem and the
//! fixed-horizon problem on the unit time interval.
//!
//! With matched level counts the rescaling is an index map: level k of
//! [0, T] corresponds to level k of [0, 1]. No interpolation enters the
//! equivalence tests; an explicit `resample` with linear interpolation
//! exists for I/O only.

use crate::error::{Error, Result};
use crate::field::{Horizon, SpaceTimeField};
use crate::grid::Grid;
use crate::problem::ProblemSpec;
use crate::state::{integrate_semilinear, Discretization, Scheme};
use serde::{Deserialize, Serialize};

/// Decision variable of the reduced problem: a horizon and a control field
/// on the unit interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlPoint {
    pub t_horizon: f64,
    pub v: SpaceTimeField,
}

impl ControlPoint {
    pub fn validate(&self, spec: &ProblemSpec, grid: &Grid) -> Result<()> {
        let (lo, hi) = spec.horizon;
        if !(self.t_horizon >= lo && self.t_horizon <= hi) {
            return Err(Error::InvalidParameter(format!(
                "horizon {} outside bracket [{lo}, {hi}]",
                self.t_horizon
            )));
        }
        if !self.v.matches_grid(grid) {
            return Err(Error::DimensionMismatch(
                "control field does not match the grid".into(),
            ));
        }
        Ok(())
    }
}

fn expect_levels(a: &SpaceTimeField, b_levels: usize) -> Result<()> {
    if a.n_levels != b_levels {
        return Err(Error::DimensionMismatch(format!(
            "mismatched level counts: {} vs {}; resample explicitly first",
            a.n_levels, b_levels
        )));
    }
    Ok(())
}

/// v(x, s) = u(x, T s): an index-identical copy retagged to the unit
/// interval.
pub fn to_reduced(u: &SpaceTimeField, grid: &Grid, _t_horizon: f64) -> Result<SpaceTimeField> {
    expect_levels(u, grid.n_levels())?;
    Ok(u.clone().retagged(Horizon::Unit))
}

/// u(x, t) = v(x, t/T): inverse of [`to_reduced`]; the round trip is
/// bit-exact.
pub fn from_reduced(v: &SpaceTimeField, grid: &Grid, t_horizon: f64) -> Result<SpaceTimeField> {
    expect_levels(v, grid.n_levels())?;
    Ok(v.clone().retagged(Horizon::Physical(t_horizon)))
}

/// Linear time interpolation onto a new level count (I/O convenience, not
/// used by any equivalence path).
pub fn resample(field: &SpaceTimeField, new_levels: usize) -> Result<SpaceTimeField> {
    if new_levels < 2 {
        return Err(Error::GridTooSmall("resample needs at least 2 levels".into()));
    }
    let n_nodes = field.n_nodes;
    let old_last = (field.n_levels - 1) as f64;
    let new_last = (new_levels - 1) as f64;
    let mut data = Vec::with_capacity(new_levels * n_nodes);
    for k in 0..new_levels {
        let s = k as f64 / new_last * old_last;
        let k0 = (s.floor() as usize).min(field.n_levels - 2);
        let frac = s - k0 as f64;
        let lo = field.level(k0);
        let hi = field.level(k0 + 1);
        for i in 0..n_nodes {
            data.push((1.0 - frac) * lo[i] + frac * hi[i]);
        }
    }
    Ok(SpaceTimeField::from_raw(new_levels, n_nodes, field.horizon, data))
}

/// Solves the reduced state equation at a control point. Identical
/// arithmetic to the physical-horizon solve with step T·Δ, so the state
/// transport identity holds exactly at matched levels.
pub fn reduced_state(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
) -> Result<SpaceTimeField> {
    cp.validate(spec, &disc.grid)?;
    integrate_semilinear(spec, disc, cp.t_horizon, &cp.v, Horizon::Unit)
}

/// Value of the discrete objective; shared by the reduced and physical
/// views (the physical-horizon trapezoid weights are `T` times the unit
/// ones, which is exactly how this sum is formed).
pub fn objective(
    spec: &ProblemSpec,
    grid: &Grid,
    scheme: Scheme,
    t_horizon: f64,
    state: &SpaceTimeField,
    control: &SpaceTimeField,
) -> f64 {
    let n_levels = grid.n_levels();
    let mut acc = spec
        .terminal_cost
        .value(t_horizon, state.level(n_levels - 1), grid);
    for k in 0..n_levels {
        let wt = scheme.time_weight(grid, k);
        if wt == 0.0 {
            continue;
        }
        let t = t_horizon * grid.s_level(k);
        let sl = state.level(k);
        let cl = control.level(k);
        let mut s = 0.0;
        for i in 0..grid.n_nodes() {
            let x = grid.node_coord(i);
            s += grid.weights[i]
                * (t_horizon
                    * spec
                        .cost
                        .eval(&x[..spec.spatial_dim], t, sl[i], cl[i]));
        }
        acc += wt * s;
    }
    acc
}

/// Reduced objective at a control point with its solved state.
pub fn objective_reduced(
    spec: &ProblemSpec,
    disc: &Discretization,
    cp: &ControlPoint,
    state: &SpaceTimeField,
) -> f64 {
    objective(spec, &disc.grid, disc.scheme, cp.t_horizon, state, &cp.v)
}

/// A first-order direction in physical coordinates on [0, T*].
#[derive(Debug, Clone)]
pub struct PhysicalDirection {
    pub d_horizon: f64,
    pub state: SpaceTimeField,
    pub control: SpaceTimeField,
}

/// A first-order direction in reduced coordinates (ξ(s) = T·s implied).
#[derive(Debug, Clone)]
pub struct ReducedDirection {
    pub d_horizon: f64,
    pub state: SpaceTimeField,
    pub control: SpaceTimeField,
}

/// Transports a physical direction to reduced coordinates:
/// ζ(x,s) = y(x, T*s), v(x,s) = u(x, T*s), ξ(s) = T·s.
pub fn transport_direction(d: &PhysicalDirection, grid: &Grid) -> Result<ReducedDirection> {
    expect_levels(&d.state, grid.n_levels())?;
    expect_levels(&d.control, grid.n_levels())?;
    Ok(ReducedDirection {
        d_horizon: d.d_horizon,
        state: d.state.clone().retagged(Horizon::Unit),
        control: d.control.clone().retagged(Horizon::Unit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn round_trip_is_bit_exact() {
        let grid = build_grid(&[1.0], &[7], 6).unwrap();
        let u = SpaceTimeField::from_fn(&grid, Horizon::Physical(2.0), |x, t| {
            (x[0] * 3.1 + t).sin()
        });
        let v = to_reduced(&u, &grid, 2.0).unwrap();
        let back = from_reduced(&v, &grid, 2.0).unwrap();
        assert_eq!(u.data(), back.data());
    }

    #[test]
    fn linear_ramp_transports_by_substitution() {
        // u(x,t) = t on [0,2] with 11 levels -> v level k = 2k/10
        let grid = build_grid(&[1.0], &[5], 10).unwrap();
        let u = SpaceTimeField::from_fn(&grid, Horizon::Physical(2.0), |_, t| t);
        let v = to_reduced(&u, &grid, 2.0).unwrap();
        for k in 0..=10 {
            let expect = 2.0 * k as f64 / 10.0;
            assert!((v.get(k, 2) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn mismatched_levels_error_out() {
        let grid = build_grid(&[1.0], &[5], 10).unwrap();
        let coarse = build_grid(&[1.0], &[5], 5).unwrap();
        let u = SpaceTimeField::zeros(&coarse, Horizon::Physical(1.0));
        assert!(to_reduced(&u, &grid, 1.0).is_err());
    }

    #[test]
    fn resample_constant_and_linear() {
        let grid = build_grid(&[1.0], &[5], 4).unwrap();
        let c = SpaceTimeField::constant(&grid, Horizon::Unit, 3.5);
        let r = resample(&c, 9).unwrap();
        assert!(r.data().iter().all(|&v| (v - 3.5).abs() < 1e-15));
        let lin = SpaceTimeField::from_fn(&grid, Horizon::Unit, |_, t| 2.0 * t);
        let r = resample(&lin, 9).unwrap();
        for k in 0..9 {
            let s = k as f64 / 8.0;
            assert!((r.get(k, 1) - 2.0 * s).abs() < 1e-14, "level {k}");
        }
    }
}
