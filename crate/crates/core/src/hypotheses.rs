//! Sampling-based surrogates for the scenario-level hypotheses.
//!
//! The true hypotheses are function-space statements; these checks sample a
//! finite box and report pass/fail with the worst witness point. A pass is
//! evidence, not proof, and the report says so.

use crate::grid::Grid;
use crate::problem::ProblemSpec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Finite sample box over (t, y, u); spatial points come from the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleBox {
    pub t: (f64, f64),
    pub y: (f64, f64),
    pub u: (f64, f64),
    /// Samples per axis.
    pub n: usize,
}

impl SampleBox {
    pub fn unit(n: usize) -> Self {
        SampleBox {
            t: (0.0, 1.0),
            y: (-1.0, 1.0),
            u: (-1.0, 1.0),
            n,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub t: f64,
    pub y: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub pass: bool,
    pub worst_value: f64,
    pub witness: Witness,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
    pub disclaimer: String,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn axis(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if n <= 1 {
        0.5 * (lo + hi)
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

/// Runs the monotonicity (H2), derivative-consistency (H4) and
/// 1/g_u-boundedness (H5) surrogates on the sample box.
pub fn check_hypotheses(spec: &ProblemSpec, grid: &Grid, samples: &SampleBox) -> HypothesisReport {
    assert!(samples.n > 0, "sample box must be nonempty");
    let mut checks = Vec::new();

    let x_points: Vec<Vec<f64>> = sample_x_points(spec, grid);

    // H2: psi_y >= 0 on the working box
    {
        let mut worst = f64::INFINITY;
        let mut witness = Witness {
            x: x_points[0].clone(),
            t: samples.t.0,
            y: samples.y.0,
            u: 0.0,
        };
        let mut nan_hit = false;
        for x in &x_points {
            for it in 0..samples.n {
                let t = axis(samples.t.0, samples.t.1, samples.n, it);
                for iy in 0..samples.n {
                    let y = axis(samples.y.0, samples.y.1, samples.n, iy);
                    let v = spec.psi.d_y(x, t, y);
                    if !v.is_finite() {
                        nan_hit = true;
                        worst = f64::NAN;
                        witness = Witness {
                            x: x.clone(),
                            t,
                            y,
                            u: 0.0,
                        };
                    } else if v < worst {
                        worst = v;
                        witness = Witness {
                            x: x.clone(),
                            t,
                            y,
                            u: 0.0,
                        };
                    }
                }
            }
        }
        checks.push(HypothesisCheck {
            name: "H2-monotonicity".into(),
            pass: !nan_hit && worst >= 0.0,
            worst_value: worst,
            witness,
            note: "min psi_y over the sample box; needs >= 0".into(),
        });
    }

    // H4: analytic partials of L and g match central finite differences
    {
        let (worst, witness, detail) = derivative_consistency(spec, &x_points, samples, 100, 13);
        checks.push(HypothesisCheck {
            name: "H4-derivative-consistency".into(),
            pass: worst <= 1e-5,
            worst_value: worst,
            witness,
            note: format!("max relative FD mismatch over partials ({detail})"),
        });
    }

    // H5: 1/g_u bounded on samples
    {
        let mut worst = 0.0f64;
        let mut witness = Witness {
            x: x_points[0].clone(),
            t: samples.t.0,
            y: samples.y.0,
            u: samples.u.0,
        };
        let mut degenerate = false;
        for x in &x_points {
            for it in 0..samples.n {
                let t = axis(samples.t.0, samples.t.1, samples.n, it);
                for iy in 0..samples.n {
                    let y = axis(samples.y.0, samples.y.1, samples.n, iy);
                    for iu in 0..samples.n {
                        let u = axis(samples.u.0, samples.u.1, samples.n, iu);
                        let gu = spec.g.d_u(x, t, y, u);
                        if !gu.is_finite() || gu.abs() < 1e-12 {
                            degenerate = true;
                            worst = f64::INFINITY;
                            witness = Witness {
                                x: x.clone(),
                                t,
                                y,
                                u,
                            };
                        } else {
                            let inv = 1.0 / gu.abs();
                            if inv > worst {
                                worst = inv;
                                witness = Witness {
                                    x: x.clone(),
                                    t,
                                    y,
                                    u,
                                };
                            }
                        }
                    }
                }
            }
        }
        checks.push(HypothesisCheck {
            name: "H5-gu-bounded".into(),
            pass: !degenerate,
            worst_value: worst,
            witness,
            note: "max 1/|g_u| over the sample box; fails when g_u vanishes".into(),
        });
    }

    HypothesisReport {
        checks,
        disclaimer: "sampling-based surrogate checks on a finite box; \
                     evidence for the function-space hypotheses, not proof"
            .into(),
    }
}

fn sample_x_points(spec: &ProblemSpec, grid: &Grid) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    let m = 5.min(grid.n_nodes());
    for j in 0..m {
        let idx = j * (grid.n_nodes() - 1) / (m - 1).max(1);
        let c = grid.node_coord(idx);
        pts.push(c[..spec.spatial_dim].to_vec());
    }
    pts
}

/// Checks every analytic partial of psi, L and g against a central finite
/// difference of its parent at `n_random` points, sweeping the step over
/// {1e-3, 1e-4, 1e-5} and keeping the best match per point.
pub fn derivative_consistency(
    spec: &ProblemSpec,
    x_points: &[Vec<f64>],
    samples: &SampleBox,
    n_random: usize,
    seed: u64,
) -> (f64, Witness, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = [1e-3, 1e-4, 1e-5];
    let mut worst = 0.0f64;
    let mut worst_witness = Witness {
        x: x_points[0].clone(),
        t: 0.0,
        y: 0.0,
        u: 0.0,
    };
    let mut worst_name = String::new();

    let consider =
        |name: &str, rel: f64, w: &Witness, worst: &mut f64, ww: &mut Witness, wn: &mut String| {
            if rel > *worst {
                *worst = rel;
                *ww = w.clone();
                *wn = name.to_string();
            }
        };

    for _ in 0..n_random {
        let x = &x_points[rng.gen_range(0..x_points.len())];
        let t = rng.gen_range(samples.t.0..=samples.t.1);
        let y = rng.gen_range(samples.y.0..=samples.y.1);
        let u = rng.gen_range(samples.u.0..=samples.u.1);
        let w = Witness {
            x: x.clone(),
            t,
            y,
            u,
        };

        let best = |f: &dyn Fn(f64) -> f64, analytic: f64| -> f64 {
            let scale = analytic.abs().max(1.0);
            steps
                .iter()
                .map(|&h| {
                    let fd = (f(h) - f(-h)) / (2.0 * h);
                    (fd - analytic).abs() / scale
                })
                .fold(f64::INFINITY, f64::min)
        };

        // psi partials
        let p = &spec.psi;
        consider(
            "psi_t",
            best(&|h| p.eval(x, t + h, y), p.d_t(x, t, y)),
            &w,
            &mut worst,
            &mut worst_witness,
            &mut worst_name,
        );
        consider(
            "psi_y",
            best(&|h| p.eval(x, t, y + h), p.d_y(x, t, y)),
            &w,
            &mut worst,
            &mut worst_witness,
            &mut worst_name,
        );
        consider(
            "psi_ty",
            best(&|h| p.d_y(x, t + h, y), p.d_ty(x, t, y)),
            &w,
            &mut worst,
            &mut worst_witness,
            &mut worst_name,
        );
        consider(
            "psi_yy",
            best(&|h| p.d_y(x, t, y + h), p.d_yy(x, t, y)),
            &w,
            &mut worst,
            &mut worst_witness,
            &mut worst_name,
        );

        // running-cost partials
        let l = &spec.cost;
        let pairs: [(&str, f64, Box<dyn Fn(f64) -> f64>); 9] = [
            ("L_t", l.d_t(x, t, y, u), Box::new(|h| l.eval(x, t + h, y, u))),
            ("L_y", l.d_y(x, t, y, u), Box::new(|h| l.eval(x, t, y + h, u))),
            ("L_u", l.d_u(x, t, y, u), Box::new(|h| l.eval(x, t, y, u + h))),
            ("L_tt", l.d_tt(x, t, y, u), Box::new(|h| l.d_t(x, t + h, y, u))),
            ("L_ty", l.d_ty(x, t, y, u), Box::new(|h| l.d_t(x, t, y + h, u))),
            ("L_tu", l.d_tu(x, t, y, u), Box::new(|h| l.d_t(x, t, y, u + h))),
            ("L_yy", l.d_yy(x, t, y, u), Box::new(|h| l.d_y(x, t, y + h, u))),
            ("L_yu", l.d_yu(x, t, y, u), Box::new(|h| l.d_y(x, t, y, u + h))),
            ("L_uu", l.d_uu(x, t, y, u), Box::new(|h| l.d_u(x, t, y, u + h))),
        ];
        for (name, analytic, f) in pairs.iter() {
            consider(
                name,
                best(f.as_ref(), *analytic),
                &w,
                &mut worst,
                &mut worst_witness,
                &mut worst_name,
            );
        }

        // mixed-constraint partials
        let g = &spec.g;
        let pairs: [(&str, f64, Box<dyn Fn(f64) -> f64>); 6] = [
            ("g_y", g.d_y(x, t, y, u), Box::new(|h| g.eval(x, t, y + h, u))),
            ("g_u", g.d_u(x, t, y, u), Box::new(|h| g.eval(x, t, y, u + h))),
            ("g_yy", g.d_yy(x, t, y, u), Box::new(|h| g.d_y(x, t, y + h, u))),
            ("g_yu", g.d_yu(x, t, y, u), Box::new(|h| g.d_y(x, t, y, u + h))),
            ("g_uu", g.d_uu(x, t, y, u), Box::new(|h| g.d_u(x, t, y, u + h))),
            ("g_t", g.d_t(x, t, y, u), Box::new(|h| g.eval(x, t + h, y, u))),
        ];
        for (name, analytic, f) in pairs.iter() {
            consider(
                name,
                best(f.as_ref(), *analytic),
                &w,
                &mut worst,
                &mut worst_witness,
                &mut worst_name,
            );
        }
    }

    (worst, worst_witness, worst_name)
}

/// Pre-packaged working box used by the default `hypotheses` run: spans the
/// control bounds and a state range inferred from the horizon bracket.
pub fn default_sample_box(spec: &ProblemSpec) -> SampleBox {
    let (a, b) = spec.bounds;
    let u_pad = 0.1 * (b - a);
    SampleBox {
        t: (0.0, spec.horizon.1),
        y: (-2.0, 2.0),
        u: (a - u_pad, b + u_pad),
        n: 10,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::problem::{build_problem, CatalogEntry};

    fn spec_with(psi: CatalogEntry, g: CatalogEntry, bounds: (f64, f64)) -> ProblemSpec {
        build_problem(
            &[
                psi,
                CatalogEntry::CostTrackingQuadratic {
                    q: 1.0,
                    beta: 0.5,
                    c0: 0.0,
                    t_lin: 0.3,
                    target_amp: 1.0,
                    target_decay: 0.7,
                },
                g,
            ],
            1,
            &[1.0],
            bounds,
            (0.5, 2.0),
        )
        .unwrap()
    }

    #[test]
    fn cubic_psi_passes_h2_with_zero_worst() {
        let spec = spec_with(CatalogEntry::PsiCubic { c: 1.0 }, CatalogEntry::GIdentity, (-1.0, 1.0));
        let grid = build_grid(&[1.0], &[9], 4).unwrap();
        let report = check_hypotheses(&spec, &grid, &SampleBox::unit(11));
        let h2 = &report.checks[0];
        assert!(h2.pass);
        assert!(h2.worst_value.abs() < 1e-12, "worst {}", h2.worst_value);
        assert!(h2.witness.y.abs() < 1e-12);
    }

    #[test]
    fn identity_g_gives_unit_h5_ratio() {
        let spec = spec_with(CatalogEntry::PsiZero, CatalogEntry::GIdentity, (-1.0, 1.0));
        let grid = build_grid(&[1.0], &[9], 4).unwrap();
        let report = check_hypotheses(&spec, &grid, &SampleBox::unit(5));
        let h5 = report.checks.iter().find(|c| c.name.starts_with("H5")).unwrap();
        assert!(h5.pass);
        assert_eq!(h5.worst_value, 1.0);
    }

    #[test]
    fn decreasing_psi_fails_h2_with_witness() {
        let spec = spec_with(
            CatalogEntry::PsiLinear { c: -1.0 },
            CatalogEntry::GIdentity,
            (-1.0, 1.0),
        );
        let grid = build_grid(&[1.0], &[9], 4).unwrap();
        let report = check_hypotheses(&spec, &grid, &SampleBox::unit(5));
        let h2 = &report.checks[0];
        assert!(!h2.pass);
        assert_eq!(h2.worst_value, -1.0);
    }

    #[test]
    fn example31_gu_bounded_with_zero_upper_bound() {
        // g_u = -3u^2 - (y^2+1) <= -1, so 1/g_u stays below 1 in magnitude
        let spec = spec_with(CatalogEntry::PsiCubic { c: 1.0 }, CatalogEntry::GExample31, (-30.0, 0.0));
        let grid = build_grid(&[1.0], &[9], 4).unwrap();
        let report = check_hypotheses(
            &spec,
            &grid,
            &SampleBox {
                t: (0.0, 1.0),
                y: (-2.0, 2.0),
                u: (0.0, 2.0),
                n: 10,
            },
        );
        let h5 = report.checks.iter().find(|c| c.name.starts_with("H5")).unwrap();
        assert!(h5.pass);
        assert!(h5.worst_value <= 1.0 + 1e-12, "max 1/|g_u| = {}", h5.worst_value);
    }

    #[test]
    fn all_catalog_partials_match_finite_differences() {
        for (psi, g) in [
            (CatalogEntry::PsiCubic { c: 0.8 }, CatalogEntry::GExample31),
            (
                CatalogEntry::PsiCubicRamp { c: 0.5, rate: 0.4 },
                CatalogEntry::GQuadraticBend { gamma: -0.3 },
            ),
            (CatalogEntry::PsiZero, CatalogEntry::GIdentity),
        ] {
            let spec = spec_with(psi, g, (-1.0, 1.0));
            let grid = build_grid(&[1.0], &[9], 4).unwrap();
            let report = check_hypotheses(&spec, &grid, &SampleBox::unit(5));
            let h4 = report.checks.iter().find(|c| c.name.starts_with("H4")).unwrap();
            assert!(h4.pass, "H4 worst {} at {}", h4.worst_value, h4.note);
        }
    }
}
