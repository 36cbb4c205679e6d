//! Equilibria of the reduced system.
//!
//! With `v = 0` the field reduces to the gravity terms, so equilibria are
//! points where the tangent plane is horizontal; `omega_z` is free. For
//! `alpha = 0` these are the vertex and the critical parallels `f'(r0) = 0`;
//! for `alpha > 0` they lie on the `x1` axis where `f'(|x1|) = -sign(x1) tan(alpha)`.

use log::warn;
use serde::Serialize;

use crate::dynamics::{reduced_vector_field, DynamicsError, ReducedState, SystemParams};
use crate::profile::{Profile, DEFAULT_REGULARITY_SAMPLES};

/// Bisection stops once the bracket is shorter than this.
pub const ROOT_TOLERANCE: f64 = 1e-12;

/// Grid values with `|f' - target|` below this count as exact zeros.
const ZERO_RUN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquilibriumKind {
    Vertex,
    /// The whole circle `|x| = radius`; stored through `(radius, 0)`.
    CriticalParallel { radius: f64 },
    TiltedPoint { x1: f64 },
    /// A continuum on which the condition holds identically: the annulus
    /// `from <= |x| <= to` when `alpha = 0` (flat parts), otherwise the
    /// segment of the `x1` axis between `from` and `to` (a cone whose
    /// generatrix is horizontal).
    Continuum { from: f64, to: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumFamily {
    #[serde(flatten)]
    pub kind: EquilibriumKind,
    /// Representative position.
    pub position: [f64; 2],
}

impl EquilibriumFamily {
    /// The equilibrium state of this family with spin `omega_z`.
    pub fn state(&self, omega_z: f64) -> ReducedState {
        ReducedState::at_rest(self.position, omega_z)
    }
}

/// Norm of the reduced field at `(x, 0, omega_z)`.
pub fn residual(p: &SystemParams, s: &Profile, x: [f64; 2], omega_z: f64) -> Result<f64, DynamicsError> {
    Ok(reduced_vector_field(p, s, &ReducedState::at_rest(x, omega_z))?.norm())
}

/// [`find_equilibria_with`] on the default 10 001-point grid.
pub fn find_equilibria(p: &SystemParams, s: &Profile) -> Vec<EquilibriumFamily> {
    find_equilibria_with(p, s, DEFAULT_REGULARITY_SAMPLES)
}

/// Sign-change bracketing on `n_grid` radii, refined by bisection.
///
/// A root where `f'` only touches its target value without crossing is missed.
pub fn find_equilibria_with(p: &SystemParams, s: &Profile, n_grid: usize) -> Vec<EquilibriumFamily> {
    let mut out = Vec::new();
    let alpha = p.alpha();
    if alpha == 0.0 {
        if s.is_smooth() {
            out.push(EquilibriumFamily { kind: EquilibriumKind::Vertex, position: [0.0, 0.0] });
        }
        for z in roots(s, 0.0, n_grid) {
            out.push(match z {
                Zero::Point(r) => EquilibriumFamily {
                    kind: EquilibriumKind::CriticalParallel { radius: r },
                    position: [r, 0.0],
                },
                Zero::Run(a, b) => EquilibriumFamily {
                    kind: EquilibriumKind::Continuum { from: a, to: b },
                    position: [a, 0.0],
                },
            });
        }
        return out;
    }

    let t = alpha.tan();
    // x1 > 0 needs f'(x1) = -tan(alpha); x1 < 0 needs f'(|x1|) = tan(alpha).
    for (target, sign) in [(-t, 1.0), (t, -1.0)] {
        for z in roots(s, target, n_grid) {
            out.push(match z {
                Zero::Point(r) => EquilibriumFamily {
                    kind: EquilibriumKind::TiltedPoint { x1: sign * r },
                    position: [sign * r, 0.0],
                },
                Zero::Run(a, b) => EquilibriumFamily {
                    kind: EquilibriumKind::Continuum { from: sign * a, to: sign * b },
                    position: [sign * a, 0.0],
                },
            });
        }
    }
    if out.len() > 1 && is_concave(s, n_grid) {
        warn!("{} tilted equilibria found on a profile with f'' <= 0 (expected at most one)", out.len());
    }
    out
}

fn is_concave(s: &Profile, n: usize) -> bool {
    let (lo, hi) = (s.inner_radius(), s.sweep_bound());
    (0..n).all(|i| {
        let r = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        s.f_jet(r).map(|j| j.f2 <= ZERO_RUN_TOLERANCE).unwrap_or(true)
    })
}

enum Zero {
    Point(f64),
    Run(f64, f64),
}

/// Zeros of `f'(r) - target` for `r` in `(inner, r_max]` (excluding `r = 0`).
fn roots(s: &Profile, target: f64, n_grid: usize) -> Vec<Zero> {
    let n = n_grid.max(3);
    let (lo, hi) = (s.inner_radius(), s.sweep_bound());
    let g = |r: f64| s.f_jet(r).map(|j| j.f1 - target).unwrap_or(f64::NAN);
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&r| g(r)).collect();
    let is_zero = |i: usize| vals[i].abs() <= ZERO_RUN_TOLERANCE && grid[i] > 0.0;

    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if is_zero(i) {
            let start = i;
            while i + 1 < n && is_zero(i + 1) {
                i += 1;
            }
            if i > start {
                out.push(Zero::Run(grid[start], grid[i]));
            } else {
                out.push(Zero::Point(grid[i]));
            }
        } else if i + 1 < n && !is_zero(i + 1) && vals[i] * vals[i + 1] < 0.0 && grid[i + 1] > 0.0 {
            out.push(Zero::Point(bisect(&g, grid[i], grid[i + 1], vals[i])));
        }
        i += 1;
    }
    out
}

fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64) -> f64 {
    while b - a > ROOT_TOLERANCE {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_6;

    #[test]
    fn paraboloid_has_only_the_vertex() {
        let p = SystemParams::homogeneous(0.4);
        for c in [0.5, -0.5] {
            let eq = find_equilibria(&p, &Profile::paraboloid(c).unwrap());
            assert_eq!(eq.len(), 1);
            assert_eq!(eq[0].kind, EquilibriumKind::Vertex);
        }
    }

    #[test]
    fn double_well_has_a_critical_parallel() {
        // psi(u) = u^2 - u, i.e. f(r) = ((r^2 - 1)^2 - 1) / 4.
        let prof = Profile::quartic(-1.0, 1.0).unwrap();
        let eq = find_equilibria(&SystemParams::homogeneous(0.0), &prof);
        assert_eq!(eq.len(), 2);
        assert_eq!(eq[0].kind, EquilibriumKind::Vertex);
        match eq[1].kind {
            EquilibriumKind::CriticalParallel { radius } => assert_abs_diff_eq!(radius, 1.0, epsilon = 1e-12),
            ref k => panic!("unexpected {k:?}"),
        }
    }

    #[test]
    fn tilted_cap() {
        let p = SystemParams::homogeneous(0.0).with_alpha(FRAC_PI_6).unwrap();
        let prof = Profile::concave_cap(-0.5).unwrap();
        let eq = find_equilibria(&p, &prof);
        assert_eq!(eq.len(), 1);
        let x1 = eq[0].position[0];
        assert_abs_diff_eq!(x1, 2.0 * FRAC_PI_6.tan(), epsilon = 1e-11);
        assert!(residual(&p, &prof, eq[0].position, 3.0).unwrap() < 1e-10);
    }

    #[test]
    fn residual_examples() {
        let p = SystemParams::homogeneous(0.0);
        let prof = Profile::paraboloid(1.0).unwrap();
        assert_eq!(residual(&p, &prof, [0.0, 0.0], 7.0).unwrap(), 0.0);
        assert!(residual(&p, &prof, [0.1, 0.0], 0.0).unwrap() > 0.05);
    }

    #[test]
    fn horizontal_cone_generatrix_is_a_continuum() {
        let p = SystemParams::homogeneous(0.0).with_alpha(FRAC_PI_6).unwrap();
        let prof = Profile::truncated_cone(FRAC_PI_6.tan(), 0.1).unwrap();
        let eq = find_equilibria(&p, &prof);
        assert_eq!(eq.len(), 1);
        match eq[0].kind {
            EquilibriumKind::Continuum { from, to } => {
                assert_abs_diff_eq!(from, 0.1, epsilon = 1e-12);
                assert_eq!(to, prof.sweep_bound());
            }
            ref k => panic!("unexpected {k:?}"),
        }
        assert!(residual(&p, &prof, [1.5, 0.0], 2.0).unwrap() < 1e-10);
    }

    #[test]
    fn steep_tilt_on_gentle_cap_has_no_equilibrium() {
        let p = SystemParams::homogeneous(0.0).with_alpha(1.4).unwrap();
        let prof = Profile::concave_cap(-0.1).unwrap().with_r_max(5.0).unwrap();
        assert!(find_equilibria(&p, &prof).is_empty());
    }
}
