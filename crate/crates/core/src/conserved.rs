//! Moving energy, its Hessian at the vertex and the a priori bounds it implies.
//!
//! Only meaningful for a vertical figure axis (`alpha = 0`).

use nalgebra::{DMatrix, Matrix5};
use thiserror::Error;

use crate::dynamics::{DynamicsError, ReducedState, SystemParams};
use crate::profile::{Profile, DEFAULT_REGULARITY_SAMPLES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConservedError {
    #[error("moving energy is only conserved for alpha = 0 (alpha = {alpha})")]
    NotConserved { alpha: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("radius bound L = {l} must lie in (0, {r_max}]")]
    InvalidBound { l: f64, r_max: f64 },
    #[error("level set E = {e0} is empty on |x| <= L (E0 + C = {slack} < 0)")]
    EmptyLevelSet { e0: f64, slack: f64 },
}

impl From<crate::profile::ProfileError> for ConservedError {
    fn from(e: crate::profile::ProfileError) -> Self {
        ConservedError::Dynamics(e.into())
    }
}

fn require_vertical(p: &SystemParams) -> Result<(), ConservedError> {
    if p.alpha() != 0.0 {
        return Err(ConservedError::NotConserved { alpha: p.alpha() });
    }
    Ok(())
}

/// The moving energy `E(x, v, omega_z)`.
///
/// Written as kinetic energy of the centre, spin energy `k |omega|^2 / 2`
/// with `omega_x, omega_y` from the constraint, the potential `g_hat psi`, and
/// the two gyroscopic terms `-Omega (x1 v2 - x2 v1) - k Omega omega_z`.
pub fn moving_energy(p: &SystemParams, s: &Profile, st: &ReducedState) -> Result<f64, ConservedError> {
    require_vertical(p)?;
    let r = st.radius();
    s.f_jet(r)?;
    let jet = s.psi_jet(0.5 * r * r)?;
    let (psi, d1) = (jet.psi, jet.d1);
    let big_f = (r * d1).hypot(1.0);
    let [x1, x2] = st.x;
    let [v1, v2] = st.v;
    let (k, om, wz) = (p.k(), p.omega(), st.omega_z);

    let xv = x1 * v1 + x2 * v2;
    let wx = (v1 + om * x2) * big_f + x2 * (om - wz) * d1;
    let wy = (v2 - om * x1) * big_f - x1 * (om - wz) * d1;
    Ok(0.5 * (v1 * v1 + v2 * v2)
        + 0.5 * (xv * d1).powi(2)
        + 0.5 * k * wz * wz
        - om * (x1 * v2 - x2 * v1)
        - k * om * wz
        + 0.5 * k * wx * wx
        + 0.5 * k * wy * wy
        + p.g_hat() * psi)
}

/// Hessian of the moving energy at `(0, 0, 0, 0, omega_z = Omega)` in the
/// coordinates `(x1, x2, v1, v2, omega_z)`.
pub fn energy_hessian_vertex(p: &SystemParams, f2_0: f64) -> Matrix5<f64> {
    let (k, om) = (p.k(), p.omega());
    let d = k * om * om + p.g_hat() * f2_0;
    let c = (1.0 + k) * om;
    Matrix5::new(
        d, 0.0, 0.0, -c, 0.0, //
        0.0, d, c, 0.0, 0.0, //
        0.0, c, 1.0 + k, 0.0, 0.0, //
        -c, 0.0, 0.0, 1.0 + k, 0.0, //
        0.0, 0.0, 0.0, 0.0, k,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapunovVerdict {
    Stable,
    /// The energy test says nothing; this is never a claim of instability.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovReport {
    pub verdict: LyapunovVerdict,
    /// Leading principal minors of the vertex Hessian.
    pub minors: [f64; 5],
    /// `f''(0) > 0 && Omega^2 < g_hat f''(0)`.
    pub closed_form: bool,
}

impl LyapunovReport {
    pub fn agrees(&self) -> bool {
        (self.verdict == LyapunovVerdict::Stable) == self.closed_form
    }
}

/// Relative zero tolerance for the principal minors.
pub const MINOR_TOLERANCE: f64 = 1e-12;

/// Energy-Casimir style test of the vertex equilibrium `omega_z = Omega`.
pub fn lyapunov_vertex_check(p: &SystemParams, f2_0: f64) -> LyapunovReport {
    let h = energy_hessian_vertex(p, f2_0);
    let scale = h.norm();
    let dynamic = DMatrix::from_column_slice(5, 5, h.as_slice());
    let mut minors = [0.0; 5];
    for (i, m) in minors.iter_mut().enumerate() {
        *m = dynamic.view((0, 0), (i + 1, i + 1)).clone_owned().determinant();
    }
    let definite = minors
        .iter()
        .enumerate()
        .all(|(i, &m)| m > MINOR_TOLERANCE * scale.powi(i as i32 + 1));
    let om2 = p.omega() * p.omega();
    LyapunovReport {
        verdict: if definite { LyapunovVerdict::Stable } else { LyapunovVerdict::Inconclusive },
        minors,
        closed_form: f2_0 > 0.0 && om2 < p.g_hat() * f2_0,
    }
}

/// A priori bounds on `|v|` and `|omega_z|` on an energy level, for `|x| <= L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBounds {
    pub e0: f64,
    pub l: f64,
    pub c: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

impl EnergyBounds {
    pub fn admits(&self, st: &ReducedState, slack: f64) -> bool {
        st.v[0].hypot(st.v[1]) <= self.v_max + slack && st.omega_z.abs() <= self.omega_max + slack
    }
}

/// `C = (k + L^2) Omega^2 / 2 + g_hat max |f|` and the resulting bounds
/// `|v| <= L |Omega| + sqrt(2 (E0 + C))`, `|omega_z| <= |Omega| + sqrt(2 (E0 + C) / k)`.
pub fn prop2_bounds(p: &SystemParams, s: &Profile, e0: f64, l: f64) -> Result<EnergyBounds, ConservedError> {
    require_vertical(p)?;
    if !(l > 0.0 && l <= s.r_max()) {
        return Err(ConservedError::InvalidBound { l, r_max: s.r_max() });
    }
    let lo = s.inner_radius().min(l);
    let n = DEFAULT_REGULARITY_SAMPLES;
    let mut max_f: f64 = 0.0;
    for i in 0..n {
        let r = lo + (l - lo) * i as f64 / (n - 1) as f64;
        max_f = max_f.max(s.f_jet(r)?.f.abs());
    }
    let om = p.omega().abs();
    let c = 0.5 * (p.k() + l * l) * om * om + p.g_hat() * max_f;
    let slack = e0 + c;
    if slack < 0.0 {
        return Err(ConservedError::EmptyLevelSet { e0, slack });
    }
    Ok(EnergyBounds {
        e0,
        l,
        c,
        v_max: l * om + (2.0 * slack).sqrt(),
        omega_max: om + (2.0 * slack / p.k()).sqrt(),
    })
}
