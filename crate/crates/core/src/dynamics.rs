//! The SO(3)-reduced vector field on `(x, v, omega_z)`.
//!
//! Positions are in ball-radius units, so neither the ball radius nor its mass
//! enters: the mass cancels and the inertia only appears through `k`
//! (moment of inertia `m k a^2`).
//!
//! Two independent evaluations of the same field are provided:
//! [`reduced_vector_field`] works with the `psi` jet and is smooth through the
//! vertex, [`vector_field_fform`] works with `f', f''` and the polar-style
//! factors `1/|x|^n`, so it is singular at the vertex. Sign conventions are
//! fixed by the rolling constraint `V_C + omega x CP = Omega e_z x OP`; in
//! particular a ball on a flat turntable circles in the same sense as the
//! table, with angular frequency `mu Omega`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::profile::{Profile, ProfileError};

/// Radius below which the f-form refuses to evaluate.
pub const FFORM_VERTEX_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in term `{term}`")]
    NonFinite { term: &'static str },
    #[error("f-form is singular at the vertex (|x| = {radius:e})")]
    VertexSingularity { radius: f64 },
}

/// Physical constants of the reduced system.
///
/// `gamma = g_hat / (1 + k)` and `mu = k / (1 + k)` are cached at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    k: f64,
    g_hat: f64,
    omega: f64,
    alpha: f64,
    gamma: f64,
    mu: f64,
}

impl SystemParams {
    /// Homogeneous ball.
    pub const HOMOGENEOUS_K: f64 = 0.4;

    pub fn new(k: f64, g_hat: f64, omega: f64, alpha: f64) -> Result<Self, DynamicsError> {
        let bad = |m: String| Err(DynamicsError::InvalidParameter(m));
        if !(k > 0.0 && k < 1.0) {
            return bad(format!("k must lie in (0,1), got {k}"));
        }
        if !(g_hat > 0.0 && g_hat.is_finite()) {
            return bad(format!("g_hat must be positive and finite, got {g_hat}"));
        }
        if !omega.is_finite() {
            return bad(format!("Omega must be finite, got {omega}"));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&alpha) {
            return bad(format!("alpha must lie in [0, pi/2), got {alpha}"));
        }
        Ok(Self { k, g_hat, omega, alpha, gamma: g_hat / (1.0 + k), mu: k / (1.0 + k) })
    }

    /// `k = 2/5`, `g_hat = 1`, vertical axis.
    pub fn homogeneous(omega: f64) -> Self {
        Self::new(Self::HOMOGENEOUS_K, 1.0, omega, 0.0).expect("valid defaults")
    }

    pub fn with_omega(self, omega: f64) -> Result<Self, DynamicsError> {
        Self::new(self.k, self.g_hat, omega, self.alpha)
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self, DynamicsError> {
        Self::new(self.k, self.g_hat, self.omega, alpha)
    }

    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn g_hat(&self) -> f64 {
        self.g_hat
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// A point `(x, v, omega_z)` of the reduced phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReducedState {
    pub x: [f64; 2],
    pub v: [f64; 2],
    pub omega_z: f64,
}

impl ReducedState {
    pub fn new(x: [f64; 2], v: [f64; 2], omega_z: f64) -> Self {
        Self { x, v, omega_z }
    }

    pub fn at_rest(x: [f64; 2], omega_z: f64) -> Self {
        Self { x, v: [0.0; 2], omega_z }
    }

    pub fn radius(&self) -> f64 {
        self.x[0].hypot(self.x[1])
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.x[0], self.x[1], self.v[0], self.v[1], self.omega_z]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self { x: [a[0], a[1]], v: [a[2], a[3]], omega_z: a[4] }
    }
}

/// Reduced state plus the attitude of the ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullState {
    pub reduced: ReducedState,
    pub attitude: Matrix3<f64>,
}

impl FullState {
    pub fn new(reduced: ReducedState, attitude: Matrix3<f64>) -> Result<Self, DynamicsError> {
        let drift = (attitude.transpose() * attitude - Matrix3::identity()).norm();
        let det = attitude.determinant();
        if drift > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(DynamicsError::InvalidParameter(format!(
                "attitude is not a rotation (|R^T R - I| = {drift:e}, det = {det})"
            )));
        }
        Ok(Self { reduced, attitude })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub dx: [f64; 2],
    pub dv: [f64; 2],
    pub domega_z: f64,
}

impl StateDerivative {
    pub fn to_array(self) -> [f64; 5] {
        [self.dx[0], self.dx[1], self.dv[0], self.dv[1], self.domega_z]
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

fn finite(term: &'static str, value: f64) -> Result<f64, DynamicsError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(DynamicsError::NonFinite { term })
    }
}

/// Profile quantities at the contact configuration `x`.
struct Local {
    r2: f64,
    psi: f64,
    p1: f64,
    p2: f64,
    big_f: f64,
}

fn local(s: &Profile, x: [f64; 2]) -> Result<Local, DynamicsError> {
    let r = x[0].hypot(x[1]);
    // f_jet validates the radius (cone cutoff, r_max) before psi is touched.
    s.f_jet(r)?;
    let r2 = r * r;
    let jet = s.psi_jet(0.5 * r2)?;
    let big_f = finite("F", (1.0 + r2 * jet.d1 * jet.d1).sqrt())?;
    Ok(Local { r2, psi: jet.psi, p1: jet.d1, p2: jet.d2, big_f })
}

/// The reduced equations of motion in `psi` form.
pub fn reduced_vector_field(
    p: &SystemParams,
    s: &Profile,
    st: &ReducedState,
) -> Result<StateDerivative, DynamicsError> {
    let Local { r2, p1, p2, big_f: f, .. } = local(s, st.x)?;
    let [x1, x2] = st.x;
    let [v1, v2] = st.v;
    let wz = st.omega_z;
    let (sa, ca) = p.alpha.sin_cos();
    let (gamma, mu, om, kk) = (p.gamma, p.mu, p.omega, 1.0 + p.k);

    let xv = x1 * v1 + x2 * v2;
    let vv = v1 * v1 + v2 * v2;
    let f2 = p1 + r2 * p2; // f'' expressed through psi
    let centripetal = (vv * p1 + xv * xv * p2) * p1 / kk;
    let rot = p1 * p1 + r2 * p1 * p2 + f * p2;

    let gravity1 = finite("gravity (v1)", gamma * (x1 * p1 * ca + (1.0 + x2 * x2 * p1 * p1) * sa))?;
    let gyro1 = finite("spin coupling (v1)", mu * (v2 * p1 + x2 * xv * p2) * wz * f)?;
    let curv1 = finite("curvature (v1)", mu * v1 * xv * f2 * p1 + x1 * centripetal)?;
    let turn1 = finite("rotation (v1)", om * mu * (v2 * f * (f + p1) + x2 * xv * rot))?;
    let dv1 = -(gravity1 - gyro1 + curv1 + turn1) / (f * f);

    let gravity2 = finite("gravity (v2)", gamma * x2 * p1 * (ca - x1 * p1 * sa))?;
    let gyro2 = finite("spin coupling (v2)", mu * (v1 * p1 + x1 * xv * p2) * wz * f)?;
    let curv2 = finite("curvature (v2)", mu * v2 * xv * f2 * p1 + x2 * centripetal)?;
    let turn2 = finite("rotation (v2)", om * mu * (v1 * f * (f + p1) + x1 * xv * rot))?;
    let dv2 = -(gravity2 + gyro2 + curv2 - turn2) / (f * f);

    let spin = finite(
        "omega_z",
        -gamma * x2 * p1 * sa / f
            - xv * p1 / (kk * f * f * f)
                * ((wz * f + (x1 * v2 - x2 * v1) * p1) * f2
                    - om * (f * f + (f + r2 * p1) * f2)),
    )?;

    Ok(StateDerivative { dx: [v1, v2], dv: [dv1, dv2], domega_z: spin })
}

/// The same field written with `f', f''` and explicit powers of `1/|x|`.
///
/// Independent of [`reduced_vector_field`] except for the profile jet; used as
/// its oracle. Refuses to evaluate within [`FFORM_VERTEX_THRESHOLD`] of the vertex.
pub fn vector_field_fform(
    p: &SystemParams,
    s: &Profile,
    st: &ReducedState,
) -> Result<StateDerivative, DynamicsError> {
    let r = st.radius();
    if r < FFORM_VERTEX_THRESHOLD {
        return Err(DynamicsError::VertexSingularity { radius: r });
    }
    let jet = s.f_jet(r)?;
    let (df, ddf) = (jet.f1, jet.f2);
    let f = df.hypot(1.0);
    let [x1, x2] = st.x;
    let [v1, v2] = st.v;
    let wz = st.omega_z;
    let (sa, ca) = p.alpha.sin_cos();
    let (gamma, mu, om, kk) = (p.gamma, p.mu, p.omega, 1.0 + p.k);

    let xv = x1 * v1 + x2 * v2;
    // x . J v with J = ((0, 1), (-1, 0))
    let xjv = x1 * v2 - x2 * v1;
    let (r2, r3, r4) = (r * r, r * r * r, r * r * r * r);
    let shared = (xjv * xjv * df + r * xv * xv * ddf) * df / (kk * f * f * r4);

    let dv1 = -gamma / (f * f) * (x1 / r * df * ca + (1.0 + x2 * x2 / r2 * df * df) * sa)
        + mu / f * (x1 / r3 * xjv * df + x2 / r2 * xv * ddf) * wz
        - mu / (f * f) * v1 / r * xv * df * ddf
        - x1 * shared
        - om * mu * (v2 + x1 / (f * r3) * xjv * df + x2 / r2 * xv / (f * f) * ddf * (f + r * df));

    let dv2 = -gamma / (f * f) * x2 / r * df * (ca - x1 / r * df * sa)
        + mu / f * (x2 / r3 * xjv * df - x1 / r2 * xv * ddf) * wz
        - mu / (f * f) * v2 / r * xv * df * ddf
        - x2 * shared
        + om * mu * (v1 - x2 / (f * r3) * xjv * df + x1 / r2 * xv / (f * f) * ddf * (f + r * df));

    let dwz = -gamma / f * x2 / r * df * sa
        - df * ddf / (kk * f * f * f) * xv / r2 * (r * f * wz + xjv * df)
        + om * df / (kk * f) * xv / r * (1.0 + ddf / f + r * df * ddf / (f * f));

    Ok(StateDerivative {
        dx: [v1, v2],
        dv: [finite("f-form v1", dv1)?, finite("f-form v2", dv2)?],
        domega_z: finite("f-form omega_z", dwz)?,
    })
}

/// `(omega_x, omega_y)` forced by the rolling constraint.
pub fn constraint_omega(
    p: &SystemParams,
    s: &Profile,
    st: &ReducedState,
) -> Result<[f64; 2], DynamicsError> {
    let Local { p1, big_f: f, .. } = local(s, st.x)?;
    let [x1, x2] = st.x;
    let [v1, v2] = st.v;
    let (wz, om) = (st.omega_z, p.omega);
    Ok([
        -f * v2 - x1 * p1 * wz + om * x1 * (f + p1),
        f * v1 - x2 * p1 * wz + om * x2 * (f + p1),
    ])
}

/// Full angular velocity `(omega_x, omega_y, omega_z)` of the ball.
pub fn angular_velocity(
    p: &SystemParams,
    s: &Profile,
    st: &ReducedState,
) -> Result<Vector3<f64>, DynamicsError> {
    let [wx, wy] = constraint_omega(p, s, st)?;
    Ok(Vector3::new(wx, wy, st.omega_z))
}

/// `V_C + omega x CP - Omega e_z x OP` (divided by the ball radius), with
/// `omega_x, omega_y` taken from [`constraint_omega`].
pub fn constraint_residual(
    p: &SystemParams,
    s: &Profile,
    st: &ReducedState,
) -> Result<[f64; 3], DynamicsError> {
    let loc = local(s, st.x)?;
    let n = Vector3::from(s.normal_vector(st.x)?);
    let [x1, x2] = st.x;
    let [v1, v2] = st.v;
    let v_c = Vector3::new(v1, v2, (x1 * v1 + x2 * v2) * loc.p1);
    let omega = angular_velocity(p, s, st)?;
    let op = Vector3::new(x1, x2, loc.psi) + n;
    let res = v_c + omega.cross(&n) - p.omega * Vector3::z().cross(&op);
    Ok([res.x, res.y, res.z])
}

/// Third entry of [`constraint_residual`].
pub fn constraint_residual_z(
    p: &SystemParams,
    s: &Profile,
    st: &ReducedState,
) -> Result<f64, DynamicsError> {
    Ok(constraint_residual(p, s, st)?[2])
}

/// Hat map: `hat(w) u = w x u`.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Right-hand side of the reconstruction equation `R' = hat(omega) R`.
pub fn attitude_rhs(omega: &Vector3<f64>, r: &Matrix3<f64>) -> Matrix3<f64> {
    hat(omega) * r
}
