//! Surfaces of revolution described through their even representation.
//!
//! A profile `f(r)` is never evaluated directly; every kind supplies the
//! smooth function `psi` with `f(r) = psi(r^2 / 2)` together with its first
//! two derivatives. Everything else (the `f` jet, the metric factor
//! `F = sqrt(1 + f'^2)`, the downward normal) is derived from that jet, which
//! keeps the vector field smooth through the vertex.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default domain radius (ball-radius units) for kinds without a natural bound.
pub const DEFAULT_R_MAX: f64 = 10.0;

/// Default number of samples used by [`Profile::regularity_check`].
pub const DEFAULT_REGULARITY_SAMPLES: usize = 10_001;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("argument {value} outside the profile domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },
    #[error("invalid profile parameter: {0}")]
    InvalidParameter(String),
}

/// `(psi, psi', psi'')` at some `u = r^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiJet {
    pub psi: f64,
    pub d1: f64,
    pub d2: f64,
}

/// `(f, f', f'')` at some radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FJet {
    pub f: f64,
    pub f1: f64,
    pub f2: f64,
}

/// User supplied `psi` jet. Must satisfy `psi(0) = 0`.
#[derive(Clone)]
pub struct CustomPsi {
    name: String,
    eval: Arc<dyn Fn(f64) -> PsiJet + Send + Sync>,
}

impl CustomPsi {
    pub fn new(name: impl Into<String>, eval: impl Fn(f64) -> PsiJet + Send + Sync + 'static) -> Self {
        Self { name: name.into(), eval: Arc::new(eval) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomPsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPsi").field("name", &self.name).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ProfileKind {
    /// The plane `f = 0`.
    Flat,
    /// `psi(u) = c u`, i.e. `f(r) = c r^2 / 2`.
    Paraboloid { c: f64 },
    /// `psi(u) = c2 u + c4 u^2`.
    Quartic { c2: f64, c4: f64 },
    /// Same algebra as the paraboloid, restricted to `c < 0` (vertex is a maximum).
    ConcaveCap { c: f64 },
    /// `f(r) = -slope * r` for `r >= delta`. With a positive slope this is an
    /// umbrella with its apex up; the apex itself is excluded.
    TruncatedCone { slope: f64, delta: f64 },
    /// `psi(u) = sum_i coeffs[i] * u^(i + 1)`.
    Polynomial { coeffs: Vec<f64> },
    Custom(CustomPsi),
}

/// A surface of revolution on the disk `|x| <= r_max`.
///
/// Profiles are immutable; every method is a pure function of its inputs.
#[derive(Debug, Clone)]
pub struct Profile {
    kind: ProfileKind,
    r_max: f64,
}

fn check_finite(name: &str, v: f64) -> Result<(), ProfileError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ProfileError::InvalidParameter(format!("{name} must be finite, got {v}")))
    }
}

impl Profile {
    pub fn flat() -> Self {
        Self { kind: ProfileKind::Flat, r_max: DEFAULT_R_MAX }
    }

    pub fn paraboloid(c: f64) -> Result<Self, ProfileError> {
        check_finite("c", c)?;
        Ok(Self { kind: ProfileKind::Paraboloid { c }, r_max: DEFAULT_R_MAX })
    }

    pub fn quartic(c2: f64, c4: f64) -> Result<Self, ProfileError> {
        check_finite("c2", c2)?;
        check_finite("c4", c4)?;
        Ok(Self { kind: ProfileKind::Quartic { c2, c4 }, r_max: DEFAULT_R_MAX })
    }

    pub fn concave_cap(c: f64) -> Result<Self, ProfileError> {
        check_finite("c", c)?;
        if c >= 0.0 {
            return Err(ProfileError::InvalidParameter(format!("concave cap needs c < 0, got {c}")));
        }
        Ok(Self { kind: ProfileKind::ConcaveCap { c }, r_max: DEFAULT_R_MAX })
    }

    pub fn truncated_cone(slope: f64, delta: f64) -> Result<Self, ProfileError> {
        check_finite("slope", slope)?;
        check_finite("delta", delta)?;
        if delta <= 0.0 || delta >= DEFAULT_R_MAX {
            return Err(ProfileError::InvalidParameter(format!(
                "cone cutoff delta must lie in (0, r_max), got {delta}"
            )));
        }
        Ok(Self { kind: ProfileKind::TruncatedCone { slope, delta }, r_max: DEFAULT_R_MAX })
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self, ProfileError> {
        for (i, c) in coeffs.iter().enumerate() {
            check_finite(&format!("coeffs[{i}]"), *c)?;
        }
        Ok(Self { kind: ProfileKind::Polynomial { coeffs }, r_max: DEFAULT_R_MAX })
    }

    pub fn custom(psi: CustomPsi) -> Self {
        Self { kind: ProfileKind::Custom(psi), r_max: DEFAULT_R_MAX }
    }

    /// Replaces the domain radius. `f64::INFINITY` is accepted.
    pub fn with_r_max(mut self, r_max: f64) -> Result<Self, ProfileError> {
        if r_max.is_nan() || r_max <= self.inner_radius() {
            return Err(ProfileError::InvalidParameter(format!(
                "r_max must exceed {}, got {r_max}",
                self.inner_radius()
            )));
        }
        self.r_max = r_max;
        Ok(self)
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Finite outer radius for grids and sweeps.
    pub fn sweep_bound(&self) -> f64 {
        if self.r_max.is_finite() {
            self.r_max
        } else {
            DEFAULT_R_MAX
        }
    }

    /// Smallest admissible radius: `delta` for the truncated cone, 0 otherwise.
    pub fn inner_radius(&self) -> f64 {
        match self.kind {
            ProfileKind::TruncatedCone { delta, .. } => delta,
            _ => 0.0,
        }
    }

    /// True when the surface is smooth at the vertex (everything but the cone).
    pub fn is_smooth(&self) -> bool {
        !matches!(self.kind, ProfileKind::TruncatedCone { .. })
    }

    fn check_radius(&self, r: f64) -> Result<(), ProfileError> {
        let lo = self.inner_radius();
        if r.is_nan() || r < lo || r > self.r_max {
            return Err(ProfileError::OutOfDomain { value: r, lo, hi: self.r_max });
        }
        Ok(())
    }

    /// `(psi, psi', psi'')` at `u`.
    pub fn psi_jet(&self, u: f64) -> Result<PsiJet, ProfileError> {
        let lo = 0.5 * self.inner_radius().powi(2);
        let hi = 0.5 * self.r_max * self.r_max;
        if u.is_nan() || u < lo || u > hi {
            return Err(ProfileError::OutOfDomain { value: u, lo, hi });
        }
        let jet = match &self.kind {
            ProfileKind::Flat => PsiJet { psi: 0.0, d1: 0.0, d2: 0.0 },
            ProfileKind::Paraboloid { c } | ProfileKind::ConcaveCap { c } => {
                PsiJet { psi: c * u, d1: *c, d2: 0.0 }
            }
            ProfileKind::Quartic { c2, c4 } => PsiJet {
                psi: c2 * u + c4 * u * u,
                d1: c2 + 2.0 * c4 * u,
                d2: 2.0 * c4,
            },
            ProfileKind::TruncatedCone { slope, .. } => {
                let r = (2.0 * u).sqrt();
                PsiJet { psi: -slope * r, d1: -slope / r, d2: slope / (r * r * r) }
            }
            ProfileKind::Polynomial { coeffs } => polynomial_jet(coeffs, u),
            ProfileKind::Custom(custom) => (custom.eval)(u),
        };
        Ok(jet)
    }

    /// `(f, f', f'')` at radius `|r|`.
    pub fn f_jet(&self, r: f64) -> Result<FJet, ProfileError> {
        let r = r.abs();
        self.check_radius(r)?;
        let jet = self.psi_jet(0.5 * r * r)?;
        Ok(FJet { f: jet.psi, f1: r * jet.d1, f2: jet.d1 + r * r * jet.d2 })
    }

    /// `F(r) = sqrt(1 + f'(r)^2)`.
    pub fn metric_factor(&self, r: f64) -> Result<f64, ProfileError> {
        let f1 = self.f_jet(r)?.f1;
        Ok(f1.hypot(1.0))
    }

    /// Radii of a uniform grid on the domain where `f'' > -(1 + f'^2)^(3/2)` fails.
    ///
    /// Sampling based: exhaustive for the built-in families, not for custom jets.
    pub fn regularity_check(&self, n_samples: usize) -> Vec<f64> {
        let n = n_samples.max(2);
        let lo = self.inner_radius();
        let hi = self.sweep_bound();
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .filter(|&r| match self.f_jet(r) {
                Ok(j) => !(j.f2 > -(1.0 + j.f1 * j.f1).powf(1.5)),
                Err(_) => true,
            })
            .collect()
    }

    /// Downward unit normal `(x1 psi', x2 psi', -1) / F` at the point above `x`.
    pub fn normal_vector(&self, x: [f64; 2]) -> Result<[f64; 3], ProfileError> {
        let r = x[0].hypot(x[1]);
        self.check_radius(r)?;
        let d1 = self.psi_jet(0.5 * r * r)?.d1;
        let big_f = (r * d1).hypot(1.0);
        Ok([x[0] * d1 / big_f, x[1] * d1 / big_f, -1.0 / big_f])
    }

    /// Serializable description, or `None` for closure-backed profiles.
    pub fn spec(&self) -> Option<ProfileSpec> {
        let r_max = Some(self.r_max).filter(|r| r.is_finite());
        Some(match &self.kind {
            ProfileKind::Flat => ProfileSpec::Flat { r_max },
            ProfileKind::Paraboloid { c } => ProfileSpec::Paraboloid { c: *c, r_max },
            ProfileKind::Quartic { c2, c4 } => ProfileSpec::Quartic { c2: *c2, c4: *c4, r_max },
            ProfileKind::ConcaveCap { c } => ProfileSpec::ConcaveCap { c: *c, r_max },
            ProfileKind::TruncatedCone { slope, delta } => {
                ProfileSpec::Cone { slope: *slope, delta: *delta, r_max }
            }
            ProfileKind::Polynomial { coeffs } => {
                ProfileSpec::Polynomial { coeffs: coeffs.clone(), r_max }
            }
            ProfileKind::Custom(_) => return None,
        })
    }
}

fn polynomial_jet(coeffs: &[f64], u: f64) -> PsiJet {
    let mut jet = PsiJet { psi: 0.0, d1: 0.0, d2: 0.0 };
    for (i, &a) in coeffs.iter().enumerate() {
        let p = i as i32 + 1;
        jet.psi += a * u.powi(p);
        jet.d1 += a * f64::from(p) * u.powi(p - 1);
        if p >= 2 {
            jet.d2 += a * f64::from(p * (p - 1)) * u.powi(p - 2);
        }
    }
    jet
}

/// JSON form of a profile: `{"kind": "paraboloid", "c": 0.5, "r_max": 10.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Flat {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_max: Option<f64>,
    },
    Paraboloid {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_max: Option<f64>,
    },
    Quartic {
        c2: f64,
        c4: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_max: Option<f64>,
    },
    ConcaveCap {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_max: Option<f64>,
    },
    #[serde(alias = "truncated_cone")]
    Cone {
        slope: f64,
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_max: Option<f64>,
    },
    Polynomial {
        coeffs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_max: Option<f64>,
    },
}

impl ProfileSpec {
    pub fn build(&self) -> Result<Profile, ProfileError> {
        let (profile, r_max) = match self {
            ProfileSpec::Flat { r_max } => (Profile::flat(), r_max),
            ProfileSpec::Paraboloid { c, r_max } => (Profile::paraboloid(*c)?, r_max),
            ProfileSpec::Quartic { c2, c4, r_max } => (Profile::quartic(*c2, *c4)?, r_max),
            ProfileSpec::ConcaveCap { c, r_max } => (Profile::concave_cap(*c)?, r_max),
            ProfileSpec::Cone { slope, delta, r_max } => {
                (Profile::truncated_cone(*slope, *delta)?, r_max)
            }
            ProfileSpec::Polynomial { coeffs, r_max } => (Profile::polynomial(coeffs.clone())?, r_max),
        };
        match r_max {
            Some(r) => profile.with_r_max(*r),
            None => Ok(profile),
        }
    }

    pub fn from_json(text: &str) -> Result<Profile, ProfileError> {
        let spec: ProfileSpec = serde_json::from_str(text)
            .map_err(|e| ProfileError::InvalidParameter(e.to_string()))?;
        spec.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn psi_jet_closed_forms() {
        let j = Profile::flat().psi_jet(0.7).unwrap();
        assert_eq!((j.psi, j.d1, j.d2), (0.0, 0.0, 0.0));
        let j = Profile::paraboloid(0.5).unwrap().psi_jet(2.0).unwrap();
        assert_eq!((j.psi, j.d1, j.d2), (1.0, 0.5, 0.0));
        let j = Profile::concave_cap(-0.5).unwrap().psi_jet(1.0).unwrap();
        assert_eq!((j.psi, j.d1, j.d2), (-0.5, -0.5, 0.0));
        let j = Profile::quartic(0.3, -0.2).unwrap().psi_jet(1.5).unwrap();
        assert_abs_diff_eq!(j.psi, 0.3 * 1.5 - 0.2 * 2.25, epsilon = 1e-15);
        assert_abs_diff_eq!(j.d1, 0.3 - 0.4 * 1.5, epsilon = 1e-15);
        assert_eq!(j.d2, -0.4);
    }

    #[test]
    fn psi_jet_rejects_out_of_domain() {
        let p = Profile::paraboloid(1.0).unwrap();
        match p.psi_jet(50.1) {
            Err(ProfileError::OutOfDomain { value, hi, .. }) => {
                assert_eq!(value, 50.1);
                assert_eq!(hi, 50.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(p.psi_jet(-1e-3).is_err());
        let cone = Profile::truncated_cone(0.5, 0.2).unwrap();
        assert!(cone.psi_jet(0.01).is_err());
        assert!(cone.f_jet(0.1).is_err());
        assert!(cone.f_jet(0.2).is_ok());
    }

    #[test]
    fn f_jet_examples() {
        let j = Profile::paraboloid(0.8).unwrap().f_jet(0.0).unwrap();
        assert_eq!((j.f, j.f1, j.f2), (0.0, 0.0, 0.8));
        // f''''(0) = 3 psi''(0) = 18 for psi = 3 u^2.
        let q = Profile::quartic(0.0, 3.0).unwrap();
        assert_eq!(q.f_jet(0.0).unwrap().f2, 0.0);
        assert_eq!(q.psi_jet(0.0).unwrap().d2, 6.0);
        let j = Profile::paraboloid(-0.5).unwrap().f_jet(2.0).unwrap();
        assert_eq!((j.f, j.f1, j.f2), (-1.0, -1.0, -0.5));
    }

    #[test]
    fn cone_jet_has_zero_curvature_along_generatrix() {
        let cone = Profile::truncated_cone(0.6, 0.1).unwrap();
        for r in [0.1, 0.5, 3.0, 9.9] {
            let j = cone.f_jet(r).unwrap();
            assert_abs_diff_eq!(j.f, -0.6 * r, epsilon = 1e-14);
            assert_abs_diff_eq!(j.f1, -0.6, epsilon = 1e-14);
            assert_abs_diff_eq!(j.f2, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn metric_factor_examples() {
        assert_eq!(Profile::flat().metric_factor(3.0).unwrap(), 1.0);
        assert_eq!(Profile::quartic(0.4, 0.1).unwrap().metric_factor(0.0).unwrap(), 1.0);
        let f = Profile::concave_cap(-0.5).unwrap().metric_factor(2.0).unwrap();
        assert_abs_diff_eq!(f, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn regularity_examples() {
        assert!(Profile::flat().regularity_check(101).is_empty());
        assert!(Profile::concave_cap(-0.5).unwrap().regularity_check(DEFAULT_REGULARITY_SAMPLES).is_empty());
        let bad = Profile::concave_cap(-1.5).unwrap().regularity_check(1001);
        assert_eq!(bad.first(), Some(&0.0));
    }

    #[test]
    fn normal_vector_examples() {
        assert_eq!(Profile::flat().normal_vector([1.0, 2.0]).unwrap(), [0.0, 0.0, -1.0]);
        let n = Profile::paraboloid(1.0).unwrap().normal_vector([1.0, 0.0]).unwrap();
        let s = 0.5f64.sqrt();
        assert_abs_diff_eq!(n[0], s, epsilon = 1e-15);
        assert_abs_diff_eq!(n[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(n[2], -s, epsilon = 1e-15);
        let n = Profile::quartic(-0.3, 0.2).unwrap().normal_vector([0.0, 0.0]).unwrap();
        assert_eq!(n, [0.0, 0.0, -1.0]);
    }

    #[test]
    fn polynomial_matches_quartic() {
        let poly = Profile::polynomial(vec![-0.4, 0.15]).unwrap();
        let quart = Profile::quartic(-0.4, 0.15).unwrap();
        for u in [0.0, 0.3, 1.7, 20.0] {
            let a = poly.psi_jet(u).unwrap();
            let b = quart.psi_jet(u).unwrap();
            assert_abs_diff_eq!(a.psi, b.psi, epsilon = 1e-13);
            assert_abs_diff_eq!(a.d1, b.d1, epsilon = 1e-13);
            assert_abs_diff_eq!(a.d2, b.d2, epsilon = 1e-13);
        }
        let cubic = Profile::polynomial(vec![0.0, 0.0, 1.0]).unwrap().psi_jet(2.0).unwrap();
        assert_abs_diff_eq!(cubic.psi, 8.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cubic.d1, 12.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cubic.d2, 12.0, epsilon = 1e-14);
    }

    #[test]
    fn json_construction() {
        let p = ProfileSpec::from_json(r#"{"kind": "paraboloid", "c": 0.5, "r_max": 10.0}"#).unwrap();
        assert!(matches!(p.kind(), ProfileKind::Paraboloid { c } if *c == 0.5));
        let cone = ProfileSpec::from_json(r#"{"kind":"cone","slope":0.5774,"delta":0.1}"#).unwrap();
        assert_eq!(cone.inner_radius(), 0.1);
        assert!(ProfileSpec::from_json(r#"{"kind": "paraboloid", "c": 0.5, "colour": 1}"#).is_err());
        assert!(ProfileSpec::from_json(r#"{"kind": "torus"}"#).is_err());
        assert!(ProfileSpec::from_json(r#"{"kind": "concave_cap", "c": 0.5}"#).is_err());
        let spec = p.spec().unwrap();
        let back: ProfileSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn custom_profile_uses_closure() {
        let p = Profile::custom(CustomPsi::new("double-well", |u| PsiJet {
            psi: u * u - u,
            d1: 2.0 * u - 1.0,
            d2: 2.0,
        }));
        let j = p.f_jet(1.0).unwrap();
        assert_abs_diff_eq!(j.f1, 0.0, epsilon = 1e-15);
        assert!(p.spec().is_none());
    }
}
