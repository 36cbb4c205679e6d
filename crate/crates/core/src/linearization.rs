//! Linearization at reduced equilibria on the `x1` axis.
//!
//! At `(x1, 0, 0, 0, omega_z)` the Jacobian has a zero last column and its
//! leading 4x4 block has the pattern
//!
//! ```text
//! 0    0    1    0
//! 0    0    0    1
//! a31  0    0    a34
//! 0    a42  a43  0
//! ```
//!
//! whose characteristic polynomial is the biquadratic `l^4 + 2 b l^2 + c`.

use std::fmt;

use nalgebra::{Matrix4, SMatrix, Vector4};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{reduced_vector_field, DynamicsError, ReducedState, SystemParams};
use crate::equilibria::residual;
use crate::profile::Profile;

pub type Matrix5 = SMatrix<f64, 5, 5>;

/// Relative step of [`jacobian_fd`].
pub const FD_STEP: f64 = 1e-6;

/// Largest residual accepted by [`block4_analytic`].
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearizationError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("({x1}, 0) is not an equilibrium (residual {residual:e})")]
    NotEquilibrium { x1: f64, residual: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl From<crate::profile::ProfileError> for LinearizationError {
    fn from(e: crate::profile::ProfileError) -> Self {
        LinearizationError::Dynamics(e.into())
    }
}

/// Central-difference Jacobian of the reduced field; the step for coordinate
/// `i` is `FD_STEP * max(1, |z_i|)`.
pub fn jacobian_fd(p: &SystemParams, s: &Profile, st: &ReducedState) -> Result<Matrix5, DynamicsError> {
    let z = st.to_array();
    let mut jac = Matrix5::zeros();
    for j in 0..5 {
        let h = FD_STEP * z[j].abs().max(1.0);
        let (mut zp, mut zm) = (z, z);
        zp[j] += h;
        zm[j] -= h;
        let fp = reduced_vector_field(p, s, &ReducedState::from_array(zp))?.to_array();
        let fm = reduced_vector_field(p, s, &ReducedState::from_array(zm))?.to_array();
        for i in 0..5 {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// The four nontrivial entries of the 4x4 block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Block4 {
    pub a31: f64,
    pub a34: f64,
    pub a42: f64,
    pub a43: f64,
}

impl Block4 {
    pub fn to_matrix(&self) -> Matrix4<f64> {
        Matrix4::new(
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            self.a31, 0.0, 0.0, self.a34, //
            0.0, self.a42, self.a43, 0.0,
        )
    }

    /// Block entries read off a 5x5 Jacobian.
    pub fn from_jacobian(j: &Matrix5) -> Self {
        Self { a31: j[(2, 0)], a34: j[(2, 3)], a42: j[(3, 1)], a43: j[(3, 2)] }
    }

    /// Null vector of the block for eigenvalue `lambda`, as `(x, lambda x)`,
    /// normalized to unit length.
    pub fn eigenvector(&self, lambda: Complex64) -> [Complex64; 4] {
        let l2 = lambda * lambda;
        // Rows of (l^2 - A) x = 0 restricted to positions:
        // (l^2 - a31) x1 - a34 l x2 = 0 and -a43 l x1 + (l^2 - a42) x2 = 0.
        let first = [lambda * self.a34, l2 - self.a31];
        let second = [l2 - self.a42, lambda * self.a43];
        let n1 = first[0].norm_sqr() + first[1].norm_sqr();
        let n2 = second[0].norm_sqr() + second[1].norm_sqr();
        let x = if n1.max(n2) == 0.0 {
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
        } else if n1 >= n2 {
            first
        } else {
            second
        };
        let v = [x[0], x[1], lambda * x[0], lambda * x[1]];
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        v.map(|c| c / norm)
    }
}

/// Closed-form entries of the block at the equilibrium `(x1, 0)`.
pub fn block4_analytic(
    p: &SystemParams,
    s: &Profile,
    x1: f64,
    omega_z: f64,
) -> Result<Block4, LinearizationError> {
    let res = residual(p, s, [x1, 0.0], omega_z)?;
    if res > EQUILIBRIUM_TOLERANCE {
        return Err(LinearizationError::NotEquilibrium { x1, residual: res });
    }
    let jet = s.psi_jet(0.5 * x1 * x1)?;
    let (d1, d2) = (jet.d1, jet.d2);
    let f = (x1 * d1).hypot(1.0);
    let f2 = s.f_jet(x1)?.f2;
    let (sa, ca) = p.alpha().sin_cos();
    let (gamma, mu, om) = (p.gamma(), p.mu(), p.omega());
    let x2 = x1 * x1;
    let (f_2, f_4) = (f * f, f * f * f * f);
    Ok(Block4 {
        a31: gamma / f_4 * f2 * (2.0 * x1 * d1 * sa + (x2 * d1 * d1 - 1.0) * ca),
        a34: mu * d1 * omega_z / f - om * mu / f_2 * (1.0 + f * d1 + x2 * d1 * d1),
        a42: gamma * d1 * (x1 * d1 * sa - ca) / f_2,
        a43: -mu * f2 * omega_z / f
            + om * mu / f_2 * (f_2 + (x2 * d1 + f) * d1 + x2 * (f + x2 * d1) * d2),
    })
}

/// `(b, c)` with characteristic polynomial `l^4 + 2 b l^2 + c`.
pub fn biquadratic_coeffs(b4: &Block4) -> (f64, f64) {
    (-0.5 * (b4.a31 + b4.a42 + b4.a34 * b4.a43), b4.a31 * b4.a42)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EigenType {
    Z,
    C,
    RPlus,
    RMinus,
    FPlus,
    FMinus,
}

impl EigenType {
    pub fn symbol(self) -> &'static str {
        match self {
            EigenType::Z => "Z",
            EigenType::C => "C",
            EigenType::RPlus => "R+",
            EigenType::RMinus => "R-",
            EigenType::FPlus => "F+",
            EigenType::FMinus => "F-",
        }
    }

    /// Type of a single eigenvalue, with `eps` as the zero threshold.
    pub fn of(lambda: Complex64, eps: f64) -> Self {
        let re0 = lambda.re.abs() <= eps;
        let im0 = lambda.im.abs() <= eps;
        match (re0, im0) {
            (true, true) => EigenType::Z,
            (true, false) => EigenType::C,
            (false, true) if lambda.re > 0.0 => EigenType::RPlus,
            (false, true) => EigenType::RMinus,
            (false, false) if lambda.re > 0.0 => EigenType::FPlus,
            (false, false) => EigenType::FMinus,
        }
    }
}

/// The spectrum class of the 4x4 block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SpectrumClass {
    Zzzz,
    Zzcc,
    ZzRR,
    Cccc,
    Ffff,
    Rrrr,
    /// `c < 0`; never met at the vertex nor on concave tilted surfaces.
    RrCc,
}

impl SpectrumClass {
    pub const ALL: [SpectrumClass; 7] = [
        SpectrumClass::Zzzz,
        SpectrumClass::Zzcc,
        SpectrumClass::ZzRR,
        SpectrumClass::Cccc,
        SpectrumClass::Ffff,
        SpectrumClass::Rrrr,
        SpectrumClass::RrCc,
    ];

    pub fn types(self) -> [EigenType; 4] {
        use EigenType::*;
        let mut t = match self {
            SpectrumClass::Zzzz => [Z, Z, Z, Z],
            SpectrumClass::Zzcc => [Z, Z, C, C],
            SpectrumClass::ZzRR => [Z, Z, RPlus, RMinus],
            SpectrumClass::Cccc => [C, C, C, C],
            SpectrumClass::Ffff => [FPlus, FPlus, FMinus, FMinus],
            SpectrumClass::Rrrr => [RPlus, RPlus, RMinus, RMinus],
            SpectrumClass::RrCc => [RPlus, RMinus, C, C],
        };
        t.sort();
        t
    }

    pub fn label(self) -> &'static str {
        match self {
            SpectrumClass::Zzzz => "ZZZZ",
            SpectrumClass::Zzcc => "ZZCC",
            SpectrumClass::ZzRR => "ZZR+R-",
            SpectrumClass::Cccc => "CCCC",
            SpectrumClass::Ffff => "F+F+F-F-",
            SpectrumClass::Rrrr => "R+R+R-R-",
            SpectrumClass::RrCc => "R+R-CC",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == label)
    }

    /// No eigenvalue with nonzero real part.
    pub fn is_spectrally_stable(self) -> bool {
        matches!(self, SpectrumClass::Zzzz | SpectrumClass::Zzcc | SpectrumClass::Cccc)
    }
}

impl fmt::Display for SpectrumClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumType {
    pub class: SpectrumClass,
    /// Sorted eigenvalue types, consistent with `class`.
    pub types: [EigenType; 4],
    /// Roots of `l^4 + 2 b l^2 + c`, ordered `+l1, -l1, +l2, -l2`.
    pub eigenvalues: [Complex64; 4],
    pub eps: f64,
}

impl SpectrumType {
    pub fn is_spectrally_stable(&self) -> bool {
        self.class.is_spectrally_stable()
    }

    /// Types of the roots classified one by one.
    pub fn root_types(&self) -> [EigenType; 4] {
        let mut t = self.eigenvalues.map(|l| EigenType::of(l, self.eps));
        t.sort();
        t
    }
}

/// Default zero threshold `1e-9 max(1, |b|, sqrt|c|)`.
pub fn default_eps(b: f64, c: f64) -> f64 {
    1e-9 * 1f64.max(b.abs()).max(c.abs().sqrt())
}

fn principal_sqrt(w: Complex64) -> Complex64 {
    if w.im == 0.0 {
        if w.re >= 0.0 {
            Complex64::new(w.re.sqrt(), 0.0)
        } else {
            Complex64::new(0.0, (-w.re).sqrt())
        }
    } else {
        w.sqrt()
    }
}

/// Classifies the roots of `l^4 + 2 b l^2 + c`.
///
/// `c` and `b` count as zero below `eps`. Two roots count as coincident when
/// they would differ by less than `eps`, i.e. `|b^2 - c| <= 4 |b| eps^2`, with a
/// few ulps of `max(b^2, |c|)` added for roundoff. Values inside those bands
/// are snapped to the boundary so that the returned roots carry the same labels as `class`.
/// Boundaries belong to the closed side (`b^2 = c, b > 0` is CCCC).
pub fn classify_biquadratic(b: f64, c: f64, eps: Option<f64>) -> SpectrumType {
    let eps = eps.unwrap_or_else(|| default_eps(b, c));
    let b_zero = b.abs() <= eps;
    let c_zero = c.abs() <= eps;
    let disc = b * b - c;
    let disc_zero = disc.abs() <= 4.0 * b.abs() * eps * eps + 8.0 * f64::EPSILON * (b * b).max(c.abs());

    let (class, b, disc) = if c_zero {
        let class = if b_zero {
            SpectrumClass::Zzzz
        } else if b > 0.0 {
            SpectrumClass::Zzcc
        } else {
            SpectrumClass::ZzRR
        };
        let b = if b_zero { 0.0 } else { b };
        (class, b, b * b)
    } else if c > 0.0 {
        if disc_zero {
            let class = if b < 0.0 { SpectrumClass::Rrrr } else { SpectrumClass::Cccc };
            (class, b, 0.0)
        } else if disc < 0.0 {
            (SpectrumClass::Ffff, b, disc)
        } else if b < 0.0 {
            (SpectrumClass::Rrrr, b, disc)
        } else {
            (SpectrumClass::Cccc, b, disc)
        }
    } else {
        (SpectrumClass::RrCc, b, disc)
    };

    let sq = principal_sqrt(Complex64::new(disc, 0.0));
    let l1 = principal_sqrt(-b + sq);
    let l2 = principal_sqrt(-b - sq);
    SpectrumType { class, types: class.types(), eigenvalues: [l1, -l1, l2, -l2], eps }
}

/// `B(omega_z, Omega) = (1 + f''(0)) Omega - f''(0) omega_z`.
pub fn b_function(f2_0: f64, omega_z: f64, omega: f64) -> f64 {
    (1.0 + f2_0) * omega - f2_0 * omega_z
}

/// `(b, c)` at the vertex: `b = gamma f''(0) + mu^2 B^2 / 2`, `c = (gamma f''(0))^2`.
pub fn vertex_biquadratic(p: &SystemParams, f2_0: f64, omega_z: f64) -> (f64, f64) {
    let bb = b_function(f2_0, omega_z, p.omega());
    let g = p.gamma() * f2_0;
    (g + 0.5 * p.mu() * p.mu() * bb * bb, g * g)
}

/// Spectrum of the vertex equilibrium `(0, 0, 0, 0, omega_z)`.
pub fn vertex_spectrum(p: &SystemParams, f2_0: f64, omega_z: f64) -> Result<SpectrumType, LinearizationError> {
    if p.alpha() != 0.0 {
        return Err(LinearizationError::Precondition(format!(
            "vertex spectrum needs alpha = 0, got {}",
            p.alpha()
        )));
    }
    let (b, c) = vertex_biquadratic(p, f2_0, omega_z);
    Ok(classify_biquadratic(b, c, None))
}

/// Verdict of the tilted stability conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltedVerdict {
    pub stable: bool,
    /// Left minus right side of the closed-form condition. Only its sign is
    /// meaningful: the flat and curved cases use different normalizations.
    pub slack: f64,
}

/// Curvature below which the tilted point is treated as lying on a flat generatrix.
pub const FLAT_GENERATRIX_TOLERANCE: f64 = 1e-12;

fn tilted_precondition(p: &SystemParams, s: &Profile, x1: f64) -> Result<(f64, f64), LinearizationError> {
    let alpha = p.alpha();
    if !(alpha > 0.0) {
        return Err(LinearizationError::Precondition(format!("tilt must be positive, got {alpha}")));
    }
    if !(x1 > 0.0) {
        return Err(LinearizationError::Precondition(format!("x1 must be positive, got {x1}")));
    }
    let jet = s.f_jet(x1)?;
    let off = (jet.f1 + alpha.tan()).abs();
    if off > 1e-8 {
        return Err(LinearizationError::Precondition(format!(
            "f'({x1}) + tan(alpha) = {off:e}; not a tilted equilibrium"
        )));
    }
    if jet.f2 > FLAT_GENERATRIX_TOLERANCE {
        return Err(LinearizationError::Precondition(format!("f''({x1}) = {} > 0", jet.f2)));
    }
    Ok((jet.f1, jet.f2))
}

/// Closed-form spectral stability of the tilted equilibrium `(x1, 0)`.
///
/// On a flat generatrix (`f''(x1) = 0`) the condition is
/// `(x1 / sin(alpha) - 1) Omega^2 + Omega omega_z >= gamma / mu^2`; on a
/// concave one it is the quadratic form
/// `a11 Omega^2 + 2 a12 Omega omega_z + a22 omega_z^2 >= a0` with
/// `h = -f''(x1) cos(alpha) / sin(alpha)`.
pub fn tilted_stability(
    p: &SystemParams,
    s: &Profile,
    x1: f64,
    omega_z: f64,
) -> Result<TiltedVerdict, LinearizationError> {
    let (_, f2) = tilted_precondition(p, s, x1)?;
    let (sa, ca) = p.alpha().sin_cos();
    let g = p.gamma() / (p.mu() * p.mu());
    let om = p.omega();
    let slack = if f2.abs() <= FLAT_GENERATRIX_TOLERANCE {
        (x1 / sa - 1.0) * om * om + om * omega_z - g
    } else {
        let h = -f2 * ca / sa;
        let [a11, a12, a22, a0] = tilted_coefficients(h, x1, sa, ca, g);
        a11 * om * om + 2.0 * a12 * om * omega_z + a22 * omega_z * omega_z - a0
    };
    Ok(TiltedVerdict { stable: slack >= 0.0, slack })
}

fn tilted_coefficients(h: f64, x1: f64, sa: f64, ca: f64, g: f64) -> [f64; 4] {
    let hx = h * x1;
    [
        (x1 - sa) * (1.0 - h * sa + hx * sa * sa),
        0.5 * sa * (1.0 - 2.0 * h * sa + hx + hx * sa * sa),
        h * sa * sa,
        g * (1.0 + 2.0 * hx.sqrt() * ca + hx * ca * ca) * sa,
    ]
}

/// The same verdict computed from the block: spectrally stable iff
/// `b >= 0` when `c = 0` and `b >= sqrt(c)` when `c > 0`.
pub fn tilted_stability_direct(
    p: &SystemParams,
    s: &Profile,
    x1: f64,
    omega_z: f64,
) -> Result<SpectrumType, LinearizationError> {
    tilted_precondition(p, s, x1)?;
    let (b, c) = biquadratic_coeffs(&block4_analytic(p, s, x1, omega_z)?);
    Ok(classify_biquadratic(b, c, None))
}

/// Smallest `|omega_z|` stabilizing the tilted equilibrium when `Omega = 0`:
/// `omega_z^2 >= gamma / (mu^2 sin(alpha)) (1/h + 2 cos(alpha) sqrt(x1 / h) + x1 cos^2(alpha))`.
///
/// `None` on a flat generatrix, where no spin alone stabilizes.
pub fn tilted_spin_threshold(p: &SystemParams, s: &Profile, x1: f64) -> Result<Option<f64>, LinearizationError> {
    let (_, f2) = tilted_precondition(p, s, x1)?;
    if f2.abs() <= FLAT_GENERATRIX_TOLERANCE {
        return Ok(None);
    }
    let (sa, ca) = p.alpha().sin_cos();
    let h = -f2 * ca / sa;
    let g = p.gamma() / (p.mu() * p.mu());
    let w2 = g / sa * (1.0 / h + 2.0 * ca * (x1 / h).sqrt() + x1 * ca * ca);
    Ok(Some(w2.sqrt()))
}

/// Unit real direction spanning (part of) the eigenspace of `lambda`.
pub fn real_direction(b4: &Block4, lambda: Complex64) -> Vector4<f64> {
    let v = b4.eigenvector(lambda);
    let re = Vector4::new(v[0].re, v[1].re, v[2].re, v[3].re);
    let im = Vector4::new(v[0].im, v[1].im, v[2].im, v[3].im);
    let pick = if re.norm() >= im.norm() { re } else { im };
    pick / pick.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_6;

    #[test]
    fn biquadratic_examples() {
        let b4 = Block4 { a31: -1.0, a34: 3.0, a42: -2.0, a43: -3.0 };
        assert_eq!(biquadratic_coeffs(&b4), (6.0, 2.0));
        let zero = Block4 { a31: 0.0, a34: 0.0, a42: 0.0, a43: 0.0 };
        assert_eq!(biquadratic_coeffs(&zero), (0.0, 0.0));
    }

    #[test]
    fn block_char_poly_matches_determinant() {
        let b4 = Block4 { a31: -0.7, a34: 1.3, a42: 0.4, a43: -0.2 };
        let (b, c) = biquadratic_coeffs(&b4);
        let m = b4.to_matrix();
        for l in [0.3, -1.1, 2.5] {
            let det = (Matrix4::identity() * l - m).determinant();
            assert_abs_diff_eq!(det, l.powi(4) + 2.0 * b * l * l + c, epsilon = 1e-12);
        }
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_biquadratic(0.0, 0.0, None).class, SpectrumClass::Zzzz);
        assert_eq!(classify_biquadratic(1.0, 2.0, None).class, SpectrumClass::Ffff);
        assert_eq!(classify_biquadratic(1.0, 0.0, None).class, SpectrumClass::Zzcc);
        assert_eq!(classify_biquadratic(-1.0, 0.0, None).class, SpectrumClass::ZzRR);
        assert_eq!(classify_biquadratic(2.0, 1.0, None).class, SpectrumClass::Cccc);
        assert_eq!(classify_biquadratic(1.0, -1.0, None).class, SpectrumClass::RrCc);

        let g = 5.0 / 7.0 * 0.5;
        let s = classify_biquadratic(-g, g * g, None);
        assert_eq!(s.class, SpectrumClass::Rrrr);
        let mut re: Vec<f64> = s.eigenvalues.iter().map(|l| l.re).collect();
        re.sort_by(f64::total_cmp);
        let r = (5.0f64 / 14.0).sqrt();
        for (got, want) in re.iter().zip([-r, -r, r, r]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        assert!(s.eigenvalues.iter().all(|l| l.im == 0.0));
    }

    #[test]
    fn root_types_match_class() {
        for (b, c) in [(0.0, 0.0), (1.0, 2.0), (-3.0, 0.0), (2.0, 4.0), (-2.0, 4.0), (0.5, -2.0), (0.0, 1.0)] {
            let s = classify_biquadratic(b, c, None);
            assert_eq!(s.root_types(), s.types, "b={b} c={c}");
        }
    }

    #[test]
    fn vertex_cases() {
        let f = |om: f64, f2: f64, wz: f64| vertex_spectrum(&SystemParams::homogeneous(om), f2, wz).unwrap().class;
        assert_eq!(f(0.0, 0.0, 3.0), SpectrumClass::Zzzz);
        assert_eq!(f(1.0, 0.0, 3.0), SpectrumClass::Zzcc);
        assert_eq!(f(0.4, 0.5, -3.0), SpectrumClass::Cccc);
        let p = 7.0 * (10.0f64 / 7.0).sqrt();
        assert_eq!(f(0.0, -0.5, p + 0.01), SpectrumClass::Cccc);
        assert_eq!(f(0.0, -0.5, p - 0.01), SpectrumClass::Ffff);
        assert_eq!(f(0.0, -0.5, 0.0), SpectrumClass::Rrrr);
        let tilted = SystemParams::homogeneous(0.0).with_alpha(0.1).unwrap();
        assert!(vertex_spectrum(&tilted, 0.5, 0.0).is_err());
    }

    #[test]
    fn vertex_block_entries() {
        let p = SystemParams::homogeneous(0.6);
        let prof = Profile::paraboloid(-0.3).unwrap();
        let b4 = block4_analytic(&p, &prof, 0.0, 1.7).unwrap();
        let bb = b_function(-0.3, 1.7, 0.6);
        assert_abs_diff_eq!(b4.a31, 0.3 * p.gamma(), epsilon = 1e-15);
        assert_eq!(b4.a31, b4.a42);
        assert_abs_diff_eq!(b4.a34, -p.mu() * bb, epsilon = 1e-15);
        assert_eq!(b4.a34, -b4.a43);

        let flat = block4_analytic(&SystemParams::homogeneous(1.0), &Profile::flat(), 0.0, 4.0).unwrap();
        assert_eq!((flat.a31, flat.a42), (0.0, 0.0));
        assert_abs_diff_eq!(flat.a34, -2.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(flat.a43, 2.0 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn tilted_block_entries() {
        let p = SystemParams::homogeneous(1.0).with_alpha(FRAC_PI_6).unwrap();
        let prof = Profile::concave_cap(-0.5).unwrap();
        let x1 = 2.0 * FRAC_PI_6.tan();
        let b4 = block4_analytic(&p, &prof, x1, 0.0).unwrap();
        let ca = FRAC_PI_6.cos();
        assert_abs_diff_eq!(b4.a31, p.gamma() * 0.5 * ca.powi(3), epsilon = 1e-12);
        assert_abs_diff_eq!(b4.a42, p.gamma() * 0.5 / x1, epsilon = 1e-12);
        assert!(matches!(
            block4_analytic(&p, &prof, 1.0, 0.0),
            Err(LinearizationError::NotEquilibrium { .. })
        ));
    }

    #[test]
    fn fd_jacobian_on_free_plane() {
        let p = SystemParams::homogeneous(0.0);
        let j = jacobian_fd(&p, &Profile::flat(), &ReducedState::at_rest([0.3, 0.2], 1.0)).unwrap();
        let mut want = Matrix5::zeros();
        want[(0, 2)] = 1.0;
        want[(1, 3)] = 1.0;
        assert!((j - want).norm() < 1e-12);
    }

    #[test]
    fn cone_condition() {
        let p = SystemParams::homogeneous(0.0).with_alpha(FRAC_PI_6).unwrap();
        let cone = Profile::truncated_cone(FRAC_PI_6.tan(), 0.1).unwrap();
        let thr = (8.75f64 / 2.0).sqrt();
        let v = |om: f64| tilted_stability(&p.with_omega(om).unwrap(), &cone, 1.5, 0.0).unwrap();
        assert!(v(thr + 1e-6).stable);
        assert!(v(-thr - 1e-6).stable);
        assert!(!v(thr - 1e-6).stable);
        for wz in [-50.0, 0.0, 3.0, 50.0] {
            assert!(!tilted_stability(&p, &cone, 1.5, wz).unwrap().stable);
        }
    }

    #[test]
    fn cap_spin_threshold_matches_block() {
        let p = SystemParams::homogeneous(0.0).with_alpha(FRAC_PI_6).unwrap();
        let cap = Profile::concave_cap(-0.5).unwrap();
        let x1 = 2.0 * FRAC_PI_6.tan();
        let w = tilted_spin_threshold(&p, &cap, x1).unwrap().unwrap();
        assert_abs_diff_eq!(w, 8.388247968906, epsilon = 1e-9);
        for (wz, stable) in [(w * (1.0 + 1e-7), true), (w * (1.0 - 1e-7), false), (-w * (1.0 + 1e-7), true)] {
            assert_eq!(tilted_stability(&p, &cap, x1, wz).unwrap().stable, stable);
            assert_eq!(tilted_stability_direct(&p, &cap, x1, wz).unwrap().is_spectrally_stable(), stable);
        }
    }

    #[test]
    fn tilted_preconditions() {
        let cap = Profile::concave_cap(-0.5).unwrap();
        let vertical = SystemParams::homogeneous(0.0);
        assert!(tilted_stability(&vertical, &cap, 1.0, 0.0).is_err());
        let p = vertical.with_alpha(FRAC_PI_6).unwrap();
        assert!(tilted_stability(&p, &cap, 1.0, 0.0).is_err());
        assert!(tilted_stability(&p, &Profile::paraboloid(0.5).unwrap(), 1.0, 0.0).is_err());
    }

    #[test]
    fn eigenvectors_solve_the_block() {
        for b4 in [
            Block4 { a31: 0.35, a34: -0.6, a42: 0.35, a43: 0.6 },
            Block4 { a31: 0.35, a34: 0.0, a42: 0.35, a43: 0.0 },
            Block4 { a31: -0.2, a34: 1.1, a42: 0.5, a43: -0.4 },
        ] {
            let (b, c) = biquadratic_coeffs(&b4);
            let m = b4.to_matrix().map(|x| Complex64::new(x, 0.0));
            for l in classify_biquadratic(b, c, None).eigenvalues {
                let v = b4.eigenvector(l);
                let v = nalgebra::Vector4::new(v[0], v[1], v[2], v[3]);
                assert!((m * v - v * l).norm() < 1e-12, "{b4:?} {l}");
            }
        }
    }
}
