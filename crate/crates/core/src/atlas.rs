//! Stability atlases in the `(omega_z, Omega)` plane and probes of the
//! invariant manifolds of the vertex.

use nalgebra::Vector4;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{ReducedState, SystemParams};
use crate::integrator::{
    detect_vertex_approach, integrate_reduced_until, IntegratorConfig, IntegratorError, Trajectory, VertexEvent,
};
use crate::linearization::{
    block4_analytic, real_direction, tilted_stability, vertex_spectrum, LinearizationError, SpectrumClass,
};
use crate::profile::Profile;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AtlasError {
    #[error(transparent)]
    Linearization(#[from] LinearizationError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl From<crate::dynamics::DynamicsError> for AtlasError {
    fn from(e: crate::dynamics::DynamicsError) -> Self {
        AtlasError::Linearization(e.into())
    }
}

impl From<crate::profile::ProfileError> for AtlasError {
    fn from(e: crate::profile::ProfileError) -> Self {
        AtlasError::Linearization(e.into())
    }
}

/// `n` cells of equal width covering `[min, max]`, sampled at their centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Self {
        Self { min, max, n }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + (self.max - self.min) * (2 * i + 1) as f64 / (2 * self.n) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }

    fn validate(&self, name: &str) -> Result<(), AtlasError> {
        if self.n < 2 || !(self.max > self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(AtlasError::Precondition(format!(
                "{name} axis needs min < max and n >= 2, got ({}, {}, {})",
                self.min, self.max, self.n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub omega_z: Axis,
    pub omega: Axis,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { omega_z: Axis::new(-12.0, 12.0, 201), omega: Axis::new(-12.0, 12.0, 201) }
    }
}

impl GridSpec {
    pub fn square(min: f64, max: f64, n: usize) -> Self {
        Self { omega_z: Axis::new(min, max, n), omega: Axis::new(min, max, n) }
    }

    fn validate(&self) -> Result<(), AtlasError> {
        self.omega_z.validate("omega_z")?;
        self.omega.validate("Omega")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cells {
    Spectrum(Vec<SpectrumClass>),
    Stability(Vec<bool>),
}

/// Cell `(i, j)` sits at `(omega_z.value(i), omega.value(j))` and is stored
/// at index `j * omega_z.n + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub spec: GridSpec,
    pub cells: Cells,
}

impl SweepGrid {
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.spec.omega_z.n + i
    }

    pub fn label(&self, i: usize, j: usize) -> &'static str {
        let k = self.index(i, j);
        match &self.cells {
            Cells::Spectrum(c) => c[k].label(),
            Cells::Stability(c) => {
                if c[k] {
                    "stable"
                } else {
                    "unstable"
                }
            }
        }
    }

    pub fn spectrum(&self, i: usize, j: usize) -> Option<SpectrumClass> {
        match &self.cells {
            Cells::Spectrum(c) => Some(c[self.index(i, j)]),
            Cells::Stability(_) => None,
        }
    }

    pub fn stable(&self, i: usize, j: usize) -> bool {
        let k = self.index(i, j);
        match &self.cells {
            Cells::Spectrum(c) => c[k].is_spectrally_stable(),
            Cells::Stability(c) => c[k],
        }
    }
}

fn require_vertical(p: &SystemParams) -> Result<(), AtlasError> {
    if p.alpha() != 0.0 {
        return Err(AtlasError::Precondition(format!("needs alpha = 0, got {}", p.alpha())));
    }
    Ok(())
}

fn sweep<T: Send>(
    spec: &GridSpec,
    cell: impl Fn(f64, f64) -> Result<T, AtlasError> + Sync,
) -> Result<Vec<T>, AtlasError> {
    let (wz, om) = (spec.omega_z.values(), spec.omega.values());
    (0..om.len() * wz.len())
        .into_par_iter()
        .map(|k| cell(wz[k % wz.len()], om[k / wz.len()]))
        .collect()
}

/// Spectrum class of the vertex at every cell.
pub fn sweep_vertex(p: &SystemParams, f2_0: f64, spec: &GridSpec) -> Result<SweepGrid, AtlasError> {
    require_vertical(p)?;
    spec.validate()?;
    let cells = sweep(spec, |wz, om| Ok(vertex_spectrum(&p.with_omega(om)?, f2_0, wz)?.class))?;
    Ok(SweepGrid { spec: *spec, cells: Cells::Spectrum(cells) })
}

/// Spectral stability of the tilted equilibrium `(x1, 0)` at every cell.
pub fn sweep_tilted(p: &SystemParams, s: &Profile, x1: f64, spec: &GridSpec) -> Result<SweepGrid, AtlasError> {
    spec.validate()?;
    tilted_stability(p, s, x1, 0.0)?;
    let cells = sweep(spec, |wz, om| Ok(tilted_stability(&p.with_omega(om)?, s, x1, wz)?.stable))?;
    Ok(SweepGrid { spec: *spec, cells: Cells::Stability(cells) })
}

/// Intercepts of the outer stability boundary with the two axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkedPoints {
    /// On the `omega_z` axis: `((2 / mu) sqrt(gamma / |f''(0)|), 0)`.
    pub p: (f64, f64),
    /// On the `Omega` axis: `(0, 2 sqrt(gamma |f''(0)|) / (mu (1 - |f''(0)|)))`.
    pub q: (f64, f64),
}

pub fn marked_points(p: &SystemParams, f2_0: f64) -> Result<MarkedPoints, AtlasError> {
    if !(f2_0 < 0.0 && f2_0 > -1.0) {
        return Err(AtlasError::Precondition(format!("marked points need -1 < f''(0) < 0, got {f2_0}")));
    }
    let a = f2_0.abs();
    let (g, mu) = (p.gamma(), p.mu());
    Ok(MarkedPoints {
        p: ((2.0 / mu) * (g / a).sqrt(), 0.0),
        q: (0.0, 2.0 * (g * a).sqrt() / (mu * (1.0 - a))),
    })
}

/// Bisects the segment `from -> to` for a change of `label`, to `tol` in the
/// segment parameter scaled by its length. `None` if both ends agree.
pub fn bisect_boundary<L: PartialEq>(
    from: (f64, f64),
    to: (f64, f64),
    tol: f64,
    label: impl Fn(f64, f64) -> Result<L, AtlasError>,
) -> Result<Option<(f64, f64)>, AtlasError> {
    let at = |s: f64| (from.0 + s * (to.0 - from.0), from.1 + s * (to.1 - from.1));
    let len = (to.0 - from.0).hypot(to.1 - from.1);
    let l0 = label(from.0, from.1)?;
    if label(to.0, to.1)? == l0 {
        return Ok(None);
    }
    let (mut a, mut b) = (0.0f64, 1.0f64);
    while (b - a) * len > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let (x, y) = at(m);
        if label(x, y)? == l0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(Some(at(0.5 * (a + b))))
}

/// Bisection for a change of the vertex spectrum class.
pub fn vertex_boundary(
    p: &SystemParams,
    f2_0: f64,
    from: (f64, f64),
    to: (f64, f64),
    tol: f64,
) -> Result<Option<(f64, f64)>, AtlasError> {
    require_vertical(p)?;
    bisect_boundary(from, to, tol, |wz, om| Ok(vertex_spectrum(&p.with_omega(om)?, f2_0, wz)?.class))
}

/// Bisection for a change of tilted stability.
pub fn tilted_boundary(
    p: &SystemParams,
    s: &Profile,
    x1: f64,
    from: (f64, f64),
    to: (f64, f64),
    tol: f64,
) -> Result<Option<(f64, f64)>, AtlasError> {
    bisect_boundary(from, to, tol, |wz, om| Ok(tilted_stability(&p.with_omega(om)?, s, x1, wz)?.stable))
}

/// Slopes of the two asymptotes of the stability boundary of a tilted point
/// on a flat generatrix, fitted from boundary points at large `|omega_z|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoteFit {
    /// Fitted slope of the oblique branch.
    pub line_slope: f64,
    /// `sin(alpha) / (sin(alpha) - x1)`.
    pub predicted_slope: f64,
    /// Fitted slope of the branch hugging the `omega_z` axis.
    pub axis_slope: f64,
}

/// Requires `x1 > sin(alpha)` so that the oblique branch exists.
pub fn fit_cone_asymptotes(p: &SystemParams, s: &Profile, x1: f64) -> Result<AsymptoteFit, AtlasError> {
    let sa = p.alpha().sin();
    if !(x1 > sa) {
        return Err(AtlasError::Precondition(format!("asymptote fit needs x1 > sin(alpha), got x1 = {x1}")));
    }
    let predicted = sa / (sa - x1);
    let g = p.gamma() / (p.mu() * p.mu());
    let ws = [1e4, 2e4, 3e4, 4e4];
    let mut line = Vec::new();
    let mut axis = Vec::new();
    for &w in &ws {
        let guess = predicted * w;
        let l = tilted_boundary(p, s, x1, (w, 0.5 * guess), (w, 1.5 * guess), 1e-12 * w)?;
        let a = tilted_boundary(p, s, x1, (w, 0.0), (w, 4.0 * g / w), 1e-16)?;
        match (l, a) {
            (Some(l), Some(a)) => {
                line.push((w, l.1));
                axis.push((w, a.1));
            }
            _ => return Err(AtlasError::Precondition("no stability boundary found at large omega_z".into())),
        }
    }
    Ok(AsymptoteFit { line_slope: ls_slope(&line), predicted_slope: predicted, axis_slope: ls_slope(&axis) })
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ManifoldSide {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProbeVerdict {
    ConvergedToVertex,
    Diverged,
    Inconclusive,
}

pub const DEFAULT_SEED_OFFSET: f64 = 1e-4;
/// Radius that counts as having reached the vertex.
pub const CONVERGENCE_RADIUS: f64 = 1e-6;
/// Sign changes of `x1` that count as spiraling.
pub const SPIRAL_SIGN_CHANGES: usize = 3;

/// Integration settings used by probes unless overridden.
pub fn default_probe_config() -> IntegratorConfig {
    IntegratorConfig { t_end: 200.0, dense_output_dt: 0.01, ..IntegratorConfig::default() }
        .with_tolerances(1e-12, 1e-16)
}

#[derive(Debug, Clone)]
pub struct ManifoldProbeResult {
    pub side: ManifoldSide,
    pub eigenvalue: Complex64,
    /// Unit vector in `(x1, x2, v1, v2)`.
    pub direction: Vector4<f64>,
    pub seed_offset: f64,
    pub trajectory: Trajectory,
    pub verdict: ProbeVerdict,
    pub event: Option<VertexEvent>,
    pub sign_changes: usize,
}

impl ManifoldProbeResult {
    pub fn spiraling(&self) -> bool {
        self.sign_changes >= SPIRAL_SIGN_CHANGES
    }
}

/// Seeds at `seed_offset * direction` along a stable (unstable) eigendirection
/// of the vertex and integrates forward (backward) in time.
///
/// Requires `alpha = 0`, `f''(0) < 0` and a spectrum of type F+F+F-F- or
/// R+R+R-R-. The sign of `cfg.t_end` is ignored.
pub fn manifold_probe(
    p: &SystemParams,
    s: &Profile,
    omega_z: f64,
    side: ManifoldSide,
    seed_offset: f64,
    cfg: &IntegratorConfig,
) -> Result<ManifoldProbeResult, AtlasError> {
    require_vertical(p)?;
    if !s.is_smooth() {
        return Err(AtlasError::Precondition("manifold probes need a profile smooth at the vertex".into()));
    }
    if !(seed_offset > 0.0) {
        return Err(AtlasError::Precondition(format!("seed offset must be positive, got {seed_offset}")));
    }
    let f2_0 = s.f_jet(0.0)?.f2;
    if !(f2_0 < 0.0) {
        return Err(AtlasError::Precondition(format!("needs f''(0) < 0, got {f2_0}")));
    }
    let spectrum = vertex_spectrum(p, f2_0, omega_z)?;
    if !matches!(spectrum.class, SpectrumClass::Ffff | SpectrumClass::Rrrr) {
        return Err(AtlasError::Precondition(format!(
            "spectrum {} has no hyperbolic directions (need F+F+F-F- or R+R+R-R-)",
            spectrum.class
        )));
    }
    let want_negative = side == ManifoldSide::Stable;
    let lambda = spectrum
        .eigenvalues
        .iter()
        .copied()
        .filter(|l| (l.re < 0.0) == want_negative && l.im >= 0.0)
        .max_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))
        .expect("hyperbolic spectrum has roots on both sides");

    let b4 = block4_analytic(p, s, 0.0, omega_z)?;
    let direction = real_direction(&b4, lambda);
    let d = direction * seed_offset;
    let st0 = ReducedState::new([d[0], d[1]], [d[2], d[3]], omega_z);

    let t_abs = cfg.t_end.abs();
    let cfg = IntegratorConfig { t_end: if want_negative { t_abs } else { -t_abs }, ..*cfg };
    let escape = 10.0 * seed_offset * 1e3;
    let trajectory = integrate_reduced_until(p, s, st0, &cfg, |st| {
        let r = st.radius();
        r < CONVERGENCE_RADIUS || r > escape
    })?;

    let event = detect_vertex_approach(&trajectory, CONVERGENCE_RADIUS);
    let reached = event.filter(|e| e.state.omega_z.is_finite());
    let verdict = if reached.is_some() {
        ProbeVerdict::ConvergedToVertex
    } else if trajectory.states.iter().any(|st| st.radius() > escape) {
        ProbeVerdict::Diverged
    } else {
        ProbeVerdict::Inconclusive
    };
    let t_stop = reached.map_or(f64::INFINITY, |e| e.t.abs());
    let sign_changes = count_sign_changes(
        trajectory.times.iter().zip(&trajectory.states).filter(|(t, _)| t.abs() <= t_stop).map(|(_, s)| s.x[0]),
    );

    Ok(ManifoldProbeResult { side, eigenvalue: lambda, direction, seed_offset, trajectory, verdict, event, sign_changes })
}

fn count_sign_changes(xs: impl Iterator<Item = f64>) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for x in xs {
        if x != 0.0 {
            if last != 0.0 && (x > 0.0) != (last > 0.0) {
                count += 1;
            }
            last = x;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const P_INTERCEPT: f64 = 8.366600265340756;

    #[test]
    fn axis_cell_centres() {
        let a = Axis::new(-10.0, 10.0, 101);
        assert_eq!(a.value(50), 0.0);
        assert_abs_diff_eq!(a.value(0), -10.0 + 10.0 / 101.0, epsilon = 1e-14);
        assert!(Axis::new(0.0, 1.0, 1).validate("x").is_err());
    }

    #[test]
    fn convex_vertex_is_always_cccc() {
        let g = sweep_vertex(&SystemParams::homogeneous(0.0), 0.5, &GridSpec::square(-12.0, 12.0, 21)).unwrap();
        match g.cells {
            Cells::Spectrum(c) => assert!(c.iter().all(|&c| c == SpectrumClass::Cccc)),
            Cells::Stability(_) => unreachable!(),
        }
    }

    #[test]
    fn concave_vertex_cells_near_p() {
        let p = SystemParams::homogeneous(0.0);
        let spec = GridSpec { omega_z: Axis::new(P_INTERCEPT - 0.02, P_INTERCEPT + 0.02, 2), omega: Axis::new(-1e-3, 1e-3, 3) };
        let g = sweep_vertex(&p, -0.5, &spec).unwrap();
        assert_abs_diff_eq!(spec.omega_z.value(0), P_INTERCEPT - 0.01, epsilon = 1e-12);
        assert_eq!(g.spectrum(0, 1), Some(SpectrumClass::Ffff));
        assert_eq!(g.spectrum(1, 1), Some(SpectrumClass::Cccc));
        assert_eq!(g.label(1, 1), "CCCC");
    }

    #[test]
    fn marked_point_values() {
        let m = marked_points(&SystemParams::homogeneous(0.0), -0.5).unwrap();
        assert_abs_diff_eq!(m.p.0, P_INTERCEPT, epsilon = 1e-12);
        assert_abs_diff_eq!(m.q.1, P_INTERCEPT, epsilon = 1e-12);
        let near_one = marked_points(&SystemParams::homogeneous(0.0), -0.999999).unwrap();
        assert!(near_one.q.1 > 1e6);
        assert!(marked_points(&SystemParams::homogeneous(0.0), 0.5).is_err());
    }

    #[test]
    fn marked_points_lie_on_boundary() {
        let p = SystemParams::homogeneous(0.0);
        let m = marked_points(&p, -0.3).unwrap();
        let stable = |wz: f64, om: f64| Ok(vertex_spectrum(&p.with_omega(om)?, -0.3, wz)?.is_spectrally_stable());
        let b = bisect_boundary((1.0, 0.0), (20.0, 0.0), 1e-11, stable).unwrap().unwrap();
        assert_abs_diff_eq!(b.0, m.p.0, epsilon = 1e-9);
        let b = bisect_boundary((0.0, 1.0), (0.0, 20.0), 1e-11, stable).unwrap().unwrap();
        assert_abs_diff_eq!(b.1, m.q.1, epsilon = 1e-9);
    }

    #[test]
    fn cone_asymptotes() {
        let p = SystemParams::homogeneous(0.0).with_alpha(std::f64::consts::FRAC_PI_6).unwrap();
        let cone = Profile::truncated_cone(std::f64::consts::FRAC_PI_6.tan(), 0.1).unwrap();
        let fit = fit_cone_asymptotes(&p, &cone, 1.5).unwrap();
        assert_abs_diff_eq!(fit.predicted_slope, -0.5, epsilon = 1e-15);
        assert!((fit.line_slope - fit.predicted_slope).abs() < 1e-6, "{fit:?}");
        assert!(fit.axis_slope.abs() < 1e-6, "{fit:?}");
    }

    #[test]
    fn probe_preconditions() {
        let p = SystemParams::homogeneous(0.0);
        let cfg = default_probe_config();
        let convex = Profile::paraboloid(0.5).unwrap();
        assert!(manifold_probe(&p, &convex, 1.0, ManifoldSide::Stable, 1e-4, &cfg).is_err());
        let concave = Profile::paraboloid(-0.5).unwrap();
        assert!(manifold_probe(&p, &concave, 20.0, ManifoldSide::Stable, 1e-4, &cfg).is_err());
    }

    #[test]
    fn probes_reach_the_vertex() {
        let p = SystemParams::homogeneous(0.0);
        let cap = Profile::paraboloid(-0.5).unwrap();
        let cfg = default_probe_config();
        for (wz, side, spiral) in [
            (8.0, ManifoldSide::Stable, true),
            (8.0, ManifoldSide::Unstable, true),
            (0.0, ManifoldSide::Stable, false),
            (0.0, ManifoldSide::Unstable, false),
        ] {
            let r = manifold_probe(&p, &cap, wz, side, DEFAULT_SEED_OFFSET, &cfg).unwrap();
            assert_eq!(r.verdict, ProbeVerdict::ConvergedToVertex, "{wz} {side:?}");
            assert_eq!(r.spiraling(), spiral, "{wz} {side:?} {}", r.sign_changes);
            let e = r.event.unwrap();
            assert_eq!(e.t < 0.0, side == ManifoldSide::Unstable);
            assert!((e.state.omega_z - wz).abs() < 1e-6);
        }
    }

    #[test]
    fn off_manifold_seed_diverges() {
        let p = SystemParams::homogeneous(0.0);
        let cap = Profile::paraboloid(-0.5).unwrap();
        let st0 = ReducedState::new([1e-4, 0.0], [0.0, 0.0], 0.0);
        let tr = integrate_reduced_until(&p, &cap, st0, &default_probe_config(), |s| s.radius() > 1.0).unwrap();
        assert!(detect_vertex_approach(&tr, CONVERGENCE_RADIUS).is_none());
    }

    #[test]
    fn sign_change_counter() {
        assert_eq!(count_sign_changes([1.0, 0.0, -1.0, -2.0, 3.0].into_iter()), 2);
        assert_eq!(count_sign_changes([0.0, 0.0].into_iter()), 0);
    }
}
