//! Self-checks of the whole model, one per acceptance criterion.
//!
//! Every check is deterministic for a given seed and reports a one-line detail
//! with the measured quantity next to its tolerance.

use std::f64::consts::{FRAC_PI_6, PI};

use nalgebra::linalg::Schur;
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::atlas::{
    default_probe_config, fit_cone_asymptotes, manifold_probe, marked_points, vertex_boundary, ManifoldSide,
    ProbeVerdict, DEFAULT_SEED_OFFSET,
};
use crate::conserved::{lyapunov_vertex_check, moving_energy, prop2_bounds, LyapunovVerdict};
use crate::dynamics::{constraint_residual_z, reduced_vector_field, vector_field_fform, ReducedState, SystemParams};
use crate::equilibria::{find_equilibria, EquilibriumKind};
use crate::integrator::{integrate_reduced, IntegratorConfig, StopReason, Trajectory};
use crate::linearization::{
    block4_analytic, jacobian_fd, tilted_spin_threshold, tilted_stability,
    tilted_stability_direct, vertex_spectrum, Block4, EigenType, SpectrumClass,
};
use crate::profile::Profile;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(id: u8, name: &'static str, passed: bool, detail: String) -> Self {
        Self { id, name, passed, detail }
    }

    fn failed(id: u8, name: &'static str, err: impl std::fmt::Display) -> Self {
        Self::new(id, name, false, format!("error: {err}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random states for the pointwise checks.
    pub samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 20_240_917, samples: 10_000 }
    }
}

pub const CHECK_NAMES: [&str; 11] = [
    "dual-form dynamics",
    "constraint z-entry",
    "moving-energy conservation",
    "no-blow-up bounds",
    "circular orbit",
    "analytic vs finite-difference Jacobian",
    "vertex case table",
    "Lyapunov threshold",
    "tilted dual route",
    "asymptotic motions",
    "small-tilt limit",
];

/// Runs check `id` (1 to 11).
pub fn run_check(id: u8, cfg: &VerifyConfig) -> CheckResult {
    match id {
        1 => dual_form(cfg),
        2 => constraint_dependence(cfg),
        3 => energy_conservation(),
        4 => no_blow_up(),
        5 => circular_orbit(),
        6 => jacobian_agreement(),
        7 => vertex_case_table(),
        8 => lyapunov_threshold(cfg),
        9 => tilted_dual_route(),
        10 => asymptotic_motions(),
        11 => small_tilt_limit(),
        _ => CheckResult::new(id, "unknown", false, format!("no check numbered {id}")),
    }
}

/// All checks, in order; independent checks run in parallel.
pub fn run_all(cfg: &VerifyConfig) -> Vec<CheckResult> {
    (1..=11u8).into_par_iter().map(|id| run_check(id, cfg)).collect()
}

/// Profiles smooth at the vertex, one of each built-in kind.
pub fn smooth_profiles() -> Vec<Profile> {
    vec![
        Profile::flat(),
        Profile::paraboloid(0.5).unwrap(),
        Profile::paraboloid(-0.5).unwrap(),
        Profile::quartic(0.3, 0.05).unwrap(),
        Profile::quartic(-1.0, 1.0).unwrap(),
        Profile::concave_cap(-0.5).unwrap(),
        Profile::polynomial(vec![0.2, -0.04, 0.002]).unwrap(),
    ]
}

fn random_state(rng: &mut ChaCha8Rng, r_lo: f64, r_hi: f64) -> ReducedState {
    let r = rng.gen_range(r_lo..r_hi);
    let th = rng.gen_range(0.0..2.0 * PI);
    ReducedState::new(
        [r * th.cos(), r * th.sin()],
        [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
        rng.gen_range(-5.0..5.0),
    )
}

fn random_params(rng: &mut ChaCha8Rng) -> SystemParams {
    SystemParams::new(
        rng.gen_range(0.1..0.9),
        rng.gen_range(0.5..2.0),
        rng.gen_range(-2.0..2.0),
        rng.gen_range(0.0..0.6),
    )
    .unwrap()
}

/// Componentwise relative error between the psi-form and the f-form field.
/// Components smaller than `1e-6` times the largest one are compared
/// relative to that largest component instead.
pub fn dual_form(cfg: &VerifyConfig) -> CheckResult {
    const NAME: &str = CHECK_NAMES[0];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let profiles = smooth_profiles();
    let mut worst = 0.0f64;
    for i in 0..cfg.samples {
        let s = &profiles[i % profiles.len()];
        let p = random_params(&mut rng);
        let st = random_state(&mut rng, 0.05, s.r_max());
        let (a, b) = match (reduced_vector_field(&p, s, &st), vector_field_fform(&p, s, &st)) {
            (Ok(a), Ok(b)) => (a.to_array(), b.to_array()),
            (Err(e), _) | (_, Err(e)) => return CheckResult::failed(1, NAME, e),
        };
        let floor = 1e-6 * a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for k in 0..5 {
            let err = (a[k] - b[k]).abs() / a[k].abs().max(b[k].abs()).max(floor).max(1e-300);
            worst = worst.max(err);
        }
    }
    CheckResult::new(1, NAME, worst < 1e-10, format!("max relative error {worst:.3e} < 1e-10 over {} states", cfg.samples))
}

pub fn constraint_dependence(cfg: &VerifyConfig) -> CheckResult {
    const NAME: &str = CHECK_NAMES[1];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let profiles = smooth_profiles();
    let mut worst = 0.0f64;
    for i in 0..cfg.samples {
        let s = &profiles[i % profiles.len()];
        let p = random_params(&mut rng);
        let st = random_state(&mut rng, 0.0, s.r_max().min(3.0));
        match constraint_residual_z(&p, s, &st) {
            Ok(z) => worst = worst.max(z.abs()),
            Err(e) => return CheckResult::failed(2, NAME, e),
        }
    }
    CheckResult::new(2, NAME, worst < 1e-10, format!("max |z residual| {worst:.3e} < 1e-10 over {} states", cfg.samples))
}

/// The trajectories behind the energy and bound checks.
pub fn energy_runs() -> Vec<(String, SystemParams, Profile, ReducedState)> {
    let cases = [
        ("flat", Profile::flat(), ReducedState::new([1.0, 0.0], [0.05, 0.02], 0.3)),
        ("paraboloid(0.5)", Profile::paraboloid(0.5).unwrap(), ReducedState::new([0.8, -0.3], [0.2, 0.4], 1.0)),
        ("paraboloid(-0.5)", Profile::paraboloid(-0.5).unwrap(), ReducedState::new([0.05, 0.0], [0.0, 0.02], 12.0)),
        ("quartic(0.3,0.05)", Profile::quartic(0.3, 0.05).unwrap(), ReducedState::new([0.6, 0.2], [-0.3, 0.1], -0.7)),
    ];
    let mut out = Vec::new();
    for (name, s, st) in cases {
        for om in [0.0, 0.5, 2.0] {
            out.push((format!("{name}, Omega={om}"), SystemParams::homogeneous(om), s.clone(), st));
        }
    }
    out
}

fn energy_config() -> IntegratorConfig {
    IntegratorConfig::new(100.0, 0.1).with_tolerances(1e-10, 1e-12)
}

fn integrate_energy_runs() -> Vec<(String, SystemParams, Profile, Result<Trajectory, String>)> {
    energy_runs()
        .into_par_iter()
        .map(|(name, p, s, st)| {
            let tr = integrate_reduced(&p, &s, st, &energy_config()).map_err(|e| e.to_string());
            (name, p, s, tr)
        })
        .collect()
}

pub fn energy_conservation() -> CheckResult {
    const NAME: &str = CHECK_NAMES[2];
    let mut worst = (0.0f64, String::new());
    for (name, _, _, tr) in integrate_energy_runs() {
        let tr = match tr {
            Ok(tr) => tr,
            Err(e) => return CheckResult::failed(3, NAME, format!("{name}: {e}")),
        };
        if tr.stop != StopReason::Completed {
            return CheckResult::new(3, NAME, false, format!("{name}: stopped early ({:?}) at t = {}", tr.stop, tr.last_time()));
        }
        let d = tr.energy_drift().unwrap_or(f64::INFINITY);
        if !(d <= worst.0) {
            worst = (d, name);
        }
    }
    CheckResult::new(3, NAME, worst.0 < 1e-8, format!("max relative drift {:.3e} < 1e-8 ({})", worst.0, worst.1))
}

pub fn no_blow_up() -> CheckResult {
    const NAME: &str = CHECK_NAMES[3];
    let mut checked = 0;
    let mut min_margin = f64::INFINITY;
    for (name, p, s, tr) in integrate_energy_runs() {
        let tr = match tr {
            Ok(tr) => tr,
            Err(e) => return CheckResult::failed(4, NAME, format!("{name}: {e}")),
        };
        let l = tr.states.iter().fold(0.0f64, |m, st| m.max(st.radius())).min(s.r_max());
        let e0 = match moving_energy(&p, &s, &tr.states[0]) {
            Ok(e) => e,
            Err(e) => return CheckResult::failed(4, NAME, format!("{name}: {e}")),
        };
        let bounds = match prop2_bounds(&p, &s, e0, l) {
            Ok(b) => b,
            Err(e) => return CheckResult::failed(4, NAME, format!("{name}: {e}")),
        };
        if !tr.within_bounds(&bounds, 1e-9) {
            return CheckResult::new(4, NAME, false, format!("{name}: bound exceeded"));
        }
        for st in &tr.states {
            let mv = bounds.v_max - st.v[0].hypot(st.v[1]);
            let mw = bounds.omega_max - st.omega_z.abs();
            min_margin = min_margin.min(mv).min(mw);
        }
        checked += 1;
    }
    CheckResult::new(4, NAME, true, format!("{checked} trajectories within bounds (smallest margin {min_margin:.3e})"))
}

pub fn circular_orbit() -> CheckResult {
    const NAME: &str = CHECK_NAMES[4];
    let p = SystemParams::homogeneous(1.0);
    let period = 2.0 * PI / p.mu();
    let st0 = ReducedState::new([1.0, 0.5], [0.3, -0.2], 0.7);
    let cfg = IntegratorConfig::new(period, period / 8.0).with_tolerances(1e-12, 1e-14);
    match integrate_reduced(&p, &Profile::flat(), st0, &cfg) {
        Ok(tr) if tr.stop == StopReason::Completed => {
            let end = tr.last_state().to_array();
            let err = st0.to_array().iter().zip(end).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let half = tr.state_at(0.5 * period).map(|s| s.x).unwrap_or([f64::NAN; 2]);
            // The orbit centre is the midpoint of opposite points.
            let centre = [0.5 * (st0.x[0] + half[0]), 0.5 * (st0.x[1] + half[1])];
            let radius = (st0.x[0] - centre[0]).hypot(st0.x[1] - centre[1]);
            let expected = st0.v[0].hypot(st0.v[1]) / p.mu();
            let rad_err = (radius - expected).abs();
            CheckResult::new(
                5,
                NAME,
                err < 1e-7 && rad_err < 1e-7,
                format!("closure error {err:.3e} < 1e-7 after T = 2 pi / mu = {period:.6}; radius error {rad_err:.3e}"),
            )
        }
        Ok(tr) => CheckResult::new(5, NAME, false, format!("stopped early ({:?})", tr.stop)),
        Err(e) => CheckResult::failed(5, NAME, e),
    }
}

/// Equilibria at which the block is compared: `(description, params, profile, x1)`.
pub fn linearization_points() -> Vec<(String, SystemParams, Profile, f64)> {
    let mut out = Vec::new();
    let mut profiles = smooth_profiles();
    profiles.push(Profile::truncated_cone(FRAC_PI_6.tan(), 0.1).unwrap());
    for s in &profiles {
        for alpha in [0.0, FRAC_PI_6] {
            let base = SystemParams::homogeneous(0.0).with_alpha(alpha).unwrap();
            for eq in find_equilibria(&base, s) {
                let x1 = match eq.kind {
                    EquilibriumKind::Vertex => 0.0,
                    EquilibriumKind::CriticalParallel { radius } => radius,
                    EquilibriumKind::TiltedPoint { x1 } => x1,
                    EquilibriumKind::Continuum { from, to } => 0.5 * (from + to).min(2.0 * from.max(0.5)),
                };
                for om in [0.0, 0.7] {
                    let p = base.with_omega(om).unwrap();
                    out.push((format!("{:?} alpha={alpha:.4} {:?} Omega={om}", s.kind(), eq.kind), p, s.clone(), x1));
                }
            }
        }
    }
    out
}

pub fn jacobian_agreement() -> CheckResult {
    const NAME: &str = CHECK_NAMES[5];
    let mut worst_block = 0.0f64;
    let mut worst_col = 0.0f64;
    let mut n = 0;
    for (name, p, s, x1) in linearization_points() {
        for wz in [0.0, 2.3] {
            let st = ReducedState::at_rest([x1, 0.0], wz);
            let (j, b) = match (jacobian_fd(&p, &s, &st), block4_analytic(&p, &s, x1, wz)) {
                (Ok(j), Ok(b)) => (j, b),
                (Err(e), _) => return CheckResult::failed(6, NAME, format!("{name}: {e}")),
                (_, Err(e)) => return CheckResult::failed(6, NAME, format!("{name}: {e}")),
            };
            let fd: Matrix4<f64> = j.fixed_view::<4, 4>(0, 0).into_owned();
            worst_block = worst_block.max((fd - b.to_matrix()).amax());
            worst_col = worst_col.max(j.column(4).norm());
            n += 1;
        }
    }
    CheckResult::new(
        6,
        NAME,
        worst_block < 1e-5 && worst_col < 1e-6,
        format!("{n} equilibria: max block difference {worst_block:.3e} < 1e-5, max fifth-column norm {worst_col:.3e} < 1e-6"),
    )
}

/// `(f''(0), omega_z, Omega, expected class)`.
pub fn vertex_case_points() -> Vec<(f64, f64, f64, SpectrumClass)> {
    let p = 7.0 * (10.0f64 / 7.0).sqrt();
    vec![
        (0.0, 2.0, 0.0, SpectrumClass::Zzzz),
        (0.0, 0.0, 1.0, SpectrumClass::Zzcc),
        (0.0, 3.0, -2.0, SpectrumClass::Zzcc),
        (0.5, 0.0, 0.0, SpectrumClass::Cccc),
        (0.5, -4.0, 3.0, SpectrumClass::Cccc),
        (-0.5, p + 0.01, 0.0, SpectrumClass::Cccc),
        (-0.5, 0.0, 10.0, SpectrumClass::Cccc),
        (-0.5, p - 0.01, 0.0, SpectrumClass::Ffff),
        (-0.5, 4.0, 0.0, SpectrumClass::Ffff),
        (-0.5, 0.0, 0.0, SpectrumClass::Rrrr),
        (-0.5, 3.0, -3.0, SpectrumClass::Rrrr),
        (-0.2, 5.0, -1.25, SpectrumClass::Rrrr),
    ]
}

/// Types of the numerically computed eigenvalues of a block, sorted like
/// [`SpectrumClass::types`].
fn numeric_types(b: &Block4, tol: f64) -> Option<[EigenType; 4]> {
    // Shifted so the QR iteration does not stall on the zero diagonal.
    let shift = 0.37;
    let ev = Schur::try_new(b.to_matrix() + Matrix4::identity() * shift, f64::EPSILON, 100_000)?.complex_eigenvalues();
    let mut t: Vec<EigenType> = ev.iter().map(|&l| EigenType::of(l - shift, tol)).collect();
    t.sort();
    Some([t[0], t[1], t[2], t[3]])
}

pub fn vertex_case_table() -> CheckResult {
    const NAME: &str = CHECK_NAMES[6];
    let base = SystemParams::homogeneous(0.0);
    let points = vertex_case_points();
    let mut seen = Vec::new();
    for &(f2, wz, om, want) in &points {
        let p = base.with_omega(om).unwrap();
        let got = match vertex_spectrum(&p, f2, wz) {
            Ok(s) => s.class,
            Err(e) => return CheckResult::failed(7, NAME, e),
        };
        let prof = if f2 == 0.0 { Profile::flat() } else { Profile::paraboloid(f2).unwrap() };
        let numeric = match block4_analytic(&p, &prof, 0.0, wz) {
            Ok(b) => match numeric_types(&b, 1e-6) {
                Some(t) => t,
                None => return CheckResult::failed(7, NAME, "eigen-solver did not converge"),
            },
            Err(e) => return CheckResult::failed(7, NAME, e),
        };
        let mut want_types = want.types();
        want_types.sort();
        if got != want || numeric != want_types {
            return CheckResult::new(
                7,
                NAME,
                false,
                format!("(f''={f2}, omega_z={wz}, Omega={om}): closed form {got}, eigen-solver {numeric:?}, expected {want}"),
            );
        }
        if !seen.contains(&want) {
            seen.push(want);
        }
    }
    let mp = marked_points(&base, -0.5).unwrap();
    let boundary = match vertex_boundary(&base, -0.5, (1.0, 0.0), (20.0, 0.0), 1e-12) {
        Ok(Some(b)) => b.0,
        Ok(None) => return CheckResult::new(7, NAME, false, "no class change on the omega_z axis".into()),
        Err(e) => return CheckResult::failed(7, NAME, e),
    };
    let err = (boundary - mp.p.0).abs();
    CheckResult::new(
        7,
        NAME,
        err < 1e-9,
        format!("{} points, {} classes reproduced; axis boundary {boundary:.12} vs {:.12} (error {err:.1e} < 1e-9)", points.len(), seen.len(), mp.p.0),
    )
}

pub fn lyapunov_threshold(cfg: &VerifyConfig) -> CheckResult {
    const NAME: &str = CHECK_NAMES[7];
    let f2: f64 = 0.5;
    let om_star = f2.sqrt();
    let mut flips = true;
    for sign in [1.0, -1.0] {
        let below = lyapunov_vertex_check(&SystemParams::homogeneous(sign * (om_star - 1e-4)), f2);
        let above = lyapunov_vertex_check(&SystemParams::homogeneous(sign * (om_star + 1e-4)), f2);
        flips &= below.verdict == LyapunovVerdict::Stable && above.verdict == LyapunovVerdict::Inconclusive;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4c79);
    let mut disagree = 0;
    for _ in 0..50 {
        let p = SystemParams::new(rng.gen_range(0.1..0.9), rng.gen_range(0.2..3.0), rng.gen_range(-3.0..3.0), 0.0).unwrap();
        let f2 = rng.gen_range(-1.0..1.0);
        if !lyapunov_vertex_check(&p, f2).agrees() {
            disagree += 1;
        }
    }
    CheckResult::new(
        8,
        NAME,
        flips && disagree == 0,
        format!("verdict flips at |Omega| = {om_star:.6} +- 1e-4: {flips}; minor/closed-form disagreements {disagree}/50"),
    )
}

/// `(name, params without Omega, profile, x1)` for the two tilted scenarios.
pub fn tilted_scenarios() -> Vec<(&'static str, SystemParams, Profile, f64)> {
    let p = SystemParams::homogeneous(0.0).with_alpha(FRAC_PI_6).unwrap();
    vec![
        ("cone", p, Profile::truncated_cone(FRAC_PI_6.tan(), 0.1).unwrap(), 1.5),
        ("cap", p, Profile::concave_cap(-0.5).unwrap(), 2.0 * FRAC_PI_6.tan()),
    ]
}

pub fn tilted_dual_route() -> CheckResult {
    const NAME: &str = CHECK_NAMES[8];
    let axis = crate::atlas::Axis::new(-12.0, 12.0, 101);
    let mut details = Vec::new();
    let mut ok = true;
    for (name, base, s, x1) in tilted_scenarios() {
        let rows: Result<Vec<(usize, usize, f64)>, String> = (0..axis.n)
            .into_par_iter()
            .map(|j| {
                let p = base.with_omega(axis.value(j)).map_err(|e| e.to_string())?;
                let (mut bad, mut band, mut worst) = (0usize, 0usize, 0.0f64);
                for i in 0..axis.n {
                    let wz = axis.value(i);
                    let closed = tilted_stability(&p, &s, x1, wz).map_err(|e| e.to_string())?;
                    let direct = tilted_stability_direct(&p, &s, x1, wz).map_err(|e| e.to_string())?;
                    if closed.stable != direct.is_spectrally_stable() {
                        if closed.slack.abs() < 1e-9 {
                            band += 1;
                        } else {
                            bad += 1;
                            worst = worst.max(closed.slack.abs());
                        }
                    }
                }
                Ok((bad, band, worst))
            })
            .collect();
        let rows = match rows {
            Ok(r) => r,
            Err(e) => return CheckResult::failed(9, NAME, format!("{name}: {e}")),
        };
        let bad: usize = rows.iter().map(|r| r.0).sum();
        let band: usize = rows.iter().map(|r| r.1).sum();
        ok &= bad == 0;
        details.push(format!("{name}: {bad} disagreements outside the 1e-9 band ({band} inside)"));
    }

    let (_, base, cone, x1) = tilted_scenarios().remove(0);
    let row_unstable = (0..2001).all(|i| {
        let wz = -1e3 + i as f64;
        tilted_stability(&base, &cone, x1, wz).map(|v| !v.stable).unwrap_or(false)
    });
    ok &= row_unstable;
    details.push(format!("cone Omega = 0 row unstable: {row_unstable}"));

    match fit_cone_asymptotes(&base, &cone, x1) {
        Ok(fit) => {
            let e_line = (fit.line_slope - fit.predicted_slope).abs();
            let e_axis = fit.axis_slope.abs();
            ok &= e_line < 1e-6 && e_axis < 1e-6;
            details.push(format!(
                "asymptote slope {:.9} vs {:.9} (error {e_line:.1e}), axis slope {:.1e}",
                fit.line_slope, fit.predicted_slope, fit.axis_slope
            ));
        }
        Err(e) => return CheckResult::failed(9, NAME, e),
    }
    CheckResult::new(9, NAME, ok, details.join("; "))
}

pub fn asymptotic_motions() -> CheckResult {
    const NAME: &str = CHECK_NAMES[9];
    let p = SystemParams::homogeneous(0.0);
    let cap = Profile::paraboloid(-0.5).unwrap();
    let cfg = default_probe_config();
    let mut details = Vec::new();
    let mut ok = true;
    for (wz, want_spiral) in [(0.0, false), (8.0, true)] {
        let r = match manifold_probe(&p, &cap, wz, ManifoldSide::Stable, DEFAULT_SEED_OFFSET, &cfg) {
            Ok(r) => r,
            Err(e) => return CheckResult::failed(10, NAME, e),
        };
        let good = r.verdict == ProbeVerdict::ConvergedToVertex && r.spiraling() == want_spiral;
        ok &= good;
        let t = r.event.map_or(f64::NAN, |e| e.t);
        details.push(format!(
            "omega_z={wz}: {:?} at t={t:.3}, {} sign changes of x1",
            r.verdict, r.sign_changes
        ));
    }
    CheckResult::new(10, NAME, ok, details.join("; "))
}

/// Relative distance of the tilted thresholds on a concave cap from the vertex
/// ones, for each tilt: `(alpha, spin error, rotation error)`.
pub fn small_tilt_errors(alphas: &[f64]) -> Result<Vec<(f64, f64, f64)>, String> {
    let c = -0.5;
    let cap = Profile::concave_cap(c).map_err(|e| e.to_string())?;
    let mp = marked_points(&SystemParams::homogeneous(0.0), c).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for &alpha in alphas {
        let p = SystemParams::homogeneous(0.0).with_alpha(alpha).map_err(|e| e.to_string())?;
        let x1 = find_equilibria(&p, &cap)
            .iter()
            .find_map(|e| match e.kind {
                EquilibriumKind::TiltedPoint { x1 } if x1 > 0.0 => Some(x1),
                _ => None,
            })
            .ok_or_else(|| format!("no tilted equilibrium at alpha = {alpha}"))?;
        let spin = tilted_spin_threshold(&p, &cap, x1)
            .map_err(|e| e.to_string())?
            .ok_or("flat generatrix")?;
        let rot = crate::atlas::tilted_boundary(&p, &cap, x1, (0.0, 0.0), (0.0, 2.0 * mp.q.1), 1e-13)
            .map_err(|e| e.to_string())?
            .ok_or("no stability boundary on the Omega axis")?
            .1;
        out.push((alpha, (spin - mp.p.0).abs() / mp.p.0, (rot - mp.q.1).abs() / mp.q.1));
    }
    Ok(out)
}

/// Relative error below which a small-tilt threshold counts as converged.
pub const SMALL_TILT_FLOOR: f64 = 1e-9;

pub fn small_tilt_limit() -> CheckResult {
    const NAME: &str = CHECK_NAMES[10];
    match small_tilt_errors(&[1e-2, 1e-3, 1e-4]) {
        Ok(errs) => {
            // The spin error falls like alpha^4 and reaches the root-finding floor early.
            let decreasing = errs
                .windows(2)
                .all(|w| w[1].2 < w[0].2 && (w[1].1 < w[0].1 || w[1].1 < SMALL_TILT_FLOOR));
            let last = errs[errs.len() - 1];
            let detail = errs
                .iter()
                .map(|(a, s, r)| format!("alpha={a:.0e}: spin {s:.2e}, rotation {r:.2e}"))
                .collect::<Vec<_>>()
                .join("; ");
            CheckResult::new(11, NAME, decreasing && last.1 < 1e-3 && last.2 < 1e-3, format!("relative errors {detail}"))
        }
        Err(e) => CheckResult::failed(11, NAME, e),
    }
}
