//! Adaptive integration of the reduced and full (reduced + attitude) systems.
//!
//! The stepper is the explicit Dormand-Prince 8(5,3) pair with its 7th-order
//! dense output and a proportional-integral step-size controller. Samples are
//! produced on the grid `t = k * dense_output_dt` by interpolation, so the
//! sampling does not perturb step selection.

mod tableau;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::conserved::{moving_energy, EnergyBounds};
use crate::dynamics::{
    angular_velocity, attitude_rhs, reduced_vector_field, DynamicsError, FullState, ReducedState, SystemParams,
};
use crate::profile::{Profile, ProfileError};

use tableau::{A, B, D, E3, E5, INTERPOLATOR_POWER, N_STAGES, N_STAGES_EXTENDED};

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
/// Error estimator order plus one.
const ERROR_ORDER: f64 = 8.0;
const PI_ALPHA: f64 = 0.7 / ERROR_ORDER;
const PI_BETA: f64 = 0.4 / ERROR_ORDER;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegratorError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid initial state: {0}")]
    InitialState(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Final time; negative values integrate backwards from `t = 0`.
    pub t_end: f64,
    pub dense_output_dt: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            t_end: 10.0,
            dense_output_dt: 0.1,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn new(t_end: f64, dense_output_dt: f64) -> Self {
        Self { t_end, dense_output_dt, ..Self::default() }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        let bad = |m: String| Err(IntegratorError::InvalidConfig(m));
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad(format!("abs_tol must be positive, got {}", self.abs_tol));
        }
        if !(self.max_step > 0.0) {
            return bad(format!("max_step must be positive, got {}", self.max_step));
        }
        if !self.t_end.is_finite() {
            return bad(format!("t_end must be finite, got {}", self.t_end));
        }
        if !(self.dense_output_dt > 0.0) {
            return bad(format!("dense_output_dt must be positive, got {}", self.dense_output_dt));
        }
        if self.t_end != 0.0 && self.dense_output_dt > self.t_end.abs() {
            return bad(format!(
                "dense_output_dt ({}) exceeds |t_end| ({})",
                self.dense_output_dt,
                self.t_end.abs()
            ));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    /// The next step would leave the profile domain.
    DomainExit,
    StepUnderflow,
    MaxSteps,
    /// A caller-supplied stop condition fired.
    Condition,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    /// Moving energy; `None` when `alpha != 0`.
    pub energy: Option<f64>,
    /// Largest `|R^T R - I|` seen before projection since the previous sample.
    pub orthogonality_drift: Option<f64>,
}

/// One step of dense output.
#[derive(Debug, Clone)]
struct Segment {
    t_old: f64,
    h: f64,
    y_old: Vec<f64>,
    /// `INTERPOLATOR_POWER` rows of length `n`.
    coeffs: Vec<f64>,
}

impl Segment {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let n = self.y_old.len();
        let x = (t - self.t_old) / self.h;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, row) in self.coeffs.chunks(n).rev().enumerate() {
            let w = if i % 2 == 0 { x } else { 1.0 - x };
            for (o, f) in out.iter_mut().zip(row) {
                *o = (*o + f) * w;
            }
        }
        for (o, y) in out.iter_mut().zip(&self.y_old) {
            *o += y;
        }
    }

    fn contains(&self, t: f64) -> bool {
        let (a, b) = (self.t_old, self.t_old + self.h);
        t >= a.min(b) && t <= a.max(b)
    }
}

/// Sampled solution with its continuous extension.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ReducedState>,
    pub attitudes: Option<Vec<Matrix3<f64>>>,
    pub diagnostics: Vec<Diagnostics>,
    pub stop: StopReason,
    pub stats: IntegrationStats,
    segments: Vec<Segment>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> ReducedState {
        *self.states.last().expect("trajectory has at least the initial sample")
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial sample")
    }

    /// Reduced state at any `t` covered by the integration.
    pub fn state_at(&self, t: f64) -> Option<ReducedState> {
        if t == self.times[0] {
            return Some(self.states[0]);
        }
        let seg = self.segment_for(t)?;
        let mut y = vec![0.0; seg.y_old.len()];
        seg.eval(t, &mut y);
        Some(ReducedState::from_array([y[0], y[1], y[2], y[3], y[4]]))
    }

    fn segment_for(&self, t: f64) -> Option<&Segment> {
        let forward = self.segments.first().is_none_or(|s| s.h > 0.0);
        let idx = self.segments.partition_point(|s| {
            let end = s.t_old + s.h;
            if forward {
                end < t
            } else {
                end > t
            }
        });
        self.segments.get(idx).filter(|s| s.contains(t))
    }

    /// Largest `|E(t) - E(0)| / max(|E(0)|, 1)`, or `None` without energies.
    pub fn energy_drift(&self) -> Option<f64> {
        let e0 = self.diagnostics.first()?.energy?;
        let scale = e0.abs().max(1.0);
        self.diagnostics
            .iter()
            .map(|d| d.energy.map(|e| (e - e0).abs() / scale))
            .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))
    }

    /// Sign changes of `x1` along the samples (exact zeros are skipped).
    pub fn x1_sign_changes(&self) -> usize {
        let mut last = 0.0f64;
        let mut count = 0;
        for s in &self.states {
            let x = s.x[0];
            if x != 0.0 {
                if last != 0.0 && (x > 0.0) != (last > 0.0) {
                    count += 1;
                }
                last = x;
            }
        }
        count
    }

    /// Whether every sample respects the given bounds (with additive slack).
    pub fn within_bounds(&self, bounds: &EnergyBounds, slack: f64) -> bool {
        self.states.iter().all(|s| bounds.admits(s, slack))
    }
}

/// Right-hand side on a flat coordinate vector.
trait System {
    fn dim(&self) -> usize;
    fn rhs(&self, y: &[f64], out: &mut [f64]) -> Result<(), DynamicsError>;
    /// Post-step correction; returns the defect removed.
    fn project(&self, _y: &mut [f64]) -> Option<f64> {
        None
    }
}

struct Reduced<'a> {
    p: &'a SystemParams,
    s: &'a Profile,
}

fn reduced_of(y: &[f64]) -> ReducedState {
    ReducedState::from_array([y[0], y[1], y[2], y[3], y[4]])
}

impl System for Reduced<'_> {
    fn dim(&self) -> usize {
        5
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) -> Result<(), DynamicsError> {
        let d = reduced_vector_field(self.p, self.s, &reduced_of(y))?;
        out[..5].copy_from_slice(&d.to_array());
        Ok(())
    }
}

struct Full<'a> {
    p: &'a SystemParams,
    s: &'a Profile,
}

fn attitude_of(y: &[f64]) -> Matrix3<f64> {
    Matrix3::from_row_slice(&y[5..14])
}

fn write_attitude(r: &Matrix3<f64>, y: &mut [f64]) {
    for i in 0..3 {
        for j in 0..3 {
            y[5 + 3 * i + j] = r[(i, j)];
        }
    }
}

/// Nearest rotation in the Frobenius norm (orthogonal polar factor).
pub fn project_to_rotation(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (mut u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    if (u * v_t).determinant() < 0.0 {
        let c = -u.column(2);
        u.set_column(2, &c);
    }
    u * v_t
}

/// `|R^T R - I|` in the Frobenius norm.
pub fn orthogonality_defect(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

impl System for Full<'_> {
    fn dim(&self) -> usize {
        14
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) -> Result<(), DynamicsError> {
        let st = reduced_of(y);
        let d = reduced_vector_field(self.p, self.s, &st)?;
        out[..5].copy_from_slice(&d.to_array());
        let omega: Vector3<f64> = angular_velocity(self.p, self.s, &st)?;
        let dr = attitude_rhs(&omega, &attitude_of(y));
        write_attitude(&dr, out);
        Ok(())
    }

    fn project(&self, y: &mut [f64]) -> Option<f64> {
        let r = attitude_of(y);
        let drift = orthogonality_defect(&r);
        write_attitude(&project_to_rotation(&r), y);
        Some(drift)
    }
}

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.map(|x| x * x).sum::<f64>() / n as f64).sqrt()
}

struct Outcome {
    segments: Vec<Segment>,
    samples: Vec<(f64, Vec<f64>, Option<f64>)>,
    stop: StopReason,
    stats: IntegrationStats,
}

struct Stepper<'a, S: System> {
    sys: &'a S,
    cfg: &'a IntegratorConfig,
    stats: IntegrationStats,
}

impl<S: System> Stepper<'_, S> {
    fn eval(&mut self, y: &[f64], out: &mut [f64]) -> Result<(), DynamicsError> {
        self.stats.evaluations += 1;
        self.sys.rhs(y, out)
    }

    fn initial_step(&mut self, y0: &[f64], f0: &[f64], direction: f64, interval: f64) -> f64 {
        let n = y0.len();
        let (rtol, atol) = (self.cfg.rel_tol, self.cfg.abs_tol);
        let scale: Vec<f64> = y0.iter().map(|y| atol + y.abs() * rtol).collect();
        let d0 = rms(y0.iter().zip(&scale).map(|(y, s)| y / s), n);
        let d1 = rms(f0.iter().zip(&scale).map(|(f, s)| f / s), n);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(interval);
        let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * direction * f).collect();
        let mut f1 = vec![0.0; n];
        let d2 = match self.eval(&y1, &mut f1) {
            Ok(()) => rms(f1.iter().zip(f0).zip(&scale).map(|((a, b), s)| (a - b) / s), n) / h0,
            Err(_) => return h0.min(self.cfg.max_step),
        };
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / ERROR_ORDER)
        };
        (100.0 * h0).min(h1).min(interval).min(self.cfg.max_step)
    }

    /// One DOP853 step from `(y, f)`; fills `k` (13 rows) and returns `y_new`.
    fn step(&mut self, y: &[f64], f: &[f64], h: f64, k: &mut [Vec<f64>]) -> Result<Vec<f64>, DynamicsError> {
        let n = y.len();
        k[0].copy_from_slice(f);
        let mut tmp = vec![0.0; n];
        for s in 1..N_STAGES {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                tmp[i] = y[i] + h * acc;
            }
            self.eval(&tmp, &mut k[s])?;
        }
        let mut y_new = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(N_STAGES) {
                acc += B[j] * kj[i];
            }
            y_new[i] = y[i] + h * acc;
        }
        let mut f_new = vec![0.0; n];
        self.eval(&y_new, &mut f_new)?;
        k[N_STAGES].copy_from_slice(&f_new);
        Ok(y_new)
    }

    fn error_norm(&self, k: &[Vec<f64>], h: f64, y: &[f64], y_new: &[f64]) -> f64 {
        let n = y.len();
        let (mut e5, mut e3) = (0.0, 0.0);
        for i in 0..n {
            let scale = self.cfg.abs_tol + y[i].abs().max(y_new[i].abs()) * self.cfg.rel_tol;
            let (mut a5, mut a3) = (0.0, 0.0);
            for (j, kj) in k.iter().enumerate().take(N_STAGES + 1) {
                a5 += E5[j] * kj[i];
                a3 += E3[j] * kj[i];
            }
            e5 += (a5 / scale).powi(2);
            e3 += (a3 / scale).powi(2);
        }
        if e5 == 0.0 && e3 == 0.0 {
            return 0.0;
        }
        h.abs() * e5 / ((e5 + 0.01 * e3) * n as f64).sqrt()
    }

    fn dense(&mut self, k: &mut [Vec<f64>], t_old: f64, h: f64, y_old: &[f64], y_new: &[f64]) -> Result<Segment, DynamicsError> {
        let n = y_old.len();
        let mut tmp = vec![0.0; n];
        for s in (N_STAGES + 1)..N_STAGES_EXTENDED {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                tmp[i] = y_old[i] + h * acc;
            }
            let mut out = vec![0.0; n];
            self.eval(&tmp, &mut out)?;
            k[s] = out;
        }
        let mut coeffs = vec![0.0; INTERPOLATOR_POWER * n];
        for i in 0..n {
            let dy = y_new[i] - y_old[i];
            let (f_old, f_new) = (k[0][i], k[N_STAGES][i]);
            coeffs[i] = dy;
            coeffs[n + i] = h * f_old - dy;
            coeffs[2 * n + i] = 2.0 * dy - h * (f_new + f_old);
            for (r, drow) in D.iter().enumerate() {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    acc += drow[j] * kj[i];
                }
                coeffs[(3 + r) * n + i] = h * acc;
            }
        }
        Ok(Segment { t_old, h, y_old: y_old.to_vec(), coeffs })
    }
}

fn is_domain(e: &DynamicsError) -> bool {
    matches!(e, DynamicsError::Profile(ProfileError::OutOfDomain { .. }))
}

fn run<S: System>(
    sys: &S,
    y0: Vec<f64>,
    cfg: &IntegratorConfig,
    mut stop_when: impl FnMut(&[f64]) -> bool,
) -> Result<Outcome, IntegratorError> {
    cfg.validate()?;
    let n = sys.dim();
    let mut stepper = Stepper { sys, cfg, stats: IntegrationStats::default() };
    let mut f = vec![0.0; n];
    stepper.eval(&y0, &mut f)?;

    let t_end = cfg.t_end;
    let direction = if t_end < 0.0 { -1.0 } else { 1.0 };
    let dt = cfg.dense_output_dt;
    let mut samples = vec![(0.0, y0.clone(), None)];
    let mut segments = Vec::new();
    if t_end == 0.0 || stop_when(&y0) {
        let stop = if t_end == 0.0 { StopReason::Completed } else { StopReason::Condition };
        return Ok(Outcome { segments, samples, stop, stats: stepper.stats });
    }

    let mut next_sample = 1usize;
    let sample_time = |k: usize| {
        let t = direction * k as f64 * dt;
        if direction * (t_end - t) < 1e-12 * dt {
            t_end
        } else {
            t
        }
    };

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; N_STAGES_EXTENDED];
    let (mut t, mut y) = (0.0f64, y0);
    let mut h_abs = stepper.initial_step(&y, &f, direction, t_end.abs());
    let mut err_prev: f64 = 1e-4;
    let mut drift_acc: Option<f64> = None;

    let stop = loop {
        if stepper.stats.accepted >= cfg.max_steps {
            break StopReason::MaxSteps;
        }
        let min_step = 10.0 * (next_after(t, direction) - t).abs();
        let mut rejected = false;
        let mut domain_failures = false;
        let accepted = loop {
            h_abs = h_abs.min(cfg.max_step);
            if h_abs < min_step {
                break None;
            }
            let mut t_new = t + direction * h_abs;
            if direction * (t_new - t_end) > 0.0 {
                t_new = t_end;
            }
            let h = t_new - t;
            h_abs = h.abs();
            match stepper.step(&y, &f, h, &mut k) {
                Ok(y_new) => {
                    let err = stepper.error_norm(&k, h, &y, &y_new);
                    if err.is_finite() && err < 1.0 {
                        let mut factor = if err == 0.0 {
                            MAX_FACTOR
                        } else {
                            (SAFETY * err.powf(-PI_ALPHA) * err_prev.powf(PI_BETA)).clamp(MIN_FACTOR, MAX_FACTOR)
                        };
                        if rejected {
                            factor = factor.min(1.0);
                        }
                        err_prev = err.max(1e-4);
                        let step_h = h;
                        h_abs *= factor;
                        break Some((t_new, step_h, y_new));
                    }
                    let factor = if err.is_finite() {
                        (SAFETY * err.powf(-1.0 / ERROR_ORDER)).max(MIN_FACTOR)
                    } else {
                        0.5
                    };
                    h_abs *= factor;
                }
                Err(e) => {
                    domain_failures |= is_domain(&e);
                    h_abs *= 0.5;
                }
            }
            rejected = true;
            stepper.stats.rejected += 1;
        };
        let Some((t_new, h, mut y_new)) = accepted else {
            break if domain_failures { StopReason::DomainExit } else { StopReason::StepUnderflow };
        };
        let seg = match stepper.dense(&mut k, t, h, &y, &y_new) {
            Ok(seg) => seg,
            Err(e) if is_domain(&e) => {
                // The continuous extension probes just outside the step; retry shorter.
                h_abs = 0.5 * h.abs();
                if h_abs < min_step {
                    break StopReason::DomainExit;
                }
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        stepper.stats.accepted += 1;
        if let Some(d) = sys.project(&mut y_new) {
            drift_acc = Some(drift_acc.unwrap_or(0.0).max(d));
            if stepper.eval(&y_new, &mut f).is_err() {
                break StopReason::DomainExit;
            }
        } else {
            f.copy_from_slice(&k[N_STAGES]);
        }

        loop {
            let ts = sample_time(next_sample);
            if direction * (ts - t_new) > 0.0 {
                break;
            }
            let mut ys = vec![0.0; n];
            if ts == t_new {
                ys.copy_from_slice(&y_new);
            } else {
                seg.eval(ts, &mut ys);
                sys.project(&mut ys);
            }
            samples.push((ts, ys, drift_acc.take()));
            next_sample += 1;
            if ts == t_end {
                break;
            }
        }
        segments.push(seg);
        t = t_new;
        y = y_new;
        if t == t_end {
            break StopReason::Completed;
        }
        if stop_when(&y) {
            break StopReason::Condition;
        }
    };

    if samples.last().map(|s| s.0) != Some(t) {
        samples.push((t, y, drift_acc.take()));
    }
    Ok(Outcome { segments, samples, stop, stats: stepper.stats })
}

fn next_after(t: f64, direction: f64) -> f64 {
    let bits = t.to_bits();
    if t == 0.0 {
        return direction * f64::from_bits(1);
    }
    let up = (t > 0.0) == (direction > 0.0);
    f64::from_bits(if up { bits + 1 } else { bits - 1 })
}

fn assemble(p: &SystemParams, s: &Profile, out: Outcome, with_attitude: bool) -> Trajectory {
    let vertical = p.alpha() == 0.0;
    let mut times = Vec::with_capacity(out.samples.len());
    let mut states = Vec::with_capacity(out.samples.len());
    let mut attitudes = with_attitude.then(Vec::new);
    let mut diagnostics = Vec::with_capacity(out.samples.len());
    for (t, y, drift) in out.samples {
        let st = reduced_of(&y);
        times.push(t);
        states.push(st);
        if let Some(a) = attitudes.as_mut() {
            a.push(attitude_of(&y));
        }
        diagnostics.push(Diagnostics {
            energy: if vertical { moving_energy(p, s, &st).ok() } else { None },
            orthogonality_drift: if with_attitude { Some(drift.unwrap_or(0.0)) } else { None },
        });
    }
    Trajectory {
        times,
        states,
        attitudes,
        diagnostics,
        stop: out.stop,
        stats: out.stats,
        segments: out.segments,
    }
}

/// Integrates the reduced field from `st0` at `t = 0` to `cfg.t_end`.
pub fn integrate_reduced(
    p: &SystemParams,
    s: &Profile,
    st0: ReducedState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegratorError> {
    integrate_reduced_until(p, s, st0, cfg, |_| false)
}

/// As [`integrate_reduced`], stopping after the first accepted step whose end
/// state satisfies `stop`.
pub fn integrate_reduced_until(
    p: &SystemParams,
    s: &Profile,
    st0: ReducedState,
    cfg: &IntegratorConfig,
    mut stop: impl FnMut(&ReducedState) -> bool,
) -> Result<Trajectory, IntegratorError> {
    let sys = Reduced { p, s };
    let out = run(&sys, st0.to_array().to_vec(), cfg, |y| stop(&reduced_of(y)))?;
    Ok(assemble(p, s, out, false))
}

/// Integrates the reduced field together with `R' = hat(omega) R`,
/// projecting `R` back onto SO(3) after every step.
pub fn integrate_full(
    p: &SystemParams,
    s: &Profile,
    fs0: FullState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegratorError> {
    let sys = Full { p, s };
    let mut y0 = fs0.reduced.to_array().to_vec();
    y0.resize(14, 0.0);
    write_attitude(&fs0.attitude, &mut y0);
    let out = run(&sys, y0, cfg, |_| false)?;
    Ok(assemble(p, s, out, true))
}

/// First time the centre comes within `radius_eps` of the vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexEvent {
    pub t: f64,
    pub state: ReducedState,
}

impl VertexEvent {
    /// `|omega_z|` at the event stays under the energy bound.
    pub fn respects(&self, bounds: &EnergyBounds) -> bool {
        self.state.omega_z.is_finite() && self.state.omega_z.abs() <= bounds.omega_max
    }
}

/// Time resolution of [`detect_vertex_approach`].
pub const EVENT_TIME_TOLERANCE: f64 = 1e-10;

/// Finds the first sample inside `|x| < radius_eps` and refines the crossing
/// by bisection on the dense output.
pub fn detect_vertex_approach(traj: &Trajectory, radius_eps: f64) -> Option<VertexEvent> {
    let i = traj.states.iter().position(|s| s.radius() < radius_eps)?;
    if i == 0 {
        return Some(VertexEvent { t: traj.times[0], state: traj.states[0] });
    }
    let (mut a, mut b) = (traj.times[i - 1], traj.times[i]);
    let mut inside = traj.states[i];
    while (b - a).abs() > EVENT_TIME_TOLERANCE {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        match traj.state_at(m) {
            Some(st) if st.radius() < radius_eps => {
                b = m;
                inside = st;
            }
            Some(_) => a = m,
            None => break,
        }
    }
    Some(VertexEvent { t: b, state: inside })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn straight_line_on_plane() {
        let p = SystemParams::homogeneous(0.0);
        let tr = integrate_reduced(
            &p,
            &Profile::flat(),
            ReducedState::new([0.0, 0.0], [1.0, 0.0], 0.0),
            &IntegratorConfig::new(3.0, 0.5),
        )
        .unwrap();
        assert_eq!(tr.stop, StopReason::Completed);
        assert_eq!(tr.times.len(), 7);
        let end = tr.last_state();
        assert_abs_diff_eq!(end.x[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(end.x[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(end.v[0], 1.0, epsilon = 1e-9);
        assert_eq!(end.omega_z, 0.0);
    }

    #[test]
    fn turntable_orbit_closes() {
        let p = SystemParams::homogeneous(1.0);
        let st0 = ReducedState::new([0.0, 0.0], [1.0, 0.0], 0.0);
        let tr = integrate_reduced(&p, &Profile::flat(), st0, &IntegratorConfig::new(7.0 * PI, 0.1)).unwrap();
        let end = tr.last_state().to_array();
        for (a, b) in end.iter().zip(st0.to_array()) {
            assert!((a - b).abs() < 1e-7, "{end:?}");
        }
        // Centre of the circle at (0, 1/mu) for a counter-clockwise turn.
        let quarter = tr.state_at(3.5 * PI).unwrap();
        assert_abs_diff_eq!(quarter.x[1], 7.0, epsilon = 1e-8);
    }

    #[test]
    fn dense_output_matches_exact_circle() {
        let p = SystemParams::homogeneous(1.0);
        let mu = p.mu();
        let tr = integrate_reduced(
            &p,
            &Profile::flat(),
            ReducedState::new([0.0, 0.0], [1.0, 0.0], 0.0),
            &IntegratorConfig::new(10.0, 0.37),
        )
        .unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let (sn, cs) = (mu * t).sin_cos();
            assert_abs_diff_eq!(s.x[0], sn / mu, epsilon = 1e-9);
            assert_abs_diff_eq!(s.x[1], (1.0 - cs) / mu, epsilon = 1e-9);
        }
        let mid = tr.state_at(4.321).unwrap();
        assert_abs_diff_eq!(mid.v[0], (mu * 4.321).cos(), epsilon = 1e-9);
    }

    #[test]
    fn rigid_spin_returns_to_identity() {
        let p = SystemParams::homogeneous(0.0);
        let fs0 = FullState::new(ReducedState::at_rest([0.0, 0.0], 2.0), Matrix3::identity()).unwrap();
        let tr = integrate_full(&p, &Profile::flat(), fs0, &IntegratorConfig::new(PI, 0.1)).unwrap();
        let atts = tr.attitudes.as_ref().unwrap();
        assert!((atts.last().unwrap() - Matrix3::identity()).norm() < 1e-8);
        let half = atts[5];
        let want = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 1.0);
        assert!((half - want.matrix()).norm() < 1e-9);
        for r in atts {
            assert!(orthogonality_defect(r) < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn resting_ball_keeps_attitude() {
        let p = SystemParams::homogeneous(0.0);
        let r0 = *nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 1.1).matrix();
        let fs0 = FullState::new(ReducedState::at_rest([1.0, 2.0], 0.0), r0).unwrap();
        let tr = integrate_full(&p, &Profile::flat(), fs0, &IntegratorConfig::new(5.0, 1.0)).unwrap();
        for r in tr.attitudes.unwrap() {
            assert!((r - r0).norm() < 1e-14);
        }
    }

    #[test]
    fn backward_integration() {
        let p = SystemParams::homogeneous(0.0);
        let tr = integrate_reduced(
            &p,
            &Profile::flat(),
            ReducedState::new([1.0, 0.0], [1.0, 0.5], 0.0),
            &IntegratorConfig::new(-2.0, 0.5),
        )
        .unwrap();
        assert_eq!(tr.times, vec![0.0, -0.5, -1.0, -1.5, -2.0]);
        let end = tr.last_state();
        assert_abs_diff_eq!(end.x[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(end.x[1], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tr.state_at(-1.25).unwrap().x[0], -0.25, epsilon = 1e-12);
    }

    #[test]
    fn leaving_the_domain_stops_the_run() {
        let p = SystemParams::homogeneous(0.0);
        let prof = Profile::flat().with_r_max(2.0).unwrap();
        let tr = integrate_reduced(
            &p,
            &prof,
            ReducedState::new([0.0, 0.0], [1.0, 0.0], 0.0),
            &IntegratorConfig::new(5.0, 0.5),
        )
        .unwrap();
        assert_eq!(tr.stop, StopReason::DomainExit);
        let end = tr.last_state();
        assert!(end.x[0] <= 2.0 && end.x[0] > 1.99, "{end:?}");
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        assert!(IntegratorConfig::new(1.0, 2.0).validate().is_err());
        assert!(IntegratorConfig::new(1.0, 0.1).with_tolerances(0.0, 1e-9).validate().is_err());
        assert!(IntegratorConfig::new(f64::NAN, 0.1).validate().is_err());
    }

    #[test]
    fn vertex_event() {
        let p = SystemParams::homogeneous(0.0);
        let flat = Profile::flat();
        let at_vertex = integrate_reduced(&p, &flat, ReducedState::at_rest([0.0, 0.0], 1.0), &IntegratorConfig::new(1.0, 0.5)).unwrap();
        assert_eq!(detect_vertex_approach(&at_vertex, 1e-6).unwrap().t, 0.0);

        let tr = integrate_reduced(
            &p,
            &flat,
            ReducedState::new([-1.0, 1e-7], [1.0, 0.0], 0.5),
            &IntegratorConfig::new(3.0, 0.25),
        )
        .unwrap();
        let ev = detect_vertex_approach(&tr, 1e-6).unwrap();
        let want = 1.0 - (1e-12f64 - 1e-14).sqrt();
        assert_abs_diff_eq!(ev.t, want, epsilon = 2e-10);
        assert!(detect_vertex_approach(&tr, 1e-8).is_none());
    }

    #[test]
    fn stop_condition() {
        let p = SystemParams::homogeneous(0.0);
        let tr = integrate_reduced_until(
            &p,
            &Profile::flat(),
            ReducedState::new([0.0, 0.0], [1.0, 0.0], 0.0),
            &IntegratorConfig::new(100.0, 1.0),
            |s| s.x[0] > 5.0,
        )
        .unwrap();
        assert_eq!(tr.stop, StopReason::Condition);
        assert!(tr.last_state().x[0] > 5.0 && tr.last_time() < 100.0);
    }
}
