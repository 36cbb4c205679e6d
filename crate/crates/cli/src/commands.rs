//! Subcommand implementations. Each returns the process exit code.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use nalgebra::Matrix3;
use serde::Serialize;

use kasamawashi::atlas::{
    default_probe_config, fit_cone_asymptotes, AtlasError, manifold_probe, marked_points, sweep_tilted, sweep_vertex, Cells,
    ManifoldSide, SweepGrid, DEFAULT_SEED_OFFSET,
};
use kasamawashi::conserved::{lyapunov_vertex_check, LyapunovVerdict};
use kasamawashi::equilibria::{find_equilibria, EquilibriumKind};
use kasamawashi::integrator::{integrate_full, integrate_reduced, StopReason};
use kasamawashi::linearization::{
    biquadratic_coeffs, block4_analytic, classify_biquadratic, tilted_stability, FLAT_GENERATRIX_TOLERANCE,
};
use kasamawashi::output::{nums, render_svg, write_grid_csv, write_trajectory_csv, Num, SvgOverlay};
use kasamawashi::verify::{run_all, CheckResult, VerifyConfig};
use kasamawashi::{FullState, Profile, SystemParams};

use crate::scenario::{load_scenario, Scenario, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Errors that map to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn load(path: &Path) -> Result<Scenario> {
    load_scenario(path).map_err(|e: ScenarioError| usage(format!("{}: {e}", path.display())))
}

/// A file, or stdout when `path` is `None` or `-`.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) if p != Path::new("-") => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        _ => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub struct SimulateArgs {
    pub config: PathBuf,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub attitude: bool,
    pub output: Option<PathBuf>,
}

pub fn simulate(a: &SimulateArgs) -> Result<i32> {
    let sc = load(&a.config)?;
    let st0 = sc.initial_state().ok_or_else(|| usage("simulate needs `initial_state` in the scenario"))?;
    let mut cfg = sc.integrator_config();
    if let Some(t) = a.t_end {
        cfg.t_end = t;
    }
    if let Some(dt) = a.dt {
        cfg.dense_output_dt = dt;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let (p, s) = (sc.system_params(), sc.build_profile());
    let tr = if a.attitude || sc.integrator.attitude {
        integrate_full(&p, &s, FullState::new(st0, Matrix3::identity())?, &cfg)?
    } else {
        integrate_reduced(&p, &s, st0, &cfg)?
    };
    if tr.stop != StopReason::Completed {
        warn!("integration stopped at t = {} ({:?})", tr.last_time(), tr.stop);
    }
    info!("{} accepted, {} rejected steps", tr.stats.accepted, tr.stats.rejected);
    let mut w = sink(a.output.as_deref())?;
    write_trajectory_csv(&mut w, &tr)?;
    w.flush()?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct EquilibriumOut {
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    radius: Option<Num>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x1: Option<Num>,
    #[serde(skip_serializing_if = "Option::is_none")]
    from: Option<Num>,
    #[serde(skip_serializing_if = "Option::is_none")]
    to: Option<Num>,
    position: [Num; 2],
}

pub fn equilibria(config: &Path, output: Option<&Path>) -> Result<i32> {
    let sc = load(config)?;
    let out: Vec<EquilibriumOut> = find_equilibria(&sc.system_params(), &sc.build_profile())
        .into_iter()
        .map(|e| {
            let mut o = EquilibriumOut { kind: "", radius: None, x1: None, from: None, to: None, position: nums(e.position) };
            match e.kind {
                EquilibriumKind::Vertex => o.kind = "vertex",
                EquilibriumKind::CriticalParallel { radius } => {
                    o.kind = "critical_parallel";
                    o.radius = Some(Num(radius));
                }
                EquilibriumKind::TiltedPoint { x1 } => {
                    o.kind = "tilted_point";
                    o.x1 = Some(Num(x1));
                }
                EquilibriumKind::Continuum { from, to } => {
                    o.kind = "continuum";
                    o.from = Some(Num(from));
                    o.to = Some(Num(to));
                }
            }
            o
        })
        .collect();
    write_json(output, &out)?;
    Ok(EXIT_OK)
}

/// Default equilibrium for `linearize`, `sweep` and probes: the vertex when
/// the axis is vertical, otherwise the first tilted point.
fn default_x1(p: &SystemParams, s: &Profile) -> Result<f64> {
    for e in find_equilibria(p, s) {
        match e.kind {
            EquilibriumKind::Vertex => return Ok(0.0),
            EquilibriumKind::TiltedPoint { x1 } => return Ok(x1),
            EquilibriumKind::Continuum { .. } if p.alpha() > 0.0 => {
                bail!(usage("the tilted equilibria form a continuum; choose one with --x1 (or sweep.x1)"))
            }
            _ => {}
        }
    }
    Err(usage("no equilibrium on the x1 axis; pass --x1"))
}

#[derive(Serialize)]
struct Block {
    a31: Num,
    a34: Num,
    a42: Num,
    a43: Num,
}

#[derive(Serialize)]
struct Tilted {
    stable: bool,
    slack: Num,
}

#[derive(Serialize)]
struct Lyapunov {
    verdict: &'static str,
    minors: [Num; 5],
    closed_form: bool,
}

#[derive(Serialize)]
struct LinearizeOut {
    x1: Num,
    omega_z: Num,
    block: Block,
    b: Num,
    c: Num,
    eigenvalues: Vec<[Num; 2]>,
    #[serde(rename = "type")]
    kind: &'static str,
    spectrally_stable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    tilted: Option<Tilted>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lyapunov: Option<Lyapunov>,
}

pub fn linearize(config: &Path, x1: Option<f64>, omega_z: Option<f64>, output: Option<&Path>) -> Result<i32> {
    let sc = load(config)?;
    let (p, s) = (sc.system_params(), sc.build_profile());
    let x1 = match x1.or_else(|| sc.sweep.as_ref().and_then(|w| w.x1)) {
        Some(x) => x,
        None => default_x1(&p, &s)?,
    };
    let wz = omega_z.or_else(|| sc.initial_state().map(|s| s.omega_z)).unwrap_or(0.0);
    let b4 = block4_analytic(&p, &s, x1, wz)?;
    let (b, c) = biquadratic_coeffs(&b4);
    let spec = classify_biquadratic(b, c, None);
    let tilted = if p.alpha() > 0.0 && x1 > 0.0 {
        let v = tilted_stability(&p, &s, x1, wz)?;
        Some(Tilted { stable: v.stable, slack: Num(v.slack) })
    } else {
        None
    };
    let lyapunov = if p.alpha() == 0.0 && x1 == 0.0 && wz == p.omega() {
        let r = lyapunov_vertex_check(&p, s.f_jet(0.0)?.f2);
        Some(Lyapunov {
            verdict: if r.verdict == LyapunovVerdict::Stable { "stable" } else { "inconclusive" },
            minors: nums(r.minors),
            closed_form: r.closed_form,
        })
    } else {
        None
    };
    let out = LinearizeOut {
        x1: Num(x1),
        omega_z: Num(wz),
        block: Block { a31: Num(b4.a31), a34: Num(b4.a34), a42: Num(b4.a42), a43: Num(b4.a43) },
        b: Num(b),
        c: Num(c),
        eigenvalues: spec.eigenvalues.iter().map(|l| [Num(l.re), Num(l.im)]).collect(),
        kind: spec.class.label(),
        spectrally_stable: spec.is_spectrally_stable(),
        tilted,
        lyapunov,
    };
    write_json(output, &out)?;
    Ok(EXIT_OK)
}

pub struct SweepArgs {
    pub config: PathBuf,
    pub n: Option<usize>,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

#[derive(Serialize)]
struct LabelCount {
    label: &'static str,
    cells: usize,
}

#[derive(Serialize)]
struct Marked {
    p: [Num; 2],
    q: [Num; 2],
}

#[derive(Serialize)]
struct Asymptotes {
    line_slope: Num,
    predicted_slope: Num,
    axis_slope: Num,
}

#[derive(Serialize)]
struct SweepSummary {
    mode: &'static str,
    omega_z: [Num; 2],
    omega: [Num; 2],
    n: [usize; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    f2_0: Option<Num>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x1: Option<Num>,
    counts: Vec<LabelCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    marked_points: Option<Marked>,
    #[serde(skip_serializing_if = "Option::is_none")]
    asymptotes: Option<Asymptotes>,
}

fn counts(grid: &SweepGrid) -> Vec<LabelCount> {
    let mut out: Vec<LabelCount> = Vec::new();
    for j in 0..grid.spec.omega.n {
        for i in 0..grid.spec.omega_z.n {
            let l = grid.label(i, j);
            match out.iter_mut().find(|c| c.label == l) {
                Some(c) => c.cells += 1,
                None => out.push(LabelCount { label: l, cells: 1 }),
            }
        }
    }
    out.sort_by_key(|c| c.label);
    out
}

pub fn sweep(a: &SweepArgs) -> Result<i32> {
    let sc = load(&a.config)?;
    let (p, s) = (sc.system_params(), sc.build_profile());
    let mut spec = sc.grid_spec();
    if let Some(n) = a.n {
        if n < 2 {
            return Err(usage("--n must be at least 2"));
        }
        spec.omega_z.n = n;
        spec.omega.n = n;
    }
    let mut summary = SweepSummary {
        mode: "",
        omega_z: nums([spec.omega_z.min, spec.omega_z.max]),
        omega: nums([spec.omega.min, spec.omega.max]),
        n: [spec.omega_z.n, spec.omega.n],
        f2_0: None,
        x1: None,
        counts: Vec::new(),
        marked_points: None,
        asymptotes: None,
    };
    let mut overlay = SvgOverlay::default();
    let grid = if p.alpha() == 0.0 {
        if !s.is_smooth() {
            return Err(usage("a vertex sweep needs a profile that is smooth at the vertex"));
        }
        let f2 = s.f_jet(0.0)?.f2;
        summary.mode = "vertex";
        summary.f2_0 = Some(Num(f2));
        overlay.title = format!("Vertex spectrum, f''(0) = {f2}");
        if let Ok(m) = marked_points(&p, f2) {
            summary.marked_points = Some(Marked { p: nums([m.p.0, m.p.1]), q: nums([m.q.0, m.q.1]) });
            overlay.marked = Some(m);
        }
        sweep_vertex(&p, f2, &spec)?
    } else {
        let x1 = match sc.sweep.as_ref().and_then(|w| w.x1) {
            Some(x) => x,
            None => default_x1(&p, &s)?,
        };
        summary.mode = "tilted";
        summary.x1 = Some(Num(x1));
        overlay.title = format!("Tilted equilibrium x1 = {x1:.6}, alpha = {:.6}", p.alpha());
        let flat = s.f_jet(x1)?.f2.abs() <= FLAT_GENERATRIX_TOLERANCE;
        if flat && x1 > p.alpha().sin() {
            let fit = fit_cone_asymptotes(&p, &s, x1)?;
            summary.asymptotes = Some(Asymptotes {
                line_slope: Num(fit.line_slope),
                predicted_slope: Num(fit.predicted_slope),
                axis_slope: Num(fit.axis_slope),
            });
            overlay.asymptotes = vec![fit.predicted_slope, 0.0];
        }
        sweep_tilted(&p, &s, x1, &spec)?
    };
    summary.counts = counts(&grid);
    debug_assert!(matches!(grid.cells, Cells::Spectrum(_) | Cells::Stability(_)));

    let none = a.csv.is_none() && a.svg.is_none() && a.json.is_none();
    if let Some(path) = a.csv.as_deref().or(none.then_some(Path::new("-"))) {
        let mut w = sink(Some(path))?;
        write_grid_csv(&mut w, &grid)?;
        w.flush()?;
    }
    if let Some(path) = &a.svg {
        std::fs::write(path, render_svg(&grid, &overlay)).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = &a.json {
        write_json(Some(path), &summary)?;
    }
    Ok(EXIT_OK)
}

pub struct ManifoldArgs {
    pub config: PathBuf,
    pub side: ManifoldSide,
    pub omega_z: Option<f64>,
    pub seed_offset: Option<f64>,
    pub t_end: Option<f64>,
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct ProbeOut {
    side: &'static str,
    omega_z: Num,
    eigenvalue: [Num; 2],
    direction: [Num; 4],
    seed_offset: Num,
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    event_t: Option<Num>,
    #[serde(skip_serializing_if = "Option::is_none")]
    event_omega_z: Option<Num>,
    sign_changes: usize,
    spiraling: bool,
}

pub fn manifold(a: &ManifoldArgs) -> Result<i32> {
    let sc = load(&a.config)?;
    let (p, s) = (sc.system_params(), sc.build_profile());
    let wz = a.omega_z.or_else(|| sc.initial_state().map(|s| s.omega_z)).unwrap_or(0.0);
    let mut cfg = default_probe_config();
    if let Some(t) = a.t_end {
        cfg.t_end = t;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let seed = a.seed_offset.unwrap_or(DEFAULT_SEED_OFFSET);
    let r = manifold_probe(&p, &s, wz, a.side, seed, &cfg).map_err(|e| match e {
        AtlasError::Precondition(_) => usage(e.to_string()),
        e => e.into(),
    })?;
    if let Some(path) = &a.csv {
        let mut w = sink(Some(path))?;
        write_trajectory_csv(&mut w, &r.trajectory)?;
        w.flush()?;
    }
    let d = r.direction;
    let out = ProbeOut {
        side: match r.side {
            ManifoldSide::Stable => "stable",
            ManifoldSide::Unstable => "unstable",
        },
        omega_z: Num(wz),
        eigenvalue: [Num(r.eigenvalue.re), Num(r.eigenvalue.im)],
        direction: nums([d[0], d[1], d[2], d[3]]),
        seed_offset: Num(seed),
        verdict: match r.verdict {
            kasamawashi::atlas::ProbeVerdict::ConvergedToVertex => "converged_to_vertex",
            kasamawashi::atlas::ProbeVerdict::Diverged => "diverged",
            kasamawashi::atlas::ProbeVerdict::Inconclusive => "inconclusive",
        },
        event_t: r.event.map(|e| Num(e.t)),
        event_omega_z: r.event.map(|e| Num(e.state.omega_z)),
        sign_changes: r.sign_changes,
        spiraling: r.spiraling(),
    };
    write_json(None, &out)?;
    Ok(EXIT_OK)
}

pub struct VerifyArgs {
    pub samples: usize,
    pub seed: u64,
    pub scenarios: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

fn scenario_checks(dir: &Path) -> Result<Vec<CheckResult>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(anyhow!(usage(format!("no *.json scenarios in {}", dir.display()))));
    }
    Ok(paths
        .iter()
        .map(|path| {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let (passed, detail) = match load_scenario(path) {
                Ok(sc) => match crate::scenario::parse_scenario(&sc.to_json()) {
                    Ok(back) if back == sc => (true, format!("{name}: loads and round-trips")),
                    Ok(_) => (false, format!("{name}: round-trip changed the scenario")),
                    Err(e) => (false, format!("{name}: written form does not load: {e}")),
                },
                Err(e) => (false, format!("{name}: {e}")),
            };
            CheckResult { id: 0, name: "scenario", passed, detail }
        })
        .collect())
}

pub fn verify(a: &VerifyArgs) -> Result<i32> {
    let cfg = VerifyConfig { seed: a.seed, samples: a.samples };
    let mut results = run_all(&cfg);
    if let Some(dir) = &a.scenarios {
        results.extend(scenario_checks(dir)?);
    }
    let mut out = io::stdout().lock();
    for r in &results {
        let id = if r.id == 0 { "  -".to_string() } else { format!("{:>3}", r.id) };
        writeln!(out, "{id}  {}  {:<40}  {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    writeln!(out, "{} checks, {} passed, {} failed", results.len(), results.len() - failed, failed)?;
    if let Some(path) = &a.json {
        write_json(Some(path), &results)?;
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILED })
}
