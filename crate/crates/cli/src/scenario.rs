//! Scenario files: one JSON object per file, validated in full before use.
//!
//! ```json
//! {
//!   "profile": {"kind": "paraboloid", "c": -0.5},
//!   "params": {"k": 0.4, "g_hat": 1.0, "omega": 0.0, "alpha": 0.0},
//!   "initial_state": {"x": [0.1, 0.0], "v": [0.0, 0.0], "omega_z": 8.0},
//!   "integrator": {"t_end": 50.0, "dense_output_dt": 0.05},
//!   "sweep": {"omega_z": {"min": -12, "max": 12, "n": 201}, "omega": {"min": -12, "max": 12, "n": 201}}
//! }
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use kasamawashi::atlas::{Axis, GridSpec};
use kasamawashi::integrator::IntegratorConfig;
use kasamawashi::{Profile, ProfileSpec, ReducedState, SystemParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub k: f64,
    pub g_hat: f64,
    pub omega: f64,
    pub alpha: f64,
}

impl Default for ParamsSpec {
    fn default() -> Self {
        Self { k: SystemParams::HOMOGENEOUS_K, g_hat: 1.0, omega: 0.0, alpha: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub x: [f64; 2],
    pub v: [f64; 2],
    pub omega_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    pub t_end: f64,
    pub dense_output_dt: f64,
    pub max_steps: usize,
    /// Integrate the attitude as well.
    pub attitude: bool,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            max_step: None,
            t_end: d.t_end,
            dense_output_dt: d.dense_output_dt,
            max_steps: d.max_steps,
            attitude: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub omega_z: AxisSpec,
    pub omega: AxisSpec,
    /// Tilted equilibrium to sweep when `alpha > 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x1: Option<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let g = GridSpec::default();
        let a = |x: Axis| AxisSpec { min: x.min, max: x.max, n: x.n };
        Self { omega_z: a(g.omega_z), omega: a(g.omega), x1: None }
    }
}

/// A fully validated scenario with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub profile: ProfileSpec,
    pub params: ParamsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<StateSpec>,
    pub integrator: IntegratorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Scenario {
    pub fn build_profile(&self) -> Profile {
        self.profile.build().expect("validated at load")
    }

    pub fn system_params(&self) -> SystemParams {
        let p = &self.params;
        SystemParams::new(p.k, p.g_hat, p.omega, p.alpha).expect("validated at load")
    }

    pub fn initial_state(&self) -> Option<ReducedState> {
        self.initial_state.as_ref().map(|s| ReducedState::new(s.x, s.v, s.omega_z))
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let i = &self.integrator;
        IntegratorConfig {
            rel_tol: i.rel_tol,
            abs_tol: i.abs_tol,
            max_step: i.max_step.unwrap_or(f64::INFINITY),
            t_end: i.t_end,
            dense_output_dt: i.dense_output_dt,
            max_steps: i.max_steps,
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        let s = self.sweep.clone().unwrap_or_default();
        let a = |x: AxisSpec| Axis::new(x.min, x.max, x.n);
        GridSpec { omega_z: a(s.omega_z), omega: a(s.omega) }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

#[derive(Debug)]
pub enum ScenarioError {
    Io { path: String, message: String },
    Parse { line: usize, column: usize, message: String },
    Schema(Vec<String>),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Io { path, message } => write!(f, "cannot read {path}: {message}"),
            ScenarioError::Parse { line, column, message } => {
                write!(f, "parse error at line {line}, column {column}: {message}")
            }
            ScenarioError::Schema(errs) => {
                write!(f, "invalid scenario ({} problem{}):", errs.len(), if errs.len() == 1 { "" } else { "s" })?;
                for e in errs {
                    write!(f, "\n  - {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ScenarioError {}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| ScenarioError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
    let mut errs = Vec::new();
    let scenario = check(&value, &mut errs);
    match scenario {
        Some(s) if errs.is_empty() => Ok(s),
        _ => Err(ScenarioError::Schema(errs)),
    }
}

type Obj = Map<String, Value>;

fn deg_keys(v: &Value, path: &str, errs: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                if k.ends_with("_deg") {
                    errs.push(format!(
                        "`{here}`: angles are given in radians only; use `{}`",
                        k.trim_end_matches("_deg")
                    ));
                }
                deg_keys(x, &here, errs);
            }
        }
        Value::Array(a) => a.iter().for_each(|x| deg_keys(x, path, errs)),
        _ => {}
    }
}

fn object<'a>(v: &'a Value, path: &str, errs: &mut Vec<String>) -> Option<&'a Obj> {
    match v.as_object() {
        Some(o) => Some(o),
        None => {
            errs.push(format!("`{path}` must be an object"));
            None
        }
    }
}

fn unknown_keys(o: &Obj, path: &str, allowed: &[&str], errs: &mut Vec<String>) {
    for k in o.keys() {
        if !allowed.contains(&k.as_str()) && !k.ends_with("_deg") {
            let at = if path.is_empty() { format!("`{k}`") } else { format!("`{path}.{k}`") };
            errs.push(format!("unknown key {at} (expected one of: {})", allowed.join(", ")));
        }
    }
}

fn number(o: &Obj, path: &str, key: &str, errs: &mut Vec<String>) -> Option<f64> {
    let v = o.get(key)?;
    match v.as_f64() {
        Some(x) => Some(x),
        None => {
            errs.push(format!("`{path}.{key}` must be a number, got {v}"));
            None
        }
    }
}

fn required(o: &Obj, path: &str, key: &str, errs: &mut Vec<String>) -> Option<f64> {
    if !o.contains_key(key) {
        errs.push(format!("`{path}.{key}` is required"));
        return None;
    }
    number(o, path, key, errs)
}

fn count(o: &Obj, path: &str, key: &str, errs: &mut Vec<String>) -> Option<usize> {
    let v = o.get(key)?;
    match v.as_u64() {
        Some(n) => Some(n as usize),
        None => {
            errs.push(format!("`{path}.{key}` must be a non-negative integer, got {v}"));
            None
        }
    }
}

fn pair(o: &Obj, path: &str, key: &str, errs: &mut Vec<String>) -> Option<[f64; 2]> {
    let v = o.get(key)?;
    match v.as_array().map(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>()) {
        Some(Some(a)) if a.len() == 2 => Some([a[0], a[1]]),
        _ => {
            errs.push(format!("`{path}.{key}` must be an array of two numbers, got {v}"));
            None
        }
    }
}

fn ensure(ok: bool, errs: &mut Vec<String>, msg: impl FnOnce() -> String) {
    if !ok {
        errs.push(msg());
    }
}

fn check(v: &Value, errs: &mut Vec<String>) -> Option<Scenario> {
    deg_keys(v, "", errs);
    let top = object(v, "scenario", errs)?;
    unknown_keys(top, "", &["profile", "params", "initial_state", "integrator", "sweep"], errs);

    let profile = match top.get("profile") {
        Some(p) => check_profile(p, errs),
        None => {
            errs.push("`profile` is required".into());
            None
        }
    };
    let params = match top.get("params") {
        Some(p) => check_params(p, errs),
        None => Some(ParamsSpec::default()),
    };
    let initial_state = top.get("initial_state").map(|s| check_state(s, errs));
    let integrator = match top.get("integrator") {
        Some(i) => check_integrator(i, errs),
        None => Some(IntegratorSpec::default()),
    };
    let sweep = top.get("sweep").map(|s| check_sweep(s, errs));

    let (profile, params, integrator) = (profile?, params?, integrator?);
    let initial_state = initial_state.map_or(Some(None), |s| s.map(Some))?;
    let sweep = sweep.map_or(Some(None), |s| s.map(Some))?;

    if let Some(st) = &initial_state {
        if let Ok(prof) = profile.build() {
            let r = st.x[0].hypot(st.x[1]);
            if let Err(e) = prof.f_jet(r) {
                errs.push(format!("`initial_state.x` lies outside the profile domain: {e}"));
            }
        }
    }
    Some(Scenario { profile, params, initial_state, integrator, sweep })
}

fn check_profile(v: &Value, errs: &mut Vec<String>) -> Option<ProfileSpec> {
    let o = object(v, "profile", errs)?;
    let kind = match o.get("kind").and_then(Value::as_str) {
        Some(k) => k,
        None => {
            errs.push("`profile.kind` is required and must be a string".into());
            return None;
        }
    };
    let fields: &[&str] = match kind {
        "flat" => &[],
        "paraboloid" | "concave_cap" => &["c"],
        "quartic" => &["c2", "c4"],
        "cone" | "truncated_cone" => &["slope", "delta"],
        "polynomial" => &["coeffs"],
        other => {
            errs.push(format!(
                "unknown profile kind `{other}` (expected flat, paraboloid, quartic, concave_cap, cone, polynomial)"
            ));
            return None;
        }
    };
    let mut allowed = vec!["kind", "r_max"];
    allowed.extend_from_slice(fields);
    unknown_keys(o, "profile", &allowed, errs);
    let n0 = errs.len();
    let r_max = number(o, "profile", "r_max", errs);
    let mut get = |k: &str| required(o, "profile", k, errs);
    let spec = match kind {
        "flat" => Some(ProfileSpec::Flat { r_max }),
        "paraboloid" => get("c").map(|c| ProfileSpec::Paraboloid { c, r_max }),
        "concave_cap" => get("c").map(|c| ProfileSpec::ConcaveCap { c, r_max }),
        "quartic" => match (get("c2"), get("c4")) {
            (Some(c2), Some(c4)) => Some(ProfileSpec::Quartic { c2, c4, r_max }),
            _ => None,
        },
        "cone" | "truncated_cone" => match (get("slope"), get("delta")) {
            (Some(slope), Some(delta)) => Some(ProfileSpec::Cone { slope, delta, r_max }),
            _ => None,
        },
        _ => match o.get("coeffs").map(|c| c.as_array().map(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())) {
            Some(Some(Some(coeffs))) => Some(ProfileSpec::Polynomial { coeffs, r_max }),
            Some(_) => {
                errs.push("`profile.coeffs` must be an array of numbers".into());
                None
            }
            None => {
                errs.push("`profile.coeffs` is required".into());
                None
            }
        },
    };
    let spec = spec.filter(|_| errs.len() == n0)?;
    match spec.build() {
        Ok(_) => Some(spec),
        Err(e) => {
            errs.push(format!("profile: {e}"));
            None
        }
    }
}

fn check_params(v: &Value, errs: &mut Vec<String>) -> Option<ParamsSpec> {
    let o = object(v, "params", errs)?;
    unknown_keys(o, "params", &["k", "g_hat", "omega", "Omega", "alpha"], errs);
    let d = ParamsSpec::default();
    let n0 = errs.len();
    if o.contains_key("omega") && o.contains_key("Omega") {
        errs.push("give only one of `params.omega` and `params.Omega`".into());
    }
    let k = number(o, "params", "k", errs).unwrap_or(d.k);
    let g_hat = number(o, "params", "g_hat", errs).unwrap_or(d.g_hat);
    let omega = number(o, "params", "omega", errs)
        .or_else(|| number(o, "params", "Omega", errs))
        .unwrap_or(d.omega);
    let alpha = number(o, "params", "alpha", errs).unwrap_or(d.alpha);
    ensure(k > 0.0 && k < 1.0, errs, || format!("k must lie in (0,1), got {k}"));
    ensure(g_hat > 0.0 && g_hat.is_finite(), errs, || format!("g_hat must be positive, got {g_hat}"));
    ensure(
        (0.0..std::f64::consts::FRAC_PI_2).contains(&alpha),
        errs,
        || format!("alpha must lie in [0, pi/2) radians, got {alpha}"),
    );
    (errs.len() == n0).then_some(ParamsSpec { k, g_hat, omega, alpha })
}

fn check_state(v: &Value, errs: &mut Vec<String>) -> Option<StateSpec> {
    let o = object(v, "initial_state", errs)?;
    unknown_keys(o, "initial_state", &["x", "v", "omega_z"], errs);
    let n0 = errs.len();
    if !o.contains_key("x") {
        errs.push("`initial_state.x` is required".into());
    }
    let x = pair(o, "initial_state", "x", errs);
    let v = pair(o, "initial_state", "v", errs).unwrap_or([0.0; 2]);
    let omega_z = number(o, "initial_state", "omega_z", errs).unwrap_or(0.0);
    (errs.len() == n0).then(|| StateSpec { x: x.unwrap_or_default(), v, omega_z })
}

fn check_integrator(v: &Value, errs: &mut Vec<String>) -> Option<IntegratorSpec> {
    let o = object(v, "integrator", errs)?;
    let keys = ["rel_tol", "abs_tol", "max_step", "t_end", "dense_output_dt", "max_steps", "attitude"];
    unknown_keys(o, "integrator", &keys, errs);
    let d = IntegratorSpec::default();
    let n0 = errs.len();
    let p = "integrator";
    let spec = IntegratorSpec {
        rel_tol: number(o, p, "rel_tol", errs).unwrap_or(d.rel_tol),
        abs_tol: number(o, p, "abs_tol", errs).unwrap_or(d.abs_tol),
        max_step: number(o, p, "max_step", errs),
        t_end: number(o, p, "t_end", errs).unwrap_or(d.t_end),
        dense_output_dt: number(o, p, "dense_output_dt", errs).unwrap_or(d.dense_output_dt),
        max_steps: count(o, p, "max_steps", errs).unwrap_or(d.max_steps),
        attitude: match o.get("attitude") {
            None => false,
            Some(Value::Bool(b)) => *b,
            Some(other) => {
                errs.push(format!("`integrator.attitude` must be true or false, got {other}"));
                false
            }
        },
    };
    if errs.len() > n0 {
        return None;
    }
    let cfg = Scenario {
        profile: ProfileSpec::Flat { r_max: None },
        params: ParamsSpec::default(),
        initial_state: None,
        integrator: spec.clone(),
        sweep: None,
    }
    .integrator_config();
    match cfg.validate() {
        Ok(()) => Some(spec),
        Err(e) => {
            errs.push(format!("integrator: {e}"));
            None
        }
    }
}

fn check_axis(o: &Obj, key: &str, errs: &mut Vec<String>) -> Option<AxisSpec> {
    let path = format!("sweep.{key}");
    let a = object(o.get(key)?, &path, errs)?;
    unknown_keys(a, &path, &["min", "max", "n"], errs);
    let (min, max, n) = (required(a, &path, "min", errs), required(a, &path, "max", errs), {
        if !a.contains_key("n") {
            errs.push(format!("`{path}.n` is required"));
        }
        count(a, &path, "n", errs)
    });
    let (min, max, n) = (min?, max?, n?);
    let n0 = errs.len();
    ensure(min < max, errs, || format!("`{path}`: min ({min}) must be below max ({max})"));
    ensure(n >= 2, errs, || format!("`{path}.n` must be at least 2, got {n}"));
    (errs.len() == n0).then_some(AxisSpec { min, max, n })
}

fn check_sweep(v: &Value, errs: &mut Vec<String>) -> Option<SweepSpec> {
    let o = object(v, "sweep", errs)?;
    unknown_keys(o, "sweep", &["omega_z", "omega", "x1"], errs);
    let d = SweepSpec::default();
    let n0 = errs.len();
    let omega_z = check_axis(o, "omega_z", errs).unwrap_or(d.omega_z);
    let omega = check_axis(o, "omega", errs).unwrap_or(d.omega);
    let x1 = number(o, "sweep", "x1", errs);
    (errs.len() == n0).then_some(SweepSpec { omega_z, omega, x1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(text: &str) -> Vec<String> {
        match parse_scenario(text) {
            Err(ScenarioError::Schema(e)) => e,
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = parse_scenario(r#"{"profile":{"kind":"flat"},"params":{}}"#).unwrap();
        assert_eq!(s.params, ParamsSpec::default());
        assert_eq!(s.integrator, IntegratorSpec::default());
        assert_eq!(s.system_params(), SystemParams::homogeneous(0.0));
        assert!(s.initial_state.is_none() && s.sweep.is_none());
    }

    #[test]
    fn k_out_of_range() {
        let e = schema(r#"{"params":{"k":1.5}}"#);
        assert!(e.iter().any(|m| m.contains("k must lie in (0,1)")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("`profile` is required")), "{e:?}");
    }

    #[test]
    fn kasamawashi_scenario() {
        let s = parse_scenario(r#"{"params":{"alpha":0.5236},"profile":{"kind":"cone","slope":0.5774,"delta":0.1}}"#).unwrap();
        assert_eq!(s.profile, ProfileSpec::Cone { slope: 0.5774, delta: 0.1, r_max: None });
        assert!((s.system_params().alpha() - std::f64::consts::FRAC_PI_6).abs() < 1e-4);
    }

    #[test]
    fn all_problems_are_listed() {
        let e = schema(
            r#"{"profile":{"kind":"paraboloid","c":"x","extra":1},"params":{"k":0,"alpha_deg":30,"g_hat":-1},
                "integrator":{"rel_tol":-1},"bogus":true}"#,
        );
        let joined = e.join("\n");
        for needle in ["`profile.c` must be a number", "`profile.extra`", "k must lie", "radians only", "g_hat must be positive", "rel_tol", "`bogus`"] {
            assert!(joined.contains(needle), "missing {needle:?} in\n{joined}");
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_scenario("{\n  \"profile\": {,\n}") {
            Err(ScenarioError::Parse { line, column, .. }) => assert_eq!((line, column), (2, 15)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let text = r#"{"profile":{"kind":"quartic","c2":-1,"c4":1,"r_max":3},"params":{"Omega":0.3},
            "initial_state":{"x":[0.1,0.2],"v":[0.3,0.4],"omega_z":0.1},
            "integrator":{"t_end":7.5,"max_step":0.25,"attitude":true},
            "sweep":{"omega_z":{"min":-1,"max":1,"n":5},"omega":{"min":0,"max":2,"n":3},"x1":0.7}}"#;
        let s = parse_scenario(text).unwrap();
        assert_eq!(parse_scenario(&s.to_json()).unwrap(), s);
        assert_eq!(s.params.omega, 0.3);
    }

    #[test]
    fn state_outside_domain() {
        let e = schema(r#"{"profile":{"kind":"cone","slope":0.5,"delta":0.2},"initial_state":{"x":[0.1,0]}}"#);
        assert!(e[0].contains("outside the profile domain"), "{e:?}");
    }
}
