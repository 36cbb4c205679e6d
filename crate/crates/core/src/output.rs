//! Deterministic text output: trajectory and grid CSV, atlas SVG, and JSON
//! numbers at 17 significant digits.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::atlas::{Cells, MarkedPoints, SweepGrid};
use crate::integrator::Trajectory;
use crate::linearization::SpectrumClass;

/// `x` with 17 significant digits; `NaN` and infinities as `nan`, `inf`, `-inf`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// A float serialized as a JSON number with 17 significant digits (`null`
/// when not finite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = RawValue::from_string(fmt17(self.0)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

pub fn nums<const N: usize>(xs: [f64; N]) -> [Num; N] {
    xs.map(Num)
}

pub const TRAJECTORY_HEADER: &str = "t,x1,x2,v1,v2,omega_z,E";
const ATTITUDE_HEADER: &str = "r11,r12,r13,r21,r22,r23,r31,r32,r33";

/// One row per sample; `E` is left empty when the energy is not defined and
/// the attitude columns appear only for full integrations.
pub fn write_trajectory_csv(w: &mut impl Write, traj: &Trajectory) -> io::Result<()> {
    let mut line = String::from(TRAJECTORY_HEADER);
    if traj.attitudes.is_some() {
        line.push(',');
        line.push_str(ATTITUDE_HEADER);
    }
    writeln!(w, "{line}")?;
    for (i, (&t, st)) in traj.times.iter().zip(&traj.states).enumerate() {
        line.clear();
        line.push_str(&fmt17(t));
        for x in st.to_array() {
            line.push(',');
            line.push_str(&fmt17(x));
        }
        line.push(',');
        if let Some(e) = traj.diagnostics.get(i).and_then(|d| d.energy) {
            line.push_str(&fmt17(e));
        }
        if let Some(rs) = &traj.attitudes {
            let r = &rs[i];
            for a in 0..3 {
                for b in 0..3 {
                    line.push(',');
                    line.push_str(&fmt17(r[(a, b)]));
                }
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub const GRID_HEADER: &str = "omega_z,Omega,label";

/// Rows ordered by `Omega`, then `omega_z`.
pub fn write_grid_csv(w: &mut impl Write, grid: &SweepGrid) -> io::Result<()> {
    writeln!(w, "{GRID_HEADER}")?;
    for j in 0..grid.spec.omega.n {
        let om = fmt17(grid.spec.omega.value(j));
        for i in 0..grid.spec.omega_z.n {
            writeln!(w, "{},{},{}", fmt17(grid.spec.omega_z.value(i)), om, grid.label(i, j))?;
        }
    }
    Ok(())
}

/// Fill colour of a spectrum class.
pub fn class_color(c: SpectrumClass) -> &'static str {
    match c {
        SpectrumClass::Zzzz => "#4d4d4d",
        SpectrumClass::Zzcc => "#7fa7d9",
        SpectrumClass::ZzRR => "#d98c7f",
        SpectrumClass::Cccc => "#a6d8a0",
        SpectrumClass::Ffff => "#f2b35e",
        SpectrumClass::Rrrr => "#d9534f",
        SpectrumClass::RrCc => "#b58ccf",
    }
}

const STABLE_COLOR: &str = "#a6d8a0";
const UNSTABLE_COLOR: &str = "#ececec";

/// Extra marks drawn over an atlas.
#[derive(Debug, Clone, Default)]
pub struct SvgOverlay {
    pub title: String,
    pub marked: Option<MarkedPoints>,
    /// Lines `Omega = slope * omega_z`, drawn dashed.
    pub asymptotes: Vec<f64>,
}

const PLOT: f64 = 600.0;
const MARGIN: f64 = 60.0;
const LEGEND_W: f64 = 170.0;

/// Cells as rectangles, `omega_z` to the right and `Omega` upwards.
pub fn render_svg(grid: &SweepGrid, overlay: &SvgOverlay) -> String {
    let (ax, ay) = (grid.spec.omega_z, grid.spec.omega);
    let sx = |x: f64| MARGIN + (x - ax.min) / (ax.max - ax.min) * PLOT;
    let sy = |y: f64| MARGIN + (ay.max - y) / (ay.max - ay.min) * PLOT;
    let (cw, ch) = (PLOT / ax.n as f64, PLOT / ay.n as f64);
    let width = 2.0 * MARGIN + PLOT + LEGEND_W;
    let height = 2.0 * MARGIN + PLOT;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{}</text>"#, MARGIN + PLOT / 2.0, escape(&overlay.title));
    let _ = writeln!(s, r#"<clipPath id="plot"><rect x="{MARGIN}" y="{MARGIN}" width="{PLOT}" height="{PLOT}"/></clipPath>"#);
    let _ = writeln!(s, r#"<g shape-rendering="crispEdges">"#);
    for j in 0..ay.n {
        for i in 0..ax.n {
            let fill = match &grid.cells {
                Cells::Spectrum(c) => class_color(c[grid.index(i, j)]),
                Cells::Stability(c) => {
                    if c[grid.index(i, j)] {
                        STABLE_COLOR
                    } else {
                        UNSTABLE_COLOR
                    }
                }
            };
            let x = MARGIN + i as f64 * cw;
            let y = MARGIN + PLOT - (j + 1) as f64 * ch;
            let _ = writeln!(s, r#"<rect x="{x:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="{fill}"/>"#, cw + 0.01, ch + 0.01);
        }
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g clip-path="url(#plot)" stroke="black" stroke-width="0.6">"#);
    if ax.min < 0.0 && ax.max > 0.0 {
        let _ = writeln!(s, r#"<line x1="{0:.3}" y1="{MARGIN}" x2="{0:.3}" y2="{1}"/>"#, sx(0.0), MARGIN + PLOT);
    }
    if ay.min < 0.0 && ay.max > 0.0 {
        let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{0:.3}" x2="{1}" y2="{0:.3}"/>"#, sy(0.0), MARGIN + PLOT);
    }
    for &k in &overlay.asymptotes {
        let _ = writeln!(
            s,
            r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke-width="1.5" stroke-dasharray="6 4"/>"#,
            sx(ax.min),
            sy(k * ax.min),
            sx(ax.max),
            sy(k * ax.max)
        );
    }
    if let Some(m) = overlay.marked {
        for (name, (x, y)) in [("p", m.p), ("q", m.q)] {
            let (px, py) = (sx(x), sy(y));
            let _ = writeln!(s, r#"<circle cx="{px:.3}" cy="{py:.3}" r="5" fill="white" stroke-width="1.5"/>"#);
            let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" stroke="none">{name}</text>"#, px + 8.0, py - 8.0);
        }
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{PLOT}" height="{PLOT}" fill="none" stroke="black"/>"#);
    let bottom = MARGIN + PLOT;
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}" text-anchor="start">{}</text>"#, bottom + 18.0, short(ax.min));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN + PLOT, bottom + 18.0, short(ax.max));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">ω_z</text>"#, MARGIN + PLOT / 2.0, bottom + 36.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 6.0, bottom, short(ay.min));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 6.0, MARGIN + 12.0, short(ay.max));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">Ω</text>"#, MARGIN - 30.0, MARGIN + PLOT / 2.0);

    let entries: Vec<(&str, &str)> = match &grid.cells {
        Cells::Spectrum(_) => [
            SpectrumClass::Zzzz,
            SpectrumClass::Zzcc,
            SpectrumClass::ZzRR,
            SpectrumClass::Cccc,
            SpectrumClass::Ffff,
            SpectrumClass::Rrrr,
            SpectrumClass::RrCc,
        ]
        .iter()
        .map(|&c| (c.label(), class_color(c)))
        .collect(),
        Cells::Stability(_) => vec![("stable", STABLE_COLOR), ("unstable", UNSTABLE_COLOR)],
    };
    let lx = MARGIN + PLOT + 20.0;
    for (k, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN + 22.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{y}" width="16" height="16" fill="{color}" stroke="black" stroke-width="0.5"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{label}</text>"#, lx + 24.0, y + 13.0);
    }
    s.push_str("</svg>\n");
    s
}

fn short(x: f64) -> String {
    let t = format!("{x:.3}");
    let t = t.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" { "0".into() } else { t.into() }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{sweep_vertex, Axis, GridSpec};
    use crate::dynamics::{ReducedState, SystemParams};
    use crate::integrator::{integrate_reduced, IntegratorConfig};
    use crate::profile::Profile;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt17(f64::NAN), "nan");
        assert_eq!(fmt17(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn num_json() {
        let v = serde_json::to_string(&[Num(0.1), Num(f64::INFINITY)]).unwrap();
        assert_eq!(v, "[1.0000000000000001e-1,null]");
        let back: Vec<Option<f64>> = serde_json::from_str(&v).unwrap();
        assert_eq!(back, vec![Some(0.1), None]);
    }

    #[test]
    fn trajectory_csv_columns() {
        let p = SystemParams::homogeneous(0.0);
        let tr = integrate_reduced(&p, &Profile::flat(), ReducedState::new([0.0; 2], [1.0, 0.0], 0.5), &IntegratorConfig::new(1.0, 0.5)).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &tr).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split(',').count(), 7);
        assert!(!lines[1].ends_with(','));

        let tilted = p.with_alpha(0.1).unwrap();
        let tr = integrate_reduced(&tilted, &Profile::flat(), ReducedState::default(), &IntegratorConfig::new(0.5, 0.5)).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &tr).unwrap();
        assert!(String::from_utf8(buf).unwrap().lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn grid_csv_and_svg() {
        let spec = GridSpec { omega_z: Axis::new(-1.0, 1.0, 3), omega: Axis::new(0.0, 1.0, 2) };
        let g = sweep_vertex(&SystemParams::homogeneous(0.0), 0.5, &spec).unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &g).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().nth(1).unwrap().ends_with(",CCCC"));
        let svg = render_svg(&g, &SvgOverlay { title: "a < b".into(), asymptotes: vec![0.5], ..Default::default() });
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains("stroke-dasharray"));
        assert_eq!(svg.matches(class_color(SpectrumClass::Cccc)).count(), 7);
    }
}
