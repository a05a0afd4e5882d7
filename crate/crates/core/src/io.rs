//! CSV, JSON and SVG artifacts.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! number in a CSV or JSON file parses back to the identical `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::capacity::LyapunovResult;
use crate::controller::Rollout;
use crate::error::Result;
use crate::landscape::{ConvergenceRow, LandscapeGrid};

/// Shortest representation that parses back exactly; always carries a
/// decimal point or exponent.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn landscape_csv(grid: &LandscapeGrid) -> String {
    let mut out = String::from("axis1,axis2,value_nats,failed\n");
    let [rows, cols] = grid.grid.resolution;
    for i in 0..rows {
        for j in 0..cols {
            let (value, failed) = match grid.value(i, j) {
                Some(v) => (v, 0),
                None => (f64::NAN, 1),
            };
            let _ = writeln!(
                out,
                "{},{},{},{failed}",
                fmt_f64(grid.grid.coordinate(0, i)),
                fmt_f64(grid.grid.coordinate(1, j)),
                fmt_f64(value)
            );
        }
    }
    out
}

pub fn rollout_csv(rollout: &Rollout) -> String {
    let mut out = String::from("t_s");
    for name in rollout.state_names.iter().chain(&rollout.action_names) {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",empowerment_nats\n");
    for k in 0..rollout.len() {
        out.push_str(&fmt_f64(rollout.times[k]));
        for v in rollout.states[k].iter().chain(&rollout.actions[k]) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push(',');
        out.push_str(&fmt_f64(rollout.empowerment_trace[k]));
        out.push('\n');
    }
    out
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("dt_s,value_nats,delta_prev\n");
    for r in rows {
        let delta = r.delta_prev.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(out, "{},{},{delta}", fmt_f64(r.dt), fmt_f64(r.value_nats));
    }
    out
}

/// Controlled Lyapunov exponents with their evaluation context. Exponents
/// of `−∞` (a direction the action cannot reach) are stored as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub system: String,
    pub state: Vec<f64>,
    pub dt: f64,
    pub horizon_steps: usize,
    pub exponents_per_s: Vec<Option<f64>>,
    pub empowerment_nats: f64,
    pub singular_values: Vec<f64>,
    pub unreliable: bool,
}

impl LyapunovReport {
    pub fn new(system: &str, result: &LyapunovResult) -> Self {
        LyapunovReport {
            system: system.to_string(),
            state: result.empowerment.state.clone(),
            dt: result.empowerment.spec.dt,
            horizon_steps: result.empowerment.spec.horizon_steps,
            exponents_per_s: result.exponents.iter().map(|&e| e.is_finite().then_some(e)).collect(),
            empowerment_nats: result.empowerment.value_nats,
            singular_values: result.empowerment.singular_values.clone(),
            unreliable: result.unreliable,
        }
    }
}

pub fn lyapunov_csv(report: &LyapunovReport) -> String {
    let mut out = String::from("index,exponent_per_s\n");
    for (i, e) in report.exponents_per_s.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", fmt_f64(e.unwrap_or(f64::NEG_INFINITY)));
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

const PALETTE: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

/// Color for `t ∈ [0, 1]` on a linear dark-to-bright ramp.
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let k = (t.floor() as usize).min(PALETTE.len() - 2);
    let f = t - k as f64;
    let (a, b) = (PALETTE[k], PALETTE[k + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap of a landscape, first axis horizontal. `trajectory` points are
/// `(axis1, axis2)` pairs drawn as a white polyline; failed cells are grey.
pub fn landscape_svg(grid: &LandscapeGrid, labels: [&str; 2], trajectory: Option<&[(f64, f64)]>) -> String {
    let [nx, ny] = grid.grid.resolution;
    let (w, h, margin) = (600.0, 500.0, 60.0);
    let (pw, ph) = (w - 2.0 * margin, h - 2.0 * margin);
    let finite: Vec<f64> = grid.values.iter().flatten().copied().collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (cw, ch) = (pw / nx as f64, ph / ny as f64);
    let ((x0, x1), (y0, y1)) = (grid.grid.ranges[0], grid.grid.ranges[1]);
    let to_px = |a: f64, b: f64| {
        (
            margin + (a - x0) / (x1 - x0) * pw,
            margin + ph - (b - y0) / (y1 - y0) * ph,
        )
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for i in 0..nx {
        for j in 0..ny {
            let fill = match grid.value(i, j) {
                Some(v) => ramp((v - lo) / span),
                None => "#888888".to_string(),
            };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                margin + i as f64 * cw,
                margin + ph - (j + 1) as f64 * ch,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    if let Some(points) = trajectory {
        let mut path = String::new();
        for &(a, b) in points {
            let (px, py) = to_px(a.clamp(x0, x1), b.clamp(y0, y1));
            let _ = write!(path, "{px:.2},{py:.2} ");
        }
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="white" stroke-width="1.2"/>"#,
            path.trim_end()
        );
        if let Some(&(a, b)) = points.last() {
            let (px, py) = to_px(a.clamp(x0, x1), b.clamp(y0, y1));
            let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="4" fill="black"/>"#);
        }
    }
    let _ = writeln!(
        s,
        r#"<rect x="{margin}" y="{margin}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        h - 15.0,
        labels[0]
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 18 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        labels[1]
    );
    let _ = writeln!(
        s,
        r#"<text x="{margin}" y="{}" font-size="11">{x0:.3}</text>"#,
        h - 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{x1:.3}</text>"#,
        w - margin,
        h - 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{y0:.3}</text>"#,
        margin - 4.0,
        h - margin
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{y1:.3}</text>"#,
        margin - 4.0,
        margin + 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="30" text-anchor="middle" font-size="13">value {lo:.4} to {hi:.4} nats</text>"#,
        w / 2.0
    );
    s.push_str("</svg>\n");
    s
}

/// Stacked time series: one panel per state component, per action
/// component, and one for the empowerment trace.
pub fn rollout_svg(rollout: &Rollout) -> String {
    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    for (k, name) in rollout.state_names.iter().enumerate() {
        series.push((name.clone(), rollout.states.iter().map(|x| x[k]).collect()));
    }
    for (k, name) in rollout.action_names.iter().enumerate() {
        series.push((name.clone(), rollout.actions.iter().map(|a| a[k]).collect()));
    }
    series.push(("empowerment_nats".into(), rollout.empowerment_trace.clone()));

    let (w, panel, margin) = (700.0, 110.0, 60.0);
    let h = margin + panel * series.len() as f64 + 30.0;
    let pw = w - margin - 20.0;
    let t_end = rollout.times.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (p, (name, values)) in series.iter().enumerate() {
        let top = 20.0 + p as f64 * panel;
        let ph = panel - 25.0;
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut path = String::new();
        for (t, v) in rollout.times.iter().zip(values) {
            let x = margin + t / t_end * pw;
            let y = top + ph - (v - lo) / span * ph;
            let _ = write!(path, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            s,
            r##"<rect x="{margin}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>"##
        );
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f4e9c" stroke-width="1"/>"##,
            path.trim_end()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12">{name}</text>"#,
            margin + 4.0,
            top + 12.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{hi:.3}</text>"#,
            margin - 4.0,
            top + 10.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{lo:.3}</text>"#,
            margin - 4.0,
            top + ph
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">t [s], 0 to {t_end:.2}</text>"#,
        margin + pw / 2.0,
        h - 8.0
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [
            0.0,
            -0.0,
            1.0,
            0.1,
            1.0 / 3.0,
            6.25e-5,
            1e-300,
            123456789.125,
            f64::MAX,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.0), "0.0");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp(0.0), "#440154");
        assert_eq!(ramp(1.0), "#fde725");
        assert_eq!(ramp(2.0), "#fde725");
    }

    #[test]
    fn convergence_csv_layout() {
        let rows = [
            ConvergenceRow {
                dt: 4e-3,
                value_nats: 0.5,
                delta_prev: None,
            },
            ConvergenceRow {
                dt: 1e-3,
                value_nats: 0.25,
                delta_prev: Some(-0.25),
            },
        ];
        assert_eq!(
            convergence_csv(&rows),
            "dt_s,value_nats,delta_prev\n0.004,0.5,\n0.001,0.25,-0.25\n"
        );
    }
}
