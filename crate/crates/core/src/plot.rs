//! Minimal deterministic SVG line charts.
//!
//! Output depends only on the input data: fixed viewport, fixed palette and
//! every number printed with at most six significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

/// Formats `x` with at most six significant digits and no trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..=9).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool, name: &str) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            if !v.is_finite() {
                return Err(Error::Plot(format!("non-finite value on the {name} axis")));
            }
            if log && v <= 0.0 {
                return Err(Error::Plot(format!(
                    "value {v} on the log-scaled {name} axis; use a linear scale for data with zeros or negatives"
                )));
            }
            let t = if log { v.log10() } else { v };
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if lo == hi {
            let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
            lo -= pad;
            hi += pad;
        }
        Ok(Self { log, lo, hi })
    }

    fn frac(&self, v: f64) -> f64 {
        let t = if self.log { v.log10() } else { v };
        (t - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let first = self.lo.ceil() as i32;
            let last = self.hi.floor() as i32;
            if first <= last {
                return (first..=last).map(|k| 10f64.powi(k)).collect();
            }
            return vec![10f64.powf(self.lo), 10f64.powf(self.hi)];
        }
        (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect()
    }
}

/// Renders line series into an SVG document.
pub fn render_svg(spec: &PlotSpec, series: &[Series]) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(Error::Plot("nothing to plot: empty series".into()));
    }
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let x_axis = Axis::fit(xs, spec.log_x, "x")?;
    let y_axis = Axis::fit(ys, spec.log_y, "y")?;

    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + x_axis.frac(x) * pw;
    let py = |y: f64| MARGIN_T + (1.0 - y_axis.frac(y)) * ph;
    let f = fmt_sig;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        f(WIDTH),
        f(HEIGHT),
        f(WIDTH),
        f(HEIGHT)
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        f(MARGIN_L + pw / 2.0),
        f(MARGIN_T / 2.0 + 5.0),
        escape(&spec.title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        f(MARGIN_L),
        f(MARGIN_T),
        f(pw),
        f(ph)
    );

    for t in x_axis.ticks() {
        let x = px(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x}" y1="{y0}" x2="{x}" y2="{y1}" stroke="#dddddd"/><text x="{x}" y="{ty}" text-anchor="middle">{label}</text>"##,
            x = f(x),
            y0 = f(MARGIN_T),
            y1 = f(MARGIN_T + ph),
            ty = f(MARGIN_T + ph + 18.0),
            label = f(t)
        );
    }
    for t in y_axis.ticks() {
        let y = py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#dddddd"/><text x="{tx}" y="{ty}" text-anchor="end">{label}</text>"##,
            x0 = f(MARGIN_L),
            x1 = f(MARGIN_L + pw),
            y = f(y),
            tx = f(MARGIN_L - 6.0),
            ty = f(y + 4.0),
            label = f(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        f(MARGIN_L + pw / 2.0),
        f(HEIGHT - 15.0),
        escape(&spec.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
        f(20.0),
        f(MARGIN_T + ph / 2.0),
        f(20.0),
        f(MARGIN_T + ph / 2.0),
        escape(&spec.y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{},{}", f(px(x)), f(py(y)))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        if s.points.len() == 1 {
            let (x, y) = s.points[0];
            let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#, f(px(x)), f(py(y)));
        }
        let ly = MARGIN_T + 10.0 + 18.0 * i as f64;
        let lx = MARGIN_L + pw + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="1.5"{dash}/><text x="{}" y="{}">{}</text>"#,
            f(lx),
            f(ly),
            f(lx + 20.0),
            f(ly),
            f(lx + 26.0),
            f(ly + 4.0),
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(path: &Path, spec: &PlotSpec, series: &[Series]) -> Result<()> {
    let svg = render_svg(spec, series)?;
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(123.456789), "123.457");
        assert_eq!(fmt_sig(0.000123456789), "0.000123457");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.23456789e-7), "1.23457e-7");
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(render_svg(&PlotSpec::default(), &[]), Err(Error::Plot(_))));
        let s = Series::new("a", vec![]);
        assert!(matches!(render_svg(&PlotSpec::default(), &[s]), Err(Error::Plot(_))));
    }

    #[test]
    fn log_axis_with_zero_names_linear_scale() {
        let spec = PlotSpec {
            log_y: true,
            ..PlotSpec::default()
        };
        let err = render_svg(&spec, &[Series::new("a", vec![(1.0, 0.0), (2.0, 1.0)])]).unwrap_err();
        assert!(err.to_string().contains("linear scale"));
    }

    #[test]
    fn rendering_is_byte_stable() {
        let spec = PlotSpec {
            title: "t".into(),
            log_x: true,
            ..PlotSpec::default()
        };
        let s = vec![Series::new("a", vec![(1.0, 2.0), (10.0, 3.0)]), Series::new("b", vec![(5.0, 1.0)]).dashed()];
        assert_eq!(render_svg(&spec, &s).unwrap(), render_svg(&spec, &s).unwrap());
    }
}
