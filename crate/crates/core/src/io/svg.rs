//! Static SVG line plots.

use std::fmt::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, xs: &[f64], ys: &[f64]) -> Self {
        Self {
            name: name.into(),
            points: xs.iter().copied().zip(ys.iter().copied()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_axis: Axis,
    pub y_axis: Axis,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Axis range in plot coordinates (log₁₀ for log axes) and tick positions
/// with their labels.
struct Scale {
    lo: f64,
    hi: f64,
    ticks: Vec<(f64, String)>,
}

fn log_scale(min: f64, max: f64) -> Scale {
    let mut lo = min.log10().floor();
    let mut hi = max.log10().ceil();
    if hi <= lo {
        lo -= 1.0;
        hi += 1.0;
    }
    let step = ((hi - lo) / 8.0).ceil().max(1.0);
    let mut ticks = Vec::new();
    let mut k = lo;
    while k <= hi + 1e-9 {
        ticks.push((k, format!("1e{}", k as i64)));
        k += step;
    }
    Scale { lo, hi, ticks }
}

fn linear_scale(min: f64, max: f64) -> Scale {
    let (min, max) = if max > min {
        (min, max)
    } else {
        let pad = if min == 0.0 { 1.0 } else { 0.5 * min.abs() };
        (min - pad, max + pad)
    };
    let raw = (max - min) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|f| f * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let lo = (min / step).floor() * step;
    let hi = (max / step).ceil() * step;
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let sci = step.abs() < 1e-4 || lo.abs().max(hi.abs()) >= 1e6;
    let count = ((hi - lo) / step).round() as usize;
    let ticks = (0..=count)
        .map(|i| {
            let v = lo + i as f64 * step;
            let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
            let label = if sci {
                format!("{v:.2e}")
            } else {
                format!("{v:.decimals$}")
            };
            (v, label)
        })
        .collect();
    Scale { lo, hi, ticks }
}

fn to_plot(v: f64, axis: Axis) -> f64 {
    match axis {
        Axis::Linear => v,
        Axis::Log => v.log10(),
    }
}

fn check_series(series: &Series, x_axis: Axis, y_axis: Axis) -> Result<()> {
    if series.points.is_empty() {
        return Err(Error::Parameter(format!(
            "series '{}' has no points",
            series.name
        )));
    }
    for &(x, y) in &series.points {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Domain(format!(
                "series '{}' has a non-finite point ({x}, {y})",
                series.name
            )));
        }
        for (v, axis, label) in [(x, x_axis, "x"), (y, y_axis, "y")] {
            if axis == Axis::Log && v <= 0.0 {
                return Err(Error::Domain(format!(
                    "series '{}' has nonpositive {label} = {v} on a log axis",
                    series.name
                )));
            }
        }
    }
    Ok(())
}

/// Renders the series as polylines with axes, ticks and a legend. The text
/// depends only on the input.
pub fn emit_svg_plot(plot: &Plot) -> Result<String> {
    if plot.series.is_empty() {
        return Err(Error::Parameter("plot needs at least one series".into()));
    }
    for s in &plot.series {
        check_series(s, plot.x_axis, plot.y_axis)?;
    }
    let all = || plot.series.iter().flat_map(|s| s.points.iter());
    let extent = |f: &dyn Fn(&(f64, f64)) -> f64| {
        all()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (xmin, xmax) = extent(&|p| p.0);
    let (ymin, ymax) = extent(&|p| p.1);
    let xs = match plot.x_axis {
        Axis::Linear => linear_scale(xmin, xmax),
        Axis::Log => log_scale(xmin, xmax),
    };
    let ys = match plot.y_axis {
        Axis::Linear => linear_scale(ymin, ymax),
        Axis::Log => log_scale(ymin, ymax),
    };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |v: f64| LEFT + (v - xs.lo) / (xs.hi - xs.lo) * pw;
    let py = |v: f64| TOP + ph - (v - ys.lo) / (ys.hi - ys.lo) * ph;

    let mut out = String::new();
    let w = &mut out;
    // writing to a String cannot fail
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        w,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        w,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    for (v, label) in &xs.ticks {
        let x = px(*v);
        let _ = writeln!(
            w,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ccc"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP,
            TOP + ph,
            TOP + ph + 16.0,
            escape(label)
        );
    }
    for (v, label) in &ys.ticks {
        let y = py(*v);
        let _ = writeln!(
            w,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ccc"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            escape(label)
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 14.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&plot.y_label)
    );
    for (i, s) in plot.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    px(to_plot(x, plot.x_axis)),
                    py(to_plot(y, plot.y_axis))
                )
            })
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 12.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            w,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
