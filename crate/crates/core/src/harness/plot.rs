use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::summary::{Axis, Summary};
use crate::error::Result;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One series per method: `(label, x, y)`.
type Series<'a> = (&'a str, &'a [f64], Vec<f64>);

/// Renders a standalone SVG line chart; the y axis is logarithmic unless some
/// finite value is not positive.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let finite = |v: &f64| v.is_finite();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.2.iter().copied().filter(finite)).collect();
    let xs: Vec<f64> = series.iter().flat_map(|s| s.1.iter().copied().filter(finite)).collect();
    let log_y = !ys.is_empty() && ys.iter().all(|&v| v > 0.0);
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let span = |vals: &mut dyn Iterator<Item = f64>| {
        vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (mut x0, mut x1) = span(&mut xs.iter().copied());
    let (mut y0, mut y1) = span(&mut ys.iter().map(|&v| ty(v)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        // constant curve: pad symmetrically
        let pad = if y0 == 0.0 { 1.0 } else { y0.abs() * 0.1 };
        y0 -= pad;
        y1 += pad;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(fx),
            TOP + ph + 18.0,
            format_tick(fx)
        );
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let label = if log_y { format!("1e{fy:.1}") } else { format_tick(fy) };
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            LEFT - 6.0,
            py(fy) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let y_text = if log_y { format!("{y_label} (log scale)") } else { y_label.to_string() };
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&y_text)
    );
    for (i, (label, x, y)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        // break the line at unplottable points
        let mut segments: Vec<Vec<String>> = vec![Vec::new()];
        for (&xv, &yv) in x.iter().zip(y) {
            if xv.is_finite() && yv.is_finite() && (!log_y || yv > 0.0) {
                segments.last_mut().expect("non-empty").push(format!("{:.2},{:.2}", px(xv), py(ty(yv))));
            } else if !segments.last().expect("non-empty").is_empty() {
                segments.push(Vec::new());
            }
        }
        for seg in segments.iter().filter(|s| !s.is_empty()) {
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                seg.join(" ")
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend-entry"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

/// Writes `f_vs_{axis}.svg` and `grad_vs_{axis}.svg` into `dir`, one line per method.
///
/// Function values are shown as `f − f*` when `f*` is known. The gradient
/// plot uses the true gradient norm where recorded and the sketched norm
/// otherwise.
pub fn emit_plots(summary: &Summary, dir: &Path) -> Result<Vec<PathBuf>> {
    if summary.curves.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(dir)?;
    let (suffix, x_label) = match summary.axis {
        Axis::Iteration => ("iter", "iteration"),
        Axis::Time => ("time", "wall time [s]"),
    };
    let f_series: Vec<Series<'_>> = summary
        .curves
        .iter()
        .map(|c| {
            let y = match summary.fstar {
                Some(fs) => c.mean[0].iter().map(|v| v - fs).collect(),
                None => c.mean[0].clone(),
            };
            (c.method.as_str(), c.x.as_slice(), y)
        })
        .collect();
    let g_series: Vec<Series<'_>> = summary
        .curves
        .iter()
        .map(|c| {
            let metric = if c.mean[1].iter().any(|v| v.is_finite()) { 1 } else { 2 };
            (c.method.as_str(), c.x.as_slice(), c.mean[metric].clone())
        })
        .collect();
    let f_label = if summary.fstar.is_some() { "mean f - f*" } else { "mean f" };
    let mut written = Vec::new();
    for (name, title, label, series) in [
        ("f", "Function value", f_label, &f_series),
        ("grad", "Gradient norm", "mean gradient norm", &g_series),
    ] {
        let path = dir.join(format!("{name}_vs_{suffix}.svg"));
        std::fs::write(&path, line_chart(title, x_label, label, series))?;
        written.push(path);
    }
    Ok(written)
}
