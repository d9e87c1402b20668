//! Minimal SVG line charts: pause time on x, one polyline per protocol.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use super::sweep::{AveragedRow, SweepResult};
use crate::routing::ProtocolKind;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 3] = ["#1b9e77", "#d95f02", "#7570b3"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        return ((0.0, 1.0), (0.0, 1.0));
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.1).max(1e-3);
    ((x0, x1), ((y0 - pad).max(0.0), y1 + pad))
}

pub fn render_chart(title: &str, y_label: &str, series: &[Series]) -> String {
    let ((x0, x1), (y0, y1)) = bounds(series);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#, WIDTH / 2.0);
    let (left, bottom) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {MARGIN} V{bottom} H{}" fill="none" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.3}</text>"#, left - 6.0, sy(y) + 4.0);
    }
    let mut xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#, sx(x), bottom + 18.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">pause time (s)</text>"#, WIDTH / 2.0, HEIGHT - 16.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, line) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = line
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 60.0,
            line.label
        );
    }
    s.push_str("</svg>\n");
    s
}

fn series_of(result: &SweepResult, metric: impl Fn(&AveragedRow) -> Option<f64>) -> Vec<Series> {
    let mut protocols: Vec<ProtocolKind> = Vec::new();
    for a in &result.averages {
        if !protocols.contains(&a.protocol) {
            protocols.push(a.protocol);
        }
    }
    protocols
        .into_iter()
        .map(|p| Series {
            label: p.to_string(),
            points: result
                .series(p)
                .filter_map(|a| metric(a).filter(|v| v.is_finite()).map(|v| (a.pause_time, v)))
                .collect(),
        })
        .collect()
}

/// Writes `pdr.svg`, `delay.svg` and `overhead.svg` into `dir`.
pub fn write_plots(result: &SweepResult, dir: &Path) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let charts = [
        ("pdr.svg", "Packet delivery ratio", "PDR (%)", series_of(result, |a| a.pdr)),
        ("delay.svg", "Average end-to-end delay", "delay (s)", series_of(result, |a| a.avg_delay)),
        ("overhead.svg", "Routing overhead", "control tx per delivered packet", series_of(result, |a| Some(a.overhead))),
    ];
    let mut written = Vec::new();
    for (file, title, y_label, series) in charts {
        let path = dir.join(file);
        std::fs::write(&path, render_chart(title, y_label, &series))?;
        written.push(path);
    }
    Ok(written)
}
