//! Deterministic SVG rendering of an aligned trial.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::pipeline::{total_load, AlignedTrial};
use crate::sensor::ChannelId;

#[derive(Debug, Error)]
#[error("writing plot to {path}: {source}")]
pub struct PlotError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 45.0;

const SERIES: [(&str, &str); 5] = [
    ("front_left", "#1f77b4"),
    ("front_right", "#ff7f0e"),
    ("rear_left", "#2ca02c"),
    ("rear_right", "#d62728"),
    ("total", "#333333"),
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One polyline per channel plus the total. Same input, same bytes.
pub fn render_svg(at: &AlignedTrial) -> String {
    let total = total_load(at);
    let t0 = at.t_ms.first().copied().unwrap_or(0.0);
    let t1 = at.t_ms.last().copied().unwrap_or(0.0);
    let span_t = if t1 > t0 { t1 - t0 } else { 1.0 };
    let lo = at
        .loads
        .iter()
        .flatten()
        .chain(&total)
        .copied()
        .fold(0.0f64, f64::min);
    let hi = total
        .iter()
        .chain(at.loads.iter().flatten())
        .copied()
        .fold(1.0f64, f64::max);
    let span_y = hi - lo;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |t: f64| LEFT + (t - t0) / span_t * plot_w;
    let y = |v: f64| TOP + (hi - v) / span_y * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let title = format!(
        "{} trial {} ({} Hz grid)",
        at.user_id,
        at.trial_id,
        at.grid_rate_hz
    );
    let _ = writeln!(
        out,
        r#"<text x="{LEFT}" y="18" font-family="sans-serif" font-size="13">{}</text>"#,
        escape(&title)
    );
    // Axes.
    let _ = writeln!(
        out,
        r#"<path d="M{LEFT:.2} {TOP:.2} V{:.2} H{:.2}" stroke="black" fill="none"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for i in 0..=5 {
        let v = lo + span_y * f64::from(i) / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.1}</text>"#,
            LEFT - 4.0,
            y(v) + 3.0
        );
        let t = t0 + span_t * f64::from(i) / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{:.1}</text>"#,
            x(t),
            TOP + plot_h + 14.0,
            t / 1000.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">time (s)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" font-family="sans-serif" font-size="11" transform="rotate(-90 14 {:.2})" text-anchor="middle">load (kg)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (k, (name, color)) in SERIES.iter().enumerate() {
        let values: Vec<f64> = if k < 4 {
            at.channel(ChannelId::ALL[k]).collect()
        } else {
            total.clone()
        };
        let mut points = String::new();
        for (i, (t, v)) in at.t_ms.iter().zip(&values).enumerate() {
            if i > 0 {
                points.push(' ');
            }
            let _ = write!(points, "{:.2},{:.2}", x(*t), y(*v));
        }
        let _ = writeln!(
            out,
            r#"<polyline id="{name}" points="{points}" fill="none" stroke="{color}" stroke-width="{}"/>"#,
            if k == 4 { 2 } else { 1 }
        );
        let ly = TOP + 14.0 + k as f64 * 16.0;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{name}</text>"#,
            lx + 24.0,
            ly + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn emit_plot(at: &AlignedTrial, path: impl AsRef<Path>) -> Result<(), PlotError> {
    let path = path.as_ref();
    std::fs::write(path, render_svg(at)).map_err(|source| PlotError {
        path: path.to_path_buf(),
        source,
    })
}
