//! Minimal self-contained SVG plots with a fixed viewport.

use std::collections::BTreeMap;
use std::fmt::Write;

use ibvs_grasp::sim::{StepRecord, TrackRecord};

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Frame {
    x: [f64; 2],
    y: [f64; 2],
    /// Image coordinates grow downwards.
    flip_y: bool,
}

impl Frame {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = (x - self.x[0]) / (self.x[1] - self.x[0]);
        let sy = (y - self.y[0]) / (self.y[1] - self.y[0]);
        let sy = if self.flip_y { sy } else { 1.0 - sy };
        (MARGIN + sx * (W - 2.0 * MARGIN), MARGIN + sy * (H - 2.0 * MARGIN))
    }
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>
<text x="{}" y="25" text-anchor="middle" font-size="14">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN,
        W / 2.0,
        escape(title),
        W / 2.0,
        H - 12.0,
        escape(xlabel),
        H / 2.0,
        H / 2.0,
        escape(ylabel),
    );
}

fn ticks(out: &mut String, f: &Frame) {
    for i in 0..=4 {
        let x = f.x[0] + (f.x[1] - f.x[0]) * i as f64 / 4.0;
        let (px, py) = f.px(x, if f.flip_y { f.y[1] } else { f.y[0] });
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            py + 15.0,
            label(x)
        );
        let y = f.y[0] + (f.y[1] - f.y[0]) * i as f64 / 4.0;
        let (px, py) = f.px(f.x[0], y);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            px - 4.0,
            py + 4.0,
            label(y)
        );
    }
}

fn label(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(out: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str) {
    if pts.is_empty() {
        return;
    }
    out.push_str("<polyline fill=\"none\" stroke=\"");
    out.push_str(color);
    out.push_str("\" points=\"");
    for (i, &(x, y)) in pts.iter().enumerate() {
        let (px, py) = f.px(x, y);
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{px:.2},{py:.2}");
    }
    out.push_str("\"/>\n");
}

/// Mean pixel error against time; steps without an error are skipped.
pub fn error_plot(log: &[StepRecord], title: &str) -> String {
    let pts: Vec<(f64, f64)> = log
        .iter()
        .filter(|r| r.mean_err_px.is_finite())
        .map(|r| (r.t, r.mean_err_px))
        .collect();
    let t_max = log.iter().map(|r| r.t).fold(0.0, f64::max).max(1e-9);
    let e_max = pts.iter().map(|p| p.1).fold(0.0, f64::max).max(1.0);
    let f = Frame {
        x: [0.0, t_max],
        y: [0.0, e_max * 1.05],
        flip_y: false,
    };
    let mut out = String::new();
    header(&mut out, title, "time [s]", "mean feature error [px]");
    ticks(&mut out, &f);
    polyline(&mut out, &f, &pts, PALETTE[0]);
    // Mode switches as vertical markers.
    for w in log.windows(2) {
        if w[0].mode != w[1].mode {
            let (x, y0) = f.px(w[1].t, f.y[0]);
            let (_, y1) = f.px(w[1].t, f.y[1]);
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="gray" stroke-dasharray="2 2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                x + 3.0,
                y1 + 12.0,
                escape(&w[1].mode)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Image-plane feature paths with their goal pixels marked.
pub fn paths_plot(tracks: &[TrackRecord], image_size: [usize; 2], title: &str) -> String {
    let mut by_id: BTreeMap<u32, Vec<&TrackRecord>> = BTreeMap::new();
    for r in tracks {
        by_id.entry(r.ref_id).or_default().push(r);
    }
    let f = Frame {
        x: [0.0, image_size[0] as f64],
        y: [0.0, image_size[1] as f64],
        flip_y: true,
    };
    let mut out = String::new();
    header(&mut out, title, "u [px]", "v [px]");
    ticks(&mut out, &f);
    for (i, rows) in by_id.values().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.u, r.v)).collect();
        polyline(&mut out, &f, &pts, color);
        let (sx, sy) = f.px(pts[0].0, pts[0].1);
        let _ = writeln!(out, r#"<circle cx="{sx:.2}" cy="{sy:.2}" r="2" fill="{color}"/>"#);
        let last = rows[rows.len() - 1];
        let (gx, gy) = f.px(last.goal_u, last.goal_v);
        let _ = writeln!(
            out,
            r#"<path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{color}"/>"#,
            gx - 4.0,
            gy - 4.0,
            gx + 4.0,
            gy + 4.0,
            gx - 4.0,
            gy + 4.0,
            gx + 4.0,
            gy - 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}
