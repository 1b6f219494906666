use std::fmt::Write as _;

use crate::environments::{Environment, Mode, ObstacleKind};
use crate::failure_map::FailureMap;
use crate::geometry::Vec3;
use crate::kinematics::TaskPose;
use crate::planner::Path;

use super::table::{CountKey, ResultsTable};
use super::HarnessError;

/// Raster resolution of the probability field.
pub const GRID: usize = 200;
const CANVAS: f64 = 600.0;
/// Quantization levels of the gray field; level 0 is the background.
const LEVELS: u32 = 32;
const PATH_SUBSTEPS: usize = 16;

fn gray(level: u32) -> u8 {
    // light for zero probability, dark for one
    (245 - level * 215 / (LEVELS - 1)) as u8
}

fn level(p: f64) -> u32 {
    (p.clamp(0.0, 1.0) * (LEVELS - 1) as f64).round() as u32
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    half: f64,
}

impl Frame {
    fn x(&self, x: f64) -> f64 {
        (x + self.half) / (2.0 * self.half) * CANVAS
    }
    fn y(&self, y: f64) -> f64 {
        (self.half - y) / (2.0 * self.half) * CANVAS
    }
    fn len(&self, l: f64) -> f64 {
        l / (2.0 * self.half) * CANVAS
    }
}

/// Renders a 2-D failure map: the probability field on a `GRID × GRID`
/// raster (dark = likely failure), obstacle outlines, failure points in red
/// and an optional planned path in blue.
pub fn render_map_svg(map: &FailureMap, env: &Environment, path: Option<&Path>) -> Result<String, HarnessError> {
    if env.mode != Mode::TwoD {
        return Err(HarnessError::UnsupportedMode(env.mode));
    }
    let frame = Frame {
        half: env.chain.reach() * 1.05,
    };
    let cell = 2.0 * frame.half / GRID as f64;
    let px = CANVAS / GRID as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" viewBox="0 0 {CANVAS} {CANVAS}">"#
    );
    let bg = gray(0);
    let _ = writeln!(svg, r#"<rect width="{CANVAS}" height="{CANVAS}" fill="rgb({bg},{bg},{bg})"/>"#);
    let _ = writeln!(svg, r#"<g shape-rendering="crispEdges">"#);
    for row in 0..GRID {
        // row 0 is the top of the image
        let y = frame.half - (row as f64 + 0.5) * cell;
        let levels: Vec<u32> = (0..GRID)
            .map(|col| {
                let x = -frame.half + (col as f64 + 0.5) * cell;
                level(map.prob_fail(&TaskPose::at(Vec3::planar(x, y))))
            })
            .collect();
        let mut col = 0;
        while col < GRID {
            let l = levels[col];
            let mut end = col + 1;
            while end < GRID && levels[end] == l {
                end += 1;
            }
            if l > 0 {
                let g = gray(l);
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({g},{g},{g})"/>"#,
                    col as f64 * px,
                    row as f64 * px,
                    (end - col) as f64 * px,
                    px
                );
            }
            col = end;
        }
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g fill="none" stroke="black" stroke-width="1.5">"#);
    for o in env.obstacles.iter().filter(|o| o.kind == ObstacleKind::Disc2d) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}"/>"#,
            frame.x(o.center.x),
            frame.y(o.center.y),
            frame.len(o.radius)
        );
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g fill="red">"#);
    for f in map.records() {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#,
            frame.x(f.position.x),
            frame.y(f.position.y)
        );
    }
    let _ = writeln!(svg, "</g>");

    if let Some(path) = path {
        let mut points = vec![env.chain.fk_position(path.first())];
        for seg in path.via().windows(2) {
            for k in 1..=PATH_SUBSTEPS {
                let c = env.chain.interpolate(&seg[0], &seg[1], k as f64 / PATH_SUBSTEPS as f64);
                points.push(env.chain.fk_position(&c));
            }
        }
        let coords: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", frame.x(p.x), frame.y(p.y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="blue" stroke-width="2"/>"#,
            coords.join(" ")
        );
    }

    for (c, color) in [(&env.start, "green"), (&env.goal, "orange")] {
        let p = env.chain.fk_position(c);
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{color}" stroke="black"/>"#,
            frame.x(p.x),
            frame.y(p.y)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Line chart of success rate against path budget `b` for every method of
/// one (mode, count) cell. `None` if the table has no such rows.
pub fn render_success_chart(table: &ResultsTable, mode: Mode, count: CountKey) -> Option<String> {
    let rows: Vec<_> = table
        .rows
        .iter()
        .filter(|r| r.mode == mode && r.obstacles == count)
        .collect();
    let max_b = rows.iter().map(|r| r.budget).max()?;
    let mut methods: Vec<&str> = Vec::new();
    for r in &rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 50.0, 170.0, 30.0, 40.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let sx = |b: usize| left + if max_b > 1 { (b - 1) as f64 / (max_b - 1) as f64 } else { 0.5 } * plot_w;
    let sy = |r: f64| top + (1.0 - r) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="18">{} obstacles={}</text>"#,
        mode,
        escape(&count.to_string())
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + plot_h,
        left + plot_w
    );
    for tick in 0..=4 {
        let r = tick as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{r}</text>"#,
            left - 6.0,
            sy(r) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">paths executed (b)</text>"#,
        left + plot_w / 2.0,
        h - 8.0
    );
    for b in [1, max_b] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{b}</text>"#,
            sx(b),
            top + plot_h + 16.0
        );
    }
    for (i, method) in methods.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<_> = rows.iter().filter(|r| r.method == *method).collect();
        pts.sort_by_key(|r| r.budget);
        let band: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.1},{:.1}", sx(r.budget), sy(r.ci_hi)))
            .chain(pts.iter().rev().map(|r| format!("{:.1},{:.1}", sx(r.budget), sy(r.ci_lo))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.1},{:.1}", sx(r.budget), sy(r.success_rate)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = top + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{:.1}" width="12" height="12" fill="{color}"/><text x="{}" y="{:.1}">{}</text>"#,
            left + plot_w + 12.0,
            ly - 10.0,
            left + plot_w + 30.0,
            ly,
            escape(method)
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}
