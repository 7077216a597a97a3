//! Static SVG snapshots: workspace on the left, Minkowski-difference space
//! on the right.

use super::{ScenarioConfig, SimError, Trace};
use crate::geometry::{ConvexPolygon, Vec2};
use nalgebra::DVector;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

const PANEL: f64 = 480.0;
const MARGIN: f64 = 24.0;
const FRAME_COLORS: [&str; 6] = ["#1f4e9c", "#2f7bd1", "#4aa3e8", "#6cc3f0", "#8fd8f5", "#b3e8fa"];

#[derive(Debug, Clone, Copy)]
struct Bounds {
    min: Vec2,
    max: Vec2,
}

impl Bounds {
    fn new() -> Self {
        Self {
            min: Vec2::new(f64::INFINITY, f64::INFINITY),
            max: Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn add(&mut self, p: &Vec2) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn padded(mut self) -> Self {
        let pad = 0.05 * (self.max - self.min).max().max(1.0);
        self.min -= Vec2::new(pad, pad);
        self.max += Vec2::new(pad, pad);
        self
    }

    /// Maps world coordinates into a square panel with `y` up.
    fn map(&self, p: &Vec2, x_offset: f64) -> (f64, f64) {
        let span = (self.max - self.min).max().max(1e-9);
        let s = (PANEL - 2.0 * MARGIN) / span;
        (
            x_offset + MARGIN + (p.x - self.min.x) * s,
            PANEL - MARGIN - (p.y - self.min.y) * s,
        )
    }
}

fn polygon_path(out: &mut String, poly: &ConvexPolygon, b: &Bounds, x0: f64, style: &str) {
    let pts: Vec<String> = poly
        .vertices()
        .iter()
        .map(|v| {
            let (x, y) = b.map(v, x0);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(out, r#"<polygon points="{}" {style}/>"#, pts.join(" "));
}

fn nearest_record(trace: &Trace, t: f64) -> Option<usize> {
    (0..trace.records.len()).min_by(|&i, &j| {
        (trace.records[i].t - t)
            .abs()
            .total_cmp(&(trace.records[j].t - t).abs())
    })
}

/// Writes the snapshot figure. Frames are the records nearest to each of
/// `frame_times`.
pub fn render_svg(trace: &Trace, cfg: &ScenarioConfig, path: &Path, frame_times: &[f64]) -> Result<(), SimError> {
    let robot = cfg.robot()?;
    let obstacles = cfg.obstacle_polygons()?;
    let frames: Vec<usize> = frame_times.iter().filter_map(|&t| nearest_record(trace, t)).collect();

    let pose_at = |i: usize| cfg.model.pose_of(&DVector::from_column_slice(&trace.records[i].state));

    let mut world = Bounds::new();
    for o in &obstacles {
        o.vertices().iter().for_each(|v| world.add(v));
    }
    for r in &trace.records {
        world.add(&Vec2::new(r.state[0], r.state[1]));
    }
    for &i in &frames {
        robot.at(&pose_at(i)).vertices().iter().for_each(|v| world.add(v));
    }
    world.add(&cfg.goal());
    let world = world.padded();

    let mut cos = Vec::new();
    let mut md = Bounds::new();
    md.add(&Vec2::zeros());
    for &i in &frames {
        let pose = pose_at(i);
        for (k, o) in obstacles.iter().enumerate() {
            let co = robot.configuration_obstacle(o, &pose);
            co.vertices().iter().for_each(|v| md.add(v));
            cos.push((i, k, co));
        }
    }
    let md = md.padded();

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = 2.0 * PANEL,
        h = PANEL + 20.0
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13">workspace: {}</text>"#,
        MARGIN,
        PANEL + 12.0,
        trace.scenario
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13">Minkowski-difference space (origin = robot)</text>"#,
        PANEL + MARGIN,
        PANEL + 12.0
    );

    // Workspace panel.
    for o in &obstacles {
        polygon_path(&mut out, o, &world, 0.0, r##"fill="#d9534f" fill-opacity="0.6" stroke="#8b1e1b""##);
    }
    let traj: Vec<String> = trace
        .records
        .iter()
        .map(|r| {
            let (x, y) = world.map(&Vec2::new(r.state[0], r.state[1]), 0.0);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#2ca02c" stroke-width="1.5"/>"##,
        traj.join(" ")
    );
    for (f, &i) in frames.iter().enumerate() {
        let color = FRAME_COLORS[f % FRAME_COLORS.len()];
        let style = format!(r#"fill="{color}" fill-opacity="0.5" stroke="{color}""#);
        polygon_path(&mut out, &robot.at(&pose_at(i)), &world, 0.0, &style);
        let (x, y) = world.map(&robot.at(&pose_at(i)).centroid(), 0.0);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="11">t={:.2}</text>"#,
            y - 6.0,
            trace.records[i].t
        );
    }
    let (gx, gy) = world.map(&cfg.goal(), 0.0);
    let _ = writeln!(out, r##"<circle cx="{gx:.2}" cy="{gy:.2}" r="4" fill="#2ca02c"/>"##);

    // Md-space panel.
    for (f, &i) in frames.iter().enumerate() {
        let color = FRAME_COLORS[f % FRAME_COLORS.len()];
        for (_, k, co) in cos.iter().filter(|(ci, _, _)| *ci == i) {
            let style = format!(r##"fill="#2ca02c" fill-opacity="0.25" stroke="{color}""##);
            polygon_path(&mut out, co, &md, PANEL, &style);
            let z = trace.records[i].obstacles[*k].z_star;
            let (zx, zy) = md.map(&Vec2::new(z[0], z[1]), PANEL);
            let (ox, oy) = md.map(&Vec2::zeros(), PANEL);
            let _ = writeln!(
                out,
                r#"<line x1="{ox:.2}" y1="{oy:.2}" x2="{zx:.2}" y2="{zy:.2}" stroke="{color}" stroke-dasharray="3,2"/>"#
            );
            let _ = writeln!(out, r#"<circle cx="{zx:.2}" cy="{zy:.2}" r="3" fill="{color}"/>"#);
        }
    }
    let (ox, oy) = md.map(&Vec2::zeros(), PANEL);
    let _ = writeln!(out, r#"<circle cx="{ox:.2}" cy="{oy:.2}" r="4" fill="black"/>"#);
    let _ = writeln!(out, "</svg>");
    fs::write(path, out)?;
    Ok(())
}
