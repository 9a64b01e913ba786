//! Deterministic SVG rendering of a rollout log: scene obstacles, planned
//! waypoint polylines, the executed body trajectory, footsteps, and goals.
//! The output is plain hand-built SVG text so two renders of the same log
//! are byte-identical.

use std::fmt::Write as _;

use stride_core::scene::Obstacle;
use stride_core::sim::{RolloutLog, SimEvent};

/// Pixels per meter in the output image.
const SCALE: f64 = 200.0;
/// World-space margin drawn around the scene bounds, in meters.
const MARGIN: f64 = 0.25;
/// At most this many planned paths are drawn (subsampled evenly).
const MAX_PATHS: usize = 60;

struct Frame {
    min_x: f64,
    max_y: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn new(log: &RolloutLog) -> Self {
        let b = &log.scene.bounds;
        let min_x = b.min[0] - MARGIN;
        let max_y = b.max[1] + MARGIN;
        Frame {
            min_x,
            max_y,
            width: (b.max[0] + MARGIN - min_x) * SCALE,
            height: (max_y - (b.min[1] - MARGIN)) * SCALE,
        }
    }

    /// World point to pixel coordinates (y axis flipped so +y is up).
    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        ((p[0] - self.min_x) * SCALE, (self.max_y - p[1]) * SCALE)
    }
}

fn fmt_pt(frame: &Frame, p: [f64; 2]) -> String {
    let (x, y) = frame.px(p);
    format!("{x:.2},{y:.2}")
}

fn polyline(out: &mut String, frame: &Frame, pts: &[[f64; 2]], style: &str) {
    if pts.len() < 2 {
        return;
    }
    let coords: Vec<String> = pts.iter().map(|p| fmt_pt(frame, *p)).collect();
    let _ = writeln!(out, "  <polyline points=\"{}\" {style}/>", coords.join(" "));
}

fn circle(out: &mut String, frame: &Frame, center: [f64; 2], r_m: f64, style: &str) {
    let (cx, cy) = frame.px(center);
    let _ = writeln!(
        out,
        "  <circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{:.2}\" {style}/>",
        r_m * SCALE
    );
}

/// Render `log` as a standalone SVG document.
pub fn render_svg(log: &RolloutLog) -> String {
    let frame = Frame::new(log);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" \
         viewBox=\"0 0 {w:.2} {h:.2}\">",
        w = frame.width,
        h = frame.height
    );
    let _ = writeln!(
        s,
        "  <rect x=\"0\" y=\"0\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"#fbfbf8\"/>",
        w = frame.width,
        h = frame.height
    );

    // Walkable bounds.
    let b = &log.scene.bounds;
    let (bx, by) = frame.px([b.min[0], b.max[1]]);
    let _ = writeln!(
        s,
        "  <rect x=\"{bx:.2}\" y=\"{by:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
         fill=\"none\" stroke=\"#c8c8c0\" stroke-width=\"2\"/>",
        (b.max[0] - b.min[0]) * SCALE,
        (b.max[1] - b.min[1]) * SCALE
    );

    // Obstacles.
    for obs in &log.scene.obstacles {
        match obs {
            Obstacle::Disk { center, radius, .. } => {
                circle(&mut s, &frame, *center, *radius, "fill=\"#8a8a82\" stroke=\"#55554f\" stroke-width=\"1.5\"");
            }
            Obstacle::Box { min, max, .. } => {
                let (x, y) = frame.px([min[0], max[1]]);
                let _ = writeln!(
                    s,
                    "  <rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                     fill=\"#8a8a82\" stroke=\"#55554f\" stroke-width=\"1.5\"/>",
                    (max[0] - min[0]) * SCALE,
                    (max[1] - min[1]) * SCALE
                );
            }
        }
    }

    // Planned waypoint polylines (subsampled), latest plan emphasized.
    let paths: Vec<&Vec<[f64; 2]>> = log
        .events
        .iter()
        .filter_map(|e| match e {
            SimEvent::Path { waypoints_world, .. } => Some(waypoints_world),
            _ => None,
        })
        .collect();
    if !paths.is_empty() {
        let stride = paths.len().div_ceil(MAX_PATHS);
        for (i, wp) in paths.iter().enumerate() {
            let last = i == paths.len() - 1;
            if !last && i % stride != 0 {
                continue;
            }
            let style = if last {
                "fill=\"none\" stroke=\"#2a6fb0\" stroke-width=\"2.5\""
            } else {
                "fill=\"none\" stroke=\"#9dc3e0\" stroke-width=\"1\" opacity=\"0.6\""
            };
            polyline(&mut s, &frame, wp, style);
        }
    }

    // Executed footsteps and the latest predicted step sequence.
    let mut last_steps: Option<&Vec<[f64; 2]>> = None;
    for e in &log.events {
        if let SimEvent::Step { executed_foot, steps_world, .. } = e {
            circle(
                &mut s,
                &frame,
                *executed_foot,
                0.03,
                "fill=\"#5a9e5a\" stroke=\"#2e5a2e\" stroke-width=\"1\"",
            );
            last_steps = Some(steps_world);
        }
    }
    if let Some(steps) = last_steps {
        for p in steps {
            circle(
                &mut s,
                &frame,
                *p,
                0.03,
                "fill=\"none\" stroke=\"#b05a2a\" stroke-width=\"1.5\"",
            );
        }
    }

    // Body trajectory.
    let traj = log.trajectory();
    polyline(
        &mut s,
        &frame,
        &traj,
        "fill=\"none\" stroke=\"#333333\" stroke-width=\"2\"",
    );
    for p in &traj {
        circle(&mut s, &frame, *p, 0.012, "fill=\"#333333\"");
    }

    // Start pose and goals.
    circle(
        &mut s,
        &frame,
        [log.start.x, log.start.y],
        log.body_radius,
        "fill=\"none\" stroke=\"#333333\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\"",
    );
    for g in &log.goals {
        circle(&mut s, &frame, *g, 0.05, "fill=\"#c03030\"");
        circle(
            &mut s,
            &frame,
            *g,
            0.1,
            "fill=\"none\" stroke=\"#c03030\" stroke-width=\"1.5\"",
        );
    }

    // Caption.
    let _ = writeln!(
        s,
        "  <text x=\"8\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"13\" \
         fill=\"#333333\">outcome: {:?} at t={:.2}s, {} steps</text>",
        frame.height - 8.0,
        log.outcome,
        log.outcome_t,
        log.step_count()
    );

    s.push_str("</svg>\n");
    s
}
