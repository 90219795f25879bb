//! Barrier-diagram SVG emitter.
//!
//! Draws the run in the alignment–insertion plane: alignment error `A` on
//! the horizontal axis, insertion `Z` on the vertical axis, the safe-set
//! boundary `Z = Z_d* + kappa_a(A)` as a curve with the safe side shaded,
//! the desired insertion as a dashed line, and the logged trajectory on
//! top. The output is plain SVG with no external references.
//!
//! Rendering is deterministic: equal trajectories and shaping produce
//! byte-identical files (fixed sampling counts, fixed decimal formatting,
//! no timestamps).

use std::fmt::Write;

use safepress::shaping::Shaping;
use safepress::simulator::Trajectory;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 58.0;
/// Boundary curve sample count.
const BOUNDARY_SAMPLES: usize = 256;
/// Trajectory points are decimated to at most this many (plus the final
/// row) so long runs stay compact.
const MAX_TRAJECTORY_POINTS: usize = 1500;

/// Axis mapping from data coordinates to pixel coordinates.
struct Frame {
    a_lo: f64,
    a_hi: f64,
    z_lo: f64,
    z_hi: f64,
}

impl Frame {
    fn x(&self, a: f64) -> f64 {
        MARGIN_LEFT + (a - self.a_lo) / (self.a_hi - self.a_lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, z: f64) -> f64 {
        // SVG y grows downward; larger Z is drawn higher.
        HEIGHT - MARGIN_BOTTOM
            - (z - self.z_lo) / (self.z_hi - self.z_lo) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Formats a tick label: scientific for sub-centimeter ranges, plain
/// decimals otherwise. The choice depends only on the axis span, so the
/// output stays deterministic.
fn tick_label(value: f64, span: f64) -> String {
    if span < 1e-2 {
        format!("{value:.1e}")
    } else {
        format!("{value:.3}")
    }
}

/// Renders the diagram for a finished run.
///
/// `z_d` is the desired insertion (the dashed reference line); it comes
/// from the scenario rather than the shaping bundle because it depends on
/// the force model.
pub fn barrier_diagram(traj: &Trajectory<f64>, shaping: &Shaping<f64>, z_d: f64) -> String {
    let points: Vec<(f64, f64)> = decimate(traj);
    let z_d_star = shaping.z_d_star;

    // Data ranges. The alignment axis starts at zero (A is nonnegative);
    // the insertion axis covers the trajectory, the barrier floor, and the
    // boundary curve over the visible alignment range.
    let mut a_hi: f64 = 0.05;
    let mut z_lo: f64 = z_d_star.min(z_d);
    let mut z_hi: f64 = 0.0;
    for &(a, z) in &points {
        a_hi = a_hi.max(a);
        z_lo = z_lo.min(z);
        z_hi = z_hi.max(z);
    }
    a_hi *= 1.05;
    z_hi = z_hi.max(z_d_star + shaping.kappa_a.eval(a_hi));
    let pad = 0.08 * (z_hi - z_lo).max(1e-6);
    let frame = Frame {
        a_lo: 0.0,
        a_hi,
        z_lo: z_lo - pad,
        z_hi: z_hi + pad,
    };

    let mut svg = String::with_capacity(64 * 1024);
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    );
    let _ = writeln!(svg, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);

    // Safe region: everything above the boundary curve.
    let boundary: Vec<(f64, f64)> = (0..BOUNDARY_SAMPLES)
        .map(|i| {
            let a = frame.a_hi * i as f64 / (BOUNDARY_SAMPLES - 1) as f64;
            (a, z_d_star + shaping.kappa_a.eval(a))
        })
        .collect();
    let mut region = String::new();
    for &(a, z) in &boundary {
        let _ = write!(region, "{:.2},{:.2} ", frame.x(a), frame.y(z));
    }
    let _ = write!(
        region,
        "{:.2},{:.2} {:.2},{:.2}",
        frame.x(frame.a_hi),
        MARGIN_TOP,
        frame.x(0.0),
        MARGIN_TOP
    );
    let _ = writeln!(svg, r##"<polygon points="{region}" fill="#edf6ed" stroke="none"/>"##);

    // Boundary curve.
    let _ = write!(svg, r##"<polyline fill="none" stroke="#2e7d32" stroke-width="2" points=""##);
    for &(a, z) in &boundary {
        let _ = write!(svg, "{:.2},{:.2} ", frame.x(a), frame.y(z));
    }
    let _ = writeln!(svg, r##""/>"##);

    // Desired insertion.
    let yd = frame.y(z_d);
    let _ = writeln!(
        svg,
        r##"<line x1="{:.2}" y1="{yd:.2}" x2="{:.2}" y2="{yd:.2}" stroke="#8d6e63" stroke-width="1.5" stroke-dasharray="7 5"/>"##,
        frame.x(0.0),
        frame.x(frame.a_hi),
    );

    // Trajectory.
    let _ = write!(svg, r##"<polyline fill="none" stroke="#1565c0" stroke-width="1.5" points=""##);
    for &(a, z) in &points {
        let _ = write!(svg, "{:.2},{:.2} ", frame.x(a), frame.y(z));
    }
    let _ = writeln!(svg, r##""/>"##);
    if let Some(&(a, z)) = points.first() {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="5" fill="#ef6c00"/>"##,
            frame.x(a),
            frame.y(z)
        );
    }
    if let Some(&(a, z)) = points.last() {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="5" fill="#1565c0"/>"##,
            frame.x(a),
            frame.y(z)
        );
    }

    axes(&mut svg, &frame);
    legend(&mut svg, &traj.meta.name);

    svg.push_str("</svg>\n");
    svg
}

/// Per-row `(A, Z)` pairs, thinned to a bounded count with the last row
/// always kept.
fn decimate(traj: &Trajectory<f64>) -> Vec<(f64, f64)> {
    let rows = &traj.rows;
    if rows.is_empty() {
        return Vec::new();
    }
    let stride = rows.len().div_ceil(MAX_TRAJECTORY_POINTS).max(1);
    let mut points: Vec<(f64, f64)> = rows
        .iter()
        .step_by(stride)
        .map(|r| (r.alignment, r.z))
        .collect();
    let last = rows.last().map(|r| (r.alignment, r.z)).unwrap();
    if points.last() != Some(&last) {
        points.push(last);
    }
    points
}

fn axes(svg: &mut String, frame: &Frame) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        svg,
        r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#333333" stroke-width="1"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#333333" stroke-width="1"/>"##
    );

    const TICKS: usize = 5;
    let a_span = frame.a_hi - frame.a_lo;
    let z_span = frame.z_hi - frame.z_lo;
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let a = frame.a_lo + f * a_span;
        let xa = frame.x(a);
        let _ = writeln!(
            svg,
            r##"<line x1="{xa:.2}" y1="{y0}" x2="{xa:.2}" y2="{:.2}" stroke="#333333" stroke-width="1"/>"##,
            y0 + 5.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{xa:.2}" y="{:.2}" font-family="monospace" font-size="12" fill="#333333" text-anchor="middle">{}</text>"##,
            y0 + 20.0,
            tick_label(a, a_span)
        );

        let z = frame.z_lo + f * z_span;
        let yz = frame.y(z);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{yz:.2}" x2="{x0}" y2="{yz:.2}" stroke="#333333" stroke-width="1"/>"##,
            x0 - 5.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="12" fill="#333333" text-anchor="end">{}</text>"##,
            x0 - 8.0,
            yz + 4.0,
            tick_label(z, z_span)
        );
    }

    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="13" fill="#333333" text-anchor="middle">alignment error A</text>"##,
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="18" y="{:.2}" font-family="monospace" font-size="13" fill="#333333" text-anchor="middle" transform="rotate(-90 18 {:.2})">insertion Z (m)</text>"##,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

fn legend(svg: &mut String, name: &str) {
    let _ = writeln!(
        svg,
        r##"<text x="{MARGIN_LEFT}" y="24" font-family="monospace" font-size="14" fill="#111111">{}: insertion vs alignment</text>"##,
        escape(name)
    );
    let x = WIDTH - MARGIN_RIGHT - 230.0;
    let entries: [(&str, &str, &str); 3] = [
        ("#2e7d32", "", "safe-set boundary"),
        ("#8d6e63", r##" stroke-dasharray="7 5""##, "desired insertion"),
        ("#1565c0", "", "trajectory"),
    ];
    for (i, (color, dash, label)) in entries.iter().enumerate() {
        let y = 56.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"{dash}/>"##,
            x + 28.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="12" fill="#333333">{label}</text>"##,
            x + 34.0,
            y + 4.0
        );
    }
}

/// Minimal XML text escaping for run names.
fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
