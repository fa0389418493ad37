//! Top-view SVG of one evaluated frame: ground truth in green, predictions
//! in red, invisible stretches omitted.

use std::fmt::Write;

use lane3d_core::evaluation::EvalFrame;
use lane3d_core::Lane3D;

const WIDTH: f64 = 300.0;
const HEIGHT: f64 = 600.0;
const X_RANGE: f64 = 15.0;
const Y_MAX: f64 = 110.0;

fn to_px(x: f64, y: f64) -> (f64, f64) {
    ((x + X_RANGE) / (2.0 * X_RANGE) * WIDTH, HEIGHT - y / Y_MAX * HEIGHT)
}

fn polylines(out: &mut String, lane: &Lane3D, colour: &str) {
    let mut run: Vec<(f64, f64)> = Vec::new();
    let flush = |run: &mut Vec<(f64, f64)>, out: &mut String| {
        if run.len() > 1 {
            let pts: Vec<String> = run.iter().map(|(u, v)| format!("{u:.2},{v:.2}")).collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
                pts.join(" ")
            );
        }
        run.clear();
    };
    for (k, p) in lane.points.iter().enumerate() {
        if lane.is_visible(k) {
            run.push(to_px(p.x, p.y));
        } else {
            flush(&mut run, out);
        }
    }
    flush(&mut run, out);
}

pub fn top_view(frame: &EvalFrame) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (cx, _) = to_px(0.0, 0.0);
    let _ = writeln!(s, r##"<line x1="{cx}" y1="0" x2="{cx}" y2="{HEIGHT}" stroke="#ccc"/>"##);
    for g in &frame.gts {
        polylines(&mut s, g, "green");
    }
    for p in &frame.preds {
        polylines(&mut s, &p.lane, "red");
    }
    let _ = writeln!(s, r#"<text x="4" y="14" font-size="12">{}</text>"#, frame.id);
    s.push_str("</svg>\n");
    s
}
