//! Static SVG figures of planar reach sets and boxes.

use std::fmt::Write;

use tllreach::{BoundingBox, HPolytope};

const SIZE: f64 = 640.0;
const MARGIN: f64 = 24.0;
const BOX_COLORS: [&str; 6] = ["#d62728", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"];

/// Vertices of a bounded planar polytope in counter-clockwise order.
pub fn polygon(p: &HPolytope) -> Vec<[f64; 2]> {
    let rows: Vec<(&[f64], f64)> = p.rows().collect();
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let ((a, da), (b, db)) = (rows[i], rows[j]);
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = [(da * b[1] - a[1] * db) / det, (a[0] * db - da * b[0]) / det];
            let scale = 1.0 + x[0].abs() + x[1].abs();
            if rows.iter().all(|(r, d)| r[0] * x[0] + r[1] * x[1] <= d + 1e-9 * scale)
                && !pts.iter().any(|q| (q[0] - x[0]).abs() < 1e-9 && (q[1] - x[1]).abs() < 1e-9)
            {
                pts.push(x);
            }
        }
    }
    if pts.is_empty() {
        return pts;
    }
    let cx = pts.iter().map(|q| q[0]).sum::<f64>() / pts.len() as f64;
    let cy = pts.iter().map(|q| q[1]).sum::<f64>() / pts.len() as f64;
    pts.sort_by(|a, b| (a[1] - cy).atan2(a[0] - cx).total_cmp(&(b[1] - cy).atan2(b[0] - cx)));
    pts
}

struct View {
    lo: [f64; 2],
    scale: f64,
}

impl View {
    fn fit(points: &[[f64; 2]]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        Self {
            lo,
            scale: (SIZE - 2.0 * MARGIN) / span,
        }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.lo[0]) * self.scale,
            SIZE - MARGIN - (p[1] - self.lo[1]) * self.scale,
        )
    }

    fn path(&self, pts: &[[f64; 2]]) -> String {
        let mut s = String::new();
        for (k, p) in pts.iter().enumerate() {
            let (x, y) = self.map(*p);
            let _ = write!(s, "{}{x:.2},{y:.2} ", if k == 0 { "M" } else { "L" });
        }
        s.push('Z');
        s
    }
}

fn corners(b: &BoundingBox) -> [[f64; 2]; 4] {
    [
        [b.lo[0], b.lo[1]],
        [b.hi[0], b.lo[1]],
        [b.hi[0], b.hi[1]],
        [b.lo[0], b.hi[1]],
    ]
}

/// Render `X_0`, optional exact pieces of the first step, and the per-step boxes.
pub fn render(x0: &HPolytope, pieces: &[HPolytope], boxes: &[BoundingBox]) -> String {
    let x0_poly = polygon(x0);
    let piece_polys: Vec<Vec<[f64; 2]>> = pieces.iter().map(polygon).collect();
    let mut all: Vec<[f64; 2]> = x0_poly.clone();
    all.extend(piece_polys.iter().flatten());
    for b in boxes.iter().filter(|b| !b.is_empty()) {
        all.extend(corners(b));
    }
    let view = View::fit(&all);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    if !x0_poly.is_empty() {
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="#bbbbbb" fill-opacity="0.6" stroke="#444444" stroke-width="1"><title>X0</title></path>"##,
            view.path(&x0_poly)
        );
    }
    for poly in piece_polys.iter().filter(|p| !p.is_empty()) {
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="#1f77b4" fill-opacity="0.35" stroke="#1f77b4" stroke-width="0.5"/>"##,
            view.path(poly)
        );
    }
    for (t, b) in boxes.iter().enumerate().filter(|(_, b)| !b.is_empty()) {
        let color = BOX_COLORS[t % BOX_COLORS.len()];
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"><title>B{}</title></path>"#,
            view.path(&corners(b)),
            t + 1
        );
        let (x, y) = view.map([b.lo[0], b.hi[1]]);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="{color}">t={}</text>"#,
            x + 2.0,
            y - 3.0,
            t + 1
        );
    }
    s.push_str("</svg>\n");
    s
}
