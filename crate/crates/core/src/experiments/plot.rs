//! Static SVG charts.

use std::fmt::Write;

use crate::mesh::Mesh;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn decades(lo: f64, hi: f64) -> (f64, f64) {
    (lo.log10().floor(), hi.log10().ceil().max(lo.log10().floor() + 1.0))
}

/// Log-log chart of the given series with dashed guide lines of the given
/// slopes, anchored at the first point of the first series.
pub fn convergence_svg(title: &str, series: &[Series], guides: &[(f64, &str)]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0 > 0.0 && p.1 > 0.0);
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if xmin > xmax {
        (xmin, xmax, ymin, ymax) = (1.0, 10.0, 1.0, 10.0);
    }
    let (x0, x1) = decades(xmin, xmax);
    let (y0, y1) = decades(ymin, ymax);
    let px = |x: f64| MARGIN + (x.log10() - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y.log10() - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    for e in (x0 as i32)..=(x1 as i32) {
        let x = px(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="#ddd"/>"##, MARGIN, H - MARGIN);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">1e{e}</text>"#, H - MARGIN + 18.0);
    }
    for e in (y0 as i32)..=(y1 as i32) {
        let y = py(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/>"##, MARGIN, W - MARGIN);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">1e{e}</text>"#, MARGIN - 6.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">ndof</text>"#, W / 2.0, H - 16.0);

    if let Some(&(ax, ay)) = series.first().and_then(|s| s.points.first()) {
        for (k, &(slope, label)) in guides.iter().enumerate() {
            let bx = xmax.max(ax * 10.0);
            let by = ay * (bx / ax).powf(slope);
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#555" stroke-dasharray="6,4"/>"##,
                px(ax),
                py(ay),
                px(bx),
                py(by.max(10f64.powf(y0)))
            );
            let _ = writeln!(s, r##"<text x="{}" y="{}" fill="#555">{}</text>"##, W - MARGIN - 110.0, MARGIN + 16.0 * (series.len() + k + 1) as f64, escape(label));
        }
    }
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0 > 0.0 && p.1 > 0.0)
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        for p in &path {
            let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#);
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - MARGIN - 110.0,
            MARGIN + 16.0 * (k + 1) as f64,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Outline of every cell, time upward and space to the right.
pub fn mesh_svg(mesh: &Mesh) -> String {
    let size = 480.0;
    let m = 20.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}">"#, size + 2.0 * m, size + 2.0 * m);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for c in mesh.cells() {
        let x = m + c.x_lo().to_f64() * size;
        let y = m + (1.0 - c.t_hi().to_f64()) * size;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="black" stroke-width="0.4"/>"#,
            c.hx() * size,
            c.ht() * size
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
