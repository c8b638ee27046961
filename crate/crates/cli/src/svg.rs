//! Bare-bones SVG heatmaps for a quick look at the CSV outputs.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

/// Blue to yellow ramp, `t` in [0, 1].
fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t) as u8;
    let g = (40.0 + 200.0 * t) as u8;
    let b = (160.0 * (1.0 - t)) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Smallest positive gap between sorted distinct values, or `fallback`.
fn cell_size(mut v: Vec<f64>, fallback: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    v.windows(2)
        .map(|w| w[1] - w[0])
        .min_by(f64::total_cmp)
        .unwrap_or(fallback)
}

/// One rectangle per `(x, y, value)` cell; colour scales from the smallest
/// to the largest value.
pub fn heatmap(cells: &[(f64, f64, f64)], x_label: &str, y_label: &str, title: &str) -> String {
    let mut doc = String::new();
    let _ = writeln!(
        doc,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(doc, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(doc, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, WIDTH / 2.0);
    let _ = writeln!(
        doc,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        doc,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let finite: Vec<&(f64, f64, f64)> = cells.iter().filter(|c| c.0.is_finite() && c.1.is_finite() && c.2.is_finite()).collect();
    if !finite.is_empty() {
        let fold = |f: fn(&(f64, f64, f64)) -> f64| {
            finite
                .iter()
                .map(|c| f(c))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (x0, x1) = fold(|c| c.0);
        let (y0, y1) = fold(|c| c.1);
        let (v0, v1) = fold(|c| c.2);
        let dx = cell_size(finite.iter().map(|c| c.0).collect(), 1.0);
        let dy = cell_size(finite.iter().map(|c| c.1).collect(), 1.0);
        let plot_w = WIDTH - 2.0 * MARGIN;
        let plot_h = HEIGHT - 2.0 * MARGIN;
        let sx = plot_w / (x1 - x0 + dx);
        let sy = plot_h / (y1 - y0 + dy);
        for &&(x, y, v) in &finite {
            let t = if v1 > v0 { (v - v0) / (v1 - v0) } else { 1.0 };
            let px = MARGIN + (x - x0) * sx;
            let py = HEIGHT - MARGIN - (y - y0 + dy) * sy;
            let _ = writeln!(
                doc,
                r#"<rect x="{px:.2}" y="{py:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                dx * sx,
                dy * sy,
                color(t)
            );
        }
        let _ = writeln!(
            doc,
            r#"<text x="{MARGIN}" y="{}">{x0:.2}</text><text x="{}" y="{}" text-anchor="end">{x1:.2}</text>"#,
            HEIGHT - MARGIN + 15.0,
            WIDTH - MARGIN,
            HEIGHT - MARGIN + 15.0
        );
        let _ = writeln!(
            doc,
            r#"<text x="{}" y="{}" text-anchor="end">{y0:.2}</text><text x="{}" y="{}" text-anchor="end">{y1:.2}</text>"#,
            MARGIN - 4.0,
            HEIGHT - MARGIN,
            MARGIN - 4.0,
            MARGIN + 10.0
        );
    }
    doc.push_str("</svg>\n");
    doc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_rect_per_cell() {
        let cells = [(0.0, 0.0, 1.0), (0.1, 0.0, 2.0), (0.0, 0.1, f64::NAN)];
        let doc = heatmap(&cells, "x", "y", "t");
        assert_eq!(doc.matches("<rect").count(), 3);
        assert!(doc.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn colour_ramp_ends() {
        assert_eq!(color(0.0), "#0028a0");
        assert_eq!(color(1.0), "#fff000");
    }
}
