//! Minimal static SVG line chart for study plot data.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const LEGEND: f64 = 170.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// One polyline per series over categorical x positions; the y axis spans
/// the observed range padded to a multiple of 0.05. Missing values break
/// the line.
pub fn line_chart<S: std::fmt::Display>(title: &str, xs: &[String], series: &[(S, Vec<Option<f64>>)]) -> String {
    let vals = series.iter().flat_map(|(_, v)| v.iter().flatten().copied());
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() {
        let lo = (lo / 0.05).floor() * 0.05;
        let hi = ((hi / 0.05).ceil() * 0.05).max(lo + 0.05);
        (lo, hi)
    } else {
        (0.0, 1.0)
    };
    let plot_w = WIDTH - 2.0 * MARGIN - LEGEND;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x_at = |i: usize| {
        if xs.len() < 2 {
            MARGIN + plot_w / 2.0
        } else {
            MARGIN + plot_w * i as f64 / (xs.len() - 1) as f64
        }
    };
    let y_at = |v: f64| MARGIN + plot_h * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN + plot_w / 2.0,
        MARGIN / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{MARGIN},{MARGIN} V{} H{}" fill="none" stroke="black"/>"#,
        MARGIN + plot_h,
        MARGIN + plot_w
    );
    let ticks = ((hi - lo) / 0.05).round() as usize;
    let step = ticks.div_ceil(8).max(1);
    for t in (0..=ticks).step_by(step) {
        let v = lo + 0.05 * t as f64;
        let y = y_at(v);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{y:.1}" x2="{MARGIN}" y2="{y:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            MARGIN - 4.0,
            MARGIN - 8.0,
            y + 4.0
        );
    }
    for (i, x) in xs.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            x_at(i),
            MARGIN + plot_h + 18.0,
            escape(x)
        );
    }
    for (k, (name, v)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for (i, p) in v.iter().enumerate() {
            match p {
                Some(p) => {
                    let _ = write!(d, "{}{:.1},{:.1} ", if pen_down { "L" } else { "M" }, x_at(i), y_at(*p));
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                        x_at(i),
                        y_at(*p)
                    );
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        if !d.is_empty() {
            let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, d.trim_end());
        }
        let ly = MARGIN + 18.0 * k as f64;
        let lx = WIDTH - MARGIN - LEGEND + 20.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="12" height="12" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            ly - 10.0,
            lx + 18.0,
            ly,
            escape(&name.to_string())
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_one_path_per_complete_series() {
        let xs = vec!["NS".to_string(), "MS".into(), "S".into()];
        let series = vec![("a", vec![Some(0.8), Some(0.85), Some(0.9)]), ("b<c", vec![None, None, None])];
        let svg = line_chart("t", &xs, &series);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("stroke-width=\"2\"").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("b&lt;c"));
    }
}
