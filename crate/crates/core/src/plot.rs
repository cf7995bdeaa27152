//! Minimal SVG line charts: vertically stacked panels sharing the time axis.

use std::fmt::Write as _;

pub struct Series<'a> {
    pub label: String,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

pub struct Panel<'a> {
    pub title: String,
    pub series: Vec<Series<'a>>,
    /// Symmetric clip applied to the y-range, so one divergent curve does not
    /// flatten the others.
    pub clip: Option<f64>,
}

const WIDTH: f64 = 760.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 140.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 30.0;
const MAX_POINTS: usize = 4000;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

fn padded((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi - lo < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

pub fn render(panels: &[Panel<'_>], x_label: &str) -> String {
    let height = PANEL_HEIGHT * panels.len().max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        draw_panel(&mut svg, panel, k as f64 * PANEL_HEIGHT, x_label);
    }
    svg.push_str("</svg>\n");
    svg
}

fn draw_panel(svg: &mut String, panel: &Panel<'_>, top: f64, x_label: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = top + MARGIN_TOP;
    let y1 = top + PANEL_HEIGHT - MARGIN_BOTTOM;
    let clip = |v: f64| panel.clip.map_or(v, |c| v.clamp(-c, c));
    let xr =
        finite_range(panel.series.iter().flat_map(|s| s.x.iter().copied())).unwrap_or((0.0, 1.0));
    let yr = finite_range(
        panel
            .series
            .iter()
            .flat_map(|s| s.y.iter().map(|&v| clip(v))),
    )
    .unwrap_or((-1.0, 1.0));
    let (xr, yr) = (if xr.1 > xr.0 { xr } else { padded(xr) }, padded(yr));
    let sx = |v: f64| x0 + (v - xr.0) / (xr.1 - xr.0) * (x1 - x0);
    let sy = |v: f64| y1 - (v - yr.0) / (yr.1 - yr.0) * (y1 - y0);

    let _ = writeln!(
        svg,
        r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        x1 - x0,
        y1 - y0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{x0}" y="{}" font-size="13">{}</text>"#,
        y0 - 8.0,
        escape(&panel.title)
    );
    for (v, anchor_y) in [(yr.0, y1), (yr.1, y0 + 10.0)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{anchor_y}" text-anchor="end">{v:.3}</text>"#,
            x0 - 4.0
        );
    }
    if yr.0 < 0.0 && yr.1 > 0.0 {
        let _ = writeln!(
            svg,
            r##"<line x1="{x0}" x2="{x1}" y1="{0:.2}" y2="{0:.2}" stroke="#bbb" stroke-dasharray="4 3"/>"##,
            sy(0.0)
        );
    }
    for (v, anchor) in [(xr.0, "start"), (xr.1, "end")] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="{anchor}">{v:.3}</text>"#,
            sx(v),
            y1 + 14.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
        0.5 * (x0 + x1),
        y1 + 26.0,
        escape(x_label)
    );

    for (i, s) in panel.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let n = s.x.len().min(s.y.len());
        let step = n.div_ceil(MAX_POINTS).max(1);
        let mut points = String::new();
        for j in (0..n)
            .step_by(step)
            .chain(std::iter::once(n.saturating_sub(1)))
        {
            if j >= n || !(s.x[j].is_finite() && s.y[j].is_finite()) {
                continue;
            }
            let _ = write!(points, "{:.2},{:.2} ", sx(s.x[j]), sy(clip(s.y[j])));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            points.trim_end()
        );
        let ly = y0 + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x1 + 10.0,
            x1 + 30.0,
            x1 + 34.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
}
