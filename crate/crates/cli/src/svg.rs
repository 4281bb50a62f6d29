//! Minimal static SVG line charts: axes, tick labels and polylines.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 40.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Clone, Copy)]
pub enum Style {
    /// Colour picked from the palette by series index.
    Palette,
    /// Thin translucent grey, for bootstrap clouds.
    Faint,
    /// Thick black, drawn on top.
    Emphasis,
    /// Dashed grey reference line.
    Reference,
}

pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let finite = series.iter().flat_map(|s| &s.points).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let dy = 0.05 * (y1 - y0);
    (x0, x1, y0 - dy, y1 + dy)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn draw_panel(out: &mut String, panel: &Panel, top: f64) {
    let (x0, x1, y0, y1) = bounds(&panel.series);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| top + MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;
    let (left, right, upper, lower) = (MARGIN_LEFT, MARGIN_LEFT + plot_w, top + MARGIN_TOP, top + MARGIN_TOP + plot_h);

    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        top + 18.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{left:.1}" y="{upper:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="black"/>"#
    );
    for t in 0..=4 {
        let f = t as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            sx(xv),
            lower + 14.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
            left - 4.0,
            sy(yv) + 3.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        lower + 32.0,
        escape(&panel.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        (upper + lower) / 2.0,
        (upper + lower) / 2.0,
        escape(&panel.y_label)
    );

    // faint series first so emphasised curves stay visible
    let order = |s: &Series| match s.style {
        Style::Faint => 0,
        Style::Reference => 1,
        Style::Palette => 2,
        Style::Emphasis => 3,
    };
    let mut indexed: Vec<(usize, &Series)> = panel.series.iter().enumerate().collect();
    indexed.sort_by_key(|(i, s)| (order(s), *i));
    let mut legend = 0;
    for (i, s) in indexed {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let attrs = match s.style {
            Style::Palette => format!(r#"stroke="{}" stroke-width="1.8""#, PALETTE[i % PALETTE.len()]),
            Style::Faint => r##"stroke="#999999" stroke-width="0.6" stroke-opacity="0.35""##.to_string(),
            Style::Emphasis => r#"stroke="black" stroke-width="2""#.to_string(),
            Style::Reference => r##"stroke="#666666" stroke-width="1" stroke-dasharray="4 3""##.to_string(),
        };
        let _ = writeln!(out, r#"<polyline fill="none" {attrs} points="{}"/>"#, pts.join(" "));
        if matches!(s.style, Style::Palette) && !s.label.is_empty() {
            let y = upper + 12.0 + 12.0 * legend as f64;
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{y:.1}" font-size="10" fill="{}">{}</text>"#,
                right - 60.0,
                PALETTE[i % PALETTE.len()],
                escape(&s.label)
            );
            legend += 1;
        }
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e4) {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Panels stacked vertically in one document.
pub fn render(panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, p) in panels.iter().enumerate() {
        draw_panel(&mut out, p, k as f64 * PANEL_HEIGHT);
    }
    out.push_str("</svg>\n");
    out
}
