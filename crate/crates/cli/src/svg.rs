//! Deterministic SVG scatter plots.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub struct PlotData<'a> {
    pub points: &'a [(f64, f64)],
    /// Class index of each point.
    pub labels: &'a [usize],
    pub classes: &'a [String],
    pub title: Option<&'a str>,
}

/// Colour of class `c`; past the palette, hues are spread by the golden angle.
fn colour(c: usize) -> String {
    match PALETTE.get(c) {
        Some(p) => (*p).to_string(),
        None => format!("hsl({:.0},65%,45%)", (c as f64 * 137.508) % 360.0),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Padded data range; a degenerate or empty range becomes a unit interval.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    // avoid "-0.000"
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0.000".into()
    } else {
        s
    }
}

pub fn scatter_svg(data: &PlotData<'_>) -> String {
    let (x0, x1) = range(data.points.iter().map(|p| p.0));
    let (y0, y1) = range(data.points.iter().map(|p| p.1));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    if let Some(t) = data.title {
        writeln!(
            s,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(t)
        )
        .unwrap();
    }

    // axes
    writeln!(s, r#"<g class="axes" stroke="black" stroke-width="1">"#).unwrap();
    writeln!(s, r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#, TOP + ph, LEFT + pw, TOP + ph).unwrap();
    writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/>"#, TOP + ph).unwrap();
    for k in 0..TICKS {
        let f = k as f64 / (TICKS - 1) as f64;
        let (px, py) = (LEFT + f * pw, TOP + ph - f * ph);
        writeln!(s, r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}"/>"#, TOP + ph, TOP + ph + 4.0).unwrap();
        writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}"/>"#, LEFT - 4.0).unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(s, r#"<g class="tick-labels" fill="black">"#).unwrap();
    for k in 0..TICKS {
        let f = k as f64 / (TICKS - 1) as f64;
        let (px, py) = (LEFT + f * pw, TOP + ph - f * ph);
        writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 16.0,
            tick_label(x0 + f * (x1 - x0))
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py + 4.0,
            tick_label(y0 + f * (y1 - y0))
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">z1</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">z2</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .unwrap();
    writeln!(s, "</g>").unwrap();

    writeln!(s, r#"<g class="points" fill-opacity="0.8">"#).unwrap();
    for (&(x, y), &c) in data.points.iter().zip(data.labels) {
        writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#, sx(x), sy(y), colour(c)).unwrap();
    }
    writeln!(s, "</g>").unwrap();

    writeln!(s, r#"<g class="legend">"#).unwrap();
    let lx = LEFT + pw + 20.0;
    for (c, name) in data.classes.iter().enumerate() {
        let ly = TOP + 16.0 * c as f64;
        writeln!(s, r#"<rect x="{lx:.2}" y="{ly:.2}" width="10" height="10" fill="{}"/>"#, colour(c)).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 16.0, ly + 9.0, escape(name)).unwrap();
    }
    writeln!(s, "</g>").unwrap();
    s.push_str("</svg>\n");
    s
}
