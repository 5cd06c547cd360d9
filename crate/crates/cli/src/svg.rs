//! Minimal SVG 1.1 line plots on a fixed 800x600 canvas; log axes where a
//! quantity spans decades. No plotting dependency, just shapes and text.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 70.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    let abs = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if (0.01..10_000.0).contains(&abs) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.1e}")
    }
}

impl LinePlot {
    pub fn render(&self) -> String {
        let finite = |v: f64| v.is_finite();
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                if finite(x) && finite(y) && (!self.log_x || x > 0.0) && (!self.log_y || y > 0.0) {
                    xs.push(x);
                    ys.push(y);
                }
            }
        }
        let (x_min, x_max) = range(&xs, self.log_x);
        let (y_min, y_max) = range(&ys, self.log_y);

        let transform = |v: f64, lo: f64, hi: f64, log: bool| -> f64 {
            let (v, lo, hi) = if log {
                (v.ln(), lo.ln(), hi.ln())
            } else {
                (v, lo, hi)
            };
            (v - lo) / (hi - lo)
        };
        let px = |x: f64| MARGIN_LEFT + transform(x, x_min, x_max, self.log_x) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT);
        let py = |y: f64| HEIGHT - MARGIN_BOTTOM - transform(y, y_min, y_max, self.log_y) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);

        let mut svg = String::new();
        write!(
            svg,
            r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>
"#
        )
        .unwrap();
        write!(
            svg,
            r#"<text x="{}" y="28" font-family="sans-serif" font-size="18" text-anchor="middle">{}</text>
"#,
            WIDTH / 2.0,
            escape(&self.title)
        )
        .unwrap();

        // Axes.
        let x0 = MARGIN_LEFT;
        let x1 = WIDTH - MARGIN_RIGHT;
        let y0 = HEIGHT - MARGIN_BOTTOM;
        let y1 = MARGIN_TOP;
        write!(
            svg,
            r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>
<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>
"#
        )
        .unwrap();

        for (value, frac_label) in ticks(x_min, x_max, self.log_x) {
            let x = px(value);
            write!(
                svg,
                r##"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/>
<line x1="{x}" y1="{y0}" x2="{x}" y2="{y1}" stroke="#dddddd" stroke-dasharray="3,4"/>
<text x="{x}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>
"##,
                y0 + 6.0,
                y0 + 22.0,
                escape(&frac_label)
            )
            .unwrap();
        }
        for (value, label) in ticks(y_min, y_max, self.log_y) {
            let y = py(value);
            write!(
                svg,
                r##"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/>
<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#dddddd" stroke-dasharray="3,4"/>
<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>
"##,
                x0 - 6.0,
                x0 - 10.0,
                y + 4.0,
                escape(&label)
            )
            .unwrap();
        }
        write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>
<text x="22" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 22 {})">{}</text>
"#,
            (x0 + x1) / 2.0,
            HEIGHT - 18.0,
            escape(&self.x_label),
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        )
        .unwrap();

        // Series and legend.
        for (si, series) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let mut path = String::new();
            for &(x, y) in series
                .points
                .iter()
                .filter(|(x, y)| {
                    x.is_finite()
                        && y.is_finite()
                        && (!self.log_x || *x > 0.0)
                        && (!self.log_y || *y > 0.0)
                })
            {
                if path.is_empty() {
                    write!(path, "M {:.2} {:.2}", px(x), py(y)).unwrap();
                } else {
                    write!(path, " L {:.2} {:.2}", px(x), py(y)).unwrap();
                }
                write!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>
"#,
                    px(x),
                    py(y)
                )
                .unwrap();
            }
            if !path.is_empty() {
                write!(
                    svg,
                    r#"<path d="{path}" fill="none" stroke="{color}" stroke-width="2"/>
"#
                )
                .unwrap();
            }
            let ly = MARGIN_TOP + 18.0 * si as f64 + 10.0;
            write!(
                svg,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>
<text x="{}" y="{}" font-family="sans-serif" font-size="13">{}</text>
"#,
                x1 + 10.0,
                x1 + 34.0,
                x1 + 40.0,
                ly + 4.0,
                escape(&series.label)
            )
            .unwrap();
        }

        svg.push_str("</svg>\n");
        svg
    }
}

fn range(values: &[f64], log: bool) -> (f64, f64) {
    if values.is_empty() {
        return if log { (1.0, 10.0) } else { (0.0, 1.0) };
    }
    let mut lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        if log {
            lo /= 2.0;
            hi *= 2.0;
        } else {
            lo -= 0.5;
            hi += 0.5;
        }
    } else if !log {
        let pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    } else {
        lo /= 1.2;
        hi *= 1.2;
    }
    (lo, hi)
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    let mut out = Vec::new();
    if log {
        let first = lo.log10().ceil() as i32;
        let last = hi.log10().floor() as i32;
        for e in first..=last {
            let v = 10f64.powi(e);
            out.push((v, format!("1e{e}")));
        }
        if out.len() < 2 {
            out = vec![(lo, tick_label(lo)), (hi, tick_label(hi))];
        }
    } else {
        let count = 5;
        for i in 0..=count {
            let v = lo + (hi - lo) * i as f64 / count as f64;
            out.push((v, tick_label(v)));
        }
    }
    out
}
