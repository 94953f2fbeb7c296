//! Hand-written SVG line charts with optional ±1 standard deviation bands.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One curve. `spread` draws a shaded band of `y ± spread`; `repeats` is
/// recorded on the element so readers can match it to raw data rows.
#[derive(Debug, Clone, Default)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub spread: Option<Vec<f64>>,
    pub repeats: usize,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        Self { lo, hi, log }
    }

    /// Position in `[0, 1]`; values outside the range are clamped.
    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.max(10f64.powf(self.lo)).log10() } else { v };
        ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let mut out = Vec::new();
            let mut e = self.lo;
            let step = ((self.hi - self.lo) / 6.0).ceil().max(1.0);
            while e <= self.hi + 1e-9 {
                out.push((10f64.powf(e), format!("1e{}", e as i64)));
                e += step;
            }
            out
        } else {
            (0..=5)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (v, format!("{v:.3}"))
                })
                .collect()
        }
    }
}

/// Renders the chart. The y axis is logarithmic when every value is positive.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let log_y = series.iter().flat_map(|s| &s.y).all(|&v| v > 0.0);
    let xs = Axis::new(series.iter().flat_map(|s| s.x.iter().copied()), false);
    let ys = Axis::new(series.iter().flat_map(|s| s.y.iter().copied()), log_y);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |v: f64| LEFT + xs.frac(v) * pw;
    let py = |v: f64| TOP + (1.0 - ys.frac(v)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for (v, label) in xs.ticks() {
        let x = px(v);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{b2}" stroke="black"/><text x="{x:.2}" y="{t}" text-anchor="middle">{label}</text>"##,
            b = TOP + ph,
            b2 = TOP + ph + 5.0,
            t = TOP + ph + 18.0
        );
    }
    for (v, label) in ys.ticks() {
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{l2}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="#dddddd"/><text x="{t}" y="{ty:.2}" text-anchor="end">{label}</text>"##,
            l2 = LEFT,
            r = LEFT + pw,
            t = LEFT - 6.0,
            ty = y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">{}</text>"#,
        escape(y_label),
        y = TOP + ph / 2.0
    );

    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let name = escape(&ser.name);
        if let Some(spread) = &ser.spread {
            let upper = ser.x.iter().zip(&ser.y).zip(spread).map(|((&x, &y), &d)| (x, y + d));
            let lower = ser.x.iter().zip(&ser.y).zip(spread).map(|((&x, &y), &d)| (x, y - d));
            let mut pts: Vec<String> = upper.map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let mut low: Vec<String> = lower.map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            low.reverse();
            pts.extend(low);
            let _ = writeln!(
                s,
                r#"<polygon class="band" data-series="{name}" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                pts.join(" ")
            );
        }
        let pts: Vec<String> = ser
            .x
            .iter()
            .zip(&ser.y)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" data-series="{name}" data-repeats="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            ser.repeats.max(1),
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{name}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
