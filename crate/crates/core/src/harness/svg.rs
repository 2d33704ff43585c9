//! Minimal self-contained SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Half-width of a shaded band around each point.
    pub spread: Option<Vec<f64>>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 1.0, hi + 1.0)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = span(&mut xs.clone());
        let (y0, y1) = span(&mut ys.clone());
        let pad = (y1 - y0) * 0.05;
        Self { x0, x1, y0: y0 - pad, y1: y1 + pad }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        W / 2.0,
        escape(title),
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0,
        escape(xlabel),
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0,
        escape(ylabel)
    );
}

fn axes(out: &mut String, f: &Frame, x_ticks: bool) {
    let _ = writeln!(
        out,
        "<path d=\"M{LEFT} {TOP}V{}H{}\" fill=\"none\" stroke=\"black\"/>",
        H - BOTTOM,
        W - RIGHT
    );
    for i in 0..=4 {
        let y = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let _ = writeln!(out, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", LEFT - 6.0, f.py(y) + 4.0, tick(y));
        if x_ticks {
            let x = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
            let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>", f.px(x), H - BOTTOM + 16.0, tick(x));
        }
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v.fract() == 0.0 && v.abs() < 1e15) {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(out: &mut String, labels: &[&str]) {
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 6.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{}\" y=\"{y}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            W - RIGHT - 170.0,
            PALETTE[i % PALETTE.len()],
            W - RIGHT - 155.0,
            y + 9.0,
            escape(label)
        );
    }
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|s| {
        s.points.iter().enumerate().flat_map(move |(i, p)| {
            let d = s.spread.as_ref().map_or(0.0, |v| v[i]);
            [p.1 - d, p.1 + d]
        })
    });
    let f = Frame::fit(xs, ys);
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel);
    axes(&mut out, &f, true);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some(spread) = &s.spread {
            if !s.points.is_empty() {
                let mut d = String::new();
                for (k, p) in s.points.iter().enumerate() {
                    let _ = write!(d, "{}{:.1} {:.1}", if k == 0 { "M" } else { "L" }, f.px(p.0), f.py(p.1 + spread[k]));
                }
                for (k, p) in s.points.iter().enumerate().rev() {
                    let _ = write!(d, "L{:.1} {:.1}", f.px(p.0), f.py(p.1 - spread[k]));
                }
                let _ = writeln!(out, "<path d=\"{d}Z\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>");
            }
        }
        let pts: Vec<String> = s.points.iter().map(|p| format!("{:.1},{:.1}", f.px(p.0), f.py(p.1))).collect();
        let _ = writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", pts.join(" "));
    }
    let labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

/// Points with the identity line drawn for reference.
pub fn scatter_with_diagonal(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
    let all = points.iter().flat_map(|p| [p.0, p.1]);
    let f = Frame::fit(all.clone(), all);
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel);
    axes(&mut out, &f, true);
    let lo = f.x0.max(f.y0);
    let hi = f.x1.min(f.y1);
    let _ = writeln!(
        out,
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
        f.px(lo),
        f.py(lo),
        f.px(hi),
        f.py(hi)
    );
    for p in points {
        let _ = writeln!(out, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2\" fill=\"{}\"/>", f.px(p.0), f.py(p.1), PALETTE[0]);
    }
    out.push_str("</svg>\n");
    out
}

/// Bars `(label, value, error)` in the given order; error bars when non-zero.
pub fn bar_chart(title: &str, ylabel: &str, bars: &[(String, f64, f64)]) -> String {
    let ys = bars.iter().flat_map(|b| [b.1 - b.2, b.1 + b.2, 0.0]);
    let f = Frame::fit([0.0].into_iter(), ys).with_x(0.0, bars.len().max(1) as f64);
    let mut out = String::new();
    header(&mut out, title, "", ylabel);
    axes(&mut out, &f, false);
    let slot = (W - LEFT - RIGHT) / bars.len().max(1) as f64;
    for (i, (label, value, err)) in bars.iter().enumerate() {
        let x = LEFT + slot * (i as f64 + 0.15);
        let (top, bottom) = (f.py(value.max(0.0)), f.py(value.min(0.0)));
        let _ = writeln!(
            out,
            "<rect x=\"{x:.1}\" y=\"{top:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"/>",
            slot * 0.7,
            (bottom - top).max(0.5),
            PALETTE[i % PALETTE.len()]
        );
        let cx = x + slot * 0.35;
        if *err > 0.0 {
            let _ = writeln!(
                out,
                "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
                f.py(value + err),
                f.py(value - err)
            );
        }
        let _ = writeln!(out, "<text x=\"{cx:.1}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>", H - BOTTOM + 16.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}

impl Frame {
    fn with_x(mut self, x0: f64, x1: f64) -> Self {
        self.x0 = x0;
        self.x1 = x1;
        self
    }
}
