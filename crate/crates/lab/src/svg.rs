//! Self-contained SVG plots.

use std::fmt::Write;

use crate::study::{ConvergenceReport, Measure};

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (mut x0, mut x1) = bounds(xs);
        let (mut y0, mut y1) = bounds(ys);
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n\
         <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
        W / 2.0,
        escape(title),
        W / 2.0,
        H - 12.0,
        escape(xlabel),
        H / 2.0,
        H / 2.0,
        escape(ylabel),
        W - 2.0 * PAD,
        H - 2.0 * PAD,
    );
}

fn axis_ticks(out: &mut String, f: &Frame, xfmt: impl Fn(f64) -> String, yfmt: impl Fn(f64) -> String) {
    for k in 0..=4 {
        let x = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
        let y = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            f.px(x),
            H - PAD + 16.0,
            escape(&xfmt(x))
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            PAD - 4.0,
            f.py(y) + 4.0,
            escape(&yfmt(y))
        );
    }
}

fn polyline(out: &mut String, f: &Frame, pts: &[(f64, f64)], class: &str, colour: &str, dash: bool, label: &str) {
    let mut p = String::new();
    for &(x, y) in pts {
        let _ = write!(p, "{:.2},{:.2} ", f.px(x), f.py(y));
    }
    let _ = writeln!(
        out,
        "<polyline class=\"{class}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.6\"{} points=\"{}\"><title>{}</title></polyline>",
        if dash { " stroke-dasharray=\"5,4\"" } else { "" },
        p.trim_end(),
        escape(label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-log error curves at step `t`: one polyline per test function and
/// moment order, plus dashed reference slopes −1 and −2.
pub fn convergence_plot(report: &ConvergenceReport, t: usize) -> String {
    let mut series = Vec::new();
    let mut moments = report.config.study.moments.clone();
    moments.sort_unstable();
    moments.dedup();
    let phis: Vec<String> = {
        let mut v: Vec<String> = Vec::new();
        for c in &report.filtered {
            if !v.contains(&c.phi) {
                v.push(c.phi.clone());
            }
        }
        v
    };
    for phi in &phis {
        for &p in &moments {
            let pts: Vec<(f64, f64)> = report
                .filtered
                .iter()
                .filter(|c| &c.phi == phi && c.t == t)
                .map(|c| ((c.n as f64).log2(), (if p == 2 { c.mse } else { c.l4 }).log2()))
                .filter(|(_, y)| y.is_finite())
                .collect();
            let name = if p == 2 { "mse" } else { "l4" };
            let slope = report
                .fit(phi, Measure::Filtered, p, t)
                .and_then(|r| r.fit)
                .map(|f| format!(" (slope {:.3})", f.slope))
                .unwrap_or_default();
            series.push((format!("{name} {phi}{slope}"), pts));
        }
    }

    let mut refs = Vec::new();
    if let Some((_, first)) = series.iter().find(|(_, p)| !p.is_empty()) {
        let (x0, y0) = first[0];
        let x1 = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).fold(x0, f64::max);
        for slope in [-1.0, -2.0] {
            refs.push((format!("slope {slope}"), vec![(x0, y0), (x1, y0 + slope * (x1 - x0))]));
        }
    }

    let all = series.iter().chain(&refs).flat_map(|(_, p)| p.iter().copied()).collect::<Vec<_>>();
    let frame = Frame::new(all.iter().map(|p| p.0), all.iter().map(|p| p.1));
    let mut out = String::new();
    header(&mut out, &format!("Error moments at t = {t}"), "log2 N", "log2 error moment");
    axis_ticks(&mut out, &frame, |x| format!("{x:.1}"), |y| format!("{y:.1}"));
    for (k, (label, pts)) in series.iter().enumerate() {
        polyline(&mut out, &frame, pts, "series", COLOURS[k % COLOURS.len()], false, label);
    }
    for (label, pts) in &refs {
        polyline(&mut out, &frame, pts, "reference", "#888", true, label);
    }
    legend(&mut out, series.iter().map(|s| s.0.as_str()).chain(refs.iter().map(|r| r.0.as_str())), series.len());
    out.push_str("</svg>\n");
    out
}

fn legend<'a>(out: &mut String, labels: impl Iterator<Item = &'a str>, solid: usize) {
    for (k, label) in labels.enumerate() {
        let y = PAD + 14.0 + 16.0 * k as f64;
        let colour = if k < solid { COLOURS[k % COLOURS.len()] } else { "#888" };
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{colour}\" stroke-width=\"2\"{}/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            W - PAD - 200.0,
            W - PAD - 180.0,
            if k < solid { "" } else { " stroke-dasharray=\"5,4\"" },
            W - PAD - 174.0,
            y + 4.0,
            escape(label)
        );
    }
}

/// Particle histogram (bin probabilities on `[lo, hi)`, overflow last) drawn
/// as densities, overlaid with the grid density.
pub fn histogram_overlay(title: &str, bins: &[f64], lo: f64, hi: f64, grid: &[(f64, f64)]) -> String {
    let nb = bins.len().saturating_sub(1).max(1);
    let width = (hi - lo) / nb as f64;
    let heights: Vec<f64> = bins[..nb].iter().map(|p| p / width).collect();
    let curve: Vec<(f64, f64)> = grid.iter().copied().filter(|&(x, _)| x >= lo && x <= hi).collect();
    let ymax = heights.iter().chain(curve.iter().map(|p| &p.1)).copied().fold(0.0, f64::max);
    let frame = Frame::new([lo, hi].into_iter(), [0.0, ymax * 1.05].into_iter());
    let mut out = String::new();
    header(&mut out, title, "x", "density");
    axis_ticks(&mut out, &frame, |x| format!("{x:.1}"), |y| format!("{y:.2}"));
    for (k, h) in heights.iter().enumerate() {
        let x = lo + k as f64 * width;
        let _ = writeln!(
            out,
            "<rect class=\"bin\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#9ecae1\" stroke=\"#3182bd\" stroke-width=\"0.5\"/>",
            frame.px(x),
            frame.py(*h),
            frame.px(x + width) - frame.px(x),
            frame.py(0.0) - frame.py(*h)
        );
    }
    polyline(&mut out, &frame, &curve, "grid", "#d62728", false, "grid density");
    legend(&mut out, ["grid density"].into_iter(), 1);
    out.push_str("</svg>\n");
    out
}
