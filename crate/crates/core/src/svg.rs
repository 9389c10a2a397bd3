//! Minimal static SVG renderings of the plot-data files.

use std::fmt::Write;

use crate::analysis::{BoxStats, Histogram, HdiInterval, SurfacePoint};
use crate::anova::FinitePopSd;
use crate::data::MachineId;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = write!(body, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = write!(
            body,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        Canvas { body }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = write!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}" stroke="black" stroke-width="0.5"/>"#,
            w.max(0.0),
            h.max(0.0)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, width: f64) {
        let _ = write!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="black" stroke-width="{width}"/>"#
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64) {
        let _ = write!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="none" stroke="black"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = write!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear map from `[lo, hi]` to `[a, b]`; degenerate ranges map to the midpoint.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        0.5 * (a + b)
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Horizontal forest plot: thick 50% bar, thin 95% line, dot at the median.
pub fn forest(title: &str, sds: &[FinitePopSd]) -> String {
    let mut c = Canvas::new(title);
    let (lo, hi) = span(sds.iter().flat_map(|s| [0.0, s.summary.l95, s.summary.u95]));
    let x = |v: f64| scale(v, lo, hi, PAD + 30.0, W - PAD);
    let row_h = (H - 2.0 * PAD) / sds.len().max(1) as f64;
    for (i, s) in sds.iter().enumerate() {
        let y = PAD + (i as f64 + 0.5) * row_h;
        c.text(PAD + 20.0, y + 4.0, "end", s.factor.label());
        c.line(x(s.summary.l95), y, x(s.summary.u95), y, 1.0);
        c.line(x(s.summary.l50), y, x(s.summary.u50), y, 4.0);
        c.circle(x(s.summary.median), y, 3.0);
    }
    c.line(x(lo), H - PAD, x(hi), H - PAD, 1.0);
    c.text(x(lo), H - PAD + 14.0, "middle", &format!("{lo:.3}"));
    c.text(x(hi), H - PAD + 14.0, "middle", &format!("{hi:.3}"));
    c.finish()
}

/// One box per machine with Tukey whiskers and outlier circles.
pub fn boxplot(title: &str, boxes: &[(MachineId, BoxStats)]) -> String {
    let mut c = Canvas::new(title);
    let (lo, hi) = span(boxes.iter().flat_map(|(_, b)| {
        b.outliers.iter().copied().chain([b.min, b.max]).collect::<Vec<_>>()
    }));
    let y = |v: f64| scale(v, lo, hi, H - PAD, PAD);
    let slot = (W - 2.0 * PAD) / boxes.len().max(1) as f64;
    for (i, (machine, b)) in boxes.iter().enumerate() {
        let cx = PAD + (i as f64 + 0.5) * slot;
        let half = slot * 0.2;
        c.line(cx, y(b.min), cx, y(b.q1), 1.0);
        c.line(cx, y(b.q3), cx, y(b.max), 1.0);
        c.line(cx - half / 2.0, y(b.min), cx + half / 2.0, y(b.min), 1.0);
        c.line(cx - half / 2.0, y(b.max), cx + half / 2.0, y(b.max), 1.0);
        c.rect(cx - half, y(b.q3), 2.0 * half, y(b.q1) - y(b.q3), "#cfd8e8");
        c.line(cx - half, y(b.median), cx + half, y(b.median), 2.0);
        for &o in &b.outliers {
            c.circle(cx, y(o), 2.5);
        }
        c.text(cx, H - PAD + 16.0, "middle", &format!("Machine {machine}"));
    }
    c.text(PAD - 4.0, y(lo), "end", &format!("{lo:.3}"));
    c.text(PAD - 4.0, y(hi), "end", &format!("{hi:.3}"));
    c.finish()
}

/// Density histogram with the HDI bins shaded.
pub fn histogram(title: &str, hist: &Histogram, hdi: &HdiInterval) -> String {
    let mut c = Canvas::new(title);
    let n = hist.counts.len();
    if n == 0 {
        return c.finish();
    }
    let (lo, hi) = (hist.edges[0], hist.edges[n]);
    let dmax = (0..n).map(|i| hist.density(i)).fold(0.0, f64::max);
    let x = |v: f64| scale(v, lo, hi, PAD, W - PAD);
    let y = |v: f64| scale(v, 0.0, dmax, H - PAD, PAD);
    for i in 0..n {
        let mid = 0.5 * (hist.edges[i] + hist.edges[i + 1]);
        let fill = if hdi.contains(mid) { "#8fb0d8" } else { "#dddddd" };
        let d = hist.density(i);
        c.rect(x(hist.edges[i]), y(d), x(hist.edges[i + 1]) - x(hist.edges[i]), y(0.0) - y(d), fill);
    }
    c.line(PAD, H - PAD, W - PAD, H - PAD, 1.0);
    c.text(x(lo), H - PAD + 14.0, "middle", &format!("{lo:.3}"));
    c.text(x(hi), H - PAD + 14.0, "middle", &format!("{hi:.3}"));
    c.finish()
}

/// Heat map of one response over a regular grid, darker = larger.
pub fn heatmap(title: &str, grid: &[SurfacePoint], value: impl Fn(&SurfacePoint) -> f64) -> String {
    let mut c = Canvas::new(title);
    let mut xs: Vec<f64> = grid.iter().map(|p| p.xa).collect();
    let mut ys: Vec<f64> = grid.iter().map(|p| p.xb).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    if xs.is_empty() || ys.is_empty() {
        return c.finish();
    }
    let (vlo, vhi) = span(grid.iter().map(&value));
    let cw = (W - 2.0 * PAD) / xs.len() as f64;
    let ch = (H - 2.0 * PAD) / ys.len() as f64;
    for p in grid {
        let i = xs.partition_point(|v| *v < p.xa);
        let j = ys.partition_point(|v| *v < p.xb);
        let t = scale(value(p), vlo, vhi, 0.0, 1.0);
        let shade = (255.0 * (1.0 - 0.85 * t)).round() as u8;
        let fill = format!("rgb({shade},{shade},255)");
        let _ = write!(
            c.body,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            PAD + i as f64 * cw,
            H - PAD - (j + 1) as f64 * ch,
            cw + 0.05,
            ch + 0.05
        );
    }
    c.text(PAD, H - PAD + 14.0, "start", &format!("{:.4}", xs[0]));
    c.text(W - PAD, H - PAD + 14.0, "end", &format!("{:.4}", xs[xs.len() - 1]));
    c.text(W / 2.0, H - 6.0, "middle", &format!("range {vlo:.4} to {vhi:.4}"));
    c.finish()
}
