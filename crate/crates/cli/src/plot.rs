//! Write-only SVG plots: per-sample ratio scatter and radial profiles.
//! Deterministic string output so identical runs produce identical files.

fn fmt(x: f64) -> String {
    format!("{x:.4}")
}

struct Frame {
    w: f64,
    h: f64,
    margin: f64,
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
    logx: bool,
    logy: bool,
}

impl Frame {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let tx = |v: f64, lo: f64, hi: f64, log: bool| -> f64 {
            if log {
                (v.max(1e-300).ln() - lo.ln()) / (hi.ln() - lo.ln()).max(1e-12)
            } else {
                (v - lo) / (hi - lo).max(1e-300)
            }
        };
        (
            self.margin + tx(x, self.x_lo, self.x_hi, self.logx) * (self.w - 2.0 * self.margin),
            self.h - self.margin
                - tx(y, self.y_lo, self.y_hi, self.logy) * (self.h - 2.0 * self.margin),
        )
    }
}

fn frame_for(points: &[(f64, f64)], logx: bool, logy: bool) -> Frame {
    let finite: Vec<&(f64, f64)> =
        points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &finite {
        x_lo = x_lo.min(*x);
        x_hi = x_hi.max(*x);
        y_lo = y_lo.min(*y);
        y_hi = y_hi.max(*y);
    }
    if !x_lo.is_finite() {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    if x_lo == x_hi {
        x_hi = x_lo + 1.0;
    }
    if y_lo == y_hi {
        y_hi = y_lo + 1.0;
    }
    Frame { w: 640.0, h: 420.0, margin: 48.0, x_lo, x_hi, y_lo, y_hi, logx, logy }
}

fn svg_open(f: &Frame, title: &str, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        f.w, f.h, f.w, f.h
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        f.w - 2.0 * f.margin,
        f.h - 2.0 * f.margin,
        m = f.margin
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        f.w / 2.0,
        title
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        f.w / 2.0,
        f.h - 10.0,
        xlabel
    ));
    s.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n",
        f.h / 2.0,
        f.h / 2.0,
        ylabel
    ));
    s
}

/// Scatter of (scale, ratio) samples, log-log.
pub fn ratio_scatter_svg(points: &[(f64, f64)], title: &str) -> String {
    let f = frame_for(points, true, true);
    let mut s = svg_open(&f, title, "scale", "ratio");
    for (x, y) in points {
        if !x.is_finite() || !y.is_finite() || *y <= 0.0 {
            continue;
        }
        let (px, py) = f.map(*x, *y);
        s.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"#2266aa\" fill-opacity=\"0.7\"/>\n",
            fmt(px),
            fmt(py)
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Radial profile polyline(s): one series per (label, points).
pub fn profile_svg(series: &[(&str, Vec<(f64, f64)>)], title: &str) -> String {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let f = frame_for(&all, true, false);
    let mut s = svg_open(&f, title, "r", "value");
    let colors = ["#2266aa", "#aa3322", "#22aa66", "#aa7722"];
    for (k, (label, pts)) in series.iter().enumerate() {
        let color = colors[k % colors.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| {
                let (px, py) = f.map(*x, *y);
                format!("{},{}", fmt(px), fmt(py))
            })
            .collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            path.join(" "),
            color
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            f.w - f.margin - 120.0,
            f.margin + 16.0 * (k as f64 + 1.0),
            color,
            label
        ));
    }
    s.push_str("</svg>\n");
    s
}
