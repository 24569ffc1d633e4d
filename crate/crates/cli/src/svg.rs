//! Deterministic SVG plots with a fixed view box.

use std::fmt::Write;

use crate::config::PlotKind;
use crate::csv::Table;
use crate::error::CliError;

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 48.0;

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" width=\"{W}\" height=\"{H}\">\n\
         <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        W / 2.0
    )
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: &[f64], ys: &[f64]) -> Self {
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() || !hi.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = span(xs);
        let (y0, y1) = span(ys);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }

    fn axes(&self, xlabel: &str, ylabel: &str) -> String {
        format!(
            "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{xlabel} [{:.4}, {:.4}]</text>\n\
             <text x=\"12\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">{ylabel} [{:.4}, {:.4}]</text>\n",
            W - 2.0 * PAD,
            H - 2.0 * PAD,
            W / 2.0,
            H - 12.0,
            self.x0,
            self.x1,
            H / 2.0,
            H / 2.0,
            self.y0,
            self.y1
        )
    }
}

fn polyline(xs: &[f64], ys: &[f64], title: &str, xlabel: &str, ylabel: &str) -> String {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(x, y)| (*x, *y)).collect();
    let (fx, fy): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let fr = Frame::fit(&fx, &fy);
    let mut s = header(title);
    s.push_str(&fr.axes(xlabel, ylabel));
    let mut d = String::new();
    for (i, (x, y)) in pts.iter().enumerate() {
        let _ = write!(d, "{}{:.3},{:.3}", if i == 0 { "M" } else { " L" }, fr.px(*x), fr.py(*y));
    }
    let _ = writeln!(s, "<path d=\"{d}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>");
    for (x, y) in &pts {
        let _ = writeln!(s, "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"3\" fill=\"steelblue\"/>", fr.px(*x), fr.py(*y));
    }
    s.push_str("</svg>\n");
    s
}

// Pieces of a lifted segment reduced into the unit square.
fn wrapped_pieces(a: [f64; 2], b: [f64; 2]) -> Vec<([f64; 2], [f64; 2])> {
    let mut ts = vec![0.0, 1.0];
    for k in 0..2 {
        let (lo, hi) = (a[k].min(b[k]), a[k].max(b[k]));
        let mut c = lo.floor() + 1.0;
        while c < hi {
            ts.push((c - a[k]) / (b[k] - a[k]));
            c += 1.0;
        }
    }
    ts.sort_by(f64::total_cmp);
    let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    ts.windows(2)
        .filter(|w| w[1] - w[0] > 1e-12)
        .map(|w| {
            let m = at(0.5 * (w[0] + w[1]));
            let s = [m[0].floor(), m[1].floor()];
            let (p, q) = (at(w[0]), at(w[1]));
            ([p[0] - s[0], p[1] - s[1]], [q[0] - s[0], q[1] - s[1]])
        })
        .collect()
}

fn segments_overlay(t: &Table, source: &str) -> Result<String, CliError> {
    let ax = t.column(source, "anchor_x")?;
    let ay = t.column(source, "anchor_y")?;
    let dx = t.column(source, "dir_x")?;
    let dy = t.column(source, "dir_y")?;
    let len = t.column(source, "length")?;
    let fr = Frame { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
    let mut s = header("segments");
    s.push_str(&fr.axes("x", "y"));
    for i in 0..ax.len() {
        let b = [ax[i] + len[i] * dx[i], ay[i] + len[i] * dy[i]];
        for (p, q) in wrapped_pieces([ax[i], ay[i]], b) {
            let _ = writeln!(
                s,
                "<line x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\" stroke=\"firebrick\" stroke-width=\"1\"/>",
                fr.px(p[0]),
                fr.py(p[1]),
                fr.px(q[0]),
                fr.py(q[1])
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Render a CSV table as one of the fixed plot kinds.
pub fn render_svg(t: &Table, source: &str, kind: PlotKind) -> Result<String, CliError> {
    match kind {
        PlotKind::SegmentsOverlay => segments_overlay(t, source),
        PlotKind::SemilogDecay => {
            let xcol = t.header.first().cloned().unwrap_or_default();
            let ycol = t.header.get(1).cloned().unwrap_or_default();
            let xs = t.column(source, &xcol)?;
            let ys: Vec<f64> = t.column(source, &ycol)?.into_iter().map(|v| v.abs().log10()).collect();
            Ok(polyline(&xs, &ys, "semilog decay", &xcol, &format!("log10 |{ycol}|")))
        }
        PlotKind::MassVsLogN => {
            let xs: Vec<f64> = t.column(source, "N")?.into_iter().map(f64::ln).collect();
            let ys = t.column(source, "mass")?;
            Ok(polyline(&xs, &ys, "cumulative mass", "log N", "mass"))
        }
    }
}
