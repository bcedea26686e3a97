//! Self-contained log-log convergence plot writer. Emits plain SVG text:
//! decade grid, one polyline with circle markers per series, dashed
//! reference-slope guide lines, and a legend. No plotting dependency,
//! and no timestamps so repeated runs produce identical bytes.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 56.0;

pub struct Series {
    pub label: String,
    pub color: &'static str,
    /// (ndof, value) pairs; non-positive entries are skipped.
    pub points: Vec<(f64, f64)>,
}

/// Dashed guide line `y = c * x^slope` anchored near the last point of the
/// first series.
pub struct RefSlope {
    pub slope: f64,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, lx: f64) -> f64 {
        LEFT + (lx - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }
    fn y(&self, ly: f64) -> f64 {
        HEIGHT - BOTTOM - (ly - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn fmt_pow10(exp: i32) -> String {
    format!("1e{exp}")
}

/// Render a log-log plot of the given series. Returns the SVG text, or
/// `None` when no series holds two or more positive points.
pub fn loglog_plot(title: &str, xlabel: &str, series: &[Series], refs: &[RefSlope]) -> Option<String> {
    let mut lxs: Vec<f64> = Vec::new();
    let mut lys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite() {
                lxs.push(x.log10());
                lys.push(y.log10());
            }
        }
    }
    if lxs.len() < 2 {
        return None;
    }
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).max(0.5);
        (lo - 0.06 * span, hi + 0.06 * span)
    };
    let (x0, x1) = pad(
        lxs.iter().cloned().fold(f64::INFINITY, f64::min),
        lxs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = pad(
        lys.iter().cloned().fold(f64::INFINITY, f64::min),
        lys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let fr = Frame { x0, x1, y0, y1 };

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");

    // Decade grid and tick labels.
    for ex in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let px = fr.x(ex as f64);
        let _ = writeln!(
            out,
            "<line x1=\"{px:.2}\" y1=\"{TOP}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>",
            HEIGHT - BOTTOM
        );
        let _ = writeln!(
            out,
            "<text x=\"{px:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>",
            HEIGHT - BOTTOM + 18.0,
            fmt_pow10(ex)
        );
    }
    for ey in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let py = fr.y(ey as f64);
        let _ = writeln!(
            out,
            "<line x1=\"{LEFT}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" stroke=\"#dddddd\"/>",
            WIDTH - RIGHT
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\" font-family=\"sans-serif\">{}</text>",
            LEFT - 8.0,
            py + 4.0,
            fmt_pow10(ey)
        );
    }
    let _ = writeln!(
        out,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"22\" font-size=\"14\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>",
        (LEFT + WIDTH - RIGHT) / 2.0,
        title
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>",
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 12.0,
        xlabel
    );

    // Reference slopes, anchored near the last point of the first series.
    if let Some(anchor) = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|&&(x, y)| x > 0.0 && y > 0.0)
        .last()
    {
        let (ax, ay) = (anchor.0.log10(), (anchor.1 * 1.6).log10());
        for r in refs {
            let (sx0, sx1) = (x0 + 0.04 * (x1 - x0), x1 - 0.04 * (x1 - x0));
            let ly0 = ay + r.slope * (sx0 - ax);
            let ly1 = ay + r.slope * (sx1 - ax);
            let _ = writeln!(
                out,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#888888\" stroke-dasharray=\"6 4\"/>",
                fr.x(sx0),
                fr.y(ly0),
                fr.x(sx1),
                fr.y(ly1)
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"#666666\" font-family=\"sans-serif\">slope {:.3}</text>",
                fr.x(sx1) - 64.0,
                fr.y(ly1) - 5.0,
                r.slope
            );
        }
    }

    // Series polylines with markers and a legend block.
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|&&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
            .map(|&(x, y)| (fr.x(x.log10()), fr.y(y.log10())))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let path: Vec<String> = pts.iter().map(|(px, py)| format!("{px:.2},{py:.2}")).collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"/>",
            path.join(" "),
            s.color
        );
        for (px, py) in &pts {
            let _ = writeln!(
                out,
                "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2.8\" fill=\"{}\"/>",
                s.color
            );
        }
        let ly = TOP + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{}\" stroke-width=\"1.6\"/>",
            LEFT + 12.0,
            LEFT + 40.0,
            s.color
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>",
            LEFT + 46.0,
            ly + 4.0,
            s.label
        );
    }

    let _ = writeln!(out, "</svg>");
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_wellformed_svg() {
        let s = Series {
            label: "sigma".into(),
            color: "#1f77b4",
            points: vec![(10.0, 1.0), (100.0, 0.3), (1000.0, 0.1)],
        };
        let svg = loglog_plot("test", "ndof", &[s], &[RefSlope { slope: -0.5 }]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("slope -0.500"));
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn degenerate_input_yields_none() {
        let s = Series { label: "x".into(), color: "#000", points: vec![(10.0, 0.0)] };
        assert!(loglog_plot("t", "n", &[s], &[]).is_none());
    }

    #[test]
    fn output_is_deterministic() {
        let mk = || Series {
            label: "err".into(),
            color: "#d62728",
            points: vec![(8.0, 2.0), (32.0, 0.9), (128.0, 0.41)],
        };
        let a = loglog_plot("t", "ndof", &[mk()], &[RefSlope { slope: -0.5 }]).unwrap();
        let b = loglog_plot("t", "ndof", &[mk()], &[RefSlope { slope: -0.5 }]).unwrap();
        assert_eq!(a, b);
    }
}
