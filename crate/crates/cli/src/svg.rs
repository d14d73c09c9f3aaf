//! Minimal SVG emission for quick inspection of histograms and line series.

use std::fmt::Write;

use cdp_core::analysis::Histogram;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 40.0;

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    )
}

pub fn histogram_svg(h: &Histogram) -> String {
    let mut out = header();
    let n = h.counts.len().max(1);
    let max_count = h.counts.iter().cloned().max().unwrap_or(1).max(1) as f64;
    let bar_w = (W - 2.0 * PAD) / n as f64;
    for (i, c) in h.counts.iter().enumerate() {
        let bh = (*c as f64 / max_count) * (H - 2.0 * PAD);
        let x = PAD + i as f64 * bar_w;
        let y = H - PAD - bh;
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"steelblue\" stroke=\"white\"/>",
            x,
            y,
            bar_w,
            bh
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{PAD}\" y=\"{:.1}\" font-size=\"12\">{:.3}</text>",
        H - PAD / 2.0,
        h.min
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\">{:.3}</text>",
        W - PAD,
        H - PAD / 2.0,
        h.max
    );
    out.push_str("</svg>\n");
    out
}

pub fn line_svg(series: &[(f64, f64)]) -> String {
    let mut out = header();
    if !series.is_empty() {
        let xmin = series.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let xmax = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let ymin = series.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let ymax = series.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let xs = |x: f64| PAD + (x - xmin) / (xmax - xmin).max(1e-12) * (W - 2.0 * PAD);
        let ys = |y: f64| H - PAD - (y - ymin) / (ymax - ymin).max(1e-12) * (H - 2.0 * PAD);
        let mut path = String::new();
        for (i, (x, y)) in series.iter().enumerate() {
            let _ = write!(path, "{}{:.1},{:.1} ", if i == 0 { "M" } else { "L" }, xs(*x), ys(*y));
        }
        let _ = writeln!(
            out,
            "<path d=\"{path}\" fill=\"none\" stroke=\"crimson\" stroke-width=\"1.5\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{PAD}\" y=\"{:.1}\" font-size=\"12\">[{ymin:.4}, {ymax:.4}]</text>",
            PAD / 2.0
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_documents_are_well_formed_enough() {
        let h = Histogram {
            counts: vec![1, 5, 2],
            min: 0.0,
            max: 1.0,
        };
        let svg = histogram_svg(&h);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<rect").count(), 4); // background + 3 bars

        let line = line_svg(&[(0.0, 1.0), (1.0, 0.5), (2.0, 0.8)]);
        assert!(line.contains("<path"));
    }
}
