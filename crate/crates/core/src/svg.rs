//! Minimal static SVG rendering for check histograms and interval plots.
//! Output is plain markup with no timestamps, so identical inputs give
//! byte-identical files.

use crate::ppc::Histogram;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN_LEFT: f64 = 52.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 42.0;

const PALETTE: [&str; 6] = ["#3465a4", "#cc0000", "#4e9a06", "#f57900", "#75507b", "#555753"];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    format!("{v:.3}")
}

/// Replicated-statistic histogram with a solid vertical line at the observed
/// value.
pub fn histogram_svg(hist: &Histogram, observed: f64, title: &str) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let bins = hist.counts.len();
    let lo = *hist.edges.first().unwrap_or(&0.0);
    let hi = *hist.edges.last().unwrap_or(&1.0);
    let span = if hi > lo { hi - lo } else { 1.0 };
    // Keep the observed line inside the frame even when it falls outside the
    // replicated range.
    let x_lo = lo.min(observed) - 0.02 * span;
    let x_hi = hi.max(observed) + 0.02 * span;
    let x_span = x_hi - x_lo;
    let max_count = hist.counts.iter().copied().max().unwrap_or(1).max(1) as f64;

    let to_x = |v: f64| MARGIN_LEFT + (v - x_lo) / x_span * plot_w;
    let to_y = |c: f64| MARGIN_TOP + plot_h - c / max_count * plot_h;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    ));
    for b in 0..bins {
        let x0 = to_x(hist.edges[b]);
        let x1 = to_x(hist.edges[(b + 1).min(hist.edges.len() - 1)]);
        let h = hist.counts[b] as f64 / max_count * plot_h;
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#9bb7d4\" stroke=\"#5b7c9d\" stroke-width=\"0.5\"/>\n",
            fmt(x0),
            fmt(MARGIN_TOP + plot_h - h),
            fmt((x1 - x0).max(0.5)),
            fmt(h)
        ));
    }
    // Observed value.
    let ox = to_x(observed);
    s.push_str(&format!(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\" stroke-width=\"2\"/>\n",
        fmt(ox),
        fmt(MARGIN_TOP),
        fmt(MARGIN_TOP + plot_h)
    ));
    // Axes.
    s.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP + plot_h),
        fmt(MARGIN_LEFT + plot_w),
        fmt(MARGIN_TOP + plot_h)
    ));
    for (v, anchor) in [(x_lo, "start"), (x_hi, "end")] {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"{anchor}\">{}</text>\n",
            fmt(to_x(v)),
            fmt(MARGIN_TOP + plot_h + 16.0),
            fmt_tick(v)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
        fmt(MARGIN_LEFT - 6.0),
        fmt(to_y(max_count) + 4.0),
        max_count as usize
    ));
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone)]
pub struct IntervalPoint {
    pub x: f64,
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone)]
pub struct IntervalSeries {
    pub label: String,
    pub points: Vec<IntervalPoint>,
}

/// Median lines with 5-95% whiskers, one colored series per group.
pub fn interval_plot_svg(
    series: &[IntervalSeries],
    title: &str,
    x_label: &str,
    y_label: &str,
) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT - 90.0; // legend gutter
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for s in series {
        for p in &s.points {
            x_lo = x_lo.min(p.x);
            x_hi = x_hi.max(p.x);
            y_lo = y_lo.min(p.lo);
            y_hi = y_hi.max(p.hi);
        }
    }
    if !(x_hi > x_lo) {
        x_hi = x_lo + 1.0;
    }
    if !(y_hi > y_lo) {
        y_hi = y_lo + 1.0;
    }
    let x_pad = 0.05 * (x_hi - x_lo);
    let y_pad = 0.05 * (y_hi - y_lo);
    let (x_lo, x_hi) = (x_lo - x_pad, x_hi + x_pad);
    let (y_lo, y_hi) = (y_lo - y_pad, y_hi + y_pad);

    let to_x = |v: f64| MARGIN_LEFT + (v - x_lo) / (x_hi - x_lo) * plot_w;
    let to_y = |v: f64| MARGIN_TOP + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_LEFT + plot_w + MARGIN_LEFT) / 2.0,
        xml_escape(title)
    ));

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        // Small horizontal offset keeps overlapping whiskers readable.
        let dx = (si as f64 - (series.len() as f64 - 1.0) / 2.0) * 3.0;
        let mut path = String::new();
        for (pi, p) in s.points.iter().enumerate() {
            let x = to_x(p.x) + dx;
            path.push_str(&format!("{}{},{} ", if pi == 0 { "M" } else { "L" }, fmt(x), fmt(to_y(p.median))));
            out.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"{color}\" stroke-width=\"1.4\"/>\n",
                fmt(x),
                fmt(to_y(p.lo)),
                fmt(to_y(p.hi))
            ));
            out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                fmt(x),
                fmt(to_y(p.median))
            ));
        }
        out.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"/>\n",
            path.trim_end()
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            fmt(MARGIN_LEFT + plot_w + 12.0),
            fmt(MARGIN_TOP + 14.0 * si as f64 + 10.0),
            xml_escape(&s.label)
        ));
    }

    // Axes and corner ticks.
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP + plot_h),
        fmt(MARGIN_LEFT + plot_w),
        fmt(MARGIN_TOP + plot_h)
    ));
    out.push_str(&format!(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP),
        fmt(MARGIN_TOP + plot_h)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 8.0),
        xml_escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n",
        fmt(MARGIN_TOP + plot_h / 2.0),
        fmt(MARGIN_TOP + plot_h / 2.0),
        xml_escape(y_label)
    ));
    for (v, y) in [(y_lo, MARGIN_TOP + plot_h), (y_hi, MARGIN_TOP + 4.0)] {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_LEFT - 5.0),
            fmt(y),
            fmt_tick(v)
        ));
    }
    for (v, anchor) in [(x_lo, "start"), (x_hi, "end")] {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"{anchor}\">{}</text>\n",
            fmt(to_x(v)),
            fmt(MARGIN_TOP + plot_h + 14.0),
            fmt_tick(v)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
