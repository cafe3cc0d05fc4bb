//! Hand-emitted SVG scatter plots, no plotting dependency.
//!
//! Fixed 640×480 viewBox with margins, ticks at round steps, a legend,
//! and one circle per point. Highlighted points (the unmodified
//! baseline) render as larger black diamonds.

/// One scatter point; `series` indexes into the series name list.
#[derive(Debug, Clone, Copy)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub series: usize,
    pub highlight: bool,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 45.0;
const MARGIN_BOTTOM: f64 = 55.0;

const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

/// A tick step of the form {1, 2, 5}·10^k so that the range yields a
/// handful of ticks.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.abs().log10().floor());
    let norm = raw / mag;
    let factor = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    factor * mag
}

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = (hi - lo) * 0.08;
    (lo - pad, hi + pad)
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    if trimmed.is_empty() || trimmed == "-" {
        "0".to_string()
    } else {
        trimmed.to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render a scatter plot. Points carry a series index for the legend and
/// an optional highlight.
pub fn scatter_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series_names: &[&str],
    points: &[ScatterPoint],
) -> String {
    let (x_lo, x_hi) = axis_range(points.iter().map(|p| p.x));
    let (y_lo, y_hi) = axis_range(points.iter().map(|p| p.y));
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        (
            MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w,
            MARGIN_TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h,
        )
    };

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        escape(title)
    ));
    // Frame.
    s.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP),
        fmt(plot_w),
        fmt(plot_h)
    ));

    // Ticks and gridlines.
    let x_step = tick_step(x_hi - x_lo);
    let mut t = (x_lo / x_step).ceil() * x_step;
    while t <= x_hi + 1e-12 {
        let (px, _) = to_px(t, y_lo);
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#ddd\"/>\n",
            fmt(px),
            fmt(MARGIN_TOP),
            fmt(MARGIN_TOP + plot_h)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(px),
            fmt(MARGIN_TOP + plot_h + 18.0),
            fmt_tick(t)
        ));
        t += x_step;
    }
    let y_step = tick_step(y_hi - y_lo);
    let mut t = (y_lo / y_step).ceil() * y_step;
    while t <= y_hi + 1e-12 {
        let (_, py) = to_px(x_lo, t);
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"#ddd\"/>\n",
            fmt(MARGIN_LEFT),
            fmt(MARGIN_LEFT + plot_w),
            fmt(py)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_LEFT - 6.0),
            fmt(py + 4.0),
            fmt_tick(t)
        ));
        t += y_step;
    }

    // Zero lines when the range crosses zero.
    if x_lo < 0.0 && x_hi > 0.0 {
        let (px, _) = to_px(0.0, y_lo);
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#999\" stroke-dasharray=\"4,3\"/>\n",
            fmt(px),
            fmt(MARGIN_TOP),
            fmt(MARGIN_TOP + plot_h)
        ));
    }
    if y_lo < 0.0 && y_hi > 0.0 {
        let (_, py) = to_px(x_lo, 0.0);
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"#999\" stroke-dasharray=\"4,3\"/>\n",
            fmt(MARGIN_LEFT),
            fmt(MARGIN_LEFT + plot_w),
            fmt(py)
        ));
    }

    // Axis labels.
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 12.0),
        escape(x_label)
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 16 {})\">{}</text>\n",
        fmt(MARGIN_TOP + plot_h / 2.0),
        fmt(MARGIN_TOP + plot_h / 2.0),
        escape(y_label)
    ));

    // Points: plain series first so highlights stay visible.
    for p in points.iter().filter(|p| !p.highlight) {
        let (px, py) = to_px(p.x, p.y);
        let color = SERIES_COLORS[p.series % SERIES_COLORS.len()];
        s.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
            fmt(px),
            fmt(py),
            color
        ));
    }
    for p in points.iter().filter(|p| p.highlight) {
        let (px, py) = to_px(p.x, p.y);
        s.push_str(&format!(
            "<path d=\"M {} {} l 7 7 l -7 7 l -7 -7 Z\" fill=\"black\"/>\n",
            fmt(px),
            fmt(py - 7.0)
        ));
    }

    // Legend.
    let legend_x = MARGIN_LEFT + plot_w + 14.0;
    let mut legend_y = MARGIN_TOP + 10.0;
    for (i, name) in series_names.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        s.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"{}\"/>\n",
            fmt(legend_x),
            fmt(legend_y),
            color
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            fmt(legend_x + 10.0),
            fmt(legend_y + 4.0),
            escape(name)
        ));
        legend_y += 20.0;
    }
    if points.iter().any(|p| p.highlight) {
        s.push_str(&format!(
            "<path d=\"M {} {} l 6 6 l -6 6 l -6 -6 Z\" fill=\"black\"/>\n",
            fmt(legend_x),
            fmt(legend_y - 6.0)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">baseline</text>\n",
            fmt(legend_x + 10.0),
            fmt(legend_y + 4.0)
        ));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emits_wellformed_markup_with_all_points() {
        let points = vec![
            ScatterPoint { x: 0.1, y: 1.2, series: 0, highlight: false },
            ScatterPoint { x: -0.3, y: 0.4, series: 1, highlight: false },
            ScatterPoint { x: 0.0, y: 0.9, series: 0, highlight: true },
        ];
        let svg = scatter_svg(
            "gap vs effect",
            "performance gap",
            "effect size",
            &["preprocessing", "postprocessing"],
            &points,
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("viewBox=\"0 0 640 480\""));
        assert_eq!(svg.matches("<circle").count(), 2 + 2); // points + legend
        assert_eq!(svg.matches("<path").count(), 2); // highlight + legend
        assert!(svg.contains("performance gap"));
        assert!(svg.contains("effect size"));
    }

    #[test]
    fn degenerate_ranges_do_not_divide_by_zero() {
        let points = vec![ScatterPoint { x: 0.5, y: 0.5, series: 0, highlight: false }];
        let svg = scatter_svg("one", "x", "y", &["s"], &points);
        assert!(!svg.contains("NaN"));
        assert!(!svg.contains("inf"));
    }

    #[test]
    fn tick_steps_are_round() {
        assert_eq!(tick_step(1.0), 0.2);
        assert_eq!(tick_step(10.0), 2.0);
        assert_eq!(tick_step(0.03), 0.005);
    }
}
