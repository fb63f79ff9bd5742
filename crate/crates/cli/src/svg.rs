//! Self-contained SVG 1.1 plotting: polyline charts and grid heatmaps,
//! no external plotting dependency.

use std::fmt::Write;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 86.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 42.0;
const MARGIN_B: f64 = 58.0;

const SERIES_COLORS: [&str; 6] =
    ["#1f5fae", "#c23b22", "#2e8b57", "#8a2be2", "#b8860b", "#444444"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers instead of a continuous line.
    pub markers: bool,
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    } * mag;
    let first = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = first;
    while t <= hi + 0.5 * step {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    }
}

/// A line/marker chart of several series over a common x axis.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(x);
            ys.push(y);
        }
    }
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let pad = 0.06 * (y_hi - y_lo).max(1e-300);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);

    let to_px = |x: f64, y: f64| {
        let px = MARGIN_L + (x - x_lo) / (x_hi - x_lo).max(1e-300) * (WIDTH - MARGIN_L - MARGIN_R);
        let py =
            HEIGHT - MARGIN_B - (y - y_lo) / (y_hi - y_lo).max(1e-300) * (HEIGHT - MARGIN_T - MARGIN_B);
        (px, py)
    };

    let mut svg = String::new();
    header(&mut svg, title);
    axes(&mut svg, x_label, y_label, x_lo, x_hi, y_lo, y_hi, &to_px);

    for (si, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        if s.markers {
            for &(x, y) in &s.points {
                let (px, py) = to_px(x, y);
                let _ = write!(
                    svg,
                    r#"<circle cx="{px:.2}" cy="{py:.2}" r="3.2" fill="{color}"/>"#
                );
            }
        } else {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| {
                    let (px, py) = to_px(x, y);
                    format!("{px:.2},{py:.2}")
                })
                .collect();
            let _ = write!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
                pts.join(" ")
            );
        }
        // legend entry
        let ly = MARGIN_T + 6.0 + 18.0 * si as f64;
        let _ = write!(
            svg,
            r#"<rect x="{:.1}" y="{ly:.1}" width="14" height="4" fill="{color}"/><text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
            WIDTH - MARGIN_R - 170.0,
            WIDTH - MARGIN_R - 150.0,
            ly + 5.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Heatmap of `values[i][j]` on the grid `x_nodes × y_nodes`, blue at the
/// minimum through white to red at the maximum.
pub fn heatmap(
    title: &str,
    x_label: &str,
    y_label: &str,
    x_nodes: &[f64],
    y_nodes: &[f64],
    values: &[Vec<f64>],
) -> String {
    let flat: Vec<f64> = values.iter().flat_map(|r| r.iter().copied()).collect();
    let (lo, hi) = bounds(&flat);
    let span = (hi - lo).max(1e-300);
    let cell_w = (WIDTH - MARGIN_L - MARGIN_R) / x_nodes.len() as f64;
    let cell_h = (HEIGHT - MARGIN_T - MARGIN_B) / y_nodes.len() as f64;

    let mut svg = String::new();
    header(&mut svg, title);
    for (i, _) in x_nodes.iter().enumerate() {
        for (j, _) in y_nodes.iter().enumerate() {
            let v = (values[i][j] - lo) / span;
            let (r, g, b) = diverging_color(v);
            let px = MARGIN_L + i as f64 * cell_w;
            let py = HEIGHT - MARGIN_B - (j + 1) as f64 * cell_h;
            let _ = write!(
                svg,
                r#"<rect x="{px:.2}" y="{py:.2}" width="{cell_w:.2}" height="{cell_h:.2}" fill="rgb({r},{g},{b})"/>"#
            );
        }
    }
    // axis labels on node centers (thinned to at most 9 labels per axis)
    let x_stride = (x_nodes.len() / 9).max(1);
    for (i, &x) in x_nodes.iter().enumerate().step_by(x_stride) {
        let px = MARGIN_L + (i as f64 + 0.5) * cell_w;
        let _ = write!(
            svg,
            r#"<text x="{px:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN_B + 16.0,
            fmt_tick(x)
        );
    }
    let y_stride = (y_nodes.len() / 9).max(1);
    for (j, &y) in y_nodes.iter().enumerate().step_by(y_stride) {
        let py = HEIGHT - MARGIN_B - (j as f64 + 0.5) * cell_h;
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            py + 4.0,
            fmt_tick(y)
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"#,
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );
    let _ = write!(
        svg,
        r#"<text x="18" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11">min {} / max {}</text>"#,
        MARGIN_L,
        MARGIN_T - 8.0,
        fmt_tick(lo),
        fmt_tick(hi)
    );
    svg.push_str("</svg>\n");
    svg
}

fn diverging_color(v: f64) -> (u8, u8, u8) {
    let v = v.clamp(0.0, 1.0);
    if v < 0.5 {
        let w = v / 0.5;
        (
            (49.0 + w * (255.0 - 49.0)) as u8,
            (102.0 + w * (255.0 - 102.0)) as u8,
            (176.0 + w * (255.0 - 176.0)) as u8,
        )
    } else {
        let w = (v - 0.5) / 0.5;
        (
            255.0 as u8,
            (255.0 - w * (255.0 - 70.0)) as u8,
            (255.0 - w * (255.0 - 60.0)) as u8,
        )
    }
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi.is_finite() {
        if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    } else {
        (0.0, 1.0)
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = write!(
        svg,
        concat!(
            r#"<?xml version="1.0" encoding="UTF-8"?>"#,
            "\n",
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="Helvetica, Arial, sans-serif">"#,
            r#"<rect width="{w}" height="{h}" fill="white"/>"#,
            r#"<text x="{tx:.1}" y="24" font-size="15" text-anchor="middle">{title}</text>"#
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = WIDTH / 2.0,
        title = escape(title),
    );
}

#[allow(clippy::too_many_arguments)]
fn axes(
    svg: &mut String,
    x_label: &str,
    y_label: &str,
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
    to_px: &impl Fn(f64, f64) -> (f64, f64),
) {
    let _ = write!(
        svg,
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333" stroke-width="1"/>"##,
        MARGIN_L,
        MARGIN_T,
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    );
    for t in nice_ticks(x_lo, x_hi, 7) {
        let (px, _) = to_px(t, y_lo);
        let _ = write!(
            svg,
            concat!(
                r##"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{y1:.1}" stroke="#ccc" stroke-width="0.6"/>"##,
                r#"<text x="{px:.1}" y="{ty:.1}" font-size="11" text-anchor="middle">{label}</text>"#
            ),
            px = px,
            y0 = MARGIN_T,
            y1 = HEIGHT - MARGIN_B,
            ty = HEIGHT - MARGIN_B + 16.0,
            label = fmt_tick(t),
        );
    }
    for t in nice_ticks(y_lo, y_hi, 7) {
        let (_, py) = to_px(x_lo, t);
        let _ = write!(
            svg,
            concat!(
                r##"<line x1="{x0:.1}" y1="{py:.1}" x2="{x1:.1}" y2="{py:.1}" stroke="#ccc" stroke-width="0.6"/>"##,
                r#"<text x="{tx:.1}" y="{ty:.1}" font-size="11" text-anchor="end">{label}</text>"#
            ),
            x0 = MARGIN_L,
            x1 = WIDTH - MARGIN_R,
            py = py,
            tx = MARGIN_L - 6.0,
            ty = py + 4.0,
            label = fmt_tick(t),
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"#,
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );
    let _ = write!(
        svg,
        r#"<text x="18" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_wellformed_svg() {
        let s = line_chart(
            "quotes",
            "inventory",
            "offset",
            &[
                Series {
                    label: "bid".into(),
                    points: vec![(-2.0, 1.0), (0.0, 0.5), (2.0, 0.2)],
                    markers: true,
                },
                Series {
                    label: "approximation".into(),
                    points: vec![(-2.0, 0.9), (2.0, 0.3)],
                    markers: false,
                },
            ],
        );
        assert!(s.starts_with("<?xml"));
        assert!(s.contains(r#"version="1.1""#));
        assert!(s.trim_end().ends_with("</svg>"));
        assert!(s.contains("polyline"));
        assert!(s.contains("circle"));

        let h = heatmap(
            "surface",
            "q1",
            "q2",
            &[-1.0, 0.0, 1.0],
            &[-1.0, 0.0, 1.0],
            &[vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]],
        );
        assert!(h.starts_with("<?xml") && h.trim_end().ends_with("</svg>"));
        assert!(h.matches("<rect").count() > 9);
    }

    #[test]
    fn ticks_cover_the_range() {
        let ticks = nice_ticks(-1.3, 2.7, 7);
        assert!(ticks.first().unwrap() >= &-1.3);
        assert!(ticks.last().unwrap() <= &2.71);
        assert!(ticks.len() >= 4);
    }
}
