//! Deterministic rendering of miss-rate/FPPI curves to a standalone SVG:
//! log-log axes, one marked polyline per subset, and the log-average miss
//! rate in the legend. Identical inputs produce byte-identical output.

use std::fmt::Write as _;

/// One curve to draw.
pub struct CurveSeries {
    pub name: String,
    pub fppi: Vec<f64>,
    pub miss_rate: Vec<f64>,
    pub log_avg_mr: f64,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 58.0;

/// Axis ranges in log10 units. Miss rates below the y floor (including
/// exact zeros, which a log axis cannot place) are drawn at the floor.
const X_LG: (f64, f64) = (-2.0, 0.0);
const Y_LG: (f64, f64) = (-3.0, 0.0);

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn x_px(fppi: f64) -> f64 {
    let lg = fppi.log10().clamp(X_LG.0, X_LG.1);
    MARGIN_LEFT + (lg - X_LG.0) / (X_LG.1 - X_LG.0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
}

fn y_px(miss_rate: f64) -> f64 {
    let floored = miss_rate.max(10f64.powf(Y_LG.0));
    let lg = floored.log10().clamp(Y_LG.0, Y_LG.1);
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    MARGIN_TOP + (Y_LG.1 - lg) / (Y_LG.1 - Y_LG.0) * plot_h
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the curves; series are colored in order.
pub fn render_curves(series: &[CurveSeries]) -> String {
    let mut s = String::new();
    let plot_right = WIDTH - MARGIN_RIGHT;
    let plot_bottom = HEIGHT - MARGIN_BOTTOM;
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();

    // Decade gridlines with tick labels.
    for decade in (X_LG.0 as i32)..=(X_LG.1 as i32) {
        let x = x_px(10f64.powi(decade));
        writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{MARGIN_TOP}" x2="{x:.2}" y2="{plot_bottom}" stroke="#dddddd" stroke-width="1"/>"##
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
            plot_bottom + 20.0,
            format_decade(decade)
        )
        .unwrap();
    }
    for decade in (Y_LG.0 as i32)..=(Y_LG.1 as i32) {
        let y = y_px(10f64.powi(decade));
        writeln!(
            s,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{plot_right}" y2="{y:.2}" stroke="#dddddd" stroke-width="1"/>"##
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 8.0,
            y + 4.0,
            format_decade(decade)
        )
        .unwrap();
    }

    // Frame and axis titles.
    writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black" stroke-width="1"/>"#,
        plot_right - MARGIN_LEFT,
        plot_bottom - MARGIN_TOP
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle">false positives per image</text>"#,
        (MARGIN_LEFT + plot_right) / 2.0,
        HEIGHT - 14.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 18 {:.2})">miss rate</text>"#,
        (MARGIN_TOP + plot_bottom) / 2.0,
        (MARGIN_TOP + plot_bottom) / 2.0
    )
    .unwrap();

    // Curves with sample markers.
    for (i, curve) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = curve
            .fppi
            .iter()
            .zip(&curve.miss_rate)
            .map(|(&f, &m)| format!("{:.2},{:.2}", x_px(f), y_px(m)))
            .collect();
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        )
        .unwrap();
        for p in &points {
            let (x, y) = p.split_once(',').expect("marker points are x,y pairs");
            writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#).unwrap();
        }
    }

    // Legend, bottom-left inside the plot (the low-FPPI/low-MR corner the
    // curves rarely reach).
    let legend_x = MARGIN_LEFT + 14.0;
    let mut legend_y = plot_bottom - 14.0 - 20.0 * (series.len().saturating_sub(1)) as f64;
    for (i, curve) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        writeln!(
            s,
            r#"<line x1="{legend_x}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="3"/>"#,
            legend_y - 4.0,
            legend_x + 26.0,
            legend_y - 4.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{legend_y:.2}" font-family="sans-serif" font-size="13">{} — log-avg MR {:.4}</text>"#,
            legend_x + 34.0,
            esc(&curve.name),
            curve.log_avg_mr
        )
        .unwrap();
        legend_y += 20.0;
    }

    writeln!(s, "</svg>").unwrap();
    s
}

fn format_decade(decade: i32) -> String {
    format!("{}", 10f64.powi(decade))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<CurveSeries> {
        vec![
            CurveSeries {
                name: "all".into(),
                fppi: vec![0.01, 0.1, 1.0],
                miss_rate: vec![0.9, 0.5, 0.2],
                log_avg_mr: 0.47,
            },
            CurveSeries {
                name: "day".into(),
                fppi: vec![0.01, 0.1, 1.0],
                miss_rate: vec![0.8, 0.4, 0.0],
                log_avg_mr: 0.35,
            },
        ]
    }

    #[test]
    fn output_is_deterministic_and_well_formed() {
        let a = render_curves(&sample());
        let b = render_curves(&sample());
        assert_eq!(a, b);
        assert!(a.starts_with("<svg "));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(a.contains("log-avg MR 0.4700"));
    }

    #[test]
    fn zero_miss_rates_stay_on_the_canvas() {
        let y = y_px(0.0);
        assert!(y <= HEIGHT - MARGIN_BOTTOM + 1e-9);
        assert!(y >= MARGIN_TOP);
        // The floor and zero land at the same place.
        assert_eq!(y_px(0.0), y_px(1e-3));
        assert!(y_px(1e-9) == y_px(0.0));
    }

    #[test]
    fn axes_are_monotone() {
        assert!(x_px(0.01) < x_px(0.1));
        assert!(x_px(0.1) < x_px(1.0));
        assert!(y_px(0.1) > y_px(0.5), "lower miss rate sits lower on screen");
    }
}
