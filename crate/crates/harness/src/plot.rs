//! Standalone SVG comparison plots: one mean curve per optimizer with a
//! shaded band of one standard deviation around it.

use std::fmt::Write as _;
use std::path::Path;

use crate::metrics::{fmt_sig, EpochAggregate};
use crate::HarnessError;

/// One labeled curve, typically a single optimizer aggregated across seeds.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<EpochAggregate>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape_xml(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the document; [`emit_plot_svg`] writes it to disk.
pub fn render_plot_svg(series: &[Series], metric_label: &str) -> Result<String, HarnessError> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(HarnessError::EmptySeries);
    }

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for p in &s.points {
            x_min = x_min.min(p.epoch as f64);
            x_max = x_max.max(p.epoch as f64);
            y_min = y_min.min(p.mean - p.std);
            y_max = y_max.max(p.mean + p.std);
        }
    }
    if x_min == x_max {
        x_min -= 1.0;
        x_max += 1.0;
    }
    if y_min == y_max {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |epoch: f64| MARGIN_LEFT + (epoch - x_min) / (x_max - x_min) * plot_w;
    let y_of = |value: f64| MARGIN_TOP + (y_max - value) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .expect("string writes are infallible");
    writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();

    // axes
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    writeln!(
        svg,
        r#"<line x1="{x0}" y1="{y0}" x2="{:.2}" y2="{y0}" stroke="black" stroke-width="1"/>"#,
        MARGIN_LEFT + plot_w
    )
    .unwrap();
    writeln!(
        svg,
        r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN_TOP}" stroke="black" stroke-width="1"/>"#
    )
    .unwrap();

    // ticks
    const TICKS: usize = 5;
    for k in 0..=TICKS {
        let frac = k as f64 / TICKS as f64;
        let x_val = x_min + frac * (x_max - x_min);
        let x = x_of(x_val);
        writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
            y0 + 5.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            y0 + 20.0,
            fmt_sig(x_val, 4)
        )
        .unwrap();

        let y_val = y_min + frac * (y_max - y_min);
        let y = y_of(y_val);
        writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black" stroke-width="1"/>"#,
            x0 - 5.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>"#,
            x0 - 8.0,
            y + 4.0,
            fmt_sig(y_val, 4)
        )
        .unwrap();
    }

    // axis labels
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle">epoch</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="20" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape_xml(metric_label)
    )
    .unwrap();

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() >= 2 {
            // band: upper edge forward, lower edge backward
            let mut d = String::new();
            for (k, p) in s.points.iter().enumerate() {
                let cmd = if k == 0 { 'M' } else { 'L' };
                write!(
                    d,
                    "{cmd} {:.2},{:.2} ",
                    x_of(p.epoch as f64),
                    y_of(p.mean + p.std)
                )
                .unwrap();
            }
            for p in s.points.iter().rev() {
                write!(
                    d,
                    "L {:.2},{:.2} ",
                    x_of(p.epoch as f64),
                    y_of(p.mean - p.std)
                )
                .unwrap();
            }
            d.push('Z');
            writeln!(
                svg,
                r#"<path d="{d}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#
            )
            .unwrap();

            let points: Vec<String> = s
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", x_of(p.epoch as f64), y_of(p.mean)))
                .collect();
            writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                points.join(" ")
            )
            .unwrap();
        } else {
            // a single point gets a marker instead of a degenerate line
            let p = &s.points[0];
            writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                x_of(p.epoch as f64),
                y_of(p.mean)
            )
            .unwrap();
        }

        // legend entry
        let ly = MARGIN_TOP + 10.0 + i as f64 * 22.0;
        writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="14" height="14" fill="{color}"/>"#,
            WIDTH - MARGIN_RIGHT + 15.0,
            ly
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13">{}</text>"#,
            WIDTH - MARGIN_RIGHT + 35.0,
            ly + 11.0,
            escape_xml(&s.label)
        )
        .unwrap();
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes the comparison plot for one metric to `path`.
pub fn emit_plot_svg(
    series: &[Series],
    metric_label: &str,
    path: &Path,
) -> Result<(), HarnessError> {
    let svg = render_plot_svg(series, metric_label)?;
    std::fs::write(path, svg).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(label: &str, epochs: u32) -> Series {
        Series {
            label: label.to_string(),
            points: (1..=epochs)
                .map(|epoch| EpochAggregate {
                    epoch,
                    mean: 1.0 / epoch as f64,
                    std: 0.05 / epoch as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn two_series_produce_two_lines_and_two_bands() {
        let svg = render_plot_svg(
            &[curve("adam", 45), curve("adam-ucb", 45)],
            "validation accuracy (%)",
        )
        .unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains("adam-ucb"));
        assert!(svg.contains("epoch"));
        roxmltree::Document::parse(&svg).expect("well-formed XML");
    }

    #[test]
    fn single_point_series_renders_a_marker() {
        let single = Series {
            label: "one".to_string(),
            points: vec![EpochAggregate {
                epoch: 3,
                mean: 0.5,
                std: 0.1,
            }],
        };
        let svg = render_plot_svg(&[single], "train loss").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert_eq!(svg.matches("<circle").count(), 1);
        roxmltree::Document::parse(&svg).expect("well-formed XML");
    }

    #[test]
    fn labels_are_escaped() {
        let mut s = curve("a<b&c", 3);
        s.label = "a<b&c".to_string();
        let svg = render_plot_svg(&[s], "x < y").unwrap();
        assert!(svg.contains("a&lt;b&amp;c"));
        roxmltree::Document::parse(&svg).expect("well-formed XML");
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(
            render_plot_svg(&[], "m").unwrap_err(),
            HarnessError::EmptySeries
        ));
        let empty = Series {
            label: "e".to_string(),
            points: vec![],
        };
        assert!(render_plot_svg(&[empty], "m").is_err());
    }

    #[test]
    fn emit_writes_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.svg");
        emit_plot_svg(&[curve("adam", 10)], "val loss", &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
    }
}
