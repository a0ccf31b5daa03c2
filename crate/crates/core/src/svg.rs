//! SVG scatter rendering for 2-D projections.

use std::collections::BTreeMap;
use std::path::Path;

use crate::matrix::Matrix;
use crate::num::Real;

/// Deterministic color cycle for label classes.
const PALETTE: [&str; 16] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94",
];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const POINT_RADIUS: f64 = 3.0;

/// Renders one circle per point, colored by label, with a legend.
///
/// Labels may be empty, in which case all points share one color and no
/// legend is emitted. The viewBox is fitted to the data with a 5% margin.
pub fn scatter_svg<R: Real>(coords: &Matrix<R>, labels: &[String]) -> String {
    assert!(labels.is_empty() || labels.len() == coords.nrows());
    let n = coords.nrows();

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for i in 0..n {
        let x = coords.get(i, 0).to_f64().unwrap();
        let y = coords.get(i, 1).to_f64().unwrap();
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if n == 0 {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    let x_span = (x_max - x_min).max(1e-9);
    let y_span = (y_max - y_min).max(1e-9);
    let x_margin = 0.05 * x_span;
    let y_margin = 0.05 * y_span;
    let view = (
        x_min - x_margin,
        y_min - y_margin,
        x_span + 2.0 * x_margin,
        y_span + 2.0 * y_margin,
    );

    // Colors cycle through the palette in sorted label order, so output does
    // not depend on row order.
    let distinct: std::collections::BTreeSet<&str> = labels.iter().map(String::as_str).collect();
    let color_of: BTreeMap<&str, &str> = distinct
        .into_iter()
        .enumerate()
        .map(|(i, label)| (label, PALETTE[i % PALETTE.len()]))
        .collect();

    let scale_x = |x: f64| (x - view.0) / view.2 * WIDTH;
    // SVG y axis points down; flip so larger y plots higher.
    let scale_y = |y: f64| HEIGHT - (y - view.1) / view.3 * HEIGHT;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for i in 0..n {
        let x = scale_x(coords.get(i, 0).to_f64().unwrap());
        let y = scale_y(coords.get(i, 1).to_f64().unwrap());
        let color = if labels.is_empty() {
            PALETTE[0]
        } else {
            color_of[labels[i].as_str()]
        };
        svg.push_str(&format!(
            "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"{POINT_RADIUS}\" fill=\"{color}\" fill-opacity=\"0.8\"/>\n"
        ));
    }
    if !labels.is_empty() {
        svg.push_str("<g font-family=\"sans-serif\" font-size=\"12\">\n");
        for (i, (label, color)) in color_of.iter().enumerate() {
            let y = 16.0 + 16.0 * i as f64;
            svg.push_str(&format!(
                "<rect x=\"8\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n",
                y - 9.0
            ));
            svg.push_str(&format!(
                "<text x=\"22\" y=\"{y:.1}\">{}</text>\n",
                escape_xml(label)
            ));
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes a scatter plot to disk.
pub fn render_scatter<R: Real>(
    coords: &Matrix<R>,
    labels: &[String],
    output_path: &Path,
) -> std::io::Result<()> {
    std::fs::write(output_path, scatter_svg(coords, labels))
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
