//! SVG plots drawn from CSV rows alone, so a results file can be re-plotted
//! offline with `distcomm plot`.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use crate::error::CliError;
use crate::output::ResultRow;

const ERROR_METRICS: [&str; 6] = [
    "excess_distortion",
    "max_message_error",
    "pooled_error",
    "max_member_error",
    "separation_excess",
    "direct_excess",
];

type Series = BTreeMap<String, Vec<(f64, f64)>>;

fn plot_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Plot(e.to_string())
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map(|r| format!(" R={r:.3}")).unwrap_or_default()
}

/// Groups rows into named `(x, y)` series; `None` if nothing is plottable.
fn series(rows: &[ResultRow]) -> Option<(String, String, Series, bool)> {
    let experiment = rows.first()?.experiment.clone();
    let mut out = Series::new();
    let (x_label, log_y) = match experiment.as_str() {
        "rd" | "exponent" => {
            let metric = if experiment == "rd" {
                "rate_bits"
            } else {
                "exponent_bits"
            };
            for r in rows.iter().filter(|r| r.metric == metric) {
                if let Some(x) = r.param {
                    out.entry(metric.to_string())
                        .or_default()
                        .push((x, r.estimate));
                }
            }
            (if experiment == "rd" { "D" } else { "eps" }, false)
        }
        "sanov-check" => {
            for r in rows.iter().filter(|r| r.metric.starts_with("log2_")) {
                if let Some(n) = r.n {
                    let key = format!("{} {}", r.metric, r.member);
                    out.entry(key).or_default().push((n as f64, r.estimate));
                }
            }
            ("n", false)
        }
        _ => {
            for r in rows
                .iter()
                .filter(|r| ERROR_METRICS.contains(&r.metric.as_str()))
            {
                if let Some(n) = r.n {
                    let floor = r.trials.map_or(1e-4, |t| 0.5 / t.max(1) as f64);
                    let key = format!("{} {}{}", r.metric, r.member, fmt_rate(r.rate));
                    out.entry(key)
                        .or_default()
                        .push((n as f64, r.estimate.max(floor)));
                }
            }
            ("n", true)
        }
    };
    out.retain(|_, v| !v.is_empty());
    if out.is_empty() {
        return None;
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Some((experiment, x_label.to_string(), out, log_y))
}

fn bounds(s: &Series) -> (f64, f64, f64, f64) {
    let pts = s.values().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    (x0, x1, y0, y1)
}

/// Writes an SVG for `rows` to `path`. Returns false when there is nothing
/// to draw.
pub fn plot_rows(rows: &[ResultRow], path: &Path) -> Result<bool, CliError> {
    let Some((title, x_label, data, log_y)) = series(rows) else {
        return Ok(false);
    };
    let (x0, x1, y0, y1) = bounds(&data);
    let root = SVGBackend::new(path, (900, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut builder = ChartBuilder::on(&root);
    builder
        .caption(&title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(64);
    if log_y {
        let mut chart = builder
            .build_cartesian_2d(
                x0..x1,
                (y0 * 0.8..(y1 * 1.25).min(1.0).max(y0 * 1.5)).log_scale(),
            )
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc("estimate")
            .draw()
            .map_err(plot_err)?;
        draw_series(&mut chart, &data)?;
    } else {
        let pad = 0.05 * (y1 - y0);
        let mut chart = builder
            .build_cartesian_2d(x0..x1, y0 - pad..y1 + pad)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc("value")
            .draw()
            .map_err(plot_err)?;
        draw_series(&mut chart, &data)?;
    }
    root.present().map_err(plot_err)?;
    Ok(true)
}

fn draw_series<'a, X, Y>(
    chart: &mut ChartContext<'a, SVGBackend<'a>, Cartesian2d<X, Y>>,
    data: &Series,
) -> Result<(), CliError>
where
    X: Ranged<ValueType = f64>,
    Y: Ranged<ValueType = f64>,
{
    for (i, (name, pts)) in data.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    Ok(())
}
