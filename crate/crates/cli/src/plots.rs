//! SVG plots, each written together with the CSV of the plotted data.

use std::path::Path;

use plotters::prelude::*;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Drawn as markers instead of a line.
    pub markers: bool,
}

fn bounds(series: &[Series]) -> Option<((f64, f64), (f64, f64))> {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    let mut any = false;
    for &(x, y) in pts {
        any = true;
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !any {
        return None;
    }
    let pad = |a: f64, b: f64| {
        let w = (b - a).abs().max(1e-12) * 0.05;
        (a - w, b + w)
    };
    Some((pad(x0, x1), pad(y0, y1)))
}

fn write_series_csv(path: &Path, series: &[Series]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "x", "y"])?;
    for s in series {
        for (x, y) in &s.points {
            w.write_record([s.name.clone(), format!("{x:.12e}"), format!("{y:.12e}")])?;
        }
    }
    w.flush()
}

fn plot_err(e: impl std::fmt::Display) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

/// `stem.svg` and `stem.csv`. Returns false (writing nothing) when every
/// series is empty.
pub fn line_plot(
    stem: &Path,
    title: &str,
    labels: (&str, &str),
    series: &[Series],
    note: Option<&str>,
) -> std::io::Result<bool> {
    let Some(((x0, x1), (y0, y1))) = bounds(series) else {
        return Ok(false);
    };
    write_series_csv(&stem.with_extension("csv"), series)?;
    let svg = stem.with_extension("svg");
    let root = SVGBackend::new(&svg, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(labels.0)
        .y_desc(labels.1)
        .draw()
        .map_err(plot_err)?;
    for (i, s) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        if s.markers {
            chart
                .draw_series(s.points.iter().map(|&p| Circle::new(p, 3, color.filled())))
                .map_err(plot_err)?
                .label(s.name.as_str())
                .legend(move |(x, y)| Circle::new((x + 10, y), 3, color.filled()));
        } else {
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
                .map_err(plot_err)?
                .label(s.name.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::UpperLeft)
        .draw()
        .map_err(plot_err)?;
    if let Some(note) = note {
        root.draw(&Text::new(note.to_string(), (90, 440), ("sans-serif", 15)))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(true)
}

/// Heat map of `values[i·res + j]` at `(i/res, j/res)`.
pub fn heatmap(stem: &Path, title: &str, res: usize, values: &[f64]) -> std::io::Result<bool> {
    if values.is_empty() || values.len() != res * res {
        return Ok(false);
    }
    let mut w = csv::Writer::from_path(stem.with_extension("csv"))?;
    w.write_record(["x", "y", "value"])?;
    for (idx, v) in values.iter().enumerate() {
        let (i, j) = (idx / res, idx % res);
        w.write_record([
            format!("{:.10}", i as f64 / res as f64),
            format!("{:.10}", j as f64 / res as f64),
            format!("{v:.12e}"),
        ])?;
    }
    w.flush()?;
    let lo = values.iter().copied().fold(f64::MAX, f64::min);
    let hi = values.iter().copied().fold(f64::MIN, f64::max);
    let span = (hi - lo).max(1e-300);
    let svg = stem.with_extension("svg");
    let root = SVGBackend::new(&svg, (560, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let caption = format!("{title} (range {lo:.6} .. {hi:.6})");
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 16))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(44)
        .build_cartesian_2d(0f64..1f64, 0f64..1f64)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("x1").y_desc("x2").draw().map_err(plot_err)?;
    let cell = 1.0 / res as f64;
    chart
        .draw_series(values.iter().enumerate().map(|(idx, &v)| {
            let (i, j) = ((idx / res) as f64 * cell, (idx % res) as f64 * cell);
            let t = (v - lo) / span;
            let color = HSLColor(0.7 * (1.0 - t), 0.9, 0.5);
            Rectangle::new([(i, j), (i + cell, j + cell)], color.filled())
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(true)
}
