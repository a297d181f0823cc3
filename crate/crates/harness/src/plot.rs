//! Log-log SVG plots, drawn from a results CSV.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use mentorcore::metrics::RegretKind;
use plotters::prelude::*;

use crate::report::read_csv;

/// One `<stem>_<metric>.svg` per metric with at least one positive estimate.
pub fn plot_csv(csv_path: &Path, out_dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let file = std::fs::File::open(csv_path).with_context(|| format!("opening {}", csv_path.display()))?;
    let rows = read_csv(file)?;
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    let mut series: BTreeMap<RegretKind, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        if r.estimate > 0.0 {
            series.entry(r.metric).or_default().push((r.horizon as f64, r.estimate));
        }
    }
    let mut written = Vec::new();
    for (metric, points) in series {
        let path = out_dir.join(format!("{stem}_{}.svg", metric.to_string().to_lowercase()));
        draw(&path, &metric.to_string(), &points)?;
        written.push(path);
    }
    Ok(written)
}

fn bounds(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo / 2.0, hi * 2.0)
    } else {
        (lo / 1.2, hi * 1.2)
    }
}

fn draw(path: &Path, metric: &str, points: &[(f64, f64)]) -> anyhow::Result<()> {
    let root = SVGBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow::anyhow!("{e}"))?;
    let (x0, x1) = bounds(points.iter().map(|p| p.0));
    let (y0, y1) = bounds(points.iter().map(|p| p.1));
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((x0..x1).log_scale(), (y0..y1).log_scale())
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc("T")
        .y_desc(metric)
        .draw()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    chart
        .draw_series(LineSeries::new(points.iter().copied(), &BLUE))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    chart
        .draw_series(points.iter().map(|&p| Circle::new(p, 3, BLUE.filled())))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}
