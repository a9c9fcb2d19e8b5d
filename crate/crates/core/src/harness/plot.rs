use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::log::{read_log, RunLog};
use crate::error::{Error, Result};

/// Exponential moving average coefficient for reward curves:
/// `s_i = SMOOTHING · s_{i-1} + (1 − SMOOTHING) · x_i`, starting from `s_0 = x_0`.
pub const SMOOTHING: f64 = 0.9;

pub fn ema(xs: &[f64], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        let s = match out.last() {
            Some(&prev) => coeff * prev + (1.0 - coeff) * x,
            None => x,
        };
        out.push(s);
    }
    out
}

/// Per-step mean, minimum and maximum across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub seeds: usize,
}

/// Aggregate `(step, value)` series index by index, truncated to the
/// shortest series. Steps come from the first series.
pub fn aggregate(series: &[Vec<(u64, f64)>]) -> Band {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let mut band = Band { steps: Vec::new(), mean: Vec::new(), min: Vec::new(), max: Vec::new(), seeds: series.len() };
    for i in 0..len {
        let values: Vec<f64> = series.iter().map(|s| s[i].1).collect();
        band.steps.push(series[0][i].0);
        band.mean.push(values.iter().sum::<f64>() / values.len() as f64);
        band.min.push(values.iter().cloned().fold(f64::INFINITY, f64::min));
        band.max.push(values.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    band
}

fn draw_err<E: std::error::Error + Send + Sync>(e: DrawingAreaErrorKind<E>) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 1.0 };
    (lo - pad)..(hi + pad)
}

/// Render reward curves for every arm found in `logs`, lesson-trace plots for
/// arms that record lesson columns, and a `reward.csv` table of the smoothed
/// curves. Returns the written files in a fixed order.
pub fn render_plots(logs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if logs.is_empty() {
        return Err(Error::Input("no logs to plot".into()));
    }
    let mut arms: BTreeMap<String, Vec<RunLog>> = BTreeMap::new();
    for path in logs {
        let log = read_log(path)?;
        if log.iterations.is_empty() {
            return Err(Error::Schema(format!("{}: no iteration records", path.display())));
        }
        arms.entry(log.header.arm.clone()).or_default().push(log);
    }
    for runs in arms.values_mut() {
        runs.sort_by_key(|r| r.header.seed);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let bands: Vec<(String, Band)> = arms
        .iter()
        .map(|(arm, runs)| {
            let series: Vec<Vec<(u64, f64)>> = runs
                .iter()
                .map(|r| {
                    let raw: Vec<f64> = r.iterations.iter().map(|it| it.mean_reward).collect();
                    r.iterations.iter().map(|it| it.step).zip(ema(&raw, SMOOTHING)).collect()
                })
                .collect();
            (arm.clone(), aggregate(&series))
        })
        .collect();

    let reward_svg = out_dir.join("reward.svg");
    draw_reward(&reward_svg, &bands)?;
    written.push(reward_svg);

    let csv_path = out_dir.join("reward.csv");
    let mut csv = csv::Writer::from_path(&csv_path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    csv.write_record(["arm", "seeds", "step", "mean", "min", "max"]).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for (arm, b) in &bands {
        for i in 0..b.steps.len() {
            csv.write_record([
                arm.clone(),
                b.seeds.to_string(),
                b.steps[i].to_string(),
                b.mean[i].to_string(),
                b.min[i].to_string(),
                b.max[i].to_string(),
            ])
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
    }
    csv.flush()?;
    written.push(csv_path);

    for (arm, runs) in &arms {
        let columns: [TraceColumn; 4] = [
            ("level", "Curriculum level", |r| r.level.map(|v| v as f64), 16.0),
            ("S", "Action space (S)", |r| r.s.map(f64::from), 14.0),
            ("alpha", "Perturbation strength (alpha)", |r| r.alpha.map(f64::from), 4.0),
            ("beta", "Bunching strength (beta)", |r| r.beta.map(f64::from), 10.0),
        ];
        for (key, title, get, top) in columns {
            let points: Vec<Vec<(u64, f64)>> = runs
                .iter()
                .map(|r| r.iterations.iter().filter_map(|it| get(it).map(|v| (it.step, v))).collect())
                .collect();
            if points.iter().all(Vec::is_empty) {
                continue;
            }
            let path = out_dir.join(format!("{arm}-{key}.svg"));
            let top = points.iter().flatten().map(|p| p.1).fold(top, f64::max);
            draw_trace(&path, &format!("{arm}: {title}"), &points, top)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// File key, plot title, value getter, and the axis top used when values stay below it.
type TraceColumn = (&'static str, &'static str, fn(&super::IterationRecord) -> Option<f64>, f64);

fn draw_reward(path: &Path, bands: &[(String, Band)]) -> Result<()> {
    let max_step = bands.iter().filter_map(|(_, b)| b.steps.last()).max().copied().unwrap_or(1).max(1);
    let lo = bands.iter().flat_map(|(_, b)| b.min.iter()).cloned().fold(f64::INFINITY, f64::min);
    let hi = bands.iter().flat_map(|(_, b)| b.max.iter()).cloned().fold(f64::NEG_INFINITY, f64::max);
    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Reward per episode (EMA {SMOOTHING})"), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0f64..max_step as f64, padded(lo, hi))
        .map_err(draw_err)?;
    chart.configure_mesh().x_desc("decision steps").y_desc("reward").draw().map_err(draw_err)?;
    for (i, (arm, band)) in bands.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        if band.seeds > 1 {
            let mut outline: Vec<(f64, f64)> = band.steps.iter().map(|&s| s as f64).zip(band.max.iter().cloned()).collect();
            outline.extend(band.steps.iter().rev().map(|&s| s as f64).zip(band.min.iter().rev().cloned()));
            chart.draw_series(std::iter::once(Polygon::new(outline, color.mix(0.2)))).map_err(draw_err)?;
        }
        chart
            .draw_series(LineSeries::new(band.steps.iter().map(|&s| s as f64).zip(band.mean.iter().cloned()), color.stroke_width(2)))
            .map_err(draw_err)?
            .label(format!("{arm} (n={})", band.seeds))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}

fn draw_trace(path: &Path, title: &str, seeds: &[Vec<(u64, f64)>], top: f64) -> Result<()> {
    let max_step = seeds.iter().filter_map(|s| s.last()).map(|p| p.0).max().unwrap_or(1).max(1);
    let root = SVGBackend::new(path, (900, 360)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0f64..max_step as f64, -0.5f64..top + 0.5)
        .map_err(draw_err)?;
    chart.configure_mesh().x_desc("decision steps").draw().map_err(draw_err)?;
    for (i, pts) in seeds.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(pts.iter().map(|&(s, v)| Circle::new((s as f64, v), 2, color.filled())))
            .map_err(draw_err)?;
    }
    root.present().map_err(draw_err)?;
    Ok(())
}
