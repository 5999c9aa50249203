//! Log-log SVG plots of gap and loss against `T`, with bound overlays.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use plotters::prelude::*;

use crate::experiment::RunReport;
use crate::stats::loglog_fit;

pub const GAP_PLOT: &str = "gap_vs_t.svg";
pub const LOSS_PLOT: &str = "loss_vs_t.svg";

/// What [`emit_plots`] produced.
#[derive(Debug, Default)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

struct Series<'a> {
    title: &'a str,
    ylabel: &'a str,
    measured: Vec<(f64, f64)>,
    bound: Vec<(f64, f64)>,
    bound_label: &'a str,
    /// Slope drawn and annotated when present.
    slope: Option<f64>,
}

fn draw(path: &Path, s: &Series) -> Result<()> {
    let xs: Vec<f64> = s.measured.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = s.measured.iter().chain(&s.bound).map(|p| p.1).filter(|&y| y > 0.0).collect();
    let x_lo = xs.iter().copied().fold(f64::INFINITY, f64::min) / 1.5;
    let x_hi = xs.iter().copied().fold(0.0, f64::max) * 1.5;
    let y_lo = ys.iter().copied().fold(f64::INFINITY, f64::min).min(1.0) / 2.0;
    let y_hi = ys.iter().copied().fold(0.0, f64::max).max(y_lo * 4.0) * 2.0;
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(s.title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((x_lo..x_hi).log_scale(), (y_lo..y_hi).log_scale())
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc("T")
        .y_desc(s.ylabel)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    let floor = y_lo * 1.01;
    chart
        .draw_series(s.measured.iter().map(|&(x, y)| Circle::new((x, y.max(floor)), 4, BLUE.filled())))
        .map_err(|e| anyhow!("{e}"))?
        .label("measured mean")
        .legend(|(x, y)| Circle::new((x, y), 4, BLUE.filled()));
    if s.bound.len() > 1 {
        chart
            .draw_series(LineSeries::new(s.bound.iter().copied(), RED.stroke_width(2)))
            .map_err(|e| anyhow!("{e}"))?
            .label(s.bound_label)
            .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], RED));
    } else {
        chart
            .draw_series(s.bound.iter().map(|&p| Cross::new(p, 5, RED)))
            .map_err(|e| anyhow!("{e}"))?
            .label(s.bound_label)
            .legend(|(x, y)| Cross::new((x, y), 5, RED));
    }
    if let Some(slope) = s.slope {
        let ys: Vec<f64> = s.measured.iter().map(|p| p.1).collect();
        let (_, intercept) = loglog_fit(&xs, &ys);
        let fit = [x_lo * 1.2, x_hi / 1.2].map(|x: f64| (x, (intercept + slope * x.ln()).exp()));
        chart
            .draw_series(LineSeries::new(fit, BLACK.stroke_width(1)))
            .map_err(|e| anyhow!("{e}"))?
            .label(format!("fit, slope {slope:.3}"))
            .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], BLACK));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

/// Writes the gap and loss plots for a `corestomp` report into `dir`.
///
/// With no aggregated `T` nothing is written and a warning is returned. A
/// single `T` gives a scatter without a fitted line; otherwise the gap plot
/// carries the fit whose slope is the report's `gap_slope`.
pub fn emit_plots(report: &RunReport, dir: &Path) -> Result<PlotOutput> {
    let mut out = PlotOutput::default();
    if report.aggregates.is_empty() {
        out.warnings
            .push("report has no iteration schedule; no plots written".into());
        return Ok(out);
    }
    std::fs::create_dir_all(dir)?;
    let agg = &report.aggregates;
    let gap = Series {
        title: "Duality gap of the averaged iterate",
        ylabel: "mean gap",
        measured: agg.iter().map(|a| (a.iterations as f64, a.mean_gap)).collect(),
        bound: agg.iter().map(|a| (a.iterations as f64, a.bound_lemma11)).collect(),
        bound_label: "14C/√(3T)",
        slope: report.gap_slope,
    };
    let loss = Series {
        title: "Action loss at the planning state",
        ylabel: "mean v*(s0) − q*(s0, a)",
        measured: agg.iter().map(|a| (a.iterations as f64, a.mean_loss)).collect(),
        bound: agg.iter().map(|a| (a.iterations as f64, a.bound_thm3)).collect(),
        bound_label: "planner bound",
        slope: None,
    };
    for (name, series) in [(GAP_PLOT, gap), (LOSS_PLOT, loss)] {
        let path = dir.join(name);
        draw(&path, &series)?;
        out.files.push(path);
    }
    Ok(out)
}
