//! CSV traces and charts.

use std::path::Path;

use anyhow::{Context, Result};
use ocpdl_core::TraceRecord;

use crate::run::{Clock, Method, RunResult};
use crate::svg::{line_chart, Series};

/// Columns of the bench CSV; the factorize trace extends them.
pub const BENCH_COLUMNS: [&str; 6] = ["method", "trial", "iter", "wall_seconds", "abs_error", "rel_error"];
pub const TRACE_EXTRA_COLUMNS: [&str; 6] = ["objective", "objective_before", "batch_loss", "displacement", "weight", "code_norm"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn base_row(r: &RunResult, rec: &TraceRecord, clock: Clock) -> Vec<String> {
    vec![
        r.method.to_string(),
        r.trial.to_string(),
        rec.t.to_string(),
        r.wall(rec, clock).to_string(),
        opt(rec.abs_error),
        opt(rec.rel_error),
    ]
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))
}

/// Full per-step trace: the bench columns followed by the objective values.
/// For online runs `objective` is the surrogate after the step; for the
/// baselines it is `‖X − Out(L)‖²`.
pub fn write_trace(path: &Path, runs: &[&RunResult], clock: Clock) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(BENCH_COLUMNS.iter().chain(TRACE_EXTRA_COLUMNS.iter()))?;
    for r in runs {
        for rec in &r.trace {
            let mut row = base_row(r, rec, clock);
            row.extend(
                [rec.surrogate, rec.surrogate_before, rec.batch_loss, rec.displacement, rec.weight, rec.code_norm]
                    .iter()
                    .map(f64::to_string),
            );
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per method, trial and iteration.
pub fn write_bench(path: &Path, runs: &[&RunResult], clock: Clock) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(BENCH_COLUMNS)?;
    for r in runs {
        for rec in &r.trace {
            w.write_record(base_row(r, rec, clock))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Error-vs-time chart with one curve per method: the mean over trials of
/// the relative error (or of the objective when no reference tensor
/// exists), with a ±1 standard deviation band when there are several trials.
pub fn chart(runs: &[&RunResult], clock: Clock, description: &str) -> String {
    let mut methods: Vec<Method> = Vec::new();
    for r in runs {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let has_error = runs.iter().all(|r| r.trace.iter().all(|x| x.rel_error.is_some()));
    let series: Vec<Series> = methods
        .iter()
        .map(|&m| {
            let group: Vec<&&RunResult> = runs.iter().filter(|r| r.method == m).collect();
            let len = group.iter().map(|r| r.trace.len()).min().unwrap_or(0);
            let mut s = Series {
                name: m.to_string(),
                repeats: group.len(),
                ..Series::default()
            };
            let mut spread = Vec::with_capacity(len);
            for i in 0..len {
                let xs: Vec<f64> = group.iter().map(|r| r.wall(&r.trace[i], clock)).collect();
                let ys: Vec<f64> = group
                    .iter()
                    .map(|r| {
                        let rec = &r.trace[i];
                        if has_error { rec.rel_error.unwrap_or(f64::NAN) } else { rec.surrogate }
                    })
                    .collect();
                s.x.push(mean_std(&xs).0);
                let (mean, std) = mean_std(&ys);
                s.y.push(mean);
                spread.push(std);
            }
            if group.len() > 1 {
                s.spread = Some(spread);
            }
            s
        })
        .collect();
    let x_label = match clock {
        Clock::Wall => "elapsed time (s)",
        Clock::Logical => "iteration",
    };
    let y_label = if has_error { "relative reconstruction error" } else { "surrogate loss" };
    line_chart(description, x_label, y_label, &series)
}
