//! Writes run results as `series.csv`, `events.csv`, `diagnostics.csv` and
//! `summary.json`. Floats in CSV files carry 17 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{Diagnostics, RunResult, Variant, TRAILING_WINDOW};
use crate::scenario::Scenario;

pub const SERIES_FILE: &str = "series.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentSummary {
    pub agent: usize,
    pub trigger_count: usize,
    pub trigger_fraction: f64,
    pub min_inter_event: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub mode: Variant,
    pub seed: u64,
    pub steps: usize,
    pub trailing_window: f64,
    pub max_error_trailing_window: Option<f64>,
    pub mean_trigger_fraction: Option<f64>,
    pub total_triggers: Option<usize>,
    pub agents: Vec<AgentSummary>,
    pub diagnostics: Diagnostics,
    pub params: Scenario,
}

pub fn summarize(result: &RunResult) -> Summary {
    let agents = result
        .trigger_stats()
        .map(|stats| {
            stats
                .iter()
                .enumerate()
                .map(|(i, s)| AgentSummary {
                    agent: i + 1,
                    trigger_count: s.count,
                    trigger_fraction: s.fraction,
                    min_inter_event: s.min_inter_event,
                })
                .collect()
        })
        .unwrap_or_default();
    Summary {
        mode: result.variant,
        seed: result.scenario.seed,
        steps: result.steps,
        trailing_window: TRAILING_WINDOW,
        max_error_trailing_window: result.trailing_error(),
        mean_trigger_fraction: result.mean_trigger_fraction(),
        total_triggers: result
            .trigger_log
            .as_ref()
            .map(|log| log.iter().map(Vec::len).sum()),
        agents,
        diagnostics: result.diagnostics,
        params: result.scenario.clone(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err(path))
}

/// Writes all result files into `dir`, creating it if needed. Returns the
/// paths written.
pub fn export(result: &RunResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let series = dir.join(SERIES_FILE);
    let events = dir.join(EVENTS_FILE);
    let diagnostics = dir.join(DIAGNOSTICS_FILE);
    let summary = dir.join(SUMMARY_FILE);

    write_series(result, &series)?;
    write_events(result, &events)?;
    write_diagnostics(result, &diagnostics)?;
    let json = serde_json::to_string_pretty(&summarize(result)).expect("summary serializes");
    fs::write(&summary, json + "\n").map_err(io_err(&summary))?;
    Ok(vec![series, events, diagnostics, summary])
}

fn write_series(result: &RunResult, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "agent", "channel", "x", "xtilde", "eta", "triggered"])
        .map_err(csv_err(path))?;
    // a zero-length run has no step to report on
    if result.steps > 0 {
        for rec in &result.records {
            let t = fmt_f64(rec.t);
            for i in 0..rec.x.agent_count() {
                let eta = rec.eta.as_ref().map_or(String::new(), |e| fmt_f64(e[i]));
                let agent = (i + 1).to_string();
                let triggered = if rec.triggered[i] { "1" } else { "0" };
                for c in 0..rec.x.dimension() {
                    w.write_record([
                        t.as_str(),
                        agent.as_str(),
                        &(c + 1).to_string(),
                        &fmt_f64(rec.x.agent(i)[c]),
                        &fmt_f64(rec.xtilde.agent(i)[c]),
                        eta.as_str(),
                        triggered,
                    ])
                    .map_err(csv_err(path))?;
                }
            }
        }
    }
    w.flush().map_err(io_err(path))
}

fn write_events(result: &RunResult, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["agent", "t"]).map_err(csv_err(path))?;
    if let Some(log) = &result.trigger_log {
        for (i, times) in log.iter().enumerate() {
            let agent = (i + 1).to_string();
            for t in times {
                w.write_record([agent.as_str(), &fmt_f64(*t)])
                    .map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

fn write_diagnostics(result: &RunResult, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "quadratic", "lyapunov", "max_abs_xtilde"])
        .map_err(csv_err(path))?;
    for rec in &result.records {
        w.write_record([
            fmt_f64(rec.t),
            fmt_f64(rec.lyapunov.quadratic),
            fmt_f64(rec.lyapunov.total),
            fmt_f64(rec.xtilde.max_abs()),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
