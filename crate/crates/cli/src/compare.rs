use std::fmt;
use std::path::Path;

use serde::Serialize;
use tollway_core::sim::MetricsReport;

use crate::config::ScenarioConfig;
use crate::output::write_run;
use crate::scenario::{run_with_policy, RunError, RunOutput, SplitPolicy};

pub const RUN_LABELS: [&str; 3] = ["base", "all_gp", "hot"];

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub label: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn row(&self, label: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "run", "vmt", "vht", "delay", "toll delay", "gp delay"
        )?;
        for row in &self.rows {
            let m = &row.metrics;
            let group = |label: &str| {
                m.groups
                    .iter()
                    .find(|g| g.label == label)
                    .map_or(0.0, |g| g.delay)
            };
            writeln!(
                f,
                "{:<8} {:>12.2} {:>12.2} {:>12.2} {:>12.2} {:>12.2}",
                row.label,
                m.vmt,
                m.vht,
                m.delay,
                group("toll"),
                group("gp")
            )?;
        }
        Ok(())
    }
}

/// Run the base, all-GP and controlled cases of one config side by side.
pub fn compare_runs(config: &ScenarioConfig, seed: u64) -> Result<Vec<RunOutput>, RunError> {
    config.validate()?;
    if config.lane_split.is_none() {
        return Err(RunError::Setup("compare needs a lane_split".into()));
    }
    let base = config
        .compare
        .map(|c| c.base_toll_share)
        .ok_or_else(|| RunError::Setup("compare needs a compare block".into()))?;
    let policies = [
        SplitPolicy::Fixed(base),
        SplitPolicy::Proportional,
        SplitPolicy::Configured,
    ];
    let results: Vec<Result<RunOutput, RunError>> = std::thread::scope(|s| {
        let handles: Vec<_> = policies
            .iter()
            .map(|&p| s.spawn(move || run_with_policy(config, seed, p)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}

pub fn compare(config: &ScenarioConfig, seed: u64, out: Option<&Path>) -> Result<CompareReport, RunError> {
    let runs = compare_runs(config, seed)?;
    if let Some(dir) = out {
        for (label, run) in RUN_LABELS.iter().zip(&runs) {
            write_run(run, &dir.join(label))?;
        }
    }
    let report = CompareReport {
        rows: RUN_LABELS
            .iter()
            .zip(runs)
            .map(|(label, run)| CompareRow {
                label: label.to_string(),
                metrics: run.metrics,
            })
            .collect(),
    };
    if let Some(dir) = out {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(dir.join("compare.json"), text)?;
        std::fs::write(dir.join("compare.txt"), report.to_string())?;
    }
    Ok(report)
}
