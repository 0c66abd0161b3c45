use std::fs;
use std::path::Path;

use serde::Serialize;
use tollway_core::equilibrium::EquilibriumAnalysis;
use tollway_core::LaneGroup;

use crate::scenario::{RunError, RunOutput, Trajectory};

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>, RunError> {
    Ok(csv::Writer::from_path(dir.join(name))?)
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn write_contours(out: &RunOutput, dir: &Path) -> Result<(), RunError> {
    let mut w = writer(dir, "contours.csv")?;
    w.write_record(["t", "link", "lane_group", "vehicles", "density_vpm", "speed_mph"])?;
    let horizon = out.metrics.contours.first().map_or(0, |c| c.vehicles.len());
    for t in 0..horizon {
        for c in &out.metrics.contours {
            for (k, n) in c.vehicles[t].iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    (k + 1).to_string(),
                    c.label.clone(),
                    num(*n),
                    num(c.density[t][k]),
                    num(c.speed_mph[t][k]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_flows(out: &RunOutput, dir: &Path) -> Result<(), RunError> {
    let mut w = writer(dir, "flows.csv")?;
    w.write_record(["t", "link", "lane_group", "f", "r", "s", "queue"])?;
    match &out.trajectory {
        Trajectory::Single(traj) => {
            for (state, flows) in traj.states.iter().zip(&traj.flows) {
                for i in 0..flows.mainline.len() {
                    let queue = if i == 0 { state.vehicles[0] } else { state.queues[i] };
                    w.write_record([
                        state.t.to_string(),
                        i.to_string(),
                        "mainline".to_string(),
                        num(flows.mainline[i]),
                        num(flows.on_ramp[i]),
                        num(flows.off_ramp[i]),
                        num(queue),
                    ])?;
                }
            }
        }
        Trajectory::Dual(traj) => {
            for step in &traj.steps {
                for group in LaneGroup::ALL {
                    let gi = group.index();
                    for i in 0..step.flows.mainline[gi].len() {
                        w.write_record([
                            step.state.t.to_string(),
                            i.to_string(),
                            group.label().to_string(),
                            num(step.flows.mainline[gi][i]),
                            num(step.flows.on_ramp[gi][i]),
                            num(step.flows.off_ramp[gi][i]),
                            num(step.state.queues[i]),
                        ])?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_directives(out: &RunOutput, dir: &Path) -> Result<(), RunError> {
    let mut w = writer(dir, "directives.csv")?;
    w.write_record(["t", "entrance", "alpha1", "toll", "revenue"])?;
    if let (Trajectory::Dual(traj), Some(dual)) = (&out.trajectory, &out.dual) {
        let entrances = dual.entrances();
        for step in &traj.steps {
            for &i in &entrances {
                let p = step.realized[i];
                w.write_record([
                    step.state.t.to_string(),
                    i.to_string(),
                    num(p.alpha1),
                    num(p.toll),
                    num(p.revenue),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Write every artifact of a run into `dir`, creating it if needed.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    write_contours(out, dir)?;
    write_flows(out, dir)?;
    write_directives(out, dir)?;
    write_json(&out.metrics, &dir.join("metrics.json"))?;
    if let Some(vot) = &out.vot {
        let mut w = writer(dir, "vot_knots.csv")?;
        w.write_record(["price_per_hour", "cdf"])?;
        for (p, c) in vot.knots() {
            w.write_record([num(*p), num(*c)])?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn write_analysis(analysis: &EquilibriumAnalysis, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("analysis.txt"), analysis.to_string())?;
    write_json(analysis, &dir.join("analysis.json"))
}
