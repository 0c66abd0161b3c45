use serde::Serialize;

use super::{DualTrajectory, FreewayTrajectory};
use crate::geometry::{DualGeometry, FreewayGeometry, LaneGroup};

/// Totals for one lane group (or the whole freeway).
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LaneMetrics {
    pub label: String,
    pub vmt: f64,
    pub vht: f64,
    pub delay: f64,
}

/// Time by link matrices for one lane group, covering mainline links `1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contour {
    pub label: String,
    pub vehicles: Vec<Vec<f64>>,
    /// Vehicles per mile per lane.
    pub density: Vec<Vec<f64>>,
    pub speed_mph: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub vmt: f64,
    pub vht: f64,
    pub delay: f64,
    /// Vehicle-hours spent in ramp and entrance queues.
    pub queue_vht: f64,
    pub groups: Vec<LaneMetrics>,
    #[serde(skip)]
    pub contours: Vec<Contour>,
}

/// Realized speed `(f + s) L / (n τ)`, capped at the free-flow speed. An empty
/// link travels at free-flow speed.
pub fn contour_speed_mph(vehicles: f64, outflow: f64, length_miles: f64, freeflow: f64, tau_hours: f64) -> f64 {
    let cap = freeflow * length_miles / tau_hours;
    if vehicles <= 0.0 {
        return cap;
    }
    (outflow * length_miles / (vehicles * tau_hours)).clamp(0.0, cap)
}

struct LinkInfo {
    length: f64,
    lanes: f64,
    freeflow: f64,
}

struct Accumulator {
    totals: LaneMetrics,
    contour: Contour,
}

impl Accumulator {
    fn new(label: &str) -> Self {
        Self {
            totals: LaneMetrics {
                label: label.to_string(),
                ..LaneMetrics::default()
            },
            contour: Contour {
                label: label.to_string(),
                vehicles: Vec::new(),
                density: Vec::new(),
                speed_mph: Vec::new(),
            },
        }
    }

    /// `vehicles[i]` and `outflow[i]` (`f_i + s_i`) are indexed by link; only
    /// `1..=K` are used.
    fn add_step(&mut self, links: &[LinkInfo], vehicles: &[f64], outflow: &[f64], tau: f64) {
        let k = links.len() - 2;
        let mut n_row = Vec::with_capacity(k);
        let mut d_row = Vec::with_capacity(k);
        let mut u_row = Vec::with_capacity(k);
        for i in 1..=k {
            let link = &links[i];
            let n = vehicles[i];
            let u = contour_speed_mph(n, outflow[i], link.length, link.freeflow, tau);
            let cap = link.freeflow * link.length / tau;
            self.totals.vmt += outflow[i] * link.length;
            self.totals.vht += tau * n;
            self.totals.delay += tau * n * (1.0 - u / cap).max(0.0);
            n_row.push(n);
            d_row.push(n / (link.length * link.lanes));
            u_row.push(u);
        }
        self.contour.vehicles.push(n_row);
        self.contour.density.push(d_row);
        self.contour.speed_mph.push(u_row);
    }
}

fn finish(groups: Vec<Accumulator>, queue_vht: f64) -> MetricsReport {
    let vmt = groups.iter().map(|a| a.totals.vmt).sum();
    let vht = groups.iter().map(|a| a.totals.vht).sum::<f64>() + queue_vht;
    let delay = groups.iter().map(|a| a.totals.delay).sum::<f64>() + queue_vht;
    let (groups, contours) = groups.into_iter().map(|a| (a.totals, a.contour)).unzip();
    MetricsReport {
        vmt,
        vht,
        delay,
        queue_vht,
        groups,
        contours,
    }
}

/// Metrics of a single-lane-group run. Queued vehicles count fully as delay.
pub fn single_metrics(traj: &FreewayTrajectory, g: &FreewayGeometry) -> MetricsReport {
    let tau = g.tau_hours;
    let links: Vec<LinkInfo> = g
        .links()
        .iter()
        .map(|l| LinkInfo {
            length: l.length_miles,
            lanes: l.lanes,
            freeflow: l.diagram.freeflow,
        })
        .collect();
    let mut acc = Accumulator::new("mainline");
    let mut queue_vht = 0.0;
    for (state, flows) in traj.states.iter().zip(&traj.flows) {
        let outflow: Vec<f64> = flows
            .mainline
            .iter()
            .zip(&flows.off_ramp)
            .map(|(f, s)| f + s)
            .collect();
        acc.add_step(&links, &state.vehicles, &outflow, tau);
        queue_vht += tau * (state.vehicles[0] + state.queues.iter().sum::<f64>());
    }
    finish(vec![acc], queue_vht)
}

/// Metrics of a toll-lane run, broken down by lane group.
pub fn dual_metrics(traj: &DualTrajectory, g: &DualGeometry) -> MetricsReport {
    let tau = g.tau_hours;
    let mut groups: Vec<Accumulator> = LaneGroup::ALL
        .iter()
        .map(|lg| Accumulator::new(lg.label()))
        .collect();
    let infos: Vec<Vec<LinkInfo>> = (0..2)
        .map(|gi| {
            g.links()
                .iter()
                .map(|l| LinkInfo {
                    length: l.length_miles,
                    lanes: l.lanes[gi],
                    freeflow: l.groups[gi].freeflow,
                })
                .collect()
        })
        .collect();
    let mut queue_vht = 0.0;
    for step in &traj.steps {
        for (gi, acc) in groups.iter_mut().enumerate() {
            let outflow: Vec<f64> = step.flows.mainline[gi]
                .iter()
                .zip(&step.flows.off_ramp[gi])
                .map(|(f, s)| f + s)
                .collect();
            acc.add_step(&infos[gi], &step.state.vehicles[gi], &outflow, tau);
        }
        queue_vht += tau * step.state.queues.iter().sum::<f64>();
    }
    finish(groups, queue_vht)
}
