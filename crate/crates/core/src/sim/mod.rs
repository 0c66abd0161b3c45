//! Time stepping for a freeway with one lane group and for a freeway split
//! into toll and general-purpose lane groups.

mod metrics;
mod transform;

pub use metrics::{contour_speed_mph, dual_metrics, single_metrics, Contour, LaneMetrics, MetricsReport};
pub use transform::{transform_remove_offramps, OfframpFreeSystem};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{DualGeometry, FreewayGeometry, MergePriority, PriorityMode};
use crate::node::{solve_merge, solve_toll_node, TollNodeInput};

/// Bound violations smaller than this are attributed to roundoff.
pub const STATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state corruption at step {t}: {what} {index} = {value} outside [0, {bound}]")]
    StateCorruption {
        t: usize,
        what: &'static str,
        index: usize,
        value: f64,
        bound: f64,
    },
    #[error("simulation horizon must be at least one step")]
    ZeroHorizon,
    #[error("{what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("demand series for {0} must have nonnegative, finite values and increasing steps")]
    InvalidSeries(String),
}

/// Stepwise-constant series of flows (vehicles per step) starting at the
/// listed steps. The value before the first breakpoint is zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Series {
    points: Vec<(usize, f64)>,
}

impl Series {
    pub fn new(points: Vec<(usize, f64)>) -> Result<Self, SimError> {
        let increasing = points.windows(2).all(|w| w[0].0 < w[1].0);
        let valid = points.iter().all(|&(_, v)| v >= 0.0 && v.is_finite());
        if !increasing || !valid {
            return Err(SimError::InvalidSeries(format!("{points:?}")));
        }
        Ok(Self { points })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![(0, value)],
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn at(&self, t: usize) -> f64 {
        self.points
            .iter()
            .take_while(|(start, _)| *start <= t)
            .last()
            .map_or(0.0, |&(_, v)| v)
    }

    /// True when the value never changes after step 0.
    pub fn is_constant(&self) -> bool {
        match self.points.as_slice() {
            [] => true,
            [(0, _)] => true,
            [(_, v)] => *v == 0.0,
            _ => false,
        }
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }
}

/// Entrance flow `f_{-1}(t)` and on-ramp demands `d_i(t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandProfile {
    pub entrance: Series,
    /// One series per link `0..=K+1`; only on-ramp links should be nonzero.
    pub ramps: Vec<Series>,
}

/// Demands of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDemand {
    pub entrance: f64,
    pub ramps: Vec<f64>,
}

impl DemandProfile {
    pub fn constant(entrance: f64, ramps: Vec<f64>) -> Self {
        Self {
            entrance: Series::constant(entrance),
            ramps: ramps.into_iter().map(Series::constant).collect(),
        }
    }

    pub fn zero(num_links: usize) -> Self {
        Self {
            entrance: Series::zero(),
            ramps: vec![Series::zero(); num_links],
        }
    }

    pub fn at(&self, t: usize) -> StepDemand {
        StepDemand {
            entrance: self.entrance.at(t),
            ramps: self.ramps.iter().map(|s| s.at(t)).collect(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.entrance.is_constant() && self.ramps.iter().all(Series::is_constant)
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), SimError> {
    if expected != got {
        return Err(SimError::LengthMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Vehicles per link, ramp queues and the entrance queue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreewayState {
    /// `n_0..n_{K+1}`; `n_0` is the entrance queue.
    pub vehicles: Vec<f64>,
    /// On-ramp queues `q_i`, indexed by link.
    pub queues: Vec<f64>,
    pub t: usize,
}

impl FreewayState {
    pub fn empty(g: &FreewayGeometry) -> Self {
        let n = g.links().len();
        Self {
            vehicles: vec![0.0; n],
            queues: vec![0.0; n],
            t: 0,
        }
    }

    pub fn entrance_queue(&self) -> f64 {
        self.vehicles[0]
    }

    /// All vehicles in the system, queues included.
    pub fn total_vehicles(&self) -> f64 {
        self.vehicles.iter().sum::<f64>() + self.queues.iter().sum::<f64>()
    }
}

/// Outflow demands, inflow supplies and on-ramp demands of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConditions {
    pub outflow_demand: Vec<f64>,
    pub inflow_supply: Vec<f64>,
    pub ramp_demand: Vec<f64>,
}

/// `f^d_i = min{β^f v n, F^d}`, `f^s_i = min{w (N - n), F^s}`, `r^d_i = min{v^r q, R}`.
pub fn demands_supplies(state: &FreewayState, g: &FreewayGeometry) -> LinkConditions {
    let links = g.links();
    let mut cond = LinkConditions {
        outflow_demand: vec![0.0; links.len()],
        inflow_supply: vec![0.0; links.len()],
        ramp_demand: vec![0.0; links.len()],
    };
    for (i, link) in links.iter().enumerate() {
        let n = state.vehicles[i];
        let d = &link.diagram;
        cond.outflow_demand[i] = (link.split_through() * d.freeflow * n).min(link.outflow_capacity);
        if i > 0 {
            cond.inflow_supply[i] =
                (d.congestion * (d.max_vehicles - n)).min(link.inflow_capacity);
        }
        cond.ramp_demand[i] = (link.ramp.on_freeflow * state.queues[i]).min(link.ramp.on_capacity);
    }
    cond
}

/// Realized flows of a step for a single lane group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreewayFlows {
    /// `f_i`: from link `i` to link `i + 1` (`f_{K+1}` leaves the exit).
    pub mainline: Vec<f64>,
    /// `r_i`.
    pub on_ramp: Vec<f64>,
    /// `s_i`.
    pub off_ramp: Vec<f64>,
}

fn merge_priority(g: &FreewayGeometry, i: usize, upstream_demand: f64, ramp_demand: f64) -> MergePriority {
    match g.priority_mode {
        PriorityMode::Capacity => g.priority(i),
        PriorityMode::Demand if upstream_demand + ramp_demand > 0.0 => {
            MergePriority::from_weights(upstream_demand, ramp_demand)
        }
        PriorityMode::Demand => g.priority(i),
    }
}

/// Resolve every node of the freeway for the current state.
pub fn resolve_flows(state: &FreewayState, g: &FreewayGeometry) -> FreewayFlows {
    let cond = demands_supplies(state, g);
    let n = g.links().len();
    let exit = g.exit();
    let mut flows = FreewayFlows {
        mainline: vec![0.0; n],
        on_ramp: vec![0.0; n],
        off_ramp: vec![0.0; n],
    };
    for i in 1..=exit {
        let ramp_demand = if i < exit { cond.ramp_demand[i] } else { 0.0 };
        let p = merge_priority(g, i, cond.outflow_demand[i - 1], ramp_demand);
        let (f_up, r) = solve_merge(
            cond.outflow_demand[i - 1],
            ramp_demand,
            cond.inflow_supply[i],
            p.upstream,
            p.ramp,
        );
        flows.mainline[i - 1] = f_up;
        flows.on_ramp[i] = r;
    }
    flows.mainline[exit] = cond.outflow_demand[exit];
    for i in 1..=exit {
        let link = g.link(i);
        flows.off_ramp[i] = link.ramp.split_off / link.split_through() * flows.mainline[i];
    }
    flows
}

fn check_bounds(
    t: usize,
    what: &'static str,
    index: usize,
    value: f64,
    bound: f64,
) -> Result<(), SimError> {
    if value < -STATE_TOL || value > bound + STATE_TOL || !value.is_finite() {
        return Err(SimError::StateCorruption {
            t,
            what,
            index,
            value,
            bound,
        });
    }
    Ok(())
}

/// Advance one time step: resolve all nodes, then apply conservation to every
/// link and queue.
pub fn step(
    state: &FreewayState,
    g: &FreewayGeometry,
    demand: &StepDemand,
) -> Result<(FreewayState, FreewayFlows), SimError> {
    let n = g.links().len();
    check_len("state vehicles", n, state.vehicles.len())?;
    check_len("state queues", n, state.queues.len())?;
    check_len("ramp demand", n, demand.ramps.len())?;
    let flows = resolve_flows(state, g);
    let mut next = state.clone();
    next.t = state.t + 1;
    next.vehicles[0] += demand.entrance - flows.mainline[0];
    for i in 1..n {
        next.vehicles[i] += flows.mainline[i - 1] + flows.on_ramp[i]
            - flows.mainline[i]
            - flows.off_ramp[i];
        next.queues[i] += demand.ramps[i] - flows.on_ramp[i];
    }
    check_bounds(next.t, "entrance queue", 0, next.vehicles[0], f64::INFINITY)?;
    for i in 1..n {
        check_bounds(next.t, "link", i, next.vehicles[i], g.link(i).diagram.max_vehicles)?;
        check_bounds(next.t, "ramp queue", i, next.queues[i], f64::INFINITY)?;
    }
    Ok((next, flows))
}

/// Vehicles per lane group (index 0 toll, 1 general purpose) and ramp queues.
/// The entrance queue is the queue of the on-ramp at link 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualState {
    pub vehicles: [Vec<f64>; 2],
    pub queues: Vec<f64>,
    pub t: usize,
}

impl DualState {
    pub fn empty(g: &DualGeometry) -> Self {
        let n = g.links().len();
        Self {
            vehicles: [vec![0.0; n], vec![0.0; n]],
            queues: vec![0.0; n],
            t: 0,
        }
    }

    /// Split a single-group state proportionally to lane counts. The entrance
    /// queue moves to the queue of link 1.
    pub fn from_single(state: &FreewayState, g: &DualGeometry) -> Self {
        let share = [
            g.lane_split.share(crate::geometry::LaneGroup::Toll),
            g.lane_split.share(crate::geometry::LaneGroup::General),
        ];
        let mut vehicles = share.map(|s| state.vehicles.iter().map(|n| n * s).collect::<Vec<_>>());
        vehicles[0][0] = 0.0;
        vehicles[1][0] = 0.0;
        let mut queues = state.queues.clone();
        queues[1] += state.vehicles[0];
        Self {
            vehicles,
            queues,
            t: state.t,
        }
    }

    pub fn total_vehicles(&self) -> f64 {
        self.vehicles[0].iter().sum::<f64>()
            + self.vehicles[1].iter().sum::<f64>()
            + self.queues.iter().sum::<f64>()
    }
}

/// Demands and supplies per lane group.
#[derive(Debug, Clone, PartialEq)]
pub struct DualConditions {
    pub outflow_demand: [Vec<f64>; 2],
    pub inflow_supply: [Vec<f64>; 2],
    pub ramp_demand: Vec<f64>,
}

pub fn dual_demands_supplies(state: &DualState, g: &DualGeometry) -> DualConditions {
    let n = g.links().len();
    let mut cond = DualConditions {
        outflow_demand: [vec![0.0; n], vec![0.0; n]],
        inflow_supply: [vec![0.0; n], vec![0.0; n]],
        ramp_demand: vec![0.0; n],
    };
    for (i, link) in g.links().iter().enumerate() {
        for gi in 0..2 {
            let d = &link.groups[gi];
            let nv = state.vehicles[gi][i];
            cond.outflow_demand[gi][i] =
                (link.split_through() * d.freeflow * nv).min(link.outflow_capacity[gi]);
            if i > 0 {
                cond.inflow_supply[gi][i] =
                    (d.congestion * (d.max_vehicles - nv)).min(link.inflow_capacity[gi]);
            }
        }
        cond.ramp_demand[i] = (link.ramp.on_freeflow * state.queues[i]).min(link.ramp.on_capacity);
    }
    cond
}

/// Local inputs of the toll-lane node feeding link `i` for toll split `alpha1`.
pub fn toll_node_input(
    cond: &DualConditions,
    g: &DualGeometry,
    i: usize,
    alpha1: f64,
) -> TollNodeInput {
    let link = g.link(i);
    let ramp_demand = if i < g.exit() { cond.ramp_demand[i] } else { 0.0 };
    let upstream_demand = [cond.outflow_demand[0][i - 1], cond.outflow_demand[1][i - 1]];
    let (upstream_priority, ramp_priority) = match g.priority_mode {
        PriorityMode::Demand if upstream_demand[0] + upstream_demand[1] + ramp_demand > 0.0 => {
            let total = upstream_demand[0] + upstream_demand[1] + ramp_demand;
            (upstream_demand.map(|d| d / total), ramp_demand / total)
        }
        _ => (link.upstream_priority, link.ramp_priority),
    };
    let alpha1 = alpha1.clamp(0.0, 1.0);
    TollNodeInput {
        alpha: [alpha1, 1.0 - alpha1],
        ramp_demand,
        upstream_demand,
        supply: [cond.inflow_supply[0][i], cond.inflow_supply[1][i]],
        upstream_priority,
        ramp_priority,
    }
}

/// Realized flows per lane group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualFlows {
    pub mainline: [Vec<f64>; 2],
    pub on_ramp: [Vec<f64>; 2],
    pub off_ramp: [Vec<f64>; 2],
    /// Realized reduction factor `λ_i` of every node.
    pub reduction: Vec<f64>,
}

impl DualFlows {
    pub fn ramp_total(&self, i: usize) -> f64 {
        self.on_ramp[0][i] + self.on_ramp[1][i]
    }
}

/// Resolve every node for the current state with toll splits `splits[i]`
/// (one entry per link; only on-ramp links use theirs).
pub fn resolve_dual_flows(state: &DualState, g: &DualGeometry, splits: &[f64]) -> DualFlows {
    let cond = dual_demands_supplies(state, g);
    resolve_dual_flows_with(&cond, g, splits)
}

pub(crate) fn resolve_dual_flows_with(
    cond: &DualConditions,
    g: &DualGeometry,
    splits: &[f64],
) -> DualFlows {
    let n = g.links().len();
    let exit = g.exit();
    let mut flows = DualFlows {
        mainline: [vec![0.0; n], vec![0.0; n]],
        on_ramp: [vec![0.0; n], vec![0.0; n]],
        off_ramp: [vec![0.0; n], vec![0.0; n]],
        reduction: vec![1.0; n],
    };
    let default_split = g.lane_split.toll_share();
    for i in 1..=exit {
        let alpha1 = splits.get(i).copied().unwrap_or(default_split);
        let input = toll_node_input(cond, g, i, alpha1);
        let result = solve_toll_node(&input);
        for gi in 0..2 {
            flows.mainline[gi][i - 1] = result.upstream_flow[gi];
            flows.on_ramp[gi][i] = result.ramp_flow[gi];
        }
        flows.reduction[i] = result.reduction;
    }
    for gi in 0..2 {
        flows.mainline[gi][exit] = cond.outflow_demand[gi][exit];
        for i in 1..=exit {
            let link = g.link(i);
            flows.off_ramp[gi][i] = link.ramp.split_off / link.split_through() * flows.mainline[gi][i];
        }
    }
    flows
}

/// Advance a toll-lane freeway one step with toll splits `splits`. The
/// entrance flow joins the queue of the on-ramp at link 1.
pub fn step_dual(
    state: &DualState,
    g: &DualGeometry,
    demand: &StepDemand,
    splits: &[f64],
) -> Result<(DualState, DualFlows), SimError> {
    let n = g.links().len();
    check_len("toll-lane vehicles", n, state.vehicles[0].len())?;
    check_len("general-lane vehicles", n, state.vehicles[1].len())?;
    check_len("state queues", n, state.queues.len())?;
    check_len("ramp demand", n, demand.ramps.len())?;
    let flows = resolve_dual_flows(state, g, splits);
    let mut next = state.clone();
    next.t = state.t + 1;
    for gi in 0..2 {
        for i in 1..n {
            next.vehicles[gi][i] += flows.mainline[gi][i - 1] + flows.on_ramp[gi][i]
                - flows.mainline[gi][i]
                - flows.off_ramp[gi][i];
        }
    }
    for i in 1..n {
        let mut arrivals = demand.ramps[i];
        if i == 1 {
            arrivals += demand.entrance;
        }
        next.queues[i] += arrivals - flows.ramp_total(i);
    }
    for gi in 0..2 {
        let what = if gi == 0 { "toll link" } else { "general link" };
        for i in 1..n {
            check_bounds(next.t, what, i, next.vehicles[gi][i], g.link(i).groups[gi].max_vehicles)?;
        }
    }
    for i in 1..n {
        check_bounds(next.t, "ramp queue", i, next.queues[i], f64::INFINITY)?;
    }
    Ok((next, flows))
}

/// Supplies the toll split `α¹` requested at each entrance.
pub trait SplitController {
    /// One entry per link `0..=K+1`; entries at links without on-ramps are ignored.
    fn request(&mut self, state: &DualState, geometry: &DualGeometry) -> Vec<f64>;
}

/// The same toll split at every entrance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedSplit(pub f64);

impl SplitController for FixedSplit {
    fn request(&mut self, _state: &DualState, geometry: &DualGeometry) -> Vec<f64> {
        vec![self.0; geometry.links().len()]
    }
}

/// Split realized by a pricing mechanism at one entrance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PricedSplit {
    pub alpha1: f64,
    pub toll: f64,
    pub revenue: f64,
}

/// Turns requested splits into tolls and the splits travelers actually produce.
pub trait SplitPricer {
    /// One entry per link, aligned with `requested`.
    fn realize(
        &mut self,
        state: &DualState,
        geometry: &DualGeometry,
        requested: &[f64],
    ) -> Vec<PricedSplit>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreewayTrajectory {
    /// State at the start of each step.
    pub states: Vec<FreewayState>,
    pub flows: Vec<FreewayFlows>,
    pub final_state: FreewayState,
}

/// Simulate a single-lane-group freeway for `horizon` steps.
pub fn run(
    g: &FreewayGeometry,
    profile: &DemandProfile,
    initial: FreewayState,
    horizon: usize,
) -> Result<FreewayTrajectory, SimError> {
    if horizon == 0 {
        return Err(SimError::ZeroHorizon);
    }
    check_len("ramp demand series", g.links().len(), profile.ramps.len())?;
    let mut states = Vec::with_capacity(horizon);
    let mut all_flows = Vec::with_capacity(horizon);
    let mut state = initial;
    for _ in 0..horizon {
        let demand = profile.at(state.t);
        let (next, flows) = step(&state, g, &demand)?;
        states.push(state);
        all_flows.push(flows);
        state = next;
    }
    Ok(FreewayTrajectory {
        states,
        flows: all_flows,
        final_state: state,
    })
}

/// One recorded step of a toll-lane run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualStep {
    pub state: DualState,
    pub flows: DualFlows,
    /// Splits asked for by the controller.
    pub requested: Vec<f64>,
    /// Splits, tolls and revenue actually applied.
    pub realized: Vec<PricedSplit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualTrajectory {
    pub steps: Vec<DualStep>,
    pub final_state: DualState,
}

/// Simulate a toll-lane freeway. Without a controller, entrances split in
/// proportion to lane counts; with a pricer, its realized splits replace the
/// requested ones.
pub fn run_dual(
    g: &DualGeometry,
    profile: &DemandProfile,
    initial: DualState,
    horizon: usize,
    mut controller: Option<&mut dyn SplitController>,
    mut pricer: Option<&mut dyn SplitPricer>,
) -> Result<DualTrajectory, SimError> {
    if horizon == 0 {
        return Err(SimError::ZeroHorizon);
    }
    check_len("ramp demand series", g.links().len(), profile.ramps.len())?;
    let mut steps = Vec::with_capacity(horizon);
    let mut state = initial;
    let proportional = g.lane_split.toll_share();
    for _ in 0..horizon {
        let demand = profile.at(state.t);
        let requested = match controller.as_deref_mut() {
            Some(c) => c.request(&state, g),
            None => vec![proportional; g.links().len()],
        };
        let realized = match pricer.as_deref_mut() {
            Some(p) => p.realize(&state, g, &requested),
            None => requested
                .iter()
                .map(|&alpha1| PricedSplit {
                    alpha1,
                    ..PricedSplit::default()
                })
                .collect(),
        };
        let splits: Vec<f64> = realized.iter().map(|p| p.alpha1).collect();
        let (next, flows) = step_dual(&state, g, &demand, &splits)?;
        steps.push(DualStep {
            state,
            flows,
            requested,
            realized,
        });
        state = next;
    }
    Ok(DualTrajectory {
        steps,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{split_lanes, FundamentalDiagram, LaneSplit, RampSpec};

    fn chain(k: usize) -> FreewayGeometry {
        let d = FundamentalDiagram::new(20.0, 40.0, 0.5, 1.0);
        FreewayGeometry::new(vec![d; k + 2], vec![RampSpec::NONE; k + 2]).unwrap()
    }

    #[test]
    fn demands_and_supplies() {
        let g = chain(1);
        let mut s = FreewayState::empty(&g);
        s.vehicles[1] = 10.0;
        let c = demands_supplies(&s, &g);
        assert_eq!(c.outflow_demand[1], 5.0);
        // w = 1, N - n = 30, F = 20
        assert_eq!(c.inflow_supply[1], 20.0);

        let d = FundamentalDiagram::new(20.0, 40.0, 0.5, 0.5);
        let g = FreewayGeometry::new(vec![d; 3], vec![RampSpec::NONE; 3]).unwrap();
        let c = demands_supplies(&s, &g);
        assert_eq!(c.inflow_supply[1], 15.0);

        let ramps = vec![
            RampSpec::NONE,
            RampSpec::NONE.with_off_ramp(2.0, 0.2),
            RampSpec::NONE,
        ];
        let d = FundamentalDiagram::new(20.0, 80.0, 1.0, 0.5);
        let g = FreewayGeometry::new(vec![d; 3], ramps).unwrap();
        let mut s = FreewayState::empty(&g);
        s.vehicles[1] = 60.0;
        let c = demands_supplies(&s, &g);
        assert!((c.outflow_demand[1] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn conservation_on_one_link() {
        // Inflow 2 from the entrance, outflow 3 from the link.
        let d = FundamentalDiagram::new(20.0, 200.0, 0.3, 0.5);
        let mut entrance = d;
        entrance.freeflow = 1.0;
        let g = FreewayGeometry::new(vec![entrance, d, d], vec![RampSpec::NONE; 3]).unwrap();
        let mut s = FreewayState::empty(&g);
        s.vehicles[0] = 2.0;
        s.vehicles[1] = 10.0;
        let demand = StepDemand {
            entrance: 0.0,
            ramps: vec![0.0; 3],
        };
        let (next, flows) = step(&s, &g, &demand).unwrap();
        assert!((flows.mainline[0] - 2.0).abs() < 1e-12);
        assert!((flows.mainline[1] - 3.0).abs() < 1e-12);
        assert!((next.vehicles[1] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn ramp_queue_dynamics() {
        let d = FundamentalDiagram::new(20.0, 200.0, 0.5, 0.5);
        let ramps = vec![
            RampSpec::NONE,
            RampSpec::NONE,
            RampSpec::on_ramp(1.0, 1.0),
            RampSpec::NONE,
        ];
        let g = FreewayGeometry::new(vec![d; 4], ramps).unwrap();
        let mut s = FreewayState::empty(&g);
        s.queues[2] = 5.0;
        let demand = StepDemand {
            entrance: 0.0,
            ramps: vec![0.0, 0.0, 2.0, 0.0],
        };
        let (next, flows) = step(&s, &g, &demand).unwrap();
        assert_eq!(flows.on_ramp[2], 1.0);
        assert_eq!(next.queues[2], 6.0);
    }

    #[test]
    fn empty_freeway_is_a_fixed_point() {
        let g = chain(3);
        let s = FreewayState::empty(&g);
        let demand = StepDemand {
            entrance: 0.0,
            ramps: vec![0.0; 5],
        };
        let (next, flows) = step(&s, &g, &demand).unwrap();
        assert_eq!(next.vehicles, s.vehicles);
        assert!(flows.mainline.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn constant_demand_reaches_fixed_point() {
        let g = chain(4);
        let profile = DemandProfile::constant(6.0, vec![0.0; 6]);
        let traj = run(&g, &profile, FreewayState::empty(&g), 200).unwrap();
        let last = &traj.final_state;
        let (again, _) = step(last, &g, &profile.at(last.t)).unwrap();
        for (a, b) in last.vehicles.iter().zip(&again.vehicles) {
            assert!((a - b).abs() < 1e-9);
        }
        // Free flow at rate 6 with v = 0.5.
        assert!((last.vehicles[2] - 12.0).abs() < 1e-9);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let g = chain(1);
        let profile = DemandProfile::zero(3);
        assert_eq!(
            run(&g, &profile, FreewayState::empty(&g), 0),
            Err(SimError::ZeroHorizon)
        );
    }

    #[test]
    fn series_lookup() {
        let s = Series::new(vec![(0, 1.0), (5, 3.0), (10, 0.0)]).unwrap();
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(4), 1.0);
        assert_eq!(s.at(5), 3.0);
        assert_eq!(s.at(99), 0.0);
        assert!(!s.is_constant());
        assert!(Series::constant(2.0).is_constant());
        assert!(Series::new(vec![(3, 1.0), (2, 1.0)]).is_err());
        assert!(Series::new(vec![(0, -1.0)]).is_err());
    }

    #[test]
    fn proportional_dual_matches_single() {
        let d = FundamentalDiagram::new(12.0, 60.0, 0.8, 0.4);
        let ramps = vec![
            RampSpec::NONE,
            RampSpec::NONE,
            RampSpec::on_ramp(4.0, 0.7).with_off_ramp(3.0, 0.1),
            RampSpec::NONE,
            RampSpec::NONE,
        ];
        let g = FreewayGeometry::new(vec![d; 5], ramps).unwrap();
        let dual = split_lanes(&g, LaneSplit::new(1, 2).unwrap()).unwrap();
        let profile = DemandProfile::constant(11.0, vec![0.0, 0.0, 3.5, 0.0, 0.0]);
        let single = run(&g, &profile, FreewayState::empty(&g), 80).unwrap();
        let split = run_dual(&dual, &profile, DualState::empty(&dual), 80, None, None).unwrap();
        for (s, d) in single.states.iter().zip(&split.steps) {
            for i in 1..5 {
                let total = d.state.vehicles[0][i] + d.state.vehicles[1][i];
                assert!((s.vehicles[i] - total).abs() < 1e-9);
            }
            let entrance = s.vehicles[0];
            assert!((entrance - d.state.queues[1]).abs() < 1e-9);
        }
    }
}
