//! Feedback control of entrance split ratios that drives the toll lane toward
//! free flow while keeping entrance queues growing as slowly as possible.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{DualGeometry, LaneSplit};
use crate::node::TollNodeInput;
use crate::sim::{
    dual_demands_supplies, resolve_dual_flows_with, toll_node_input, DualState, SplitController,
};

/// Bisection stops once the bracket is this narrow.
const BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("negative equilibrium ramp flow {flow} at entrance {link}")]
    InvalidTargets { link: usize, flow: f64 },
    #[error("link 1 must carry the first entrance")]
    MissingFirstEntrance,
}

/// Split ratios that maximize the admitted ramp flow at one entrance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthBounds {
    /// `[min A¹, max A¹]`; a point when both ends coincide.
    pub alpha_set: [f64; 2],
    /// `λ*`.
    pub lambda_star: f64,
    /// `ᾱ¹, ᾱ²`.
    pub alpha_bar: [f64; 2],
    pub r_min: f64,
    pub r_max: f64,
    pub ramp_demand: f64,
}

/// `λ(α¹, 1 - α¹) = min{λ¹(α¹), λ²(1 - α¹)}`.
pub fn reduction_at(input: &TollNodeInput, alpha1: f64) -> f64 {
    input
        .group_reduction(0, alpha1)
        .min(input.group_reduction(1, 1.0 - alpha1))
}

fn threshold(input: &TollNodeInput, g: usize) -> f64 {
    let rd = input.ramp_demand;
    let free = (input.supply[g] - input.upstream_demand[g]) / rd;
    let a = if input.ramp_priority > 0.0 {
        free.max(input.supply[g] / rd - input.upstream_priority[g] / input.ramp_priority)
    } else {
        free
    };
    a.clamp(0.0, 1.0)
}

/// `lim_{α → ᾱ+} λ^ξ(α)`.
fn right_limit(input: &TollNodeInput, g: usize, alpha_bar: f64) -> f64 {
    if alpha_bar > 0.0 {
        return input.group_reduction(g, alpha_bar);
    }
    let supply = input.supply[g];
    if supply > input.upstream_demand[g] {
        return 1.0;
    }
    let (pr, pf) = (input.ramp_priority, input.upstream_priority[g]);
    let share = if pr <= 0.0 || supply <= 0.0 {
        0.0
    } else if pf > 0.0 {
        supply * pr / (input.ramp_demand * pf)
    } else {
        f64::INFINITY
    };
    share.clamp(0.0, 1.0)
}

/// Range of toll splits that minimize the growth of the entrance queue and
/// the toll-lane ramp flows they produce.
pub fn growth_bounds(input: &TollNodeInput) -> GrowthBounds {
    let rd = input.ramp_demand;
    if rd <= 0.0 || input.supply[0] + input.supply[1] <= 0.0 {
        return GrowthBounds {
            alpha_set: [0.0, 1.0],
            lambda_star: if rd > 0.0 { 0.0 } else { 1.0 },
            alpha_bar: [0.0, 0.0],
            r_min: 0.0,
            r_max: 0.0,
            ramp_demand: rd.max(0.0),
        };
    }
    let bar = [threshold(input, 0), threshold(input, 1)];
    let (alpha_set, lambda_star) = if bar[0] + bar[1] >= 1.0 {
        ([1.0 - bar[1], bar[0]], 1.0)
    } else if input.ramp_priority <= 0.0
        && input.supply[0] <= input.upstream_demand[0]
        && input.supply[1] <= input.upstream_demand[1]
    {
        ([0.0, 1.0], 0.0)
    } else {
        let low = 1.0 - bar[1];
        let alpha = if input.group_reduction(0, low) >= right_limit(input, 1, bar[1]) {
            low
        } else if input.group_reduction(1, 1.0 - bar[0]) >= right_limit(input, 0, bar[0]) {
            bar[0]
        } else {
            // λ¹(α) - λ²(1 - α) decreases from positive to negative on (ᾱ¹, 1 - ᾱ²).
            let (mut lo, mut hi) = (bar[0], low);
            while hi - lo > BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                if input.group_reduction(0, mid) > input.group_reduction(1, 1.0 - mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        ([alpha, alpha], reduction_at(input, alpha))
    };
    let ramp_flow = |a: f64| reduction_at(input, a) * a * rd;
    GrowthBounds {
        alpha_set,
        lambda_star,
        alpha_bar: bar,
        r_min: ramp_flow(alpha_set[0]),
        r_max: ramp_flow(alpha_set[1]),
        ramp_demand: rd,
    }
}

/// Avoid pushing more than the lane-proportional share into the toll lane
/// when every split admits the whole ramp demand.
pub fn freeflow_correction(bounds: &GrowthBounds, split: LaneSplit) -> GrowthBounds {
    let share = split.toll_share();
    let mut out = *bounds;
    let [a1, a2] = bounds.alpha_bar;
    if a1 + a2 > 1.0 && a1 > share {
        let corrected = (1.0 - a2).max(share);
        out.alpha_bar[0] = corrected;
        out.alpha_set[1] = corrected;
        out.r_max = corrected * bounds.ramp_demand;
    }
    out
}

/// Toll-lane targets: maximum maintainable densities and the maximum
/// free-flow equilibrium with its per-segment vehicle budgets. Vectors are
/// indexed by link `0..=K+1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TollTargets {
    pub f_star: Vec<f64>,
    pub n_star: Vec<f64>,
    pub f_e: Vec<f64>,
    pub n_e: Vec<f64>,
    pub r_e: Vec<f64>,
    /// Entrances `i_1 = 1 < … < i_M`.
    pub entrances: Vec<usize>,
    /// `N^{1,e}(i_m, i_{m+1})`, summed over links `i_m..i_{m+1}-1` with
    /// `i_{M+1} = K + 2`.
    pub budgets: Vec<f64>,
}

impl TollTargets {
    /// Links `i_m..i_{m+1}-1` of segment `m`.
    pub fn segment(&self, m: usize) -> std::ops::Range<usize> {
        let end = self
            .entrances
            .get(m + 1)
            .copied()
            .unwrap_or(self.f_star.len());
        self.entrances[m]..end
    }
}

pub fn toll_targets(g: &DualGeometry) -> Result<TollTargets, ControlError> {
    let n = g.links().len();
    let exit = g.exit();
    let entrances = g.entrances();
    if entrances.first() != Some(&1) {
        return Err(ControlError::MissingFirstEntrance);
    }
    let beta = |i: usize| g.link(i).split_through();
    let v = |i: usize| g.link(i).groups[0].freeflow;

    let mut f_star = vec![0.0; n];
    f_star[exit] = g.link(exit).groups[0].capacity;
    for i in (1..exit).rev() {
        f_star[i] = g.link(i).outflow_capacity[0].min(f_star[i + 1] / beta(i + 1));
    }
    let mut n_star = vec![0.0; n];
    for i in 1..n {
        n_star[i] = f_star[i] / (beta(i) * v(i));
    }

    let mut f_e = vec![0.0; n];
    for (m, &start) in entrances.iter().enumerate() {
        let end = entrances.get(m + 1).copied().unwrap_or(n);
        f_e[start] = f_star[start];
        for i in start + 1..end {
            f_e[i] = beta(i) * f_e[i - 1];
        }
    }
    let mut n_e = vec![0.0; n];
    for i in 1..n {
        n_e[i] = f_e[i] / (beta(i) * v(i));
    }
    let mut r_e = vec![0.0; n];
    for &i in &entrances {
        let flow = f_e[i] / beta(i) - f_e[i - 1];
        if flow < -1e-12 {
            return Err(ControlError::InvalidTargets { link: i, flow });
        }
        r_e[i] = flow.max(0.0);
    }
    let mut targets = TollTargets {
        f_star,
        n_star,
        f_e,
        n_e,
        r_e,
        entrances,
        budgets: Vec::new(),
    };
    targets.budgets = (0..targets.entrances.len())
        .map(|m| targets.segment(m).map(|i| targets.n_e[i]).sum())
        .collect();
    Ok(targets)
}

/// Outcome of the controller at one entrance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlDirective {
    pub entrance: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Chosen toll-lane ramp flow `r¹`.
    pub ramp_flow: f64,
    /// Bounds after the free-flow correction and the inflow clipping.
    pub bounds: GrowthBounds,
    /// Excess `Δn` when this entrance was processed.
    pub excess: f64,
    /// Target reduction `γ` applied to this entrance's segment.
    pub gamma: f64,
}

/// `γ = min{1, (f^{1,s} - r¹) / f^{1,e}}` for the segment upstream of an
/// entrance, kept in `[0, 1]`; 1 when the upstream target flow is zero.
pub fn reduction_coefficient(supply: f64, ramp_flow: f64, target_flow: f64) -> f64 {
    if target_flow > 0.0 {
        ((supply - ramp_flow) / target_flow).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Split ratios for every entrance at the current state.
pub fn compute_directives(
    state: &DualState,
    g: &DualGeometry,
    targets: &TollTargets,
) -> Vec<ControlDirective> {
    let cond = dual_demands_supplies(state, g);
    let share = g.lane_split.toll_share();
    let entrances = &targets.entrances;
    let inputs: Vec<TollNodeInput> = entrances
        .iter()
        .map(|&i| toll_node_input(&cond, g, i, share))
        .collect();
    let mut bounds: Vec<GrowthBounds> = inputs
        .iter()
        .map(|input| freeflow_correction(&growth_bounds(input), g.lane_split))
        .collect();

    // Flow estimates with every entrance sending r^{1,min} into the toll lane.
    let mut splits = vec![share; g.links().len()];
    for (m, &i) in entrances.iter().enumerate() {
        splits[i] = bounds[m].alpha_set[0];
    }
    let estimate = resolve_dual_flows_with(&cond, g, &splits);

    for (m, &i) in entrances.iter().enumerate() {
        let upstream = cond.outflow_demand[0][i - 1];
        let room = cond.inflow_supply[0][i].min(targets.f_e[i] / g.link(i).split_through());
        let b = &mut bounds[m];
        if upstream + b.r_max > room {
            b.r_max = b.r_min.max(room - upstream);
        }
    }

    let mut directives = vec![None; entrances.len()];
    let mut excess = 0.0;
    let mut gamma = 1.0;
    for m in (0..entrances.len()).rev() {
        let segment = targets.segment(m);
        let i = entrances[m];
        let vehicles: f64 = segment.clone().map(|j| state.vehicles[0][j]).sum();
        let off: f64 = segment.clone().map(|j| estimate.off_ramp[0][j]).sum();
        let inflow = estimate.mainline[0][i - 1];
        let outflow = estimate.mainline[0][segment.end - 1];
        excess += vehicles - gamma * targets.budgets[m] + inflow - outflow - off;
        let b = bounds[m];
        let ramp_flow = b.r_min.max(b.r_max.min(-excess));
        let rate = b.lambda_star * b.ramp_demand;
        let alpha1 = if rate > 0.0 {
            (ramp_flow / rate).clamp(0.0, 1.0)
        } else {
            share
        };
        directives[m] = Some(ControlDirective {
            entrance: i,
            alpha1,
            alpha2: 1.0 - alpha1,
            ramp_flow,
            bounds: b,
            excess,
            gamma,
        });
        if m == 0 {
            break;
        }
        excess = (excess + ramp_flow).max(0.0);
        gamma = reduction_coefficient(cond.inflow_supply[0][i], ramp_flow, targets.f_e[i - 1]);
    }
    directives.into_iter().flatten().collect()
}

/// Split controller that recomputes directives every step.
#[derive(Debug, Clone, Default)]
pub struct TollController {
    targets: Option<TollTargets>,
    /// Directives of the most recent step.
    pub last: Vec<ControlDirective>,
}

impl TollController {
    pub fn new(g: &DualGeometry) -> Result<Self, ControlError> {
        Ok(Self {
            targets: Some(toll_targets(g)?),
            last: Vec::new(),
        })
    }

    pub fn targets(&self) -> Option<&TollTargets> {
        self.targets.as_ref()
    }
}

impl SplitController for TollController {
    fn request(&mut self, state: &DualState, geometry: &DualGeometry) -> Vec<f64> {
        let mut splits = vec![geometry.lane_split.toll_share(); geometry.links().len()];
        if self.targets.is_none() {
            self.targets = toll_targets(geometry).ok();
        }
        let Some(targets) = &self.targets else {
            return splits;
        };
        self.last = compute_directives(state, geometry, targets);
        for d in &self.last {
            splits[d.entrance] = d.alpha1;
        }
        splits
    }
}
