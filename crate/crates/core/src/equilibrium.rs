//! Equilibria of a freeway under constant inflows: maximum flows, the unique
//! equilibrium flows, feasibility, and the set of equilibrium densities.

use std::fmt;

use serde::Serialize;

use crate::geometry::FreewayGeometry;
use crate::sim::FreewayState;

/// Tolerance for equalities in normalized units.
pub const EQ_TOL: f64 = 1e-9;

/// Distance from an equality below which an instance is reported as close to
/// switching structure.
const NEAR_DEGENERATE: f64 = 1e-6;

/// `f̄_i` for `0..=K+1` and `r̄_i` (zero outside `1..=K`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxFlows {
    pub mainline: Vec<f64>,
    pub on_ramp: Vec<f64>,
}

/// `f̄_0 = min{f_{-1}, F_0}`, `r̄_i = min{d_i, R_i}`,
/// `f̄_i = min{β^f_i (f̄_{i-1} + r̄_i), F^d_i}`.
pub fn max_flows(g: &FreewayGeometry, entrance: f64, ramp_demand: &[f64]) -> MaxFlows {
    let n = g.links().len();
    let exit = g.exit();
    let mut on_ramp = vec![0.0; n];
    for i in 1..exit {
        on_ramp[i] = ramp_demand.get(i).copied().unwrap_or(0.0).min(g.link(i).ramp.on_capacity);
    }
    let mut mainline = vec![0.0; n];
    mainline[0] = entrance.min(g.link(0).outflow_capacity);
    for i in 1..n {
        let link = g.link(i);
        mainline[i] = (link.split_through() * (mainline[i - 1] + on_ramp[i])).min(link.outflow_capacity);
    }
    MaxFlows { mainline, on_ramp }
}

/// Equilibrium flows with the maximum flows they were derived from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumFlows {
    pub mainline: Vec<f64>,
    pub on_ramp: Vec<f64>,
    pub max: MaxFlows,
}

/// Backward recursion from `f_{K+1} = f̄_{K+1}`: at each node the upstream link
/// or the ramp that fits in its priority share is served fully and the other
/// takes the rest; if neither fits, the inflow is split by priorities.
pub fn equilibrium_flows(g: &FreewayGeometry, max: &MaxFlows) -> EquilibriumFlows {
    let n = g.links().len();
    let exit = g.exit();
    let mut mainline = vec![0.0; n];
    let mut on_ramp = vec![0.0; n];
    mainline[exit] = max.mainline[exit];
    for i in (1..=exit).rev() {
        let inflow = mainline[i] / g.link(i).split_through();
        let p = g.priority(i);
        let up_max = max.mainline[i - 1];
        let ramp_max = max.on_ramp[i];
        if up_max <= p.upstream * inflow {
            mainline[i - 1] = up_max;
            on_ramp[i] = inflow - up_max;
        } else if ramp_max <= p.ramp * inflow {
            on_ramp[i] = ramp_max;
            mainline[i - 1] = inflow - ramp_max;
        } else {
            mainline[i - 1] = p.upstream * inflow;
            on_ramp[i] = p.ramp * inflow;
        }
    }
    EquilibriumFlows {
        mainline,
        on_ramp,
        max: max.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FeasibilityClass {
    StrictlyFeasible,
    Feasible,
    Infeasible,
}

impl fmt::Display for FeasibilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::StrictlyFeasible => "strictly feasible",
            Self::Feasible => "feasible",
            Self::Infeasible => "infeasible",
        })
    }
}

/// `f_i(f_0, r) = f_0 Π_{k≤i} β_k + Σ_{j≤i} r_j Π_{j≤k≤i} β_k` for `i = 1..=K+1`
/// (entry 0 holds `f_0`).
pub fn induced_flows(g: &FreewayGeometry, f0: f64, on_ramp: &[f64]) -> Vec<f64> {
    let n = g.links().len();
    let beta: Vec<f64> = g.links().iter().map(|l| l.split_through()).collect();
    let product = |from: usize, to: usize| (from..=to).map(|k| beta[k]).product::<f64>();
    let mut flows = vec![f0; n];
    for i in 1..n {
        let mut f = f0 * product(1, i);
        for j in 1..=i {
            f += on_ramp.get(j).copied().unwrap_or(0.0) * product(j, i);
        }
        flows[i] = f;
    }
    flows
}

pub fn classify(g: &FreewayGeometry, entrance: f64, ramp_demand: &[f64]) -> FeasibilityClass {
    classify_max(g, &max_flows(g, entrance, ramp_demand))
}

fn classify_max(g: &FreewayGeometry, max: &MaxFlows) -> FeasibilityClass {
    let induced = induced_flows(g, max.mainline[0], &max.on_ramp);
    let mut strict = true;
    for i in 1..g.links().len() {
        let cap = g.link(i).outflow_capacity;
        if induced[i] > cap + EQ_TOL {
            return FeasibilityClass::Infeasible;
        }
        if induced[i] >= cap - EQ_TOL {
            strict = false;
        }
    }
    if strict {
        FeasibilityClass::StrictlyFeasible
    } else {
        FeasibilityClass::Feasible
    }
}

/// One-parameter family: the links before `pivot` are uncongested, the links
/// after it congested, and `n_pivot` ranges over `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Family {
    pub pivot: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SegmentSet {
    /// The only admissible densities of the segment's links.
    Single(Vec<f64>),
    Union(Vec<Family>),
}

/// Links `first..=last`, ending at a bottleneck unless it is the last segment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub first: usize,
    pub last: usize,
    pub bottleneck: Option<usize>,
    /// Last link forced uncongested (`first - 1` if none).
    pub uncongested_until: usize,
    /// First link forced congested (`last + 1` if none).
    pub congested_from: usize,
    pub set: SegmentSet,
}

/// Equilibrium densities as a product of per-segment sets. Vectors are
/// indexed by link with entry 0 unused.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensitySetStructure {
    pub bottlenecks: Vec<usize>,
    pub segments: Vec<Segment>,
    pub uncongested: Vec<f64>,
    pub congested: Vec<f64>,
    pub forced_uncongested: Vec<usize>,
    pub forced_congested: Vec<usize>,
    /// Links whose classification depends on an equality holding within
    /// less than `1e-6`.
    pub near_degenerate: Vec<usize>,
}

impl DensitySetStructure {
    /// True when `E` has a single element.
    pub fn is_unique(&self) -> bool {
        self.segments.iter().all(|s| match &s.set {
            SegmentSet::Single(_) => true,
            SegmentSet::Union(f) => f.len() == 1 && (f[0].upper - f[0].lower).abs() <= EQ_TOL,
        })
    }

    fn segment_vector(&self, seg: &Segment, pivot: usize, value: f64) -> Vec<f64> {
        (seg.first..=seg.last)
            .map(|i| {
                if i < pivot {
                    self.uncongested[i]
                } else if i == pivot {
                    value
                } else {
                    self.congested[i]
                }
            })
            .collect()
    }

    /// Membership of the mainline densities `n[1..=K+1]`.
    pub fn contains(&self, n: &[f64]) -> bool {
        let close = |a: &[f64], seg: &Segment| {
            a.iter()
                .zip(&n[seg.first..=seg.last])
                .all(|(x, y)| (x - y).abs() <= EQ_TOL)
        };
        self.segments.iter().all(|seg| match &seg.set {
            SegmentSet::Single(v) => close(v, seg),
            SegmentSet::Union(families) => families.iter().any(|fam| {
                let value = n[fam.pivot];
                value >= fam.lower - EQ_TOL
                    && value <= fam.upper + EQ_TOL
                    && close(&self.segment_vector(seg, fam.pivot, value), seg)
            }),
        })
    }

    /// A member of `E`. `picks[m]` selects a family of segment `m` (taken
    /// modulo the number of families) and the position in its interval as a
    /// fraction in `[0, 1]`; single-vector segments ignore their pick.
    pub fn member(&self, picks: &[(usize, f64)]) -> Vec<f64> {
        let mut n = vec![0.0; self.uncongested.len()];
        for (m, seg) in self.segments.iter().enumerate() {
            let values = match &seg.set {
                SegmentSet::Single(v) => v.clone(),
                SegmentSet::Union(families) => {
                    let (which, theta) = picks.get(m).copied().unwrap_or((0, 0.0));
                    let fam = &families[which % families.len()];
                    let theta = theta.clamp(0.0, 1.0);
                    let value = fam.lower + theta * (fam.upper - fam.lower);
                    self.segment_vector(seg, fam.pivot, value)
                }
            };
            n[seg.first..=seg.last].copy_from_slice(&values);
        }
        n
    }
}

/// Build the bottleneck set, segments, forced sets and families of equilibrium
/// densities for the given equilibrium flows.
pub fn density_set(g: &FreewayGeometry, flows: &EquilibriumFlows) -> DensitySetStructure {
    let k = g.num_mainline();
    let exit = g.exit();
    let f = &flows.mainline;
    let r = &flows.on_ramp;
    let max = &flows.max;
    let ramp = |i: usize| if i <= k { r[i] } else { 0.0 };

    let mut uncongested = vec![0.0; exit + 1];
    let mut congested = vec![0.0; exit + 1];
    for i in 1..=exit {
        let link = g.link(i);
        let d = &link.diagram;
        uncongested[i] = f[i] / (link.split_through() * d.freeflow);
        congested[i] = d.max_vehicles - (ramp(i) + f[i - 1]) / d.congestion;
    }

    let mut near_degenerate = Vec::new();
    let mut flag = |i: usize, gap: f64| {
        if gap.abs() > EQ_TOL && gap.abs() <= NEAR_DEGENERATE && !near_degenerate.contains(&i) {
            near_degenerate.push(i);
        }
    };

    let mut bottlenecks = Vec::new();
    for i in 1..=k {
        let outflow_gap = g.link(i).outflow_capacity - f[i];
        let supply_gap = g.link(i + 1).inflow_capacity - f[i] - ramp(i + 1);
        flag(i, outflow_gap);
        flag(i, supply_gap);
        if outflow_gap.abs() <= EQ_TOL || supply_gap.abs() <= EQ_TOL {
            bottlenecks.push(i);
        }
    }

    let mut forced_uncongested = Vec::new();
    for i in 1..k {
        let p = g.priority(i + 1);
        let share_gap = r[i + 1] * p.upstream - f[i] * p.ramp;
        if f[i] < g.link(i).outflow_capacity - EQ_TOL && share_gap > EQ_TOL {
            forced_uncongested.push(i);
        }
    }

    let mut forced_congested = Vec::new();
    if f[0] < max.mainline[0] - EQ_TOL && f[0] + r[1] < g.link(1).inflow_capacity - EQ_TOL {
        forced_congested.push(1);
    }
    for i in 1..=k {
        if r[i] < max.on_ramp[i] - EQ_TOL
            && f[i - 1] + r[i] < g.link(i).inflow_capacity - EQ_TOL
            && !forced_congested.contains(&i)
        {
            forced_congested.push(i);
        }
    }
    forced_congested.sort_unstable();

    let mut segments = Vec::with_capacity(bottlenecks.len() + 1);
    let mut prev = 0;
    for &b in &bottlenecks {
        let first = prev + 1;
        let u = forced_uncongested
            .iter()
            .copied()
            .filter(|&i| i > prev && i <= b)
            .max()
            .unwrap_or(prev);
        let c = forced_congested
            .iter()
            .copied()
            .filter(|&i| i > prev && i <= b)
            .min()
            .unwrap_or(b + 1);
        let set = if u + 1 >= c {
            SegmentSet::Single(
                (first..=b)
                    .map(|i| if i <= u { uncongested[i] } else { congested[i] })
                    .collect(),
            )
        } else {
            SegmentSet::Union(
                (u + 1..c)
                    .map(|h| Family {
                        pivot: h,
                        lower: uncongested[h],
                        upper: congested[h],
                    })
                    .collect(),
            )
        };
        segments.push(Segment {
            first,
            last: b,
            bottleneck: Some(b),
            uncongested_until: u,
            congested_from: c,
            set,
        });
        prev = b;
    }
    segments.push(Segment {
        first: prev + 1,
        last: exit,
        bottleneck: None,
        uncongested_until: exit,
        congested_from: exit + 1,
        set: SegmentSet::Single(uncongested[prev + 1..=exit].to_vec()),
    });

    near_degenerate.sort_unstable();
    DensitySetStructure {
        bottlenecks,
        segments,
        uncongested,
        congested,
        forced_uncongested,
        forced_congested,
        near_degenerate,
    }
}

/// Queues that reproduce the equilibrium ramp and entrance demands: each
/// queue holds exactly enough vehicles to present its maximum flow.
pub fn equilibrium_witness(g: &FreewayGeometry, flows: &EquilibriumFlows, n: &[f64]) -> FreewayState {
    let mut state = FreewayState::empty(g);
    state.vehicles[1..].copy_from_slice(&n[1..]);
    state.vehicles[0] = flows.max.mainline[0] / g.link(0).diagram.freeflow;
    for i in 1..g.exit() {
        let ramp = &g.link(i).ramp;
        if ramp.has_on_ramp() {
            state.queues[i] = flows.max.on_ramp[i] / ramp.on_freeflow;
        }
    }
    state
}

/// Whether the mainline densities `n` (indexed by link) belong to the
/// equilibrium set of the given flows.
pub fn is_equilibrium(g: &FreewayGeometry, flows: &EquilibriumFlows, n: &[f64]) -> bool {
    n.len() == g.links().len() && density_set(g, flows).contains(n)
}

/// Everything the analysis of a constant-demand corridor produces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumAnalysis {
    pub class: FeasibilityClass,
    pub flows: EquilibriumFlows,
    pub structure: DensitySetStructure,
    /// `f_{-1} - f_0`.
    pub entrance_queue_growth: f64,
    /// `d_i - r_i`, indexed by link.
    pub ramp_queue_growth: Vec<f64>,
}

pub fn analyze(g: &FreewayGeometry, entrance: f64, ramp_demand: &[f64]) -> EquilibriumAnalysis {
    let max = max_flows(g, entrance, ramp_demand);
    let class = classify_max(g, &max);
    let flows = equilibrium_flows(g, &max);
    let structure = density_set(g, &flows);
    let ramp_queue_growth = (0..g.links().len())
        .map(|i| {
            if i == 0 || i == g.exit() {
                0.0
            } else {
                ramp_demand.get(i).copied().unwrap_or(0.0) - flows.on_ramp[i]
            }
        })
        .collect();
    EquilibriumAnalysis {
        class,
        entrance_queue_growth: entrance - flows.mainline[0],
        flows,
        structure,
        ramp_queue_growth,
    }
}

fn join(v: &[f64], from: usize, to: usize) -> String {
    v[from..=to]
        .iter()
        .map(|x| format!("{x:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

impl fmt::Display for EquilibriumAnalysis {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.structure;
        let exit = s.uncongested.len() - 1;
        writeln!(out, "demand: {}", self.class)?;
        if s.is_unique() {
            writeln!(out, "unique equilibrium")?;
        }
        writeln!(out, "flows f_0..f_{exit}: {}", join(&self.flows.mainline, 0, exit))?;
        writeln!(out, "ramp flows r_1..r_{}: {}", exit - 1, join(&self.flows.on_ramp, 1, exit - 1))?;
        if self.entrance_queue_growth > EQ_TOL {
            writeln!(out, "entrance queue grows by {:.4} veh/step", self.entrance_queue_growth)?;
        }
        for (i, g) in self.ramp_queue_growth.iter().enumerate() {
            if *g > EQ_TOL {
                writeln!(out, "ramp queue at link {i} grows by {g:.4} veh/step")?;
            }
        }
        writeln!(out, "bottlenecks: {:?}", s.bottlenecks)?;
        writeln!(out, "forced uncongested: {:?}", s.forced_uncongested)?;
        writeln!(out, "forced congested: {:?}", s.forced_congested)?;
        for seg in &s.segments {
            write!(out, "segment {}..={}: ", seg.first, seg.last)?;
            match &seg.set {
                SegmentSet::Single(v) => {
                    let v: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
                    writeln!(out, "single vector [{}]", v.join(" "))?;
                }
                SegmentSet::Union(families) => {
                    writeln!(out, "{} families", families.len())?;
                    for fam in families {
                        writeln!(
                            out,
                            "  free link {} in [{:.4}, {:.4}], uncongested before, congested after",
                            fam.pivot, fam.lower, fam.upper
                        )?;
                    }
                }
            }
        }
        writeln!(out, "uncongested profile: {}", join(&s.uncongested, 1, exit))?;
        writeln!(out, "congested profile: {}", join(&s.congested, 1, exit))?;
        if !s.near_degenerate.is_empty() {
            writeln!(out, "warning: near-degenerate links {:?}", s.near_degenerate)?;
        }
        Ok(())
    }
}
