//! Freeway geometry: link parameters, unit normalization and the split into
//! toll and general-purpose lane groups.
//!
//! Links are indexed the usual way for a freeway chain: `0` is the entrance,
//! `1..=K` are mainline links and `K + 1` is the exit. All flow quantities are
//! stored in model units (vehicles per time step, links per time step).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used when checking that paired quantities sum to one.
const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(
        "CFL condition violated at link {link:?}: courant number {courant:.6} > 1 \
         (maximum admissible time step is {max_timestep_hours:.8} h = {:.3} s)",
        max_timestep_hours * 3600.0
    )]
    CflViolation {
        link: Option<usize>,
        courant: f64,
        max_timestep_hours: f64,
    },
    #[error("link {link:?}: {field} must be strictly positive, got {value}")]
    NonPositive {
        link: Option<usize>,
        field: &'static str,
        value: f64,
    },
    #[error("time step must be positive, got {0} h")]
    NonPositiveTimestep(f64),
    #[error("freeway needs at least one mainline link besides entrance and exit, got {0} links")]
    TooFewLinks(usize),
    #[error("ramp attached to link {0}, which is not a mainline link")]
    RampOutsideMainline(usize),
    #[error("split ratio at link {link} must lie in [0, 1), got {split_off}")]
    InvalidSplit { link: usize, split_off: f64 },
    #[error("link 1 already has an on-ramp; the entrance becomes the on-ramp of link 1 in toll-lane mode")]
    EntranceRampConflict,
    #[error("lane split needs at least one lane per group, got toll={toll} general={general}")]
    InvalidLaneSplit { toll: u32, general: u32 },
    #[error("expected {expected} entries for {what}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Physical description of a link as found in field data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLinkSpec {
    pub length_miles: f64,
    pub lanes: u32,
    pub freeflow_mph: f64,
    pub congestion_mph: f64,
    pub capacity_vphpl: f64,
    /// Jam density, vehicles per mile per lane.
    pub jam_vpmpl: f64,
}

impl RawLinkSpec {
    fn check_positive(&self, link: Option<usize>) -> Result<(), GeometryError> {
        let fields = [
            ("length_miles", self.length_miles),
            ("lanes", f64::from(self.lanes)),
            ("freeflow_mph", self.freeflow_mph),
            ("congestion_mph", self.congestion_mph),
            ("capacity_vphpl", self.capacity_vphpl),
            ("jam_vpmpl", self.jam_vpmpl),
        ];
        for (field, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(GeometryError::NonPositive { link, field, value });
            }
        }
        Ok(())
    }

    /// Largest time step (hours) for which this link satisfies the CFL condition.
    pub fn max_timestep(&self) -> f64 {
        self.length_miles / self.freeflow_mph.max(self.congestion_mph)
    }
}

/// Per-link fundamental diagram in model units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalDiagram {
    /// Capacity `F`, vehicles per step.
    pub capacity: f64,
    /// Storage `N`, vehicles.
    pub max_vehicles: f64,
    /// Free-flow speed `v`, links per step.
    pub freeflow: f64,
    /// Congestion wave speed `w`, links per step.
    pub congestion: f64,
}

impl FundamentalDiagram {
    pub fn new(capacity: f64, max_vehicles: f64, freeflow: f64, congestion: f64) -> Self {
        Self {
            capacity,
            max_vehicles,
            freeflow,
            congestion,
        }
    }

    /// `F/v + F/w ≤ N`: an uncongested link never restricts its own inflow.
    pub fn freeflow_unconstrained(&self) -> bool {
        self.capacity / self.freeflow + self.capacity / self.congestion
            <= self.max_vehicles * (1.0 + 1e-12)
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            capacity: self.capacity * factor,
            max_vehicles: self.max_vehicles * factor,
            ..*self
        }
    }
}

/// Convert a physical link description into model units for time step `tau_hours`.
///
/// Speeds of exactly one link per step are accepted.
pub fn normalize(spec: &RawLinkSpec, tau_hours: f64) -> Result<FundamentalDiagram, GeometryError> {
    if !(tau_hours > 0.0) {
        return Err(GeometryError::NonPositiveTimestep(tau_hours));
    }
    spec.check_positive(None)?;
    let freeflow = spec.freeflow_mph * tau_hours / spec.length_miles;
    let congestion = spec.congestion_mph * tau_hours / spec.length_miles;
    let courant = freeflow.max(congestion);
    if courant > 1.0 + 1e-12 {
        return Err(GeometryError::CflViolation {
            link: None,
            courant,
            max_timestep_hours: spec.max_timestep(),
        });
    }
    let lanes = f64::from(spec.lanes);
    Ok(FundamentalDiagram {
        capacity: spec.capacity_vphpl * lanes * tau_hours,
        max_vehicles: spec.jam_vpmpl * spec.length_miles * lanes,
        freeflow: freeflow.min(1.0),
        congestion: congestion.min(1.0),
    })
}

/// Physical quantities recovered from a fundamental diagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalDiagram {
    pub freeflow_mph: f64,
    pub congestion_mph: f64,
    pub capacity_vphpl: f64,
    pub jam_vpmpl: f64,
}

/// Inverse of [`normalize`] for a link of the given length and lane count.
pub fn denormalize(
    diagram: &FundamentalDiagram,
    length_miles: f64,
    lanes: f64,
    tau_hours: f64,
) -> PhysicalDiagram {
    PhysicalDiagram {
        freeflow_mph: diagram.freeflow * length_miles / tau_hours,
        congestion_mph: diagram.congestion * length_miles / tau_hours,
        capacity_vphpl: diagram.capacity / (lanes * tau_hours),
        jam_vpmpl: diagram.max_vehicles / (length_miles * lanes),
    }
}

/// Largest admissible time step in hours: `min_i L_i / max{V_i, W_i}`.
///
/// Returns `+inf` for an empty list.
pub fn max_timestep(specs: &[RawLinkSpec]) -> f64 {
    specs
        .iter()
        .map(RawLinkSpec::max_timestep)
        .fold(f64::INFINITY, f64::min)
}

/// Ramps attached to a mainline link, in model units.
///
/// `on_capacity == 0` means there is no on-ramp, `split_off == 0` means there is
/// no off-ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSpec {
    pub on_capacity: f64,
    pub on_freeflow: f64,
    pub off_capacity: f64,
    pub split_off: f64,
}

impl RampSpec {
    pub const NONE: RampSpec = RampSpec {
        on_capacity: 0.0,
        on_freeflow: 1.0,
        off_capacity: 0.0,
        split_off: 0.0,
    };

    pub fn on_ramp(capacity: f64, freeflow: f64) -> Self {
        Self {
            on_capacity: capacity,
            on_freeflow: freeflow,
            ..Self::NONE
        }
    }

    pub fn with_off_ramp(mut self, capacity: f64, split_off: f64) -> Self {
        self.off_capacity = capacity;
        self.split_off = split_off;
        self
    }

    /// Fraction `β^f` of the link outflow that continues on the mainline.
    pub fn split_through(&self) -> f64 {
        1.0 - self.split_off
    }

    pub fn has_on_ramp(&self) -> bool {
        self.on_capacity > 0.0
    }
}

impl Default for RampSpec {
    fn default() -> Self {
        Self::NONE
    }
}

/// Ramp description in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRampSpec {
    /// Mainline link the ramps attach to.
    pub link: usize,
    #[serde(default)]
    pub on_capacity_vph: f64,
    /// On-ramp free-flow speed, already in links per step.
    #[serde(default = "default_on_freeflow")]
    pub on_freeflow: f64,
    #[serde(default)]
    pub off_capacity_vph: f64,
    /// Off-ramp split ratio `β^s`.
    #[serde(default)]
    pub split_off: f64,
}

fn default_on_freeflow() -> f64 {
    1.0
}

impl RawRampSpec {
    pub fn normalize(&self, tau_hours: f64) -> RampSpec {
        RampSpec {
            on_capacity: self.on_capacity_vph * tau_hours,
            on_freeflow: self.on_freeflow,
            off_capacity: self.off_capacity_vph * tau_hours,
            split_off: self.split_off,
        }
    }
}

/// Outflow capacity `F^d` of a link with capacity `capacity` and ramps `ramp`.
///
/// Keeping the mainline flow below `F^d` keeps the off-ramp flow below its
/// capacity as well.
pub fn outflow_capacity(capacity: f64, ramp: &RampSpec) -> f64 {
    if ramp.split_off == 0.0 {
        capacity
    } else {
        ramp.split_through() * capacity.min(ramp.off_capacity / ramp.split_off)
    }
}

/// Merge priorities at the node feeding mainline link `i`: `p^f_{i-1}` for the
/// upstream link and `p^r_i` for the on-ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergePriority {
    pub upstream: f64,
    pub ramp: f64,
}

impl MergePriority {
    pub const MAINLINE_ONLY: MergePriority = MergePriority {
        upstream: 1.0,
        ramp: 0.0,
    };

    /// Normalize two nonnegative weights; all weight goes upstream if both vanish.
    pub fn from_weights(upstream: f64, ramp: f64) -> Self {
        let total = upstream + ramp;
        if total > 0.0 {
            Self {
                upstream: upstream / total,
                ramp: ramp / total,
            }
        } else {
            Self::MAINLINE_ONLY
        }
    }
}

/// How merge priorities are chosen while simulating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityMode {
    /// Static priorities proportional to capacities.
    #[default]
    Capacity,
    /// Priorities proportional to the current outflow demands.
    Demand,
}

/// One link of a single-lane-group freeway.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Link {
    pub diagram: FundamentalDiagram,
    pub ramp: RampSpec,
    /// `F^s`.
    pub inflow_capacity: f64,
    /// `F^d`.
    pub outflow_capacity: f64,
    pub length_miles: f64,
    pub lanes: f64,
}

impl Link {
    pub fn new(diagram: FundamentalDiagram, ramp: RampSpec) -> Self {
        Self {
            diagram,
            ramp,
            inflow_capacity: diagram.capacity,
            outflow_capacity: outflow_capacity(diagram.capacity, &ramp),
            length_miles: 1.0,
            lanes: 1.0,
        }
    }

    pub fn split_through(&self) -> f64 {
        self.ramp.split_through()
    }
}

/// A mainline chain `0..=K+1` with ramps and merge priorities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreewayGeometry {
    links: Vec<Link>,
    /// Indexed by the downstream link of the node; entry 0 is unused.
    priorities: Vec<MergePriority>,
    pub priority_mode: PriorityMode,
    pub tau_hours: f64,
}

impl FreewayGeometry {
    /// Build from normalized diagrams and ramps for links `0..=K+1`, with
    /// capacity-proportional priorities. Lengths, lanes and the time step are 1.
    pub fn new(diagrams: Vec<FundamentalDiagram>, ramps: Vec<RampSpec>) -> Result<Self, GeometryError> {
        if diagrams.len() < 3 {
            return Err(GeometryError::TooFewLinks(diagrams.len()));
        }
        if ramps.len() != diagrams.len() {
            return Err(GeometryError::LengthMismatch {
                what: "ramps",
                expected: diagrams.len(),
                got: ramps.len(),
            });
        }
        let last = diagrams.len() - 1;
        for (i, ramp) in ramps.iter().enumerate() {
            let is_mainline = i >= 1 && i < last;
            if !is_mainline && (*ramp != RampSpec::NONE) {
                return Err(GeometryError::RampOutsideMainline(i));
            }
            if !(0.0..1.0).contains(&ramp.split_off) {
                return Err(GeometryError::InvalidSplit {
                    link: i,
                    split_off: ramp.split_off,
                });
            }
        }
        let links: Vec<Link> = diagrams
            .into_iter()
            .zip(ramps)
            .map(|(d, r)| Link::new(d, r))
            .collect();
        let priorities = capacity_priorities(&links);
        Ok(Self {
            links,
            priorities,
            priority_mode: PriorityMode::Capacity,
            tau_hours: 1.0,
        })
    }

    /// Build from physical link descriptions (entrance first, exit last) and
    /// ramps, normalizing with time step `tau_hours`.
    pub fn from_raw(
        links: &[RawLinkSpec],
        ramps: &[RawRampSpec],
        tau_hours: f64,
    ) -> Result<Self, GeometryError> {
        if !(tau_hours > 0.0) {
            return Err(GeometryError::NonPositiveTimestep(tau_hours));
        }
        let max_tau = max_timestep(links);
        let mut diagrams = Vec::with_capacity(links.len());
        for (i, spec) in links.iter().enumerate() {
            spec.check_positive(Some(i))?;
            let d = normalize(spec, tau_hours).map_err(|e| match e {
                GeometryError::CflViolation { courant, .. } => GeometryError::CflViolation {
                    link: Some(i),
                    courant,
                    max_timestep_hours: max_tau,
                },
                other => other,
            })?;
            diagrams.push(d);
        }
        let mut ramp_specs = vec![RampSpec::NONE; links.len()];
        for raw in ramps {
            if raw.link == 0 || raw.link + 1 >= links.len() {
                return Err(GeometryError::RampOutsideMainline(raw.link));
            }
            ramp_specs[raw.link] = raw.normalize(tau_hours);
        }
        let mut geometry = Self::new(diagrams, ramp_specs)?;
        geometry.tau_hours = tau_hours;
        for (link, spec) in geometry.links.iter_mut().zip(links) {
            link.length_miles = spec.length_miles;
            link.lanes = f64::from(spec.lanes);
        }
        Ok(geometry)
    }

    pub fn with_priorities(mut self, priorities: Vec<MergePriority>) -> Result<Self, GeometryError> {
        if priorities.len() != self.links.len() {
            return Err(GeometryError::LengthMismatch {
                what: "priorities",
                expected: self.links.len(),
                got: priorities.len(),
            });
        }
        self.priorities = priorities;
        Ok(self)
    }

    pub fn with_priority_mode(mut self, mode: PriorityMode) -> Self {
        self.priority_mode = mode;
        self
    }

    /// Number of mainline links `K`.
    pub fn num_mainline(&self) -> usize {
        self.links.len() - 2
    }

    /// Index of the exit link, `K + 1`.
    pub fn exit(&self) -> usize {
        self.links.len() - 1
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, i: usize) -> &Link {
        &self.links[i]
    }

    pub(crate) fn links_mut(&mut self) -> &mut [Link] {
        &mut self.links
    }

    /// Priorities at the node feeding link `i` (`1..=K+1`).
    pub fn priority(&self, i: usize) -> MergePriority {
        self.priorities[i]
    }

    pub fn priorities(&self) -> &[MergePriority] {
        &self.priorities
    }

    /// Links with an on-ramp, in increasing order.
    pub fn on_ramp_links(&self) -> Vec<usize> {
        (1..self.exit())
            .filter(|&i| self.links[i].ramp.has_on_ramp())
            .collect()
    }

    /// Check the structural invariants of the geometry.
    pub fn validate(&self) -> ValidationReport {
        validate_geometry(self)
    }
}

/// Capacity-proportional priorities: `p^f_{i-1} ∝ β^f_{i-1} F_{i-1}`, `p^r_i ∝ R_i`.
fn capacity_priorities(links: &[Link]) -> Vec<MergePriority> {
    let mut priorities = vec![MergePriority::MAINLINE_ONLY; links.len()];
    for i in 1..links.len() {
        let upstream = &links[i - 1];
        priorities[i] = MergePriority::from_weights(
            upstream.split_through() * upstream.diagram.capacity,
            links[i].ramp.on_capacity,
        );
    }
    priorities
}

/// A single problem found by [`validate_geometry`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonPositive { link: usize, field: &'static str, value: f64 },
    SpeedOutOfRange { link: usize, field: &'static str, value: f64 },
    FreeflowConstraint { link: usize, required: f64, max_vehicles: f64 },
    SplitRatio { link: usize, split_off: f64 },
    RampParameter { link: usize, field: &'static str, value: f64 },
    PriorityNormalization { node: usize, upstream: f64, ramp: f64 },
    OutflowCapacity { link: usize, expected: f64, actual: f64 },
    InflowCapacity { link: usize, expected: f64, actual: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositive { link, field, value } => {
                write!(f, "link {link}: {field} = {value} must be positive")
            }
            Violation::SpeedOutOfRange { link, field, value } => {
                write!(f, "link {link}: {field} = {value} outside (0, 1]")
            }
            Violation::FreeflowConstraint {
                link,
                required,
                max_vehicles,
            } => write!(
                f,
                "link {link}: F/v + F/w = {required} exceeds storage N = {max_vehicles}"
            ),
            Violation::SplitRatio { link, split_off } => {
                write!(f, "link {link}: off-ramp split {split_off} outside [0, 1)")
            }
            Violation::RampParameter { link, field, value } => {
                write!(f, "link {link}: ramp {field} = {value} is invalid")
            }
            Violation::PriorityNormalization { node, upstream, ramp } => write!(
                f,
                "node {node}: priorities {upstream} + {ramp} do not sum to 1"
            ),
            Violation::OutflowCapacity {
                link,
                expected,
                actual,
            } => write!(f, "link {link}: outflow capacity {actual}, expected {expected}"),
            Violation::InflowCapacity {
                link,
                expected,
                actual,
            } => write!(f, "link {link}: inflow capacity {actual}, expected {expected}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn links(&self) -> Vec<usize> {
        self.violations
            .iter()
            .map(|v| match *v {
                Violation::NonPositive { link, .. }
                | Violation::SpeedOutOfRange { link, .. }
                | Violation::FreeflowConstraint { link, .. }
                | Violation::SplitRatio { link, .. }
                | Violation::RampParameter { link, .. }
                | Violation::OutflowCapacity { link, .. }
                | Violation::InflowCapacity { link, .. } => link,
                Violation::PriorityNormalization { node, .. } => node,
            })
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "geometry ok");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Check every link and node of `g`, collecting all violations.
pub fn validate_geometry(g: &FreewayGeometry) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;
    let exit = g.exit();
    for (i, link) in g.links.iter().enumerate() {
        let d = &link.diagram;
        if !(d.capacity > 0.0) {
            v.push(Violation::NonPositive {
                link: i,
                field: "capacity",
                value: d.capacity,
            });
        }
        for (field, value) in [("freeflow", d.freeflow), ("congestion", d.congestion)] {
            if !(value > 0.0 && value <= 1.0) {
                v.push(Violation::SpeedOutOfRange { link: i, field, value });
            }
        }
        // The entrance is a queue; it has no storage limit.
        if i > 0 {
            if !(d.max_vehicles > 0.0) {
                v.push(Violation::NonPositive {
                    link: i,
                    field: "max_vehicles",
                    value: d.max_vehicles,
                });
            } else if !d.freeflow_unconstrained() {
                v.push(Violation::FreeflowConstraint {
                    link: i,
                    required: d.capacity / d.freeflow + d.capacity / d.congestion,
                    max_vehicles: d.max_vehicles,
                });
            }
        }
        let ramp = &link.ramp;
        if !(0.0..1.0).contains(&ramp.split_off) {
            v.push(Violation::SplitRatio {
                link: i,
                split_off: ramp.split_off,
            });
        }
        if ramp.on_capacity < 0.0 {
            v.push(Violation::RampParameter {
                link: i,
                field: "on_capacity",
                value: ramp.on_capacity,
            });
        }
        if ramp.has_on_ramp() && !(ramp.on_freeflow > 0.0 && ramp.on_freeflow <= 1.0) {
            v.push(Violation::RampParameter {
                link: i,
                field: "on_freeflow",
                value: ramp.on_freeflow,
            });
        }
        if ramp.off_capacity < 0.0 || (ramp.split_off > 0.0 && ramp.off_capacity <= 0.0) {
            v.push(Violation::RampParameter {
                link: i,
                field: "off_capacity",
                value: ramp.off_capacity,
            });
        }
        let expected_out = outflow_capacity(d.capacity, ramp);
        if (link.outflow_capacity - expected_out).abs() > SUM_TOL * expected_out.abs().max(1.0) {
            v.push(Violation::OutflowCapacity {
                link: i,
                expected: expected_out,
                actual: link.outflow_capacity,
            });
        }
        if (link.inflow_capacity - d.capacity).abs() > SUM_TOL * d.capacity.abs().max(1.0) {
            v.push(Violation::InflowCapacity {
                link: i,
                expected: d.capacity,
                actual: link.inflow_capacity,
            });
        }
    }
    for node in 1..=exit {
        let p = g.priorities[node];
        if p.upstream < 0.0 || p.ramp < 0.0 || (p.upstream + p.ramp - 1.0).abs() > SUM_TOL {
            v.push(Violation::PriorityNormalization {
                node,
                upstream: p.upstream,
                ramp: p.ramp,
            });
        }
    }
    report
}

/// Toll (`Toll`) or general-purpose (`General`) lane group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneGroup {
    Toll,
    General,
}

impl LaneGroup {
    pub const ALL: [LaneGroup; 2] = [LaneGroup::Toll, LaneGroup::General];

    pub fn index(self) -> usize {
        match self {
            LaneGroup::Toll => 0,
            LaneGroup::General => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LaneGroup::Toll => "toll",
            LaneGroup::General => "gp",
        }
    }
}

/// Number of toll (`l1`) and general-purpose (`l2`) lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSplit {
    pub toll: u32,
    pub general: u32,
}

impl LaneSplit {
    pub fn new(toll: u32, general: u32) -> Result<Self, GeometryError> {
        if toll == 0 || general == 0 {
            return Err(GeometryError::InvalidLaneSplit { toll, general });
        }
        Ok(Self { toll, general })
    }

    /// `l_ξ / (l1 + l2)`.
    pub fn share(&self, group: LaneGroup) -> f64 {
        let total = f64::from(self.toll + self.general);
        match group {
            LaneGroup::Toll => f64::from(self.toll) / total,
            LaneGroup::General => f64::from(self.general) / total,
        }
    }

    /// Toll-lane share `l1 / (l1 + l2)`.
    pub fn toll_share(&self) -> f64 {
        self.share(LaneGroup::Toll)
    }
}

/// One mainline link split into two parallel lane groups sharing speeds,
/// split ratios and ramps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualLink {
    pub groups: [FundamentalDiagram; 2],
    pub inflow_capacity: [f64; 2],
    pub outflow_capacity: [f64; 2],
    /// `p^{ξ,f}_{i-1}` at the node feeding this link.
    pub upstream_priority: [f64; 2],
    /// `p^r_i` at the node feeding this link.
    pub ramp_priority: f64,
    pub ramp: RampSpec,
    pub length_miles: f64,
    pub lanes: [f64; 2],
}

impl DualLink {
    pub fn freeflow(&self) -> f64 {
        self.groups[0].freeflow
    }

    pub fn congestion(&self) -> f64 {
        self.groups[0].congestion
    }

    pub fn split_through(&self) -> f64 {
        self.ramp.split_through()
    }
}

/// Freeway with toll lanes. The entrance queue feeds link 1 as its on-ramp,
/// so every entrance is an on-ramp whose flow is split by `α`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualGeometry {
    links: Vec<DualLink>,
    pub lane_split: LaneSplit,
    pub priority_mode: PriorityMode,
    pub tau_hours: f64,
}

impl DualGeometry {
    pub fn num_mainline(&self) -> usize {
        self.links.len() - 2
    }

    pub fn exit(&self) -> usize {
        self.links.len() - 1
    }

    pub fn links(&self) -> &[DualLink] {
        &self.links
    }

    pub fn link(&self, i: usize) -> &DualLink {
        &self.links[i]
    }

    /// Entrances `i_1 = 1 < i_2 < … < i_M`.
    pub fn entrances(&self) -> Vec<usize> {
        (1..self.exit())
            .filter(|&i| self.links[i].ramp.has_on_ramp())
            .collect()
    }
}

/// Split every mainline link into toll and general-purpose groups with
/// capacities, storage and mainline priorities proportional to lane counts.
///
/// The entrance link becomes the on-ramp of link 1 (capacity `F_0`, speed
/// `v_0`); link 1 must therefore not carry an on-ramp of its own.
pub fn split_lanes(g: &FreewayGeometry, split: LaneSplit) -> Result<DualGeometry, GeometryError> {
    LaneSplit::new(split.toll, split.general)?;
    if g.link(1).ramp.has_on_ramp() {
        return Err(GeometryError::EntranceRampConflict);
    }
    let shares = [split.share(LaneGroup::Toll), split.share(LaneGroup::General)];
    let mut links: Vec<DualLink> = g
        .links()
        .iter()
        .enumerate()
        .map(|(i, link)| {
            let p = g.priority(i.max(1));
            DualLink {
                groups: shares.map(|s| link.diagram.scaled(s)),
                inflow_capacity: shares.map(|s| link.inflow_capacity * s),
                outflow_capacity: shares.map(|s| link.outflow_capacity * s),
                upstream_priority: shares.map(|s| p.upstream * s),
                ramp_priority: p.ramp,
                ramp: link.ramp,
                length_miles: link.length_miles,
                lanes: shares.map(|s| link.lanes * s),
            }
        })
        .collect();
    let entrance = g.link(0);
    links[1].ramp.on_capacity = entrance.outflow_capacity;
    links[1].ramp.on_freeflow = entrance.diagram.freeflow;
    links[1].upstream_priority = [0.0, 0.0];
    links[1].ramp_priority = 1.0;
    Ok(DualGeometry {
        links,
        lane_split: split,
        priority_mode: g.priority_mode,
        tau_hours: g.tau_hours,
    })
}
