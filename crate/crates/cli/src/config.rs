use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use tollway_core::geometry::{
    split_lanes, DualGeometry, FreewayGeometry, GeometryError, LaneSplit, PriorityMode, RawLinkSpec,
    RawRampSpec, ValidationReport,
};
use tollway_core::pricing::{AuctionVariant, LaneMode, PricingError, VotDistribution};
use tollway_core::sim::{DemandProfile, Series};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("invalid geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("geometry violations:\n{0}")]
    Violations(ValidationReport),
    #[error("invalid value-of-time distribution: {0}")]
    Pricing(#[from] PricingError),
}

/// Piecewise-constant flow in vehicles per hour: `[[start_step, vph], ...]`.
pub type RawSeries = Vec<(usize, f64)>;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RampDemand {
    pub link: usize,
    pub vph: RawSeries,
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    #[serde(default)]
    pub entrance_vph: RawSeries,
    #[serde(default)]
    pub ramps: Vec<RampDemand>,
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    #[default]
    Empty,
    /// A member of the equilibrium set for the step-0 demand: links before
    /// `pivot` uncongested, links after it congested, and the pivot link at
    /// `fraction` of the way from its uncongested to its congested density.
    Equilibrium { pivot: usize, fraction: f64 },
    /// Vehicles per link (entrance queue first) and ramp queues.
    Explicit {
        vehicles: Vec<f64>,
        #[serde(default)]
        queues: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LaneSplitConfig {
    pub toll: u32,
    pub general: u32,
}

fn default_smoothing() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PricerConfig {
    #[default]
    None,
    Vot {
        /// Believed distribution, `[[price_per_hour, cumulative_share], ...]`.
        knots: Vec<(f64, f64)>,
        /// Distribution travelers are drawn from; defaults to `knots`.
        #[serde(default)]
        population: Option<Vec<(f64, f64)>>,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
        #[serde(default)]
        travelers_per_step: usize,
        #[serde(default)]
        calibrate: bool,
        #[serde(default)]
        mode: LaneMode,
    },
    Auction {
        knots: Vec<(f64, f64)>,
        #[serde(default)]
        variant: AuctionVariant,
        #[serde(default)]
        next_price: bool,
    },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Fixed toll-lane share of entering traffic in the base run.
    pub base_toll_share: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub timestep_s: f64,
    pub horizon_steps: usize,
    /// Entrance link, mainline links and exit link, in order.
    pub links: Vec<RawLinkSpec>,
    #[serde(default)]
    pub ramps: Vec<RawRampSpec>,
    #[serde(default)]
    pub priorities: PriorityMode,
    #[serde(default)]
    pub lane_split: Option<LaneSplitConfig>,
    #[serde(default)]
    pub demand: DemandConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub controller: bool,
    #[serde(default)]
    pub pricer: PricerConfig,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub fn parse_config_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

fn series(what: &str, raw: &RawSeries, tau_hours: f64) -> Result<Series, ConfigError> {
    let points = raw.iter().map(|&(t, vph)| (t, vph * tau_hours)).collect();
    Series::new(points).map_err(|_| {
        ConfigError::Invalid(format!(
            "demand series {what} must have nonnegative values and increasing start steps"
        ))
    })
}

impl ScenarioConfig {
    pub fn tau_hours(&self) -> f64 {
        self.timestep_s / 3600.0
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.timestep_s > 0.0) {
            return Err(ConfigError::Invalid("timestep_s must be positive".into()));
        }
        if self.horizon_steps == 0 {
            return Err(ConfigError::Invalid("horizon_steps must be at least 1".into()));
        }
        let g = self.geometry()?;
        let report = g.validate();
        if !report.is_ok() {
            return Err(ConfigError::Violations(report));
        }
        self.demand_profile()?;
        for r in &self.demand.ramps {
            if r.link == 0 || r.link >= g.exit() || !g.link(r.link).ramp.has_on_ramp() {
                return Err(ConfigError::Invalid(format!(
                    "ramp demand at link {} without an on-ramp",
                    r.link
                )));
            }
        }
        if let Some(split) = self.lane_split {
            split_lanes(&g, LaneSplit::new(split.toll, split.general)?)?;
        } else if self.controller || self.pricer != PricerConfig::None || self.compare.is_some() {
            return Err(ConfigError::Invalid(
                "controller, pricer and compare need a lane_split".into(),
            ));
        }
        if let Some(c) = self.compare {
            if !(0.0..=1.0).contains(&c.base_toll_share) {
                return Err(ConfigError::Invalid("base_toll_share must lie in [0, 1]".into()));
            }
        }
        match &self.pricer {
            PricerConfig::None => {}
            PricerConfig::Vot {
                knots,
                population,
                smoothing,
                ..
            } => {
                VotDistribution::new(knots.clone())?;
                if let Some(p) = population {
                    VotDistribution::new(p.clone())?;
                }
                if !(0.0..=1.0).contains(smoothing) {
                    return Err(ConfigError::Invalid("smoothing must lie in [0, 1]".into()));
                }
            }
            PricerConfig::Auction { knots, .. } => {
                VotDistribution::new(knots.clone())?;
            }
        }
        match &self.initial {
            InitialConfig::Empty => {}
            InitialConfig::Equilibrium { fraction, .. } => {
                if !(0.0..=1.0).contains(fraction) {
                    return Err(ConfigError::Invalid("equilibrium fraction must lie in [0, 1]".into()));
                }
            }
            InitialConfig::Explicit { vehicles, queues } => {
                let n = g.links().len();
                if vehicles.len() != n || !(queues.is_empty() || queues.len() == n) {
                    return Err(ConfigError::Invalid(format!(
                        "explicit initial state needs {n} vehicle counts and 0 or {n} queues"
                    )));
                }
                for (i, &v) in vehicles.iter().enumerate() {
                    let cap = if i == 0 { f64::INFINITY } else { g.link(i).diagram.max_vehicles };
                    if !(0.0..=cap).contains(&v) {
                        return Err(ConfigError::Invalid(format!(
                            "initial vehicles {v} at link {i} outside [0, {cap}]"
                        )));
                    }
                }
                if queues.iter().any(|&q| !(q >= 0.0)) {
                    return Err(ConfigError::Invalid("initial queues must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<FreewayGeometry, ConfigError> {
        let g = FreewayGeometry::from_raw(&self.links, &self.ramps, self.tau_hours())?;
        Ok(g.with_priority_mode(self.priorities))
    }

    pub fn lane_split(&self) -> Option<LaneSplit> {
        self.lane_split.map(|s| LaneSplit {
            toll: s.toll,
            general: s.general,
        })
    }

    pub fn dual_geometry(&self) -> Result<Option<DualGeometry>, ConfigError> {
        match self.lane_split() {
            Some(split) => Ok(Some(split_lanes(&self.geometry()?, split)?)),
            None => Ok(None),
        }
    }

    /// Demand profile in vehicles per step.
    pub fn demand_profile(&self) -> Result<DemandProfile, ConfigError> {
        let tau = self.tau_hours();
        let n = self.links.len();
        let mut profile = DemandProfile::zero(n);
        profile.entrance = series("entrance_vph", &self.demand.entrance_vph, tau)?;
        for r in &self.demand.ramps {
            if r.link >= n {
                return Err(ConfigError::Invalid(format!("ramp demand at unknown link {}", r.link)));
            }
            profile.ramps[r.link] = series(&format!("at link {}", r.link), &r.vph, tau)?;
        }
        Ok(profile)
    }
}
