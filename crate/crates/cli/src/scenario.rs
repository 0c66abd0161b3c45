use thiserror::Error;
use tollway_core::control::{ControlError, TollController};
use tollway_core::equilibrium::{analyze, equilibrium_witness, EquilibriumAnalysis, SegmentSet};
use tollway_core::geometry::{DualGeometry, FreewayGeometry, PriorityMode};
use tollway_core::pricing::{AuctionPricer, VotDistribution, VotPricer};
use tollway_core::sim::{
    dual_metrics, run, run_dual, single_metrics, DemandProfile, DualState, DualTrajectory, FixedSplit,
    FreewayState, FreewayTrajectory, MetricsReport, SimError, SplitController, SplitPricer,
};

use crate::config::{ConfigError, InitialConfig, PricerConfig, ScenarioConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("controller setup failed: {0}")]
    Control(#[from] ControlError),
    #[error("{0}")]
    Setup(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot write json: {0}")]
    Json(#[from] serde_json::Error),
}

impl RunError {
    /// Process exit code: 2 for bad input, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 3,
        }
    }
}

/// How entrance splits are chosen in a toll-lane run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitPolicy {
    /// Lane-proportional, which is the same as one merged lane group.
    Proportional,
    Fixed(f64),
    /// Controller and pricer as configured.
    Configured,
}

#[derive(Debug, Clone)]
pub enum Trajectory {
    Single(FreewayTrajectory),
    Dual(DualTrajectory),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub geometry: FreewayGeometry,
    pub dual: Option<DualGeometry>,
    pub trajectory: Trajectory,
    pub metrics: MetricsReport,
    /// Believed VoT distribution at the end of the run, for VoT pricing.
    pub vot: Option<VotDistribution>,
}

pub fn analyze_config(config: &ScenarioConfig) -> Result<EquilibriumAnalysis, RunError> {
    let g = config.geometry()?;
    if g.priority_mode == PriorityMode::Demand {
        return Err(RunError::Setup(
            "equilibrium analysis needs capacity priorities".into(),
        ));
    }
    let profile = config.demand_profile()?;
    let demand = profile.at(0);
    Ok(analyze(&g, demand.entrance, &demand.ramps))
}

fn equilibrium_state(
    g: &FreewayGeometry,
    profile: &DemandProfile,
    pivot: usize,
    fraction: f64,
) -> Result<FreewayState, RunError> {
    let demand = profile.at(0);
    let analysis = analyze(g, demand.entrance, &demand.ramps);
    let s = &analysis.structure;
    let mut found = false;
    let picks: Vec<(usize, f64)> = s
        .segments
        .iter()
        .map(|seg| match &seg.set {
            SegmentSet::Union(families) => match families.iter().position(|f| f.pivot == pivot) {
                Some(k) => {
                    found = true;
                    (k, fraction)
                }
                None => (0, 0.0),
            },
            SegmentSet::Single(_) => (0, 0.0),
        })
        .collect();
    if !found && !s.is_unique() {
        return Err(RunError::Setup(format!(
            "link {pivot} is not the free link of any equilibrium family"
        )));
    }
    let n = s.member(&picks);
    Ok(equilibrium_witness(g, &analysis.flows, &n))
}

pub fn initial_state(
    config: &ScenarioConfig,
    g: &FreewayGeometry,
    profile: &DemandProfile,
) -> Result<FreewayState, RunError> {
    match &config.initial {
        InitialConfig::Empty => Ok(FreewayState::empty(g)),
        InitialConfig::Equilibrium { pivot, fraction } => {
            equilibrium_state(g, profile, *pivot, *fraction)
        }
        InitialConfig::Explicit { vehicles, queues } => {
            let mut s = FreewayState::empty(g);
            s.vehicles.copy_from_slice(vehicles);
            if !queues.is_empty() {
                s.queues.copy_from_slice(queues);
            }
            Ok(s)
        }
    }
}

enum Pricer {
    None,
    Vot(VotPricer),
    Auction(AuctionPricer),
}

fn build_pricer(config: &ScenarioConfig, seed: u64) -> Result<Pricer, ConfigError> {
    Ok(match &config.pricer {
        PricerConfig::None => Pricer::None,
        PricerConfig::Vot {
            knots,
            population,
            smoothing,
            travelers_per_step,
            calibrate,
            mode,
        } => {
            let believed = VotDistribution::new(knots.clone())?;
            let population = match population {
                Some(p) => VotDistribution::new(p.clone())?,
                None => believed.clone(),
            };
            let mut p = VotPricer::new(believed, population, seed);
            p.smoothing = *smoothing;
            p.travelers_per_step = *travelers_per_step;
            p.calibrate = *calibrate;
            p.mode = *mode;
            Pricer::Vot(p)
        }
        PricerConfig::Auction {
            knots,
            variant,
            next_price,
        } => {
            let mut p = AuctionPricer::new(VotDistribution::new(knots.clone())?, *variant, seed);
            p.next_price = *next_price;
            Pricer::Auction(p)
        }
    })
}

pub fn run_config(config: &ScenarioConfig, seed: u64) -> Result<RunOutput, RunError> {
    run_with_policy(config, seed, SplitPolicy::Configured)
}

pub fn run_with_policy(
    config: &ScenarioConfig,
    seed: u64,
    policy: SplitPolicy,
) -> Result<RunOutput, RunError> {
    config.validate()?;
    let g = config.geometry()?;
    let profile = config.demand_profile()?;
    let initial = initial_state(config, &g, &profile)?;
    let Some(dual) = config.dual_geometry()? else {
        let traj = run(&g, &profile, initial, config.horizon_steps)?;
        let metrics = single_metrics(&traj, &g);
        return Ok(RunOutput {
            geometry: g,
            dual: None,
            trajectory: Trajectory::Single(traj),
            metrics,
            vot: None,
        });
    };
    let initial = DualState::from_single(&initial, &dual);
    let mut fixed;
    let mut toll;
    let mut pricer = Pricer::None;
    let controller: Option<&mut dyn SplitController> = match policy {
        SplitPolicy::Proportional => None,
        SplitPolicy::Fixed(share) => {
            fixed = FixedSplit(share);
            Some(&mut fixed)
        }
        SplitPolicy::Configured => {
            pricer = build_pricer(config, seed)?;
            if config.controller {
                toll = TollController::new(&dual)?;
                Some(&mut toll)
            } else {
                None
            }
        }
    };
    let split_pricer: Option<&mut dyn SplitPricer> = match &mut pricer {
        Pricer::None => None,
        Pricer::Vot(p) => Some(p),
        Pricer::Auction(p) => Some(p),
    };
    let traj = run_dual(&dual, &profile, initial, config.horizon_steps, controller, split_pricer)?;
    let metrics = dual_metrics(&traj, &dual);
    let vot = match pricer {
        Pricer::Vot(p) => Some(p.believed),
        _ => None,
    };
    Ok(RunOutput {
        geometry: g,
        dual: Some(dual),
        trajectory: Trajectory::Dual(traj),
        metrics,
        vot,
    })
}
