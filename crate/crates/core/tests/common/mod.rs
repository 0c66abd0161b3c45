#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tollway_core::geometry::{FreewayGeometry, FundamentalDiagram, RampSpec};
use tollway_core::sim::{DemandProfile, FreewayState, StepDemand};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn diagram(rng: &mut ChaCha8Rng) -> FundamentalDiagram {
    let v = rng.gen_range(0.2..=1.0);
    let w = rng.gen_range(0.1..=1.0);
    let f = rng.gen_range(1.0..20.0);
    let n = f / v + f / w + rng.gen_range(0.0..20.0);
    FundamentalDiagram::new(f, n, v, w)
}

pub struct Options {
    pub max_k: usize,
    pub on_ramps: bool,
    pub off_ramps: bool,
    /// Leave link 1 without an on-ramp so the geometry can be split into lane groups.
    pub free_first_link: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            max_k: 6,
            on_ramps: true,
            off_ramps: true,
            free_first_link: false,
        }
    }
}

pub fn geometry(rng: &mut ChaCha8Rng, opts: &Options) -> FreewayGeometry {
    let k = rng.gen_range(1..=opts.max_k);
    let diagrams: Vec<_> = (0..k + 2).map(|_| diagram(rng)).collect();
    let mut ramps = vec![RampSpec::NONE; k + 2];
    for (i, ramp) in ramps.iter_mut().enumerate().take(k + 1).skip(1) {
        if opts.on_ramps && !(opts.free_first_link && i == 1) && rng.gen_bool(0.5) {
            *ramp = RampSpec::on_ramp(rng.gen_range(0.5..10.0), rng.gen_range(0.2..=1.0));
        }
        if opts.off_ramps && rng.gen_bool(0.4) {
            *ramp = ramp.with_off_ramp(rng.gen_range(0.5..10.0), rng.gen_range(0.0..0.5));
        }
    }
    FreewayGeometry::new(diagrams, ramps).expect("generated geometry")
}

/// Constant demand vector: entrance flow and on-ramp demands.
pub fn demand(rng: &mut ChaCha8Rng, g: &FreewayGeometry, scale: f64) -> StepDemand {
    let entrance = rng.gen_range(0.0..=scale * g.link(0).diagram.capacity);
    let ramps = (0..g.links().len())
        .map(|i| {
            if g.link(i).ramp.has_on_ramp() && i != g.exit() {
                rng.gen_range(0.0..=scale * g.link(i).ramp.on_capacity)
            } else {
                0.0
            }
        })
        .collect();
    StepDemand { entrance, ramps }
}

pub fn constant_profile(d: &StepDemand) -> DemandProfile {
    DemandProfile::constant(d.entrance, d.ramps.clone())
}

pub fn random_state(rng: &mut ChaCha8Rng, g: &FreewayGeometry) -> FreewayState {
    let mut s = FreewayState::empty(g);
    for i in 0..g.links().len() {
        let cap = if i == 0 { 20.0 } else { g.link(i).diagram.max_vehicles };
        s.vehicles[i] = rng.gen_range(0.0..=cap);
        if g.link(i).ramp.has_on_ramp() {
            s.queues[i] = rng.gen_range(0.0..20.0);
        }
    }
    s
}
