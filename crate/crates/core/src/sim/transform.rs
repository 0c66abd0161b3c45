use super::{FreewayState, StepDemand};
use crate::geometry::{FreewayGeometry, RampSpec};

/// An equivalent freeway without off-ramps. Link `i` quantities are scaled by
/// `μ_i = Π_{j<i} 1/β^f_j` so that `n̂_i(t) = μ_i n_i(t)` along every trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct OfframpFreeSystem {
    pub geometry: FreewayGeometry,
    pub state: FreewayState,
    /// `μ_0..μ_{K+1}`.
    pub mu: Vec<f64>,
}

impl OfframpFreeSystem {
    pub fn scale_demand(&self, demand: &StepDemand) -> StepDemand {
        StepDemand {
            entrance: demand.entrance,
            ramps: demand.ramps.iter().zip(&self.mu).map(|(d, m)| d * m).collect(),
        }
    }

    /// Map a state of the transformed system back to the original one.
    pub fn unscale_state(&self, state: &FreewayState) -> FreewayState {
        FreewayState {
            vehicles: state.vehicles.iter().zip(&self.mu).map(|(n, m)| n / m).collect(),
            queues: state.queues.iter().zip(&self.mu).map(|(q, m)| q / m).collect(),
            t: state.t,
        }
    }
}

pub fn transform_remove_offramps(g: &FreewayGeometry, state: &FreewayState) -> OfframpFreeSystem {
    let n = g.links().len();
    let mut mu = vec![1.0; n + 1];
    for i in 2..=n {
        mu[i] = mu[i - 1] / g.link(i - 1).split_through();
    }
    let mut geometry = g.clone();
    for (i, link) in geometry.links_mut().iter_mut().enumerate() {
        let m = mu[i];
        link.diagram.capacity *= m;
        link.diagram.max_vehicles *= m;
        link.inflow_capacity *= m;
        link.outflow_capacity *= mu[i + 1];
        link.ramp = RampSpec {
            on_capacity: link.ramp.on_capacity * m,
            on_freeflow: link.ramp.on_freeflow,
            off_capacity: 0.0,
            split_off: 0.0,
        };
    }
    let state = FreewayState {
        vehicles: state.vehicles.iter().zip(&mu).map(|(x, m)| x * m).collect(),
        queues: state.queues.iter().zip(&mu).map(|(x, m)| x * m).collect(),
        t: state.t,
    };
    mu.truncate(n);
    OfframpFreeSystem {
        geometry,
        state,
        mu,
    }
}
