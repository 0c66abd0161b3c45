//! Tolls that realize requested split ratios: pricing from a value-of-time
//! distribution with online calibration, and a bid auction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::DualGeometry;
use crate::sim::{contour_speed_mph, resolve_dual_flows, DualFlows, DualState, PricedSplit, SplitPricer};

/// Slowest speed used when converting link speeds to travel times.
pub const MIN_SPEED_MPH: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error("value-of-time knots must start at price 0 with mass 0, end with mass 1 and increase: {0}")]
    InvalidKnots(String),
    #[error("observed toll-lane share {0} exceeds 1")]
    InconsistentObservation(f64),
    #[error("observation needs positive counts and a positive charged toll")]
    DegenerateObservation,
}

/// Piecewise-linear cumulative distribution of the value of time over
/// `[0, π_max]`, in currency per hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotDistribution {
    knots: Vec<(f64, f64)>,
}

impl VotDistribution {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, PricingError> {
        let bad = || PricingError::InvalidKnots(format!("{knots:?}"));
        let (first, last) = match (knots.first(), knots.last()) {
            (Some(f), Some(l)) if knots.len() >= 2 => (*f, *l),
            _ => return Err(bad()),
        };
        let finite = knots.iter().all(|(p, c)| p.is_finite() && c.is_finite());
        let increasing = knots.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1);
        if !finite || !increasing || first != (0.0, 0.0) || last.1 != 1.0 {
            return Err(bad());
        }
        Ok(Self { knots })
    }

    pub fn uniform(max_price: f64) -> Self {
        Self {
            knots: vec![(0.0, 0.0), (max_price, 1.0)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn max_price(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    pub fn cdf(&self, price: f64) -> f64 {
        if price <= 0.0 {
            return 0.0;
        }
        for w in self.knots.windows(2) {
            let ((p0, c0), (p1, c1)) = (w[0], w[1]);
            if price <= p1 {
                return c0 + (c1 - c0) * (price - p0) / (p1 - p0);
            }
        }
        1.0
    }

    /// Share of travelers whose value of time is at least `price`.
    pub fn tail(&self, price: f64) -> f64 {
        1.0 - self.cdf(price)
    }

    /// Smallest price at which the share `gp_share` of travelers prefers the
    /// free lanes. A share of 1 maps to the top of the support.
    pub fn price(&self, gp_share: f64) -> f64 {
        if gp_share <= 0.0 {
            return 0.0;
        }
        if gp_share >= 1.0 {
            return self.max_price();
        }
        for w in self.knots.windows(2) {
            let ((p0, c0), (p1, c1)) = (w[0], w[1]);
            if c1 >= gp_share {
                return p0 + (p1 - p0) * (gp_share - c0) / (c1 - c0);
            }
        }
        self.max_price()
    }

    /// Move the distribution toward an observed toll-lane share at `price`.
    /// The knot nearest `price` is smoothed toward the observed mass (a knot
    /// is inserted if the nearest one is an end of the support), and the
    /// rest is made monotone again.
    pub fn calibrated(&self, price: f64, toll_share: f64, weight: f64) -> Self {
        let mut knots = self.knots.clone();
        let target = (1.0 - toll_share).clamp(0.0, 1.0);
        let nearest = knots
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 .0 - price).abs().total_cmp(&(b.1 .0 - price).abs()))
            .map_or(0, |(k, _)| k);
        let inside = price > 0.0 && price < self.max_price();
        let k = if (nearest == 0 || nearest == knots.len() - 1) && inside {
            let at = knots.partition_point(|(p, _)| *p < price);
            knots.insert(at, (price, self.cdf(price)));
            at
        } else {
            nearest
        };
        if k == 0 || k == knots.len() - 1 {
            return Self { knots };
        }
        let value = (1.0 - weight) * knots[k].1 + weight * target;
        knots[k].1 = value;
        for knot in &mut knots[..k] {
            knot.1 = knot.1.min(value);
        }
        for knot in &mut knots[k + 1..] {
            knot.1 = knot.1.max(value);
        }
        Self { knots }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LaneMode {
    /// Every toll-lane vehicle pays.
    #[default]
    Etl,
    /// High-occupancy vehicles use the toll lane for free.
    Hot,
}

/// Price per hour, the time saving it is charged for and the resulting toll.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TollQuote {
    pub price_per_hour: f64,
    pub time_saving_hours: f64,
    pub toll: f64,
}

impl TollQuote {
    pub fn new(price_per_hour: f64, time_saving_hours: f64) -> Self {
        Self {
            price_per_hour,
            time_saving_hours,
            toll: price_per_hour * time_saving_hours,
        }
    }
}

/// Price that leaves the share `gp_share` of entering travelers in the free lanes.
pub fn vot_price(gp_share: f64, dist: &VotDistribution) -> f64 {
    dist.price(gp_share)
}

/// Revenue and lane counts collected over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TollObservation {
    pub revenue: f64,
    pub price_per_hour: f64,
    pub time_saving_hours: f64,
    pub toll_count: f64,
    pub gp_count: f64,
}

impl TollObservation {
    /// Toll-lane share implied by the revenue.
    pub fn toll_share(&self, mode: LaneMode) -> Result<f64, PricingError> {
        let charged = self.price_per_hour * self.time_saving_hours;
        if !(charged > 0.0) || self.gp_count < 0.0 || self.toll_count < 0.0 {
            return Err(PricingError::DegenerateObservation);
        }
        let share = match mode {
            LaneMode::Etl => {
                let payers = self.revenue / charged;
                if payers + self.gp_count <= 0.0 {
                    return Err(PricingError::DegenerateObservation);
                }
                payers / (payers + self.gp_count)
            }
            LaneMode::Hot => {
                let total = self.toll_count + self.gp_count;
                if total <= 0.0 {
                    return Err(PricingError::DegenerateObservation);
                }
                self.revenue / (charged * total)
            }
        };
        if share > 1.0 + 1e-12 {
            return Err(PricingError::InconsistentObservation(share));
        }
        Ok(share.min(1.0))
    }
}

pub fn vot_update(
    dist: &VotDistribution,
    obs: &TollObservation,
    mode: LaneMode,
    weight: f64,
) -> Result<VotDistribution, PricingError> {
    let share = obs.toll_share(mode)?;
    Ok(dist.calibrated(obs.price_per_hour, share, weight))
}

/// Travel time saved by the toll lane from link `entrance` to the exit of
/// the mainline, at the speeds realized by `flows`.
pub fn time_saving_with(state: &DualState, g: &DualGeometry, flows: &DualFlows, entrance: usize) -> f64 {
    let tau = g.tau_hours;
    let mut hours = [0.0; 2];
    for (gi, total) in hours.iter_mut().enumerate() {
        for j in entrance..=g.num_mainline() {
            let link = g.link(j);
            let out = flows.mainline[gi][j] + flows.off_ramp[gi][j];
            let u = contour_speed_mph(state.vehicles[gi][j], out, link.length_miles, link.freeflow(), tau)
                .max(MIN_SPEED_MPH);
            *total += link.length_miles / u;
        }
    }
    (hours[1] - hours[0]).max(0.0)
}

/// [`time_saving_with`] at lane-proportional splits.
pub fn time_saving(state: &DualState, g: &DualGeometry, entrance: usize) -> f64 {
    let splits = vec![g.lane_split.toll_share(); g.links().len()];
    let flows = resolve_dual_flows(state, g, &splits);
    time_saving_with(state, g, &flows, entrance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AuctionVariant {
    /// Admit `round(α¹ H)` highest bidders.
    #[default]
    Nearest,
    /// Admit the count up to `α¹ H` that maximizes revenue.
    RevenueMax,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuctionOutcome {
    pub admitted: usize,
    pub price: f64,
    pub revenue: f64,
    /// Indices into the original bid list, highest bid first.
    pub winners: Vec<usize>,
}

/// Admit the highest bidders into the toll lane at a uniform price: the lowest
/// admitted bid, or the highest rejected one when `next_price` is set.
pub fn run_auction(bids: &[f64], alpha1: f64, variant: AuctionVariant, next_price: bool) -> AuctionOutcome {
    let h_total = bids.len();
    let mut order: Vec<usize> = (0..h_total).collect();
    order.sort_by(|&a, &b| bids[b].total_cmp(&bids[a]));
    let sorted: Vec<f64> = order.iter().map(|&k| bids[k]).collect();
    let target = alpha1.clamp(0.0, 1.0) * h_total as f64;
    let admitted = match variant {
        AuctionVariant::Nearest => (target.round() as usize).min(h_total),
        AuctionVariant::RevenueMax => {
            let limit = ((target + 1e-9).floor() as usize).min(h_total);
            let mut best = 0;
            let mut best_revenue = 0.0;
            for h in 1..=limit {
                let revenue = h as f64 * sorted[h - 1];
                if revenue >= best_revenue {
                    best = h;
                    best_revenue = revenue;
                }
            }
            best
        }
    };
    let price = if admitted == 0 {
        0.0
    } else if next_price {
        sorted.get(admitted).copied().unwrap_or(0.0)
    } else {
        sorted[admitted - 1]
    };
    AuctionOutcome {
        admitted,
        price,
        revenue: price * admitted as f64,
        winners: order[..admitted].to_vec(),
    }
}

/// One synthetic traveler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Traveler {
    pub vot: f64,
    pub bid: f64,
}

impl Traveler {
    /// Whether the traveler takes the toll lane at price-per-hour `price`.
    pub fn takes_toll(&self, price: f64) -> bool {
        self.vot >= price
    }
}

/// Draw `count` travelers by inverse-transform sampling of `dist`.
pub fn sample_travelers(dist: &VotDistribution, time_saving_hours: f64, count: usize, seed: u64) -> Vec<Traveler> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw(dist, time_saving_hours, count, &mut rng)
}

fn draw(dist: &VotDistribution, time_saving_hours: f64, count: usize, rng: &mut ChaCha8Rng) -> Vec<Traveler> {
    (0..count)
        .map(|_| {
            let vot = dist.price(rng.gen::<f64>());
            Traveler {
                vot,
                bid: vot * time_saving_hours,
            }
        })
        .collect()
}

/// Prices requested splits from a believed VoT distribution; travelers drawn
/// from the population distribution then choose lanes.
#[derive(Debug, Clone)]
pub struct VotPricer {
    pub believed: VotDistribution,
    pub population: VotDistribution,
    /// Travelers drawn per entrance and step; 0 uses the population shares exactly.
    pub travelers_per_step: usize,
    pub smoothing: f64,
    pub calibrate: bool,
    pub mode: LaneMode,
    rng: ChaCha8Rng,
}

impl VotPricer {
    pub fn new(believed: VotDistribution, population: VotDistribution, seed: u64) -> Self {
        Self {
            believed,
            population,
            travelers_per_step: 0,
            smoothing: 0.1,
            calibrate: false,
            mode: LaneMode::Etl,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl SplitPricer for VotPricer {
    fn realize(&mut self, state: &DualState, g: &DualGeometry, requested: &[f64]) -> Vec<PricedSplit> {
        let mut out: Vec<PricedSplit> = requested
            .iter()
            .map(|&alpha1| PricedSplit { alpha1, ..PricedSplit::default() })
            .collect();
        let flows = resolve_dual_flows(state, g, requested);
        let mut quotes = Vec::new();
        for i in g.entrances() {
            let price = self.believed.price(1.0 - requested[i]);
            let quote = TollQuote::new(price, time_saving_with(state, g, &flows, i));
            let alpha1 = if self.travelers_per_step == 0 {
                self.population.tail(price)
            } else {
                let travelers = draw(&self.population, quote.time_saving_hours, self.travelers_per_step, &mut self.rng);
                let toll = travelers.iter().filter(|t| t.takes_toll(price)).count();
                toll as f64 / travelers.len() as f64
            };
            out[i] = PricedSplit {
                alpha1,
                toll: quote.toll,
                revenue: 0.0,
            };
            quotes.push((i, quote));
        }
        let splits: Vec<f64> = out.iter().map(|p| p.alpha1).collect();
        let realized = resolve_dual_flows(state, g, &splits);
        for (i, quote) in quotes {
            let toll_flow = realized.on_ramp[0][i];
            let gp_flow = realized.on_ramp[1][i];
            out[i].revenue = quote.toll * toll_flow;
            if self.calibrate && toll_flow + gp_flow > 0.0 {
                let obs = TollObservation {
                    revenue: out[i].revenue,
                    price_per_hour: quote.price_per_hour,
                    time_saving_hours: quote.time_saving_hours,
                    toll_count: toll_flow,
                    gp_count: gp_flow,
                };
                if let Ok(next) = vot_update(&self.believed, &obs, self.mode, self.smoothing) {
                    self.believed = next;
                }
            }
        }
        out
    }
}

/// Auctions toll-lane admission among the travelers queued at each entrance.
#[derive(Debug, Clone)]
pub struct AuctionPricer {
    pub population: VotDistribution,
    pub variant: AuctionVariant,
    pub next_price: bool,
    rng: ChaCha8Rng,
}

impl AuctionPricer {
    pub fn new(population: VotDistribution, variant: AuctionVariant, seed: u64) -> Self {
        Self {
            population,
            variant,
            next_price: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl SplitPricer for AuctionPricer {
    fn realize(&mut self, state: &DualState, g: &DualGeometry, requested: &[f64]) -> Vec<PricedSplit> {
        let mut out: Vec<PricedSplit> = requested
            .iter()
            .map(|&alpha1| PricedSplit { alpha1, ..PricedSplit::default() })
            .collect();
        let flows = resolve_dual_flows(state, g, requested);
        for i in g.entrances() {
            let ramp = &g.link(i).ramp;
            let demand = (ramp.on_freeflow * state.queues[i]).min(ramp.on_capacity);
            let bidders = demand.round() as usize;
            if bidders == 0 {
                continue;
            }
            let saving = time_saving_with(state, g, &flows, i);
            let bids: Vec<f64> = draw(&self.population, saving, bidders, &mut self.rng)
                .iter()
                .map(|t| t.bid)
                .collect();
            let outcome = run_auction(&bids, requested[i], self.variant, self.next_price);
            out[i] = PricedSplit {
                alpha1: outcome.admitted as f64 / bidders as f64,
                toll: outcome.price,
                revenue: outcome.revenue,
            };
        }
        out
    }
}
