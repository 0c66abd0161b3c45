//! Macroscopic freeway simulation with toll-lane split control.

pub mod control;
pub mod equilibrium;
pub mod geometry;
pub mod node;
pub mod pricing;
pub mod sim;

pub use geometry::{
    split_lanes, DualGeometry, FreewayGeometry, FundamentalDiagram, LaneGroup, LaneSplit, RampSpec,
};
