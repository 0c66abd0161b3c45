//! Node flow solvers.
//!
//! [`solve_node`] is the general m×n node model with FIFO split ratios and
//! input priorities. [`solve_merge`] is its closed form for a freeway merge
//! (upstream mainline plus on-ramp into one downstream link) and
//! [`solve_toll_node`] resolves the merge of an on-ramp into parallel toll and
//! general-purpose lane groups.

use thiserror::Error;

/// Absolute tolerance on normalized (per-step) flows.
pub const FLOW_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NodeError {
    #[error("node needs at least one input and one output (got {inputs}×{outputs})")]
    Empty { inputs: usize, outputs: usize },
    #[error("split matrix has {rows} rows for {inputs} inputs")]
    RowCount { rows: usize, inputs: usize },
    #[error("split matrix row {row} has {len} entries, expected {outputs}")]
    RowLength { row: usize, len: usize, outputs: usize },
    #[error("split ratios of input {row} sum to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("{what} {index} is negative or not finite: {value}")]
    InvalidValue {
        what: &'static str,
        index: usize,
        value: f64,
    },
}

/// Demands, supplies, split ratios and priorities at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProblem {
    demands: Vec<f64>,
    supplies: Vec<f64>,
    splits: Vec<Vec<f64>>,
    priorities: Vec<f64>,
}

fn check_values(what: &'static str, values: &[f64]) -> Result<(), NodeError> {
    for (index, &value) in values.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(NodeError::InvalidValue { what, index, value });
        }
    }
    Ok(())
}

impl NodeProblem {
    pub fn new(
        demands: Vec<f64>,
        supplies: Vec<f64>,
        splits: Vec<Vec<f64>>,
        priorities: Vec<f64>,
    ) -> Result<Self, NodeError> {
        let (m, n) = (demands.len(), supplies.len());
        if m == 0 || n == 0 {
            return Err(NodeError::Empty {
                inputs: m,
                outputs: n,
            });
        }
        if splits.len() != m {
            return Err(NodeError::RowCount {
                rows: splits.len(),
                inputs: m,
            });
        }
        if priorities.len() != m {
            return Err(NodeError::RowCount {
                rows: priorities.len(),
                inputs: m,
            });
        }
        check_values("demand", &demands)?;
        check_values("supply", &supplies)?;
        check_values("priority", &priorities)?;
        for (row, r) in splits.iter().enumerate() {
            if r.len() != n {
                return Err(NodeError::RowLength {
                    row,
                    len: r.len(),
                    outputs: n,
                });
            }
            check_values("split ratio", r)?;
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(NodeError::RowSum { row, sum });
            }
        }
        Ok(Self {
            demands,
            supplies,
            splits,
            priorities,
        })
    }

    pub fn inputs(&self) -> usize {
        self.demands.len()
    }

    pub fn outputs(&self) -> usize {
        self.supplies.len()
    }

    pub fn demands(&self) -> &[f64] {
        &self.demands
    }

    pub fn supplies(&self) -> &[f64] {
        &self.supplies
    }

    pub fn splits(&self) -> &[Vec<f64>] {
        &self.splits
    }

    pub fn priorities(&self) -> &[f64] {
        &self.priorities
    }
}

/// Flows `f_ij` from input `i` to output `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFlows {
    pub flows: Vec<Vec<f64>>,
    /// Number of reduction iterations the solver performed.
    pub iterations: usize,
}

impl NodeFlows {
    /// Total flow leaving input `i`.
    pub fn outflow(&self, i: usize) -> f64 {
        self.flows[i].iter().sum()
    }

    /// Total flow entering output `j`.
    pub fn inflow(&self, j: usize) -> f64 {
        self.flows.iter().map(|row| row[j]).sum()
    }
}

/// Resolve the flows through a general node.
///
/// Every iteration computes, for each output still receiving undetermined
/// flow, the reduction factor `residual supply / Σ directed priorities`, takes
/// the smallest one and either serves the inputs whose demand fits under it
/// in full or, if none does, fixes all inputs competing for that output at the
/// reduced rate. At least one input is settled per iteration, so the loop runs
/// at most `m` times.
///
/// Ties between outputs attaining the minimum go to the smallest index. If the
/// competing inputs of some output all have zero priority, that iteration uses
/// equal priorities instead.
pub fn solve_node(problem: &NodeProblem) -> NodeFlows {
    let m = problem.inputs();
    let n = problem.outputs();
    let oriented: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            problem.splits[i]
                .iter()
                .map(|b| problem.demands[i] * b)
                .collect()
        })
        .collect();

    let mut flows = vec![vec![0.0; n]; m];
    let mut residual = problem.supplies.clone();
    let mut pending: Vec<bool> = (0..m).map(|i| problem.demands[i] > 0.0).collect();
    let mut iterations = 0;
    let mut competing = vec![false; n];

    loop {
        // J(k): outputs that still have an undetermined input with positive oriented demand.
        for (j, c) in competing.iter_mut().enumerate() {
            *c = (0..m).any(|i| pending[i] && oriented[i][j] > 0.0);
        }
        if !competing.iter().any(|&c| c) {
            break;
        }
        iterations += 1;

        let directed = |i: usize, j: usize, p: &[f64]| p[i] * problem.splits[i][j];
        let denominator = |j: usize, p: &[f64]| -> f64 {
            (0..m)
                .filter(|&i| pending[i] && oriented[i][j] > 0.0)
                .map(|i| directed(i, j, p))
                .sum()
        };
        let uniform = vec![1.0; m];
        let degenerate = (0..n).any(|j| competing[j] && denominator(j, &problem.priorities) <= 0.0);
        let priorities: &[f64] = if degenerate {
            &uniform
        } else {
            &problem.priorities
        };

        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|&j| competing[j]) {
            let a = residual[j].max(0.0) / denominator(j, priorities);
            if best.is_none_or(|(_, b)| a < b) {
                best = Some((j, a));
            }
        }
        let (j_hat, a_hat) = best.expect("at least one competing output");

        let contenders: Vec<usize> = (0..m)
            .filter(|&i| pending[i] && oriented[i][j_hat] > 0.0)
            .collect();
        let unconstrained: Vec<usize> = contenders
            .iter()
            .copied()
            .filter(|&i| problem.demands[i] <= a_hat * priorities[i] + FLOW_TOL)
            .collect();

        if !unconstrained.is_empty() {
            for &i in &unconstrained {
                for j in 0..n {
                    flows[i][j] = oriented[i][j];
                    residual[j] -= oriented[i][j];
                }
                pending[i] = false;
            }
        } else {
            for &i in &contenders {
                for j in 0..n {
                    let f = a_hat * directed(i, j, priorities);
                    flows[i][j] = f;
                    residual[j] -= f;
                }
                pending[i] = false;
            }
        }
    }

    NodeFlows { flows, iterations }
}

/// Flows `(f_{i-1}, r_i)` of a freeway merge: the upstream link with demand
/// `upstream_demand` and the on-ramp with demand `ramp_demand` share the
/// supply of the downstream link according to priorities `p_up + p_ramp = 1`.
pub fn solve_merge(
    upstream_demand: f64,
    ramp_demand: f64,
    supply: f64,
    p_up: f64,
    p_ramp: f64,
) -> (f64, f64) {
    if upstream_demand + ramp_demand <= supply {
        (upstream_demand, ramp_demand)
    } else if upstream_demand <= p_up * supply {
        (upstream_demand, supply - upstream_demand)
    } else if ramp_demand <= p_ramp * supply {
        (supply - ramp_demand, ramp_demand)
    } else {
        (p_up * supply, p_ramp * supply)
    }
}

/// Local inputs of the node feeding mainline link `i` of a toll-lane freeway.
/// Index 0 is the toll group, index 1 the general-purpose group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TollNodeInput {
    /// Entrance split ratios `(α¹, α²)`.
    pub alpha: [f64; 2],
    /// On-ramp demand `r^d_i`.
    pub ramp_demand: f64,
    /// `f^{ξ,d}_{i-1}`.
    pub upstream_demand: [f64; 2],
    /// `f^{ξ,s}_i`.
    pub supply: [f64; 2],
    /// `p^{ξ,f}_{i-1}`.
    pub upstream_priority: [f64; 2],
    /// `p^r_i`.
    pub ramp_priority: f64,
}

impl TollNodeInput {
    /// Potential flow `ψ^ξ` from the ramp into lane group `g` at split `alpha`,
    /// ignoring the coupling with the other group.
    pub fn potential(&self, g: usize, alpha: f64) -> f64 {
        let weighted = alpha * self.ramp_priority;
        let mut denominator = weighted + self.upstream_priority[g];
        let mut numerator = weighted;
        if denominator <= 0.0 {
            // Both priorities vanish: compete with equal weights.
            numerator = alpha;
            denominator = alpha + 1.0;
        }
        let share = if numerator > 0.0 {
            self.supply[g] * numerator / denominator
        } else {
            0.0
        };
        share
            .max(self.supply[g] - self.upstream_demand[g])
            .min(alpha * self.ramp_demand)
    }

    /// Reduction factor `λ^ξ(α)` of lane group `g`: 1 when nothing is sent
    /// there, otherwise `ψ^ξ / (α r^d)`.
    pub fn group_reduction(&self, g: usize, alpha: f64) -> f64 {
        if alpha <= 0.0 || self.ramp_demand <= 0.0 {
            1.0
        } else {
            (self.potential(g, alpha) / (alpha * self.ramp_demand)).clamp(0.0, 1.0)
        }
    }
}

/// Flows through a toll-lane merge node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TollNodeResult {
    /// `r^ξ_i`.
    pub ramp_flow: [f64; 2],
    /// `f^ξ_{i-1}`.
    pub upstream_flow: [f64; 2],
    /// `λ_i = min(λ¹, λ²)`.
    pub reduction: f64,
    pub group_reduction: [f64; 2],
    /// `ψ^ξ_i`.
    pub potential: [f64; 2],
}

impl TollNodeResult {
    pub fn total_ramp_flow(&self) -> f64 {
        self.ramp_flow[0] + self.ramp_flow[1]
    }
}

/// Resolve a toll-lane merge. Ramp flows stay proportional to the split
/// ratios: both groups admit the fraction `λ` of their share of the ramp
/// demand, and each upstream group takes whatever supply the ramp leaves.
pub fn solve_toll_node(input: &TollNodeInput) -> TollNodeResult {
    let potential = [
        input.potential(0, input.alpha[0]),
        input.potential(1, input.alpha[1]),
    ];
    let group_reduction = [
        input.group_reduction(0, input.alpha[0]),
        input.group_reduction(1, input.alpha[1]),
    ];
    let reduction = group_reduction[0].min(group_reduction[1]);
    let ramp_flow = [0, 1].map(|g| reduction * input.alpha[g] * input.ramp_demand);
    let upstream_flow =
        [0, 1].map(|g| input.upstream_demand[g].min(input.supply[g] - ramp_flow[g]).max(0.0));
    TollNodeResult {
        ramp_flow,
        upstream_flow,
        reduction,
        group_reduction,
        potential,
    }
}
