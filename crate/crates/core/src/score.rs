//! Normalized concordance scoring.
//!
//! `ω(x̂) = 1 − ε(x̂) / (M(x̂) − c*'x*)` where `ε` is the walk's duality
//! gap, `x*` a shortest path, and `M(x̂)` the cost of a longest walk with
//! the same number of steps. `M` comes from a Bellman-Ford-style
//! longest-walk dynamic program evaluated once per cohort up to a step
//! cap.

use thiserror::Error;

use crate::network::{validate_flow, ClinicalNetwork, FlowVector};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("walk has {got} steps but the table was built with cap {cap}")]
    WalkTooLong { got: u32, cap: u32 },
    #[error("walk is not a feasible unit flow on this network")]
    InfeasibleWalk,
    #[error("END is unreachable within {0} steps")]
    EndUnreachable(u32),
}

/// Longest-walk costs from START, by exact step (arc) count.
///
/// `c[t][v]` is the largest cost of a START→`v` walk using exactly `t`
/// arcs (`None` = no such walk); `m[k]` is `max_{t ≤ k} c[t][END]`.
#[derive(Clone, Debug)]
pub struct LongestWalkTable<R> {
    network: ClinicalNetwork,
    c: Vec<Vec<Option<R>>>,
    m: Vec<Option<R>>,
    cap: u32,
}

impl<R: Real> LongestWalkTable<R> {
    pub fn cap(&self) -> u32 {
        self.cap
    }

    /// `M_k`: cost of a longest walk with at most `k` steps that ends at
    /// END, or `None` when END cannot be reached in `k` steps.
    pub fn longest_cost(&self, k: u32) -> Option<R> {
        self.m.get(k as usize).copied().flatten()
    }

    pub fn network(&self) -> &ClinicalNetwork {
        &self.network
    }

    /// Largest cost of a START→`node` walk using exactly `t` arcs.
    pub fn node_cost(&self, t: u32, node: usize) -> Option<R> {
        self.c.get(t as usize).and_then(|row| row[node])
    }
}

/// Build the table for walks of up to `n_steps` arcs.
pub fn longest_walk_table<R: Real>(
    network: &ClinicalNetwork,
    cost: &[R],
    n_steps: u32,
) -> LongestWalkTable<R> {
    assert_eq!(cost.len(), network.arc_count());
    assert!(n_steps >= 1);
    let nodes = network.node_count;
    let cap = n_steps as usize;
    let mut c: Vec<Vec<Option<R>>> = Vec::with_capacity(cap + 1);
    let mut base = vec![None; nodes];
    base[network.start_index] = Some(R::zero());
    c.push(base);
    for t in 1..=cap {
        let mut row: Vec<Option<R>> = vec![None; nodes];
        for (j, arc) in network.arcs.iter().enumerate() {
            if let Some(prev) = c[t - 1][arc.tail] {
                let cand = prev + cost[j];
                if row[arc.head].map_or(true, |cur| cand > cur) {
                    row[arc.head] = Some(cand);
                }
            }
        }
        c.push(row);
    }
    let mut m: Vec<Option<R>> = Vec::with_capacity(cap + 1);
    let mut best: Option<R> = None;
    for row in &c {
        if let Some(v) = row[network.end_index] {
            best = Some(best.map_or(v, |b: R| b.max(v)));
        }
        m.push(best);
    }
    LongestWalkTable {
        network: network.clone(),
        c,
        m,
        cap: n_steps,
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ConcordanceScore<R> {
    pub omega: R,
    /// Duality gap `c*'x̂ − c*'x*`.
    pub epsilon: R,
    /// Total arc traversals `‖x̂‖₁`.
    pub walk_length: u32,
    pub shortest_cost: R,
    pub longest_cost: R,
}

/// Score a feasible walk against the learned cost vector.
pub fn omega<R: Real>(
    walk: &FlowVector,
    cost: &[R],
    shortest_cost: R,
    table: &LongestWalkTable<R>,
) -> Result<ConcordanceScore<R>, ScoreError> {
    let steps = walk.total_steps();
    if steps > table.cap {
        return Err(ScoreError::WalkTooLong {
            got: steps,
            cap: table.cap,
        });
    }
    if !validate_flow(&table.network, walk).ok() {
        return Err(ScoreError::InfeasibleWalk);
    }
    let longest = table
        .longest_cost(steps)
        .ok_or(ScoreError::EndUnreachable(steps))?;
    let walk_cost = crate::inverse::flow_cost(cost, walk);
    let epsilon = walk_cost - shortest_cost;
    let denom = longest - shortest_cost;
    let omega = if denom <= R::real(1e-12) {
        // Every walk of this length is a shortest path.
        R::one()
    } else {
        (R::one() - epsilon / denom).max(R::zero()).min(R::one())
    };
    Ok(ConcordanceScore {
        omega,
        epsilon,
        walk_length: steps,
        shortest_cost,
        longest_cost: longest,
    })
}
