//! Shortest-path and negative-cycle routines on the activity network.
//! Arc costs may be negative (the learned cost vectors usually are), so
//! everything is Bellman-Ford based.

use thiserror::Error;

use crate::network::{ClinicalNetwork, FlowVector};
use crate::scalar::Real;

#[derive(Debug, Error)]
#[error("negative-cost directed cycle under the supplied cost vector (arcs {0:?})")]
pub struct NegativeCycleDetected(pub Vec<usize>);

/// Relaxation threshold: improvements at or below this size are treated
/// as zero so cycles at solver-residual scale (learned cost vectors are
/// feasible only up to the QP tolerance) don't register as negative.
const RELAX_EPS: f64 = 1e-9;

/// Bellman-Ford distances from `source` over all arcs. Returns per-node
/// labels (`None` = unreachable) and predecessor arcs.
fn bellman_ford<R: Real>(
    net: &ClinicalNetwork,
    c: &[R],
    source: usize,
    reversed: bool,
) -> (Vec<Option<R>>, Vec<Option<usize>>) {
    let n = net.node_count;
    let mut dist: Vec<Option<R>> = vec![None; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    dist[source] = Some(R::zero());
    for _ in 0..n {
        let mut changed = false;
        for (k, arc) in net.arcs.iter().enumerate() {
            let (tail, head) = if reversed {
                (arc.head, arc.tail)
            } else {
                (arc.tail, arc.head)
            };
            if let Some(dt) = dist[tail] {
                let cand = dt + c[k];
                if dist[head].map_or(true, |dh| cand < dh - R::real(RELAX_EPS)) {
                    dist[head] = Some(cand);
                    pred[head] = Some(k);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (dist, pred)
}

/// Bellman-Ford label-correcting negative-cycle detection. Returns a
/// witness cycle (arc indices in traversal order) if one exists anywhere
/// in the network under `c`, else `None`.
pub fn detect_negative_cycle<R: Real>(net: &ClinicalNetwork, c: &[R]) -> Option<Vec<usize>> {
    assert_eq!(c.len(), net.arc_count());
    let n = net.node_count;
    // Virtual super-source: start every label at zero so unreachable
    // components are still covered.
    let mut dist = vec![R::zero(); n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut relaxed_node = None;
    for round in 0..n {
        relaxed_node = None;
        for (k, arc) in net.arcs.iter().enumerate() {
            let cand = dist[arc.tail] + c[k];
            if cand < dist[arc.head] - R::real(RELAX_EPS) {
                dist[arc.head] = cand;
                pred[arc.head] = Some(k);
                relaxed_node = Some(arc.head);
            }
        }
        if relaxed_node.is_none() {
            return None;
        }
        let _ = round;
    }
    // A relaxation on the n-th pass means some node lies on or downstream
    // of a negative cycle; walk predecessors back onto the cycle.
    let mut v = relaxed_node?;
    for _ in 0..n {
        v = net.arcs[pred[v]?].tail;
    }
    let cycle_entry = v;
    let mut cycle = Vec::new();
    let mut u = cycle_entry;
    loop {
        let k = pred[u].expect("cycle predecessor");
        cycle.push(k);
        u = net.arcs[k].tail;
        if u == cycle_entry {
            break;
        }
    }
    cycle.reverse();
    Some(cycle)
}

/// Minimum-cost START→END path under `c` and its cost. Ties between
/// equal-cost paths break toward the lexicographically smallest arc-index
/// sequence.
pub fn shortest_path_cost<R: Real>(
    net: &ClinicalNetwork,
    c: &[R],
) -> Result<(R, FlowVector), NegativeCycleDetected> {
    assert_eq!(c.len(), net.arc_count());
    if let Some(cycle) = detect_negative_cycle(net, c) {
        return Err(NegativeCycleDetected(cycle));
    }
    let start = net.start_index;
    let end = net.end_index;
    let (d_from, _) = bellman_ford(net, c, start, false);
    let (d_to, _) = bellman_ford(net, c, end, true);
    let total = d_from[end].expect("END reachable in a compiled network");
    let slack_tol = R::real(1e-9) * (R::one() + total.abs());

    // Subgraph of arcs lying on some minimum-cost path.
    let on_shortest: Vec<bool> = net
        .arcs
        .iter()
        .enumerate()
        .map(|(k, arc)| match (d_from[arc.tail], d_to[arc.head]) {
            (Some(a), Some(b)) => (a + c[k] + b - total).abs() <= slack_tol,
            _ => false,
        })
        .collect();

    // Greedy lexicographic construction: at each node take the smallest
    // unused consistent arc that still leaves END reachable. Zero-cost
    // cycles in the shortest subgraph make a plain greedy walk unsafe,
    // hence the reachability check.
    let reaches_end = |from: usize, used: &[bool]| -> bool {
        let mut seen = vec![false; net.node_count];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(u) = stack.pop() {
            if u == end {
                return true;
            }
            for (k, arc) in net.outgoing(u) {
                if on_shortest[k] && !used[k] && !seen[arc.head] {
                    seen[arc.head] = true;
                    stack.push(arc.head);
                }
            }
        }
        false
    };

    let mut counts = vec![0u32; net.arc_count()];
    let mut used = vec![false; net.arc_count()];
    let mut node = start;
    while node != end {
        let mut advanced = false;
        for (k, arc) in net.outgoing(node) {
            if !on_shortest[k] || used[k] {
                continue;
            }
            used[k] = true;
            if reaches_end(arc.head, &used) {
                counts[k] += 1;
                node = arc.head;
                advanced = true;
                break;
            }
            used[k] = false;
        }
        assert!(advanced, "shortest-path subgraph must reach END");
    }
    Ok((
        total,
        FlowVector {
            counts,
            source_id: None,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{compile_network, sequence_to_flow, NetworkSpec};

    fn diamond() -> ClinicalNetwork {
        // Three activities with forward transitions only; several
        // distinct START-to-END routes.
        let spec = NetworkSpec::from_json(
            r#"{
              "activities": [
                {"id": "A"}, {"id": "B"}, {"id": "C"}
              ],
              "transitions": [
                ["START","A"],["START","B"],["START","C"],
                ["A","B"],["A","C"],["B","C"],
                ["A","END"],["B","END"],["C","END"]
              ]
            }"#,
        )
        .unwrap();
        compile_network(&spec).unwrap()
    }

    /// Arc-index sequence of a simple-path flow, in traversal order.
    fn traversal(net: &ClinicalNetwork, flow: &FlowVector) -> Vec<usize> {
        let mut seq = Vec::new();
        let mut counts = flow.counts.clone();
        let mut node = net.start_index;
        while node != net.end_index {
            let (k, arc) = net
                .outgoing(node)
                .find(|(k, _)| counts[*k] > 0)
                .expect("walk continues to END");
            counts[k] -= 1;
            seq.push(k);
            node = arc.head;
        }
        seq
    }

    #[test]
    fn zero_costs_return_zero_and_a_valid_path() {
        let net = diamond();
        let c = vec![0.0; net.arc_count()];
        let (cost, path) = shortest_path_cost(&net, &c).unwrap();
        assert_eq!(cost, 0.0);
        let report = crate::network::validate_flow(&net, &path);
        assert!(report.ok());
    }

    #[test]
    fn negative_arc_changes_route() {
        let net = diamond();
        let mut c: Vec<f64> = vec![0.1; net.arc_count()];
        // Make the A -> B -> C route strongly attractive.
        let a = net.activity_index("A").unwrap();
        let b = net.activity_index("B").unwrap();
        let cc = net.activity_index("C").unwrap();
        c[net.arc_index(net.end_node(a), net.start_node(b)).unwrap()] = -1.0;
        c[net.arc_index(net.end_node(b), net.start_node(cc)).unwrap()] = -1.0;
        let (cost, path) = shortest_path_cost(&net, &c).unwrap();
        let expect = sequence_to_flow(&net, &["A".into(), "B".into(), "C".into()]).unwrap();
        assert_eq!(path.counts, expect.counts);
        // Five 0.1-cost arcs plus the two -1 inter arcs.
        assert!((cost - (-1.5)).abs() < 1e-12);
    }

    #[test]
    fn negative_cycle_reported() {
        let spec = NetworkSpec::from_json(
            r#"{
              "activities": [
                {"id": "A", "allow_self_repeat": true}, {"id": "B"}
              ],
              "transitions": [
                ["START","A"],["A","B"],["B","A"],
                ["A","END"],["B","END"]
              ]
            }"#,
        )
        .unwrap();
        let net = compile_network(&spec).unwrap();
        let a = net.activity_index("A").unwrap();
        let mut c = vec![0.0; net.arc_count()];
        // Self-repeat loop A_e -> A_s plus the intra arc A_s -> A_e.
        c[net.arc_index(net.end_node(a), net.start_node(a)).unwrap()] = -1.0;
        let cycle = detect_negative_cycle(&net, &c).expect("cycle");
        let total: f64 = cycle.iter().map(|&k| c[k]).sum();
        assert!(total < 0.0);
        // The witness must be a closed walk.
        for w in cycle.windows(2) {
            assert_eq!(net.arcs[w[0]].head, net.arcs[w[1]].tail);
        }
        assert_eq!(
            net.arcs[*cycle.last().unwrap()].head,
            net.arcs[cycle[0]].tail
        );
        assert!(shortest_path_cost(&net, &c).is_err());
    }

    #[test]
    fn tie_break_is_lexicographic() {
        let net = diamond();
        // Every route costs zero; the tie-break picks the one whose
        // arc-index sequence is lexicographically smallest.
        let c = vec![0.0; net.arc_count()];
        let (_, path) = shortest_path_cost(&net, &c).unwrap();
        let chosen = traversal(&net, &path);
        for seq in [
            vec!["A"],
            vec!["B"],
            vec!["C"],
            vec!["A", "B"],
            vec!["A", "C"],
            vec!["A", "B", "C"],
            vec!["B", "C"],
        ] {
            let owned: Vec<String> = seq.iter().map(|s| s.to_string()).collect();
            let flow = sequence_to_flow(&net, &owned).unwrap();
            assert!(chosen <= traversal(&net, &flow));
        }
    }
}
