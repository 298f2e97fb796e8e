//! Clinical activity network: split-node graph construction, node-arc
//! incidence system, and conversion of activity sequences to flow vectors.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const START_ID: &str = "START";
pub const END_ID: &str = "END";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActivitySpec {
    pub id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub outcome_layer: bool,
    #[serde(default)]
    pub allow_self_repeat: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub activities: Vec<ActivitySpec>,
    #[serde(default)]
    pub transitions: Vec<(String, String)>,
    #[serde(default)]
    pub reference_pathways: Vec<Vec<String>>,
    /// Generate every inter-activity arc `i_e -> j_s` (synthetic experiments).
    #[serde(default)]
    pub complete: bool,
}

impl NetworkSpec {
    pub fn from_json(s: &str) -> Result<Self, NetworkError> {
        serde_json::from_str(s).map_err(|e| NetworkError::BadSpec(e.to_string()))
    }
}

/// Node of the compiled network. Activities are split into a start and an
/// end node; START and END are artificial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeRole {
    Start(usize),
    End(usize),
    SourceStart,
    SourceEnd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub tail: usize,
    pub head: usize,
}

#[derive(Clone, Debug)]
pub struct ClinicalNetwork {
    pub activities: Vec<ActivitySpec>,
    /// Number of nodes: 2 * activities + 2.
    pub node_count: usize,
    pub arcs: Vec<Arc>,
    pub start_index: usize,
    pub end_index: usize,
    arc_index: BTreeMap<(usize, usize), usize>,
    reference_pathways: Vec<Vec<String>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("network spec is not valid JSON: {0}")]
    BadSpec(String),
    #[error("duplicate activity id {0:?}")]
    DuplicateActivityId(String),
    #[error("invalid activity id {0:?} (empty or contains whitespace)")]
    InvalidActivityId(String),
    #[error("transition endpoint {0:?} names no declared activity")]
    UnknownTransitionEndpoint(String),
    #[error("self transition on {0:?}; use allow_self_repeat instead")]
    SelfTransition(String),
    #[error("outcome-layer activity {0:?} must have END as its only successor")]
    InvalidOutcomeLayer(String),
    #[error("reference pathway {0} is not a simple START-to-END path over declared transitions: {1}")]
    InvalidReferencePathway(usize, String),
    #[error("network is trivial: fewer than two distinct START-to-END paths")]
    TrivialNetwork,
    #[error("no arc from {tail:?} to {head:?}")]
    MissingArc { tail: String, head: String },
    #[error("unknown activity {0:?} in sequence")]
    UnknownActivity(String),
}

/// Nonnegative integer arc-traversal counts representing a walk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowVector {
    pub counts: Vec<u32>,
    pub source_id: Option<String>,
}

impl FlowVector {
    /// Total number of arc traversals, `‖x‖₁`.
    pub fn total_steps(&self) -> u32 {
        self.counts.iter().sum()
    }
}

/// Node-arc incidence system with the END row omitted.
#[derive(Clone, Debug)]
pub struct IncidenceSystem {
    /// Row-major `(m-1) x n` signed incidence matrix.
    pub a: Vec<Vec<i64>>,
    /// All zeros except `+1` at the START row.
    pub b: Vec<i64>,
}

impl IncidenceSystem {
    pub fn nrows(&self) -> usize {
        self.a.len()
    }

    pub fn ncols(&self) -> usize {
        self.a.first().map_or(0, |r| r.len())
    }

    /// `A x - b` in integer arithmetic.
    pub fn residual(&self, x: &[u32]) -> Vec<i64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| {
                row.iter()
                    .zip(x)
                    .map(|(aij, xj)| aij * i64::from(*xj))
                    .sum::<i64>()
                    - bi
            })
            .collect()
    }

    /// Rank by fraction-free Gaussian elimination over rationals (f64 is
    /// exact here: entries are ±1/0 and networks are tiny).
    pub fn rank(&self) -> usize {
        let mut m: Vec<Vec<f64>> = self
            .a
            .iter()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect();
        let (nr, nc) = (self.nrows(), self.ncols());
        let mut rank = 0;
        let mut col = 0;
        while rank < nr && col < nc {
            let piv = (rank..nr).find(|&i| m[i][col].abs() > 1e-9);
            if let Some(p) = piv {
                m.swap(rank, p);
                let d = m[rank][col];
                for i in 0..nr {
                    if i != rank && m[i][col].abs() > 1e-9 {
                        let f = m[i][col] / d;
                        for j in col..nc {
                            m[i][j] -= f * m[rank][j];
                        }
                    }
                }
                rank += 1;
            }
            col += 1;
        }
        rank
    }
}

impl ClinicalNetwork {
    pub fn activity_count(&self) -> usize {
        self.activities.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn activity_index(&self, id: &str) -> Option<usize> {
        self.activities.iter().position(|a| a.id == id)
    }

    pub fn start_node(&self, activity: usize) -> usize {
        2 * activity
    }

    pub fn end_node(&self, activity: usize) -> usize {
        2 * activity + 1
    }

    /// Activity owning a node, or `None` for START/END.
    pub fn node_activity(&self, node: usize) -> Option<usize> {
        if node < 2 * self.activities.len() {
            Some(node / 2)
        } else {
            None
        }
    }

    pub fn node_name(&self, node: usize) -> String {
        if node == self.start_index {
            START_ID.to_string()
        } else if node == self.end_index {
            END_ID.to_string()
        } else {
            let act = &self.activities[node / 2].id;
            if node % 2 == 0 {
                format!("{act}.start")
            } else {
                format!("{act}.end")
            }
        }
    }

    pub fn arc_index(&self, tail: usize, head: usize) -> Option<usize> {
        self.arc_index.get(&(tail, head)).copied()
    }

    pub fn intra_arc(&self, activity: usize) -> usize {
        self.arc_index(self.start_node(activity), self.end_node(activity))
            .expect("every activity has an intra arc")
    }

    pub fn reference_pathways(&self) -> &[Vec<String>] {
        &self.reference_pathways
    }

    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = (usize, &Arc)> {
        self.arcs
            .iter()
            .enumerate()
            .filter(move |(_, a)| a.tail == node)
    }

    /// Resolve a node reference of the form `"ACTIVITY.start"`,
    /// `"ACTIVITY.end"`, `"START"`, or `"END"`.
    pub fn resolve_node(&self, reference: &str) -> Result<usize, NetworkError> {
        if reference == START_ID {
            return Ok(self.start_index);
        }
        if reference == END_ID {
            return Ok(self.end_index);
        }
        let (id, role) = reference
            .rsplit_once('.')
            .ok_or_else(|| NetworkError::UnknownActivity(reference.to_string()))?;
        let act = self
            .activity_index(id)
            .ok_or_else(|| NetworkError::UnknownActivity(id.to_string()))?;
        match role {
            "start" => Ok(self.start_node(act)),
            "end" => Ok(self.end_node(act)),
            _ => Err(NetworkError::UnknownActivity(reference.to_string())),
        }
    }
}

/// Compile a declarative spec into a clinical activity network with
/// deterministic node and arc ordering.
pub fn compile_network(spec: &NetworkSpec) -> Result<ClinicalNetwork, NetworkError> {
    let mut ids = BTreeSet::new();
    for act in &spec.activities {
        if act.id.is_empty()
            || act.id.chars().any(char::is_whitespace)
            || act.id == START_ID
            || act.id == END_ID
        {
            return Err(NetworkError::InvalidActivityId(act.id.clone()));
        }
        if !ids.insert(act.id.clone()) {
            return Err(NetworkError::DuplicateActivityId(act.id.clone()));
        }
    }
    let n_act = spec.activities.len();
    let start_index = 2 * n_act;
    let end_index = 2 * n_act + 1;
    let index_of = |id: &str| spec.activities.iter().position(|a| a.id == id);

    let mut arc_set: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (k, act) in spec.activities.iter().enumerate() {
        arc_set.insert((2 * k, 2 * k + 1));
        if act.allow_self_repeat {
            arc_set.insert((2 * k + 1, 2 * k));
        }
    }
    if spec.complete {
        for i in 0..n_act {
            for j in 0..n_act {
                if i != j {
                    arc_set.insert((2 * i + 1, 2 * j));
                }
            }
        }
    }
    for (tail, head) in &spec.transitions {
        let t = match tail.as_str() {
            START_ID => start_index,
            END_ID => return Err(NetworkError::UnknownTransitionEndpoint(tail.clone())),
            id => {
                let k = index_of(id)
                    .ok_or_else(|| NetworkError::UnknownTransitionEndpoint(id.to_string()))?;
                2 * k + 1
            }
        };
        let h = match head.as_str() {
            END_ID => end_index,
            START_ID => return Err(NetworkError::UnknownTransitionEndpoint(head.clone())),
            id => {
                let k = index_of(id)
                    .ok_or_else(|| NetworkError::UnknownTransitionEndpoint(id.to_string()))?;
                if tail == head {
                    return Err(NetworkError::SelfTransition(id.to_string()));
                }
                2 * k
            }
        };
        arc_set.insert((t, h));
    }

    let arcs: Vec<Arc> = arc_set
        .iter()
        .map(|&(tail, head)| Arc { tail, head })
        .collect();
    let arc_index: BTreeMap<(usize, usize), usize> = arcs
        .iter()
        .enumerate()
        .map(|(i, a)| ((a.tail, a.head), i))
        .collect();

    let network = ClinicalNetwork {
        activities: spec.activities.clone(),
        node_count: 2 * n_act + 2,
        arcs,
        start_index,
        end_index,
        arc_index,
        reference_pathways: spec.reference_pathways.clone(),
    };

    for (k, act) in spec.activities.iter().enumerate() {
        if act.outcome_layer {
            let out: Vec<&Arc> = network
                .arcs
                .iter()
                .filter(|a| a.tail == network.end_node(k))
                .collect();
            if out.len() != 1 || out[0].head != end_index {
                return Err(NetworkError::InvalidOutcomeLayer(act.id.clone()));
            }
        }
    }

    for (q, path) in spec.reference_pathways.iter().enumerate() {
        validate_reference_path(&network, q, path)?;
    }

    if count_simple_paths(&network, 2) < 2 {
        return Err(NetworkError::TrivialNetwork);
    }

    Ok(network)
}

fn validate_reference_path(
    network: &ClinicalNetwork,
    q: usize,
    path: &[String],
) -> Result<(), NetworkError> {
    if path.is_empty() {
        return Err(NetworkError::InvalidReferencePathway(
            q,
            "empty pathway".to_string(),
        ));
    }
    let mut seen = BTreeSet::new();
    for id in path {
        if network.activity_index(id).is_none() {
            return Err(NetworkError::InvalidReferencePathway(
                q,
                format!("unknown activity {id:?}"),
            ));
        }
        if !seen.insert(id.clone()) {
            return Err(NetworkError::InvalidReferencePathway(
                q,
                format!("repeated activity {id:?}"),
            ));
        }
    }
    // Check every hop exists as an arc chain.
    match sequence_to_flow(network, path) {
        Ok(_) => Ok(()),
        Err(NetworkError::MissingArc { tail, head }) => Err(NetworkError::InvalidReferencePathway(
            q,
            format!("no arc from {tail:?} to {head:?}"),
        )),
        Err(e) => Err(e),
    }
}

/// Count distinct simple START→END paths, stopping once `cap` are found.
fn count_simple_paths(network: &ClinicalNetwork, cap: usize) -> usize {
    fn dfs(
        network: &ClinicalNetwork,
        node: usize,
        visited: &mut Vec<bool>,
        found: &mut usize,
        cap: usize,
    ) {
        if *found >= cap {
            return;
        }
        if node == network.end_index {
            *found += 1;
            return;
        }
        visited[node] = true;
        for (_, arc) in network.outgoing(node) {
            if !visited[arc.head] {
                dfs(network, arc.head, visited, found, cap);
                if *found >= cap {
                    break;
                }
            }
        }
        visited[node] = false;
    }
    let mut visited = vec![false; network.node_count];
    let mut found = 0;
    dfs(network, network.start_index, &mut visited, &mut found, cap);
    found
}

/// Node-arc incidence system `(A, b)` with the END row omitted.
pub fn incidence(network: &ClinicalNetwork) -> IncidenceSystem {
    let m = network.node_count;
    let n = network.arc_count();
    // Row order equals node order excluding END (END is the last node).
    let mut a = vec![vec![0i64; n]; m - 1];
    for (j, arc) in network.arcs.iter().enumerate() {
        if arc.tail != network.end_index {
            a[arc.tail][j] += 1;
        }
        if arc.head != network.end_index {
            a[arc.head][j] -= 1;
        }
    }
    let mut b = vec![0i64; m - 1];
    b[network.start_index] = 1;
    IncidenceSystem { a, b }
}

/// Convert an activity-id sequence into a unit-flow walk.
///
/// The walk is (START, seq…, END); each activity visit traverses its intra
/// arc, and a repeated consecutive activity uses the self-repeat arc.
pub fn sequence_to_flow(
    network: &ClinicalNetwork,
    seq: &[String],
) -> Result<FlowVector, NetworkError> {
    let mut counts = vec![0u32; network.arc_count()];
    let mut bump = |tail: usize, head: usize| -> Result<(), NetworkError> {
        match network.arc_index(tail, head) {
            Some(i) => {
                counts[i] += 1;
                Ok(())
            }
            None => Err(NetworkError::MissingArc {
                tail: network.node_name(tail),
                head: network.node_name(head),
            }),
        }
    };
    let mut prev_end = network.start_index;
    for id in seq {
        let act = network
            .activity_index(id)
            .ok_or_else(|| NetworkError::UnknownActivity(id.clone()))?;
        bump(prev_end, network.start_node(act))?;
        bump(network.start_node(act), network.end_node(act))?;
        prev_end = network.end_node(act);
    }
    bump(prev_end, network.end_index)?;
    Ok(FlowVector {
        counts,
        source_id: None,
    })
}

/// Diagnostic report from [`validate_flow`].
#[derive(Clone, Debug)]
pub struct FlowReport {
    pub residual: Vec<i64>,
    pub max_abs_residual: i64,
    pub connected: bool,
}

impl FlowReport {
    pub fn ok(&self) -> bool {
        self.max_abs_residual == 0 && self.connected
    }
}

/// Check flow balance (`A x = b`) and walk connectivity of the induced
/// multigraph.
pub fn validate_flow(network: &ClinicalNetwork, x: &FlowVector) -> FlowReport {
    assert_eq!(x.counts.len(), network.arc_count());
    let system = incidence(network);
    let residual = system.residual(&x.counts);
    let max_abs_residual = residual.iter().map(|r| r.abs()).max().unwrap_or(0);

    // Every used arc must be reachable from START through used arcs.
    let mut reach = vec![false; network.node_count];
    reach[network.start_index] = true;
    let mut queue = VecDeque::from([network.start_index]);
    while let Some(u) = queue.pop_front() {
        for (j, arc) in network.outgoing(u) {
            if x.counts[j] > 0 && !reach[arc.head] {
                reach[arc.head] = true;
                queue.push_back(arc.head);
            }
        }
    }
    let connected = network
        .arcs
        .iter()
        .enumerate()
        .filter(|(j, _)| x.counts[*j] > 0)
        .all(|(_, a)| reach[a.tail] && reach[a.head]);

    FlowReport {
        residual,
        max_abs_residual,
        connected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::abc_spec;

    fn act(id: &str) -> ActivitySpec {
        ActivitySpec {
            id: id.to_string(),
            label: id.to_string(),
            outcome_layer: false,
            allow_self_repeat: false,
        }
    }

    fn tr(a: &str, b: &str) -> (String, String) {
        (a.to_string(), b.to_string())
    }

    #[test]
    fn trivial_network_rejected() {
        let spec = NetworkSpec {
            activities: vec![act("A")],
            transitions: vec![tr(START_ID, "A"), tr("A", END_ID)],
            reference_pathways: vec![],
            complete: false,
        };
        assert!(matches!(
            compile_network(&spec),
            Err(NetworkError::TrivialNetwork)
        ));
    }

    #[test]
    fn duplicate_id_rejected() {
        let spec = NetworkSpec {
            activities: vec![act("A"), act("A")],
            transitions: vec![],
            reference_pathways: vec![],
            complete: false,
        };
        assert!(matches!(
            compile_network(&spec),
            Err(NetworkError::DuplicateActivityId(_))
        ));
    }

    #[test]
    fn unknown_transition_endpoint_rejected() {
        let mut spec = abc_spec();
        spec.transitions.push(tr("A", "Z"));
        assert!(matches!(
            compile_network(&spec),
            Err(NetworkError::UnknownTransitionEndpoint(_))
        ));
    }

    #[test]
    fn arc_count_is_intra_plus_declared() {
        let net = compile_network(&abc_spec()).unwrap();
        // 3 intra + 1 self-repeat + 8 transitions
        assert_eq!(net.arc_count(), 12);
        assert_eq!(net.node_count, 8);
    }

    #[test]
    fn compile_is_deterministic() {
        let a = compile_network(&abc_spec()).unwrap();
        let b = compile_network(&abc_spec()).unwrap();
        assert_eq!(a.arcs, b.arcs);
    }

    #[test]
    fn incidence_b_has_single_plus_one_at_start() {
        let net = compile_network(&abc_spec()).unwrap();
        let sys = incidence(&net);
        let nonzero: Vec<_> = sys.b.iter().enumerate().filter(|(_, v)| **v != 0).collect();
        assert_eq!(nonzero, vec![(net.start_index, &1i64)]);
    }

    #[test]
    fn intra_columns_sum_to_zero() {
        let net = compile_network(&abc_spec()).unwrap();
        let sys = incidence(&net);
        for k in 0..net.activity_count() {
            let j = net.intra_arc(k);
            let col: i64 = sys.a.iter().map(|row| row[j]).sum();
            assert_eq!(col, 0);
        }
    }

    #[test]
    fn end_headed_columns_sum_to_plus_one() {
        let net = compile_network(&abc_spec()).unwrap();
        let sys = incidence(&net);
        for (j, arc) in net.arcs.iter().enumerate() {
            let col: i64 = sys.a.iter().map(|row| row[j]).sum();
            if arc.head == net.end_index {
                assert_eq!(col, 1);
            } else {
                assert_eq!(col, 0);
            }
        }
    }

    #[test]
    fn incidence_full_row_rank() {
        let net = compile_network(&abc_spec()).unwrap();
        let sys = incidence(&net);
        assert_eq!(sys.rank(), net.node_count - 1);
    }

    #[test]
    fn reference_flow_balances() {
        let net = compile_network(&abc_spec()).unwrap();
        let x = sequence_to_flow(&net, &["A".into(), "B".into(), "C".into()]).unwrap();
        assert!(x.counts.iter().all(|&c| c <= 1));
        let report = validate_flow(&net, &x);
        assert!(report.ok());
    }

    #[test]
    fn repeated_activity_uses_self_repeat_arc() {
        let net = compile_network(&abc_spec()).unwrap();
        let x = sequence_to_flow(
            &net,
            &["A".into(), "A".into(), "B".into(), "C".into()],
        )
        .unwrap();
        let a = net.activity_index("A").unwrap();
        let repeat = net.arc_index(net.end_node(a), net.start_node(a)).unwrap();
        assert_eq!(x.counts[repeat], 1);
        for (j, &c) in x.counts.iter().enumerate() {
            if j == net.intra_arc(a) {
                assert_eq!(c, 2);
            } else if j != repeat {
                assert!(c <= 1);
            }
        }
        assert!(validate_flow(&net, &x).ok());
    }

    #[test]
    fn empty_sequence_needs_direct_arc() {
        let net = compile_network(&abc_spec()).unwrap();
        assert!(matches!(
            sequence_to_flow(&net, &[]),
            Err(NetworkError::MissingArc { .. })
        ));
    }

    #[test]
    fn missing_arc_named() {
        let net = compile_network(&abc_spec()).unwrap();
        let err = sequence_to_flow(&net, &["B".into(), "C".into(), "A".into()]).unwrap_err();
        assert_eq!(
            err,
            NetworkError::MissingArc {
                tail: "C.end".into(),
                head: "A.start".into()
            }
        );
    }

    #[test]
    fn unbalanced_flow_reported_at_two_rows() {
        let net = compile_network(&abc_spec()).unwrap();
        let mut x = sequence_to_flow(&net, &["A".into(), "B".into(), "C".into()]).unwrap();
        let j = net.intra_arc(net.activity_index("B").unwrap());
        x.counts[j] -= 1;
        let report = validate_flow(&net, &x);
        let nonzero = report.residual.iter().filter(|r| **r != 0).count();
        assert_eq!(nonzero, 2);
        assert!(!report.ok());
    }

    #[test]
    fn disconnected_cycle_flagged() {
        // Walk START->A->END plus a disjoint B<->C style cycle sharing no
        // node with the walk.
        let spec = NetworkSpec {
            activities: vec![act("A"), act("B"), act("C"), act("D"), act("E")],
            transitions: vec![
                tr(START_ID, "A"),
                tr("A", END_ID),
                tr(START_ID, "B"),
                tr("B", "C"),
                tr("C", "B"),
                tr("C", END_ID),
                tr(START_ID, "D"),
                tr("D", "E"),
                tr("E", END_ID),
            ],
            reference_pathways: vec![],
            complete: false,
        };
        let net = compile_network(&spec).unwrap();
        let mut x = sequence_to_flow(&net, &["A".into()]).unwrap();
        // Add the B->C->B cycle (intra arcs + both inter arcs).
        for (tail, head) in [("B", "C"), ("C", "B")] {
            let t = net.activity_index(tail).unwrap();
            let h = net.activity_index(head).unwrap();
            x.counts[net.arc_index(net.end_node(t), net.start_node(h)).unwrap()] += 1;
            x.counts[net.intra_arc(t)] += 0;
        }
        x.counts[net.intra_arc(net.activity_index("B").unwrap())] += 1;
        x.counts[net.intra_arc(net.activity_index("C").unwrap())] += 1;
        let report = validate_flow(&net, &x);
        assert_eq!(report.max_abs_residual, 0);
        assert!(!report.connected);
    }

    #[test]
    fn outcome_layer_must_exit_to_end() {
        let spec = NetworkSpec {
            activities: vec![
                act("A"),
                ActivitySpec {
                    outcome_layer: true,
                    ..act("OUT")
                },
            ],
            transitions: vec![
                tr(START_ID, "A"),
                tr("A", "OUT"),
                tr("OUT", END_ID),
                tr("OUT", "A"),
                tr("A", END_ID),
            ],
            reference_pathways: vec![],
            complete: false,
        };
        assert!(matches!(
            compile_network(&spec),
            Err(NetworkError::InvalidOutcomeLayer(_))
        ));
    }
}
