//! Bundled instances: the stage III colon cancer network with its
//! constraint set, and the small A-B-C example network used throughout
//! the tests and docs.

use crate::inverse::ConstraintSet;
use crate::network::{compile_network, ActivitySpec, ClinicalNetwork, NetworkSpec, START_ID, END_ID};

pub const COLON_NETWORK_JSON: &str = include_str!("../data/colon_network.json");
pub const COLON_CONSTRAINTS_JSON: &str = include_str!("../data/colon_constraints.json");

/// The 13-activity colon cancer network (9 clinical activities plus a
/// 4-activity outcome layer) with its two reference pathways.
pub fn colon_network() -> ClinicalNetwork {
    let spec = NetworkSpec::from_json(COLON_NETWORK_JSON).expect("bundled network parses");
    compile_network(&spec).expect("bundled network compiles")
}

/// The colon constraint set: an 8-ranking importance chain, the CT-route
/// and outcome-layer subpath rankings, and the CHEMO_COMPLETE → END
/// anchor at −1.
pub fn colon_constraints() -> ConstraintSet {
    ConstraintSet::from_json(COLON_CONSTRAINTS_JSON).expect("bundled constraints parse")
}

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

/// Three activities A, B, C with the chain plus skip arcs, self-repeat
/// on A. Matches the worked three-activity example.
pub fn abc_spec() -> NetworkSpec {
    NetworkSpec {
        activities: vec![
            ActivitySpec {
                allow_self_repeat: true,
                ..act("A")
            },
            act("B"),
            act("C"),
        ],
        transitions: vec![
            tr(START_ID, "A"),
            tr(START_ID, "B"),
            tr("A", "B"),
            tr("A", "C"),
            tr("B", "C"),
            tr("B", "A"),
            tr("C", END_ID),
            tr("B", END_ID),
        ],
        reference_pathways: vec![vec!["A".into(), "B".into(), "C".into()]],
        complete: false,
    }
}

pub fn abc_network() -> ClinicalNetwork {
    compile_network(&abc_spec()).expect("abc fixture compiles")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{incidence, sequence_to_flow, validate_flow};

    #[test]
    fn colon_network_compiles_with_expected_shape() {
        let net = colon_network();
        assert_eq!(net.activity_count(), 13);
        assert_eq!(net.node_count, 28);
        assert_eq!(net.reference_pathways().len(), 2);
        let inc = incidence(&net);
        assert_eq!(inc.rank(), net.node_count - 1);
        for path in net.reference_pathways().to_vec() {
            let x = sequence_to_flow(&net, &path).unwrap();
            assert!(validate_flow(&net, &x).ok());
        }
    }

    #[test]
    fn colon_constraints_resolve() {
        let net = colon_network();
        let cset = colon_constraints();
        assert_eq!(cset.activity_rankings.len(), 8);
        assert_eq!(cset.subpath_rankings.len(), 4);
        assert_eq!(cset.anchors.len(), 1);
        let rows = crate::inverse::build_constraint_rows::<f64>(&cset, &net).unwrap();
        assert_eq!(rows.ineq.len(), 12);
        assert_eq!(rows.anchors.len(), 1);
        assert_eq!(rows.anchors[0].1, -1.0);
    }
}
