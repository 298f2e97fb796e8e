//! Detour extraction and exact discordance decomposition.
//!
//! A patient walk is aligned left-to-right against a reference pathway;
//! every deviation forms a detour whose cost is the cost around the
//! cycle it induces (extra discordant arcs minus missing concordant
//! arcs), normalized like ω. The detour costs sum exactly to the walk's
//! discordance `1 − ω`, which is verified on every decomposition.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::inverse::flow_cost;
use crate::network::{sequence_to_flow, ClinicalNetwork, NetworkError};
use crate::scalar::Real;
use crate::score::{omega, LongestWalkTable, ScoreError};

#[derive(Debug, Error)]
pub enum DetourError {
    #[error("detour requires arc {tail:?} -> {head:?} which is not in the network")]
    MissingArcForDetour { tail: String, head: String },
    #[error(
        "detour decomposition does not reproduce the concordance score \
         (residual {residual}); alignment or cost bug"
    )]
    IdentityViolation { residual: f64 },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Left-to-right alignment of a walk against a reference pathway
/// `(γ₀ = START, γ₁..γ_K, γ_{K+1} = END)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub reference: Vec<String>,
    /// `present[i]` for i = 0..=K+1; START and END are always present.
    pub present: Vec<bool>,
    /// `deltas[i]`: discordant activities after γ_i (Δ_i); nonempty only
    /// when `present[i]`.
    pub deltas: Vec<Vec<String>>,
}

impl Alignment {
    /// Reassemble `(Δ₀, Γ₁, Δ₁, …, Γ_K, Δ_K)` into the walk's activity
    /// sequence.
    pub fn reassemble(&self) -> Vec<String> {
        let k = self.reference.len();
        let mut out = Vec::new();
        out.extend(self.deltas[0].iter().cloned());
        for i in 1..=k {
            if self.present[i] {
                out.push(self.reference[i - 1].clone());
            }
            out.extend(self.deltas[i].iter().cloned());
        }
        out
    }
}

/// Align a walk's activity sequence against a reference pathway.
///
/// A reference activity γ_i is matched only at its first occurrence and
/// only while no downstream γ_j (j > i) has been matched; every other
/// walk activity is discordant and lands in the Δ of the most recent
/// match.
pub fn align(walk: &[String], reference: &[String]) -> Alignment {
    let k = reference.len();
    let mut present = vec![false; k + 2];
    present[0] = true;
    present[k + 1] = true;
    let mut deltas: Vec<Vec<String>> = vec![Vec::new(); k + 2];
    let mut matched_max = 0usize; // γ index, 0 = START
    for w in walk {
        let next = (matched_max + 1..=k).find(|&i| reference[i - 1] == *w);
        match next {
            Some(i) => {
                present[i] = true;
                matched_max = i;
            }
            None => deltas[matched_max].push(w.clone()),
        }
    }
    Alignment {
        reference: reference.to_vec(),
        present,
        deltas,
    }
}

/// One deviation from the reference: leaves concordance after γ_i and
/// rejoins at γ_{i+l}, with `extras` in between and `skipped` missing.
#[derive(Clone, Debug, serde::Serialize)]
pub struct Detour<R> {
    /// γ index of the concordant activity the detour leaves from
    /// (0 = START).
    pub from_concordant: usize,
    /// γ index where it rejoins (K+1 = END).
    pub to_concordant: usize,
    pub extras: Vec<String>,
    pub skipped: Vec<String>,
    /// Normalized cost C(θ).
    pub cost: R,
    /// Unnormalized cycle cost (extra arcs minus missing arcs).
    pub numerator: R,
    /// Per-activity split of the extra side (activity id, arc-cost sum).
    pub extra_shares: Vec<(String, R)>,
    /// The subtracted missing-concordant side (for missing-only detours,
    /// including the bridging arc).
    pub missing_numerator: R,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct DetourDecomposition<R> {
    /// The reference pathway the walk was aligned against.
    pub reference: Vec<String>,
    pub detours: Vec<Detour<R>>,
    pub total_discordance: R,
    /// `1 − Σ C(θ)`; equals ω within 1e-8.
    pub omega_check: R,
    pub omega: R,
    /// Cost of the aligned reference pathway under c*.
    pub reference_cost: R,
    /// `M(x̂) − c*'x*`.
    pub denominator: R,
    /// Index of the aligned reference pathway.
    pub reference_index: Option<usize>,
}

/// Node id of "the exit side of γ_i": activity end node, or START/END.
fn gamma_exit(net: &ClinicalNetwork, reference: &[String], i: usize) -> usize {
    if i == 0 {
        net.start_index
    } else {
        let act = net
            .activity_index(&reference[i - 1])
            .expect("validated reference");
        net.end_node(act)
    }
}

fn gamma_entry(net: &ClinicalNetwork, reference: &[String], i: usize) -> usize {
    if i == reference.len() + 1 {
        net.end_index
    } else {
        let act = net
            .activity_index(&reference[i - 1])
            .expect("validated reference");
        net.start_node(act)
    }
}

fn arc_cost<R: Real>(
    net: &ClinicalNetwork,
    cost: &[R],
    tail: usize,
    head: usize,
) -> Result<R, DetourError> {
    net.arc_index(tail, head)
        .map(|j| cost[j])
        .ok_or_else(|| DetourError::MissingArcForDetour {
            tail: net.node_name(tail),
            head: net.node_name(head),
        })
}

/// Decompose a walk's discordance into detours against one reference
/// pathway. `table` must cover the walk's length.
pub fn decompose<R: Real>(
    net: &ClinicalNetwork,
    walk: &[String],
    reference: &[String],
    cost: &[R],
    table: &LongestWalkTable<R>,
) -> Result<DetourDecomposition<R>, DetourError> {
    let walk_flow = sequence_to_flow(net, walk)?;
    let ref_flow = sequence_to_flow(net, reference)?;
    let reference_cost = flow_cost(cost, &ref_flow);
    // ω with the reference as the optimality baseline. When the reference
    // is a shortest path this equals the cohort ω; otherwise we keep the
    // unclamped value so the detour identity stays exact.
    let score = omega(&walk_flow, cost, reference_cost, table)?;
    let m = score.longest_cost;
    let denom = m - reference_cost;
    let omega_raw = if denom <= R::real(1e-12) {
        R::one()
    } else {
        R::one() - score.epsilon / denom
    };

    let alignment = align(walk, reference);
    debug_assert_eq!(alignment.reassemble(), walk);
    let k = reference.len();
    let present: Vec<usize> = (0..=k + 1).filter(|&i| alignment.present[i]).collect();

    let mut detours: Vec<Detour<R>> = Vec::new();
    for w in present.windows(2) {
        let (a, b) = (w[0], w[1]);
        let extras = &alignment.deltas[a];
        let skipped: Vec<String> = reference[a..b - 1].to_vec();
        if extras.is_empty() && skipped.is_empty() {
            continue; // concordant transition
        }

        // Extra side: γ_a^e → δ_1 → … → δ_k → γ_b^s, or the bridging
        // arc γ_a^e → γ_b^s when there are no extras.
        let mut extra_shares: Vec<(String, R)> = Vec::new();
        let mut extra_sum = R::zero();
        if extras.is_empty() {
            let c = arc_cost(net, cost, gamma_exit(net, reference, a), gamma_entry(net, reference, b))?;
            extra_sum = c;
        } else {
            let mut tail = gamma_exit(net, reference, a);
            for d in extras {
                let act = net
                    .activity_index(d)
                    .ok_or_else(|| NetworkError::UnknownActivity(d.clone()))?;
                // The entry arc and intra arc both belong to δ.
                let entry = arc_cost(net, cost, tail, net.start_node(act))?;
                let intra = cost[net.intra_arc(act)];
                extra_shares.push((d.clone(), entry + intra));
                extra_sum += entry + intra;
                tail = net.end_node(act);
            }
            // Exit arc belongs to the last discordant activity.
            let exit = arc_cost(net, cost, tail, gamma_entry(net, reference, b))?;
            let last = extra_shares.last_mut().expect("extras nonempty");
            last.1 += exit;
            extra_sum += exit;
        }

        // Missing side: γ_a^e → γ_{a+1} → … → γ_{b-1} → γ_b^s, or the
        // single concordant arc γ_a^e → γ_{a+1}^s when nothing is
        // skipped.
        let mut missing_sum;
        if skipped.is_empty() {
            missing_sum =
                arc_cost(net, cost, gamma_exit(net, reference, a), gamma_entry(net, reference, b))?;
        } else {
            missing_sum = R::zero();
            let mut tail = gamma_exit(net, reference, a);
            for g in &skipped {
                let act = net
                    .activity_index(g)
                    .ok_or_else(|| NetworkError::UnknownActivity(g.clone()))?;
                missing_sum += arc_cost(net, cost, tail, net.start_node(act))?;
                missing_sum += cost[net.intra_arc(act)];
                tail = net.end_node(act);
            }
            missing_sum += arc_cost(net, cost, tail, gamma_entry(net, reference, b))?;
        }

        let numerator = extra_sum - missing_sum;
        let cost_theta = if denom <= R::real(1e-12) {
            R::zero()
        } else {
            numerator / denom
        };
        // Genuine undercuts are reported as-is; negatives at solver-noise
        // scale are not worth a warning.
        if cost_theta < -R::real(1e-8) {
            eprintln!(
                "warning: negative detour cost {cost_theta} between γ_{a} and γ_{b} \
                 (walk undercuts the reference)"
            );
        }
        detours.push(Detour {
            from_concordant: a,
            to_concordant: b,
            extras: extras.clone(),
            skipped,
            cost: cost_theta,
            numerator,
            extra_shares,
            missing_numerator: missing_sum,
        });
    }

    let total: R = detours.iter().map(|d| d.cost).fold(R::zero(), |s, v| s + v);
    let omega_check = R::one() - total;
    let residual = (omega_check - omega_raw).abs();
    if residual > R::real(1e-8) {
        return Err(DetourError::IdentityViolation {
            residual: residual.to_f64_lossy(),
        });
    }
    Ok(DetourDecomposition {
        reference: reference.to_vec(),
        detours,
        total_discordance: total,
        omega_check,
        omega: omega_raw,
        reference_cost,
        denominator: denom,
        reference_index: None,
    })
}

/// Decompose against every reference pathway of the network and keep the
/// one with the smallest total detour cost (ties by declaration order).
pub fn decompose_best<R: Real>(
    net: &ClinicalNetwork,
    walk: &[String],
    cost: &[R],
    table: &LongestWalkTable<R>,
) -> Result<DetourDecomposition<R>, DetourError> {
    let refs = net.reference_pathways().to_vec();
    let mut candidates: Vec<DetourDecomposition<R>> = Vec::new();
    let mut first_err: Option<DetourError> = None;
    for (q, reference) in refs.iter().enumerate() {
        match decompose(net, walk, reference, cost, table) {
            Ok(mut dec) => {
                dec.reference_index = Some(q);
                candidates.push(dec);
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(first_err.expect("at least one reference pathway"));
    }
    // Smallest total detour cost wins; totals within solver noise of the
    // minimum count as ties, broken by fewer detours, then declaration
    // order.
    let min_total = candidates
        .iter()
        .map(|d| d.total_discordance)
        .fold(R::infinity(), R::min);
    let best = candidates
        .into_iter()
        .filter(|d| d.total_discordance <= min_total + R::real(1e-7))
        .min_by_key(|d| (d.detours.len(), d.reference_index))
        .expect("nonempty candidates");
    Ok(best)
}

/// Count (missing concordant arcs, extra discordant arcs) between a walk
/// and a reference at the activity-transition level: both sequences are
/// bracketed by START/END and their transition multisets are differenced.
pub fn arc_discrepancy(walk: &[String], reference: &[String]) -> (usize, usize) {
    fn transitions(seq: &[String]) -> BTreeMap<(String, String), usize> {
        let mut full = vec!["START".to_string()];
        full.extend(seq.iter().cloned());
        full.push("END".to_string());
        let mut out = BTreeMap::new();
        for w in full.windows(2) {
            *out.entry((w[0].clone(), w[1].clone())).or_insert(0) += 1;
        }
        out
    }
    let w = transitions(walk);
    let r = transitions(reference);
    let missing = r
        .iter()
        .map(|(k, &n)| n.saturating_sub(w.get(k).copied().unwrap_or(0)))
        .sum();
    let extra = w
        .iter()
        .map(|(k, &n)| n.saturating_sub(r.get(k).copied().unwrap_or(0)))
        .sum();
    (missing, extra)
}

/// Discordance category of an extra (discordant) activity.
pub type CategoryMap = BTreeMap<String, String>;

pub const MISSING_CATEGORY: &str = "missing activities";
pub const OTHER_CATEGORY: &str = "other";

/// Category map for the colon instance's activity ids; anything
/// unrecognized goes to "other".
pub fn default_category_map(net: &ClinicalNetwork) -> CategoryMap {
    net.activities
        .iter()
        .map(|a| {
            let cat = match a.id.as_str() {
                "ED_VISIT" => "ED visit",
                "EXTRA_CONSULT" => "extra consultation",
                "ENDOSCOPY" => "extra endoscopy",
                "ABDOMEN_CT" | "PELVIS_CT" | "ABDOMEN_MRI_US" | "PELVIS_MRI_US" => {
                    "extra abdomen/pelvis imaging"
                }
                "CHEST_IMAGING" => "extra chest imaging",
                _ => OTHER_CATEGORY,
            };
            (a.id.clone(), cat.to_string())
        })
        .collect()
}

/// Discordance shares keyed by (origin node, category); shares sum to
/// the total discordance.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ActivityAttribution<R> {
    pub shares: BTreeMap<(String, String), R>,
    pub total: R,
}

/// Split every detour's cost across its constituent activities. The
/// origin node is the concordant activity the detour leaves from
/// ("START" for Δ₀ detours); the subtracted missing-concordant side goes
/// to the "missing activities" category, as does the bridging arc of a
/// missing-only detour.
pub fn attribute<R: Real>(
    dec: &DetourDecomposition<R>,
    categories: &CategoryMap,
) -> ActivityAttribution<R> {
    let mut shares: BTreeMap<(String, String), R> = BTreeMap::new();
    for d in &dec.detours {
        // from_concordant indexes γ (1-based into the reference; 0 = START).
        let origin = if d.from_concordant == 0 {
            "START".to_string()
        } else {
            dec.reference[d.from_concordant - 1].clone()
        };
        let denom_share = |num: R| {
            if dec.denominator <= R::real(1e-12) {
                R::zero()
            } else {
                num / dec.denominator
            }
        };
        for (act, num) in &d.extra_shares {
            let cat = categories
                .get(act)
                .cloned()
                .unwrap_or_else(|| OTHER_CATEGORY.to_string());
            *shares
                .entry((origin.clone(), cat))
                .or_insert_with(R::zero) += denom_share(*num);
        }
        // Missing side: subtracted chain, plus the bridging arc when the
        // detour had no extras (extra_shares empty ⇒ the whole extra sum
        // was the bridge).
        let bridge = if d.extra_shares.is_empty() {
            d.numerator + d.missing_numerator // = extra_sum (the bridge)
        } else {
            R::zero()
        };
        let missing_net = bridge - d.missing_numerator;
        *shares
            .entry((origin.clone(), MISSING_CATEGORY.to_string()))
            .or_insert_with(R::zero) += denom_share(missing_net);
    }
    let total = shares.values().fold(R::zero(), |s, v| s + *v);
    ActivityAttribution { shares, total }
}
