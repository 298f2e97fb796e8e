//! Two-stage inverse shortest-path optimization.
//!
//! Stage 1 learns an arc-cost vector `c` (a circulation with `‖c‖∞ = 1`)
//! and flow-balance duals `p` minimizing the sum of squared duality gaps
//! of the reference pathways. Stage 2 re-optimizes over the stage-1
//! optimal set to separate survived from died patient pathways: it
//! minimizes `(D/S)·Σ ε^s − Σ ε^d` while pinning the stage-1 reference
//! gaps.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat;
use crate::network::{
    incidence, sequence_to_flow, ClinicalNetwork, FlowVector, IncidenceSystem, NetworkError,
};
use crate::scalar::Real;
use crate::solver::{
    solve_lp, solve_qp, Constraints, LinearProgram, QuadTerm, QuadraticProgram, SolveReport,
    Status,
};

/// Absolute slack used when pinning stage-1 reference gaps in stage 2.
pub const GAP_PIN_SLACK: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostVector<R> {
    pub values: Vec<R>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualVector<R> {
    pub values: Vec<R>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapVector<R> {
    pub values: Vec<R>,
}

/// A `tail -> head` arc named by node references (`"ACTIVITY.start"`,
/// `"ACTIVITY.end"`, `"START"`, `"END"`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcRef {
    pub tail: String,
    pub head: String,
}

/// Preferred subpath must cost no more than the other.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubpathRanking {
    pub preferred: Vec<ArcRef>,
    pub other: Vec<ArcRef>,
}

/// Fix one arc cost at `-1` or `+1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub tail: String,
    pub head: String,
    pub value: f64,
}

/// The application constraint set `𝒞` over arc costs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// `[preferred_id, other_id]`: the preferred activity's intra-arc
    /// cost is no larger than the other's.
    #[serde(default)]
    pub activity_rankings: Vec<(String, String)>,
    #[serde(default)]
    pub subpath_rankings: Vec<SubpathRanking>,
    #[serde(default)]
    pub anchors: Vec<Anchor>,
}

impl ConstraintSet {
    pub fn from_json(s: &str) -> Result<Self, InverseError> {
        serde_json::from_str(s).map_err(|e| InverseError::BadConstraintFile(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum InverseError {
    #[error("constraint file is not valid JSON: {0}")]
    BadConstraintFile(String),
    #[error("constraint references arc {tail:?} -> {head:?} which is not in the network")]
    UnknownArcInConstraint { tail: String, head: String },
    #[error("anchor value must be -1 or +1, got {0}")]
    BadAnchorValue(f64),
    #[error("anchored mode requires exactly one anchor, found {0}")]
    AnchorCount(usize),
    #[error("constraint set is infeasible together with the circulation and normalization rows")]
    InfeasibleConstraints,
    #[error("stage-2 gap pinning is infeasible at slack {GAP_PIN_SLACK}")]
    InfeasibleStage2,
    #[error("instance needs at least one reference pathway")]
    NoReferencePathways,
    #[error("flow {0:?} does not satisfy the unit-flow balance A x = b")]
    UnbalancedFlow(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Everything needed to pose both stages.
#[derive(Clone, Debug)]
pub struct InverseInstance<R> {
    pub network: ClinicalNetwork,
    pub incidence: IncidenceSystem,
    pub references: Vec<FlowVector>,
    pub survived: Vec<FlowVector>,
    pub died: Vec<FlowVector>,
    pub constraints: ConstraintSet,
    /// Solver residual tolerance (infinity norm).
    pub tol: R,
}

impl<R: Real> InverseInstance<R> {
    /// Build an instance from a compiled network (reference flows come
    /// from its declared reference pathways) and patient walks.
    pub fn new(
        network: ClinicalNetwork,
        constraints: ConstraintSet,
        survived: Vec<FlowVector>,
        died: Vec<FlowVector>,
        tol: R,
    ) -> Result<Self, InverseError> {
        let references: Vec<FlowVector> = network
            .reference_pathways()
            .to_vec()
            .iter()
            .map(|p| sequence_to_flow(&network, p))
            .collect::<Result<_, _>>()?;
        if references.is_empty() {
            return Err(InverseError::NoReferencePathways);
        }
        let inc = incidence(&network);
        for flow in references.iter().chain(&survived).chain(&died) {
            if inc.residual(&flow.counts).iter().any(|r| *r != 0) {
                return Err(InverseError::UnbalancedFlow(
                    flow.source_id.clone().unwrap_or_default(),
                ));
            }
        }
        Ok(InverseInstance {
            network,
            incidence: inc,
            references,
            survived,
            died,
            constraints,
            tol,
        })
    }
}

/// Linear rows over `c` produced from a [`ConstraintSet`].
#[derive(Clone, Debug, Default)]
pub struct ConstraintRows<R> {
    /// `row · c <= 0`.
    pub ineq: Vec<Vec<R>>,
    /// Anchor equalities `(arc index, value)`.
    pub anchors: Vec<(usize, R)>,
}

pub fn build_constraint_rows<R: Real>(
    cset: &ConstraintSet,
    net: &ClinicalNetwork,
) -> Result<ConstraintRows<R>, InverseError> {
    let n = net.arc_count();
    let arc_of = |tail: &str, head: &str| -> Result<usize, InverseError> {
        let t = net
            .resolve_node(tail)
            .map_err(|_| InverseError::UnknownArcInConstraint {
                tail: tail.to_string(),
                head: head.to_string(),
            })?;
        let h = net
            .resolve_node(head)
            .map_err(|_| InverseError::UnknownArcInConstraint {
                tail: tail.to_string(),
                head: head.to_string(),
            })?;
        net.arc_index(t, h)
            .ok_or_else(|| InverseError::UnknownArcInConstraint {
                tail: tail.to_string(),
                head: head.to_string(),
            })
    };

    let mut rows = ConstraintRows::default();
    for (pref, other) in &cset.activity_rankings {
        let i = net
            .activity_index(pref)
            .ok_or_else(|| NetworkError::UnknownActivity(pref.clone()))?;
        let j = net
            .activity_index(other)
            .ok_or_else(|| NetworkError::UnknownActivity(other.clone()))?;
        let mut row = vec![R::zero(); n];
        row[net.intra_arc(i)] += R::one();
        row[net.intra_arc(j)] -= R::one();
        rows.ineq.push(row);
    }
    for ranking in &cset.subpath_rankings {
        let mut row = vec![R::zero(); n];
        for arc in &ranking.preferred {
            row[arc_of(&arc.tail, &arc.head)?] += R::one();
        }
        for arc in &ranking.other {
            row[arc_of(&arc.tail, &arc.head)?] -= R::one();
        }
        rows.ineq.push(row);
    }
    for anchor in &cset.anchors {
        if anchor.value != 1.0 && anchor.value != -1.0 {
            return Err(InverseError::BadAnchorValue(anchor.value));
        }
        rows.anchors
            .push((arc_of(&anchor.tail, &anchor.head)?, R::real(anchor.value)));
    }
    Ok(rows)
}

/// `ε_q = c'x̂_q − b'p` for each flow.
pub fn gaps_for<R: Real>(
    c: &CostVector<R>,
    p: &DualVector<R>,
    inc: &IncidenceSystem,
    flows: &[FlowVector],
) -> GapVector<R> {
    let bp = b_dot_p(inc, &p.values);
    GapVector {
        values: flows
            .iter()
            .map(|x| flow_cost(&c.values, x) - bp)
            .collect(),
    }
}

pub fn flow_cost<R: Real>(c: &[R], x: &FlowVector) -> R {
    c.iter()
        .zip(&x.counts)
        .map(|(cj, xj)| *cj * R::real(f64::from(*xj)))
        .fold(R::zero(), |a, v| a + v)
}

fn b_dot_p<R: Real>(inc: &IncidenceSystem, p: &[R]) -> R {
    inc.b
        .iter()
        .zip(p)
        .filter(|(bi, _)| **bi != 0)
        .map(|(bi, pi)| R::real(*bi as f64) * *pi)
        .fold(R::zero(), |a, v| a + v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage1Mode {
    Anchored,
    FullDecomposition,
}

impl Stage1Mode {
    /// Anchored when `𝒞` supplies an anchor, full decomposition otherwise.
    pub fn for_constraints(cset: &ConstraintSet) -> Self {
        if cset.anchors.is_empty() {
            Stage1Mode::FullDecomposition
        } else {
            Stage1Mode::Anchored
        }
    }
}

/// One decomposition subproblem's outcome.
#[derive(Clone, Debug, Serialize)]
pub struct SubproblemSummary<R> {
    pub arc: usize,
    pub sign: R,
    pub status: Status,
    pub objective: Option<R>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageSolution<R> {
    pub cost: CostVector<R>,
    pub dual: DualVector<R>,
    pub reference_gaps: GapVector<R>,
    pub survived_gaps: Option<GapVector<R>>,
    pub died_gaps: Option<GapVector<R>>,
    pub objective: R,
    /// Anchor (fixed component) used by the winning subproblem.
    pub anchor: Option<(usize, R)>,
    pub subproblems: Vec<SubproblemSummary<R>>,
    pub report: SolveReport<R>,
}

/// Variable layout shared by both stages: `[c (n), p (m-1), extras]`.
struct Layout {
    n: usize,
    m1: usize,
}

impl Layout {
    fn c(&self, j: usize) -> usize {
        j
    }
    fn p(&self, i: usize) -> usize {
        self.n + i
    }
    fn width(&self) -> usize {
        self.n + self.m1
    }
}

/// Shared Eq.-1 feasibility rows: `A'p − c ≤ 0`, `A c = 0`, the 𝒞
/// inequality rows, anchors, and the `[-1, 1]` box on `c`. `extra`
/// widens the variable vector (stage 1 appends the ε block).
fn base_constraints<R: Real>(
    inst: &InverseInstance<R>,
    rows: &ConstraintRows<R>,
    extra_anchor: Option<(usize, R)>,
    extra: usize,
) -> (Layout, Constraints<R>) {
    let inc = &inst.incidence;
    let n = inc.ncols();
    let m1 = inc.nrows();
    let lay = Layout { n, m1 };
    let width = lay.width() + extra;

    // Dual feasibility: for each arc j, (A'p)_j − c_j ≤ 0.
    let mut g_rows: Vec<Vec<R>> = Vec::new();
    for j in 0..n {
        let mut row = vec![R::zero(); width];
        row[lay.c(j)] = -R::one();
        for i in 0..m1 {
            let aij = inc.a[i][j];
            if aij != 0 {
                row[lay.p(i)] = R::real(aij as f64);
            }
        }
        g_rows.push(row);
    }
    for crow in &rows.ineq {
        let mut row = vec![R::zero(); width];
        row[..n].copy_from_slice(crow);
        g_rows.push(row);
    }

    // Circulation: A c = 0, plus anchor equalities.
    let mut a_rows: Vec<Vec<R>> = Vec::new();
    let mut b_rhs: Vec<R> = Vec::new();
    for i in 0..m1 {
        let mut row = vec![R::zero(); width];
        for j in 0..n {
            let aij = inc.a[i][j];
            if aij != 0 {
                row[lay.c(j)] = R::real(aij as f64);
            }
        }
        a_rows.push(row);
        b_rhs.push(R::zero());
    }
    for &(arc, value) in rows.anchors.iter().chain(extra_anchor.iter()) {
        let mut row = vec![R::zero(); width];
        row[lay.c(arc)] = R::one();
        a_rows.push(row);
        b_rhs.push(value);
    }

    let mut bounds = vec![(-R::one(), R::one()); n];
    bounds.extend(vec![(R::neg_infinity(), R::infinity()); m1 + extra]);

    let h = vec![R::zero(); g_rows.len()];
    (
        lay,
        Constraints {
            eq: Some((Mat::from_rows(a_rows), b_rhs)),
            ineq: Some((Mat::from_rows(g_rows), h)),
            bounds,
        },
    )
}

/// Append the reference gap-definition equalities
/// `c'x̂^r_q − b'p − ε_q = 0` (stage 1, ε as variables).
fn push_gap_rows<R: Real>(
    inst: &InverseInstance<R>,
    lay: &Layout,
    constraints: &mut Constraints<R>,
    eps_base: usize,
) {
    let inc = &inst.incidence;
    let (a, b) = constraints.eq.as_mut().expect("eq rows present");
    let mut rows: Vec<Vec<R>> = Vec::new();
    let width = a.ncols();
    for (q, x) in inst.references.iter().enumerate() {
        let mut row = vec![R::zero(); width];
        for (j, &cnt) in x.counts.iter().enumerate() {
            if cnt != 0 {
                row[lay.c(j)] = R::real(f64::from(cnt));
            }
        }
        for (i, &bi) in inc.b.iter().enumerate() {
            if bi != 0 {
                row[lay.p(i)] = -R::real(bi as f64);
            }
        }
        row[eps_base + q] = -R::one();
        rows.push(row);
    }
    let mut all = Vec::with_capacity(a.nrows() + rows.len());
    for i in 0..a.nrows() {
        all.push(a.row(i).to_vec());
    }
    all.extend(rows);
    b.extend(vec![R::zero(); inst.references.len()]);
    *a = Mat::from_rows(all);
}

fn solve_one_stage1<R: Real>(
    inst: &InverseInstance<R>,
    rows: &ConstraintRows<R>,
    extra_anchor: Option<(usize, R)>,
) -> Result<SolveReport<R>, InverseError> {
    let n_ref = inst.references.len();
    let (lay, mut constraints) = base_constraints(inst, rows, extra_anchor, n_ref);
    let eps_base = lay.width();
    push_gap_rows(inst, &lay, &mut constraints, eps_base);
    let width = eps_base + n_ref;
    let mut diag = vec![R::zero(); width];
    for d in diag.iter_mut().skip(eps_base) {
        *d = R::real(2.0); // 0.5 x'Px = Σ ε²
    }
    let qp = QuadraticProgram {
        quadratic: QuadTerm::Diag(diag),
        linear: vec![R::zero(); width],
        constraints,
    };
    solve_qp(&qp, inst.tol).map_err(|e| InverseError::SolverFailure(e.to_string()))
}

fn extract_solution<R: Real>(
    inst: &InverseInstance<R>,
    report: SolveReport<R>,
    anchor: Option<(usize, R)>,
    subproblems: Vec<SubproblemSummary<R>>,
    objective: R,
) -> StageSolution<R> {
    let n = inst.incidence.ncols();
    let m1 = inst.incidence.nrows();
    let cost = CostVector {
        values: report.x[..n].to_vec(),
    };
    let dual = DualVector {
        values: report.x[n..n + m1].to_vec(),
    };
    let reference_gaps = gaps_for(&cost, &dual, &inst.incidence, &inst.references);
    let survived_gaps = (!inst.survived.is_empty())
        .then(|| gaps_for(&cost, &dual, &inst.incidence, &inst.survived));
    let died_gaps =
        (!inst.died.is_empty()).then(|| gaps_for(&cost, &dual, &inst.incidence, &inst.died));
    StageSolution {
        cost,
        dual,
        reference_gaps,
        survived_gaps,
        died_gaps,
        objective,
        anchor,
        subproblems,
        report,
    }
}

pub fn solve_stage1<R: Real>(
    inst: &InverseInstance<R>,
    mode: Stage1Mode,
) -> Result<StageSolution<R>, InverseError> {
    if inst.references.is_empty() {
        return Err(InverseError::NoReferencePathways);
    }
    let rows = build_constraint_rows(&inst.constraints, &inst.network)?;
    match mode {
        Stage1Mode::Anchored => {
            if rows.anchors.len() != 1 {
                return Err(InverseError::AnchorCount(rows.anchors.len()));
            }
            let report = solve_one_stage1(inst, &rows, None)?;
            match report.status {
                Status::Optimal => {
                    let objective = report.objective;
                    let anchor = Some(rows.anchors[0]);
                    Ok(extract_solution(inst, report, anchor, vec![], objective))
                }
                Status::Infeasible => Err(InverseError::InfeasibleConstraints),
                other => Err(InverseError::SolverFailure(format!(
                    "stage-1 QP ended with status {other:?}"
                ))),
            }
        }
        Stage1Mode::FullDecomposition => {
            let n = inst.incidence.ncols();
            let mut summaries = Vec::with_capacity(2 * n);
            let mut best: Option<(R, usize, R, SolveReport<R>)> = None;
            for arc in 0..n {
                for sign in [R::one(), -R::one()] {
                    let report = solve_one_stage1(inst, &rows, Some((arc, sign)))?;
                    let objective =
                        (report.status == Status::Optimal).then_some(report.objective);
                    summaries.push(SubproblemSummary {
                        arc,
                        sign,
                        status: report.status,
                        objective,
                    });
                    if let Some(obj) = objective {
                        // Ties: lower objective, then lower arc index,
                        // then +1 before -1 — the iteration order.
                        let better = best
                            .as_ref()
                            .map_or(true, |(b, _, _, _)| obj < *b - R::real(0.0));
                        if better {
                            best = Some((obj, arc, sign, report));
                        }
                    }
                }
            }
            match best {
                Some((obj, arc, sign, report)) => Ok(extract_solution(
                    inst,
                    report,
                    Some((arc, sign)),
                    summaries,
                    obj,
                )),
                None => Err(InverseError::InfeasibleConstraints),
            }
        }
    }
}

pub fn solve_stage2<R: Real>(
    inst: &InverseInstance<R>,
    stage1: &StageSolution<R>,
) -> Result<StageSolution<R>, InverseError> {
    let s = inst.survived.len();
    let d = inst.died.len();
    if s == 0 && d == 0 {
        return Ok(stage1.clone());
    }
    if s == 0 || d == 0 {
        eprintln!(
            "warning: stage 2 with S={s}, D={d} degenerates to a single-sum objective"
        );
    }
    let rows = build_constraint_rows(&inst.constraints, &inst.network)?;
    let anchor = if rows.anchors.is_empty() {
        stage1.anchor
    } else {
        None // already in `rows`
    };
    let (lay, mut constraints) = base_constraints(inst, &rows, anchor, 0);
    let width = lay.width();

    // Pin stage-1 reference gaps: |c'x̂^r_q − b'p − ε*_q| ≤ slack.
    let slack = R::real(GAP_PIN_SLACK);
    {
        let inc = &inst.incidence;
        let (g, h) = constraints.ineq.as_mut().expect("ineq rows present");
        let mut all: Vec<Vec<R>> = (0..g.nrows()).map(|i| g.row(i).to_vec()).collect();
        for (q, x) in inst.references.iter().enumerate() {
            let mut row = vec![R::zero(); width];
            for (j, &cnt) in x.counts.iter().enumerate() {
                if cnt != 0 {
                    row[lay.c(j)] = R::real(f64::from(cnt));
                }
            }
            for (i, &bi) in inc.b.iter().enumerate() {
                if bi != 0 {
                    row[lay.p(i)] = -R::real(bi as f64);
                }
            }
            let eps = stage1.reference_gaps.values[q];
            let neg: Vec<R> = row.iter().map(|v| -*v).collect();
            all.push(row);
            h.push(eps + slack);
            all.push(neg);
            h.push(-eps + slack);
        }
        *g = Mat::from_rows(all);
    }

    // Objective with the ε variables eliminated exactly:
    //   (D/S)·Σ_q ε^s_q − Σ_q ε^d_q
    //     = (D/S)·Σ c'x̂^s − Σ c'x̂^d       (the b'p terms cancel)
    // unless one side is empty, in which case the b'p term survives.
    let mut linear = vec![R::zero(); width];
    let weight = if s > 0 && d > 0 {
        let w = Ratio::new(d as i64, s as i64);
        R::real(*w.numer() as f64) / R::real(*w.denom() as f64)
    } else {
        R::one()
    };
    for x in &inst.survived {
        for (j, &cnt) in x.counts.iter().enumerate() {
            if cnt != 0 {
                linear[lay.c(j)] += weight * R::real(f64::from(cnt));
            }
        }
    }
    for x in &inst.died {
        for (j, &cnt) in x.counts.iter().enumerate() {
            if cnt != 0 {
                linear[lay.c(j)] -= R::real(f64::from(cnt));
            }
        }
    }
    if s == 0 || d == 0 {
        // b'p coefficient: −(weight·S − D); only one of S, D is nonzero.
        let coeff = R::real(d as f64) - weight * R::real(s as f64);
        for (i, &bi) in inst.incidence.b.iter().enumerate() {
            if bi != 0 {
                linear[lay.p(i)] += coeff * R::real(bi as f64);
            }
        }
    }

    let lp = LinearProgram {
        objective: linear,
        constraints,
    };
    let report = solve_lp(&lp, inst.tol).map_err(|e| InverseError::SolverFailure(e.to_string()))?;
    match report.status {
        Status::Optimal => {
            let objective = report.objective;
            let anchor = stage1.anchor.or_else(|| rows.anchors.first().copied());
            Ok(extract_solution(inst, report, anchor, vec![], objective))
        }
        Status::Infeasible => Err(InverseError::InfeasibleStage2),
        other => Err(InverseError::SolverFailure(format!(
            "stage-2 LP ended with status {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{abc_network, colon_constraints, colon_network};
    use crate::linalg::inf_norm;
    use crate::solver::detect_negative_cycle;

    fn check_stage_invariants(inst: &InverseInstance<f64>, sol: &StageSolution<f64>) {
        let inc = &inst.incidence;
        let c = &sol.cost.values;
        let p = &sol.dual.values;
        // Circulation A c = 0.
        for row in &inc.a {
            let v: f64 = row.iter().zip(c).map(|(a, cj)| *a as f64 * cj).sum();
            assert!(v.abs() <= 1e-7, "A c residual {v}");
        }
        // Normalization.
        let norm = inf_norm(c);
        assert!(norm <= 1.0 + 1e-7 && norm >= 1.0 - 1e-7, "norm {norm}");
        // Dual feasibility A'p <= c.
        for (j, cj) in c.iter().enumerate() {
            let atp: f64 = inc
                .a
                .iter()
                .zip(p)
                .map(|(row, pi)| row[j] as f64 * pi)
                .sum();
            assert!(atp - cj <= 1e-7, "arc {j}: A'p - c = {}", atp - cj);
        }
        // Nonnegative gaps.
        for g in &sol.reference_gaps.values {
            assert!(*g >= -1e-9, "gap {g}");
        }
        assert!(detect_negative_cycle(&inst.network, c).is_none());
    }

    fn colon_instance() -> InverseInstance<f64> {
        InverseInstance::new(
            colon_network(),
            colon_constraints(),
            vec![],
            vec![],
            1e-8,
        )
        .unwrap()
    }

    #[test]
    fn zero_gap_single_reference_full_decomposition() {
        let net = abc_network();
        let inst =
            InverseInstance::new(net, ConstraintSet::default(), vec![], vec![], 1e-8).unwrap();
        let sol = solve_stage1(&inst, Stage1Mode::FullDecomposition).unwrap();
        assert!(sol.objective <= 1e-10, "objective {}", sol.objective);
        check_stage_invariants(&inst, &sol);
    }

    #[test]
    fn anchored_colon_stage1_invariants() {
        let inst = colon_instance();
        let sol = solve_stage1(&inst, Stage1Mode::Anchored).unwrap();
        check_stage_invariants(&inst, &sol);
        // The anchor holds exactly at tolerance.
        let (arc, v) = sol.anchor.unwrap();
        assert!((sol.cost.values[arc] - v).abs() <= 1e-7);
        // Recomputed gaps match the solution's.
        let again = gaps_for(&sol.cost, &sol.dual, &inst.incidence, &inst.references);
        for (a, b) in again.values.iter().zip(&sol.reference_gaps.values) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn stage2_identical_cohorts_objective_zero() {
        let net = colon_network();
        let walk = |ids: &[&str]| {
            sequence_to_flow(&net, &ids.iter().map(|s| s.to_string()).collect::<Vec<_>>())
                .unwrap()
        };
        let w1 = walk(&[
            "ENDOSCOPY",
            "ABDOMEN_CT",
            "PELVIS_CT",
            "CHEST_IMAGING",
            "RESECTION",
            "CHEMO_PARTIAL",
        ]);
        let w2 = walk(&[
            "ENDOSCOPY",
            "ED_VISIT",
            "ABDOMEN_MRI_US",
            "CHEST_IMAGING",
            "RESECTION",
            "RESECTION_END",
        ]);
        let inst: InverseInstance<f64> = InverseInstance::new(
            net,
            colon_constraints(),
            vec![w1.clone(), w2.clone()],
            vec![w1, w2],
            1e-8,
        )
        .unwrap();
        let s1 = solve_stage1(&inst, Stage1Mode::Anchored).unwrap();
        let s2 = solve_stage2(&inst, &s1).unwrap();
        assert!(s2.objective.abs() <= 1e-6, "objective {}", s2.objective);
        check_stage_invariants(&inst, &s2);
        // Stage-2 reproduces stage-1 reference gaps.
        for (a, b) in s2
            .reference_gaps
            .values
            .iter()
            .zip(&s1.reference_gaps.values)
        {
            assert!((a - b).abs() <= 1e-6, "gap drift {a} vs {b}");
        }
    }

    #[test]
    fn full_decomposition_no_worse_than_anchored() {
        let net = abc_network();
        let cset = ConstraintSet {
            anchors: vec![Anchor {
                tail: "C.end".into(),
                head: "END".into(),
                value: -1.0,
            }],
            ..ConstraintSet::default()
        };
        let inst =
            InverseInstance::new(net.clone(), cset.clone(), vec![], vec![], 1e-8).unwrap();
        let anchored = solve_stage1(&inst, Stage1Mode::Anchored).unwrap();
        let free = InverseInstance::new(
            net,
            ConstraintSet::default(),
            vec![],
            vec![],
            1e-8,
        )
        .unwrap();
        let full = solve_stage1(&free, Stage1Mode::FullDecomposition).unwrap();
        assert!(full.objective <= anchored.objective + 1e-8);
    }

    #[test]
    fn constraint_rows_shapes() {
        let net = colon_network();
        let rows = build_constraint_rows::<f64>(&colon_constraints(), &net).unwrap();
        // Activity ranking rows touch exactly two intra arcs.
        for row in rows.ineq.iter().take(8) {
            let nz: Vec<f64> = row.iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nz.len(), 2);
            assert!(nz.contains(&1.0) && nz.contains(&-1.0));
        }
        // Unknown arc is reported.
        let bad = ConstraintSet {
            subpath_rankings: vec![SubpathRanking {
                preferred: vec![ArcRef {
                    tail: "ENDOSCOPY.end".into(),
                    head: "RESECTION.start".into(),
                }],
                other: vec![],
            }],
            ..ConstraintSet::default()
        };
        assert!(matches!(
            build_constraint_rows::<f64>(&bad, &net),
            Err(InverseError::UnknownArcInConstraint { .. })
        ));
    }

    #[test]
    fn anchored_mode_requires_one_anchor() {
        let net = abc_network();
        let inst =
            InverseInstance::new(net, ConstraintSet::default(), vec![], vec![], 1e-8).unwrap();
        assert!(matches!(
            solve_stage1(&inst, Stage1Mode::Anchored),
            Err(InverseError::AnchorCount(0))
        ));
    }
}
