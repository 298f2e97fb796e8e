//! Seeded synthetic cohorts and nonparametric survival statistics.
//!
//! Patient walks are generated by perturbing reference pathways with
//! feasibility-preserving edits (insert, delete, repeat, early outcome
//! exit); event times follow an exponential hazard that grows with the
//! perturbation count, so concordance and survival are linked with a
//! controllable strength β. Kaplan-Meier curves and the log-rank test
//! close the loop.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::network::{sequence_to_flow, ClinicalNetwork, FlowVector, NetworkError};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("survival group is empty")]
    EmptyGroup,
    #[error("no observed events in any group")]
    NoEvents,
    #[error("log-rank needs at least two nonempty groups")]
    TooFewGroups,
    #[error("cohort config invalid: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Synthetic-cohort parameters. All rates are per-opportunity
/// probabilities in [0, 1].
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    pub seed: u64,
    pub n_patients: usize,
    /// Probability of inserting a discordant activity at each gap.
    #[serde(default)]
    pub insert_rate: f64,
    /// Probability of deleting each concordant activity.
    #[serde(default)]
    pub delete_rate: f64,
    /// Probability of repeating each activity (needs a self-repeat arc).
    #[serde(default)]
    pub repeat_rate: f64,
    /// Per outcome-layer activity: probability of swapping the reference
    /// outcome for this one.
    #[serde(default)]
    pub early_exit_rates: BTreeMap<String, f64>,
    /// Concordance-hazard link strength: hazard = λ·exp(β·perturbations).
    #[serde(default)]
    pub beta: f64,
    /// Baseline exponential event rate λ.
    #[serde(default = "default_base_rate")]
    pub base_rate: f64,
    /// Administrative censoring horizon (time units).
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

fn default_base_rate() -> f64 {
    0.05
}

fn default_horizon() -> f64 {
    60.0
}

impl CohortConfig {
    pub fn validate(&self) -> Result<(), CohortError> {
        if self.n_patients < 1 {
            return Err(CohortError::BadConfig("n_patients must be >= 1".into()));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.insert_rate) || !unit(self.delete_rate) || !unit(self.repeat_rate) {
            return Err(CohortError::BadConfig("rates must lie in [0, 1]".into()));
        }
        for (k, &v) in &self.early_exit_rates {
            if !unit(v) {
                return Err(CohortError::BadConfig(format!(
                    "early-exit rate for {k:?} must lie in [0, 1]"
                )));
            }
        }
        if !(self.base_rate > 0.0) || !(self.horizon > 0.0) {
            return Err(CohortError::BadConfig(
                "base_rate and horizon must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct PatientRecord {
    pub id: String,
    pub sequence: Vec<String>,
    #[serde(skip)]
    pub walk: FlowVector,
    pub event_time: f64,
    pub event_observed: bool,
    /// Number of perturbations applied (the hazard proxy).
    pub perturbations: u32,
}

/// (time, observed) pair used by the survival estimators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub time: f64,
    pub observed: bool,
}

impl PatientRecord {
    pub fn outcome(&self) -> Outcome {
        Outcome {
            time: self.event_time,
            observed: self.event_observed,
        }
    }
}

fn arc_exists(net: &ClinicalNetwork, tail_act: Option<usize>, head_act: Option<usize>) -> bool {
    let tail = tail_act.map_or(net.start_index, |a| net.end_node(a));
    let head = head_act.map_or(net.end_index, |a| net.start_node(a));
    net.arc_index(tail, head).is_some()
}

/// Generate a deterministic synthetic cohort. Each patient uses an
/// independent counter-indexed substream of the seed, so the output is
/// identical regardless of generation order.
pub fn generate(net: &ClinicalNetwork, cfg: &CohortConfig) -> Result<Vec<PatientRecord>, CohortError> {
    cfg.validate()?;
    let references = net.reference_pathways().to_vec();
    if references.is_empty() {
        return Err(CohortError::BadConfig("network has no reference pathways".into()));
    }
    let non_outcome: Vec<usize> = (0..net.activity_count())
        .filter(|&a| !net.activities[a].outcome_layer)
        .collect();
    let mut out = Vec::with_capacity(cfg.n_patients);
    for i in 0..cfg.n_patients {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64 + 1);
        let reference = &references[rng.gen_range(0..references.len())];
        let mut seq: Vec<usize> = reference
            .iter()
            .map(|id| net.activity_index(id).expect("validated reference"))
            .collect();
        let mut perturbations = 0u32;

        // Early exit: maybe replace the outcome-layer tail.
        if let Some(&last) = seq.last() {
            if net.activities[last].outcome_layer {
                for (id, &rate) in &cfg.early_exit_rates {
                    let alt = net
                        .activity_index(id)
                        .ok_or_else(|| CohortError::BadConfig(format!("unknown outcome {id:?}")))?;
                    if alt != last
                        && rng.gen::<f64>() < rate
                        && arc_exists(net, seq.get(seq.len() - 2).copied(), Some(alt))
                    {
                        *seq.last_mut().expect("nonempty") = alt;
                        perturbations += 1;
                        break;
                    }
                }
            }
        }

        // Deletions of concordant activities (never the outcome tail).
        let mut k = 0;
        while k < seq.len().saturating_sub(1) {
            if rng.gen::<f64>() < cfg.delete_rate {
                let prev = if k == 0 { None } else { Some(seq[k - 1]) };
                let next = seq.get(k + 1).copied();
                if seq.len() > 1 && arc_exists(net, prev, next) {
                    seq.remove(k);
                    perturbations += 1;
                    continue;
                }
            }
            k += 1;
        }

        // Insertions of discordant activities at each gap.
        let mut k = 0;
        while k <= seq.len() {
            if rng.gen::<f64>() < cfg.insert_rate && !non_outcome.is_empty() {
                let cand = non_outcome[rng.gen_range(0..non_outcome.len())];
                let prev = if k == 0 { None } else { Some(seq[k - 1]) };
                let next = seq.get(k).copied();
                if arc_exists(net, prev, Some(cand)) && arc_exists(net, Some(cand), next) {
                    seq.insert(k, cand);
                    perturbations += 1;
                    k += 2;
                    continue;
                }
            }
            k += 1;
        }

        // Repeats via self-repeat arcs.
        let mut k = 0;
        while k < seq.len() {
            if rng.gen::<f64>() < cfg.repeat_rate && arc_exists(net, Some(seq[k]), Some(seq[k])) {
                seq.insert(k, seq[k]);
                perturbations += 1;
                k += 1;
            }
            k += 1;
        }

        let sequence: Vec<String> = seq.iter().map(|&a| net.activities[a].id.clone()).collect();
        let walk = sequence_to_flow(net, &sequence)?;

        let rate = cfg.base_rate * (cfg.beta * f64::from(perturbations)).exp();
        let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let t = -u.ln() / rate;
        let (event_time, event_observed) = if t <= cfg.horizon {
            (t, true)
        } else {
            (cfg.horizon, false)
        };
        out.push(PatientRecord {
            id: format!("P{:05}", i + 1),
            sequence,
            walk,
            event_time,
            event_observed,
            perturbations,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct SurvivalCurve {
    /// Distinct observed event times, ascending.
    pub times: Vec<f64>,
    /// Product-limit estimate after each event time.
    pub survival: Vec<f64>,
    /// Risk-set size just before each event time.
    pub at_risk: Vec<usize>,
}

/// Kaplan-Meier product-limit estimator for one group.
pub fn km_curve(outcomes: &[Outcome]) -> Result<SurvivalCurve, CohortError> {
    if outcomes.is_empty() {
        return Err(CohortError::EmptyGroup);
    }
    let mut sorted = outcomes.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time).then(b.observed.cmp(&a.observed)));
    let n = sorted.len();
    let mut times = Vec::new();
    let mut survival = Vec::new();
    let mut at_risk = Vec::new();
    let mut s = 1.0;
    let mut idx = 0;
    while idx < n {
        let t = sorted[idx].time;
        let risk = n - idx;
        let mut deaths = 0usize;
        let mut j = idx;
        while j < n && sorted[j].time == t {
            deaths += usize::from(sorted[j].observed);
            j += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / risk as f64;
            times.push(t);
            survival.push(s);
            at_risk.push(risk);
        }
        idx = j;
    }
    Ok(SurvivalCurve {
        times,
        survival,
        at_risk,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct LogRankResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
}

/// Log-rank test across two or more groups: chi-square of observed minus
/// expected deaths over the pooled event times.
pub fn log_rank(groups: &[Vec<Outcome>]) -> Result<LogRankResult, CohortError> {
    if groups.len() < 2 || groups.iter().any(|g| g.is_empty()) {
        return Err(CohortError::TooFewGroups);
    }
    let mut death_times: Vec<f64> = groups
        .iter()
        .flatten()
        .filter(|o| o.observed)
        .map(|o| o.time)
        .collect();
    death_times.sort_by(f64::total_cmp);
    death_times.dedup();
    if death_times.is_empty() {
        return Err(CohortError::NoEvents);
    }
    let g = groups.len();
    let mut observed = vec![0.0f64; g];
    let mut expected = vec![0.0f64; g];
    for &t in &death_times {
        let n_j: Vec<usize> = groups
            .iter()
            .map(|gr| gr.iter().filter(|o| o.time >= t).count())
            .collect();
        let d_j: Vec<usize> = groups
            .iter()
            .map(|gr| gr.iter().filter(|o| o.observed && o.time == t).count())
            .collect();
        let n: usize = n_j.iter().sum();
        let d: usize = d_j.iter().sum();
        if n == 0 {
            continue;
        }
        for j in 0..g {
            observed[j] += d_j[j] as f64;
            expected[j] += d as f64 * n_j[j] as f64 / n as f64;
        }
    }
    let statistic: f64 = (0..g)
        .filter(|&j| expected[j] > 0.0)
        .map(|j| (observed[j] - expected[j]).powi(2) / expected[j])
        .sum();
    let dof = g - 1;
    let chi = ChiSquared::new(dof as f64).expect("dof >= 1");
    let p_value = 1.0 - chi.cdf(statistic);
    Ok(LogRankResult {
        statistic,
        dof,
        p_value,
        observed,
        expected,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct TercileBins {
    /// Bin index (0 = lowest scores) per input position.
    pub assignment: Vec<usize>,
    /// Upper score boundary of bins 0 and 1.
    pub boundaries: [f64; 2],
    /// All scores identical: binning is arbitrary.
    pub degenerate: bool,
}

/// Equal-count terciles by rank, ties broken by input order; any
/// remainder goes to the lower bins (e.g. 10 scores → 4/3/3).
pub fn tercile_bins(scores: &[f64]) -> TercileBins {
    assert!(scores.len() >= 3, "tercile binning needs at least 3 scores");
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let base = n / 3;
    let rem = n % 3;
    let size0 = base + usize::from(rem >= 1);
    let size1 = base + usize::from(rem >= 2);
    let mut assignment = vec![0usize; n];
    for (rank, &idx) in order.iter().enumerate() {
        assignment[idx] = if rank < size0 {
            0
        } else if rank < size0 + size1 {
            1
        } else {
            2
        };
    }
    let boundaries = [
        scores[order[size0 - 1]],
        scores[order[size0 + size1 - 1]],
    ];
    let degenerate = scores
        .iter()
        .all(|&s| s.total_cmp(&scores[0]) == std::cmp::Ordering::Equal);
    if degenerate {
        eprintln!("warning: all concordance scores equal; tercile binning is arbitrary");
    }
    TercileBins {
        assignment,
        boundaries,
        degenerate,
    }
}
