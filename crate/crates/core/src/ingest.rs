//! Event-log ingestion with refinement windows and outcome-exit rules.
//!
//! Raw per-patient event logs (activity code, day relative to diagnosis)
//! are sorted, clipped to a window, optionally truncated after the last
//! chemotherapy event, mapped onto network activity ids, and closed with
//! the outcome-layer exit implied by the chemotherapy cycle count.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::network::ClinicalNetwork;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("event log is not parseable: {0}")]
    BadLog(String),
    #[error("unmapped activity codes: {0:?}")]
    UnmappedActivity(Vec<String>),
    #[error("refinement config invalid: {0}")]
    BadConfig(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventRow {
    pub patient_id: String,
    pub activity_id: String,
    /// Days relative to diagnosis.
    pub timestamp: i64,
}

#[derive(Clone, Debug, Default)]
pub struct EventLog {
    pub rows: Vec<EventRow>,
}

impl EventLog {
    /// Parse a CSV with columns patient_id, activity_id, timestamp.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<(String, String, i64)>() {
            let (patient_id, activity_id, timestamp) =
                rec.map_err(|e| IngestError::BadLog(e.to_string()))?;
            rows.push(EventRow {
                patient_id,
                activity_id,
                timestamp,
            });
        }
        Ok(EventLog { rows })
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementConfig {
    /// Inclusive day window relative to diagnosis.
    #[serde(default = "default_window")]
    pub window: (i64, i64),
    #[serde(default)]
    pub truncate_after_last_chemo: bool,
    /// Raw code → network activity id.
    #[serde(default)]
    pub merge: BTreeMap<String, String>,
    /// Raw codes removed outright.
    #[serde(default)]
    pub drop: BTreeSet<String>,
    /// Codes counted as chemotherapy treatment cycles (tallied for the
    /// exit rule, removed from the sequence).
    #[serde(default)]
    pub chemo_codes: BTreeSet<String>,
    /// Codes counted as a medical-oncology consultation for the
    /// zero-chemo exit rule (tallied, removed from the sequence).
    #[serde(default)]
    pub mo_consult_codes: BTreeSet<String>,
    /// Chemo cycles needed for the completed-chemotherapy exit.
    #[serde(default = "default_chemo_threshold")]
    pub chemo_complete_threshold: usize,
    #[serde(default = "default_resection")]
    pub resection_id: String,
    #[serde(default = "default_outcome_complete")]
    pub outcome_complete: String,
    #[serde(default = "default_outcome_partial")]
    pub outcome_partial: String,
    #[serde(default = "default_outcome_mo")]
    pub outcome_mo: String,
    #[serde(default = "default_outcome_default")]
    pub outcome_default: String,
}

fn default_window() -> (i64, i64) {
    (-30, 365)
}
fn default_chemo_threshold() -> usize {
    6
}
fn default_resection() -> String {
    "RESECTION".into()
}
fn default_outcome_complete() -> String {
    "CHEMO_COMPLETE".into()
}
fn default_outcome_partial() -> String {
    "CHEMO_PARTIAL".into()
}
fn default_outcome_mo() -> String {
    "MO_CONSULT_END".into()
}
fn default_outcome_default() -> String {
    "RESECTION_END".into()
}

impl Default for RefinementConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are total")
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.window.0 >= self.window.1 {
            return Err(IngestError::BadConfig(
                "window lower bound must be below upper bound".into(),
            ));
        }
        if self.chemo_complete_threshold < 1 {
            return Err(IngestError::BadConfig("chemo threshold must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct IngestedPatient {
    pub patient_id: String,
    pub sequence: Vec<String>,
    pub chemo_cycles: usize,
}

#[derive(Clone, Debug, serde::Serialize, Default)]
pub struct IngestReport {
    pub patients: Vec<IngestedPatient>,
    /// (patient_id, reason) for every excluded patient.
    pub excluded: Vec<(String, String)>,
}

/// Refine an event log into per-patient START→END activity sequences.
pub fn ingest(
    log: &EventLog,
    cfg: &RefinementConfig,
    net: &ClinicalNetwork,
) -> Result<IngestReport, IngestError> {
    cfg.validate()?;
    // Group by patient, preserving input order within a patient.
    let mut by_patient: BTreeMap<String, Vec<&EventRow>> = BTreeMap::new();
    for row in &log.rows {
        by_patient.entry(row.patient_id.clone()).or_default().push(row);
    }

    let mut unmapped: BTreeSet<String> = BTreeSet::new();
    let mut report = IngestReport::default();
    for (pid, mut rows) in by_patient {
        // Stable sort: ties keep input order.
        rows.sort_by_key(|r| r.timestamp);
        rows.retain(|r| r.timestamp >= cfg.window.0 && r.timestamp <= cfg.window.1);
        if cfg.truncate_after_last_chemo {
            if let Some(last_chemo) = rows
                .iter()
                .filter(|r| cfg.chemo_codes.contains(&r.activity_id))
                .map(|r| r.timestamp)
                .max()
            {
                rows.retain(|r| r.timestamp <= last_chemo);
            }
        }

        let mut chemo_cycles = 0usize;
        let mut mo_consults = 0usize;
        let mut sequence: Vec<String> = Vec::new();
        for r in rows {
            if cfg.drop.contains(&r.activity_id) {
                continue;
            }
            if cfg.chemo_codes.contains(&r.activity_id) {
                chemo_cycles += 1;
                continue;
            }
            if cfg.mo_consult_codes.contains(&r.activity_id) {
                mo_consults += 1;
                continue;
            }
            let id = cfg
                .merge
                .get(&r.activity_id)
                .cloned()
                .unwrap_or_else(|| r.activity_id.clone());
            match net.activity_index(&id) {
                Some(_) => sequence.push(id),
                None => {
                    unmapped.insert(r.activity_id.clone());
                }
            }
        }
        if !unmapped.is_empty() {
            continue; // collect the full list before erroring
        }

        if !sequence.iter().any(|a| a == &cfg.resection_id) {
            report
                .excluded
                .push((pid, format!("no {} event in window", cfg.resection_id)));
            continue;
        }

        // Close with the outcome-layer exit unless the log already ends
        // in one (keeps ingestion idempotent on its own output).
        let already_closed = sequence
            .last()
            .and_then(|id| net.activity_index(id))
            .map_or(false, |a| net.activities[a].outcome_layer);
        if !already_closed {
            let exit = if chemo_cycles >= cfg.chemo_complete_threshold {
                &cfg.outcome_complete
            } else if chemo_cycles >= 1 {
                &cfg.outcome_partial
            } else if mo_consults >= 1 {
                &cfg.outcome_mo
            } else {
                &cfg.outcome_default
            };
            if net.activity_index(exit).is_none() {
                return Err(IngestError::BadConfig(format!(
                    "outcome activity {exit:?} is not in the network"
                )));
            }
            sequence.push(exit.clone());
        }

        report.patients.push(IngestedPatient {
            patient_id: pid,
            sequence,
            chemo_cycles,
        });
    }
    if !unmapped.is_empty() {
        return Err(IngestError::UnmappedActivity(unmapped.into_iter().collect()));
    }
    Ok(report)
}
