//! Pathway concordance toolkit.
//!
//! Models patient journeys as walks on a clinical activity network, learns
//! arc costs by two-stage inverse shortest-path optimization against
//! reference and patient pathways, scores walks with a normalized
//! concordance metric, and decomposes discordance into detours.
//!
//! The numeric core is generic over the scalar type via [`scalar::Real`];
//! concrete `f64` aliases are exported at the crate root.

pub mod baselines;
pub mod cli;
pub mod cohort;
pub mod detour;
pub mod fixtures;
pub mod ingest;
pub mod inverse;
pub mod linalg;
pub mod network;
pub mod scalar;
pub mod score;
pub mod solver;

pub use network::{ActivitySpec, ClinicalNetwork, FlowVector, IncidenceSystem, NetworkSpec};
pub use scalar::Real;

/// Default residual tolerance (infinity norm) for the embedded solvers.
pub const DEFAULT_TOL: f64 = 1e-8;

pub type CostVector = inverse::CostVector<f64>;
pub type DualVector = inverse::DualVector<f64>;
pub type GapVector = inverse::GapVector<f64>;
pub type StageSolution = inverse::StageSolution<f64>;
pub type InverseInstance = inverse::InverseInstance<f64>;
pub type SolveReport = solver::SolveReport<f64>;
pub type LinearProgram = solver::LinearProgram<f64>;
pub type QuadraticProgram = solver::QuadraticProgram<f64>;
pub type LongestWalkTable = score::LongestWalkTable<f64>;
pub type ConcordanceScore = score::ConcordanceScore<f64>;
pub type DetourDecomposition = detour::DetourDecomposition<f64>;
pub type ActivityAttribution = detour::ActivityAttribution<f64>;
