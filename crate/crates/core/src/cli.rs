//! Command-line surface.
//!
//! Subcommands: `build`, `invert`, `score`, `decompose`, `baseline`,
//! `simulate`, `survcheck`, `ingest`. All accept `--seed`, `--tol` and
//! `--out-dir`; outputs are deterministic given inputs and seed.
//!
//! Exit codes: 0 success, 2 validation error, 3 solver failure, 4 I/O
//! error. Failures emit a machine-readable JSON object on stderr.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::baselines::{baseline_score, EditConfig, EditVariant};
use crate::cohort::{self, CohortConfig, Outcome};
use crate::detour::{attribute, decompose_best, default_category_map, DetourError};
use crate::ingest::{EventLog, IngestError, RefinementConfig};
use crate::inverse::{
    ConstraintSet, InverseError, InverseInstance, Stage1Mode, StageSolution,
};
use crate::network::{
    compile_network, incidence, sequence_to_flow, ClinicalNetwork, FlowVector, NetworkError,
    NetworkSpec,
};
use crate::score::{longest_walk_table, omega, ScoreError};
use crate::solver::{shortest_path_cost, Status};

#[derive(Parser)]
#[command(name = "concord", version, about = "Clinical pathway concordance toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed override for stochastic subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Solver residual tolerance.
    #[arg(long, global = true, default_value_t = crate::DEFAULT_TOL)]
    tol: f64,
    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Anchored,
    Full,
    Auto,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Lcsd,
    Ld,
    Dld,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a network spec and emit a structural summary.
    Build {
        /// Network spec JSON, or "colon" for the bundled instance.
        #[arg(long, default_value = "colon")]
        network: String,
    },
    /// Learn arc costs by two-stage inverse optimization.
    Invert {
        #[arg(long, default_value = "colon")]
        network: String,
        /// Constraint set JSON, or "colon" for the bundled set.
        #[arg(long, default_value = "colon")]
        constraints: String,
        /// Cohort CSV for stage 2 (survived/died split by event_observed).
        #[arg(long)]
        cohort: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
        mode: ModeArg,
    },
    /// Score a cohort's walks with the normalized concordance ω.
    Score {
        #[arg(long, default_value = "colon")]
        network: String,
        /// costs.json produced by `invert`.
        #[arg(long)]
        costs: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
    },
    /// Decompose each walk's discordance into detours with attribution.
    Decompose {
        #[arg(long, default_value = "colon")]
        network: String,
        #[arg(long)]
        costs: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
    },
    /// Edit-distance baselines against the reference pathways.
    Baseline {
        #[arg(long, default_value = "colon")]
        network: String,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, value_enum, default_value_t = VariantArg::All)]
        variant: VariantArg,
    },
    /// Generate a seeded synthetic cohort CSV.
    Simulate {
        #[arg(long, default_value = "colon")]
        network: String,
        /// Cohort config JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Kaplan-Meier curves and log-rank test over ω terciles.
    Survcheck {
        /// scores.csv produced by `score`.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
    },
    /// Refine a raw event log into START→END activity sequences.
    Ingest {
        #[arg(long, default_value = "colon")]
        network: String,
        /// Event-log CSV: patient_id, activity_id, timestamp (days).
        #[arg(long)]
        log: PathBuf,
        /// Refinement config JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ErrorKind {
    Validation,
    Solver,
    Io,
}

impl ErrorKind {
    fn code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Solver => 3,
            ErrorKind::Io => 4,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ErrorKind::Validation => "validation",
            ErrorKind::Solver => "solver",
            ErrorKind::Io => "io",
        }
    }
}

struct CliError {
    kind: ErrorKind,
    message: String,
}

impl CliError {
    fn validation(msg: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Validation,
            message: msg.into(),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<InverseError> for CliError {
    fn from(e: InverseError) -> Self {
        let kind = match &e {
            InverseError::SolverFailure(_)
            | InverseError::InfeasibleConstraints
            | InverseError::InfeasibleStage2 => ErrorKind::Solver,
            _ => ErrorKind::Validation,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<DetourError> for CliError {
    fn from(e: DetourError) -> Self {
        let kind = match &e {
            DetourError::IdentityViolation { .. } => ErrorKind::Solver,
            _ => ErrorKind::Validation,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<cohort::CohortError> for CliError {
    fn from(e: cohort::CohortError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            kind: ErrorKind::Io,
            message: e.to_string(),
        }
    }
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as CK;
            if matches!(e.kind(), CK::DisplayHelp | CK::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!(
                "{}",
                json!({"kind": "validation", "message": e.to_string()})
            );
            return 2;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!(
                "{}",
                json!({"kind": err.kind.label(), "message": err.message})
            );
            err.kind.code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    fs::create_dir_all(&cli.out_dir)?;
    match &cli.command {
        Command::Build { network } => cmd_build(cli, network),
        Command::Invert {
            network,
            constraints,
            cohort,
            mode,
        } => cmd_invert(cli, network, constraints, cohort.as_deref(), *mode),
        Command::Score {
            network,
            costs,
            cohort,
        } => cmd_score(cli, network, costs, cohort),
        Command::Decompose {
            network,
            costs,
            cohort,
        } => cmd_decompose(cli, network, costs, cohort),
        Command::Baseline {
            network,
            cohort,
            variant,
        } => cmd_baseline(cli, network, cohort, *variant),
        Command::Simulate { network, config } => cmd_simulate(cli, network, config.as_deref()),
        Command::Survcheck { scores, cohort } => cmd_survcheck(cli, scores, cohort),
        Command::Ingest {
            network,
            log,
            config,
        } => cmd_ingest(cli, network, log, config.as_deref()),
    }
}

fn load_network(arg: &str) -> Result<ClinicalNetwork, CliError> {
    let text = if arg == "colon" {
        crate::fixtures::COLON_NETWORK_JSON.to_string()
    } else {
        fs::read_to_string(arg)?
    };
    let spec = NetworkSpec::from_json(&text)?;
    Ok(compile_network(&spec)?)
}

fn load_constraints(arg: &str) -> Result<ConstraintSet, CliError> {
    let text = if arg == "colon" {
        crate::fixtures::COLON_CONSTRAINTS_JSON.to_string()
    } else {
        fs::read_to_string(arg)?
    };
    Ok(ConstraintSet::from_json(&text)?)
}

#[derive(Clone, Debug, serde::Deserialize)]
struct CohortRow {
    patient_id: String,
    activity_sequence: String,
    #[serde(default)]
    event_time: Option<f64>,
    #[serde(default)]
    event_observed: Option<bool>,
}

impl CohortRow {
    fn sequence(&self) -> Vec<String> {
        self.activity_sequence
            .split(';')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    }
}

fn read_cohort(path: &Path) -> Result<Vec<CohortRow>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<CohortRow>() {
        rows.push(rec.map_err(|e| csv_error(path, e))?);
    }
    if rows.is_empty() {
        return Err(CliError::validation(format!(
            "cohort file {} has no rows",
            path.display()
        )));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        CliError {
            kind: ErrorKind::Io,
            message: format!("{}: {e}", path.display()),
        }
    } else {
        CliError::validation(format!("{}: {e}", path.display()))
    }
}

fn read_costs(path: &Path, net: &ClinicalNetwork) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::validation(e.to_string()))?;
    let cost: Vec<f64> = serde_json::from_value(value["cost"].clone())
        .map_err(|e| CliError::validation(format!("bad cost file: {e}")))?;
    if cost.len() != net.arc_count() {
        return Err(CliError::validation(format!(
            "cost vector has {} entries but the network has {} arcs",
            cost.len(),
            net.arc_count()
        )));
    }
    Ok(cost)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut f = fs::File::create(&path)?;
    f.write_all(contents.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Longest-walk table cap: the longest cohort walk, with headroom for
/// the reference pathways.
fn table_cap(net: &ClinicalNetwork, flows: &[FlowVector]) -> u32 {
    let walk_max = flows.iter().map(FlowVector::total_steps).max().unwrap_or(0);
    let ref_max = net
        .reference_pathways()
        .iter()
        .map(|r| 2 * r.len() as u32 + 1)
        .max()
        .unwrap_or(1);
    walk_max.max(ref_max)
}

fn cohort_flows(
    net: &ClinicalNetwork,
    rows: &[CohortRow],
) -> Result<Vec<(String, Vec<String>, FlowVector)>, CliError> {
    rows.iter()
        .map(|r| {
            let seq = r.sequence();
            let flow = sequence_to_flow(net, &seq).map_err(|e| {
                CliError::validation(format!("patient {}: {e}", r.patient_id))
            })?;
            Ok((r.patient_id.clone(), seq, flow))
        })
        .collect()
}

fn cmd_build(cli: &Cli, network: &str) -> Result<(), CliError> {
    let net = load_network(network)?;
    let inc = incidence(&net);
    let summary = json!({
        "activities": net.activities.iter().map(|a| json!({
            "id": a.id,
            "label": a.label,
            "outcome_layer": a.outcome_layer,
            "allow_self_repeat": a.allow_self_repeat,
        })).collect::<Vec<_>>(),
        "node_count": net.node_count,
        "arc_count": net.arc_count(),
        "incidence_rank": inc.rank(),
        "arcs": net.arcs.iter().map(|a| json!({
            "tail": net.node_name(a.tail),
            "head": net.node_name(a.head),
        })).collect::<Vec<_>>(),
        "reference_pathways": net.reference_pathways(),
    });
    write_file(
        &cli.out_dir,
        "network_summary.json",
        &serde_json::to_string_pretty(&summary).expect("serializable"),
    )?;
    println!(
        "network: {} activities, {} nodes, {} arcs, incidence rank {}",
        net.activity_count(),
        net.node_count,
        net.arc_count(),
        inc.rank()
    );
    Ok(())
}

fn stage_json(net: &ClinicalNetwork, sol: &StageSolution<f64>) -> serde_json::Value {
    json!({
        "objective": sol.objective,
        "status": format!("{:?}", sol.report.status),
        "anchor": sol.anchor.map(|(arc, sign)| json!({
            "tail": net.node_name(net.arcs[arc].tail),
            "head": net.node_name(net.arcs[arc].head),
            "sign": sign,
        })),
        "reference_gaps": sol.reference_gaps.values,
        "survived_gaps": sol.survived_gaps.as_ref().map(|g| g.values.clone()),
        "died_gaps": sol.died_gaps.as_ref().map(|g| g.values.clone()),
        "max_primal_residual": sol.report.max_primal_residual,
        "max_dual_residual": sol.report.max_dual_residual,
        "subproblems": sol.subproblems.len(),
    })
}

fn cmd_invert(
    cli: &Cli,
    network: &str,
    constraints: &str,
    cohort: Option<&Path>,
    mode: ModeArg,
) -> Result<(), CliError> {
    let net = load_network(network)?;
    let cset = load_constraints(constraints)?;
    let (survived, died) = match cohort {
        None => (vec![], vec![]),
        Some(path) => {
            let rows = read_cohort(path)?;
            let mut survived = Vec::new();
            let mut died = Vec::new();
            for (row, (pid, _, flow)) in rows.iter().zip(cohort_flows(&net, &rows)?) {
                let observed = row.event_observed.ok_or_else(|| {
                    CliError::validation(format!(
                        "patient {pid}: stage 2 needs the event_observed column"
                    ))
                })?;
                if observed {
                    died.push(flow);
                } else {
                    survived.push(flow);
                }
            }
            (survived, died)
        }
    };
    let inst = InverseInstance::new(net.clone(), cset.clone(), survived, died, cli.tol)?;
    let mode = match mode {
        ModeArg::Anchored => Stage1Mode::Anchored,
        ModeArg::Full => Stage1Mode::FullDecomposition,
        ModeArg::Auto => Stage1Mode::for_constraints(&cset),
    };
    let stage1 = crate::inverse::solve_stage1(&inst, mode)?;
    if stage1.report.status != Status::Optimal {
        return Err(CliError {
            kind: ErrorKind::Solver,
            message: format!("stage 1 ended with status {:?}", stage1.report.status),
        });
    }
    let has_cohort = !(inst.survived.is_empty() && inst.died.is_empty());
    let (final_sol, stage2_json) = if has_cohort {
        let stage2 = crate::inverse::solve_stage2(&inst, &stage1)?;
        let j = stage_json(&net, &stage2);
        (stage2, Some(j))
    } else {
        (stage1.clone(), None)
    };
    let out = json!({
        "cost": final_sol.cost.values,
        "arcs": net.arcs.iter().map(|a| json!({
            "tail": net.node_name(a.tail),
            "head": net.node_name(a.head),
        })).collect::<Vec<_>>(),
        "dual": final_sol.dual.values,
        "tol": cli.tol,
        "mode": format!("{mode:?}"),
        "stage1": stage_json(&net, &stage1),
        "stage2": stage2_json,
    });
    write_file(
        &cli.out_dir,
        "costs.json",
        &serde_json::to_string_pretty(&out).expect("serializable"),
    )?;
    println!(
        "stage-1 objective {:.6e}; reference gaps {:?}",
        stage1.objective, stage1.reference_gaps.values
    );
    Ok(())
}

fn cmd_score(cli: &Cli, network: &str, costs: &Path, cohort: &Path) -> Result<(), CliError> {
    let net = load_network(network)?;
    let cost = read_costs(costs, &net)?;
    let rows = read_cohort(cohort)?;
    let flows = cohort_flows(&net, &rows)?;
    let (shortest, _) = shortest_path_cost(&net, &cost)
        .map_err(|e| CliError::validation(e.to_string()))?;
    let cap = table_cap(&net, &flows.iter().map(|(_, _, f)| f.clone()).collect::<Vec<_>>());
    let table = longest_walk_table(&net, &cost, cap);
    let mut out = String::from("patient_id,omega,epsilon,walk_length\n");
    for (pid, _, flow) in &flows {
        let sc = omega(flow, &cost, shortest, &table)
            .map_err(|e| CliError::validation(format!("patient {pid}: {e}")))?;
        out.push_str(&format!(
            "{pid},{:.12},{:.12},{}\n",
            sc.omega, sc.epsilon, sc.walk_length
        ));
    }
    write_file(&cli.out_dir, "scores.csv", &out)?;
    Ok(())
}

fn cmd_decompose(cli: &Cli, network: &str, costs: &Path, cohort: &Path) -> Result<(), CliError> {
    let net = load_network(network)?;
    let cost = read_costs(costs, &net)?;
    let rows = read_cohort(cohort)?;
    let flows = cohort_flows(&net, &rows)?;
    let cap = table_cap(&net, &flows.iter().map(|(_, _, f)| f.clone()).collect::<Vec<_>>());
    let table = longest_walk_table(&net, &cost, cap);
    let categories = default_category_map(&net);

    let mut detours = String::from(
        "patient_id,detour_index,reference_index,from,to,extras,skipped,cost\n",
    );
    let mut attribution = String::from("patient_id,origin,category,share\n");
    for (pid, seq, _) in &flows {
        let dec = decompose_best(&net, seq, &cost, &table)
            .map_err(|e| match CliError::from(e) {
                CliError { kind, message } => CliError {
                    kind,
                    message: format!("patient {pid}: {message}"),
                },
            })?;
        let gamma_name = |i: usize| -> String {
            if i == 0 {
                "START".into()
            } else if i == dec.reference.len() + 1 {
                "END".into()
            } else {
                dec.reference[i - 1].clone()
            }
        };
        for (k, d) in dec.detours.iter().enumerate() {
            detours.push_str(&format!(
                "{pid},{k},{},{},{},{},{},{:.12}\n",
                dec.reference_index.unwrap_or(0),
                gamma_name(d.from_concordant),
                gamma_name(d.to_concordant),
                d.extras.join(";"),
                d.skipped.join(";"),
                d.cost
            ));
        }
        let att = attribute(&dec, &categories);
        for ((origin, category), share) in &att.shares {
            attribution.push_str(&format!(
                "{pid},{origin},{category},{share:.12}\n"
            ));
        }
    }
    write_file(&cli.out_dir, "detours.csv", &detours)?;
    write_file(&cli.out_dir, "attribution.csv", &attribution)?;
    Ok(())
}

fn cmd_baseline(
    cli: &Cli,
    network: &str,
    cohort: &Path,
    variant: VariantArg,
) -> Result<(), CliError> {
    let net = load_network(network)?;
    let rows = read_cohort(cohort)?;
    let references = net.reference_pathways().to_vec();
    let variants: Vec<EditVariant> = match variant {
        VariantArg::Lcsd => vec![EditVariant::Lcsd],
        VariantArg::Ld => vec![EditVariant::Ld],
        VariantArg::Dld => vec![EditVariant::Dld],
        VariantArg::All => vec![EditVariant::Lcsd, EditVariant::Ld, EditVariant::Dld],
    };
    let mut out = String::from("patient_id,variant,raw,normalized\n");
    for r in &rows {
        let seq = r.sequence();
        for &v in &variants {
            let s = baseline_score(&seq, &references, EditConfig { variant: v });
            let name = match v {
                EditVariant::Lcsd => "lcsd",
                EditVariant::Ld => "ld",
                EditVariant::Dld => "dld",
            };
            out.push_str(&format!(
                "{},{name},{},{:.12}\n",
                r.patient_id, s.raw, s.normalized
            ));
        }
    }
    write_file(&cli.out_dir, "baseline.csv", &out)?;
    Ok(())
}

fn cmd_simulate(cli: &Cli, network: &str, config: Option<&Path>) -> Result<(), CliError> {
    let net = load_network(network)?;
    let mut cfg: CohortConfig = match config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| CliError::validation(e.to_string()))?
        }
        None => serde_json::from_value(json!({
            "seed": 0,
            "n_patients": 200,
            "insert_rate": 0.15,
            "delete_rate": 0.10,
            "repeat_rate": 0.10,
            "beta": 0.5,
        }))
        .expect("default config is valid"),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let cohort = cohort::generate(&net, &cfg)?;
    let mut out = String::from("patient_id,activity_sequence,event_time,event_observed\n");
    for p in &cohort {
        out.push_str(&format!(
            "{},{},{:.12},{}\n",
            p.id,
            p.sequence.join(";"),
            p.event_time,
            p.event_observed
        ));
    }
    write_file(&cli.out_dir, "cohort.csv", &out)?;
    println!("simulated {} patients (seed {})", cohort.len(), cfg.seed);
    Ok(())
}

fn cmd_survcheck(cli: &Cli, scores: &Path, cohort: &Path) -> Result<(), CliError> {
    #[derive(serde::Deserialize)]
    struct ScoreRow {
        patient_id: String,
        omega: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(scores)
        .map_err(|e| csv_error(scores, e))?;
    let mut score_rows: Vec<ScoreRow> = Vec::new();
    for rec in rdr.deserialize::<ScoreRow>() {
        score_rows.push(rec.map_err(|e| csv_error(scores, e))?);
    }
    let cohort_rows = read_cohort(cohort)?;
    let by_id: std::collections::HashMap<&str, &CohortRow> = cohort_rows
        .iter()
        .map(|r| (r.patient_id.as_str(), r))
        .collect();

    let mut omegas = Vec::new();
    let mut outcomes = Vec::new();
    for s in &score_rows {
        let c = by_id
            .get(s.patient_id.as_str())
            .copied()
            .ok_or_else(|| {
                CliError::validation(format!("patient {} missing from cohort", s.patient_id))
            })?;
        let (time, observed) = match (c.event_time, c.event_observed) {
            (Some(t), Some(o)) => (t, o),
            _ => {
                return Err(CliError::validation(format!(
                    "patient {}: cohort lacks event_time/event_observed",
                    s.patient_id
                )))
            }
        };
        omegas.push(s.omega);
        outcomes.push(Outcome { time, observed });
    }
    if omegas.len() < 3 {
        return Err(CliError::validation(
            "survcheck needs at least 3 scored patients",
        ));
    }
    let bins = cohort::tercile_bins(&omegas);
    let mut groups: Vec<Vec<Outcome>> = vec![Vec::new(); 3];
    for (o, &b) in outcomes.iter().zip(&bins.assignment) {
        groups[b].push(*o);
    }
    let mut km = String::from("group,time,survival,at_risk\n");
    for (g, outcomes) in groups.iter().enumerate() {
        if outcomes.is_empty() {
            continue;
        }
        let curve = cohort::km_curve(outcomes)?;
        for i in 0..curve.times.len() {
            km.push_str(&format!(
                "{g},{:.12},{:.12},{}\n",
                curve.times[i], curve.survival[i], curve.at_risk[i]
            ));
        }
    }
    let nonempty: Vec<Vec<Outcome>> = groups.iter().filter(|g| !g.is_empty()).cloned().collect();
    let lr = cohort::log_rank(&nonempty)?;
    let out = json!({
        "statistic": lr.statistic,
        "dof": lr.dof,
        "p_value": lr.p_value,
        "observed": lr.observed,
        "expected": lr.expected,
        "tercile_boundaries": bins.boundaries,
        "degenerate_bins": bins.degenerate,
    });
    write_file(&cli.out_dir, "km.csv", &km)?;
    write_file(
        &cli.out_dir,
        "logrank.json",
        &serde_json::to_string_pretty(&out).expect("serializable"),
    )?;
    println!(
        "log-rank χ² = {:.4}, dof = {}, p = {:.6}",
        lr.statistic, lr.dof, lr.p_value
    );
    Ok(())
}

fn cmd_ingest(
    cli: &Cli,
    network: &str,
    log: &Path,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let net = load_network(network)?;
    let cfg: RefinementConfig = match config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| CliError::validation(e.to_string()))?
        }
        None => RefinementConfig::default(),
    };
    let file = fs::File::open(log)?;
    let events = EventLog::from_csv(file)?;
    let report = crate::ingest::ingest(&events, &cfg, &net)?;
    let mut seqs = String::from("patient_id,activity_sequence\n");
    for p in &report.patients {
        seqs.push_str(&format!("{},{}\n", p.patient_id, p.sequence.join(";")));
    }
    let mut excl = String::from("patient_id,reason\n");
    for (pid, reason) in &report.excluded {
        excl.push_str(&format!("{pid},{reason}\n"));
    }
    write_file(&cli.out_dir, "sequences.csv", &seqs)?;
    write_file(&cli.out_dir, "exclusions.csv", &excl)?;
    println!(
        "ingested {} patients ({} excluded)",
        report.patients.len(),
        report.excluded.len()
    );
    Ok(())
}
