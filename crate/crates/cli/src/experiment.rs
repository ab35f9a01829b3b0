//! Builds instances, schedules, and algorithms from a config, runs the
//! repetitions, and writes the traces.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use next_core::apps::{
    build_cartography, build_flow_control, build_localization, generate_sparse_ml, CartographyConfig,
    CartographyInstance, FlowControlConfig, FlowControlInstance, LocalizationConfig, LocalizationInstance,
    SparseMlConfig, SparseMlInstance,
};
use next_core::graph::io::{parse_schedule, write_schedule};
use next_core::graph::{generate_b_connected_schedule, Digraph, GraphSchedule};
use next_core::metrics::write_csv;
use next_core::problem::DistributedProblem;
use next_core::solver::{run, Algorithm, InexactSchedule, RunConfig, RunTrace, SolverError};
use next_core::surrogate::{Surrogate, SurrogateError, SurrogateKind};
use next_core::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{AlgorithmBlock, AlgorithmKind, ExperimentConfig, Generator, ProblemBlock};

/// Output directory used when neither the command line nor the config names one.
pub const OUT_DIR_ENV: &str = "NEXT_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("numerical abort: {algorithm}, seed {seed}, iteration {iteration}: {detail}")]
    Numerical {
        algorithm: String,
        seed: u64,
        iteration: usize,
        detail: String,
    },
    #[error("{algorithm}, seed {seed}: {detail}")]
    Run { algorithm: String, seed: u64, detail: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Run { .. } | CliError::Io { .. } => 1,
        }
    }

    fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// One generated problem instance.
pub enum Instance {
    Localization(LocalizationInstance),
    Cartography(CartographyInstance),
    FlowControl(FlowControlInstance),
    SparseMl(SparseMlInstance),
}

impl Instance {
    pub fn problem(&self) -> &DistributedProblem {
        match self {
            Instance::Localization(i) => &i.problem,
            Instance::Cartography(i) => &i.problem,
            Instance::FlowControl(i) => &i.problem,
            Instance::SparseMl(i) => &i.problem,
        }
    }

    pub fn truth(&self) -> Option<DVector<f64>> {
        match self {
            Instance::Localization(i) => Some(i.truth.clone()),
            Instance::Cartography(i) => Some(i.truth.clone()),
            Instance::FlowControl(_) => None,
            Instance::SparseMl(i) => Some(i.truth.clone()),
        }
    }

    /// Surrogates for a NEXT variant. `next-pl` and `next-inexact` use the
    /// structure-preserving family of each application: the partially
    /// linearized quadratic for localization, the kept cost for cartography
    /// and Gaussian sparse estimation, and the DC split for flow control.
    pub fn surrogates(&self, kind: AlgorithmKind, tau: f64) -> Result<Vec<Arc<dyn Surrogate>>, SurrogateError> {
        let linear = kind == AlgorithmKind::NextL;
        match self {
            Instance::Localization(i) if linear => i.l_surrogates(tau),
            Instance::Localization(i) => i.pl_surrogates(tau),
            Instance::Cartography(i) if linear => i.l_surrogates(tau),
            Instance::Cartography(i) => i.keep_convex_surrogates(tau),
            Instance::FlowControl(i) if linear => i.l_surrogates(tau),
            Instance::FlowControl(i) => i.dc_surrogates(tau),
            Instance::SparseMl(i) if linear => i.surrogates(SurrogateKind::Linearize, tau),
            Instance::SparseMl(i) => i.surrogates(SurrogateKind::KeepConvex, tau),
        }
    }

    /// Plain-text description sufficient to rebuild the instance.
    pub fn manifest(&self) -> String {
        match self {
            Instance::Localization(i) => i.manifest(),
            Instance::Cartography(i) => i.manifest(),
            Instance::FlowControl(i) => {
                let c = &i.config;
                let mut s = String::from("app = flow_control\n");
                let _ = writeln!(s, "capacities = {:?}", c.capacities);
                let _ = writeln!(s, "paths = {:?}", c.paths);
                let _ = writeln!(s, "min_rate = {:?}", c.min_rate);
                let _ = writeln!(s, "max_rate = {:?}", c.max_rate);
                let _ = writeln!(s, "alpha = {:?}", c.alpha);
                let _ = writeln!(s, "beta = {:?}", c.beta);
                s
            }
            Instance::SparseMl(i) => {
                let c = &i.config;
                let mut s = String::from("app = sparse_ml\n");
                let _ = writeln!(s, "seed = {}", c.seed);
                let _ = writeln!(s, "likelihood = {:?}", c.likelihood);
                let truth: Vec<String> = i.truth.iter().map(|v| format!("{v:e}")).collect();
                let _ = writeln!(s, "truth = {}", truth.join(" "));
                s
            }
        }
    }
}

/// Builds the instance of repetition `rep`; random instances use seed
/// `seed + rep`.
pub fn build_instance(block: &ProblemBlock, rep: u64) -> Result<Instance, CliError> {
    let invalid = |e: next_core::apps::AppError| CliError::config(format!("problem: {e}"));
    Ok(match block {
        ProblemBlock::Localization(b) => {
            let d = LocalizationConfig::default();
            let cfg = LocalizationConfig {
                agents: b.agents.unwrap_or(d.agents),
                targets: b.targets.unwrap_or(d.targets),
                target_positions: b
                    .target_positions
                    .as_ref()
                    .map(|t| t.iter().map(|p| DVector::from_column_slice(p)).collect()),
                node_positions: None,
                snr_db: if b.noiseless { None } else { b.snr_db.or(d.snr_db) },
                lower: b.lower.unwrap_or(d.lower),
                upper: b.upper.unwrap_or(d.upper),
                seed: b.seed.wrapping_add(rep),
            };
            Instance::Localization(build_localization(&cfg).map_err(invalid)?)
        }
        ProblemBlock::Cartography(b) => {
            let d = CartographyConfig::default();
            let cfg = CartographyConfig {
                agents: b.agents.unwrap_or(d.agents),
                sources: b.sources.clone().unwrap_or(d.sources),
                basis: b.basis.unwrap_or(d.basis),
                channels: b.channels.unwrap_or(d.channels),
                lambda: b.lambda.unwrap_or(d.lambda),
                p_max: b.p_max.unwrap_or(d.p_max),
                side: b.side.unwrap_or(d.side),
                band: b.band.map_or(d.band, |[lo, hi]| (lo, hi)),
                snr_db: if b.noiseless { None } else { b.snr_db.or(d.snr_db) },
                seed: b.seed.wrapping_add(rep),
            };
            Instance::Cartography(build_cartography(&cfg).map_err(invalid)?)
        }
        ProblemBlock::FlowControl(b) => {
            let cfg = if b.explicit() {
                FlowControlConfig {
                    capacities: b.capacities.clone().unwrap_or_default(),
                    paths: b.paths.clone().unwrap_or_default(),
                    min_rate: b.min_rate.clone().unwrap_or_default(),
                    max_rate: b.max_rate.clone().unwrap_or_default(),
                    alpha: b.alpha.clone().unwrap_or_default(),
                    beta: b.beta.clone().unwrap_or_default(),
                }
            } else {
                FlowControlConfig::random(b.sources.unwrap_or(8), b.links.unwrap_or(4), b.seed.wrapping_add(rep))
            };
            Instance::FlowControl(build_flow_control(&cfg).map_err(invalid)?)
        }
        ProblemBlock::SparseMl(b) => {
            let d = SparseMlConfig::default();
            let cfg = SparseMlConfig {
                agents: b.agents.unwrap_or(d.agents),
                dim: b.dim.unwrap_or(d.dim),
                samples: b.samples.unwrap_or(d.samples),
                sparsity: b.sparsity.unwrap_or(d.sparsity),
                lambda: b.lambda.unwrap_or(d.lambda),
                bound: b.bound.unwrap_or(d.bound),
                noise_std: b.noise_std.unwrap_or(d.noise_std),
                likelihood: b.likelihood(),
                seed: b.seed.wrapping_add(rep),
            };
            Instance::SparseMl(generate_sparse_ml(&cfg).map_err(invalid)?)
        }
    })
}

/// Builds the schedule of repetition `rep` over `agents` nodes; generated
/// graphs use seed `seed + rep`.
pub fn build_schedule(cfg: &ExperimentConfig, agents: usize, rep: u64) -> Result<GraphSchedule, CliError> {
    let g = &cfg.graph;
    let seed = g.seed.wrapping_add(rep);
    let graph_err = |e: next_core::graph::GraphError| CliError::config(format!("graph: {e}"));
    let base = match g.generator {
        Generator::Ring => Digraph::ring(agents),
        Generator::DirectedRing => Digraph::directed_ring(agents),
        Generator::Path => Digraph::path(agents),
        Generator::Complete => Digraph::complete(agents),
        Generator::ErdosRenyi => Digraph::erdos_renyi(agents, g.p.unwrap_or(0.3), seed),
        Generator::RandomGeometric => Digraph::random_geometric(agents, g.radius.unwrap_or(0.3), seed),
        Generator::File => {
            let path = g.path.as_deref().ok_or_else(|| CliError::config("graph.path: required"))?;
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let schedule = parse_schedule(&text)
                .map_err(|e| CliError::config(format!("graph file {}: {e}", path.display())))?;
            if schedule.agent_count() != agents {
                return Err(CliError::config(format!(
                    "graph file {}: {} agents, but the problem has {agents}",
                    path.display(),
                    schedule.agent_count()
                )));
            }
            return Ok(schedule);
        }
    }
    .map_err(graph_err)?;
    generate_b_connected_schedule(&base, g.window, g.horizon(), seed).map_err(graph_err)
}

/// One algorithm run of one repetition.
pub struct RunRecord {
    pub label: String,
    pub rep: usize,
    pub seed: u64,
    pub trace: RunTrace,
}

pub struct RepOutcome {
    pub rep: usize,
    pub manifest: String,
    pub runs: Vec<RunRecord>,
}

fn algorithm_for(block: &AlgorithmBlock, instance: &Instance, default_tau: f64) -> Result<Algorithm, SurrogateError> {
    let tau = block.tau.unwrap_or(default_tau);
    Ok(match block.kind {
        AlgorithmKind::DGradient => Algorithm::DGradient,
        AlgorithmKind::NextPl | AlgorithmKind::NextL => Algorithm::Next {
            surrogates: instance.surrogates(block.kind, tau)?,
            inexact: None,
        },
        AlgorithmKind::NextInexact => {
            let agents = instance.problem().agent_count();
            Algorithm::Next {
                surrogates: instance.surrogates(block.kind, tau)?,
                inexact: Some(InexactSchedule::uniform(agents, block.eps_constant.unwrap_or(1.0))),
            }
        }
    })
}

fn solver_error(label: &str, seed: u64, e: SolverError) -> CliError {
    match e {
        SolverError::NonFinite { agent, iteration } => CliError::Numerical {
            algorithm: label.to_string(),
            seed,
            iteration,
            detail: format!("non-finite state at agent {agent}"),
        },
        SolverError::Subproblem {
            agent,
            iteration,
            source: SurrogateError::NonFinite,
        } => CliError::Numerical {
            algorithm: label.to_string(),
            seed,
            iteration,
            detail: format!("non-finite subproblem at agent {agent}"),
        },
        other => CliError::Run {
            algorithm: label.to_string(),
            seed,
            detail: other.to_string(),
        },
    }
}

/// Runs every algorithm on repetition `rep`.
pub fn run_repetition(cfg: &ExperimentConfig, rep: usize) -> Result<RepOutcome, CliError> {
    let instance = build_instance(&cfg.problem, rep as u64)?;
    let problem = instance.problem();
    let schedule = build_schedule(cfg, problem.agent_count(), rep as u64)?;
    let seed = cfg.run.seed.wrapping_add(rep as u64);
    let truth = instance.truth();
    let mut runs = Vec::with_capacity(cfg.algorithm.len());
    for block in &cfg.algorithm {
        let label = block.label();
        let algorithm = algorithm_for(block, &instance, cfg.problem.default_tau())
            .map_err(|e| CliError::config(format!("algorithm {label}: {e}")))?;
        let mut rc = RunConfig::new(cfg.run.iterations, block.step.rule());
        rc.seed = seed;
        rc.cadence = cfg.run.cadence;
        rc.stop_threshold = cfg.run.stop_below;
        rc.truth = truth.clone();
        rc.track_error = cfg.run.track_error;
        let trace = run(problem, &schedule, algorithm, rc).map_err(|e| solver_error(&label, seed, e))?;
        runs.push(RunRecord { label, rep, seed, trace });
    }
    Ok(RepOutcome {
        rep,
        manifest: instance.manifest(),
        runs,
    })
}

/// Runs all repetitions in parallel. Results come back in repetition order;
/// the first failing repetition decides the error.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<RepOutcome>, CliError> {
    let outcomes: Vec<Result<RepOutcome, CliError>> =
        (0..cfg.run.repetitions).into_par_iter().map(|rep| run_repetition(cfg, rep)).collect();
    outcomes.into_iter().collect()
}

pub const SUMMARY_HEADER: &str =
    "algorithm,rep,seed,iterations,comm,final_J,final_D,final_NMSE,final_U,exchanges_to_threshold";

/// One `summary.csv` line.
pub fn summary_line(run: &RunRecord, threshold: f64) -> String {
    let last = run.trace.last();
    let opt = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.16e}"));
    format!(
        "{},{},{},{},{},{:.16e},{:.16e},{},{:.16e},{}",
        run.label,
        run.rep,
        run.seed,
        run.trace.iterations_run,
        last.comm,
        last.j,
        last.d,
        opt(last.nmse),
        last.u,
        run.trace
            .first_below(threshold)
            .map_or("NA".to_string(), |r| r.comm.to_string()),
    )
}

pub fn trace_file_name(label: &str, rep: usize) -> String {
    format!("{label}_rep{rep:03}.csv")
}

/// Writes one trace per run, one manifest per repetition, and `summary.csv`
/// under `dir`.
pub fn write_outputs(dir: &Path, outcomes: &[RepOutcome], threshold: f64) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut summary = String::new();
    summary.push_str(SUMMARY_HEADER);
    summary.push('\n');
    for o in outcomes {
        let path = dir.join(format!("instance_rep{:03}.txt", o.rep));
        fs::write(&path, &o.manifest).map_err(io_err(&path))?;
        for r in &o.runs {
            let path = dir.join(trace_file_name(&r.label, r.rep));
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            let mut w = BufWriter::new(file);
            write_csv(&r.trace.rows, &mut w).map_err(io_err(&path))?;
            w.flush().map_err(io_err(&path))?;
            summary.push_str(&summary_line(r, threshold));
            summary.push('\n');
        }
    }
    let path = dir.join("summary.csv");
    fs::write(&path, summary).map_err(io_err(&path))
}

/// Mean exchanges-to-threshold over the repetitions that reached it, and how
/// many did, per algorithm in config order.
pub fn aggregate(cfg: &ExperimentConfig, outcomes: &[RepOutcome]) -> Vec<(String, Option<f64>, usize, f64)> {
    cfg.algorithm
        .iter()
        .map(|a| {
            let label = a.label();
            let runs: Vec<&RunRecord> = outcomes.iter().flat_map(|o| o.runs.iter()).filter(|r| r.label == label).collect();
            let hits: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.trace.first_below(cfg.run.threshold).map(|row| row.comm as f64))
                .collect();
            let mean = (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64);
            let final_j = runs.iter().map(|r| r.trace.last().j).sum::<f64>() / runs.len().max(1) as f64;
            (label, mean, hits.len(), final_j)
        })
        .collect()
}

/// The schedule of repetition 0 in the plain-text schedule format.
pub fn dump_graph(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let instance = build_instance(&cfg.problem, 0)?;
    let schedule = build_schedule(cfg, instance.problem().agent_count(), 0)?;
    Ok(write_schedule(&schedule))
}

/// Semantic checks plus a dry build of repetition 0 and its surrogates.
pub fn validate(cfg: &ExperimentConfig) -> Vec<String> {
    let mut out = cfg.check();
    if !out.is_empty() {
        return out;
    }
    let instance = match build_instance(&cfg.problem, 0) {
        Ok(i) => i,
        Err(e) => return vec![e.to_string()],
    };
    if let Err(e) = build_schedule(cfg, instance.problem().agent_count(), 0) {
        out.push(e.to_string());
    }
    for (k, a) in cfg.algorithm.iter().enumerate() {
        if let Err(e) = algorithm_for(a, &instance, cfg.problem.default_tau()) {
            out.push(format!("algorithm[{k}] ({}): {e}", a.label()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(app: &str, algorithms: &str) -> ExperimentConfig {
        let text = format!(
            r#"
name = "tiny"
[problem]
{app}
[graph]
generator = "ring"
window = 2
[run]
iterations = 30
repetitions = 2
cadence = 5
threshold = 0.5
{algorithms}
"#
        );
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert!(validate(&cfg).is_empty(), "{:?}", validate(&cfg));
        cfg
    }

    const ALL: &str = r#"
[[algorithm]]
kind = "next-pl"
step = { rule = "recursive", alpha0 = 0.1, mu = 0.01 }
[[algorithm]]
kind = "next-l"
step = { rule = "recursive", alpha0 = 0.1, mu = 0.01 }
[[algorithm]]
kind = "next-inexact"
step = { rule = "polynomial", alpha0 = 0.1, beta = 0.8 }
[[algorithm]]
kind = "dgradient"
step = { rule = "recursive", alpha0 = 0.05, mu = 0.05 }
"#;

    #[test]
    fn every_app_runs_every_algorithm() {
        for app in [
            "app = \"localization\"\nagents = 4\ntargets = 1",
            "app = \"cartography\"\nagents = 4\nbasis = 3\nchannels = 6",
            "app = \"flow_control\"\nsources = 4\nlinks = 2",
            "app = \"sparse_ml\"\nagents = 4\ndim = 6\nsparsity = 2",
        ] {
            let cfg = tiny(app, ALL);
            let out = run_all(&cfg).unwrap();
            assert_eq!(out.len(), 2);
            for o in &out {
                assert_eq!(o.runs.len(), 4);
                for r in &o.runs {
                    assert_eq!(r.trace.iterations_run, 30);
                    assert!(r.trace.last().j.is_finite());
                }
            }
        }
    }

    #[test]
    fn summary_threshold_matches_the_trace() {
        let cfg = tiny("app = \"localization\"\nagents = 4\ntargets = 1\nnoiseless = true", ALL);
        let out = run_all(&cfg).unwrap();
        for r in out.iter().flat_map(|o| &o.runs) {
            let line = summary_line(r, cfg.run.threshold);
            let last = line.rsplit(',').next().unwrap();
            match r.trace.rows.iter().find(|row| row.j <= cfg.run.threshold) {
                Some(row) => assert_eq!(last, row.comm.to_string()),
                None => assert_eq!(last, "NA"),
            }
        }
    }

    #[test]
    fn repetitions_differ_but_repeat() {
        let cfg = tiny("app = \"cartography\"\nagents = 4\nbasis = 3\nchannels = 6", ALL);
        let a = run_all(&cfg).unwrap();
        let b = run_all(&cfg).unwrap();
        assert_eq!(a[0].runs[0].trace.rows, b[0].runs[0].trace.rows);
        assert_ne!(a[0].runs[0].trace.rows, a[1].runs[0].trace.rows);
        assert_eq!(a[1].runs[0].seed, 1);
    }

    #[test]
    fn graph_agent_mismatch_is_a_config_error() {
        let dir = std::env::temp_dir().join(format!("next-cli-graph-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let file = dir.join("g.txt");
        let schedule = generate_b_connected_schedule(&Digraph::ring(3).unwrap(), 1, 1, 0).unwrap();
        fs::write(&file, write_schedule(&schedule)).unwrap();
        let mut cfg = tiny("app = \"localization\"\nagents = 4\ntargets = 1", ALL);
        cfg.graph.generator = Generator::File;
        cfg.graph.path = Some(file);
        let e = run_repetition(&cfg, 0).err().unwrap();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("3 agents"), "{e}");
        fs::remove_dir_all(dir).unwrap();
    }
}
