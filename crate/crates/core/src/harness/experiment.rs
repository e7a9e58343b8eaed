use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::config::{AlgorithmConfig, ExperimentConfig, ExtraStep, GraphSpec, InitKind, ProblemSpec};
use crate::diagnostics::{saddle_from_minimizer, LaplacianOps, SaddlePoint};
use crate::objectives::{load_mnist_partition, reference_minimizer, synth_logistic, synth_ridge, ProblemInstance};
use crate::solvers::{extra_grid_search, run, RunContext, RunStatus, Trace};
use crate::topology::{
    make_complete_graph, make_erdos_renyi, make_line_graph, make_ring_graph, metropolis_hastings, psd_shift, Graph,
    GossipMatrix,
};
use crate::{Error, Mat, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ADOLF_OUT_DIR";

const REFERENCE_TOL: f64 = 1e-10;
const REFERENCE_MAX_ITER: usize = 200_000;

/// `$ADOLF_OUT_DIR`, or `adolf-out` in the working directory.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("adolf-out"), PathBuf::from)
}

pub fn build_problem(spec: &ProblemSpec) -> Result<ProblemInstance> {
    match spec {
        ProblemSpec::Ridge { m, n, d, seed } => synth_ridge(*m, *n, *d, *seed),
        ProblemSpec::Logistic { m, n, d, seed, noise } => synth_logistic(*m, *n, *d, *seed, *noise),
        ProblemSpec::Mnist { images, labels, digits, m, seed } => {
            load_mnist_partition(images, labels, *m, *digits, *seed).map_err(|e| match e {
                Error::Io(io) => Error::Data(format!("cannot read MNIST files: {io}")),
                other => other,
            })
        }
    }
}

pub fn build_graph(spec: &GraphSpec) -> Result<Graph> {
    match *spec {
        GraphSpec::Line { m } => make_line_graph(m),
        GraphSpec::Ring { m } => make_ring_graph(m),
        GraphSpec::Complete { m } => make_complete_graph(m),
        GraphSpec::ErdosRenyi { m, p, seed } => make_erdos_renyi(m, p, seed),
    }
}

pub fn initial_point(kind: InitKind, m: usize, d: usize, seed: u64) -> Mat {
    match kind {
        InitKind::Zeros => Mat::zeros(m, d),
        InitKind::Gaussian => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Mat::from_fn(m, d, |_, _| StandardNormal.sample(&mut rng))
        }
    }
}

/// Everything a run needs besides the algorithm.
#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: ProblemInstance,
    pub graph: Graph,
    /// Metropolis–Hastings weights with the positive-definite shift applied.
    pub gossip: GossipMatrix,
    pub ops: LaplacianOps,
    pub saddle: Option<SaddlePoint>,
    /// Gradient norm of the reference minimizer when the solve stopped short.
    pub reference_residual: Option<f64>,
    pub x0: Mat,
}

impl Setup {
    pub fn context(&self, config: &ExperimentConfig) -> RunContext<'_> {
        RunContext {
            ops: &self.ops,
            saddle: if config.diagnostics.saddle { self.saddle.as_ref() } else { None },
            x0: &self.x0,
            x_minus1: None,
            stop: config.stop_rule(),
        }
    }
}

/// Builds graph, gossip, problem, initial point and (if requested) the saddle.
pub fn build_setup(config: &ExperimentConfig) -> Result<Setup> {
    let graph = build_graph(&config.graph)?;
    let gossip = psd_shift(&metropolis_hastings(&graph), config.c)?;
    let problem = build_problem(&config.problem)?;
    if problem.m() != graph.m() {
        return Err(Error::Config(format!("problem has {} agents, graph has {}", problem.m(), graph.m())));
    }
    let ops = LaplacianOps::new(gossip.w().expect("shifted gossip"))?;
    let (saddle, reference_residual) = if config.diagnostics.saddle {
        let (s, r) = reference_saddle(&problem, &ops)?;
        (Some(s), r)
    } else {
        (None, None)
    };
    let x0 = initial_point(config.init.kind, problem.m(), problem.d(), config.init.seed);
    Ok(Setup { problem, graph, gossip, ops, saddle, reference_residual, x0 })
}

/// Reference saddle. If the centralized solve stalls (separable logistic data
/// has no finite minimizer) the best point found is used and its gradient
/// norm is reported.
pub fn reference_saddle(problem: &ProblemInstance, ops: &LaplacianOps) -> Result<(SaddlePoint, Option<f64>)> {
    match reference_minimizer(problem, REFERENCE_TOL, REFERENCE_MAX_ITER) {
        Ok(x) => Ok((saddle_from_minimizer(problem, ops, x)?, None)),
        Err(Error::NotConverged { grad_norm, best, .. }) => Ok((saddle_from_minimizer(problem, ops, best)?, Some(grad_norm))),
        Err(e) => Err(e),
    }
}

/// A finished run, plus the grid sweep when EXTRA was tuned.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub trace: Trace,
    pub extra_alpha: Option<f64>,
    pub sweep: Option<Vec<(f64, RunStatus, Option<f64>)>>,
}

pub fn execute(config: &ExperimentConfig, setup: &Setup) -> Result<Outcome> {
    let ctx = setup.context(config);
    match &config.algorithm {
        AlgorithmConfig::Extra(ExtraStep::Grid(grid)) => {
            let out = extra_grid_search(&setup.problem, &setup.gossip, grid, &ctx)?;
            Ok(Outcome { trace: out.trace, extra_alpha: Some(out.best_alpha), sweep: Some(out.sweep) })
        }
        other => {
            let spec = other.spec().expect("non-grid algorithm");
            let trace = run(&spec, &setup.problem, &setup.gossip, &ctx)?;
            let extra_alpha = match other {
                AlgorithmConfig::Extra(ExtraStep::Fixed(a)) => Some(*a),
                _ => None,
            };
            Ok(Outcome { trace, extra_alpha, sweep: None })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputEntry {
    pub kind: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub name: String,
    pub algorithm: String,
    /// The resolved config, as a config document.
    pub config: String,
    pub version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<OutputEntry>,
    pub status: String,
    pub status_detail: Option<String>,
    pub iterations: usize,
    pub comm_vector: u64,
    pub comm_scalar: u64,
    /// First iteration from which all agents share one stepsize.
    pub consensus_from: usize,
    pub terminal_metric: Option<f64>,
    pub extra_alpha: Option<f64>,
    pub reference_residual: Option<f64>,
}

impl RunManifest {
    pub fn diverged(&self) -> bool {
        self.status == "diverged"
    }

    /// 0 for converged or budget-exhausted runs.
    pub fn exit_code(&self) -> i32 {
        if self.diverged() {
            Error::Diverged { k: 0, reason: String::new() }.exit_code()
        } else {
            0
        }
    }
}

pub(crate) fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file_name = path.file_name().ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.{}.tmp", file_name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn sweep_csv(sweep: &[(f64, RunStatus, Option<f64>)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha", "status", "terminal"]).map_err(|e| Error::Format(e.to_string()))?;
    for (alpha, status, terminal) in sweep {
        let terminal = terminal.map(crate::diagnostics::format_float).unwrap_or_default();
        w.write_record([crate::diagnostics::format_float(*alpha), status.label().to_string(), terminal])
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// Writes the trace CSV (and the grid sweep, if any) plus a JSON manifest.
pub fn write_outputs(config: &ExperimentConfig, setup: &Setup, outcome: &Outcome, out_dir: &Path, started: u128) -> Result<RunManifest> {
    let name = &config.output.name;
    let trace_path = out_dir.join(format!("{name}.csv"));
    write_atomic(&trace_path, &outcome.trace.to_csv()?)?;
    let mut outputs = vec![OutputEntry { kind: "trace".into(), path: trace_path }];
    if let Some(sweep) = &outcome.sweep {
        let path = out_dir.join(format!("{name}.grid.csv"));
        write_atomic(&path, &sweep_csv(sweep)?)?;
        outputs.push(OutputEntry { kind: "grid".into(), path });
    }
    let trace = &outcome.trace;
    let last = trace.records.last();
    let manifest = RunManifest {
        name: name.clone(),
        algorithm: config.algorithm.name().into(),
        config: config.to_toml(),
        version: env!("CARGO_PKG_VERSION").into(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        outputs,
        status: trace.status.label().into(),
        status_detail: match &trace.status {
            RunStatus::Diverged { k, reason } => Some(format!("iteration {k}: {reason}")),
            _ => None,
        },
        iterations: last.map_or(0, |r| r.k),
        comm_vector: last.map_or(0, |r| r.comm_vector),
        comm_scalar: last.map_or(0, |r| r.comm_scalar),
        consensus_from: trace.consensus_from(),
        terminal_metric: trace.terminal(config.stop.metric),
        extra_alpha: outcome.extra_alpha,
        reference_residual: setup.reference_residual,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(&out_dir.join(format!("{name}.manifest.json")), &json)?;
    Ok(manifest)
}

/// Builds everything, runs the algorithm and writes `<name>.csv` and
/// `<name>.manifest.json` under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    let started = now_ms();
    let setup = build_setup(config)?;
    let outcome = execute(config, &setup)?;
    write_outputs(config, &setup, &outcome, out_dir, started)
}
