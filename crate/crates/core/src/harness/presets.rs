use std::path::{Path, PathBuf};

use super::compare::{compare, Comparison};
use super::config::{
    AlgorithmConfig, DiagnosticsSpec, ExperimentConfig, ExtraStep, GraphSpec, InitKind, InitSpec, OutputSpec, ProblemSpec,
    StopSpec, DATA_SEED_OFFSET, GRAPH_SEED_OFFSET, INIT_SEED_OFFSET,
};
use crate::diagnostics::Metric;
use crate::solvers::{default_extra_grid, AdolfSchedule};
use crate::stepsize::{GrowthPolicy, SigmaSchedule, StepsizeParams};
use crate::topology::DEFAULT_SHIFT;
use crate::{Error, Result};

pub const PRESET_NAMES: [&str; 6] = ["fig1_line", "fig1_er01", "fig1_er09", "fig2_line", "fig2_er01", "fig2_er09"];

const AGENTS: usize = 20;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PresetOptions {
    /// `(images, labels)` IDX files for the logistic presets.
    pub mnist: Option<(PathBuf, PathBuf)>,
    /// Use a synthetic logistic instance when no MNIST files are given.
    pub synthetic_logistic: bool,
    pub seed: u64,
    /// Overrides the preset iteration budget.
    pub max_iter: Option<usize>,
}

/// The ADOLF, ADOLF-local and grid-tuned EXTRA configs of one figure panel.
pub fn figure_preset(name: &str, opts: &PresetOptions) -> Result<Vec<ExperimentConfig>> {
    let (figure, graph) = name
        .split_once('_')
        .filter(|_| PRESET_NAMES.contains(&name))
        .ok_or_else(|| Error::Config(format!("unknown preset {name:?}; expected one of {}", PRESET_NAMES.join(", "))))?;
    let seed = opts.seed;
    let graph = match graph {
        "line" => GraphSpec::Line { m: AGENTS },
        "er01" => GraphSpec::ErdosRenyi { m: AGENTS, p: 0.1, seed: seed + GRAPH_SEED_OFFSET },
        _ => GraphSpec::ErdosRenyi { m: AGENTS, p: 0.9, seed: seed + GRAPH_SEED_OFFSET },
    };
    let data_seed = seed + DATA_SEED_OFFSET;
    let (problem, metric, threshold, max_iter, algorithms) = if figure == "fig1" {
        let problem = match (&opts.mnist, opts.synthetic_logistic) {
            (Some((images, labels)), _) => {
                ProblemSpec::Mnist { images: images.clone(), labels: labels.clone(), digits: (0, 1), m: AGENTS, seed: data_seed }
            }
            (None, true) => ProblemSpec::Logistic { m: AGENTS, n: 100, d: 50, seed: data_seed, noise: 0.1 },
            (None, false) => {
                return Err(Error::Data(format!(
                    "{name} needs MNIST files (images and labels) or the synthetic logistic fallback"
                )))
            }
        };
        let adolf = StepsizeParams { growth: GrowthPolicy::Unbounded, ..StepsizeParams::convex() };
        let local = StepsizeParams { sigma: SigmaSchedule::Constant { value: 1.0 }, ..StepsizeParams::local() };
        (problem, Metric::ObjectiveGap, 1e-8, 3000, (adolf, local))
    } else {
        let problem = ProblemSpec::Ridge { m: AGENTS, n: 20, d: 500, seed: data_seed };
        let adolf = StepsizeParams { growth: GrowthPolicy::ratio_ten(), ..StepsizeParams::strongly_convex() };
        (problem, Metric::DistanceSq, 1e-8, 5000, (adolf, StepsizeParams::local_strongly_convex()))
    };
    let base = |algorithm: AlgorithmConfig| ExperimentConfig {
        seed,
        problem: problem.clone(),
        graph,
        c: DEFAULT_SHIFT,
        output: OutputSpec { name: algorithm.name().into(), dir: None },
        algorithm,
        init: InitSpec { kind: InitKind::Gaussian, seed: seed + INIT_SEED_OFFSET },
        stop: StopSpec { max_iter: opts.max_iter.unwrap_or(max_iter), metric, threshold: Some(threshold) },
        diagnostics: DiagnosticsSpec { every: 10, saddle: true },
    };
    Ok(vec![
        base(AlgorithmConfig::Adolf(AdolfSchedule::Adaptive(algorithms.0))),
        base(AlgorithmConfig::AdolfLocal(algorithms.1)),
        base(AlgorithmConfig::Extra(ExtraStep::Grid(default_extra_grid()))),
    ])
}

/// Runs a preset as a comparison under `out_dir/<name>`.
pub fn run_preset(name: &str, opts: &PresetOptions, out_dir: &Path) -> Result<Comparison> {
    let configs = figure_preset(name, opts)?;
    compare(&configs, &out_dir.join(name), None)
}
