use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::Metric;
use crate::solvers::{default_extra_grid, AdolfSchedule, AlgorithmSpec, StopRule};
use crate::stepsize::{GrowthPolicy, Mode, SigmaSchedule, StepsizeParams};
use crate::{Error, Result};

/// Offsets added to the master seed when a component seed is not given.
pub const GRAPH_SEED_OFFSET: u64 = 1;
pub const DATA_SEED_OFFSET: u64 = 2;
pub const INIT_SEED_OFFSET: u64 = 3;
/// Seeds must fit a signed 64-bit integer after the offsets are added.
pub const MAX_SEED: u64 = i64::MAX as u64 - INIT_SEED_OFFSET;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Ridge { m: usize, n: usize, d: usize, seed: u64 },
    Logistic { m: usize, n: usize, d: usize, seed: u64, noise: f64 },
    Mnist { images: PathBuf, labels: PathBuf, digits: (u8, u8), m: usize, seed: u64 },
}

impl ProblemSpec {
    pub fn m(&self) -> usize {
        match *self {
            ProblemSpec::Ridge { m, .. } | ProblemSpec::Logistic { m, .. } | ProblemSpec::Mnist { m, .. } => m,
        }
    }

    pub fn is_strongly_convex(&self) -> bool {
        matches!(self, ProblemSpec::Ridge { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::Ridge { .. } => "ridge",
            ProblemSpec::Logistic { .. } => "logistic",
            ProblemSpec::Mnist { .. } => "mnist",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphSpec {
    Line { m: usize },
    Ring { m: usize },
    Complete { m: usize },
    ErdosRenyi { m: usize, p: f64, seed: u64 },
}

impl GraphSpec {
    pub fn m(&self) -> usize {
        match *self {
            GraphSpec::Line { m } | GraphSpec::Ring { m } | GraphSpec::Complete { m } | GraphSpec::ErdosRenyi { m, .. } => m,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GraphSpec::Line { .. } => "line",
            GraphSpec::Ring { .. } => "ring",
            GraphSpec::Complete { .. } => "complete",
            GraphSpec::ErdosRenyi { .. } => "erdos_renyi",
        }
    }
}

/// EXTRA stepsize: fixed, or the best point of a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtraStep {
    Fixed(f64),
    Grid(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlgorithmConfig {
    Adolf(AdolfSchedule),
    AdolfLocal(StepsizeParams),
    Extra(ExtraStep),
    CondatVu { alpha: f64, sigma: f64, gamma: f64 },
}

impl AlgorithmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::Adolf(_) => "adolf",
            AlgorithmConfig::AdolfLocal(_) => "adolf_local",
            AlgorithmConfig::Extra(_) => "extra",
            AlgorithmConfig::CondatVu { .. } => "condat_vu",
        }
    }

    /// The engine spec, or `None` for an EXTRA grid search.
    pub fn spec(&self) -> Option<AlgorithmSpec> {
        match self {
            AlgorithmConfig::Adolf(s) => Some(AlgorithmSpec::Adolf(*s)),
            AlgorithmConfig::AdolfLocal(p) => Some(AlgorithmSpec::AdolfLocal(*p)),
            AlgorithmConfig::Extra(ExtraStep::Fixed(alpha)) => Some(AlgorithmSpec::Extra { alpha: *alpha }),
            AlgorithmConfig::Extra(ExtraStep::Grid(_)) => None,
            AlgorithmConfig::CondatVu { alpha, sigma, gamma } => {
                Some(AlgorithmSpec::CondatVu { alpha: *alpha, sigma: *sigma, gamma: *gamma })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Gaussian,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub kind: InitKind,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopSpec {
    pub max_iter: usize,
    pub metric: Metric,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsSpec {
    /// Cadence of the costly metrics.
    pub every: usize,
    /// Whether to compute the reference saddle point.
    pub saddle: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub name: String,
    pub dir: Option<PathBuf>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub problem: ProblemSpec,
    pub graph: GraphSpec,
    pub c: f64,
    pub algorithm: AlgorithmConfig,
    pub init: InitSpec,
    pub stop: StopSpec,
    pub diagnostics: DiagnosticsSpec,
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn stop_rule(&self) -> StopRule {
        let rule = StopRule::budget(self.stop.max_iter).every(self.diagnostics.every);
        match self.stop.threshold {
            Some(t) => rule.with_target(self.stop.metric, t),
            None => rule,
        }
    }

    /// Parses and resolves a config document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.resolve()
    }

    /// The resolved config with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(&RawConfig::from(self)).expect("config serializes")
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_toml(&text)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    problem: RawProblem,
    graph: RawGraph,
    #[serde(default)]
    gossip: RawGossip,
    algorithm: RawAlgorithm,
    #[serde(default)]
    init: RawInit,
    #[serde(default)]
    stop: RawStop,
    #[serde(default)]
    diagnostics: RawDiagnostics,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    images: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    digits: Option<[u8; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGossip {
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlgorithm {
    kind: String,
    /// `convex`, `strongly_convex` or (ADOLF only) `fixed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    growth: Option<GrowthPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<InitKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStop {
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metric: Option<Metric>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    saddle: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<PathBuf>,
}

fn bad(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("must be positive and finite, got {v}")))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(bad(key, "must be at least 1"))
    }
}

/// Rejects keys that make no sense for the selected kind.
fn forbid<T>(section: &str, kind: &str, fields: &[(&str, &Option<T>)]) -> Result<()> {
    match fields.iter().find(|(_, v)| v.is_some()) {
        Some((name, _)) => Err(bad(&format!("{section}.{name}"), format!("not used by {section} kind \"{kind}\""))),
        None => Ok(()),
    }
}

impl RawConfig {
    fn resolve(self) -> Result<ExperimentConfig> {
        let seed = self.seed.unwrap_or(0);
        if seed > MAX_SEED {
            return Err(bad("seed", format!("must be at most {MAX_SEED}")));
        }
        let problem = self.problem.resolve(seed)?;
        let graph = self.graph.resolve(seed, problem.m())?;
        let c = self.gossip.c.unwrap_or(crate::topology::DEFAULT_SHIFT);
        if !(c > 0.0 && c < 0.5) {
            return Err(bad("gossip.c", format!("c must lie in (0, 1/2), got {c}")));
        }
        let algorithm = self.algorithm.resolve(&problem)?;
        let init = InitSpec {
            kind: self.init.kind.unwrap_or(InitKind::Gaussian),
            seed: self.init.seed.unwrap_or(seed.saturating_add(INIT_SEED_OFFSET)),
        };
        let default_metric = if problem.is_strongly_convex() { Metric::DistanceSq } else { Metric::ObjectiveGap };
        let stop = StopSpec {
            max_iter: self.stop.max_iter.unwrap_or(1000),
            metric: self.stop.metric.unwrap_or(default_metric),
            threshold: self.stop.threshold,
        };
        if let Some(t) = stop.threshold {
            positive("stop.threshold", t)?;
        }
        let diagnostics = DiagnosticsSpec {
            every: at_least_one("diagnostics.every", self.diagnostics.every.unwrap_or(1))?,
            saddle: self.diagnostics.saddle.unwrap_or(true),
        };
        if stop.metric.needs_saddle() && !diagnostics.saddle {
            return Err(bad("stop.metric", format!("{} needs diagnostics.saddle = true", stop.metric.name())));
        }
        if matches!(algorithm, AlgorithmConfig::Extra(ExtraStep::Grid(_))) && stop.threshold.is_none() {
            return Err(bad("stop.threshold", "an EXTRA grid search ranks stepsizes by time to a threshold"));
        }
        let output = OutputSpec {
            name: self.output.name.unwrap_or_else(|| algorithm.name().to_string()),
            dir: self.output.dir,
        };
        if output.name.is_empty() || output.name.contains(['/', '\\']) {
            return Err(bad("output.name", format!("must be a plain file stem, got {:?}", output.name)));
        }
        Ok(ExperimentConfig { seed, problem, graph, c, algorithm, init, stop, diagnostics, output })
    }
}

impl RawProblem {
    fn resolve(self, seed: u64) -> Result<ProblemSpec> {
        let data_seed = self.seed.unwrap_or(seed.saturating_add(DATA_SEED_OFFSET));
        let m = at_least_one("problem.m", self.m.unwrap_or(20))?;
        match self.kind.as_str() {
            "ridge" => {
                forbid("problem", "ridge", &[("noise", &self.noise)])?;
                forbid("problem", "ridge", &[("images", &self.images), ("labels", &self.labels)])?;
                forbid("problem", "ridge", &[("digits", &self.digits)])?;
                Ok(ProblemSpec::Ridge {
                    m,
                    n: at_least_one("problem.n", self.n.unwrap_or(20))?,
                    d: at_least_one("problem.d", self.d.unwrap_or(500))?,
                    seed: data_seed,
                })
            }
            "logistic" => {
                forbid("problem", "logistic", &[("images", &self.images), ("labels", &self.labels)])?;
                forbid("problem", "logistic", &[("digits", &self.digits)])?;
                let noise = self.noise.unwrap_or(0.1);
                if !(0.0..=0.5).contains(&noise) {
                    return Err(bad("problem.noise", format!("must lie in [0, 1/2], got {noise}")));
                }
                Ok(ProblemSpec::Logistic {
                    m,
                    n: at_least_one("problem.n", self.n.unwrap_or(100))?,
                    d: at_least_one("problem.d", self.d.unwrap_or(50))?,
                    seed: data_seed,
                    noise,
                })
            }
            "mnist" => {
                forbid("problem", "mnist", &[("n", &self.n), ("d", &self.d)])?;
                forbid("problem", "mnist", &[("noise", &self.noise)])?;
                let images = self.images.ok_or_else(|| bad("problem.images", "required for mnist"))?;
                let labels = self.labels.ok_or_else(|| bad("problem.labels", "required for mnist"))?;
                let [p, q] = self.digits.unwrap_or([0, 1]);
                if p > 9 || q > 9 || p == q {
                    return Err(bad("problem.digits", format!("need two distinct digits, got [{p}, {q}]")));
                }
                Ok(ProblemSpec::Mnist { images, labels, digits: (p, q), m, seed: data_seed })
            }
            other => Err(bad("problem.kind", format!("unknown problem {other:?} (ridge, logistic, mnist)"))),
        }
    }
}

impl RawGraph {
    fn resolve(self, seed: u64, problem_m: usize) -> Result<GraphSpec> {
        let m = self.m.unwrap_or(problem_m);
        if m != problem_m {
            return Err(bad("graph.m", format!("graph has {m} agents but the problem has {problem_m}")));
        }
        let spec = match self.kind.as_str() {
            "erdos_renyi" => {
                let p = self.p.ok_or_else(|| bad("graph.p", "required for erdos_renyi"))?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(bad("graph.p", format!("must lie in (0, 1], got {p}")));
                }
                return Ok(GraphSpec::ErdosRenyi { m, p, seed: self.seed.unwrap_or(seed.saturating_add(GRAPH_SEED_OFFSET)) });
            }
            "line" => GraphSpec::Line { m },
            "ring" => GraphSpec::Ring { m },
            "complete" => GraphSpec::Complete { m },
            other => return Err(bad("graph.kind", format!("unknown graph {other:?} (line, ring, complete, erdos_renyi)"))),
        };
        forbid("graph", spec.kind(), &[("p", &self.p)])?;
        forbid("graph", spec.kind(), &[("seed", &self.seed)])?;
        Ok(spec)
    }
}

impl RawAlgorithm {
    fn resolve(self, problem: &ProblemSpec) -> Result<AlgorithmConfig> {
        let kind = self.kind.clone();
        match kind.as_str() {
            "adolf" => {
                forbid("algorithm", "adolf", &[("eta", &self.eta)])?;
                forbid("algorithm", "adolf", &[("grid", &self.grid)])?;
                if self.schedule.as_deref() == Some("fixed") {
                    forbid("algorithm", "adolf", &[("c1", &self.c1), ("c2", &self.c2), ("alpha0", &self.alpha0)])?;
                    forbid("algorithm", "adolf", &[("growth", &self.growth)])?;
                    let alpha = positive("algorithm.alpha", self.alpha.ok_or_else(|| bad("algorithm.alpha", "required for a fixed schedule"))?)?;
                    let schedule = AdolfSchedule::Fixed {
                        alpha,
                        sigma: positive("algorithm.sigma", self.sigma.unwrap_or(1.0))?,
                        gamma: positive("algorithm.gamma", self.gamma.unwrap_or(1.0))?,
                    };
                    return Ok(AlgorithmConfig::Adolf(schedule));
                }
                forbid("algorithm", "adolf", &[("alpha", &self.alpha), ("gamma", &self.gamma)])?;
                let params = self.stepsize_params(problem, false)?;
                Ok(AlgorithmConfig::Adolf(AdolfSchedule::Adaptive(params)))
            }
            "adolf_local" => {
                forbid("algorithm", "adolf_local", &[("alpha", &self.alpha), ("gamma", &self.gamma)])?;
                forbid("algorithm", "adolf_local", &[("grid", &self.grid)])?;
                Ok(AlgorithmConfig::AdolfLocal(self.stepsize_params(problem, true)?))
            }
            "extra" => {
                forbid("algorithm", "extra", &[("c1", &self.c1), ("c2", &self.c2), ("alpha0", &self.alpha0), ("eta", &self.eta)])?;
                forbid("algorithm", "extra", &[("sigma", &self.sigma), ("gamma", &self.gamma)])?;
                forbid("algorithm", "extra", &[("schedule", &self.schedule)])?;
                forbid("algorithm", "extra", &[("growth", &self.growth)])?;
                match (self.alpha, self.grid) {
                    (Some(_), Some(_)) => Err(bad("algorithm.grid", "give either alpha or grid, not both")),
                    (Some(a), None) => Ok(AlgorithmConfig::Extra(ExtraStep::Fixed(positive("algorithm.alpha", a)?))),
                    (None, grid) => {
                        let grid = grid.unwrap_or_else(default_extra_grid);
                        if grid.is_empty() {
                            return Err(bad("algorithm.grid", "must not be empty"));
                        }
                        for a in &grid {
                            positive("algorithm.grid", *a)?;
                        }
                        Ok(AlgorithmConfig::Extra(ExtraStep::Grid(grid)))
                    }
                }
            }
            "condat_vu" => {
                forbid("algorithm", "condat_vu", &[("c1", &self.c1), ("c2", &self.c2), ("alpha0", &self.alpha0), ("eta", &self.eta)])?;
                forbid("algorithm", "condat_vu", &[("schedule", &self.schedule)])?;
                forbid("algorithm", "condat_vu", &[("growth", &self.growth)])?;
                forbid("algorithm", "condat_vu", &[("grid", &self.grid)])?;
                let alpha = self.alpha.ok_or_else(|| bad("algorithm.alpha", "required for condat_vu"))?;
                Ok(AlgorithmConfig::CondatVu {
                    alpha: positive("algorithm.alpha", alpha)?,
                    sigma: positive("algorithm.sigma", self.sigma.unwrap_or(1.0))?,
                    gamma: positive("algorithm.gamma", self.gamma.unwrap_or(1.0))?,
                })
            }
            other => Err(bad("algorithm.kind", format!("unknown algorithm {other:?} (adolf, adolf_local, extra, condat_vu)"))),
        }
    }

    fn stepsize_params(&self, problem: &ProblemSpec, local: bool) -> Result<StepsizeParams> {
        let strongly_convex = match self.schedule.as_deref() {
            None => problem.is_strongly_convex(),
            Some("convex") => false,
            Some("strongly_convex") => true,
            Some(other) => {
                let allowed = if local { "convex, strongly_convex" } else { "convex, strongly_convex, fixed" };
                return Err(bad("algorithm.schedule", format!("unknown schedule {other:?} ({allowed})")));
            }
        };
        let base = match (local, strongly_convex) {
            (false, false) => StepsizeParams::convex(),
            (false, true) => StepsizeParams::strongly_convex(),
            (true, false) => StepsizeParams { sigma: SigmaSchedule::Constant { value: 1.0 }, ..StepsizeParams::local() },
            (true, true) => StepsizeParams::local_strongly_convex(),
        };
        let c1 = self.c1.unwrap_or(base.c1);
        let c2 = self.c2.unwrap_or(base.c2);
        for (key, v) in [("algorithm.c1", c1), ("algorithm.c2", c2)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(bad(key, format!("must lie in (0, 1], got {v}")));
            }
        }
        let sigma = match (base.sigma, self.sigma) {
            (SigmaSchedule::Constant { value }, s) => SigmaSchedule::Constant { value: positive("algorithm.sigma", s.unwrap_or(value))? },
            (SigmaSchedule::InverseAlphaSq { sigma }, s) => {
                let s = s.unwrap_or(sigma);
                if !(s > 0.0 && s < c1 / 2.0) {
                    return Err(bad("algorithm.sigma", format!("sigma must lie in (0, c1/2) = (0, {}) in strongly-convex mode, got {s}", c1 / 2.0)));
                }
                SigmaSchedule::InverseAlphaSq { sigma: s }
            }
        };
        let eta = self.eta.unwrap_or(base.eta);
        if local && !(eta > 0.0 && eta < 1.0) {
            return Err(bad("algorithm.eta", format!("must lie in (0, 1), got {eta}")));
        }
        let growth = self.growth.unwrap_or(base.growth);
        growth.validate().map_err(|e| bad("algorithm.growth", e))?;
        if local && !matches!(growth, GrowthPolicy::AdditiveSummable { .. }) {
            return Err(bad("algorithm.growth", "adolf_local needs an additive summable growth policy"));
        }
        let params = StepsizeParams {
            c1,
            c2,
            alpha0: positive("algorithm.alpha0", self.alpha0.unwrap_or(base.alpha0))?,
            eta,
            growth,
            sigma,
            ..base
        };
        params.validate().map_err(|e| bad("algorithm", e))?;
        Ok(params)
    }
}

impl From<&ExperimentConfig> for RawConfig {
    fn from(c: &ExperimentConfig) -> Self {
        let problem = match &c.problem {
            ProblemSpec::Ridge { m, n, d, seed } => RawProblem {
                kind: "ridge".into(),
                m: Some(*m),
                n: Some(*n),
                d: Some(*d),
                seed: Some(*seed),
                ..Default::default()
            },
            ProblemSpec::Logistic { m, n, d, seed, noise } => RawProblem {
                kind: "logistic".into(),
                m: Some(*m),
                n: Some(*n),
                d: Some(*d),
                seed: Some(*seed),
                noise: Some(*noise),
                ..Default::default()
            },
            ProblemSpec::Mnist { images, labels, digits, m, seed } => RawProblem {
                kind: "mnist".into(),
                m: Some(*m),
                seed: Some(*seed),
                images: Some(images.clone()),
                labels: Some(labels.clone()),
                digits: Some([digits.0, digits.1]),
                ..Default::default()
            },
        };
        let graph = match c.graph {
            GraphSpec::ErdosRenyi { m, p, seed } => RawGraph { kind: "erdos_renyi".into(), m: Some(m), p: Some(p), seed: Some(seed) },
            g => RawGraph { kind: g.kind().into(), m: Some(g.m()), p: None, seed: None },
        };
        let mut algorithm = RawAlgorithm { kind: c.algorithm.name().into(), ..Default::default() };
        match &c.algorithm {
            AlgorithmConfig::Adolf(AdolfSchedule::Fixed { alpha, sigma, gamma })
            | AlgorithmConfig::CondatVu { alpha, sigma, gamma } => {
                if matches!(c.algorithm, AlgorithmConfig::Adolf(_)) {
                    algorithm.schedule = Some("fixed".into());
                }
                algorithm.alpha = Some(*alpha);
                algorithm.sigma = Some(*sigma);
                algorithm.gamma = Some(*gamma);
            }
            AlgorithmConfig::Adolf(AdolfSchedule::Adaptive(p)) | AlgorithmConfig::AdolfLocal(p) => {
                let (schedule, sigma) = match p.sigma {
                    SigmaSchedule::Constant { value } => ("convex", value),
                    SigmaSchedule::InverseAlphaSq { sigma } => ("strongly_convex", sigma),
                };
                algorithm.schedule = Some(schedule.into());
                algorithm.c1 = Some(p.c1);
                algorithm.c2 = Some(p.c2);
                algorithm.alpha0 = Some(p.alpha0);
                algorithm.sigma = Some(sigma);
                algorithm.growth = Some(p.growth);
                if p.mode == Mode::Local {
                    algorithm.eta = Some(p.eta);
                }
            }
            AlgorithmConfig::Extra(ExtraStep::Fixed(a)) => algorithm.alpha = Some(*a),
            AlgorithmConfig::Extra(ExtraStep::Grid(g)) => algorithm.grid = Some(g.clone()),
        }
        RawConfig {
            seed: Some(c.seed),
            problem,
            graph,
            gossip: RawGossip { c: Some(c.c) },
            algorithm,
            init: RawInit { kind: Some(c.init.kind), seed: Some(c.init.seed) },
            stop: RawStop { max_iter: Some(c.stop.max_iter), metric: Some(c.stop.metric), threshold: c.stop.threshold },
            diagnostics: RawDiagnostics { every: Some(c.diagnostics.every), saddle: Some(c.diagnostics.saddle) },
            output: RawOutput { name: Some(c.output.name.clone()), dir: c.output.dir.clone() },
        }
    }
}
