use rayon::prelude::*;

use super::{Adolf, AdolfLocal, AdolfSchedule, CondatVu, Extra, Solver, StepInfo};
use crate::diagnostics::{
    lyapunov, merit, objective_gap, shadow_dual_step, write_trace_csv, ErgodicAccumulator, LaplacianOps,
    LyapunovParams, Metric, RestrictedConstants, SaddlePoint, TraceRecord,
};
use crate::objectives::ProblemInstance;
use crate::stepsize::StepsizeParams;
use crate::topology::GossipMatrix;
use crate::{Error, Mat, Result};

/// Engine selection with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlgorithmSpec {
    Adolf(AdolfSchedule),
    AdolfLocal(StepsizeParams),
    Extra { alpha: f64 },
    CondatVu { alpha: f64, sigma: f64, gamma: f64 },
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::Adolf(_) => "adolf",
            AlgorithmSpec::AdolfLocal(_) => "adolf_local",
            AlgorithmSpec::Extra { .. } => "extra",
            AlgorithmSpec::CondatVu { .. } => "condat_vu",
        }
    }
}

/// Iteration budget plus an optional threshold on a metric, with costly
/// diagnostics evaluated every `every` iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_iter: usize,
    pub target: Option<(Metric, f64)>,
    pub every: usize,
}

impl StopRule {
    pub fn budget(max_iter: usize) -> Self {
        StopRule { max_iter, target: None, every: 1 }
    }

    pub fn with_target(self, metric: Metric, threshold: f64) -> Self {
        StopRule { target: Some((metric, threshold)), ..self }
    }

    pub fn every(self, every: usize) -> Self {
        StopRule { every: every.max(1), ..self }
    }
}

/// Inputs shared by every run on one problem and graph.
#[derive(Debug, Clone, Copy)]
pub struct RunContext<'a> {
    pub ops: &'a LaplacianOps,
    pub saddle: Option<&'a SaddlePoint>,
    pub x0: &'a Mat,
    pub x_minus1: Option<&'a Mat>,
    pub stop: StopRule,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Converged,
    Budget,
    Diverged { k: usize, reason: String },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::Budget => "budget",
            RunStatus::Diverged { .. } => "diverged",
        }
    }
}

/// Worst observed values of the structural invariants over a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InvariantReport {
    /// `max_k ‖1ᵀD^k‖ / (1 + ‖D^k‖)`.
    pub dual_colsum: f64,
    /// `max_k ‖ŁY^k − D^k‖ / (1 + ‖D^k‖)` for the shadow dual.
    pub shadow_mismatch: Option<f64>,
    pub gamma_max: f64,
    /// `max_k (V^{k+1} − V^k) / (1 + V^k)` over consecutive evaluations.
    pub lyapunov_increase: Option<f64>,
    pub objective_gap_min: Option<f64>,
    pub merit_min: Option<f64>,
}

fn fold_max(slot: &mut Option<f64>, v: f64) {
    *slot = Some(slot.map_or(v, |s| s.max(v)));
}

fn fold_min(slot: &mut Option<f64>, v: f64) {
    *slot = Some(slot.map_or(v, |s| s.min(v)));
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub algorithm: &'static str,
    pub records: Vec<TraceRecord>,
    pub steps: Vec<StepInfo>,
    pub status: RunStatus,
    pub restricted: RestrictedConstants,
    pub invariants: InvariantReport,
    pub final_x: Mat,
}

impl Trace {
    /// First iteration from which every later stepsize is network-wide equal.
    pub fn consensus_from(&self) -> usize {
        self.steps.iter().rposition(|s| !s.consensual()).map_or(0, |i| self.steps[i].k + 1)
    }

    /// First row whose `metric` is at most `threshold`.
    pub fn reached(&self, metric: Metric, threshold: f64) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.metric(metric).is_some_and(|v| v <= threshold))
    }

    /// Last recorded value of `metric`.
    pub fn terminal(&self, metric: Metric) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.metric(metric))
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_trace_csv(&self.records, &mut buf)?;
        Ok(buf)
    }
}

enum Engine {
    Adolf(Adolf),
    Local(AdolfLocal),
    Extra(Extra),
    Oracle(CondatVu),
}

impl Engine {
    fn solver(&mut self) -> &mut dyn Solver {
        match self {
            Engine::Adolf(e) => e,
            Engine::Local(e) => e,
            Engine::Extra(e) => e,
            Engine::Oracle(e) => e,
        }
    }
}

fn build(algorithm: &AlgorithmSpec, gossip: &GossipMatrix, ctx: &RunContext) -> Result<Engine> {
    let x0 = ctx.x0.clone();
    let x_m1 = ctx.x_minus1.cloned();
    let shifted = || {
        gossip
            .w()
            .ok_or_else(|| Error::Config("primal-dual methods need the shifted gossip matrix".into()))
    };
    Ok(match *algorithm {
        AlgorithmSpec::Adolf(schedule) => Engine::Adolf(Adolf::new(shifted()?, x0, x_m1, schedule)?),
        AlgorithmSpec::AdolfLocal(params) => Engine::Local(AdolfLocal::new(shifted()?, x0, x_m1, params)?),
        AlgorithmSpec::Extra { alpha } => Engine::Extra(Extra::new(gossip.w_tilde(), x0, alpha)?),
        AlgorithmSpec::CondatVu { alpha, sigma, gamma } => {
            Engine::Oracle(CondatVu::new(ctx.ops.root.clone(), x0, x_m1, alpha, sigma, gamma)?)
        }
    })
}

struct Observer<'a> {
    problem: &'a ProblemInstance,
    ctx: &'a RunContext<'a>,
}

impl Observer<'_> {
    fn cheap(&self, k: usize, x: &Mat, comm: (u64, u64)) -> TraceRecord {
        TraceRecord {
            k,
            comm_vector: comm.0,
            comm_scalar: comm.1,
            consensus_err: self.ctx.ops.consensus_error(x),
            distance_sq: self.ctx.saddle.map(|s| (x - &s.x_stack).norm_squared()),
            ..Default::default()
        }
    }

    fn costly(&self, rec: &mut TraceRecord, x: &Mat, acc: &ErgodicAccumulator) -> Result<()> {
        let Some(saddle) = self.ctx.saddle else { return Ok(()) };
        rec.objective_gap = Some(objective_gap(self.problem, x, saddle)?);
        rec.merit_last = Some(merit(self.problem, x, saddle, self.ctx.ops)?);
        if let Some(avg) = acc.average() {
            rec.merit_ergodic = Some(merit(self.problem, &avg, saddle, self.ctx.ops)?);
        }
        Ok(())
    }

    fn due(&self, k: usize) -> bool {
        k % self.ctx.stop.every == 0
    }
}

fn record_invariants(report: &mut InvariantReport, rec: &TraceRecord) {
    if let Some(g) = rec.objective_gap {
        fold_min(&mut report.objective_gap_min, g);
    }
    for m in [rec.merit_last, rec.merit_ergodic].into_iter().flatten() {
        fold_min(&mut report.merit_min, m);
    }
}

/// Drives one engine from `X⁰` until the stop rule fires or the run diverges.
///
/// Row `k` of the trace describes the iterate `X^k`; its stepsize and
/// Lyapunov columns are filled once iteration `k` has selected `α^k`.
pub fn run(algorithm: &AlgorithmSpec, problem: &ProblemInstance, gossip: &GossipMatrix, ctx: &RunContext) -> Result<Trace> {
    let mut engine = build(algorithm, gossip, ctx)?;
    let obs = Observer { problem, ctx };
    let track_lyapunov = ctx.saddle.is_some() && matches!(engine, Engine::Adolf(_) | Engine::Oracle(_));
    let mut shadow_y = matches!(engine, Engine::Adolf(_)).then(|| Mat::zeros(ctx.x0.nrows(), ctx.x0.ncols()));

    let mut acc = ErgodicAccumulator::new(0);
    let mut restricted = RestrictedConstants::default();
    let mut report = InvariantReport::default();
    let mut steps = Vec::new();
    let mut last_lyapunov: Option<f64> = None;

    let solver = engine.solver();
    let mut first = obs.cheap(0, solver.x(), solver.comm());
    obs.costly(&mut first, solver.x(), &acc)?;
    record_invariants(&mut report, &first);
    let mut records = vec![first];
    let mut status = RunStatus::Budget;
    let target_hit = |rec: &TraceRecord| ctx.stop.target.is_some_and(|(m, t)| rec.metric(m).is_some_and(|v| v <= t));
    if target_hit(&records[0]) {
        status = RunStatus::Converged;
    }

    let mut k = 0;
    while k < ctx.stop.max_iter && status == RunStatus::Budget {
        let x_now = solver.x().clone();
        let x_prev = solver.x_prev().clone();
        let y_now = shadow_y.clone().or_else(|| solver.oracle_dual().cloned());
        let info = match solver.step(problem) {
            Ok(info) => info,
            Err(Error::Diverged { k, reason }) => {
                status = RunStatus::Diverged { k, reason };
                break;
            }
            Err(Error::Numeric(reason)) => {
                status = RunStatus::Diverged { k: k + 1, reason };
                break;
            }
            Err(e) => return Err(e),
        };

        let row = &mut records[k];
        row.alpha_min = Some(info.alpha_min);
        row.alpha_max = Some(info.alpha_max);
        row.gamma = Some(info.gamma_max);
        row.l_k = info.l_k;
        if track_lyapunov && obs.due(k) {
            let saddle = ctx.saddle.expect("tracked only with a saddle");
            let y = y_now.as_ref().expect("tracked only for methods with a dual");
            let params = LyapunovParams { sigma: info.sigma, gamma: info.gamma_max, alpha: info.alpha_max };
            let v = lyapunov(problem, &x_now, &x_prev, y, saddle, params)?;
            if let Some(prev) = last_lyapunov {
                fold_max(&mut report.lyapunov_increase, (v - prev) / (1.0 + prev));
            }
            last_lyapunov = Some(v);
            row.lyapunov = Some(v);
        }

        if let Some(y) = shadow_y.as_mut() {
            *y = shadow_dual_step(y, &x_now, &x_prev, info.dual_scale, info.gamma_max, ctx.ops);
            let d = solver.dual().expect("ADOLF carries a dual");
            let mismatch = (&ctx.ops.root * &*y - d).norm() / (1.0 + d.norm());
            fold_max(&mut report.shadow_mismatch, mismatch);
        }
        if let Some(d) = solver.dual() {
            report.dual_colsum = report.dual_colsum.max(d.row_sum().norm() / (1.0 + d.norm()));
        }
        report.gamma_max = report.gamma_max.max(info.gamma_max);
        if info.consensual() {
            acc.update(&x_now, info.gamma_max);
        } else {
            acc.restart(k + 1);
        }
        if let Some(l) = info.l_k {
            restricted.observe(l, info.mu_secant);
        }
        steps.push(info);

        k += 1;
        let mut rec = obs.cheap(k, solver.x(), solver.comm());
        if obs.due(k) {
            obs.costly(&mut rec, solver.x(), &acc)?;
        }
        record_invariants(&mut report, &rec);
        if target_hit(&rec) {
            status = RunStatus::Converged;
        }
        records.push(rec);
    }

    let last = records.last_mut().expect("trace holds the initial row");
    if last.objective_gap.is_none() && ctx.saddle.is_some() {
        obs.costly(last, solver.x(), &acc)?;
        let last = last.clone();
        record_invariants(&mut report, &last);
    }

    Ok(Trace {
        algorithm: algorithm.name(),
        records,
        steps,
        status,
        restricted,
        invariants: report,
        final_x: solver.x().clone(),
    })
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count).map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)).collect()
}

/// Twenty log-spaced stepsizes in `[1e-5, 10]`.
pub fn default_extra_grid() -> Vec<f64> {
    log_grid(1e-5, 10.0, 20)
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best_alpha: f64,
    pub trace: Trace,
    /// `(α, status, terminal metric)` per grid point, in grid order.
    pub sweep: Vec<(f64, RunStatus, Option<f64>)>,
}

/// Runs EXTRA at every grid stepsize and keeps the fastest: fewest iterations
/// to the stop threshold, then the smallest terminal metric, then the larger
/// stepsize. Diverged runs are discarded.
pub fn extra_grid_search(
    problem: &ProblemInstance,
    gossip: &GossipMatrix,
    grid: &[f64],
    ctx: &RunContext,
) -> Result<GridOutcome> {
    if grid.is_empty() {
        return Err(Error::Parameter("EXTRA grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::Parameter(format!("EXTRA grid stepsizes must be positive, got {bad}")));
    }
    let metric = ctx.stop.target.map_or(Metric::DistanceSq, |t| t.0);
    if metric.needs_saddle() && ctx.saddle.is_none() {
        return Err(Error::Config(format!("grid search on {} needs a reference solution", metric.name())));
    }
    let traces = grid
        .par_iter()
        .map(|&alpha| run(&AlgorithmSpec::Extra { alpha }, problem, gossip, ctx))
        .collect::<Result<Vec<_>>>()?;

    let sweep = grid
        .iter()
        .zip(&traces)
        .map(|(&a, t)| (a, t.status.clone(), t.terminal(metric)))
        .collect();
    let best = grid
        .iter()
        .zip(traces)
        .filter(|(_, t)| !matches!(t.status, RunStatus::Diverged { .. }))
        .filter_map(|(&a, t)| {
            let terminal = t.terminal(metric).filter(|v| v.is_finite())?;
            let iters = if t.status == RunStatus::Converged { t.records.len() - 1 } else { usize::MAX };
            Some((iters, terminal, a, t))
        })
        .min_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(y.2.total_cmp(&x.2)));
    match best {
        Some((_, _, best_alpha, trace)) => Ok(GridOutcome { best_alpha, trace, sweep }),
        None => Err(Error::NoConvergentStepsize(grid.len())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{compute_saddle, rate_fit};
    use crate::objectives::{synth_ridge, RidgeObjective, Objective};
    use crate::solvers::testutil::{gaussian, ring_ridge};
    use crate::stepsize::gamma_ratio_bound;
    use crate::topology::{make_erdos_renyi, metropolis_hastings, psd_shift};
    use crate::Vector;

    struct Fixture {
        problem: ProblemInstance,
        gossip: GossipMatrix,
        ops: LaplacianOps,
        saddle: SaddlePoint,
        x0: Mat,
    }

    fn fixture(m: usize, d: usize, seed: u64) -> Fixture {
        let (problem, gossip) = ring_ridge(m, d, seed);
        let ops = LaplacianOps::new(gossip.w().unwrap()).unwrap();
        let saddle = compute_saddle(&problem, &ops, 1e-12, 1000).unwrap();
        Fixture { x0: gaussian(m, d, seed + 1), problem, gossip, ops, saddle }
    }

    impl Fixture {
        fn ctx(&self, stop: StopRule) -> RunContext<'_> {
            RunContext { ops: &self.ops, saddle: Some(&self.saddle), x0: &self.x0, x_minus1: None, stop }
        }
    }

    #[test]
    fn zero_budget_gives_single_row() {
        let f = fixture(4, 3, 1);
        let t = run(&AlgorithmSpec::Adolf(AdolfSchedule::Adaptive(StepsizeParams::convex())), &f.problem, &f.gossip, &f.ctx(StopRule::budget(0))).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.status, RunStatus::Budget);
        assert!(t.records[0].objective_gap.is_some());
        assert!(t.records[0].alpha_min.is_none());
    }

    #[test]
    fn strongly_convex_adolf_reaches_gap() {
        let f = fixture(5, 3, 2);
        let stop = StopRule::budget(20_000).with_target(Metric::ObjectiveGap, 1e-6);
        let t = run(&AlgorithmSpec::Adolf(AdolfSchedule::Adaptive(StepsizeParams::strongly_convex())), &f.problem, &f.gossip, &f.ctx(stop)).unwrap();
        assert_eq!(t.status, RunStatus::Converged);
        assert!(t.records.last().unwrap().objective_gap.unwrap() <= 1e-6);
        assert!(t.invariants.dual_colsum <= 1e-9);
        assert!(t.invariants.shadow_mismatch.unwrap() <= 1e-8);
        assert!(t.invariants.gamma_max <= gamma_ratio_bound(0.99) + 1e-12);
    }

    #[test]
    fn runs_are_deterministic() {
        let f = fixture(4, 3, 3);
        let stop = StopRule::budget(200).every(7);
        for alg in [
            AlgorithmSpec::Adolf(AdolfSchedule::Adaptive(StepsizeParams::convex())),
            AlgorithmSpec::AdolfLocal(StepsizeParams::local()),
            AlgorithmSpec::Extra { alpha: 0.05 },
            AlgorithmSpec::CondatVu { alpha: 0.01, sigma: 1.0, gamma: 1.0 },
        ] {
            let a = run(&alg, &f.problem, &f.gossip, &f.ctx(stop)).unwrap();
            let b = run(&alg, &f.problem, &f.gossip, &f.ctx(stop)).unwrap();
            assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
            assert_eq!(a.records.len(), 201);
            assert!(a.records[200].objective_gap.is_some());
            assert!(a.records[199].objective_gap.is_none());
            assert!(a.records[196].objective_gap.is_some());
            assert_eq!(a.records[200].alpha_min, None);
        }
    }

    #[test]
    fn communication_counters() {
        let f = fixture(4, 2, 4);
        let stop = StopRule::budget(30);
        let t = run(&AlgorithmSpec::Adolf(AdolfSchedule::Adaptive(StepsizeParams::convex())), &f.problem, &f.gossip, &f.ctx(stop)).unwrap();
        let last = t.records.last().unwrap();
        assert_eq!((last.comm_vector, last.comm_scalar), (30, 29));
        let t = run(&AlgorithmSpec::Extra { alpha: 0.01 }, &f.problem, &f.gossip, &f.ctx(stop)).unwrap();
        let last = t.records.last().unwrap();
        assert_eq!((last.comm_vector, last.comm_scalar), (30, 0));
        for (k, r) in t.records.iter().enumerate() {
            assert_eq!(r.comm_vector, k as u64);
        }
    }

    #[test]
    fn condat_vu_lyapunov_descends_with_admissible_stepsize() {
        let f = fixture(5, 3, 5);
        let l = f.problem.global_smoothness();
        let alpha = 0.99 / ((l * l + 2.0).sqrt() + l);
        let spec = AlgorithmSpec::CondatVu { alpha, sigma: 1.0, gamma: 1.0 };
        let t = run(&spec, &f.problem, &f.gossip, &f.ctx(StopRule::budget(300))).unwrap();
        assert!(t.invariants.lyapunov_increase.unwrap() <= 1e-10);
    }

    #[test]
    fn divergence_is_recorded_not_fatal() {
        let f = fixture(4, 3, 6);
        let t = run(&AlgorithmSpec::Extra { alpha: 10.0 }, &f.problem, &f.gossip, &f.ctx(StopRule::budget(5000))).unwrap();
        assert!(matches!(t.status, RunStatus::Diverged { .. }));
        assert!(t.records.len() < 5001);
    }

    #[test]
    fn extra_converges_geometrically() {
        let f = fixture(5, 3, 7);
        let t = run(&AlgorithmSpec::Extra { alpha: 0.05 }, &f.problem, &f.gossip, &f.ctx(StopRule::budget(600))).unwrap();
        let fit = rate_fit(&t.records, Metric::DistanceSq, 100..600).unwrap();
        assert!(fit.geometric.slope < 0.0);
        assert!(fit.geometric.r_squared > 0.9);
    }

    #[test]
    fn grid_search_picks_interior_point() {
        let f = fixture(5, 3, 8);
        let stop = StopRule::budget(400).with_target(Metric::DistanceSq, 1e-10);
        let grid = log_grid(1e-4, 1.0, 9);
        let out = extra_grid_search(&f.problem, &f.gossip, &grid, &f.ctx(stop)).unwrap();
        assert!(out.best_alpha > grid[0] && out.best_alpha < grid[8]);
        assert!(matches!(out.sweep[8].1, RunStatus::Diverged { .. }) || out.sweep[8].2.unwrap() > 1e-10);

        let single = extra_grid_search(&f.problem, &f.gossip, &[0.01], &f.ctx(stop)).unwrap();
        assert_eq!(single.best_alpha, 0.01);
        assert!(extra_grid_search(&f.problem, &f.gossip, &[], &f.ctx(stop)).is_err());
    }

    #[test]
    fn grid_of_huge_stepsizes_fails() {
        // ill-conditioned: one direction with a large curvature
        let mut a = Mat::identity(3, 3);
        a[(0, 0)] = 100.0;
        let r = RidgeObjective::new(a, Vector::from_element(3, 1.0), 0.1).unwrap();
        let problem = ProblemInstance::new(vec![Objective::Ridge(r); 4]).unwrap();
        let gossip = psd_shift(&metropolis_hastings(&make_erdos_renyi(4, 0.9, 1).unwrap()), 0.4).unwrap();
        let ops = LaplacianOps::new(gossip.w().unwrap()).unwrap();
        let saddle = compute_saddle(&problem, &ops, 1e-12, 1000).unwrap();
        let x0 = gaussian(4, 3, 1);
        let ctx = RunContext { ops: &ops, saddle: Some(&saddle), x0: &x0, x_minus1: None, stop: StopRule::budget(2000) };
        let err = extra_grid_search(&problem, &gossip, &[10.0, 100.0, 1000.0], &ctx).unwrap_err();
        assert!(matches!(err, Error::NoConvergentStepsize(3)));
    }

    #[test]
    fn local_trace_records_consensus() {
        let problem = synth_ridge(6, 5, 3, 9).unwrap();
        let gossip = psd_shift(&metropolis_hastings(&make_erdos_renyi(6, 0.5, 3).unwrap()), 0.4).unwrap();
        let ops = LaplacianOps::new(gossip.w().unwrap()).unwrap();
        let x0 = gaussian(6, 3, 2);
        let ctx = RunContext { ops: &ops, saddle: None, x0: &x0, x_minus1: None, stop: StopRule::budget(3000) };
        let t = run(&AlgorithmSpec::AdolfLocal(StepsizeParams::local_strongly_convex()), &problem, &gossip, &ctx).unwrap();
        assert!(t.consensus_from() < 2000);
        assert!(t.records[10].distance_sq.is_none());
        assert!(t.invariants.dual_colsum <= 1e-9);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = default_extra_grid();
        assert_eq!(g.len(), 20);
        assert!((g[0] - 1e-5).abs() < 1e-18);
        assert!((g[19] - 10.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
