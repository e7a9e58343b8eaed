//! Optimality and verification quantities computed alongside a run.

use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::objectives::{reference_minimizer, ProblemInstance};
use crate::stepsize::optimal_zeta;
use crate::topology::laplacian_factors;
use crate::{Error, Mat, Result, Vector};

/// `Ł = (I − W)^{1/2}`, its pseudoinverse and `I − W` itself.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianOps {
    pub root: Mat,
    pub pinv: Mat,
    pub lap: Mat,
}

impl LaplacianOps {
    pub fn new(w: &Mat) -> Result<Self> {
        let (root, pinv) = laplacian_factors(w)?;
        let m = w.nrows();
        Ok(LaplacianOps { root, pinv, lap: Mat::identity(m, m) - w })
    }

    /// `‖ŁX‖² = ⟨X, (I − W)X⟩`.
    pub fn consensus_error(&self, x: &Mat) -> f64 {
        (&self.root * x).norm_squared()
    }
}

/// Reference saddle point `(X*, Y*)` with `X* = 1(x*)ᵀ` and `Y*` the
/// minimum-norm solution of `ŁY* = −∇F(X*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddlePoint {
    pub x_star: Vector,
    pub x_stack: Mat,
    pub y_star: Mat,
    /// `ŁY*`, cached.
    pub ly_star: Mat,
    /// `f(x*)` for the averaged objective.
    pub f_star: f64,
    /// `F(X*) = Σ_i f_i(x*)`.
    pub stacked_f_star: f64,
}

fn project_off_ones(g: &Mat) -> Mat {
    let m = g.nrows() as f64;
    let mean = g.row_sum() / m;
    let mut p = g.clone();
    for mut row in p.row_iter_mut() {
        row -= &mean;
    }
    p
}

pub fn compute_saddle(problem: &ProblemInstance, ops: &LaplacianOps, tol: f64, max_iter: usize) -> Result<SaddlePoint> {
    let x_star = reference_minimizer(problem, tol, max_iter)?;
    saddle_from_minimizer(problem, ops, x_star)
}

/// Builds the saddle around a known minimizer of the averaged objective.
pub fn saddle_from_minimizer(problem: &ProblemInstance, ops: &LaplacianOps, x_star: Vector) -> Result<SaddlePoint> {
    let m = problem.m();
    if ops.root.nrows() != m {
        return Err(Error::Shape(format!("operator is {}x{}, problem has {m} agents", ops.root.nrows(), ops.root.ncols())));
    }
    let x_stack = Mat::from_fn(m, x_star.len(), |_, j| x_star[j]);
    let grad = problem.stacked_gradient(&x_stack)?;
    let y_star = -(&ops.pinv * project_off_ones(&grad));
    let ly_star = &ops.root * &y_star;
    Ok(SaddlePoint {
        f_star: problem.average_value(&x_star)?,
        stacked_f_star: problem.stacked_value(&x_stack)?,
        x_star,
        x_stack,
        y_star,
        ly_star,
    })
}

/// `𝓛(X, Y) = F(X) + ⟨ŁX, Y⟩`; the conjugate term vanishes.
pub fn lagrangian(problem: &ProblemInstance, x: &Mat, y: &Mat, ops: &LaplacianOps) -> Result<f64> {
    Ok(problem.stacked_value(x)? + (&ops.root * x).dot(y))
}

/// `Δ𝓛⋆(X) = F(X) − F(X*) + ⟨ŁY*, X − X*⟩`.
pub fn primal_gap(problem: &ProblemInstance, x: &Mat, saddle: &SaddlePoint) -> Result<f64> {
    Ok(problem.stacked_value(x)? - saddle.stacked_f_star + saddle.ly_star.dot(&(x - &saddle.x_stack)))
}

/// `𝓜⋆(X) = Δ𝓛⋆(X) + ‖ŁX‖²`.
pub fn merit(problem: &ProblemInstance, x: &Mat, saddle: &SaddlePoint, ops: &LaplacianOps) -> Result<f64> {
    Ok(primal_gap(problem, x, saddle)? + ops.consensus_error(x))
}

/// `(1/m) Σ_i f(x_i) − f*`, with `f` the averaged objective.
pub fn objective_gap(problem: &ProblemInstance, x: &Mat, saddle: &SaddlePoint) -> Result<f64> {
    let m = x.nrows();
    let mut total = 0.0;
    for i in 0..m {
        total += problem.average_value(&x.row(i).transpose())?;
    }
    Ok(total / m as f64 - saddle.f_star)
}

/// Parameters of one Lyapunov evaluation at iteration `k`.
#[derive(Debug, Clone, Copy)]
pub struct LyapunovParams {
    pub sigma: f64,
    pub gamma: f64,
    pub alpha: f64,
}

/// `V⋆^k = ‖X^k − X*‖² + (1/σ^k)‖Y^k − Y*‖² + ½‖X^k − X^{k−1}‖² + 2γ^kα^k Δ𝓛⋆(X^{k−1})`.
pub fn lyapunov(
    problem: &ProblemInstance,
    x_now: &Mat,
    x_prev: &Mat,
    y: &Mat,
    saddle: &SaddlePoint,
    params: LyapunovParams,
) -> Result<f64> {
    let gap_prev = primal_gap(problem, x_prev, saddle)?;
    Ok((x_now - &saddle.x_stack).norm_squared()
        + (y - &saddle.y_star).norm_squared() / params.sigma
        + 0.5 * (x_now - x_prev).norm_squared()
        + 2.0 * params.gamma * params.alpha * gap_prev)
}

/// One step of the shadow dual variable
/// `Y^{k+1} = Y^k + s((1 + γ)ŁX^k − γŁX^{k−1})`, with `s = σ^kα^k`.
pub fn shadow_dual_step(y: &Mat, x_now: &Mat, x_prev: &Mat, scale: f64, gamma: f64, ops: &LaplacianOps) -> Mat {
    y + &ops.root * (x_now * (1.0 + gamma) - x_prev * gamma) * scale
}

/// Running `γ`-weighted average `X̄ = Σ γ^t X^t / Σ γ^t` from a start index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErgodicAccumulator {
    pub start_index: usize,
    weighted_sum: Option<Mat>,
    theta: f64,
}

impl ErgodicAccumulator {
    pub fn new(start_index: usize) -> Self {
        ErgodicAccumulator { start_index, weighted_sum: None, theta: 0.0 }
    }

    pub fn update(&mut self, x: &Mat, gamma: f64) {
        match &mut self.weighted_sum {
            Some(sum) => *sum += x * gamma,
            None => self.weighted_sum = Some(x * gamma),
        }
        self.theta += gamma;
    }

    /// Discards accumulated terms and starts over at `start_index`.
    pub fn restart(&mut self, start_index: usize) {
        *self = Self::new(start_index);
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn average(&self) -> Option<Mat> {
        self.weighted_sum.as_ref().map(|s| s / self.theta)
    }
}

/// Trajectory estimates of the restricted constants: the running max of the
/// secant curvature and running min of the secant strong convexity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RestrictedConstants {
    pub l_tilde_hat: f64,
    pub mu_tilde_hat: Option<f64>,
}

impl RestrictedConstants {
    /// `None` entries are iterations with zero displacement.
    pub fn observe(&mut self, l_k: f64, mu_k: Option<f64>) {
        self.l_tilde_hat = self.l_tilde_hat.max(l_k);
        if let Some(mu) = mu_k {
            let mu = mu.clamp(0.0, l_k);
            self.mu_tilde_hat = Some(self.mu_tilde_hat.map_or(mu, |cur| cur.min(mu)));
        }
    }

    pub fn condition_number(&self) -> Option<f64> {
        self.mu_tilde_hat.filter(|&mu| mu > 0.0).map(|mu| self.l_tilde_hat / mu)
    }
}

/// Secant strong-convexity `⟨ΔG, ΔX⟩ / ‖ΔX‖²`; `None` for zero displacement.
pub fn secant_strong_convexity(grad_now: &Mat, grad_prev: &Mat, x_now: &Mat, x_prev: &Mat) -> Option<f64> {
    let dx = x_now - x_prev;
    let denom = dx.norm_squared();
    (denom > 0.0).then(|| (grad_now - grad_prev).dot(&dx) / denom)
}

/// Largest `α` with `αL/2 + σα²‖I − W̃‖ < 1` at equality: the positive root
/// of `σ‖I − W̃‖α² + (L/2)α − 1 = 0`, in cancellation-free form.
pub fn classical_stepsize_bound(l: f64, sigma: f64, w_tilde_norm: f64) -> f64 {
    let q = sigma * w_tilde_norm;
    2.0 / (l / 2.0 + (l * l / 4.0 + 4.0 * q).sqrt())
}

/// Maximum violations of the three stepsize certificates over a run, given
/// per-iteration `(α^k, γ^k, σ^k, L^k)` in order. Zero means all hold.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CertificateReport {
    /// `α^k ≤ min{1/(2(L^k + ζ^k)), ζ^k/σ^k}`.
    pub criterion_a: f64,
    /// `(2 + 2γ^k)α^k − 2γ^{k+1}α^{k+1} ≥ 0`.
    pub criterion_b: f64,
    /// `1/σ^k − 1/σ^{k+1} ≥ 0`.
    pub criterion_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub alpha: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub l: f64,
}

pub fn certificate_report(steps: &[StepRecord], c1: f64) -> CertificateReport {
    let mut report = CertificateReport::default();
    for s in steps {
        let zeta = optimal_zeta(s.l, s.sigma, c1);
        let bound = (1.0 / (2.0 * (s.l + zeta))).min(zeta / s.sigma);
        report.criterion_a = report.criterion_a.max((s.alpha - bound) / bound);
    }
    for w in steps.windows(2) {
        let b = (2.0 + 2.0 * w[0].gamma) * w[0].alpha - 2.0 * w[1].gamma * w[1].alpha;
        report.criterion_b = report.criterion_b.max(-b);
        let c = 1.0 / w[0].sigma - 1.0 / w[1].sigma;
        report.criterion_c = report.criterion_c.max(-c);
    }
    report
}

/// Quantities that can drive a stopping rule or a rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ObjectiveGap,
    DistanceSq,
    ConsensusErr,
    MeritErgodic,
    MeritLast,
    Lyapunov,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::ObjectiveGap,
        Metric::DistanceSq,
        Metric::ConsensusErr,
        Metric::MeritErgodic,
        Metric::MeritLast,
        Metric::Lyapunov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ObjectiveGap => "objective_gap",
            Metric::DistanceSq => "distance_sq",
            Metric::ConsensusErr => "consensus_err",
            Metric::MeritErgodic => "merit_ergodic",
            Metric::MeritLast => "merit_last",
            Metric::Lyapunov => "lyapunov",
        }
    }

    /// Whether the metric needs a reference saddle.
    pub fn needs_saddle(self) -> bool {
        !matches!(self, Metric::ConsensusErr)
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

/// One row of a run trace. Stepsize and Lyapunov columns at row `k` describe
/// the stepsize selected at iteration `k`, so they are empty on the final row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceRecord {
    pub k: usize,
    pub comm_vector: u64,
    pub comm_scalar: u64,
    pub objective_gap: Option<f64>,
    pub distance_sq: Option<f64>,
    pub consensus_err: f64,
    pub merit_ergodic: Option<f64>,
    /// Merit at the last iterate; kept in memory, not written to CSV.
    pub merit_last: Option<f64>,
    pub lyapunov: Option<f64>,
    pub alpha_min: Option<f64>,
    pub alpha_max: Option<f64>,
    pub gamma: Option<f64>,
    pub l_k: Option<f64>,
}

impl TraceRecord {
    pub fn metric(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::ObjectiveGap => self.objective_gap,
            Metric::DistanceSq => self.distance_sq,
            Metric::ConsensusErr => Some(self.consensus_err),
            Metric::MeritErgodic => self.merit_ergodic,
            Metric::MeritLast => self.merit_last,
            Metric::Lyapunov => self.lyapunov,
        }
    }
}

pub const CSV_HEADER: [&str; 12] = [
    "k",
    "comm_vector",
    "comm_scalar",
    "objective_gap",
    "distance_sq",
    "consensus_err",
    "merit_ergodic",
    "lyapunov",
    "alpha_min",
    "alpha_max",
    "gamma",
    "L_k",
];

/// Shortest round-trip exponent form; deterministic across runs.
pub fn format_float(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    writer.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        writer
            .write_record([
                r.k.to_string(),
                r.comm_vector.to_string(),
                r.comm_scalar.to_string(),
                opt(r.objective_gap),
                opt(r.distance_sq),
                format_float(r.consensus_err),
                opt(r.merit_ergodic),
                opt(r.lyapunov),
                opt(r.alpha_min),
                opt(r.alpha_max),
                opt(r.gamma),
                opt(r.l_k),
            ])
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

/// Parses a trace written by [`write_trace_csv`].
pub fn read_trace_csv<R: std::io::Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Format(format!("unexpected trace header: {header:?}")));
    }
    let float = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| Error::Format(format!("bad number {s:?}: {e}")))
        }
    };
    let int = |s: &str| -> Result<u64> { s.parse().map_err(|e| Error::Format(format!("bad integer {s:?}: {e}"))) };
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Format(e.to_string()))?;
        out.push(TraceRecord {
            k: int(&row[0])? as usize,
            comm_vector: int(&row[1])?,
            comm_scalar: int(&row[2])?,
            objective_gap: float(&row[3])?,
            distance_sq: float(&row[4])?,
            consensus_err: float(&row[5])?.unwrap_or(f64::NAN),
            merit_ergodic: float(&row[6])?,
            merit_last: None,
            lyapunov: float(&row[7])?,
            alpha_min: float(&row[8])?,
            alpha_max: float(&row[9])?,
            gamma: float(&row[10])?,
            l_k: float(&row[11])?,
        });
    }
    Ok(out)
}

/// Least-squares line `y = slope·x + intercept` with its `R²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!("{} abscissae for {} ordinates", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 points for a fit, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LineFit { slope, intercept: my - slope * mx, r_squared })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    Linear,
    Sublinear,
}

/// Geometric fit of `log(metric)` against `k` and power fit against
/// `log(k)`; `kind` names the better of the two by `R²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub kind: RateKind,
    pub geometric: LineFit,
    pub power: LineFit,
}

impl RateFit {
    /// Slope of the preferred fit.
    pub fn coefficient(&self) -> f64 {
        match self.kind {
            RateKind::Linear => self.geometric.slope,
            RateKind::Sublinear => self.power.slope,
        }
    }
}

pub fn fit_rate(ks: &[f64], values: &[f64]) -> Result<RateFit> {
    if let Some((k, v)) = ks.iter().zip(values).find(|(k, v)| !(**v > 0.0 && **k > 0.0)) {
        return Err(Error::Parameter(format!("rate fit needs positive k and metric, got {v} at k={k}")));
    }
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let log_k: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let geometric = fit_line(ks, &logs)?;
    let power = fit_line(&log_k, &logs)?;
    let kind = if geometric.r_squared >= power.r_squared { RateKind::Linear } else { RateKind::Sublinear };
    Ok(RateFit { kind, geometric, power })
}

/// Rate fit over the rows of `trace` whose `k` lies in `window` and that
/// carry a value for `metric`.
pub fn rate_fit(trace: &[TraceRecord], metric: Metric, window: Range<usize>) -> Result<RateFit> {
    let (ks, vals): (Vec<f64>, Vec<f64>) = trace
        .iter()
        .filter(|r| window.contains(&r.k))
        .filter_map(|r| r.metric(metric).map(|v| (r.k as f64, v)))
        .unzip();
    if ks.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} has {} recorded points in {window:?}",
            metric.name(),
            ks.len()
        )));
    }
    fit_rate(&ks, &vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{synth_logistic, synth_ridge, Objective, RidgeObjective};
    use crate::topology::{make_line_graph, make_ring_graph, metropolis_hastings, psd_shift};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn ops_for_ring(m: usize) -> LaplacianOps {
        let g = make_ring_graph(m).unwrap();
        let w = psd_shift(&metropolis_hastings(&g), 0.4).unwrap();
        LaplacianOps::new(w.w().unwrap()).unwrap()
    }

    fn gaussian(m: usize, d: usize, seed: u64) -> Mat {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(m, d, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn homogeneous_agents_have_zero_dual() {
        let r = RidgeObjective::new(gaussian(4, 3, 1), Vector::from_element(4, 1.0), 0.5).unwrap();
        let p = ProblemInstance::new(vec![Objective::Ridge(r); 5]).unwrap();
        let ops = ops_for_ring(5);
        let s = compute_saddle(&p, &ops, 1e-12, 10_000).unwrap();
        assert!(s.y_star.norm() < 1e-10);
        let x = Mat::from_fn(5, 3, |_, j| s.x_star[j] + 0.3 * j as f64);
        let gap = primal_gap(&p, &x, &s).unwrap();
        assert_abs_diff_eq!(gap, p.stacked_value(&x).unwrap() - s.stacked_f_star, epsilon = 1e-12);
        assert!(gap >= 0.0);
    }

    #[test]
    fn saddle_invariants_on_ridge_and_logistic() {
        let ops = ops_for_ring(6);
        for p in [synth_ridge(6, 5, 4, 7).unwrap(), synth_logistic(6, 12, 4, 7, 0.2).unwrap()] {
            let s = compute_saddle(&p, &ops, 1e-12, 100_000).unwrap();
            assert!((&ops.root * &s.x_stack).norm() < 1e-9);
            let grad = p.stacked_gradient(&s.x_stack).unwrap();
            let resid = (&grad + &s.ly_star).norm();
            assert!(resid <= 1e-8f64.max(1e-10 * grad.norm()), "stationarity residual {resid}");
            assert!(s.y_star.row_sum().norm() < 1e-9);
            assert!(grad.row_sum().norm() <= 1e-12 * 6.0 * 10.0);
        }
    }

    #[test]
    fn gap_cross_checks_lagrangian() {
        let p = synth_ridge(5, 4, 3, 2).unwrap();
        let ops = ops_for_ring(5);
        let s = compute_saddle(&p, &ops, 1e-12, 10_000).unwrap();
        assert_eq!(primal_gap(&p, &s.x_stack, &s).unwrap(), 0.0);
        assert_abs_diff_eq!(merit(&p, &s.x_stack, &s, &ops).unwrap(), 0.0, epsilon = 1e-12);
        for seed in 0..5 {
            let x = gaussian(5, 3, seed);
            let direct = lagrangian(&p, &x, &s.y_star, &ops).unwrap() - lagrangian(&p, &s.x_stack, &s.y_star, &ops).unwrap();
            let gap = primal_gap(&p, &x, &s).unwrap();
            assert_abs_diff_eq!(gap, direct, epsilon = 1e-10 * (1.0 + direct.abs()));
            assert!(gap >= -1e-10);
            let m = merit(&p, &x, &s, &ops).unwrap();
            assert_abs_diff_eq!(m, gap + ops.consensus_error(&x), epsilon = 1e-12 * m.abs());
        }
    }

    #[test]
    fn consensual_merit_is_objective_gap() {
        let p = synth_ridge(4, 5, 3, 9).unwrap();
        let ops = ops_for_ring(4);
        let s = compute_saddle(&p, &ops, 1e-12, 10_000).unwrap();
        let x = Mat::from_fn(4, 3, |_, j| s.x_star[j] + 1.0 + j as f64);
        let m = merit(&p, &x, &s, &ops).unwrap();
        let direct = p.stacked_value(&x).unwrap() - s.stacked_f_star;
        assert_abs_diff_eq!(m, direct, epsilon = 1e-10 * direct.abs());
        let gap = objective_gap(&p, &x, &s).unwrap();
        assert_abs_diff_eq!(gap, direct / 4.0, epsilon = 1e-10 * direct.abs());
    }

    #[test]
    fn lyapunov_zero_at_saddle_and_positive_elsewhere() {
        let p = synth_logistic(4, 10, 3, 1, 0.1).unwrap();
        let ops = ops_for_ring(4);
        let s = compute_saddle(&p, &ops, 1e-12, 100_000).unwrap();
        let params = LyapunovParams { sigma: 1.0, gamma: 1.0, alpha: 0.1 };
        let v = lyapunov(&p, &s.x_stack, &s.x_stack, &s.y_star, &s, params).unwrap();
        assert_eq!(v, 0.0);
        let mut x = s.x_stack.clone();
        x[(0, 0)] += 1e-3;
        assert!(lyapunov(&p, &x, &s.x_stack, &s.y_star, &s, params).unwrap() > 0.0);
    }

    #[test]
    fn shadow_dual_tracks_operator() {
        let ops = ops_for_ring(5);
        let x_now = gaussian(5, 2, 3);
        let x_prev = gaussian(5, 2, 4);
        let y = shadow_dual_step(&Mat::zeros(5, 2), &x_now, &x_prev, 0.5, 1.0, &ops);
        let d = &ops.lap * (&x_now * 2.0 - &x_prev) * 0.5;
        assert!((&ops.root * &y - d).norm() < 1e-12);
    }

    #[test]
    fn ergodic_average() {
        let mut acc = ErgodicAccumulator::new(0);
        assert!(acc.average().is_none());
        let a = Mat::from_element(2, 2, 1.0);
        acc.update(&a, 0.7);
        assert_eq!(acc.average().unwrap(), a);

        let mut acc = ErgodicAccumulator::new(0);
        let xs: Vec<Mat> = (0..4).map(|t| Mat::from_element(1, 2, t as f64)).collect();
        for x in &xs {
            acc.update(x, 1.0);
        }
        assert_abs_diff_eq!(acc.average().unwrap()[(0, 1)], 1.5, epsilon = 1e-15);

        let gammas = [1.0, 1.3, 0.4, 2.2];
        let mut acc = ErgodicAccumulator::new(0);
        let mut num = Mat::zeros(1, 2);
        for (x, g) in xs.iter().zip(gammas) {
            acc.update(x, g);
            num += x * g;
        }
        let theta: f64 = gammas.iter().sum();
        assert_abs_diff_eq!(acc.theta(), theta, epsilon = 1e-15);
        assert!((acc.average().unwrap() - num / theta).norm() < 1e-14);
        acc.restart(7);
        assert_eq!(acc.start_index, 7);
        assert!(acc.average().is_none());
    }

    #[test]
    fn classical_bound_examples() {
        assert_abs_diff_eq!(classical_stepsize_bound(2.0, 1.0, 2.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(classical_stepsize_bound(4.0, 1e-14, 1.0), 0.5, epsilon = 1e-12);
        let (l, s, n) = (3.0, 0.7, 1.4);
        let a = classical_stepsize_bound(l, s, n);
        assert_abs_diff_eq!(s * n * a * a + l / 2.0 * a, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn restricted_constants() {
        let mut rc = RestrictedConstants::default();
        rc.observe(2.0, Some(0.5));
        rc.observe(1.0, None);
        rc.observe(3.0, Some(0.8));
        assert_eq!(rc.l_tilde_hat, 3.0);
        assert_eq!(rc.mu_tilde_hat, Some(0.5));
        assert_abs_diff_eq!(rc.condition_number().unwrap(), 6.0);
        let x = Mat::from_element(1, 1, 1.0);
        assert_eq!(secant_strong_convexity(&x, &x, &x, &x), None);
    }

    #[test]
    fn certificates_detect_violations() {
        let good = [
            StepRecord { alpha: 0.1, gamma: 1.0, sigma: 1.0, l: 1.0 },
            StepRecord { alpha: 0.12, gamma: 1.2, sigma: 1.0, l: 0.5 },
        ];
        let r = certificate_report(&good, 0.99);
        assert_eq!(r, CertificateReport::default());
        let bad = [
            StepRecord { alpha: 1.0, gamma: 1.0, sigma: 1.0, l: 10.0 },
            StepRecord { alpha: 10.0, gamma: 10.0, sigma: 0.5, l: 0.0 },
        ];
        let r = certificate_report(&bad, 0.99);
        assert!(r.criterion_a > 0.0 && r.criterion_b > 0.0 && r.criterion_c > 0.0);
    }

    #[test]
    fn rate_fit_examples() {
        let ks: Vec<f64> = (1..30).map(f64::from).collect();
        let geo: Vec<f64> = ks.iter().map(|&k| 0.5f64.powf(k)).collect();
        let fit = fit_rate(&ks, &geo).unwrap();
        assert_eq!(fit.kind, RateKind::Linear);
        assert_abs_diff_eq!(fit.geometric.slope, 0.5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(fit.geometric.r_squared, 1.0, epsilon = 1e-12);

        let inv: Vec<f64> = ks.iter().map(|&k| 1.0 / k).collect();
        let fit = fit_rate(&ks, &inv).unwrap();
        assert_eq!(fit.kind, RateKind::Sublinear);
        assert_abs_diff_eq!(fit.coefficient(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.power.r_squared, 1.0, epsilon = 1e-12);

        assert!(matches!(fit_rate(&[1.0, 2.0], &[1.0, 0.5]), Err(Error::InsufficientData(_))));
        assert!(fit_rate(&[1.0, 2.0, 3.0], &[1.0, 0.0, 0.5]).is_err());
    }

    #[test]
    fn rate_fit_over_trace_window() {
        let trace: Vec<TraceRecord> = (0..20)
            .map(|k| TraceRecord { k, distance_sq: Some(0.9f64.powi(k as i32)), ..Default::default() })
            .collect();
        let fit = rate_fit(&trace, Metric::DistanceSq, 5..15).unwrap();
        assert_abs_diff_eq!(fit.geometric.slope, 0.9f64.ln(), epsilon = 1e-12);
        assert!(rate_fit(&trace, Metric::Lyapunov, 0..20).is_err());
    }

    #[test]
    fn csv_round_trip_and_fixed_header() {
        let records = vec![
            TraceRecord { k: 0, consensus_err: 1.5, objective_gap: Some(1e-300), ..Default::default() },
            TraceRecord {
                k: 1,
                comm_vector: 1,
                comm_scalar: 1,
                objective_gap: Some(0.25),
                distance_sq: Some(3.0),
                consensus_err: 0.1,
                merit_ergodic: Some(0.2),
                merit_last: Some(0.3),
                lyapunov: Some(4.0),
                alpha_min: Some(1e-3),
                alpha_max: Some(2e-3),
                gamma: Some(1.0),
                l_k: Some(7.5),
            },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,comm_vector,comm_scalar,objective_gap,distance_sq,consensus_err,merit_ergodic,lyapunov,alpha_min,alpha_max,gamma,L_k\n"));
        assert!(text.contains("0,0,0,1e-300,,1.5e0,,,,,,\n"));
        let back = read_trace_csv(buf.as_slice()).unwrap();
        let mut expected = records.clone();
        expected[1].merit_last = None;
        assert_eq!(back, expected);
    }

    proptest! {
        #[test]
        fn primal_gap_nonnegative_on_convex_instances(seed in 0u64..200) {
            let p = synth_logistic(3, 6, 2, seed, 0.2).unwrap();
            let g = make_line_graph(3).unwrap();
            let w = psd_shift(&metropolis_hastings(&g), 0.4).unwrap();
            let ops = LaplacianOps::new(w.w().unwrap()).unwrap();
            let s = compute_saddle(&p, &ops, 1e-12, 100_000).unwrap();
            let x = gaussian(3, 2, seed + 1000);
            prop_assert!(primal_gap(&p, &x, &s).unwrap() >= -1e-10);
            prop_assert!(merit(&p, &x, &s, &ops).unwrap() >= -1e-10);
        }
    }
}
