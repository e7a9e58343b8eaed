//! Iteration engines and the run loop that drives them.

mod adolf;
mod adolf_local;
mod condat_vu;
mod extra;
mod run;

pub use adolf::{Adolf, AdolfSchedule, AdolfState};
pub use adolf_local::{AdolfLocal, AdolfLocalState};
pub use condat_vu::{CondatVu, CondatVuState};
pub use extra::{Extra, ExtraState};
pub use run::{
    default_extra_grid, extra_grid_search, log_grid, run, AlgorithmSpec, GridOutcome, InvariantReport, RunContext, RunStatus,
    StopRule, Trace,
};

use crate::objectives::ProblemInstance;
use crate::{Error, Mat, Result};

/// Iterates whose Frobenius norm exceeds this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Stepsize bookkeeping of one iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub k: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// `σ^k` (the largest across agents in local mode).
    pub sigma: f64,
    /// `σ^kα^k` (the largest across agents in local mode).
    pub dual_scale: f64,
    /// Curvature proxy `L^k`, or the largest `L_i^k`; `None` when unknown.
    pub l_k: Option<f64>,
    /// Secant strong-convexity estimate at this iteration.
    pub mu_secant: Option<f64>,
    /// Number of agents whose decrease branch fired.
    pub decreases: usize,
}

impl StepInfo {
    pub fn consensual(&self) -> bool {
        self.alpha_min == self.alpha_max
    }

    fn uniform(k: usize, alpha: f64, gamma: f64, sigma: f64, dual_scale: f64) -> Self {
        StepInfo {
            k,
            alpha_min: alpha,
            alpha_max: alpha,
            gamma_min: gamma,
            gamma_max: gamma,
            sigma,
            dual_scale,
            l_k: None,
            mu_secant: None,
            decreases: 0,
        }
    }
}

/// Common interface of the iteration engines.
pub trait Solver {
    /// Performs iteration `k` (the first call is the initialization step).
    fn step(&mut self, problem: &ProblemInstance) -> Result<StepInfo>;
    /// Iteration counter: the index of the current iterate `X^k`.
    fn k(&self) -> usize;
    fn x(&self) -> &Mat;
    fn x_prev(&self) -> &Mat;
    /// The decentralized dual variable `D^k`, if the method has one.
    fn dual(&self) -> Option<&Mat> {
        None
    }
    /// The dual variable `Y^k` of the centralized oracle.
    fn oracle_dual(&self) -> Option<&Mat> {
        None
    }
    /// `(vector rounds, scalar rounds)` communicated so far.
    fn comm(&self) -> (u64, u64);
}

fn check_shapes(problem: &ProblemInstance, x: &Mat) -> Result<()> {
    if x.nrows() != problem.m() || x.ncols() != problem.d() {
        return Err(Error::Shape(format!(
            "iterate is {}x{}, problem expects {}x{}",
            x.nrows(),
            x.ncols(),
            problem.m(),
            problem.d()
        )));
    }
    Ok(())
}

fn check_square(w: &Mat, m: usize) -> Result<()> {
    if w.nrows() != m || w.ncols() != m {
        return Err(Error::Shape(format!("weight matrix is {}x{}, expected {m}x{m}", w.nrows(), w.ncols())));
    }
    Ok(())
}

fn check_divergence(k: usize, x: &Mat) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { k, reason: "non-finite iterate".into() });
    }
    let norm = x.norm();
    if norm > DIVERGENCE_NORM {
        return Err(Error::Diverged { k, reason: format!("iterate norm {norm:.3e} exceeds {DIVERGENCE_NORM:e}") });
    }
    Ok(())
}

/// `(1 + γ)X^k − γX^{k−1}` with one coefficient per row.
fn extrapolate_rows(x_now: &Mat, x_prev: &Mat, gamma: &[f64], scale: &[f64]) -> Mat {
    let mut out = x_now.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let g = gamma[i];
        row *= (1.0 + g) * scale[i];
        row -= x_prev.row(i) * (g * scale[i]);
    }
    out
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::objectives::{synth_ridge, ProblemInstance};
    use crate::topology::{make_ring_graph, metropolis_hastings, psd_shift, GossipMatrix};
    use crate::Mat;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    pub fn ring_ridge(m: usize, d: usize, seed: u64) -> (ProblemInstance, GossipMatrix) {
        let p = synth_ridge(m, 4, d, seed).unwrap();
        let g = make_ring_graph(m).unwrap();
        (p, psd_shift(&metropolis_hastings(&g), 0.4).unwrap())
    }

    pub fn gaussian(m: usize, d: usize, seed: u64) -> Mat {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(m, d, |_, _| StandardNormal.sample(&mut rng))
    }
}
