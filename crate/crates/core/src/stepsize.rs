//! Adaptive stepsize machinery.
//!
//! Every rule here is a pure function of explicit state. Terms of a minimum
//! that are `+∞` (an unbounded growth policy, a zero curvature estimate in the
//! strongly convex rule) are represented as `None` and simply skipped, so no
//! infinity ever enters the state.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Mat, Result};

/// Cap `π^k` on how fast the stepsize may grow between iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthPolicy {
    /// `π^k(x) = +∞`.
    Unbounded,
    /// `π^k(x) = x + a/k²`.
    AdditiveSummable { a: f64 },
    /// `π^k(x) = ((k + β₁)/(k + 1))^{β₂} · x`.
    RatioPower { beta1: f64, beta2: f64 },
}

impl GrowthPolicy {
    /// `x + (6/π²)/k²`: increments summing to one.
    pub fn basel() -> Self {
        GrowthPolicy::AdditiveSummable { a: 6.0 / (PI * PI) }
    }

    /// `((k + 10)/(k + 1)) · x`.
    pub fn ratio_ten() -> Self {
        GrowthPolicy::RatioPower { beta1: 10.0, beta2: 1.0 }
    }

    /// `π^k(x)`, or `None` when unbounded. `k ≥ 1`.
    pub fn cap(&self, k: usize, x: f64) -> Option<f64> {
        let k = k.max(1) as f64;
        match *self {
            GrowthPolicy::Unbounded => None,
            GrowthPolicy::AdditiveSummable { a } => Some(x + a / (k * k)),
            GrowthPolicy::RatioPower { beta1, beta2 } => Some(((k + beta1) / (k + 1.0)).powf(beta2) * x),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GrowthPolicy::Unbounded => Ok(()),
            GrowthPolicy::AdditiveSummable { a } if a >= 0.0 && a.is_finite() => Ok(()),
            GrowthPolicy::AdditiveSummable { a } => {
                Err(Error::Parameter(format!("growth.a must be a finite nonnegative number, got {a}")))
            }
            GrowthPolicy::RatioPower { beta1, beta2 } if beta1 >= 1.0 && beta2 > 0.0 => Ok(()),
            GrowthPolicy::RatioPower { beta1, beta2 } => Err(Error::Parameter(format!(
                "growth needs beta1 >= 1 and beta2 > 0, got ({beta1}, {beta2})"
            ))),
        }
    }
}

/// Dual stepsize schedule `σ^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSchedule {
    /// `σ^k = σ̄`.
    Constant { value: f64 },
    /// `σ^k = σ / (α^k)²`.
    InverseAlphaSq { sigma: f64 },
}

impl SigmaSchedule {
    fn base(&self) -> f64 {
        match *self {
            SigmaSchedule::Constant { value } => value,
            SigmaSchedule::InverseAlphaSq { sigma } => sigma,
        }
    }
}

/// `σ^k` evaluated at the stepsize of the update being formed.
pub fn sigma_value(schedule: &SigmaSchedule, alpha: f64) -> f64 {
    match *schedule {
        SigmaSchedule::Constant { value } => value,
        SigmaSchedule::InverseAlphaSq { sigma } => sigma / (alpha * alpha),
    }
}

/// The product `σ^k α^k` scaling the dual update; `σ/α` under
/// [`SigmaSchedule::InverseAlphaSq`].
pub fn dual_scale(schedule: &SigmaSchedule, alpha: f64) -> f64 {
    match *schedule {
        SigmaSchedule::Constant { value } => value * alpha,
        SigmaSchedule::InverseAlphaSq { sigma } => sigma / alpha,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ConvexGlobal,
    StronglyConvexGlobal,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeParams {
    pub mode: Mode,
    pub c1: f64,
    pub c2: f64,
    pub alpha0: f64,
    /// Sufficient-decrease factor, local mode only.
    pub eta: f64,
    pub growth: GrowthPolicy,
    pub sigma: SigmaSchedule,
}

impl StepsizeParams {
    pub fn convex() -> Self {
        StepsizeParams {
            mode: Mode::ConvexGlobal,
            c1: 0.99,
            c2: 0.99,
            alpha0: 1e-3,
            eta: 0.9,
            growth: GrowthPolicy::Unbounded,
            sigma: SigmaSchedule::Constant { value: 1.0 },
        }
    }

    pub fn strongly_convex() -> Self {
        StepsizeParams {
            mode: Mode::StronglyConvexGlobal,
            c1: 0.5,
            c2: 0.99,
            growth: GrowthPolicy::ratio_ten(),
            sigma: SigmaSchedule::InverseAlphaSq { sigma: 0.2 },
            ..Self::convex()
        }
    }

    pub fn local() -> Self {
        StepsizeParams { mode: Mode::Local, growth: GrowthPolicy::basel(), ..Self::convex() }
    }

    pub fn local_strongly_convex() -> Self {
        StepsizeParams { mode: Mode::Local, growth: GrowthPolicy::basel(), ..Self::strongly_convex() }
    }

    /// True when `c1, c2 ∈ (0, 1)` strictly, as the rate guarantees require.
    pub fn has_rate_guarantee(&self) -> bool {
        self.c1 < 1.0 && self.c2 < 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        unit("c1", self.c1)?;
        unit("c2", self.c2)?;
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::Parameter(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if !(self.sigma.base() > 0.0 && self.sigma.base().is_finite()) {
            return Err(Error::Parameter(format!("sigma must be positive, got {}", self.sigma.base())));
        }
        self.growth.validate()?;
        if let SigmaSchedule::InverseAlphaSq { sigma } = self.sigma {
            if sigma >= self.c1 / 2.0 {
                return Err(Error::Parameter(format!(
                    "sigma must be < c1/2 = {} for the strongly convex schedule, got {sigma}",
                    self.c1 / 2.0
                )));
            }
        }
        match self.mode {
            Mode::ConvexGlobal => {
                if !matches!(self.sigma, SigmaSchedule::Constant { .. }) {
                    return Err(Error::Parameter("convex mode needs a constant sigma schedule".into()));
                }
            }
            Mode::StronglyConvexGlobal => {
                if !matches!(self.sigma, SigmaSchedule::InverseAlphaSq { .. }) {
                    return Err(Error::Parameter(
                        "strongly convex mode needs the inverse_alpha_sq sigma schedule".into(),
                    ));
                }
            }
            Mode::Local => {
                if !(self.eta > 0.0 && self.eta < 1.0) {
                    return Err(Error::Parameter(format!("eta must lie in (0, 1), got {}", self.eta)));
                }
                if !matches!(self.growth, GrowthPolicy::AdditiveSummable { .. }) {
                    return Err(Error::Parameter(
                        "local mode needs an additive_summable growth policy".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// `(α^{k−1}, γ^{k−1}, k)` for the global rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepsizeState {
    pub alpha_prev: f64,
    pub gamma_prev: f64,
    pub k: usize,
}

impl StepsizeState {
    /// State after the initialization step: `α⁰` given, `γ⁰ = 1`.
    pub fn new(alpha0: f64) -> Self {
        StepsizeState { alpha_prev: alpha0, gamma_prev: 1.0, k: 0 }
    }

    /// Records `(α^k, γ^k)` and advances `k`.
    pub fn advance(&mut self, alpha: f64, gamma: f64) {
        self.alpha_prev = alpha;
        self.gamma_prev = gamma;
        self.k += 1;
    }
}

/// Per-agent counterpart of [`StepsizeState`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStepsizeState {
    pub alpha_prev: Vec<f64>,
    pub gamma_prev: Vec<f64>,
    pub alpha_tilde: Vec<f64>,
    pub alpha_hat: Vec<Option<f64>>,
    pub k: usize,
}

impl LocalStepsizeState {
    /// `Λ⁰ = α⁰ I`, `Γ⁰ = I`.
    pub fn new(m: usize, alpha0: f64) -> Self {
        LocalStepsizeState {
            alpha_prev: vec![alpha0; m],
            gamma_prev: vec![1.0; m],
            alpha_tilde: vec![alpha0; m],
            alpha_hat: vec![None; m],
            k: 0,
        }
    }

    pub fn is_consensual(&self) -> bool {
        self.alpha_prev.windows(2).all(|w| w[0] == w[1])
    }
}

fn secant(dg_sq: f64, dx_sq: f64) -> Result<f64> {
    if !dg_sq.is_finite() || !dx_sq.is_finite() {
        return Err(Error::Numeric("non-finite input to curvature estimate".into()));
    }
    if dx_sq == 0.0 {
        return Ok(0.0);
    }
    Ok((dg_sq / dx_sq).sqrt())
}

fn check_same_shape(mats: [&Mat; 4]) -> Result<()> {
    let shape = mats[0].shape();
    if mats.iter().any(|m| m.shape() != shape) {
        return Err(Error::Shape("curvature inputs must share a shape".into()));
    }
    Ok(())
}

/// `L^k = ‖∇F(X^k) − ∇F(X^{k−1})‖ / ‖X^k − X^{k−1}‖` (Frobenius), with
/// `L^k = 0` for a zero displacement.
pub fn curvature_global(grad_now: &Mat, grad_prev: &Mat, x_now: &Mat, x_prev: &Mat) -> Result<f64> {
    check_same_shape([grad_now, grad_prev, x_now, x_prev])?;
    secant((grad_now - grad_prev).norm_squared(), (x_now - x_prev).norm_squared())
}

/// Row-wise secant estimates `L_i^k`.
pub fn curvature_local(grad_now: &Mat, grad_prev: &Mat, x_now: &Mat, x_prev: &Mat) -> Result<Vec<f64>> {
    check_same_shape([grad_now, grad_prev, x_now, x_prev])?;
    (0..x_now.nrows())
        .map(|i| {
            secant(
                (grad_now.row(i) - grad_prev.row(i)).norm_squared(),
                (x_now.row(i) - x_prev.row(i)).norm_squared(),
            )
        })
        .collect()
}

/// `1 / (√(L² + 2σ/c₁) + L)`: the largest stepsize compatible with the
/// curvature estimate `L` and dual stepsize `σ`.
pub fn curvature_bound(l: f64, sigma: f64, c1: f64) -> f64 {
    1.0 / ((l * l + 2.0 * sigma / c1).sqrt() + l)
}

/// `(1/2 − σ/c₁) / L`, the explicit form of [`curvature_bound`] under
/// `σ^k = σ/α²`. `None` when `L = 0`.
pub fn strongly_convex_bound(l: f64, sigma: f64, c1: f64) -> Option<f64> {
    (l > 0.0).then(|| (0.5 - sigma / c1) / l)
}

/// Optimal Young parameter `ζ^k = (√(L² + 2σ/c₁) − L)/2` that equates the
/// two terms of the stepsize criterion.
pub fn optimal_zeta(l: f64, sigma: f64, c1: f64) -> f64 {
    0.5 * ((l * l + 2.0 * sigma / c1).sqrt() - l)
}

/// `(c₂ + √(c₂² + 4))/2`, the fixed point bounding every `γ^k` when `γ⁰ = 1`.
pub fn gamma_ratio_bound(c2: f64) -> f64 {
    0.5 * (c2 + (c2 * c2 + 4.0).sqrt())
}

fn min_terms(terms: impl IntoIterator<Item = Option<f64>>) -> f64 {
    terms.into_iter().flatten().fold(f64::INFINITY, f64::min)
}

/// `α^k = min{ 1/(√((L^k)² + 2σ^k/c₁) + L^k), √(1 + c₂γ^{k−1}) α^{k−1}, π^k(α^{k−1}) }`
/// and `γ^k = α^k / α^{k−1}`.
pub fn select_alpha_convex(l_k: f64, sigma_k: f64, state: &StepsizeState, params: &StepsizeParams) -> (f64, f64) {
    let k = state.k.max(1);
    let alpha = min_terms([
        Some(curvature_bound(l_k, sigma_k, params.c1)),
        Some((1.0 + params.c2 * state.gamma_prev).sqrt() * state.alpha_prev),
        params.growth.cap(k, state.alpha_prev),
    ]);
    (alpha, alpha / state.alpha_prev)
}

/// `α^k = min{ (1/2 − σ/c₁)/L^k, √(1 + c₂γ^{k−1}) α^{k−1}, π^k(α^{k−1}) }`.
pub fn select_alpha_strongly_convex(
    l_k: f64,
    state: &StepsizeState,
    params: &StepsizeParams,
) -> Result<(f64, f64)> {
    let SigmaSchedule::InverseAlphaSq { sigma } = params.sigma else {
        return Err(Error::Config("strongly convex selection needs sigma = sigma/alpha^2".into()));
    };
    if params.mode != Mode::StronglyConvexGlobal {
        return Err(Error::Config(format!("strongly convex selection in {:?} mode", params.mode)));
    }
    let k = state.k.max(1);
    let alpha = min_terms([
        strongly_convex_bound(l_k, sigma, params.c1),
        Some((1.0 + params.c2 * state.gamma_prev).sqrt() * state.alpha_prev),
        params.growth.cap(k, state.alpha_prev),
    ]);
    Ok((alpha, alpha / state.alpha_prev))
}

/// Curvature-based candidate `α̂_i^k`; `None` stands for `+∞`.
pub fn local_candidate(l_i: f64, schedule: &SigmaSchedule, c1: f64) -> Option<f64> {
    match *schedule {
        SigmaSchedule::Constant { value } => Some(curvature_bound(l_i, value, c1)),
        SigmaSchedule::InverseAlphaSq { sigma } => strongly_convex_bound(l_i, sigma, c1),
    }
}

/// Outcome of the per-agent sufficient-decrease rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTilde {
    pub value: f64,
    /// Whether the decrease branch fired (`α̂ ≤ π^k(α^{k−1})`).
    pub decreased: bool,
}

/// If `α̂ ≤ π^k(α^{k−1})`, `α̃ = min{η α^{k−1}, α̂}`; otherwise
/// `α̃ = min{π^k(α^{k−1}), √(1 + c₂γ^{k−1}) α^{k−1}}`. Ties take the
/// decrease branch.
pub fn local_tilde(
    alpha_hat: Option<f64>,
    alpha_prev: f64,
    gamma_prev: f64,
    params: &StepsizeParams,
    k: usize,
) -> LocalTilde {
    let cap = params.growth.cap(k, alpha_prev);
    let decreased = match (alpha_hat, cap) {
        (Some(hat), Some(cap)) => hat <= cap,
        (Some(_), None) => true,
        (None, _) => false,
    };
    let value = if decreased {
        min_terms([Some(params.eta * alpha_prev), alpha_hat])
    } else {
        min_terms([cap, Some((1.0 + params.c2 * gamma_prev).sqrt() * alpha_prev)])
    };
    LocalTilde { value, decreased }
}

/// Closed-neighborhood min-consensus: `α_i^k = min_{j ∈ {i} ∪ N_i} α̃_j^k` and
/// `γ_i^k = α̃_i^k / α_i^{k−1}`.
pub fn local_min_consensus(
    alpha_tilde: &[f64],
    neighbors: &[Vec<usize>],
    alpha_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let alpha = neighbors
        .iter()
        .enumerate()
        .map(|(i, nb)| nb.iter().map(|&j| alpha_tilde[j]).fold(alpha_tilde[i], f64::min))
        .collect();
    let gamma = alpha_tilde.iter().zip(alpha_prev).map(|(t, p)| t / p).collect();
    (alpha, gamma)
}

/// Open neighborhoods read off the off-diagonal sparsity of a gossip matrix.
pub fn neighborhoods_from_weights(w: &Mat) -> Vec<Vec<usize>> {
    (0..w.nrows())
        .map(|i| (0..w.ncols()).filter(|&j| j != i && w[(i, j)] != 0.0).collect())
        .collect()
}
