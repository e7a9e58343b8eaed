use serde::{Deserialize, Serialize};

use super::{check_divergence, check_shapes, check_square, Solver, StepInfo};
use crate::diagnostics::secant_strong_convexity;
use crate::objectives::ProblemInstance;
use crate::stepsize::{
    curvature_bound, curvature_global, dual_scale, select_alpha_convex, select_alpha_strongly_convex, sigma_value,
    Mode, StepsizeParams, StepsizeState,
};
use crate::{Error, Mat, Result};

/// How ADOLF chooses `(α^k, σ^k, γ^k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdolfSchedule {
    Adaptive(StepsizeParams),
    /// Selection disabled: constant parameters throughout.
    Fixed { alpha: f64, sigma: f64, gamma: f64 },
}

impl AdolfSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            AdolfSchedule::Adaptive(p) => {
                p.validate()?;
                if p.mode == Mode::Local {
                    return Err(Error::Config("ADOLF needs a global stepsize mode".into()));
                }
                Ok(())
            }
            AdolfSchedule::Fixed { alpha, sigma, gamma } => {
                if [alpha, sigma, gamma].iter().all(|v| **v > 0.0 && v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("fixed alpha, sigma, gamma must be positive, got ({alpha}, {sigma}, {gamma})")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdolfState {
    pub x_now: Mat,
    pub x_prev: Mat,
    pub d: Mat,
    /// `∇F(X^{k−1})`; absent before the initialization step.
    pub grad_prev: Option<Mat>,
    pub step: StepsizeState,
    pub sigma_prev: f64,
    pub k: usize,
    pub comm_vector: u64,
    pub comm_scalar: u64,
}

/// ADOLF with a global (network-wide) stepsize.
#[derive(Debug, Clone)]
pub struct Adolf {
    lap: Mat,
    schedule: AdolfSchedule,
    state: AdolfState,
}

impl Adolf {
    /// Engine at `k = 0` holding `X⁰`, `X^{−1}` (defaults to `X⁰`) and `D⁰ = 0`.
    pub fn new(w: &Mat, x0: Mat, x_minus1: Option<Mat>, schedule: AdolfSchedule) -> Result<Self> {
        schedule.validate()?;
        check_square(w, x0.nrows())?;
        let x_prev = x_minus1.unwrap_or_else(|| x0.clone());
        if x_prev.shape() != x0.shape() {
            return Err(Error::Shape("X^{-1} and X^0 must share a shape".into()));
        }
        let alpha0 = match schedule {
            AdolfSchedule::Adaptive(p) => p.alpha0,
            AdolfSchedule::Fixed { alpha, .. } => alpha,
        };
        let m = w.nrows();
        let d = Mat::zeros(x0.nrows(), x0.ncols());
        Ok(Adolf {
            lap: Mat::identity(m, m) - w,
            schedule,
            state: AdolfState {
                x_now: x0,
                x_prev,
                d,
                grad_prev: None,
                step: StepsizeState::new(alpha0),
                sigma_prev: f64::NAN,
                k: 0,
                comm_vector: 0,
                comm_scalar: 0,
            },
        })
    }

    /// The engine after its initialization step: `(X¹, X⁰, D¹)` at `k = 1`.
    pub fn init(
        problem: &ProblemInstance,
        w: &Mat,
        x0: Mat,
        x_minus1: Option<Mat>,
        schedule: AdolfSchedule,
    ) -> Result<Self> {
        let mut engine = Self::new(w, x0, x_minus1, schedule)?;
        engine.step(problem)?;
        Ok(engine)
    }

    pub fn state(&self) -> &AdolfState {
        &self.state
    }

    pub fn schedule(&self) -> &AdolfSchedule {
        &self.schedule
    }

    /// Replaces the schedule with constant parameters from the next step on.
    pub fn schedule_fixed(&mut self, alpha: f64, sigma: f64, gamma: f64) {
        self.schedule = AdolfSchedule::Fixed { alpha, sigma, gamma };
    }

    /// `(α^k, γ^k, σ^k, L^k)` for the current iteration.
    fn select(&self, grad: &Mat) -> Result<(f64, f64, f64, Option<f64>)> {
        let st = &self.state;
        if st.k == 0 {
            let l0 = (st.x_now == st.x_prev).then_some(0.0);
            return Ok(match self.schedule {
                AdolfSchedule::Adaptive(p) => (p.alpha0, 1.0, sigma_value(&p.sigma, p.alpha0), l0),
                AdolfSchedule::Fixed { alpha, sigma, gamma } => (alpha, gamma, sigma, l0),
            });
        }
        let grad_prev = st.grad_prev.as_ref().expect("gradient cached after the first step");
        let l = curvature_global(grad, grad_prev, &st.x_now, &st.x_prev)?;
        Ok(match self.schedule {
            AdolfSchedule::Fixed { alpha, sigma, gamma } => (alpha, gamma, sigma, Some(l)),
            AdolfSchedule::Adaptive(p) => {
                let (alpha, gamma) = match p.mode {
                    Mode::ConvexGlobal => select_alpha_convex(l, sigma_value(&p.sigma, 0.0), &st.step, &p),
                    Mode::StronglyConvexGlobal => select_alpha_strongly_convex(l, &st.step, &p)?,
                    Mode::Local => unreachable!("rejected at construction"),
                };
                (alpha, gamma, sigma_value(&p.sigma, alpha), Some(l))
            }
        })
    }

    /// Largest stepsize the curvature certificate allows at this iteration.
    pub fn curvature_limit(&self, l: f64, sigma: f64) -> Option<f64> {
        match self.schedule {
            AdolfSchedule::Adaptive(p) => Some(curvature_bound(l, sigma, p.c1)),
            AdolfSchedule::Fixed { .. } => None,
        }
    }
}

impl Solver for Adolf {
    fn step(&mut self, problem: &ProblemInstance) -> Result<StepInfo> {
        check_shapes(problem, &self.state.x_now)?;
        let grad = problem.stacked_gradient(&self.state.x_now)?;
        let (alpha, gamma, sigma, l_k) = self.select(&grad)?;
        let scale = match self.schedule {
            AdolfSchedule::Adaptive(p) => dual_scale(&p.sigma, alpha),
            AdolfSchedule::Fixed { .. } => sigma * alpha,
        };
        let st = &mut self.state;
        let mu_secant = st
            .grad_prev
            .as_ref()
            .and_then(|gp| secant_strong_convexity(&grad, gp, &st.x_now, &st.x_prev));

        let extrapolated = &st.x_now * (1.0 + gamma) - &st.x_prev * gamma;
        st.d += &self.lap * extrapolated * scale;
        let x_next = &st.x_now - (&grad + &st.d) * alpha;
        check_divergence(st.k + 1, &x_next)?;

        if st.k == 0 {
            st.step.k = 1;
        } else {
            st.step.advance(alpha, gamma);
            if matches!(self.schedule, AdolfSchedule::Adaptive(_)) {
                st.comm_scalar += 1;
            }
        }
        st.comm_vector += 1;
        st.sigma_prev = sigma;
        st.x_prev = std::mem::replace(&mut st.x_now, x_next);
        st.grad_prev = Some(grad);
        let info = StepInfo { l_k, mu_secant, ..StepInfo::uniform(st.k, alpha, gamma, sigma, scale) };
        st.k += 1;
        Ok(info)
    }

    fn k(&self) -> usize {
        self.state.k
    }

    fn x(&self) -> &Mat {
        &self.state.x_now
    }

    fn x_prev(&self) -> &Mat {
        &self.state.x_prev
    }

    fn dual(&self) -> Option<&Mat> {
        Some(&self.state.d)
    }

    fn comm(&self) -> (u64, u64) {
        (self.state.comm_vector, self.state.comm_scalar)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{reference_minimizer, synth_ridge, Objective, RidgeObjective};
    use crate::solvers::testutil::{gaussian, ring_ridge};
    use crate::stepsize::gamma_ratio_bound;
    use crate::Vector;

    #[test]
    fn init_dual_is_scaled_laplacian() {
        let (p, gm) = ring_ridge(5, 3, 1);
        let w = gm.w().unwrap();
        let x0 = gaussian(5, 3, 2);
        let params = StepsizeParams { alpha0: 0.01, ..StepsizeParams::convex() };
        let engine = Adolf::init(&p, w, x0.clone(), None, AdolfSchedule::Adaptive(params)).unwrap();
        let st = engine.state();
        let lap = Mat::identity(5, 5) - w;
        let expected = &lap * &x0 * (1.0 * 0.01);
        assert!((&st.d - &expected).norm() < 1e-14);
        assert!(st.d.row_sum().norm() < 1e-12);
        assert_eq!(st.k, 1);
        assert_eq!(st.comm_vector, 1);
        assert_eq!(st.comm_scalar, 0);
        assert_eq!(st.x_prev, x0);
        let grad = p.stacked_gradient(&x0).unwrap();
        assert!((&st.x_now - (&x0 - (grad + expected) * 0.01)).norm() < 1e-14);
    }

    #[test]
    fn strongly_convex_init_scale() {
        let (p, gm) = ring_ridge(4, 2, 3);
        let w = gm.w().unwrap();
        let x0 = gaussian(4, 2, 4);
        let params = StepsizeParams { alpha0: 0.1, ..StepsizeParams::strongly_convex() };
        let engine = Adolf::init(&p, w, x0.clone(), None, AdolfSchedule::Adaptive(params)).unwrap();
        let lap = Mat::identity(4, 4) - w;
        let expected = &lap * &x0 * (0.2 / 0.1);
        assert!((&engine.state().d - expected).norm() < 1e-12);
    }

    /// Minimizer of each agent's own loss equals the global one.
    fn homogeneous(m: usize) -> (ProblemInstance, Vector) {
        let a = gaussian(6, 3, 11);
        let r = RidgeObjective::new(a, Vector::from_element(6, 1.0), 0.3).unwrap();
        let p = ProblemInstance::new(vec![Objective::Ridge(r); m]).unwrap();
        let x = reference_minimizer(&p, 1e-12, 1000).unwrap();
        (p, x)
    }

    #[test]
    fn consensual_stationary_state_is_fixed() {
        let (p, x_star) = homogeneous(5);
        let gm = ring_ridge(5, 3, 0).1;
        let x0 = Mat::from_fn(5, 3, |_, j| x_star[j]);
        let mut engine = Adolf::new(gm.w().unwrap(), x0.clone(), None, AdolfSchedule::Adaptive(StepsizeParams::convex())).unwrap();
        for _ in 0..20 {
            engine.step(&p).unwrap();
            assert!((engine.x() - &x0).norm() < 1e-12);
            assert!(engine.dual().unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn saddle_stationarity_is_fixed_point() {
        // heterogeneous agents: X* consensual with D* = −∇F(X*)
        let (p, gm) = ring_ridge(5, 3, 5);
        let x_star = reference_minimizer(&p, 1e-12, 1000).unwrap();
        let x0 = Mat::from_fn(5, 3, |_, j| x_star[j]);
        let grad = p.stacked_gradient(&x0).unwrap();
        let mut engine = Adolf::new(gm.w().unwrap(), x0.clone(), None, AdolfSchedule::Adaptive(StepsizeParams::convex())).unwrap();
        engine.state.d = -grad.clone();
        for _ in 0..10 {
            engine.step(&p).unwrap();
            assert!((engine.x() - &x0).norm() < 1e-10);
            assert!((engine.dual().unwrap() + &grad).norm() < 1e-10);
        }
    }

    #[test]
    fn single_agent_is_adaptive_gradient_descent() {
        let p = synth_ridge(1, 8, 3, 4).unwrap();
        let w = Mat::identity(1, 1);
        let x0 = gaussian(1, 3, 5);
        let mut engine = Adolf::new(&w, x0, None, AdolfSchedule::Adaptive(StepsizeParams::convex())).unwrap();
        for _ in 0..50 {
            let x = engine.x().clone();
            let g = p.stacked_gradient(&x).unwrap();
            let info = engine.step(&p).unwrap();
            assert_eq!(engine.dual().unwrap().norm(), 0.0);
            assert!((engine.x() - (&x - g * info.alpha_min)).norm() < 1e-14);
        }
    }

    #[test]
    fn dual_column_sums_and_gamma_bound() {
        let (p, gm) = ring_ridge(6, 4, 8);
        let params = StepsizeParams { c1: 0.9, c2: 0.9, ..StepsizeParams::convex() };
        let mut engine = Adolf::new(gm.w().unwrap(), gaussian(6, 4, 9), None, AdolfSchedule::Adaptive(params)).unwrap();
        for k in 0..300 {
            let info = engine.step(&p).unwrap();
            let d = engine.dual().unwrap();
            assert!(d.row_sum().norm() <= 1e-9 * (1.0 + d.norm()));
            assert!(info.gamma_max <= gamma_ratio_bound(0.9) + 1e-12);
            assert_eq!(engine.comm(), (k as u64 + 1, k as u64));
            if let Some(l) = info.l_k {
                assert!(info.alpha_min <= curvature_bound(l, 1.0, 0.9) * (1.0 + 1e-15) || k == 0);
            }
        }
    }

    #[test]
    fn converges_on_ridge() {
        let (p, gm) = ring_ridge(5, 3, 12);
        let x_star = reference_minimizer(&p, 1e-12, 1000).unwrap();
        let params = StepsizeParams::strongly_convex();
        let mut engine = Adolf::new(gm.w().unwrap(), gaussian(5, 3, 1), None, AdolfSchedule::Adaptive(params)).unwrap();
        for _ in 0..3000 {
            engine.step(&p).unwrap();
        }
        let target = Mat::from_fn(5, 3, |_, j| x_star[j]);
        assert!((engine.x() - target).norm_squared() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let (p, gm) = ring_ridge(4, 2, 1);
        let schedule = AdolfSchedule::Fixed { alpha: 50.0, sigma: 1.0, gamma: 1.0 };
        let mut engine = Adolf::new(gm.w().unwrap(), gaussian(4, 2, 1), None, schedule).unwrap();
        let err = (0..1000).find_map(|_| engine.step(&p).err()).unwrap();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = Mat::identity(3, 3);
        assert!(Adolf::new(&w, Mat::zeros(2, 2), None, AdolfSchedule::Adaptive(StepsizeParams::convex())).is_err());
        assert!(Adolf::new(&w, Mat::zeros(3, 2), Some(Mat::zeros(3, 1)), AdolfSchedule::Adaptive(StepsizeParams::convex())).is_err());
        assert!(Adolf::new(&w, Mat::zeros(3, 2), None, AdolfSchedule::Adaptive(StepsizeParams::local())).is_err());
        assert!(Adolf::new(&w, Mat::zeros(3, 2), None, AdolfSchedule::Fixed { alpha: -1.0, sigma: 1.0, gamma: 1.0 }).is_err());
        let (p, _) = ring_ridge(3, 4, 0);
        let mut engine = Adolf::new(&w, Mat::zeros(3, 2), None, AdolfSchedule::Adaptive(StepsizeParams::convex())).unwrap();
        assert!(matches!(engine.step(&p), Err(Error::Shape(_))));
    }

    #[test]
    fn deterministic() {
        let (p, gm) = ring_ridge(4, 3, 2);
        let run = || {
            let mut e = Adolf::new(gm.w().unwrap(), gaussian(4, 3, 3), None, AdolfSchedule::Adaptive(StepsizeParams::convex())).unwrap();
            for _ in 0..100 {
                e.step(&p).unwrap();
            }
            e.state().clone()
        };
        assert_eq!(run(), run());
    }
}
