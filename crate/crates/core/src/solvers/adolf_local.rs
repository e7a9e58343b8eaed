use super::{check_divergence, check_shapes, check_square, extrapolate_rows, Solver, StepInfo};
use crate::diagnostics::secant_strong_convexity;
use crate::objectives::ProblemInstance;
use crate::stepsize::{
    curvature_local, dual_scale, local_candidate, local_min_consensus, local_tilde, neighborhoods_from_weights,
    sigma_value, LocalStepsizeState, Mode, StepsizeParams,
};
use crate::{Error, Mat, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdolfLocalState {
    pub x_now: Mat,
    pub x_prev: Mat,
    pub d: Mat,
    pub grad_prev: Option<Mat>,
    pub local_step: LocalStepsizeState,
    pub k: usize,
    pub comm_vector: u64,
    pub comm_scalar: u64,
}

/// ADOLF with per-agent stepsizes agreed on by neighbor min-consensus.
#[derive(Debug, Clone)]
pub struct AdolfLocal {
    lap: Mat,
    neighbors: Vec<Vec<usize>>,
    params: StepsizeParams,
    state: AdolfLocalState,
}

impl AdolfLocal {
    pub fn new(w: &Mat, x0: Mat, x_minus1: Option<Mat>, params: StepsizeParams) -> Result<Self> {
        params.validate()?;
        if params.mode != Mode::Local {
            return Err(Error::Config("ADOLF-local needs the local stepsize mode".into()));
        }
        let m = x0.nrows();
        check_square(w, m)?;
        let x_prev = x_minus1.unwrap_or_else(|| x0.clone());
        if x_prev.shape() != x0.shape() {
            return Err(Error::Shape("X^{-1} and X^0 must share a shape".into()));
        }
        let d = Mat::zeros(m, x0.ncols());
        Ok(AdolfLocal {
            lap: Mat::identity(m, m) - w,
            neighbors: neighborhoods_from_weights(w),
            params,
            state: AdolfLocalState {
                x_now: x0,
                x_prev,
                d,
                grad_prev: None,
                local_step: LocalStepsizeState::new(m, params.alpha0),
                k: 0,
                comm_vector: 0,
                comm_scalar: 0,
            },
        })
    }

    pub fn state(&self) -> &AdolfLocalState {
        &self.state
    }

    pub fn params(&self) -> &StepsizeParams {
        &self.params
    }

    /// Per-agent `(α_i^k, γ_i^k, L_i^k)` and the number of decrease events.
    fn select(&mut self, grad: &Mat) -> Result<(Vec<f64>, Vec<f64>, Option<Vec<f64>>, usize)> {
        let st = &mut self.state;
        let m = st.x_now.nrows();
        if st.k == 0 {
            let ls = &st.local_step;
            let l0 = (st.x_now == st.x_prev).then(|| vec![0.0; m]);
            return Ok((ls.alpha_prev.clone(), ls.gamma_prev.clone(), l0, 0));
        }
        let grad_prev = st.grad_prev.as_ref().expect("gradient cached after the first step");
        let l = curvature_local(grad, grad_prev, &st.x_now, &st.x_prev)?;
        let ls = &mut st.local_step;
        let mut decreases = 0;
        let mut tilde = Vec::with_capacity(m);
        for i in 0..m {
            let hat = local_candidate(l[i], &self.params.sigma, self.params.c1);
            let t = local_tilde(hat, ls.alpha_prev[i], ls.gamma_prev[i], &self.params, st.k);
            decreases += usize::from(t.decreased);
            ls.alpha_hat[i] = hat;
            tilde.push(t.value);
        }
        let (alpha, gamma) = local_min_consensus(&tilde, &self.neighbors, &ls.alpha_prev);
        ls.alpha_tilde = tilde;
        Ok((alpha, gamma, Some(l), decreases))
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

impl Solver for AdolfLocal {
    fn step(&mut self, problem: &ProblemInstance) -> Result<StepInfo> {
        check_shapes(problem, &self.state.x_now)?;
        let grad = problem.stacked_gradient(&self.state.x_now)?;
        let (alpha, gamma, l, decreases) = self.select(&grad)?;
        let sigma: Vec<f64> = alpha.iter().map(|&a| sigma_value(&self.params.sigma, a)).collect();
        let scale: Vec<f64> = alpha.iter().map(|&a| dual_scale(&self.params.sigma, a)).collect();

        let st = &mut self.state;
        let mu_secant = st
            .grad_prev
            .as_ref()
            .and_then(|gp| secant_strong_convexity(&grad, gp, &st.x_now, &st.x_prev));

        // (I − W) acts after the diagonal scaling
        st.d += &self.lap * extrapolate_rows(&st.x_now, &st.x_prev, &gamma, &scale);
        let mut x_next = &grad + &st.d;
        for (i, mut row) in x_next.row_iter_mut().enumerate() {
            row *= -alpha[i];
            row += st.x_now.row(i);
        }
        check_divergence(st.k + 1, &x_next)?;

        if st.k > 0 {
            st.local_step.alpha_prev.clone_from(&alpha);
            st.local_step.gamma_prev.clone_from(&gamma);
            st.comm_scalar += 1;
        }
        st.local_step.k = st.k + 1;
        st.comm_vector += 1;
        st.x_prev = std::mem::replace(&mut st.x_now, x_next);
        st.grad_prev = Some(grad);

        let (alpha_min, alpha_max) = min_max(&alpha);
        let (gamma_min, gamma_max) = min_max(&gamma);
        let info = StepInfo {
            k: st.k,
            alpha_min,
            alpha_max,
            gamma_min,
            gamma_max,
            sigma: min_max(&sigma).1,
            dual_scale: min_max(&scale).1,
            l_k: l.map(|l| min_max(&l).1),
            mu_secant,
            decreases,
        };
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
