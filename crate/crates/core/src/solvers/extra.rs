use super::{check_divergence, check_shapes, check_square, Solver, StepInfo};
use crate::objectives::ProblemInstance;
use crate::{Error, Mat, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExtraState {
    pub x_now: Mat,
    pub x_prev: Mat,
    pub grad_prev: Option<Mat>,
    /// `WX^{k−1}`, reused so each round multiplies by `W` once.
    pub mixed_prev: Option<Mat>,
    pub k: usize,
    pub comm: u64,
}

/// EXTRA with mixing pair `(W, W̄ = (I + W)/2)` and a fixed stepsize:
/// `X¹ = WX⁰ − α∇F(X⁰)`, then
/// `X^{k+1} = (I + W)X^k − W̄X^{k−1} − α(∇F(X^k) − ∇F(X^{k−1}))`.
#[derive(Debug, Clone)]
pub struct Extra {
    w: Mat,
    alpha: f64,
    state: ExtraState,
}

impl Extra {
    pub fn new(w: &Mat, x0: Mat, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("EXTRA stepsize must be positive, got {alpha}")));
        }
        let m = x0.nrows();
        check_square(w, m)?;
        Ok(Extra {
            w: w.clone(),
            alpha,
            state: ExtraState { x_prev: x0.clone(), x_now: x0, grad_prev: None, mixed_prev: None, k: 0, comm: 0 },
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn state(&self) -> &ExtraState {
        &self.state
    }
}

impl Solver for Extra {
    fn step(&mut self, problem: &ProblemInstance) -> Result<StepInfo> {
        check_shapes(problem, &self.state.x_now)?;
        let grad = problem.stacked_gradient(&self.state.x_now)?;
        let st = &mut self.state;
        let mixed = &self.w * &st.x_now;
        let x_next = match (&st.mixed_prev, &st.grad_prev) {
            (Some(mixed_prev), Some(grad_prev)) => {
                &st.x_now + &mixed - (&st.x_prev + mixed_prev) * 0.5 - (&grad - grad_prev) * self.alpha
            }
            _ => &mixed - &grad * self.alpha,
        };
        check_divergence(st.k + 1, &x_next)?;
        st.x_prev = std::mem::replace(&mut st.x_now, x_next);
        st.mixed_prev = Some(mixed);
        st.grad_prev = Some(grad);
        st.comm += 1;
        let info = StepInfo::uniform(st.k, self.alpha, 1.0, 0.0, 0.0);
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

    fn comm(&self) -> (u64, u64) {
        (self.state.comm, 0)
    }
}
