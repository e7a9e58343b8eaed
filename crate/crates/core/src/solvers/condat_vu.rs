use super::{check_divergence, check_shapes, check_square, Solver, StepInfo};
use crate::objectives::ProblemInstance;
use crate::{Error, Mat, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CondatVuState {
    pub x_now: Mat,
    pub x_prev: Mat,
    pub y: Mat,
    pub k: usize,
    pub comm: u64,
}

/// Centralized primal–dual oracle with operator `Ł` and fixed `(α, σ, γ)`.
/// The constraint `ŁX = 0` has a zero conjugate, so the dual prox is the
/// identity.
#[derive(Debug, Clone)]
pub struct CondatVu {
    l_op: Mat,
    alpha: f64,
    sigma: f64,
    gamma: f64,
    state: CondatVuState,
}

impl CondatVu {
    pub fn new(l_op: Mat, x0: Mat, x_minus1: Option<Mat>, alpha: f64, sigma: f64, gamma: f64) -> Result<Self> {
        if ![alpha, sigma, gamma].iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::Parameter(format!("alpha, sigma, gamma must be positive, got ({alpha}, {sigma}, {gamma})")));
        }
        check_square(&l_op, x0.nrows())?;
        let x_prev = x_minus1.unwrap_or_else(|| x0.clone());
        if x_prev.shape() != x0.shape() {
            return Err(Error::Shape("X^{-1} and X^0 must share a shape".into()));
        }
        let y = Mat::zeros(x0.nrows(), x0.ncols());
        Ok(CondatVu { l_op, alpha, sigma, gamma, state: CondatVuState { x_now: x0, x_prev, y, k: 0, comm: 0 } })
    }

    pub fn state(&self) -> &CondatVuState {
        &self.state
    }

    pub fn y(&self) -> &Mat {
        &self.state.y
    }

    /// `ŁY^k`, the quantity matching the decentralized dual `D^k`.
    pub fn l_y(&self) -> Mat {
        &self.l_op * &self.state.y
    }
}

impl Solver for CondatVu {
    fn step(&mut self, problem: &ProblemInstance) -> Result<StepInfo> {
        check_shapes(problem, &self.state.x_now)?;
        let grad = problem.stacked_gradient(&self.state.x_now)?;
        let (alpha, sigma, gamma) = (self.alpha, self.sigma, self.gamma);
        let st = &mut self.state;
        let extrapolated = &st.x_now * (1.0 + gamma) - &st.x_prev * gamma;
        st.y += &self.l_op * extrapolated * (sigma * alpha);
        let x_next = &st.x_now - (grad + &self.l_op * &st.y) * alpha;
        check_divergence(st.k + 1, &x_next)?;
        st.x_prev = std::mem::replace(&mut st.x_now, x_next);
        st.comm += 1;
        let info = StepInfo::uniform(st.k, alpha, gamma, sigma, sigma * alpha);
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

    fn oracle_dual(&self) -> Option<&Mat> {
        Some(&self.state.y)
    }

    fn comm(&self) -> (u64, u64) {
        (self.state.comm, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::testutil::{gaussian, ring_ridge};
    use crate::solvers::{Adolf, AdolfSchedule};
    use crate::topology::graph_laplacian_sqrt;

    #[test]
    fn matches_fixed_parameter_adolf() {
        let (p, gm) = ring_ridge(5, 3, 1);
        let l_op = graph_laplacian_sqrt(&gm).unwrap();
        let x0 = gaussian(5, 3, 2);
        let mut cv = CondatVu::new(l_op, x0.clone(), None, 1e-2, 1.0, 1.0).unwrap();
        let schedule = AdolfSchedule::Fixed { alpha: 1e-2, sigma: 1.0, gamma: 1.0 };
        let mut adolf = Adolf::new(gm.w().unwrap(), x0, None, schedule).unwrap();
        for _ in 0..100 {
            cv.step(&p).unwrap();
            adolf.step(&p).unwrap();
            assert!((cv.x() - adolf.x()).norm() <= 1e-10);
            assert!((cv.l_y() - adolf.dual().unwrap()).norm() <= 1e-10);
        }
    }

    #[test]
    fn dual_update_is_plain_linear_step() {
        let (p, gm) = ring_ridge(4, 2, 3);
        let l_op = graph_laplacian_sqrt(&gm).unwrap();
        let x0 = gaussian(4, 2, 5);
        let x_m1 = gaussian(4, 2, 6);
        let mut cv = CondatVu::new(l_op.clone(), x0.clone(), Some(x_m1.clone()), 0.1, 2.0, 0.5).unwrap();
        cv.step(&p).unwrap();
        let expected = &l_op * (&x0 * 1.5 - &x_m1 * 0.5) * 0.2;
        assert!((cv.y() - expected).norm() < 1e-14);
        assert_eq!(cv.comm(), (1, 0));
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(CondatVu::new(Mat::zeros(2, 2), Mat::zeros(2, 1), None, 0.0, 1.0, 1.0).is_err());
    }
}
