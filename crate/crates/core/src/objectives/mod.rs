//! Local losses `f_i`, the stacked operators `F(X) = Σ f_i(x_i)` and `∇F`,
//! data generation and a centralized reference solver.

mod mnist;
mod reference;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Mat, Result, Vector};

pub use mnist::{load_mnist_partition, parse_idx_images, parse_idx_labels, IdxImages};
pub use reference::{centralized_minimize, reference_minimizer, ridge_exact_minimizer};
pub use synth::{synth_logistic, synth_ridge};

/// A convex, continuously differentiable loss held privately by one agent.
///
/// Implementors provide the unchecked evaluations; the checked wrappers reject
/// inputs whose length differs from [`LocalObjective::dim`].
pub trait LocalObjective {
    fn dim(&self) -> usize;

    /// Known strong-convexity lower bound, 0 if unknown.
    fn mu_hint(&self) -> f64;

    /// Global Lipschitz constant of the gradient.
    fn smoothness(&self) -> f64;

    fn value_unchecked(&self, x: &Vector) -> f64;

    fn gradient_unchecked(&self, x: &Vector) -> Vector;

    fn value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.value_unchecked(x))
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        Ok(self.gradient_unchecked(x))
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape(format!("expected a {expected}-vector, got length {got}")));
    }
    Ok(())
}

/// Largest eigenvalue of `AᵀA`, computed on the smaller Gram matrix.
fn gram_lambda_max(a: &Mat) -> f64 {
    let gram = if a.nrows() <= a.ncols() { a * a.transpose() } else { a.transpose() * a };
    crate::topology::sorted_eigenvalues(&gram).map(|ev| ev[0].max(0.0)).unwrap_or(f64::NAN)
}

/// `f(x) = (1/n)‖Ax − b‖² + (γ/2)‖x‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeObjective {
    a: Mat,
    b: Vector,
    gamma: f64,
}

impl RidgeObjective {
    pub fn new(a: Mat, b: Vector, gamma: f64) -> Result<Self> {
        if a.nrows() != b.len() || a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::Shape(format!(
                "ridge data: A is {}x{}, b has length {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        if !(gamma > 0.0) {
            return Err(Error::Parameter(format!("ridge coefficient must be positive, got {gamma}")));
        }
        Ok(RidgeObjective { a, b, gamma })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

impl LocalObjective for RidgeObjective {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn mu_hint(&self) -> f64 {
        self.gamma
    }

    fn smoothness(&self) -> f64 {
        2.0 * gram_lambda_max(&self.a) / self.n() as f64 + self.gamma
    }

    fn value_unchecked(&self, x: &Vector) -> f64 {
        let r = &self.a * x - &self.b;
        r.norm_squared() / self.n() as f64 + 0.5 * self.gamma * x.norm_squared()
    }

    fn gradient_unchecked(&self, x: &Vector) -> Vector {
        let r = &self.a * x - &self.b;
        let mut g = self.a.tr_mul(&r) * (2.0 / self.n() as f64);
        g.axpy(self.gamma, x, 1.0);
        g
    }
}

/// `f(x) = (1/n) Σ_j log(1 + exp(−b_j ⟨x, a_j⟩))` with labels in `{−1, +1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticObjective {
    /// One sample per row.
    features: Mat,
    labels: Vector,
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{−t})` without overflow.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticObjective {
    pub fn new(features: Mat, labels: Vector) -> Result<Self> {
        if features.nrows() != labels.len() || features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::Shape(format!(
                "logistic data: features are {}x{}, labels have length {}",
                features.nrows(),
                features.ncols(),
                labels.len()
            )));
        }
        if labels.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(Error::Parameter("logistic labels must be in {-1, +1}".into()));
        }
        Ok(LogisticObjective { features, labels })
    }

    pub fn features(&self) -> &Mat {
        &self.features
    }

    pub fn labels(&self) -> &Vector {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    /// Margins `b_j ⟨x, a_j⟩`.
    fn margins(&self, x: &Vector) -> Vector {
        (&self.features * x).component_mul(&self.labels)
    }
}

impl LocalObjective for LogisticObjective {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn mu_hint(&self) -> f64 {
        0.0
    }

    fn smoothness(&self) -> f64 {
        gram_lambda_max(&self.features) / (4.0 * self.n() as f64)
    }

    fn value_unchecked(&self, x: &Vector) -> f64 {
        self.margins(x).iter().map(|&t| softplus(-t)).sum::<f64>() / self.n() as f64
    }

    fn gradient_unchecked(&self, x: &Vector) -> Vector {
        let n = self.n() as f64;
        let weights = self
            .margins(x)
            .zip_map(&self.labels, |t, b| -b * sigmoid(-t) / n);
        self.features.tr_mul(&weights)
    }
}

/// The closed set of losses an agent may hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    Ridge(RidgeObjective),
    Logistic(LogisticObjective),
}

impl LocalObjective for Objective {
    fn dim(&self) -> usize {
        match self {
            Objective::Ridge(o) => o.dim(),
            Objective::Logistic(o) => o.dim(),
        }
    }

    fn mu_hint(&self) -> f64 {
        match self {
            Objective::Ridge(o) => o.mu_hint(),
            Objective::Logistic(o) => o.mu_hint(),
        }
    }

    fn smoothness(&self) -> f64 {
        match self {
            Objective::Ridge(o) => o.smoothness(),
            Objective::Logistic(o) => o.smoothness(),
        }
    }

    fn value_unchecked(&self, x: &Vector) -> f64 {
        match self {
            Objective::Ridge(o) => o.value_unchecked(x),
            Objective::Logistic(o) => o.value_unchecked(x),
        }
    }

    fn gradient_unchecked(&self, x: &Vector) -> Vector {
        match self {
            Objective::Ridge(o) => o.gradient_unchecked(x),
            Objective::Logistic(o) => o.gradient_unchecked(x),
        }
    }
}

/// `m` local objectives sharing the dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    objectives: Vec<Objective>,
    d: usize,
}

fn row(x: &Mat, i: usize) -> Vector {
    x.row(i).transpose()
}

impl ProblemInstance {
    pub fn new(objectives: Vec<Objective>) -> Result<Self> {
        let d = objectives
            .first()
            .ok_or_else(|| Error::InvalidSize("problem needs at least one objective".into()))?
            .dim();
        if let Some(bad) = objectives.iter().position(|o| o.dim() != d) {
            return Err(Error::Shape(format!(
                "objective {bad} has dimension {}, expected {d}",
                objectives[bad].dim()
            )));
        }
        Ok(ProblemInstance { objectives, d })
    }

    pub fn m(&self) -> usize {
        self.objectives.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn objectives(&self) -> &[Objective] {
        &self.objectives
    }

    fn check_stack(&self, x: &Mat) -> Result<()> {
        if x.nrows() != self.m() || x.ncols() != self.d {
            return Err(Error::Shape(format!(
                "stack must be {}x{}, got {}x{}",
                self.m(),
                self.d,
                x.nrows(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// `F(X) = Σ_i f_i(x_i)`.
    pub fn stacked_value(&self, x: &Mat) -> Result<f64> {
        self.check_stack(x)?;
        Ok(self
            .objectives
            .iter()
            .enumerate()
            .map(|(i, f)| f.value_unchecked(&row(x, i)))
            .sum())
    }

    /// Row `i` of the result is `∇f_i(x_i)`.
    pub fn stacked_gradient(&self, x: &Mat) -> Result<Mat> {
        self.check_stack(x)?;
        let mut g = Mat::zeros(self.m(), self.d);
        for (i, f) in self.objectives.iter().enumerate() {
            g.set_row(i, &f.gradient_unchecked(&row(x, i)).transpose());
        }
        Ok(g)
    }

    /// The averaged objective `f(x) = (1/m) Σ_i f_i(x)`.
    pub fn average_value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.d, x.len())?;
        Ok(self.objectives.iter().map(|f| f.value_unchecked(x)).sum::<f64>() / self.m() as f64)
    }

    pub fn average_gradient(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.d, x.len())?;
        let mut g = Vector::zeros(self.d);
        for f in &self.objectives {
            g += f.gradient_unchecked(x);
        }
        Ok(g / self.m() as f64)
    }

    /// Global smoothness of `F`: the largest local constant.
    pub fn global_smoothness(&self) -> f64 {
        self.objectives.iter().map(LocalObjective::smoothness).fold(0.0, f64::max)
    }

    /// All objectives as ridge losses, if the instance is a pure ridge problem.
    pub fn as_ridge(&self) -> Option<Vec<&RidgeObjective>> {
        self.objectives
            .iter()
            .map(|o| match o {
                Objective::Ridge(r) => Some(r),
                Objective::Logistic(_) => None,
            })
            .collect()
    }

    /// Reproducibility snapshot as JSON.
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let p: ProblemInstance =
            serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        ProblemInstance::new(p.objectives)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, len: usize) -> Vector {
        Vector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(rng)))
    }

    /// Central differences with step 1e-5·(1 + ‖x‖).
    fn fd_gradient(f: &dyn Fn(&Vector) -> f64, x: &Vector) -> Vector {
        let h = 1e-5 * (1.0 + x.norm());
        Vector::from_iterator(
            x.len(),
            (0..x.len()).map(|j| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                (f(&xp) - f(&xm)) / (2.0 * h)
            }),
        )
    }

    fn assert_fd_match(obj: &Objective, rng: &mut ChaCha8Rng) {
        for _ in 0..10 {
            let x = randn(rng, obj.dim());
            let g = obj.gradient(&x).unwrap();
            let fd = fd_gradient(&|y| obj.value_unchecked(y), &x);
            let rel = (&g - &fd).norm() / g.norm().max(1e-12);
            assert!(rel <= 1e-6, "relative gradient error {rel:e}");
        }
    }

    #[test]
    fn ridge_gradient_scalar_case() {
        let r = RidgeObjective::new(Mat::from_element(1, 1, 1.0), Vector::from_element(1, 0.0), 1.0)
            .unwrap();
        let g = r.gradient(&Vector::from_element(1, 1.0)).unwrap();
        assert_abs_diff_eq!(g[0], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn ridge_gradient_vanishes_at_normal_equation_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, d) = (7, 4);
        let a = Mat::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let b = randn(&mut rng, n);
        let gamma = 0.3;
        let r = RidgeObjective::new(a.clone(), b.clone(), gamma).unwrap();
        // (2/n AᵀA + γI) x = 2/n Aᵀb
        let h = a.tr_mul(&a) * (2.0 / n as f64) + Mat::identity(d, d) * gamma;
        let rhs = a.tr_mul(&b) * (2.0 / n as f64);
        let x = h.cholesky().unwrap().solve(&rhs);
        assert!(r.gradient(&x).unwrap().norm() <= 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ridge = synth_ridge(3, 6, 5, 1).unwrap();
        let logistic = synth_logistic(3, 12, 5, 2, 0.1).unwrap();
        for obj in ridge.objectives().iter().chain(logistic.objectives()) {
            assert_fd_match(obj, &mut rng);
        }
    }

    #[test]
    fn logistic_at_origin() {
        let feats = Mat::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.3, 0.3]);
        let labels = Vector::from_vec(vec![1.0, -1.0, 1.0]);
        let obj = LogisticObjective::new(feats.clone(), labels.clone()).unwrap();
        let x = Vector::zeros(2);
        assert_abs_diff_eq!(obj.value(&x).unwrap(), 2f64.ln(), epsilon = 1e-15);
        let expected = -(feats.tr_mul(&labels)) / (2.0 * 3.0);
        assert_abs_diff_eq!(obj.gradient(&x).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn logistic_saturated_sample_is_stable() {
        let obj = LogisticObjective::new(Mat::from_element(1, 1, 1.0), Vector::from_element(1, 1.0))
            .unwrap();
        let g = obj.gradient(&Vector::from_element(1, 50.0)).unwrap();
        assert!(g[0].abs() < 1e-20);
        for t in [-700.0, -300.0, 300.0, 700.0] {
            let x = Vector::from_element(1, t);
            assert!(obj.value(&x).unwrap().is_finite());
            assert!(obj.gradient(&x).unwrap()[0].is_finite());
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let p = synth_ridge(2, 3, 4, 0).unwrap();
        let obj = &p.objectives()[0];
        assert!(matches!(obj.gradient(&Vector::zeros(3)), Err(Error::Shape(_))));
        assert!(matches!(p.stacked_gradient(&Mat::zeros(3, 4)), Err(Error::Shape(_))));
        assert!(LogisticObjective::new(Mat::zeros(2, 2), Vector::from_vec(vec![1.0, 0.0])).is_err());
        assert!(RidgeObjective::new(Mat::zeros(2, 2), Vector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn stacked_gradient_matches_row_loop() {
        let p = synth_logistic(4, 10, 3, 5, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Mat::from_fn(4, 3, |_, _| StandardNormal.sample(&mut rng));
        let g = p.stacked_gradient(&x).unwrap();
        for i in 0..4 {
            let gi = p.objectives()[i].gradient(&x.row(i).transpose()).unwrap();
            assert_eq!(g.row(i), gi.transpose());
        }
        let single = ProblemInstance::new(vec![p.objectives()[0].clone()]).unwrap();
        let x1 = x.rows(0, 1).into_owned();
        let g1 = single.stacked_gradient(&x1).unwrap();
        assert_eq!(g1.row(0), g.row(0));
    }

    #[test]
    fn consensual_stack_at_average_minimizer_is_not_stationary() {
        let p = synth_ridge(3, 5, 2, 4).unwrap();
        let x_star = ridge_exact_minimizer(&p).unwrap();
        let stack = Mat::from_fn(3, 2, |_, j| x_star[j]);
        let g = p.stacked_gradient(&stack).unwrap();
        assert!(g.norm() > 1e-6);
        // yet the rows sum to m·∇f(x*) = 0
        let col_sums = g.row_sum();
        assert!(col_sums.norm() < 1e-10);
    }

    #[test]
    fn ridge_strong_convexity_inequality() {
        let p = synth_ridge(4, 5, 6, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for obj in p.objectives() {
            let Objective::Ridge(r) = obj else { unreachable!() };
            for _ in 0..10 {
                let x = randn(&mut rng, 6);
                let y = randn(&mut rng, 6);
                let lhs = r.value_unchecked(&y);
                let rhs = r.value_unchecked(&x)
                    + r.gradient_unchecked(&x).dot(&(&y - &x))
                    + 0.5 * r.gamma() * (&y - &x).norm_squared();
                assert!(lhs >= rhs - 1e-10);
            }
        }
    }

    #[test]
    fn logistic_is_midpoint_convex() {
        let p = synth_logistic(2, 20, 4, 3, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for obj in p.objectives() {
            for _ in 0..20 {
                let x = randn(&mut rng, 4) * 3.0;
                let y = randn(&mut rng, 4) * 3.0;
                let mid = (&x + &y) * 0.5;
                let lhs = obj.value_unchecked(&mid);
                let rhs = 0.5 * (obj.value_unchecked(&x) + obj.value_unchecked(&y));
                assert!(lhs <= rhs + 1e-12);
            }
        }
    }

    #[test]
    fn smoothness_bounds_secants() {
        let p = synth_ridge(3, 8, 4, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for obj in p.objectives() {
            let l = obj.smoothness();
            for _ in 0..20 {
                let x = randn(&mut rng, 4);
                let y = randn(&mut rng, 4);
                let ratio = (obj.gradient_unchecked(&x) - obj.gradient_unchecked(&y)).norm()
                    / (&x - &y).norm();
                assert!(ratio <= l * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn json_snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let p = synth_logistic(3, 4, 2, 7, 0.1).unwrap();
        p.save_json(&path).unwrap();
        assert_eq!(ProblemInstance::load_json(&path).unwrap(), p);
    }
}
