use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{LogisticObjective, Objective, ProblemInstance, RidgeObjective};
use crate::{Error, Mat, Result, Vector};

fn check_sizes(m: usize, n: usize, d: usize) -> Result<()> {
    if m == 0 || n == 0 || d == 0 {
        return Err(Error::InvalidSize(format!("m, n, d must be positive, got ({m}, {n}, {d})")));
    }
    Ok(())
}

/// Ridge instance with i.i.d. standard normal `A_i`, `b_i` and
/// `γ_i = 0.1 + (i−1)·0.1` for 1-indexed agents.
pub fn synth_ridge(m: usize, n: usize, d: usize, seed: u64) -> Result<ProblemInstance> {
    check_sizes(m, n, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objectives = (0..m)
        .map(|i| {
            let a = Mat::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
            let b = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let gamma = 0.1 + i as f64 * 0.1;
            RidgeObjective::new(a, b, gamma).map(Objective::Ridge)
        })
        .collect::<Result<Vec<_>>>()?;
    ProblemInstance::new(objectives)
}

/// Logistic instance with Gaussian features, a planted Gaussian separator and
/// labels flipped independently with probability `noise`.
pub fn synth_logistic(m: usize, n: usize, d: usize, seed: u64, noise: f64) -> Result<ProblemInstance> {
    check_sizes(m, n, d)?;
    if !(0.0..=0.5).contains(&noise) {
        return Err(Error::Parameter(format!("label noise must lie in [0, 1/2], got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let separator = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    let objectives = (0..m)
        .map(|_| {
            let features = Mat::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
            let labels = Vector::from_fn(n, |j, _| {
                let clean = if features.row(j).transpose().dot(&separator) >= 0.0 { 1.0 } else { -1.0 };
                if rng.random_bool(noise) {
                    -clean
                } else {
                    clean
                }
            });
            LogisticObjective::new(features, labels).map(Objective::Logistic)
        })
        .collect::<Result<Vec<_>>>()?;
    ProblemInstance::new(objectives)
}
