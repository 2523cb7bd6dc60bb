use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::residual::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterationConfig {
    /// Stop when successive estimates of σ differ by less than `tol`.
    pub tol: f64,
    pub max_iters: usize,
    /// Seed of the random start vector when no warm start is given.
    pub seed: u64,
}

impl Default for PowerIterationConfig {
    fn default() -> Self {
        PowerIterationConfig {
            tol: 1e-8,
            max_iters: 1000,
            seed: 0,
        }
    }
}

/// Largest singular value with its unit singular vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    /// Left singular vector, length `m`.
    pub left: Vec<f64>,
    /// Right singular vector, length `n`.
    pub right: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scale(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// Power iteration on `AᵀA`, using only products with `A` and `Aᵀ`.
///
/// `start` warm-starts the right vector; otherwise a seeded Gaussian vector
/// is used. When `max_iters` runs out the best estimate is returned with
/// `converged == false`.
pub fn spectral_norm<A: LinearOperator + ?Sized>(
    op: &A,
    config: &PowerIterationConfig,
    start: Option<&[f64]>,
) -> SpectralNorm {
    let (m, n) = (op.nrows(), op.ncols());
    let mut right: Vec<f64> = match start {
        Some(s) if s.len() == n && norm(s) > 0.0 => s.to_vec(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
    };
    let r = norm(&right);
    scale(&mut right, 1.0 / r);

    let mut left = vec![0.0; m];
    let mut next = vec![0.0; n];
    let mut value = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=config.max_iters.max(1) {
        iterations = it;
        op.apply(&right, &mut left);
        let sigma = norm(&left);
        if sigma == 0.0 {
            value = 0.0;
            converged = true;
            break;
        }
        scale(&mut left, 1.0 / sigma);
        let delta = (sigma - value).abs();
        value = sigma;
        if it > 1 && delta < config.tol {
            converged = true;
            break;
        }
        op.apply_transpose(&left, &mut next);
        let s = norm(&next);
        if s == 0.0 {
            converged = true;
            break;
        }
        scale(&mut next, 1.0 / s);
        std::mem::swap(&mut right, &mut next);
    }
    if value == 0.0 {
        left.fill(0.0);
        if let Some(first) = left.first_mut() {
            *first = 1.0;
        }
    }
    SpectralNorm {
        value,
        left,
        right,
        iterations,
        converged,
    }
}
