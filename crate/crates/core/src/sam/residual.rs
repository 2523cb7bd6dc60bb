use nalgebra::DMatrix;

use crate::data::IndicatorView;
use crate::error::{Error, Result};

/// A matrix known only through products with vectors.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `x = Aᵀ y`
    fn apply_transpose(&self, y: &[f64], x: &mut [f64]);
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.shape().0
    }

    fn ncols(&self) -> usize {
        self.shape().1
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (j, &xj) in x.iter().enumerate() {
            for (yi, a) in y.iter_mut().zip(self.column(j).iter()) {
                *yi += a * xj;
            }
        }
    }

    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = self.column(j).iter().zip(y).map(|(a, b)| a * b).sum();
        }
    }
}

/// `I∘W − J` for column-constant weights: `w_j − 1` where `(i, j)` is
/// observed and `−1` elsewhere. Products cost `O(|Ω| + m + n)`.
#[derive(Debug, Clone, Copy)]
pub struct MaskedResidual<'a> {
    indicator: &'a IndicatorView,
    weights: &'a [f64],
}

impl<'a> MaskedResidual<'a> {
    pub fn new(indicator: &'a IndicatorView, weights: &'a [f64]) -> Result<Self> {
        if weights.len() != indicator.num_cols() {
            return Err(Error::Shape {
                expected: format!("{} item weights", indicator.num_cols()),
                actual: weights.len().to_string(),
            });
        }
        Ok(MaskedResidual { indicator, weights })
    }

    pub fn indicator(&self) -> &IndicatorView {
        self.indicator
    }

    pub fn weights(&self) -> &[f64] {
        self.weights
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if self.indicator.get(i, j) {
            self.weights[j] - 1.0
        } else {
            -1.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows(), self.ncols(), |i, j| self.entry(i, j))
    }
}

impl LinearOperator for MaskedResidual<'_> {
    fn nrows(&self) -> usize {
        self.indicator.num_rows()
    }

    fn ncols(&self) -> usize {
        self.indicator.num_cols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let total: f64 = x.iter().sum();
        for (i, yi) in y.iter_mut().enumerate() {
            let observed: f64 = self
                .indicator
                .row(i)
                .iter()
                .map(|&j| self.weights[j] * x[j])
                .sum();
            *yi = observed - total;
        }
    }

    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        let total: f64 = y.iter().sum();
        for (j, xj) in x.iter_mut().enumerate() {
            let observed: f64 = self.indicator.col(j).iter().map(|&i| y[i]).sum();
            *xj = self.weights[j] * observed - total;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, m: usize, n: usize) -> (IndicatorView, Vec<f64>) {
        let density: f64 = rng.random_range(0.05..0.95);
        let pairs: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|_| rng.random::<f64>() < density)
            .collect();
        let weights = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        (IndicatorView::from_pairs(m, n, pairs), weights)
    }

    #[test]
    fn entries_follow_definition() {
        let mask = IndicatorView::from_pairs(2, 2, [(0, 1)]);
        let w = [3.0, 2.5];
        let r = MaskedResidual::new(&mask, &w).unwrap();
        assert_eq!(r.entry(0, 1), 1.5);
        assert_eq!(r.entry(0, 0), -1.0);
        assert_eq!(r.entry(1, 1), -1.0);
    }

    #[test]
    fn weight_length_checked() {
        let mask = IndicatorView::full(2, 3);
        assert!(MaskedResidual::new(&mask, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn matrix_free_products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(m, n) in &[(1, 1), (7, 3), (3, 9), (50, 50), (31, 47)] {
            let (mask, w) = random_instance(&mut rng, m, n);
            let r = MaskedResidual::new(&mask, &w).unwrap();
            let dense = r.to_dense();
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (mut a, mut b) = (vec![0.0; m], vec![0.0; m]);
            r.apply(&x, &mut a);
            dense.apply(&x, &mut b);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() <= 1e-12);
            }
            let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
            r.apply_transpose(&y, &mut a);
            dense.apply_transpose(&y, &mut b);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() <= 1e-12);
            }
        }
    }
}
