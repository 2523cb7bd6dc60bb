use crate::data::RatingDataset;
use crate::error::{Error, Result};

/// Root mean squared error of `predictions`, given in the order of
/// `test.triples()`.
pub fn rmse(predictions: &[f64], test: &RatingDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty test set".into()));
    }
    if predictions.len() != test.len() {
        return Err(Error::Shape {
            expected: format!("{} predictions", test.len()),
            actual: predictions.len().to_string(),
        });
    }
    let sse: f64 = test
        .triples()
        .iter()
        .zip(predictions)
        .map(|(t, p)| (t.value - p) * (t.value - p))
        .sum();
    Ok((sse / test.len() as f64).sqrt())
}

/// Relative RMSE reduction of the SAM variant, as a fraction (multiply by
/// 100 for percent).
pub fn improvement(best_baseline: f64, best_plus: f64) -> f64 {
    (best_baseline - best_plus) / best_baseline
}

/// Median of a non-empty sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rating;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_values() {
        let one = RatingDataset::new(1, 1, vec![Rating::new(0, 0, 3.0)]).unwrap();
        assert_eq!(rmse(&[3.0], &one).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0], &one).unwrap(), 2.0);
        assert!(rmse(&[], &one).is_err());
        assert!((100.0 * improvement(0.910, 0.907) - 0.33).abs() < 0.005);
        assert!((100.0 * improvement(1.044, 1.020) - 2.30).abs() < 0.005);
        assert_eq!(improvement(0.9, 0.9), 0.0);
    }

    #[test]
    fn matches_naive_loop_and_ignores_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let triples: Vec<Rating> = (0..100).map(|k| Rating::new(k / 10, k % 10, rng.random_range(1.0..5.0))).collect();
        let preds: Vec<f64> = (0..100).map(|_| rng.random_range(1.0..5.0)).collect();
        let data = RatingDataset::new(10, 10, triples.clone()).unwrap();
        let mut sse = 0.0;
        for k in 0..100 {
            sse += (triples[k].value - preds[k]).powi(2);
        }
        let r = rmse(&preds, &data).unwrap();
        assert!((r - (sse / 100.0).sqrt()).abs() < 1e-12);
        let rev = RatingDataset::new(10, 10, triples.iter().rev().copied().collect()).unwrap();
        let rev_preds: Vec<f64> = preds.iter().rev().copied().collect();
        assert!((rmse(&rev_preds, &rev).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
