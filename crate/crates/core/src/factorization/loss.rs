use crate::data::RatingDataset;
use crate::error::{Error, Result};

use super::model::FactorModel;

pub(crate) fn check_shape(model: &FactorModel, data: &RatingDataset) -> Result<()> {
    if model.num_users() != data.num_users() || model.num_items() != data.num_items() {
        return Err(Error::Shape {
            expected: format!("{}x{} ratings", model.num_users(), model.num_items()),
            actual: format!("{}x{}", data.num_users(), data.num_items()),
        });
    }
    Ok(())
}

pub(crate) fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::Shape {
            expected: format!("{n} item weights"),
            actual: weights.len().to_string(),
        });
    }
    if let Some((j, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 1.0 && w.is_finite())) {
        return Err(Error::InvalidArgument(format!("weight of item {j} is {w}; weights must be >= 1")));
    }
    Ok(())
}

pub(crate) fn check_targets(targets: &[Vec<f64>], n: usize, d: usize) -> Result<()> {
    if targets.len() != n || targets.iter().any(|t| t.len() != d) {
        return Err(Error::Shape {
            expected: format!("{n} item targets of length {d}"),
            actual: format!("{} targets", targets.len()),
        });
    }
    Ok(())
}

fn squared_error_sum(model: &FactorModel, data: &RatingDataset, weights: Option<&[f64]>) -> f64 {
    data.triples()
        .iter()
        .map(|t| {
            let e = t.value - model.predict_unchecked(t.user, t.item);
            weights.map_or(1.0, |w| w[t.item]) * e * e
        })
        .sum()
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn user_penalty(model: &FactorModel) -> f64 {
    (0..model.num_users()).map(|i| sq_norm(model.user(i))).sum()
}

/// Squared error over the observed entries plus L2 penalties on both factor
/// matrices.
pub fn regularized_loss(model: &FactorModel, data: &RatingDataset) -> Result<f64> {
    check_shape(model, data)?;
    let items: f64 = (0..model.num_items()).map(|j| sq_norm(model.item(j))).sum();
    Ok(squared_error_sum(model, data, None)
        + model.lambda_u() * user_penalty(model)
        + model.lambda_v() * items)
}

/// `Σ w_j (r_ij − u_iᵀv_j)²` over the observed entries.
pub fn weighted_risk(model: &FactorModel, data: &RatingDataset, weights: &[f64]) -> Result<f64> {
    check_shape(model, data)?;
    check_weights(weights, model.num_items())?;
    Ok(squared_error_sum(model, data, Some(weights)))
}

/// Weighted risk plus `λ_u Σ‖u_i‖² + λ_v Σ‖v_j − s_j‖²`, where `s_j` are
/// the item-encoder outputs.
pub fn text_regularized_loss(
    model: &FactorModel,
    data: &RatingDataset,
    weights: &[f64],
    targets: &[Vec<f64>],
) -> Result<f64> {
    check_targets(targets, model.num_items(), model.d())?;
    let risk = weighted_risk(model, data, weights)?;
    let items: f64 = targets
        .iter()
        .enumerate()
        .map(|(j, s)| model.item(j).iter().zip(s).map(|(v, s)| (v - s) * (v - s)).sum::<f64>())
        .sum();
    Ok(risk + model.lambda_u() * user_penalty(model) + model.lambda_v() * items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rating;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64) -> (FactorModel, RatingDataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n, d) = (4, 5, 3);
        let u = DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
        let v = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let model = FactorModel::from_factors(&u, &v, 0.7, 1.3).unwrap();
        let mut triples = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if rng.random::<f64>() < 0.6 {
                    triples.push(Rating::new(i, j, rng.random_range(1.0..5.0)));
                }
            }
        }
        (model, RatingDataset::new(m, n, triples).unwrap())
    }

    #[test]
    fn single_rating_against_zero_model() {
        let model = FactorModel::zeros(1, 1, 2, 0.0, 0.0).unwrap();
        let data = RatingDataset::new(1, 1, vec![Rating::new(0, 0, 1.0)]).unwrap();
        assert_eq!(regularized_loss(&model, &data).unwrap(), 1.0);
    }

    #[test]
    fn perfect_model_has_zero_loss() {
        let u = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let v = DMatrix::from_row_slice(2, 1, &[3.0, -1.0]);
        let model = FactorModel::from_factors(&u, &v, 0.0, 0.0).unwrap();
        let data = RatingDataset::new(2, 2, vec![Rating::new(0, 0, 3.0), Rating::new(1, 1, -2.0)]).unwrap();
        assert_eq!(regularized_loss(&model, &data).unwrap(), 0.0);
        // targets equal to V and λ_u = 0
        let targets = vec![vec![3.0], vec![-1.0]];
        let model = FactorModel::from_factors(&u, &v, 0.0, 5.0).unwrap();
        assert_eq!(text_regularized_loss(&model, &data, &[1.0, 1.0], &targets).unwrap(), 0.0);
    }

    #[test]
    fn losses_match_brute_force() {
        for seed in 0..10 {
            let (model, data) = random_instance(seed);
            let (u, v) = (model.user_factors(), model.item_factors());
            let w: Vec<f64> = (0..5).map(|j| 1.0 + j as f64 * 0.4).collect();
            let targets: Vec<Vec<f64>> = (0..5).map(|j| vec![0.1 * j as f64, -0.2, 0.3]).collect();
            let (mut risk, mut plain) = (0.0, 0.0);
            for i in 0..4 {
                for j in 0..5 {
                    if let Some(t) = data.triples().iter().find(|t| t.user == i && t.item == j) {
                        let mut p = 0.0;
                        for k in 0..3 {
                            p += u[(i, k)] * v[(j, k)];
                        }
                        risk += w[j] * (t.value - p).powi(2);
                        plain += (t.value - p).powi(2);
                    }
                }
            }
            let (mut pu, mut pv, mut pt) = (0.0, 0.0, 0.0);
            for k in 0..3 {
                for i in 0..4 {
                    pu += u[(i, k)].powi(2);
                }
                for j in 0..5 {
                    pv += v[(j, k)].powi(2);
                    pt += (v[(j, k)] - targets[j][k]).powi(2);
                }
            }
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
            assert!(close(regularized_loss(&model, &data).unwrap(), plain + 0.7 * pu + 1.3 * pv));
            assert!(close(weighted_risk(&model, &data, &w).unwrap(), risk));
            assert!(close(
                text_regularized_loss(&model, &data, &w, &targets).unwrap(),
                risk + 0.7 * pu + 1.3 * pt
            ));
        }
    }

    #[test]
    fn unit_weights_and_zero_targets_reduce_to_plain_loss() {
        let (model, data) = random_instance(4);
        let ones = vec![1.0; 5];
        let zeros = vec![vec![0.0; 3]; 5];
        let plain = regularized_loss(&model, &data).unwrap();
        assert_eq!(text_regularized_loss(&model, &data, &ones, &zeros).unwrap(), plain);
        let penalty = regularized_loss(&FactorModel::from_factors(
            &model.user_factors(),
            &model.item_factors(),
            0.0,
            0.0,
        )
        .unwrap(), &data)
        .unwrap();
        assert_eq!(weighted_risk(&model, &data, &ones).unwrap(), penalty);
    }

    #[test]
    fn doubling_weights_doubles_risk() {
        let (model, data) = random_instance(6);
        let w: Vec<f64> = (0..5).map(|j| 1.0 + j as f64).collect();
        let w2: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
        let a = weighted_risk(&model, &data, &w).unwrap();
        assert_eq!(weighted_risk(&model, &data, &w2).unwrap(), 2.0 * a);
    }

    #[test]
    fn weights_below_one_are_rejected() {
        let (model, data) = random_instance(1);
        assert!(weighted_risk(&model, &data, &[1.0, 1.0, 0.5, 1.0, 1.0]).is_err());
        assert!(weighted_risk(&model, &data, &[1.0; 4]).is_err());
    }
}
