use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::RatingDataset;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::textprep::Corpus;

use super::loss::{check_shape, check_targets, check_weights};
use super::model::FactorModel;

/// Halvings of the encoder learning rate before a block is given up.
const MAX_ROLLBACKS: usize = 5;

/// Minimiser of `Σ w (r − xᵀz)² + λ‖z − prior‖²` over `z`, or `None` when the
/// normal equations are not positive definite.
fn solve_ridge<'a>(
    rows: impl Iterator<Item = (&'a [f64], f64, f64)>,
    lambda: f64,
    prior: Option<&[f64]>,
    d: usize,
) -> Option<Vec<f64>> {
    let mut a = DMatrix::<f64>::identity(d, d) * lambda;
    let mut b = match prior {
        Some(p) => DVector::from_iterator(d, p.iter().map(|x| lambda * x)),
        None => DVector::zeros(d),
    };
    for (x, w, r) in rows {
        for c in 0..d {
            let wx = w * x[c];
            b[c] += wx * r;
            for k in c..d {
                a[(k, c)] += wx * x[k];
            }
        }
    }
    for c in 0..d {
        for k in c + 1..d {
            a[(c, k)] = a[(k, c)];
        }
    }
    let z = a.cholesky()?.solve(&b);
    z.iter().all(|v| v.is_finite()).then(|| z.as_slice().to_vec())
}

/// Replaces every user vector by its exact minimiser with items fixed:
/// `u_i = (Σ_j w_j v_j v_jᵀ + λ_u I)⁻¹ Σ_j w_j r_ij v_j`.
pub fn update_users(model: &mut FactorModel, data: &RatingDataset, weights: &[f64]) -> Result<()> {
    check_shape(model, data)?;
    check_weights(weights, model.num_items())?;
    let by_user = data.by_user();
    let d = model.d();
    let lambda = model.lambda_u();
    let solved: Vec<Vec<f64>> = by_user
        .par_iter()
        .enumerate()
        .map(|(i, obs)| {
            let rows = obs.iter().map(|&(j, r)| (model.item(j), weights[j], r));
            solve_ridge(rows, lambda, None, d).ok_or_else(|| {
                Error::Singular(format!(
                    "normal equations of user {i} are singular; use lambda_u > 0"
                ))
            })
        })
        .collect::<Result<_>>()?;
    let cols = model.user_columns_mut();
    for (i, u) in solved.into_iter().enumerate() {
        cols.column_mut(i).copy_from_slice(&u);
    }
    Ok(())
}

/// Replaces every item vector by its exact minimiser with users fixed:
/// `v_j = (Σ_i w_j u_i u_iᵀ + λ_v I)⁻¹ (Σ_i w_j r_ij u_i + λ_v s_j)`.
/// Without `targets` every `s_j` is zero. An item with no observations gets
/// `v_j = s_j`.
pub fn update_items(
    model: &mut FactorModel,
    data: &RatingDataset,
    weights: &[f64],
    targets: Option<&[Vec<f64>]>,
) -> Result<()> {
    check_shape(model, data)?;
    check_weights(weights, model.num_items())?;
    let d = model.d();
    if let Some(t) = targets {
        check_targets(t, model.num_items(), d)?;
    }
    let by_item = data.by_item();
    let lambda = model.lambda_v();
    let solved: Vec<Vec<f64>> = by_item
        .par_iter()
        .enumerate()
        .map(|(j, obs)| {
            let prior = targets.map(|t| t[j].as_slice());
            if obs.is_empty() && lambda > 0.0 {
                return Ok(prior.map_or_else(|| vec![0.0; d], <[f64]>::to_vec));
            }
            let rows = obs.iter().map(|&(i, r)| (model.user(i), weights[j], r));
            solve_ridge(rows, lambda, prior, d).ok_or_else(|| {
                Error::Singular(format!(
                    "normal equations of item {j} are singular; use lambda_v > 0"
                ))
            })
        })
        .collect::<Result<_>>()?;
    let cols = model.item_columns_mut();
    for (j, v) in solved.into_iter().enumerate() {
        cols.column_mut(j).copy_from_slice(&v);
    }
    Ok(())
}

/// Encoder outputs `s_j` for every item.
pub fn encoder_targets(encoder: &EncoderParams, corpus: &Corpus) -> Result<Vec<Vec<f64>>> {
    Ok(encoder
        .forward_corpus(corpus)?
        .into_iter()
        .map(|o| o.value)
        .collect())
}

fn target_gap(model: &FactorModel, targets: &[Vec<f64>]) -> f64 {
    targets
        .iter()
        .enumerate()
        .map(|(j, s)| model.item(j).iter().zip(s).map(|(v, s)| (v - s) * (v - s)).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderStepReport {
    /// `λ_v Σ‖v_j − s_j‖²` before and after the block.
    pub before: f64,
    pub after: f64,
    /// Blocks discarded before one was accepted.
    pub rollbacks: usize,
    /// False when every retry raised the loss; the encoder is then unchanged.
    pub accepted: bool,
    /// Learning rate of the accepted block, or the last one tried.
    pub learning_rate: f64,
}

/// Runs `steps` gradient steps on `λ_v Σ‖v_j − s_j‖²` with `V` fixed.
///
/// Steps follow the gradient of the mean per-item squared distance, so
/// `learning_rate` does not scale with `n` or `λ_v`. If the loss after the
/// block exceeds the loss before it, the block is discarded and retried at
/// half the rate, at most five times.
pub fn update_item_encoder(
    encoder: &mut EncoderParams,
    corpus: &Corpus,
    model: &FactorModel,
    steps: usize,
    learning_rate: f64,
) -> Result<EncoderStepReport> {
    let n = model.num_items();
    if corpus.len() != n {
        return Err(Error::Shape {
            expected: format!("{n} documents"),
            actual: corpus.len().to_string(),
        });
    }
    if encoder.config().output_dim != model.d() {
        return Err(Error::Shape {
            expected: format!("encoder output of size {}", model.d()),
            actual: encoder.config().output_dim.to_string(),
        });
    }
    let lambda = model.lambda_v();
    let before = lambda * target_gap(model, &encoder_targets(encoder, corpus)?);
    let mut report = EncoderStepReport {
        before,
        after: before,
        rollbacks: 0,
        accepted: true,
        learning_rate,
    };
    if steps == 0 || learning_rate == 0.0 || lambda == 0.0 {
        return Ok(report);
    }

    let mut rate = learning_rate;
    for attempt in 0..=MAX_ROLLBACKS {
        let mut candidate = encoder.clone();
        for _ in 0..steps {
            let outputs = candidate.forward_corpus(corpus)?;
            let upstream: Vec<Vec<f64>> = outputs
                .iter()
                .enumerate()
                .map(|(j, o)| {
                    o.value
                        .iter()
                        .zip(model.item(j))
                        .map(|(s, v)| 2.0 * (s - v) / n as f64)
                        .collect()
                })
                .collect();
            let grad = candidate.backward_corpus(&outputs, &upstream)?;
            candidate.add_scaled(&grad, -rate);
            if !candidate.is_finite() {
                break;
            }
        }
        let after = if candidate.is_finite() {
            lambda * target_gap(model, &encoder_targets(&candidate, corpus)?)
        } else {
            f64::INFINITY
        };
        report.learning_rate = rate;
        report.rollbacks = attempt;
        if after.is_finite() && after <= before {
            *encoder = candidate;
            report.after = after;
            return Ok(report);
        }
        rate *= 0.5;
    }
    log::warn!("encoder block rejected after {MAX_ROLLBACKS} halvings; keeping previous parameters");
    report.accepted = false;
    Ok(report)
}
