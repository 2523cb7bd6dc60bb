use serde::{Deserialize, Serialize};

use super::RatingDataset;
use crate::error::{Error, Result};

/// Row then column standardisation parameters applied in one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSweep {
    pub row_mean: Vec<f64>,
    pub row_scale: Vec<f64>,
    pub col_mean: Vec<f64>,
    pub col_scale: Vec<f64>,
}

/// Everything needed to undo [`biscale`] on observed entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub sweeps: Vec<ScalingSweep>,
    pub converged: bool,
    /// Rows whose observed values had zero spread in some sweep; their scale
    /// was clamped to 1.
    pub clamped_rows: Vec<usize>,
    pub clamped_cols: Vec<usize>,
}

impl ScalingRecord {
    /// Maps a scaled value at `(user, item)` back to the original scale.
    pub fn invert(&self, user: usize, item: usize, value: f64) -> f64 {
        self.sweeps.iter().rev().fold(value, |x, s| {
            let x = x * s.col_scale[item] + s.col_mean[item];
            x * s.row_scale[user] + s.row_mean[user]
        })
    }

    pub fn invert_dataset(&self, scaled: &RatingDataset) -> RatingDataset {
        let triples = scaled
            .triples()
            .iter()
            .map(|t| super::Rating::new(t.user, t.item, self.invert(t.user, t.item, t.value)))
            .collect();
        scaled.with_triples(triples)
    }
}

/// Alternating row/column standardisation over observed entries.
///
/// Each sweep centres and scales every row by the mean and population
/// standard deviation of its observed values, then does the same for every
/// column. Iteration stops once every parameter of a sweep is within `tol`
/// of the identity (mean 0, scale 1) or after `max_sweeps`.
pub fn biscale(
    dataset: &RatingDataset,
    tol: f64,
    max_sweeps: usize,
) -> Result<(RatingDataset, ScalingRecord)> {
    if max_sweeps == 0 {
        return Err(Error::InvalidArgument("max_sweeps must be at least 1".into()));
    }
    dataset.check_coverage()?;

    let users: Vec<usize> = dataset.triples().iter().map(|t| t.user).collect();
    let items: Vec<usize> = dataset.triples().iter().map(|t| t.item).collect();
    let mut values: Vec<f64> = dataset.triples().iter().map(|t| t.value).collect();

    let mut record = ScalingRecord {
        sweeps: Vec::new(),
        converged: false,
        clamped_rows: Vec::new(),
        clamped_cols: Vec::new(),
    };
    let mut clamped_rows = vec![false; dataset.num_users()];
    let mut clamped_cols = vec![false; dataset.num_items()];

    for _ in 0..max_sweeps {
        let (row_mean, row_scale) =
            standardize(&mut values, &users, dataset.num_users(), &mut clamped_rows);
        let (col_mean, col_scale) =
            standardize(&mut values, &items, dataset.num_items(), &mut clamped_cols);
        let change = row_mean
            .iter()
            .chain(&col_mean)
            .map(|m| m.abs())
            .chain(row_scale.iter().chain(&col_scale).map(|s| (s - 1.0).abs()))
            .fold(0.0, f64::max);
        record.sweeps.push(ScalingSweep {
            row_mean,
            row_scale,
            col_mean,
            col_scale,
        });
        if change < tol {
            record.converged = true;
            break;
        }
    }
    record.clamped_rows = flagged(&clamped_rows);
    record.clamped_cols = flagged(&clamped_cols);

    let triples = dataset
        .triples()
        .iter()
        .zip(&values)
        .map(|(t, &v)| super::Rating::new(t.user, t.item, v))
        .collect();
    Ok((dataset.with_triples(triples), record))
}

/// Standardises `values` grouped by `group`; returns per-group mean and scale.
fn standardize(
    values: &mut [f64],
    group: &[usize],
    num_groups: usize,
    clamped: &mut [bool],
) -> (Vec<f64>, Vec<f64>) {
    let mut count = vec![0usize; num_groups];
    let mut sum = vec![0.0; num_groups];
    for (&g, &v) in group.iter().zip(values.iter()) {
        count[g] += 1;
        sum[g] += v;
    }
    let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    let mut sq = vec![0.0; num_groups];
    for (&g, &v) in group.iter().zip(values.iter()) {
        sq[g] += (v - mean[g]).powi(2);
    }
    let scale: Vec<f64> = sq
        .iter()
        .zip(&count)
        .enumerate()
        .map(|(g, (s, &c))| {
            let sd = (s / c as f64).sqrt();
            if sd > f64::EPSILON * (1.0 + mean[g].abs()) {
                sd
            } else {
                clamped[g] = true;
                1.0
            }
        })
        .collect();
    for (&g, v) in group.iter().zip(values.iter_mut()) {
        *v = (*v - mean[g]) / scale[g];
    }
    (mean, scale)
}

fn flagged(flags: &[bool]) -> Vec<usize> {
    flags
        .iter()
        .enumerate()
        .filter_map(|(i, &f)| f.then_some(i))
        .collect()
}
