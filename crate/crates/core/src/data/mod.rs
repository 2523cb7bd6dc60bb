//! Rating data: the observed sparse matrix, its indicator pattern, splits,
//! bi-scaling and synthetic missing-not-at-random generation.

mod biscale;
mod io;
mod movielens;
mod split;
mod synth;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use biscale::{biscale, ScalingRecord, ScalingSweep};
pub use io::{fmt_real, read_keep_list, read_ratings_csv, write_ratings_csv};
pub use movielens::{load_movielens, parse_movielens, MovieLensFormat, MovieLensLoad};
pub use split::{split, SplitPair};
pub use synth::{
    generate_synthetic, sample_observations, PropensityGroundTruth, SyntheticDataset,
    TrueFactors,
};

/// One observed entry `r_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

impl Rating {
    pub fn new(user: usize, item: usize, value: f64) -> Self {
        Rating { user, item, value }
    }
}

/// Sparse observed rating matrix with `m` users and `n` items.
///
/// Each `(user, item)` pair occurs at most once and all indices are in range;
/// both are checked on construction. `user_labels` / `item_labels` carry the
/// raw ids the dense indices were assigned from.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingDataset {
    num_users: usize,
    num_items: usize,
    triples: Vec<Rating>,
    user_labels: Vec<u64>,
    item_labels: Vec<u64>,
}

impl RatingDataset {
    /// Builds a dataset whose labels are the dense indices themselves.
    pub fn new(num_users: usize, num_items: usize, triples: Vec<Rating>) -> Result<Self> {
        let user_labels = (0..num_users as u64).collect();
        let item_labels = (0..num_items as u64).collect();
        Self::with_labels(num_users, num_items, triples, user_labels, item_labels)
    }

    pub fn with_labels(
        num_users: usize,
        num_items: usize,
        triples: Vec<Rating>,
        user_labels: Vec<u64>,
        item_labels: Vec<u64>,
    ) -> Result<Self> {
        if num_users == 0 || num_items == 0 {
            return Err(Error::InvalidData(format!(
                "rating matrix must be non-empty, got {num_users}x{num_items}"
            )));
        }
        if user_labels.len() != num_users || item_labels.len() != num_items {
            return Err(Error::Shape {
                expected: format!("{num_users} user and {num_items} item labels"),
                actual: format!("{} and {}", user_labels.len(), item_labels.len()),
            });
        }
        let mut seen = HashSet::with_capacity(triples.len());
        for t in &triples {
            if t.user >= num_users || t.item >= num_items {
                return Err(Error::InvalidData(format!(
                    "entry ({}, {}) outside {num_users}x{num_items}",
                    t.user, t.item
                )));
            }
            if !t.value.is_finite() {
                return Err(Error::InvalidData(format!(
                    "non-finite rating at ({}, {})",
                    t.user, t.item
                )));
            }
            if !seen.insert((t.user, t.item)) {
                return Err(Error::InvalidData(format!(
                    "duplicate entry ({}, {})",
                    t.user, t.item
                )));
            }
        }
        Ok(RatingDataset {
            num_users,
            num_items,
            triples,
            user_labels,
            item_labels,
        })
    }

    /// Same shape and labels, different triples. Used by splits.
    pub(crate) fn with_triples(&self, triples: Vec<Rating>) -> Self {
        RatingDataset {
            num_users: self.num_users,
            num_items: self.num_items,
            triples,
            user_labels: self.user_labels.clone(),
            item_labels: self.item_labels.clone(),
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn triples(&self) -> &[Rating] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn user_labels(&self) -> &[u64] {
        &self.user_labels
    }

    pub fn item_labels(&self) -> &[u64] {
        &self.item_labels
    }

    /// `|triples| / (m·n)`.
    pub fn density(&self) -> f64 {
        self.triples.len() as f64 / (self.num_users as f64 * self.num_items as f64)
    }

    pub fn user_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_users];
        for t in &self.triples {
            counts[t.user] += 1;
        }
        counts
    }

    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_items];
        for t in &self.triples {
            counts[t.item] += 1;
        }
        counts
    }

    /// Per-user lists of `(item, rating)`, in triple order.
    pub fn by_user(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.num_users];
        for t in &self.triples {
            rows[t.user].push((t.item, t.value));
        }
        rows
    }

    /// Per-item lists of `(user, rating)`, in triple order.
    pub fn by_item(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.num_items];
        for t in &self.triples {
            cols[t.item].push((t.user, t.value));
        }
        cols
    }

    pub fn indicator(&self) -> IndicatorView {
        IndicatorView::from_dataset(self)
    }

    /// Fails if some user or item has no observed entry.
    pub fn check_coverage(&self) -> Result<()> {
        if let Some(u) = self.user_counts().iter().position(|&c| c == 0) {
            return Err(Error::InvalidData(format!("user {u} has no ratings")));
        }
        if let Some(i) = self.item_counts().iter().position(|&c| c == 0) {
            return Err(Error::InvalidData(format!("item {i} has no ratings")));
        }
        Ok(())
    }
}

/// The observed pattern `I` of a rating matrix, stored both row- and
/// column-wise so that products with `I` and `Iᵀ` are linear in `|Ω|`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorView {
    num_rows: usize,
    num_cols: usize,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

impl IndicatorView {
    pub fn from_dataset(dataset: &RatingDataset) -> Self {
        Self::from_pairs(
            dataset.num_users(),
            dataset.num_items(),
            dataset.triples().iter().map(|t| (t.user, t.item)),
        )
    }

    /// Builds a mask from `(row, col)` pairs. Duplicates are collapsed.
    pub fn from_pairs(
        num_rows: usize,
        num_cols: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut rows = vec![Vec::new(); num_rows];
        let mut cols = vec![Vec::new(); num_cols];
        for (i, j) in pairs {
            assert!(i < num_rows && j < num_cols, "mask entry out of range");
            rows[i].push(j);
            cols[j].push(i);
        }
        for r in rows.iter_mut().chain(cols.iter_mut()) {
            r.sort_unstable();
            r.dedup();
        }
        IndicatorView {
            num_rows,
            num_cols,
            rows,
            cols,
        }
    }

    /// A mask with every entry observed.
    pub fn full(num_rows: usize, num_cols: usize) -> Self {
        Self::from_pairs(
            num_rows,
            num_cols,
            (0..num_rows).flat_map(|i| (0..num_cols).map(move |j| (i, j))),
        )
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    /// Observed columns of row `i`, ascending.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    /// Observed rows of column `j`, ascending.
    pub fn col(&self, j: usize) -> &[usize] {
        &self.cols[j]
    }

    pub fn col_counts(&self) -> Vec<usize> {
        self.cols.iter().map(Vec::len).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RatingDataset {
        RatingDataset::new(
            2,
            3,
            vec![
                Rating::new(0, 0, 1.0),
                Rating::new(0, 2, 2.0),
                Rating::new(1, 1, 3.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn density_is_exact_ratio() {
        assert_eq!(tiny().density(), 3.0 / 6.0);
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        let dup = vec![Rating::new(0, 0, 1.0), Rating::new(0, 0, 2.0)];
        assert!(RatingDataset::new(1, 1, dup).is_err());
        assert!(RatingDataset::new(1, 1, vec![Rating::new(1, 0, 1.0)]).is_err());
        assert!(RatingDataset::new(1, 1, vec![Rating::new(0, 0, f64::NAN)]).is_err());
    }

    #[test]
    fn indicator_matches_triples() {
        let d = tiny();
        let mask = d.indicator();
        for i in 0..2 {
            for j in 0..3 {
                let present = d.triples().iter().any(|t| t.user == i && t.item == j);
                assert_eq!(mask.get(i, j), present);
            }
        }
        assert_eq!(mask.nnz(), 3);
        assert_eq!(mask.col(2), &[0]);
        assert_eq!(mask.row(0), &[0, 2]);
    }

    #[test]
    fn coverage_check_names_the_gap() {
        let d = RatingDataset::new(2, 2, vec![Rating::new(0, 0, 1.0)]).unwrap();
        let err = d.check_coverage().unwrap_err().to_string();
        assert!(err.contains("user 1"), "{err}");
    }
}
