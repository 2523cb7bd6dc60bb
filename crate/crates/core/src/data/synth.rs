use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Rating, RatingDataset};
use crate::error::{Error, Result};

/// Per-item observation probabilities `P(I_ij = 1 | x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PropensityGroundTruth(Vec<f64>);

impl PropensityGroundTruth {
    pub fn new(per_item_probability: Vec<f64>) -> Result<Self> {
        if per_item_probability.is_empty() {
            return Err(Error::InvalidArgument("propensity vector is empty".into()));
        }
        if let Some((j, p)) = per_item_probability
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p > 0.0 && p <= 1.0))
        {
            return Err(Error::InvalidArgument(format!(
                "propensity of item {j} is {p}, must lie in (0, 1]"
            )));
        }
        Ok(PropensityGroundTruth(per_item_probability))
    }

    pub fn uniform(n: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; n])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Oracle inverse-propensity weights `1 / p_j`.
    pub fn inverse_weights(&self) -> Vec<f64> {
        self.0.iter().map(|p| 1.0 / p).collect()
    }
}

impl TryFrom<Vec<f64>> for PropensityGroundTruth {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PropensityGroundTruth> for Vec<f64> {
    fn from(p: PropensityGroundTruth) -> Self {
        p.0
    }
}

/// Ground truth behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueFactors {
    /// `m × rank`
    pub user_factors: DMatrix<f64>,
    /// `n × rank`
    pub item_factors: DMatrix<f64>,
    /// Complete rating matrix `U*V*ᵀ + noise`, `m × n`.
    pub full: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: RatingDataset,
    pub truth: TrueFactors,
    pub propensity: PropensityGroundTruth,
    pub rank: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    num_users: usize,
    num_items: usize,
    rank: usize,
    noise_sd: f64,
    seed: u64,
    propensity: PropensityGroundTruth,
    /// Row-major `m × rank`.
    user_factors: Vec<Vec<f64>>,
    /// Row-major `n × rank`.
    item_factors: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl SyntheticDataset {
    /// JSON sidecar with ground-truth propensities and factors.
    pub fn sidecar_json(&self) -> Result<String> {
        let sidecar = Sidecar {
            num_users: self.dataset.num_users(),
            num_items: self.dataset.num_items(),
            rank: self.rank,
            noise_sd: self.noise_sd,
            seed: self.seed,
            propensity: self.propensity.clone(),
            user_factors: rows_of(&self.truth.user_factors),
            item_factors: rows_of(&self.truth.item_factors),
        };
        Ok(serde_json::to_string_pretty(&sidecar)?)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        super::write_ratings_csv(&self.dataset, &dir.join(format!("{stem}.csv")))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.sidecar_json()?).map_err(|e| Error::io(&json, e))
    }

    /// Loss of a predictor over every entry of the complete matrix.
    pub fn full_matrix_risk(&self, predict: impl Fn(usize, usize) -> f64) -> f64 {
        let full = &self.truth.full;
        let mut risk = 0.0;
        for j in 0..full.ncols() {
            for i in 0..full.nrows() {
                risk += (full[(i, j)] - predict(i, j)).powi(2);
            }
        }
        risk
    }
}

/// Draws an observation mask for `full`, each entry of column `j` kept
/// independently with probability `p_j`. Triples come out column-major.
pub fn sample_observations<R: Rng>(
    full: &DMatrix<f64>,
    propensity: &PropensityGroundTruth,
    rng: &mut R,
) -> Vec<Rating> {
    let mut out = Vec::new();
    for (j, &p) in propensity.probabilities().iter().enumerate() {
        out.extend(sample_column(full, j, p, rng));
    }
    out
}

fn sample_column<R: Rng>(full: &DMatrix<f64>, j: usize, p: f64, rng: &mut R) -> Vec<Rating> {
    (0..full.nrows())
        .filter_map(|i| {
            let u: f64 = rng.random();
            (u < p).then(|| Rating::new(i, j, full[(i, j)]))
        })
        .collect()
}

/// Low-rank synthetic ratings observed missing-not-at-random.
///
/// Factor entries and noise are standard normal (noise scaled by
/// `noise_sd`). A column that comes out empty is redrawn once; if it is
/// still empty the call fails.
pub fn generate_synthetic(
    m: usize,
    n: usize,
    rank: usize,
    propensity: &PropensityGroundTruth,
    noise_sd: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("m and n must be positive".into()));
    }
    if rank == 0 || rank > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "rank must lie in 1..={}, got {rank}",
            m.min(n)
        )));
    }
    if propensity.len() != n {
        return Err(Error::Shape {
            expected: format!("{n} propensities"),
            actual: propensity.len().to_string(),
        });
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise_sd must be >= 0, got {noise_sd}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let user_factors = DMatrix::from_fn(m, rank, |_, _| normal());
    let item_factors = DMatrix::from_fn(n, rank, |_, _| normal());
    let mut full = &user_factors * item_factors.transpose();
    if noise_sd > 0.0 {
        for x in full.iter_mut() {
            *x += noise_sd * normal();
        }
    }

    let mut triples = Vec::new();
    for (j, &p) in propensity.probabilities().iter().enumerate() {
        let mut col = sample_column(&full, j, p, &mut rng);
        if col.is_empty() {
            col = sample_column(&full, j, p, &mut rng);
        }
        if col.is_empty() {
            return Err(Error::InvalidData(format!(
                "item {j} (propensity {p}) drew no observations twice"
            )));
        }
        triples.extend(col);
    }
    let dataset = RatingDataset::new(m, n, triples)?;
    Ok(SyntheticDataset {
        dataset,
        truth: TrueFactors {
            user_factors,
            item_factors,
            full,
        },
        propensity: propensity.clone(),
        rank,
        noise_sd,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_propensity_observes_everything() {
        let p = PropensityGroundTruth::uniform(7, 1.0).unwrap();
        let s = generate_synthetic(5, 7, 2, &p, 0.1, 1).unwrap();
        assert_eq!(s.dataset.len(), 35);
        assert_eq!(s.dataset.density(), 1.0);
    }

    #[test]
    fn noiseless_entries_equal_factor_products() {
        let p = PropensityGroundTruth::uniform(6, 0.7).unwrap();
        let s = generate_synthetic(9, 6, 3, &p, 0.0, 4).unwrap();
        let t = &s.truth;
        for r in s.dataset.triples() {
            let dot: f64 = (0..3)
                .map(|k| t.user_factors[(r.user, k)] * t.item_factors[(r.item, k)])
                .sum();
            assert_eq!(r.value, dot);
        }
    }

    #[test]
    fn column_counts_follow_binomial() {
        let (m, n, p) = (2000usize, 50usize, 0.5);
        let prop = PropensityGroundTruth::uniform(n, p).unwrap();
        let s = generate_synthetic(m, n, 3, &prop, 0.1, 9).unwrap();
        let mean = m as f64 * p;
        let sd = (m as f64 * p * (1.0 - p)).sqrt();
        for c in s.dataset.item_counts() {
            assert!((c as f64 - mean).abs() <= 4.0 * sd, "count {c}");
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let prop = PropensityGroundTruth::new(vec![0.3, 0.9, 0.5]).unwrap();
        let a = generate_synthetic(40, 3, 2, &prop, 0.5, 77).unwrap();
        let b = generate_synthetic(40, 3, 2, &prop, 0.5, 77).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.sidecar_json().unwrap(), b.sidecar_json().unwrap());
    }

    #[test]
    fn tiny_propensity_fails_after_one_redraw() {
        let prop = PropensityGroundTruth::new(vec![1.0, 1e-12]).unwrap();
        assert!(matches!(
            generate_synthetic(3, 2, 1, &prop, 0.0, 0),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn argument_validation() {
        let p = PropensityGroundTruth::uniform(3, 0.5).unwrap();
        assert!(generate_synthetic(4, 3, 4, &p, 0.0, 0).is_err());
        assert!(generate_synthetic(4, 4, 2, &p, 0.0, 0).is_err());
        assert!(PropensityGroundTruth::new(vec![0.5, 0.0]).is_err());
        assert!(PropensityGroundTruth::new(vec![1.5]).is_err());
    }

    #[test]
    fn sidecar_round_trips_propensity() {
        let p = PropensityGroundTruth::new(vec![0.25, 0.5]).unwrap();
        let s = generate_synthetic(10, 2, 1, &p, 0.0, 3).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s.sidecar_json().unwrap()).unwrap();
        assert_eq!(v["propensity"], serde_json::json!([0.25, 0.5]));
        assert_eq!(v["user_factors"].as_array().unwrap().len(), 10);
    }
}
