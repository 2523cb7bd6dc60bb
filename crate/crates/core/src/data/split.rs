use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::RatingDataset;
use crate::error::{Error, Result};

/// Disjoint train/test partition of a dataset's triples.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: RatingDataset,
    pub test: RatingDataset,
    pub seed: u64,
}

/// Random split with `train_fraction` of the triples in train, then repaired
/// so that every user and item keeps at least one training triple.
///
/// Repair visits uncovered users (ascending), then uncovered items, and
/// moves one randomly chosen test triple of each into train. At most
/// `m + n` triples move.
pub fn split(dataset: &RatingDataset, train_fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    dataset.check_coverage()?;

    let triples = dataset.triples();
    let total = triples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let target = (train_fraction * total as f64).round() as usize;

    let mut in_train = vec![false; total];
    for &k in &order[..target] {
        in_train[k] = true;
    }

    let mut user_cov = vec![0usize; dataset.num_users()];
    let mut item_cov = vec![0usize; dataset.num_items()];
    for (k, t) in triples.iter().enumerate() {
        if in_train[k] {
            user_cov[t.user] += 1;
            item_cov[t.item] += 1;
        }
    }

    let mut user_test: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_users()];
    let mut item_test: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_items()];
    for (k, t) in triples.iter().enumerate() {
        if !in_train[k] {
            user_test[t.user].push(k);
            item_test[t.item].push(k);
        }
    }

    for u in 0..dataset.num_users() {
        if user_cov[u] == 0 {
            let &k = user_test[u]
                .choose(&mut rng)
                .expect("user with triples but none in train or test");
            in_train[k] = true;
            user_cov[u] += 1;
            item_cov[triples[k].item] += 1;
        }
    }
    for i in 0..dataset.num_items() {
        if item_cov[i] == 0 {
            // Every test triple of this item is still in test: the item had
            // no train triples, so user repair never touched it.
            let &k = item_test[i]
                .choose(&mut rng)
                .expect("item with triples but none in train or test");
            in_train[k] = true;
            item_cov[i] += 1;
            user_cov[triples[k].user] += 1;
        }
    }

    let (mut train, mut test) = (Vec::with_capacity(target), Vec::with_capacity(total - target));
    for (k, t) in triples.iter().enumerate() {
        if in_train[k] {
            train.push(*t);
        } else {
            test.push(*t);
        }
    }
    Ok(SplitPair {
        train: dataset.with_triples(train),
        test: dataset.with_triples(test),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rating;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn assert_contract(d: &RatingDataset, s: &SplitPair, fraction: f64) {
        let train: HashSet<(usize, usize)> =
            s.train.triples().iter().map(|t| (t.user, t.item)).collect();
        let test: HashSet<(usize, usize)> =
            s.test.triples().iter().map(|t| (t.user, t.item)).collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), d.len());
        for t in d.triples() {
            assert!(train.contains(&(t.user, t.item)) || test.contains(&(t.user, t.item)));
        }
        assert!(s.train.user_counts().iter().all(|&c| c >= 1));
        assert!(s.train.item_counts().iter().all(|&c| c >= 1));
        let target = (fraction * d.len() as f64).round() as i64;
        let slack = (d.num_users() + d.num_items()) as i64;
        assert!((s.train.len() as i64 - target).abs() <= slack);
    }

    #[test]
    fn singletons_all_land_in_train() {
        // Diagonal matrix: every user and item has exactly one triple.
        let triples = (0..20).map(|k| Rating::new(k, k, 1.0)).collect();
        let d = RatingDataset::new(20, 20, triples).unwrap();
        let s = split(&d, 0.8, 3).unwrap();
        assert_eq!(s.train.len(), 20);
        assert!(s.test.is_empty());
    }

    #[test]
    fn fraction_bounds() {
        let d = RatingDataset::new(1, 1, vec![Rating::new(0, 0, 1.0)]).unwrap();
        assert!(split(&d, 1.0, 0).is_err());
        assert!(split(&d, 0.0, 0).is_err());
        assert!(split(&d, f64::NAN, 0).is_err());
    }

    #[test]
    fn uncovered_user_rejected_before_splitting() {
        let d = RatingDataset::new(2, 1, vec![Rating::new(0, 0, 1.0)]).unwrap();
        assert!(matches!(split(&d, 0.5, 0), Err(Error::InvalidData(_))));
    }

    #[test]
    fn same_seed_same_split() {
        let triples = (0..30)
            .flat_map(|u| (0..10).map(move |i| Rating::new(u, i, (u * i) as f64)))
            .collect();
        let d = RatingDataset::new(30, 10, triples).unwrap();
        let a = split(&d, 0.8, 11).unwrap();
        let b = split(&d, 0.8, 11).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    proptest! {
        #[test]
        fn split_contract_holds(
            seed in any::<u64>(),
            fraction in 0.05f64..0.95,
            mask in proptest::collection::vec(any::<bool>(), 12 * 9),
        ) {
            // Random pattern plus a diagonal-ish backbone so coverage holds.
            let mut triples = Vec::new();
            for u in 0..12 {
                for i in 0..9 {
                    if mask[u * 9 + i] || i == u % 9 || u == i {
                        triples.push(Rating::new(u, i, (u + i) as f64));
                    }
                }
            }
            let d = RatingDataset::new(12, 9, triples).unwrap();
            let s = split(&d, fraction, seed).unwrap();
            assert_contract(&d, &s, fraction);
        }
    }
}
