//! Synthetic datasets whose observation propensity is driven by item text.
//!
//! Items are split round-robin into groups. Every document in group `g`
//! carries the marker word `topic{g}` among random filler words, and every
//! item in group `g` is observed with the group's propensity. A text model
//! can therefore recover the propensity only by reading the marker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, PropensityGroundTruth, SyntheticDataset};
use crate::error::{Error, Result};
use crate::textprep::{build_vocabulary, Corpus, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextDrivenSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub rank: usize,
    pub noise_sd: f64,
    /// One observation probability per text group.
    pub group_propensities: Vec<f64>,
    pub words_per_document: usize,
    pub filler_vocabulary: usize,
    pub seq_len: usize,
    pub seed: u64,
}

impl Default for TextDrivenSpec {
    fn default() -> Self {
        TextDrivenSpec {
            num_users: 2000,
            num_items: 50,
            rank: 3,
            noise_sd: 0.1,
            group_propensities: vec![0.3, 0.5, 0.8],
            words_per_document: 12,
            filler_vocabulary: 40,
            seq_len: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TextDriven {
    pub synthetic: SyntheticDataset,
    pub documents: Vec<String>,
    pub vocabulary: Vocabulary,
    pub corpus: Corpus,
    /// Group of every item.
    pub groups: Vec<usize>,
}

impl TextDrivenSpec {
    pub fn group_of(&self, item: usize) -> usize {
        item % self.group_propensities.len()
    }

    pub fn propensity(&self) -> Result<PropensityGroundTruth> {
        if self.group_propensities.is_empty() {
            return Err(Error::InvalidArgument("need at least one propensity group".into()));
        }
        PropensityGroundTruth::new(
            (0..self.num_items)
                .map(|j| self.group_propensities[self.group_of(j)])
                .collect(),
        )
    }

    /// Documents only; the same seed always yields the same text.
    pub fn documents(&self) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x7e57_d0c5);
        (0..self.num_items)
            .map(|j| {
                let len = self.words_per_document.max(1);
                let marker_at = rng.random_range(0..len);
                (0..len)
                    .map(|k| {
                        if k == marker_at {
                            format!("topic{}", self.group_of(j))
                        } else {
                            format!("w{}", rng.random_range(0..self.filler_vocabulary.max(1)))
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    pub fn generate(&self) -> Result<TextDriven> {
        let propensity = self.propensity()?;
        let synthetic = generate_synthetic(
            self.num_users,
            self.num_items,
            self.rank,
            &propensity,
            self.noise_sd,
            self.seed,
        )?;
        let documents = self.documents();
        let vocabulary = build_vocabulary(&documents, usize::MAX)?;
        let corpus = Corpus::from_documents(&documents, &vocabulary, self.seq_len)?;
        let groups = (0..self.num_items).map(|j| self.group_of(j)).collect();
        Ok(TextDriven {
            synthetic,
            documents,
            vocabulary,
            corpus,
            groups,
        })
    }
}
