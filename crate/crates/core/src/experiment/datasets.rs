use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    biscale, load_movielens, read_keep_list, read_ratings_csv, MovieLensFormat, Rating, RatingDataset,
    ScalingRecord,
};
use crate::error::{Error, Result};
use crate::textprep::{align_documents, build_vocabulary, read_documents, Corpus};

use super::synthetic::TextDrivenSpec;

fn default_seq_len() -> usize {
    300
}

fn default_max_vocab() -> usize {
    8000
}

/// Item descriptions aligned to a rating file by raw item id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    /// `raw_item_id<TAB>text` lines.
    pub documents: PathBuf,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
}

impl CorpusSpec {
    pub fn new(documents: PathBuf) -> Self {
        CorpusSpec {
            documents,
            seq_len: default_seq_len(),
            max_vocab: default_max_vocab(),
        }
    }
}

/// Positive, skewed values shaped like dwell times, bi-scaled before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadingTimeSpec {
    pub text: TextDrivenSpec,
    /// Median dwell time in seconds.
    pub base_seconds: f64,
    /// Log-scale spread of the low-rank signal.
    pub spread: f64,
    /// Log-scale standard deviation of per-user speed and per-item length.
    pub offset_sd: f64,
    pub scaling_tol: f64,
    pub scaling_sweeps: usize,
}

impl Default for ReadingTimeSpec {
    fn default() -> Self {
        ReadingTimeSpec {
            text: TextDrivenSpec {
                num_users: 600,
                num_items: 60,
                ..Default::default()
            },
            base_seconds: 40.0,
            spread: 0.4,
            offset_sd: 0.3,
            scaling_tol: 1e-6,
            scaling_sweeps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// A MovieLens rating file with optional keep-list and item text.
    Movielens {
        path: PathBuf,
        format: MovieLensFormat,
        #[serde(default)]
        keep_list: Option<PathBuf>,
        #[serde(default)]
        corpus: Option<CorpusSpec>,
    },
    /// A canonical `user,item,rating` CSV with optional aligned text, where
    /// raw item ids are the dense indices.
    Ratings {
        path: PathBuf,
        #[serde(default)]
        corpus: Option<CorpusSpec>,
    },
    /// Synthetic missing-not-at-random ratings whose propensity follows item
    /// text. Models are scored against the complete matrix.
    TextDriven(TextDrivenSpec),
    /// Stand-in for a reading-time dataset: text-driven missingness,
    /// log-normal dwell times, bi-scaled.
    ReadingTime(ReadingTimeSpec),
}

/// Ratings ready for an experiment.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub name: String,
    pub ratings: RatingDataset,
    pub corpus: Option<Corpus>,
    /// Complete matrix, when known; models are then scored on every entry
    /// outside the training split.
    pub truth: Option<DMatrix<f64>>,
    pub scaling: Option<ScalingRecord>,
}

impl DatasetSpec {
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Movielens { path, .. } | DatasetSpec::Ratings { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "ratings".into()),
            DatasetSpec::TextDriven(_) => "text-driven synthetic".into(),
            DatasetSpec::ReadingTime(_) => "reading-time stand-in".into(),
        }
    }

    pub fn load(&self) -> Result<LoadedDataset> {
        let name = self.name();
        match self {
            DatasetSpec::Movielens {
                path,
                format,
                keep_list,
                corpus,
            } => {
                let keep = keep_list.as_deref().map(read_keep_list).transpose()?;
                let load = load_movielens(path, *format, keep.as_ref())?;
                let corpus = corpus
                    .as_ref()
                    .map(|c| load_corpus(c, load.dataset.item_labels()))
                    .transpose()?;
                Ok(LoadedDataset {
                    name,
                    ratings: load.dataset,
                    corpus,
                    truth: None,
                    scaling: None,
                })
            }
            DatasetSpec::Ratings { path, corpus } => {
                let ratings = read_ratings_csv(path, None)?;
                let labels: Vec<u64> = (0..ratings.num_items() as u64).collect();
                let corpus = corpus.as_ref().map(|c| load_corpus(c, &labels)).transpose()?;
                Ok(LoadedDataset {
                    name,
                    ratings,
                    corpus,
                    truth: None,
                    scaling: None,
                })
            }
            DatasetSpec::TextDriven(spec) => {
                let t = spec.generate()?;
                Ok(LoadedDataset {
                    name,
                    ratings: t.synthetic.dataset,
                    corpus: Some(t.corpus),
                    truth: Some(t.synthetic.truth.full),
                    scaling: None,
                })
            }
            DatasetSpec::ReadingTime(spec) => {
                let (ratings, corpus, scaling) = spec.generate()?;
                Ok(LoadedDataset {
                    name,
                    ratings,
                    corpus: Some(corpus),
                    truth: None,
                    scaling: Some(scaling),
                })
            }
        }
    }
}

fn load_corpus(spec: &CorpusSpec, item_labels: &[u64]) -> Result<Corpus> {
    let docs = read_documents(&spec.documents)?;
    let (aligned, missing) = align_documents(item_labels, &docs);
    if missing > 0 {
        log::warn!("{missing} items have no document in {}", spec.documents.display());
    }
    let vocab = build_vocabulary(&aligned, spec.max_vocab)?;
    Corpus::from_documents(&aligned, &vocab, spec.seq_len)
}

impl ReadingTimeSpec {
    /// Bi-scaled dwell times, the item corpus and the scaling record.
    pub fn generate(&self) -> Result<(RatingDataset, Corpus, ScalingRecord)> {
        if !(self.base_seconds > 0.0 && self.spread >= 0.0 && self.offset_sd >= 0.0) {
            return Err(Error::InvalidArgument(
                "base_seconds must be positive and spreads non-negative".into(),
            ));
        }
        let t = self.text.generate()?;
        let data = &t.synthetic.dataset;
        let normal = Normal::new(0.0, self.offset_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.text.seed ^ 0x00d3_e11a);
        let speed: Vec<f64> = (0..data.num_users()).map(|_| normal.sample(&mut rng)).collect();
        let length: Vec<f64> = (0..data.num_items()).map(|_| normal.sample(&mut rng)).collect();
        let seconds: Vec<Rating> = data
            .triples()
            .iter()
            .map(|r| {
                let log_t = self.base_seconds.ln() + self.spread * r.value + speed[r.user] + length[r.item];
                Rating::new(r.user, r.item, log_t.exp())
            })
            .collect();
        let raw = RatingDataset::new(data.num_users(), data.num_items(), seconds)?;
        let (scaled, record) = biscale(&raw, self.scaling_tol, self.scaling_sweeps)?;
        Ok((scaled, t.corpus, record))
    }
}
