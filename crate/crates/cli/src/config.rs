use std::path::{Path, PathBuf};

use serde::Deserialize;

use debias_mf::experiment::{CorpusSpec, DatasetSpec, ExperimentConfig};
use debias_mf::factorization::{TrainConfig, Variant};
use debias_mf::sam::SamObjective;
use debias_mf::{Error, Result};

use crate::{DataArgs, FormatArg, ModelArgs, ObjectiveArg};

/// Experiment file contents; every field is optional so that flags can
/// fill the gaps.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<DatasetSpec>,
    pub variants: Option<Vec<Variant>>,
    pub train_fraction: Option<f64>,
    pub fractions: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub train: Option<TrainConfig>,
    pub output_dir: Option<PathBuf>,
}

impl FileConfig {
    /// TOML for `.toml` files, JSON otherwise; no path gives defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
            toml::from_str(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: e.to_string(),
            })
        } else {
            Ok(serde_json::from_str(&text)?)
        }
    }

    /// The dataset named by flags, else the one in the file.
    pub fn dataset(&self, data: &DataArgs) -> Result<DatasetSpec> {
        if let Some(spec) = dataset_from_flags(data)? {
            return Ok(spec);
        }
        let mut spec = self
            .dataset
            .clone()
            .ok_or_else(|| Error::InvalidArgument("no dataset given; pass --dataset or a config file".into()))?;
        // a corpus flag still applies to a file-defined rating file
        if let Some(corpus) = corpus_from_flags(data) {
            match &mut spec {
                DatasetSpec::Movielens { corpus: c, .. } | DatasetSpec::Ratings { corpus: c, .. } => {
                    *c = Some(corpus)
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "--corpus only applies to rating files; synthetic datasets carry their own text".into(),
                    ))
                }
            }
        }
        Ok(spec)
    }

    /// Hyperparameters from the file with flags applied on top.
    pub fn train_config(&self, model: &ModelArgs, seed: Option<u64>) -> Result<TrainConfig> {
        let mut c = self.train.clone().unwrap_or_default();
        if let Some(d) = model.d {
            c.d = d;
        }
        if let Some(l) = model.lambda_u {
            c.lambda_u = l;
        }
        if let Some(l) = model.lambda_v {
            c.lambda_v = l;
        }
        if let Some(s) = model.max_sweeps {
            c.max_sweeps = s;
        }
        if let Some(o) = model.objective {
            c.sam.objective = objective(o);
        }
        if let Some(range) = &model.clip_predictions {
            c.clip = Some(clip_range(range)?);
        }
        if let Some(s) = seed {
            c.seed = s;
            c.sam.seed = s;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn experiment(
        &self,
        data: &DataArgs,
        model: &ModelArgs,
        variants: Option<&[String]>,
        seeds: Option<Vec<u64>>,
        train_fraction: Option<f64>,
        fractions: Option<&[f64]>,
    ) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::new(self.dataset(data)?);
        config.train = self.train_config(model, None)?;
        if let Some(v) = variants {
            config.variants = v.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        } else if let Some(v) = &self.variants {
            config.variants = v.clone();
        }
        if let Some(s) = seeds.or_else(|| self.seeds.clone()) {
            config.seeds = s;
        }
        if let Some(f) = train_fraction.or(self.train_fraction) {
            config.train_fraction = f;
        }
        if let Some(f) = fractions.map(<[f64]>::to_vec).or_else(|| self.fractions.clone()) {
            config.fractions = f;
        }
        config.output_dir = self.output_dir.clone();
        config.validate()?;
        Ok(config)
    }
}

/// `[]` means the 1-5 star range.
pub fn clip_range(values: &[f64]) -> Result<(f64, f64)> {
    match values {
        [] => Ok((1.0, 5.0)),
        [lo, hi] if lo <= hi => Ok((*lo, *hi)),
        _ => Err(Error::InvalidArgument(
            "--clip-predictions takes no values or LO HI with LO <= HI".into(),
        )),
    }
}

fn objective(o: ObjectiveArg) -> SamObjective {
    match o {
        ObjectiveArg::Spectral => SamObjective::Spectral,
        ObjectiveArg::Frobenius => SamObjective::Frobenius,
    }
}

fn corpus_from_flags(data: &DataArgs) -> Option<CorpusSpec> {
    data.corpus.as_ref().map(|path| {
        let mut spec = CorpusSpec::new(path.clone());
        if let Some(l) = data.seq_len {
            spec.seq_len = l;
        }
        if let Some(v) = data.max_vocab {
            spec.max_vocab = v;
        }
        spec
    })
}

/// Rating files with a `.csv` extension default to the canonical format,
/// anything else to MovieLens-100K.
fn dataset_from_flags(data: &DataArgs) -> Result<Option<DatasetSpec>> {
    let Some(path) = &data.dataset else {
        if data.keep_list.is_some() {
            return Err(Error::InvalidArgument("--keep-list needs --dataset".into()));
        }
        return Ok(None);
    };
    let format = data.format.unwrap_or_else(|| {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            FormatArg::Csv
        } else {
            FormatArg::Ml100k
        }
    });
    let corpus = corpus_from_flags(data);
    Ok(Some(match format {
        FormatArg::Csv => {
            if data.keep_list.is_some() {
                return Err(Error::InvalidArgument("--keep-list applies to MovieLens files only".into()));
            }
            DatasetSpec::Ratings {
                path: path.clone(),
                corpus,
            }
        }
        FormatArg::Ml100k | FormatArg::Ml1m => DatasetSpec::Movielens {
            path: path.clone(),
            format: if format == FormatArg::Ml1m {
                debias_mf::data::MovieLensFormat::Ml1m
            } else {
                debias_mf::data::MovieLensFormat::Ml100k
            },
            keep_list: data.keep_list.clone(),
            corpus,
        },
    }))
}
