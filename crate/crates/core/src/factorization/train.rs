use std::fmt;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{fmt_real, split, RatingDataset};
use crate::encoder::{EncoderConfig, EncoderKind, EncoderParams};
use crate::error::{Error, Result};
use crate::experiment::rmse;
use crate::sam::{self, SamFit, SamFitConfig, SamModel};
use crate::textprep::Corpus;

use super::loss::text_regularized_loss;
use super::model::FactorModel;
use super::updates::{encoder_targets, update_item_encoder, update_items, update_users};

/// Relative slack allowed when checking that a sweep did not raise the loss.
pub const DESCENT_SLACK: f64 = 1e-9;

const VALIDATION_SALT: u64 = 0x5a1d_a7e0;
const ENCODER_SALT: u64 = 0x0e4c_0de5;
const SAM_SALT: u64 = 0x05a3_4ead;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Mf,
    MfPlus,
    Convmf,
    ConvmfPlus,
    Ftmf,
    FtmfPlus,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Mf,
        Variant::MfPlus,
        Variant::Convmf,
        Variant::ConvmfPlus,
        Variant::Ftmf,
        Variant::FtmfPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mf => "mf",
            Variant::MfPlus => "mf_plus",
            Variant::Convmf => "convmf",
            Variant::ConvmfPlus => "convmf_plus",
            Variant::Ftmf => "ftmf",
            Variant::FtmfPlus => "ftmf_plus",
        }
    }

    pub fn uses_sam(self) -> bool {
        matches!(self, Variant::MfPlus | Variant::ConvmfPlus | Variant::FtmfPlus)
    }

    pub fn encoder_kind(self) -> Option<EncoderKind> {
        match self {
            Variant::Mf | Variant::MfPlus => None,
            Variant::Convmf | Variant::ConvmfPlus => Some(EncoderKind::Conv),
            Variant::Ftmf | Variant::FtmfPlus => Some(EncoderKind::Average),
        }
    }

    pub fn needs_corpus(self) -> bool {
        self.uses_sam() || self.encoder_kind().is_some()
    }

    /// The same model without SAM weights.
    pub fn baseline(self) -> Variant {
        match self {
            Variant::Mf | Variant::MfPlus => Variant::Mf,
            Variant::Convmf | Variant::ConvmfPlus => Variant::Convmf,
            Variant::Ftmf | Variant::FtmfPlus => Variant::Ftmf,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut key = s.trim().to_ascii_lowercase().replace('-', "_");
        if let Some(base) = key.strip_suffix('+') {
            key = format!("{base}_plus");
        }
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown variant '{s}'; expected one of mf, mf_plus, convmf, convmf_plus, ftmf, ftmf_plus"
                ))
            })
    }
}

/// Size of a text model; the kind and output size come from the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextModelShape {
    pub embed_dim: usize,
    pub num_filters: usize,
    pub windows: Vec<usize>,
}

impl TextModelShape {
    pub fn config(&self, kind: EncoderKind, vocab_size: usize, output_dim: usize) -> EncoderConfig {
        EncoderConfig {
            kind,
            vocab_size,
            embed_dim: self.embed_dim,
            num_filters: self.num_filters,
            windows: self.windows.clone(),
            output_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub d: usize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub max_sweeps: usize,
    /// Sweeps without a new best validation RMSE before stopping.
    pub patience: usize,
    /// Share of the training ratings held out for early stopping; 0 trains
    /// on everything and stops on `loss_tol` or `max_sweeps`.
    pub validation_fraction: f64,
    /// Stop when a sweep lowers the training loss by less than
    /// `loss_tol · loss`.
    pub loss_tol: f64,
    pub init_scale: f64,
    pub seed: u64,
    /// Clamp predictions to `[lo, hi]` when scoring.
    pub clip: Option<(f64, f64)>,
    pub encoder: TextModelShape,
    pub encoder_steps: usize,
    pub encoder_learning_rate: f64,
    /// Conv head that produces SAM weights.
    pub sam_head: TextModelShape,
    pub sam: SamFitConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 50,
            lambda_u: 100.0,
            lambda_v: 10.0,
            max_sweeps: 200,
            patience: 5,
            validation_fraction: 0.1,
            loss_tol: 0.0,
            init_scale: 0.05,
            seed: 0,
            clip: None,
            encoder: TextModelShape {
                embed_dim: 50,
                num_filters: 50,
                windows: vec![3, 4, 5],
            },
            encoder_steps: 5,
            encoder_learning_rate: 0.1,
            sam_head: TextModelShape {
                embed_dim: 8,
                num_filters: 4,
                windows: vec![3, 4, 5],
            },
            sam: SamFitConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument(format!(
                "validation fraction must be in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if let Some((lo, hi)) = self.clip {
            if !(lo <= hi) {
                return Err(Error::InvalidArgument(format!("clip range [{lo}, {hi}] is empty")));
            }
        }
        if !(self.encoder_learning_rate >= 0.0 && self.loss_tol >= 0.0 && self.init_scale >= 0.0) {
            return Err(Error::InvalidArgument(
                "learning rate, loss tolerance and init scale must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Training loss and validation RMSE after one sweep (sweep 0 is the
/// initial model).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub train_loss: f64,
    pub validation_rmse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub variant: Variant,
    /// Factors at the best validation sweep.
    pub model: FactorModel,
    pub sam: Option<SamModel>,
    /// Item encoder at the best validation sweep.
    pub encoder: Option<EncoderParams>,
    pub trace: Vec<SweepRecord>,
    pub best_sweep: usize,
    pub sweeps: usize,
    /// Encoder blocks that were rejected after every retry.
    pub encoder_rejections: usize,
    pub clip: Option<(f64, f64)>,
}

impl TrainState {
    /// SAM weights, or all ones.
    pub fn weights(&self) -> Vec<f64> {
        match &self.sam {
            Some(s) => s.weights().to_vec(),
            None => vec![1.0; self.model.num_items()],
        }
    }

    pub fn predict(&self, i: usize, j: usize) -> Result<f64> {
        let p = self.model.predict(i, j)?;
        Ok(clip(p, self.clip))
    }

    pub fn predictions(&self, data: &RatingDataset) -> Result<Vec<f64>> {
        data.triples().iter().map(|t| self.predict(t.user, t.item)).collect()
    }

    pub fn rmse(&self, data: &RatingDataset) -> Result<f64> {
        rmse(&self.predictions(data)?, data)
    }

    /// Weighted risk plus the user penalty and the pull of each item vector
    /// towards its encoder output. Needs an item encoder.
    pub fn complete_loss(&self, data: &RatingDataset, corpus: &Corpus) -> Result<f64> {
        let encoder = self
            .encoder
            .as_ref()
            .ok_or_else(|| Error::Missing(format!("variant {} has no item encoder", self.variant)))?;
        let targets = encoder_targets(encoder, corpus)?;
        text_regularized_loss(&self.model, data, &self.weights(), &targets)
    }

    /// True when no recorded sweep raised the training loss by more than
    /// `slack` relative to the loss before it.
    pub fn descent_holds(&self, slack: f64) -> bool {
        self.trace
            .windows(2)
            .all(|w| w[1].train_loss <= w[0].train_loss + slack * w[0].train_loss.abs().max(1.0))
    }

    /// `sweep,train_loss,validation_rmse` rows; an empty RMSE field when no
    /// validation set was used.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut emit = || -> std::io::Result<()> {
            writeln!(out, "sweep,train_loss,validation_rmse")?;
            for r in &self.trace {
                let v = r.validation_rmse.map(fmt_real).unwrap_or_default();
                writeln!(out, "{},{},{}", r.sweep, fmt_real(r.train_loss), v)?;
            }
            out.flush()
        };
        emit().map_err(|e| Error::io(path, e))
    }
}

fn clip(p: f64, range: Option<(f64, f64)>) -> f64 {
    match range {
        Some((lo, hi)) => p.clamp(lo, hi),
        None => p,
    }
}

fn validation_rmse(model: &FactorModel, data: &RatingDataset, range: Option<(f64, f64)>) -> Result<f64> {
    let preds: Vec<f64> = data
        .triples()
        .iter()
        .map(|t| clip(model.predict_unchecked(t.user, t.item), range))
        .collect();
    rmse(&preds, data)
}

/// Fits the SAM weight head on the indicator of `data`, starting from a
/// head seeded by `config.seed`.
pub fn fit_sam(data: &RatingDataset, corpus: &Corpus, config: &TrainConfig) -> Result<SamFit> {
    if corpus.len() != data.num_items() {
        return Err(Error::Shape {
            expected: format!("corpus with {} documents", data.num_items()),
            actual: corpus.len().to_string(),
        });
    }
    let head_config = config.sam_head.config(EncoderKind::Conv, corpus.vocab_size(), 1);
    let head = EncoderParams::init(head_config, config.seed ^ SAM_SALT)?;
    let fitted = sam::fit(head, corpus, &data.indicator(), &config.sam)?;
    log::info!(
        "sam: {} iterations, objective {:.6} -> {:.6}, stop {:?}",
        fitted.iterations,
        fitted.trace[0],
        fitted.trace[fitted.trace.len() - 1],
        fitted.stop
    );
    Ok(fitted)
}

/// Fits one variant.
///
/// `*_plus` variants first fit SAM weights on the indicator of `data`, then
/// keep them fixed. Every sweep solves users, then items, then runs one block
/// of encoder steps. The sweep loss must never rise by more than
/// [`DESCENT_SLACK`] (relative); a rise is reported as a numerical error.
/// The returned model is the one with the best validation RMSE.
pub fn train(
    data: &RatingDataset,
    corpus: Option<&Corpus>,
    config: &TrainConfig,
    variant: Variant,
) -> Result<TrainState> {
    config.validate()?;
    let (m, n, d) = (data.num_users(), data.num_items(), config.d);
    let corpus = match corpus {
        Some(c) if c.len() != n => {
            return Err(Error::Shape {
                expected: format!("corpus with {n} documents"),
                actual: c.len().to_string(),
            })
        }
        Some(c) => Some(c),
        None if variant.needs_corpus() => {
            return Err(Error::Missing(format!(
                "variant {variant} needs an item text corpus"
            )))
        }
        None => None,
    };

    let (fit_set, validation) = if config.validation_fraction > 0.0 {
        let s = split(data, 1.0 - config.validation_fraction, config.seed ^ VALIDATION_SALT)?;
        (s.train, Some(s.test))
    } else {
        (data.clone(), None)
    };

    let sam_model = match (variant.uses_sam(), corpus) {
        (true, Some(c)) => Some(fit_sam(data, c, config)?.model),
        _ => None,
    };
    let weights = sam_model
        .as_ref()
        .map_or_else(|| vec![1.0; n], |s| s.weights().to_vec());

    let mut encoder = match (variant.encoder_kind(), corpus) {
        (Some(kind), Some(c)) => {
            let cfg = config.encoder.config(kind, c.vocab_size(), d);
            Some(EncoderParams::init(cfg, config.seed ^ ENCODER_SALT)?)
        }
        _ => None,
    };
    let zero_targets = vec![vec![0.0; d]; n];
    let mut targets = match (&encoder, corpus) {
        (Some(e), Some(c)) => Some(encoder_targets(e, c)?),
        _ => None,
    };

    let mut model = FactorModel::init(m, n, d, config.lambda_u, config.lambda_v, config.init_scale, config.seed)?;
    let loss_of = |model: &FactorModel, targets: &Option<Vec<Vec<f64>>>| {
        text_regularized_loss(model, &fit_set, &weights, targets.as_deref().unwrap_or(&zero_targets))
    };
    let score = |model: &FactorModel| -> Result<Option<f64>> {
        validation
            .as_ref()
            .map(|v| validation_rmse(model, v, config.clip))
            .transpose()
    };

    let mut loss = loss_of(&model, &targets)?;
    let mut trace = vec![SweepRecord {
        sweep: 0,
        train_loss: loss,
        validation_rmse: score(&model)?,
    }];
    // the untrained model is only returned when no sweep runs at all
    let mut best = (f64::INFINITY, 0, model.clone(), encoder.clone());
    let mut learning_rate = config.encoder_learning_rate;
    let mut encoder_rejections = 0;
    let mut sweeps = 0;

    for sweep in 1..=config.max_sweeps {
        sweeps = sweep;
        update_users(&mut model, &fit_set, &weights)?;
        update_items(&mut model, &fit_set, &weights, targets.as_deref())?;
        if let (Some(enc), Some(c)) = (encoder.as_mut(), corpus) {
            let report = update_item_encoder(enc, c, &model, config.encoder_steps, learning_rate)?;
            learning_rate = report.learning_rate;
            if !report.accepted {
                encoder_rejections += 1;
            }
            targets = Some(encoder_targets(enc, c)?);
        }
        if !model.is_finite() {
            return Err(Error::Numerical(format!("non-finite factors after sweep {sweep}")));
        }
        let next = loss_of(&model, &targets)?;
        if !next.is_finite() || next > loss + DESCENT_SLACK * loss.abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "training loss rose from {loss} to {next} in sweep {sweep}"
            )));
        }
        let decrease = loss - next;
        loss = next;
        let record = SweepRecord {
            sweep,
            train_loss: loss,
            validation_rmse: score(&model)?,
        };
        trace.push(record);
        log::debug!("{variant} sweep {sweep}: loss {loss:.6}, validation {:?}", record.validation_rmse);

        match record.validation_rmse {
            Some(v) => {
                if v < best.0 {
                    best = (v, sweep, model.clone(), encoder.clone());
                } else if sweep - best.1 >= config.patience {
                    break;
                }
            }
            None => best = (f64::INFINITY, sweep, model.clone(), encoder.clone()),
        }
        if decrease <= config.loss_tol * loss.abs() {
            break;
        }
    }

    let (_, best_sweep, model, encoder) = best;
    Ok(TrainState {
        variant,
        model,
        sam: sam_model,
        encoder,
        trace,
        best_sweep,
        sweeps,
        encoder_rejections,
        clip: config.clip,
    })
}
