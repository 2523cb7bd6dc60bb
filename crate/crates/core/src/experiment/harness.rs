use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{fmt_real, split, Rating, RatingDataset};
use crate::error::{Error, Result};
use crate::factorization::{train, TrainConfig, Variant, DESCENT_SLACK};

use super::datasets::{DatasetSpec, LoadedDataset};
use super::metrics::{improvement, median, rmse};

fn default_variants() -> Vec<Variant> {
    vec![Variant::Mf, Variant::MfPlus]
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_fractions() -> Vec<f64> {
    vec![0.2, 0.4, 0.6, 0.8]
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    /// Train share for the overall comparison.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Train shares for the sparsity sweep.
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Hyperparameters; the seed inside is replaced by each run's seed.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec) -> Self {
        ExperimentConfig {
            dataset,
            variants: default_variants(),
            train_fraction: default_train_fraction(),
            fractions: default_fractions(),
            seeds: default_seeds(),
            train: TrainConfig::default(),
            output_dir: None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("experiment needs at least one seed".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidArgument("experiment needs at least one variant".into()));
        }
        for &f in self.fractions.iter().chain([&self.train_fraction]) {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidArgument(format!("train fraction {f} is outside (0, 1)")));
            }
        }
        self.train.validate()
    }
}

/// Outcome of one (variant, fraction, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub variant: Variant,
    pub fraction: f64,
    pub seed: u64,
    pub rmse: f64,
    pub sweeps: usize,
    /// Seconds spent fitting; not part of any written table.
    pub wall_time: f64,
    /// Training ratings over `m · n`.
    pub train_density: f64,
    /// True when the training loss never rose between sweeps.
    pub descent_held: bool,
}

/// Per-variant medians at one train fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionSummary {
    pub fraction: f64,
    /// `fraction` times the density of the whole dataset.
    pub nominal_density: f64,
    pub medians: Vec<(Variant, f64)>,
    /// Best SAM variant against best plain variant, when both ran.
    pub improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub dataset: String,
    pub rows: Vec<ResultRow>,
    pub summaries: Vec<FractionSummary>,
    /// Variants skipped because the dataset has no item text.
    pub skipped_variants: Vec<Variant>,
    /// `(fraction, seed)` pairs whose split could not keep coverage.
    pub dropped: Vec<(f64, u64)>,
}

/// Entries of `truth` outside `train`, or the held-out split without one.
fn evaluation_set(loaded: &LoadedDataset, train: &RatingDataset, held_out: RatingDataset) -> Result<RatingDataset> {
    let Some(full) = &loaded.truth else {
        return Ok(held_out);
    };
    let (m, n) = (train.num_users(), train.num_items());
    let mut seen = vec![false; m * n];
    for r in train.triples() {
        seen[r.user * n + r.item] = true;
    }
    let triples = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !seen[i * n + j])
        .map(|(i, j)| Rating::new(i, j, full[(i, j)]))
        .collect();
    RatingDataset::new(m, n, triples)
}

/// Trains every runnable variant for every (fraction, seed) cell.
pub fn run_grid(config: &ExperimentConfig, fractions: &[f64]) -> Result<ResultTable> {
    config.validate()?;
    let loaded = config.dataset.load()?;
    run_grid_on(config, &loaded, fractions)
}

/// As [`run_grid`] on an already loaded dataset.
pub fn run_grid_on(config: &ExperimentConfig, loaded: &LoadedDataset, fractions: &[f64]) -> Result<ResultTable> {
    config.validate()?;
    let mut variants = Vec::new();
    let mut skipped_variants = Vec::new();
    for &v in &config.variants {
        if v.needs_corpus() && loaded.corpus.is_none() {
            log::warn!("skipping {v}: the dataset has no item text");
            skipped_variants.push(v);
        } else if !variants.contains(&v) {
            variants.push(v);
        }
    }
    let data = &loaded.ratings;
    let cells = (data.num_users() * data.num_items()) as f64;
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for &fraction in fractions {
        for &seed in &config.seeds {
            let pair = match split(data, fraction, seed) {
                Ok(p) => p,
                Err(e) if !e.is_numerical() => {
                    log::warn!("dropping seed {seed} at fraction {fraction}: {e}");
                    dropped.push((fraction, seed));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let test = evaluation_set(loaded, &pair.train, pair.test)?;
            let train_config = TrainConfig {
                seed,
                ..config.train.clone()
            };
            for &variant in &variants {
                let start = Instant::now();
                let state = train(&pair.train, loaded.corpus.as_ref(), &train_config, variant)?;
                let wall_time = start.elapsed().as_secs_f64();
                let score = rmse(&state.predictions(&test)?, &test)?;
                log::info!(
                    "{} {variant} fraction {fraction} seed {seed}: rmse {score:.4} after {} sweeps ({wall_time:.1}s)",
                    loaded.name,
                    state.sweeps
                );
                rows.push(ResultRow {
                    variant,
                    fraction,
                    seed,
                    rmse: score,
                    sweeps: state.sweeps,
                    wall_time,
                    train_density: pair.train.len() as f64 / cells,
                    descent_held: state.descent_holds(DESCENT_SLACK),
                });
            }
        }
    }
    let summaries = fractions
        .iter()
        .map(|&f| summarize(&rows, &variants, f, data.density()))
        .collect();
    Ok(ResultTable {
        dataset: loaded.name.clone(),
        rows,
        summaries,
        skipped_variants,
        dropped,
    })
}

fn summarize(rows: &[ResultRow], variants: &[Variant], fraction: f64, density: f64) -> FractionSummary {
    let medians: Vec<(Variant, f64)> = variants
        .iter()
        .filter_map(|&v| {
            let scores: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == v && r.fraction == fraction)
                .map(|r| r.rmse)
                .collect();
            median(&scores).map(|m| (v, m))
        })
        .collect();
    let best = |plus: bool| {
        medians
            .iter()
            .filter(|(v, _)| v.uses_sam() == plus)
            .map(|&(_, m)| m)
            .min_by(f64::total_cmp)
    };
    let improvement = match (best(false), best(true)) {
        (Some(b), Some(p)) => Some(improvement(b, p)),
        _ => None,
    };
    FractionSummary {
        fraction,
        nominal_density: fraction * density,
        medians,
        improvement,
    }
}

/// Overall comparison at `config.train_fraction`.
pub fn run_table2(config: &ExperimentConfig) -> Result<ResultTable> {
    run_grid(config, &[config.train_fraction])
}

/// The comparison repeated for every fraction in `config.fractions`.
pub fn run_sparsity_sweep(config: &ExperimentConfig) -> Result<ResultTable> {
    run_grid(config, &config.fractions)
}

impl ResultTable {
    pub fn summary(&self, fraction: f64) -> Option<&FractionSummary> {
        self.summaries.iter().find(|s| s.fraction == fraction)
    }

    pub fn median(&self, variant: Variant, fraction: f64) -> Option<f64> {
        self.summary(fraction)?
            .medians
            .iter()
            .find(|(v, _)| *v == variant)
            .map(|&(_, m)| m)
    }

    /// `variant,fraction,seed,rmse,sweeps,train_density`, one row per cell.
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("variant,fraction,seed,rmse,sweeps,train_density\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.variant,
                r.fraction,
                r.seed,
                fmt_real(r.rmse),
                r.sweeps,
                fmt_real(r.train_density)
            );
        }
        out
    }

    /// `row,fraction,value`: median RMSE per variant, then `improve` and
    /// `density` rows per fraction.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("row,fraction,value\n");
        for s in &self.summaries {
            for (v, m) in &s.medians {
                let _ = writeln!(out, "{v},{},{}", s.fraction, fmt_real(*m));
            }
            if let Some(i) = s.improvement {
                let _ = writeln!(out, "improve,{},{}", s.fraction, fmt_real(i));
            }
            let _ = writeln!(out, "density,{},{}", s.fraction, fmt_real(s.nominal_density));
        }
        out
    }

    /// Variants down, fractions across, with `Improve` as the last row.
    pub fn render(&self) -> String {
        let variants: Vec<Variant> = {
            let mut seen = BTreeSet::new();
            self.summaries
                .iter()
                .flat_map(|s| s.medians.iter().map(|(v, _)| *v))
                .filter(|v| seen.insert(v.name()))
                .collect()
        };
        let mut out = format!("{} (median test RMSE over seeds)\n", self.dataset);
        let _ = write!(out, "{:<14}", "train share");
        for s in &self.summaries {
            let _ = write!(out, "{:>18}", format!("{:.0}% ({:.2}%)", 100.0 * s.fraction, 100.0 * s.nominal_density));
        }
        out.push('\n');
        for v in &variants {
            let _ = write!(out, "{:<14}", v.name());
            for s in &self.summaries {
                let cell = s
                    .medians
                    .iter()
                    .find(|(x, _)| x == v)
                    .map_or_else(|| "-".to_string(), |(_, m)| format!("{m:.4}"));
                let _ = write!(out, "{cell:>18}");
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<14}", "Improve");
        for s in &self.summaries {
            let cell = s.improvement.map_or_else(|| "-".to_string(), |i| format!("{:.2}%", 100.0 * i));
            let _ = write!(out, "{cell:>18}");
        }
        out.push('\n');
        if !self.skipped_variants.is_empty() {
            let names: Vec<&str> = self.skipped_variants.iter().map(|v| v.name()).collect();
            let _ = writeln!(out, "skipped (no item text): {}", names.join(", "));
        }
        for (f, seed) in &self.dropped {
            let _ = writeln!(out, "dropped: seed {seed} at train share {f}");
        }
        out
    }

    /// Writes `results.csv`, `summary.csv` and `table.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("results.csv", self.rows_csv()),
            ("summary.csv", self.summary_csv()),
            ("table.txt", self.render()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
