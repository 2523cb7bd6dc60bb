//! Self-adaptive item weights.
//!
//! Each item gets a weight `w_j = 1 + softplus(z_j)`, where `z_j` is the
//! scalar output of a text encoder on the item's document, so every column
//! of `W` is constant and `w_j > 1` holds by construction. The encoder is
//! fitted, independently of any factor model, by minimising the spectral
//! norm of `I∘W − J`. Under column-wise random observation with rate `p_j`
//! the expected residual vanishes exactly when `w_j = 1 / p_j`, so the fitted
//! weights track inverse propensities.

mod residual;
mod spectral;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{fmt_real, IndicatorView};
use crate::encoder::{EncoderOutput, EncoderParams};
use crate::error::{Error, Result};
use crate::textprep::Corpus;

pub use residual::{LinearOperator, MaskedResidual};
pub use spectral::{spectral_norm, PowerIterationConfig, SpectralNorm};

/// `ln(1 + e^z)`, stable for large `|z|`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamObjective {
    /// Largest singular value of `I∘W − J`.
    Spectral,
    /// Frobenius norm of `I∘W − J`. Its minimiser under `w ≥ 1` is `w = 1`,
    /// so it only serves as a comparison.
    Frobenius,
}

impl std::str::FromStr for SamObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(SamObjective::Spectral),
            "frobenius" => Ok(SamObjective::Frobenius),
            other => Err(Error::InvalidArgument(format!("unknown objective {other:?}"))),
        }
    }
}

/// A fitted weight head and the per-item weights it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SamModel {
    head: EncoderParams,
    weights: Vec<f64>,
}

impl SamModel {
    pub fn from_head(head: EncoderParams, corpus: &Corpus) -> Result<Self> {
        let weights = weights_from_text(&head, corpus)?;
        Ok(SamModel { head, weights })
    }

    pub fn head(&self) -> &EncoderParams {
        &self.head
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `item_index,weight` rows.
    pub fn write_weights_csv(&self, path: &Path) -> Result<()> {
        write_weights_csv(&self.weights, path)
    }
}

pub fn write_weights_csv(weights: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("item_index,weight\n");
    for (j, w) in weights.iter().enumerate() {
        out.push_str(&format!("{j},{}\n", fmt_real(*w)));
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads `item_index,weight` rows written by [`write_weights_csv`].
pub fn read_weights_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut weights = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let (j, w) = line.split_once(',').ok_or_else(|| bad("expected item,weight".into()))?;
        let j: usize = j.trim().parse().map_err(|_| bad(format!("bad index {j:?}")))?;
        let w: f64 = w.trim().parse().map_err(|_| bad(format!("bad weight {w:?}")))?;
        if j != weights.len() {
            return Err(bad(format!("expected item {} next, got {j}", weights.len())));
        }
        if !(w >= 1.0) {
            return Err(bad(format!("weight {w} below 1")));
        }
        weights.push(w);
    }
    Ok(weights)
}

fn check_head(head: &EncoderParams) -> Result<()> {
    if head.config().output_dim != 1 {
        return Err(Error::Shape {
            expected: "weight head with output dimension 1".into(),
            actual: head.config().output_dim.to_string(),
        });
    }
    Ok(())
}

/// Scalar head outputs `z_j` for every item, with the caches for backward.
fn head_outputs(head: &EncoderParams, corpus: &Corpus) -> Result<(Vec<f64>, Vec<EncoderOutput>)> {
    check_head(head)?;
    let outputs = head.forward_corpus(corpus)?;
    let z = outputs.iter().map(|o| o.value[0]).collect();
    Ok((z, outputs))
}

/// `w_j = 1 + softplus(z_j)` for every item of `corpus`.
pub fn weights_from_text(head: &EncoderParams, corpus: &Corpus) -> Result<Vec<f64>> {
    let (z, _) = head_outputs(head, corpus)?;
    Ok(z.into_iter().map(|z| 1.0 + softplus(z)).collect())
}

/// Objective value and its gradient with respect to the per-item weights.
#[derive(Debug, Clone)]
pub struct WeightObjective {
    pub value: f64,
    pub weight_gradient: Vec<f64>,
    /// Top singular pair (spectral objective only), reusable as a warm start.
    pub spectral: Option<SpectralNorm>,
    pub converged: bool,
}

/// Evaluates the objective at explicit weights.
///
/// Spectral: `σ₁(I∘W − J)` with `∂σ₁/∂w_j = v₁[j] · Σ_{i observed in j} u₁[i]`.
/// Frobenius: `‖I∘W − J‖_F` with `∂/∂w_j = c_j (w_j − 1) / ‖·‖_F`.
pub fn weight_objective(
    indicator: &IndicatorView,
    weights: &[f64],
    objective: SamObjective,
    power: &PowerIterationConfig,
    warm_start: Option<&[f64]>,
) -> Result<WeightObjective> {
    let residual = MaskedResidual::new(indicator, weights)?;
    match objective {
        SamObjective::Spectral => {
            let s = spectral_norm(&residual, power, warm_start);
            let weight_gradient = (0..indicator.num_cols())
                .map(|j| {
                    let observed: f64 = indicator.col(j).iter().map(|&i| s.left[i]).sum();
                    s.right[j] * observed
                })
                .collect();
            Ok(WeightObjective {
                value: s.value,
                weight_gradient,
                converged: s.converged,
                spectral: Some(s),
            })
        }
        SamObjective::Frobenius => {
            let counts = indicator.col_counts();
            let total = indicator.num_rows() as f64 * indicator.num_cols() as f64;
            let nnz: usize = counts.iter().sum();
            let observed: f64 = counts
                .iter()
                .zip(weights)
                .map(|(&c, &w)| c as f64 * (w - 1.0).powi(2))
                .sum();
            let value = (observed + (total - nnz as f64)).sqrt();
            let weight_gradient = counts
                .iter()
                .zip(weights)
                .map(|(&c, &w)| if value > 0.0 { c as f64 * (w - 1.0) / value } else { 0.0 })
                .collect();
            Ok(WeightObjective {
                value,
                weight_gradient,
                spectral: None,
                converged: true,
            })
        }
    }
}

/// Objective and head-parameter gradient at the head's current weights.
#[derive(Debug, Clone)]
pub struct HeadObjective {
    pub value: f64,
    pub gradient: EncoderParams,
    pub weights: Vec<f64>,
    pub spectral: Option<SpectralNorm>,
    /// False when the power iteration ran out of iterations.
    pub converged: bool,
}

pub fn objective_and_gradient(
    head: &EncoderParams,
    corpus: &Corpus,
    indicator: &IndicatorView,
    objective: SamObjective,
    power: &PowerIterationConfig,
    warm_start: Option<&[f64]>,
) -> Result<HeadObjective> {
    if corpus.len() != indicator.num_cols() {
        return Err(Error::Shape {
            expected: format!("corpus with {} items", indicator.num_cols()),
            actual: corpus.len().to_string(),
        });
    }
    let (z, outputs) = head_outputs(head, corpus)?;
    let weights: Vec<f64> = z.iter().map(|&z| 1.0 + softplus(z)).collect();
    let eval = weight_objective(indicator, &weights, objective, power, warm_start)?;
    let upstream: Vec<Vec<f64>> = eval
        .weight_gradient
        .iter()
        .zip(&z)
        .map(|(g, &z)| vec![g * sigmoid(z)])
        .collect();
    let gradient = head.backward_corpus(&outputs, &upstream)?;
    Ok(HeadObjective {
        value: eval.value,
        gradient,
        weights,
        spectral: eval.spectral,
        converged: eval.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamFitConfig {
    /// Largest step tried; each line search starts at twice the previous
    /// accepted step, capped here.
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop when an accepted step lowers the objective by less than
    /// `tol · objective`.
    pub tol: f64,
    pub objective: SamObjective,
    pub power_tol: f64,
    pub power_max_iters: usize,
    pub seed: u64,
    /// Halvings tried before a line search gives up.
    pub max_halvings: usize,
}

impl Default for SamFitConfig {
    fn default() -> Self {
        SamFitConfig {
            learning_rate: 1.0,
            max_iters: 300,
            tol: 1e-7,
            objective: SamObjective::Spectral,
            power_tol: 1e-8,
            power_max_iters: 1000,
            seed: 0,
            max_halvings: 20,
        }
    }
}

impl SamFitConfig {
    fn power(&self) -> PowerIterationConfig {
        PowerIterationConfig {
            tol: self.power_tol,
            max_iters: self.power_max_iters,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SamFit {
    pub model: SamModel,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// True when the last power iteration converged.
    pub spectral_converged: bool,
    /// Why the loop ended.
    pub stop: SamStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamStop {
    ZeroLearningRate,
    Tolerance,
    LineSearchExhausted,
    MaxIters,
}

/// Gradient descent on the head with Armijo backtracking (constant 1e-4,
/// step halving). Every accepted step lowers the objective.
pub fn fit(
    head: EncoderParams,
    corpus: &Corpus,
    indicator: &IndicatorView,
    config: &SamFitConfig,
) -> Result<SamFit> {
    const ARMIJO: f64 = 1e-4;
    check_head(&head)?;
    let power = config.power();
    let mut params = head;
    let mut current = objective_and_gradient(
        &params,
        corpus,
        indicator,
        config.objective,
        &power,
        None,
    )?;
    check_finite(current.value, 0)?;
    let mut trace = vec![current.value];

    if config.learning_rate == 0.0 {
        return Ok(SamFit {
            model: SamModel {
                head: params,
                weights: current.weights,
            },
            trace,
            iterations: 0,
            spectral_converged: current.converged,
            stop: SamStop::ZeroLearningRate,
        });
    }

    let mut stop = SamStop::MaxIters;
    let mut iterations = 0;
    let mut last_step = config.learning_rate;
    for it in 1..=config.max_iters {
        iterations = it;
        let grad_sq = current.gradient.norm_squared();
        if grad_sq == 0.0 {
            stop = SamStop::Tolerance;
            break;
        }
        let mut step = (2.0 * last_step).min(config.learning_rate);
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let mut candidate = params.clone();
            candidate.add_scaled(&current.gradient, -step);
            if candidate.is_finite() {
                let warm = current.spectral.as_ref().map(|s| s.right.as_slice());
                let eval = objective_and_gradient(
                    &candidate,
                    corpus,
                    indicator,
                    config.objective,
                    &power,
                    warm,
                )?;
                if eval.value.is_finite() && eval.value <= current.value - ARMIJO * step * grad_sq {
                    accepted = Some((candidate, eval));
                    break;
                }
            }
            step *= 0.5;
        }
        last_step = step;
        let Some((candidate, eval)) = accepted else {
            stop = SamStop::LineSearchExhausted;
            break;
        };
        check_finite(eval.value, it)?;
        let decrease = current.value - eval.value;
        params = candidate;
        current = eval;
        trace.push(current.value);
        if decrease <= config.tol * current.value.abs() {
            stop = SamStop::Tolerance;
            break;
        }
    }
    log::debug!(
        "sam fit: {iterations} iterations, objective {} -> {}, stop {stop:?}",
        trace[0],
        current.value
    );
    Ok(SamFit {
        model: SamModel {
            head: params,
            weights: current.weights,
        },
        trace,
        iterations,
        spectral_converged: current.converged,
        stop,
    })
}

fn check_finite(value: f64, iteration: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "weight objective became {value} at iteration {iteration}"
        )))
    }
}
