//! Weighted matrix factorisation.
//!
//! The general objective over observed entries `Ω` is
//!
//! ```text
//! Σ_Ω w_j (r_ij − u_iᵀv_j)² + λ_u Σ_i ‖u_i‖² + λ_v Σ_j ‖v_j − s_j‖²
//! ```
//!
//! where `w_j` are per-item weights (all 1 without SAM) and `s_j` is the
//! item-encoder output for item `j` (zero without an encoder, which gives the
//! plain ridge-regularised loss). Training alternates exact ridge solves for
//! users and items with gradient steps on the item encoder.

mod loss;
mod model;
mod train;
mod updates;

#[cfg(test)]
mod tests;

pub use loss::{regularized_loss, text_regularized_loss, weighted_risk};
pub use model::FactorModel;
pub use train::{fit_sam, train, SweepRecord, TextModelShape, TrainConfig, TrainState, Variant, DESCENT_SLACK};
pub use updates::{
    encoder_targets, update_item_encoder, update_items, update_users, EncoderStepReport,
};
