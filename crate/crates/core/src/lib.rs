//! Exact AND-OR interaction decomposition of small classifiers, sparse
//! interaction extraction, transfer-based generalization scoring, and tracking
//! of these quantities across training checkpoints.
//!
//! The pipeline for one sample is:
//! 1. [`masking::masked_output_table`]: score the sample under all 2ⁿ maskings;
//! 2. [`sparsify::sparsify`] and [`interaction::decompose`]: split each score
//!    into AND and OR channels and take their subset transforms, choosing the
//!    split that minimizes the total L1 mass;
//! 3. [`saliency::extract_salient`] and [`saliency::match_generalization`]:
//!    keep effects above a threshold and check whether a baseline model trained
//!    on held-out data encodes the same effects.
//!
//! [`dynamics::sweep`] repeats this for every checkpoint of a training run.

pub mod analysis;
pub mod chart;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod fsutil;
pub mod interaction;
pub mod masking;
pub mod model;
pub mod par;
pub mod saliency;
pub mod sparsify;
pub mod subset;
pub mod synth;
pub mod transform;
pub mod verify;

pub use error::{Error, Result};
pub use interaction::{decompose, GammaVector, InteractionDecomposition, Kind};
pub use masking::{compute_baseline, mask_input, masked_output_table, BaselineVector, MaskedOutputTable, Scorer};
pub use model::{init_model, load_checkpoint, save_checkpoint, Model, ModelSpec, TrainConfig};
pub use par::Execution;
pub use saliency::{extract_salient, match_generalization, GeneralizationReport, ThresholdPolicy};
pub use sparsify::{sparsify, SparsifyConfig, SparsifyResult};
pub use subset::SubsetMask;
