//! Joint image-text augmentation for vision-language pre-training.
//!
//! A generated pair blends two images pixel-wise with a coefficient lambda
//! and concatenates their captions. Inside a batch of `B` pairs the first
//! `M` entries are replaced by pairs generated from entries `i` and `i + M`,
//! so batch size and schedule stay unchanged.
//!
//! - [`augment`]: the generation rule and its five ablation variants.
//! - [`pipeline`]: batch semantics, planning, seeding and parallel runs.
//! - [`embedding`]: the same rule applied to encoder features.
//! - [`dataio`]: manifests, fetching, image IO, shards and tensor files.
//! - [`metrics`]: R@K and RSUM for image-text retrieval.

pub mod augment;
pub mod dataio;
pub mod embedding;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod random;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    normalize_text, validate_config, AugmentedPair, Batch, ImageTensor, ImageTextPair, LambdaPolicy,
    MPolicy, MixGenConfig, TextSequence, Tokenizer, Variant, WhitespaceTokenizer,
};
