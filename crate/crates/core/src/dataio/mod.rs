//! Dataset IO: manifests, remote fetching, image decode/resize, shard
//! output, tensor files and dataset statistics.

pub mod fetch;
pub mod image_io;
pub mod manifest;
pub mod recipes;
pub mod shard;
pub mod stats;
pub mod tensor_file;

pub use fetch::{fetch_remote, FetchOptions, FetchOutcome, FetchReport};
pub use image_io::{load_image, quantize, resize_bilinear, save_png};
pub use manifest::{
    expand_pairs, load_manifest, parse_manifest, parse_manifest_str, serialize_manifest, write_manifest,
    ManifestRecord, PairRecord,
};
pub use shard::{write_augmented_shard, write_shard, write_shard_images, ShardEntry};
pub use stats::{compute_stats, DatasetStats, SourceStats};
pub use tensor_file::{read_tensor, read_tensor_file, write_tensor, write_tensor_file};
