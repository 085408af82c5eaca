//! Augmented shard output: PNG images plus a JSONL sidecar.
//!
//! Each sidecar line is
//! `{"id","image","text","lambda","variant","sources"}`. Image paths are
//! relative to the shard directory. Pairs carried over unchanged from the
//! input batch have `lambda` and `variant` set to null and a single source.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dataio::image_io::save_png;
use crate::error::{Error, Result};
use crate::types::{AugmentedPair, ImageTensor, ImageTextPair, Variant};

pub const IMAGE_DIR: &str = "images";

#[derive(Debug, Clone, Copy)]
pub enum ShardEntry<'a> {
    Generated(&'a AugmentedPair),
    Original(&'a ImageTextPair),
}

impl ShardEntry<'_> {
    fn pair(&self) -> &ImageTextPair {
        match self {
            ShardEntry::Generated(a) => &a.pair,
            ShardEntry::Original(p) => p,
        }
    }

    pub fn id(&self) -> &str {
        &self.pair().id
    }

    pub fn image(&self) -> &ImageTensor {
        &self.pair().image
    }
}

#[derive(Serialize)]
struct ShardLine<'a> {
    id: &'a str,
    image: &'a str,
    text: &'a str,
    lambda: Option<f32>,
    variant: Option<Variant>,
    sources: Vec<&'a str>,
}

/// Writes each entry's image to `out_dir/images/{prefix}_{index:05}.png` and
/// returns the sidecar lines, in entry order, without trailing newlines.
pub fn write_shard_images(entries: &[ShardEntry<'_>], out_dir: &Path, prefix: &str) -> Result<Vec<String>> {
    let image_dir = out_dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&image_dir)
        .map_err(|e| Error::io(format!("creating {}", image_dir.display()), e))?;
    entries
        .iter()
        .enumerate()
        .map(|(idx, entry)| {
            let file = format!("{prefix}_{idx:05}.png");
            let rel = format!("{IMAGE_DIR}/{file}");
            save_png(entry.image(), &image_dir.join(&file)).map_err(|e| with_id(entry.id(), e))?;
            let line = match entry {
                ShardEntry::Generated(a) => ShardLine {
                    id: &a.pair.id,
                    image: &rel,
                    text: a.pair.text.as_str(),
                    lambda: Some(a.lambda_used),
                    variant: Some(a.variant),
                    sources: a.sources.iter().map(String::as_str).collect(),
                },
                ShardEntry::Original(p) => ShardLine {
                    id: &p.id,
                    image: &rel,
                    text: p.text.as_str(),
                    lambda: None,
                    variant: None,
                    sources: vec![&p.id],
                },
            };
            serde_json::to_string(&line).map_err(|e| Error::Json {
                context: format!("serializing shard line for {}", entry.id()),
                source: e,
            })
        })
        .collect()
}

fn with_id(id: &str, err: Error) -> Error {
    match err {
        Error::Io { context, source } => Error::Io {
            context: format!("pair {id}: {context}"),
            source,
        },
        other => other,
    }
}

/// Writes a complete shard (`out_dir/{name}.jsonl` plus images) and returns
/// the sidecar path.
pub fn write_shard(entries: &[ShardEntry<'_>], out_dir: &Path, name: &str) -> Result<PathBuf> {
    let lines = write_shard_images(entries, out_dir, name)?;
    let path = out_dir.join(format!("{name}.jsonl"));
    let mut body = String::new();
    for line in lines {
        body.push_str(&line);
        body.push('\n');
    }
    std::fs::write(&path, body).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(path)
}

pub fn write_augmented_shard(pairs: &[AugmentedPair], out_dir: &Path, name: &str) -> Result<PathBuf> {
    let entries: Vec<ShardEntry<'_>> = pairs.iter().map(ShardEntry::Generated).collect();
    write_shard(&entries, out_dir, name)
}
