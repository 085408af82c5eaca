//! Composite previews: source A, source B and the generated image side by side.

use std::io::Write;

use serde::Serialize;

use mixgen_core::dataio::{load_image, save_png};
use mixgen_core::pipeline::{apply_mixgen_detailed, derive_stream_seed, plan_batches};
use mixgen_core::random::stream;
use mixgen_core::types::CHANNELS;
use mixgen_core::{Batch, Error, ImageTensor, ImageTextPair, MPolicy, Result, Variant};

use crate::{load_pairs, PreviewArgs};

pub const PREVIEW_FILE: &str = "preview.jsonl";

/// White gap between panels, in pixels.
const GAP: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreviewLine {
    pub composite: String,
    pub id_a: String,
    pub id_b: String,
    pub text_a: String,
    pub text_b: String,
    pub text_mixed: String,
    pub lambda: f32,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreviewReport {
    pub composites: usize,
    pub sidecar: String,
}

fn composite(panels: [&ImageTensor; 3]) -> ImageTensor {
    let (h, w) = (panels[0].height(), panels[0].width());
    let out_w = 3 * w + 2 * GAP;
    let mut data = vec![1.0f32; h * out_w * CHANNELS];
    for (k, panel) in panels.iter().enumerate() {
        let x0 = k * (w + GAP);
        for y in 0..h {
            let src = &panel.data()[y * w * CHANNELS..(y + 1) * w * CHANNELS];
            let dst = (y * out_w + x0) * CHANNELS;
            data[dst..dst + w * CHANNELS].copy_from_slice(src);
        }
    }
    ImageTensor::new(h, out_w, data).expect("panels hold valid samples")
}

/// Pairs the first `n` shuffled records with the next `n`, exactly as one
/// batch of `2n` with `M = n`, and writes one composite per generated pair.
pub fn cmd_preview(args: &PreviewArgs) -> Result<PreviewReport> {
    let config = args.mix.config(MPolicy::Absolute(args.n))?;
    let pairs = load_pairs(&args.manifest)?;
    if args.n == 0 || args.n.saturating_mul(2) > pairs.len() {
        return Err(Error::InvalidConfig(format!(
            "--n {} needs {} pairs, the manifest has {}",
            args.n,
            args.n.saturating_mul(2),
            pairs.len()
        )));
    }
    let plan = plan_batches(pairs.len(), 2 * args.n, config.seed, true)?.swap_remove(0);
    let loaded = plan
        .member_indices
        .iter()
        .map(|&i| {
            let r = &pairs[i];
            load_image(&r.image, config.target_height, config.target_width)
                .map(|img| ImageTextPair::new(r.id.clone(), img, r.text.clone()))
                .map_err(|e| Error::Record {
                    batch_index: 0,
                    id: r.id.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let batch = Batch::new(loaded)?;
    let sources = batch.pairs().to_vec();
    let mut rng = stream(derive_stream_seed(config.seed, 0));
    let mixed = apply_mixgen_detailed(batch, &config, &mut rng)?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        context: format!("creating {}", args.out.display()),
        source: e,
    })?;
    let sidecar = args.out.join(PREVIEW_FILE);
    let mut body = Vec::new();
    for (k, generated) in mixed.generated.iter().enumerate() {
        let (a, b) = (&sources[k], &sources[k + args.n]);
        let name = format!("preview_{k:03}.png");
        save_png(&composite([&a.image, &b.image, &generated.pair.image]), &args.out.join(&name))?;
        let line = PreviewLine {
            composite: name,
            id_a: a.id.clone(),
            id_b: b.id.clone(),
            text_a: a.text.to_string(),
            text_b: b.text.to_string(),
            text_mixed: generated.pair.text.to_string(),
            lambda: generated.lambda_used,
            variant: generated.variant,
        };
        serde_json::to_writer(&mut body, &line).expect("preview line serializes");
        body.push(b'\n');
    }
    std::fs::File::create(&sidecar)
        .and_then(|mut f| f.write_all(&body))
        .map_err(|e| Error::Io {
            context: format!("writing {}", sidecar.display()),
            source: e,
        })?;
    Ok(PreviewReport {
        composites: mixed.generated.len(),
        sidecar: sidecar.display().to_string(),
    })
}
