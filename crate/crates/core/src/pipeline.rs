//! Batch semantics, epoch planning, per-batch seeding and parallel runs.
//!
//! Within a batch of `B` pairs the first `M` entries are replaced: entry `i`
//! becomes a pair generated from the originals at `i` and `i + M`. Entries at
//! `M` and above are returned untouched. Every batch draws from its own
//! stream seeded by [`derive_stream_seed`], so output does not depend on how
//! batches are scheduled across workers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::augment::{make_pair, plan_pair};
use crate::dataio::image_io::load_image;
use crate::dataio::manifest::PairRecord;
use crate::dataio::shard::{write_shard_images, ShardEntry};
use crate::error::{Error, Result};
use crate::random::{stream, uniform_below};
use crate::types::{
    validate_config, AugmentedPair, Batch, ImageTextPair, MPolicy, MixGenConfig, TextSequence,
    WhitespaceTokenizer, CHANNELS,
};

pub use crate::random::derive_stream_seed;

/// Sidecar written by [`run`] inside the output directory.
pub const SHARD_FILE: &str = "shard.jsonl";

/// Number of leading entries replaced in a batch of `batch_size`.
pub fn resolve_m(policy: MPolicy, batch_size: usize) -> Result<usize> {
    if batch_size == 0 {
        return Err(Error::EmptyBatch);
    }
    let m = match policy {
        MPolicy::Fraction(f) => {
            if !(0.0..=0.5).contains(&f) {
                return Err(Error::InvalidMRatio(f));
            }
            (f * batch_size as f64).floor() as usize
        }
        MPolicy::Absolute(m) => m,
    };
    if m.saturating_mul(2) > batch_size {
        return Err(Error::MTooLarge { m, batch_size });
    }
    Ok(m)
}

/// A batch after augmentation, with provenance for the replaced entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    /// The `M` generated pairs, in batch order.
    pub generated: Vec<AugmentedPair>,
    /// Entries `M..B`, unchanged.
    pub originals: Vec<ImageTextPair>,
}

impl MixedBatch {
    pub fn len(&self) -> usize {
        self.generated.len() + self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<ShardEntry<'_>> {
        self.generated
            .iter()
            .map(ShardEntry::Generated)
            .chain(self.originals.iter().map(ShardEntry::Original))
            .collect()
    }

    pub fn into_batch(self) -> Batch {
        let pairs = self
            .generated
            .into_iter()
            .map(|a| a.pair)
            .chain(self.originals)
            .collect();
        Batch::new(pairs).expect("a mixed batch is never empty")
    }
}

/// Replaces the first `M` entries of `batch` with generated pairs.
pub fn apply_mixgen<R: RngCore + ?Sized>(batch: Batch, config: &MixGenConfig, rng: &mut R) -> Result<Batch> {
    Ok(apply_mixgen_detailed(batch, config, rng)?.into_batch())
}

/// [`apply_mixgen`] keeping lambda, variant and sources of each generated pair.
pub fn apply_mixgen_detailed<R: RngCore + ?Sized>(
    batch: Batch,
    config: &MixGenConfig,
    rng: &mut R,
) -> Result<MixedBatch> {
    let m = resolve_m(config.m_policy, batch.size())?;
    mix_first(batch.into_pairs(), m, config, rng)
}

fn mix_first<R: RngCore + ?Sized>(
    mut pairs: Vec<ImageTextPair>,
    m: usize,
    config: &MixGenConfig,
    rng: &mut R,
) -> Result<MixedBatch> {
    debug_assert!(2 * m <= pairs.len());
    let generated = (0..m)
        .map(|i| make_pair(&pairs[i], &pairs[i + m], config, rng))
        .collect::<Result<Vec<_>>>()?;
    let originals = pairs.split_off(m);
    Ok(MixedBatch { generated, originals })
}

/// Generated captions and lambdas from [`augment_buffer`].
#[derive(Debug, Clone, PartialEq)]
pub struct BufferOutcome {
    pub m: usize,
    /// All `B` captions, the first `M` replaced.
    pub texts: Vec<String>,
    pub lambdas: Vec<f32>,
}

/// Applies the batch rule to a caller-owned `B x H x W x C` buffer in place.
///
/// Uses the stream for `(config.seed, batch_index)` and produces the same
/// values as [`apply_mixgen`] given that stream and the same pairs.
pub fn augment_buffer(
    images: &mut [f32],
    shape: [usize; 4],
    texts: &[String],
    config: &MixGenConfig,
    batch_index: u64,
) -> Result<BufferOutcome> {
    let mut rng = stream(derive_stream_seed(config.seed, batch_index));
    augment_buffer_with(images, shape, texts, config, &mut rng)
}

pub fn augment_buffer_with<R: RngCore + ?Sized>(
    images: &mut [f32],
    shape: [usize; 4],
    texts: &[String],
    config: &MixGenConfig,
    rng: &mut R,
) -> Result<BufferOutcome> {
    let [b, h, w, c] = shape;
    let stride = h * w * c;
    if c != CHANNELS || images.len() != b * stride || texts.len() != b {
        return Err(Error::InvalidConfig(format!(
            "buffer of {} samples and {} texts does not match shape {b}x{h}x{w}x{c}",
            images.len(),
            texts.len()
        )));
    }
    let m = resolve_m(config.m_policy, b)?;
    let (head, tail) = images.split_at_mut(m * stride);
    let mut out_texts = Vec::with_capacity(b);
    let mut lambdas = Vec::with_capacity(m);
    for i in 0..m {
        let plan = plan_pair(
            &TextSequence::new(&texts[i]),
            &TextSequence::new(&texts[i + m]),
            config,
            &WhitespaceTokenizer,
            rng,
        )?;
        plan.image.apply_in_place(&mut head[i * stride..(i + 1) * stride], &tail[i * stride..(i + 1) * stride]);
        out_texts.push(plan.text.into());
        lambdas.push(plan.lambda_used);
    }
    out_texts.extend(texts[m..].iter().cloned());
    Ok(BufferOutcome {
        m,
        texts: out_texts,
        lambdas,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchPlan {
    pub batch_index: u64,
    pub member_indices: Vec<usize>,
}

/// Splits a seeded permutation of `0..dataset_size` into consecutive chunks
/// of `batch_size`; a trailing partial chunk is kept unless `drop_last`.
pub fn plan_batches(dataset_size: usize, batch_size: usize, shuffle_seed: u64, drop_last: bool) -> Result<Vec<BatchPlan>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    if dataset_size == 0 || (drop_last && dataset_size < batch_size) {
        return Err(Error::DatasetTooSmall {
            size: dataset_size,
            batch_size,
        });
    }
    let mut order: Vec<usize> = (0..dataset_size).collect();
    let mut rng = stream(shuffle_seed);
    for i in (1..dataset_size).rev() {
        let j = uniform_below(&mut rng, i as u64 + 1) as usize;
        order.swap(i, j);
    }
    Ok(order
        .chunks(batch_size)
        .filter(|chunk| !drop_last || chunk.len() == batch_size)
        .enumerate()
        .map(|(k, chunk)| BatchPlan {
            batch_index: k as u64,
            member_indices: chunk.to_vec(),
        })
        .collect())
}

/// Runs on each loaded batch before mixing. The pipeline ships none.
pub trait PreAugment: Send + Sync {
    fn apply(&self, batch_index: u64, batch: Batch) -> Result<Batch>;
}

/// Passes batches through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoPreAugment;

impl PreAugment for NoPreAugment {
    fn apply(&self, _batch_index: u64, batch: Batch) -> Result<Batch> {
        Ok(batch)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: MixGenConfig,
    pub batch_size: usize,
    pub workers: usize,
    pub drop_last: bool,
    pub skip_errors: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            config: MixGenConfig::default(),
            batch_size: 512,
            workers: default_workers(),
            drop_last: true,
            skip_errors: false,
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Totals of one [`run`]. Stage timings are summed over batches, so with
/// several workers they can exceed `wall_time`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub batches_processed: usize,
    pub pairs_emitted: usize,
    pub pairs_generated_by_mixgen: usize,
    pub records_skipped: usize,
    /// Seconds.
    pub wall_time: f64,
    /// Seconds per stage.
    pub per_stage_timing: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Default)]
struct StageTimes {
    load: Duration,
    mix: Duration,
    write: Duration,
}

struct BatchResult {
    lines: Vec<String>,
    generated: usize,
    skipped: usize,
    times: StageTimes,
}

fn load_batch(
    plan: &BatchPlan,
    pairs: &[PairRecord],
    opts: &RunOptions,
) -> Result<(Vec<ImageTextPair>, usize)> {
    let mut loaded = Vec::with_capacity(plan.member_indices.len());
    let mut skipped = 0;
    for &idx in &plan.member_indices {
        let record = &pairs[idx];
        match load_image(&record.image, opts.config.target_height, opts.config.target_width) {
            Ok(image) => loaded.push(ImageTextPair::new(record.id.clone(), image, record.text.clone())),
            Err(e) if opts.skip_errors => {
                log::warn!("batch {}: skipping {}: {e}", plan.batch_index, record.id);
                skipped += 1;
            }
            Err(e) => {
                return Err(Error::Record {
                    batch_index: plan.batch_index,
                    id: record.id.clone(),
                    source: Box::new(e),
                })
            }
        }
    }
    Ok((loaded, skipped))
}

/// `M` for a batch that may be shorter than the configured size.
fn effective_m(policy: MPolicy, len: usize) -> Result<usize> {
    match policy {
        MPolicy::Absolute(m) => Ok(m.min(len / 2)),
        fraction => resolve_m(fraction, len),
    }
}

fn process_batch(
    plan: &BatchPlan,
    pairs: &[PairRecord],
    opts: &RunOptions,
    hook: &dyn PreAugment,
    out_dir: &Path,
) -> Result<BatchResult> {
    let mut times = StageTimes::default();
    let t = Instant::now();
    let (loaded, skipped) = load_batch(plan, pairs, opts)?;
    times.load = t.elapsed();
    if loaded.is_empty() {
        return Ok(BatchResult {
            lines: Vec::new(),
            generated: 0,
            skipped,
            times,
        });
    }

    let t = Instant::now();
    let batch = hook.apply(plan.batch_index, Batch::new(loaded)?)?;
    let m = effective_m(opts.config.m_policy, batch.size())?;
    let mut rng = stream(derive_stream_seed(opts.config.seed, plan.batch_index));
    let mixed = mix_first(batch.into_pairs(), m, &opts.config, &mut rng)?;
    times.mix = t.elapsed();

    let t = Instant::now();
    let lines = write_shard_images(&mixed.entries(), out_dir, &format!("b{:06}", plan.batch_index))?;
    times.write = t.elapsed();
    Ok(BatchResult {
        lines,
        generated: m,
        skipped,
        times,
    })
}

/// [`run_with_hook`] without a pre-augmentation step.
pub fn run(pairs: &[PairRecord], opts: &RunOptions, out_dir: &Path) -> Result<RunReport> {
    run_with_hook(pairs, opts, &NoPreAugment, out_dir)
}

/// Loads, augments and writes every planned batch of `pairs` to
/// `out_dir/images/` and `out_dir/shard.jsonl`.
///
/// Up to `opts.workers` batches are processed concurrently and their sidecar
/// lines appended in batch order, so the output bytes do not depend on the
/// worker count.
pub fn run_with_hook(
    pairs: &[PairRecord],
    opts: &RunOptions,
    hook: &dyn PreAugment,
    out_dir: &Path,
) -> Result<RunReport> {
    let started = Instant::now();
    validate_config(opts.config.clone())?;
    resolve_m(opts.config.m_policy, opts.batch_size)?;
    let plans = plan_batches(pairs.len(), opts.batch_size, opts.config.seed, opts.drop_last)?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let shard_path: PathBuf = out_dir.join(SHARD_FILE);
    let file = File::create(&shard_path).map_err(|e| Error::io(format!("creating {}", shard_path.display()), e))?;
    let mut sink = BufWriter::new(file);

    let workers = opts.workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {workers} workers: {e}")))?;

    let mut report = RunReport {
        batches_processed: 0,
        pairs_emitted: 0,
        pairs_generated_by_mixgen: 0,
        records_skipped: 0,
        wall_time: 0.0,
        per_stage_timing: BTreeMap::new(),
    };
    let mut totals = StageTimes::default();
    for window in plans.chunks(workers) {
        let results: Vec<Result<BatchResult>> = pool.install(|| {
            window
                .par_iter()
                .map(|plan| process_batch(plan, pairs, opts, hook, out_dir))
                .collect()
        });
        for result in results {
            let batch = result?;
            let t = Instant::now();
            for line in &batch.lines {
                writeln!(sink, "{line}").map_err(|e| Error::io(format!("writing {}", shard_path.display()), e))?;
            }
            totals.write += t.elapsed() + batch.times.write;
            totals.load += batch.times.load;
            totals.mix += batch.times.mix;
            report.records_skipped += batch.skipped;
            if !batch.lines.is_empty() {
                report.batches_processed += 1;
                report.pairs_emitted += batch.lines.len();
                report.pairs_generated_by_mixgen += batch.generated;
            }
        }
    }
    sink.flush().map_err(|e| Error::io(format!("writing {}", shard_path.display()), e))?;

    report.per_stage_timing = BTreeMap::from([
        ("decode_resize".to_string(), totals.load.as_secs_f64()),
        ("mixgen".to_string(), totals.mix.as_secs_f64()),
        ("write".to_string(), totals.write.as_secs_f64()),
    ]);
    report.wall_time = started.elapsed().as_secs_f64();
    log::info!(
        "{} batches, {} pairs written, {} generated, {} skipped",
        report.batches_processed,
        report.pairs_emitted,
        report.pairs_generated_by_mixgen,
        report.records_skipped
    );
    Ok(report)
}

/// Throughput of the in-memory stages, without shard output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub pairs: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub batches: usize,
    pub pairs_processed: usize,
    pub pairs_generated: usize,
    /// Processed pairs per second over decode, resize and mixing.
    pub pairs_per_sec: f64,
    /// Seconds per stage, summed over iterations.
    pub per_stage_timing: BTreeMap<String, f64>,
    /// Mixing time over the time to copy the same batches through unchanged.
    pub mixgen_over_copy: f64,
}

/// Times decode and resize, a pass-through clone of each batch, and batch
/// mixing, over `iterations` passes of the planned batches.
pub fn bench(pairs: &[PairRecord], config: &MixGenConfig, batch_size: usize, iterations: usize) -> Result<BenchReport> {
    validate_config(config.clone())?;
    let m = resolve_m(config.m_policy, batch_size)?;
    let plans = plan_batches(pairs.len(), batch_size, config.seed, true)?;
    let (mut load, mut copy, mut mix) = (Duration::ZERO, Duration::ZERO, Duration::ZERO);
    let mut processed = 0;
    let mut generated = 0;
    for _ in 0..iterations {
        for plan in &plans {
            let t = Instant::now();
            let loaded = plan
                .member_indices
                .iter()
                .map(|&i| {
                    let r = &pairs[i];
                    load_image(&r.image, config.target_height, config.target_width)
                        .map(|img| ImageTextPair::new(r.id.clone(), img, r.text.clone()))
                        .map_err(|e| Error::Record {
                            batch_index: plan.batch_index,
                            id: r.id.clone(),
                            source: Box::new(e),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = Batch::new(loaded)?;
            load += t.elapsed();

            let t = Instant::now();
            let copied = std::hint::black_box(batch.clone());
            copy += t.elapsed();
            drop(copied);

            let mut rng = stream(derive_stream_seed(config.seed, plan.batch_index));
            let t = Instant::now();
            let mixed = std::hint::black_box(apply_mixgen(batch, config, &mut rng)?);
            mix += t.elapsed();
            processed += mixed.size();
            generated += m;
        }
    }
    let busy = (load + mix).as_secs_f64();
    Ok(BenchReport {
        pairs: pairs.len(),
        batch_size,
        iterations,
        batches: plans.len() * iterations,
        pairs_processed: processed,
        pairs_generated: generated,
        pairs_per_sec: if busy > 0.0 { processed as f64 / busy } else { 0.0 },
        per_stage_timing: BTreeMap::from([
            ("copy_baseline".to_string(), copy.as_secs_f64()),
            ("decode_resize".to_string(), load.as_secs_f64()),
            ("mixgen".to_string(), mix.as_secs_f64()),
        ]),
        mixgen_over_copy: if copy.is_zero() { 0.0 } else { mix.as_secs_f64() / copy.as_secs_f64() },
    })
}
