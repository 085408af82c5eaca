//! Command-line front end: argument parsing and one function per subcommand.
//!
//! Every subcommand prints a JSON document to stdout. Exit codes are 0 on
//! success, 1 for usage errors and 2 for runtime errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

use mixgen_core::dataio::{
    compute_stats, expand_pairs, fetch_remote, load_manifest, read_tensor, read_tensor_file, write_tensor,
    FetchOptions, FetchReport,
};
use mixgen_core::embedding::{concat_text_embeddings, mix_image_embeddings};
use mixgen_core::metrics::{evaluate_retrieval, GroundTruth, RetrievalReport, ScoreMatrix};
use mixgen_core::pipeline::{bench, default_workers, run, BenchReport, RunOptions, RunReport};
use mixgen_core::{Error, LambdaPolicy, MPolicy, MixGenConfig, Result, Variant};

mod preview;

pub use preview::{cmd_preview, PreviewReport};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mixgen", version, about = "Joint image-text mixing augmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Augment a manifest batch by batch and write a shard.
    Augment(AugmentArgs),
    /// Write side-by-side composites of source and generated images.
    Preview(PreviewArgs),
    /// Mix image features and concatenate text features from tensor files.
    MixEmbeddings(MixEmbeddingsArgs),
    /// Compute R@1/5/10 in both directions and RSUM from a score matrix.
    Metrics(MetricsArgs),
    /// Count images and captions per manifest.
    Stats(StatsArgs),
    /// Download remote images and write a manifest of the reachable ones.
    Fetch(FetchArgs),
    /// Time decode, resize and mixing against a pass-through copy.
    Bench(BenchArgs),
}

/// Flags shared by every command that generates pairs.
#[derive(Debug, Clone, Args)]
pub struct MixArgs {
    /// Fixed mixing coefficient in [0, 1] [default: 0.5; Beta(0.1,0.1) for variants a, d, e]
    #[arg(long, conflicts_with = "beta")]
    pub lambda: Option<f32>,
    /// Draw the coefficient per pair from Beta(A, B), given as A,B
    #[arg(long, value_name = "A,B", value_parser = parse_beta)]
    pub beta: Option<(f64, f64)>,
    /// Generation rule: default, a, b, c, d or e
    #[arg(long, default_value = "default", value_parser = parse_variant)]
    pub variant: Variant,
    /// Global seed for shuffling and every per-batch stream
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Decode target size as HxW
    #[arg(long, value_name = "HxW", default_value = "256x256", value_parser = parse_resize)]
    pub resize: (usize, usize),
    /// Truncate generated captions to this many tokens
    #[arg(long, value_name = "N")]
    pub max_tokens: Option<usize>,
}

impl MixArgs {
    pub fn lambda_policy(&self) -> LambdaPolicy {
        match (self.lambda, self.beta) {
            (Some(l), _) => LambdaPolicy::Fixed(l),
            (None, Some((alpha, beta))) => LambdaPolicy::Beta { alpha, beta },
            (None, None) => self.variant.table_lambda_policy(),
        }
    }

    pub fn config(&self, m_policy: MPolicy) -> Result<MixGenConfig> {
        MixGenConfig {
            lambda_policy: self.lambda_policy(),
            m_policy,
            variant: self.variant,
            seed: self.seed,
            target_height: self.resize.0,
            target_width: self.resize.1,
            max_tokens: self.max_tokens,
        }
        .validate()
    }
}

#[derive(Debug, Clone, Args)]
pub struct AugmentArgs {
    /// Input manifest (JSONL)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for shard.jsonl and images/
    #[arg(long)]
    pub out: PathBuf,
    /// Pairs per batch
    #[arg(long, default_value_t = 512)]
    pub batch_size: usize,
    /// Fraction of each batch replaced, at most 0.5 [default: 0.25]
    #[arg(long, value_name = "F", conflicts_with = "m")]
    pub m_ratio: Option<f64>,
    /// Absolute number of entries replaced per batch
    #[arg(long, value_name = "N")]
    pub m: Option<usize>,
    #[command(flatten)]
    pub mix: MixArgs,
    /// Batches processed concurrently, a count or "auto"
    #[arg(long, default_value = "auto", value_parser = parse_workers)]
    pub workers: Workers,
    /// Drop a trailing partial batch
    #[arg(long, value_name = "BOOL", default_value_t = true, action = ArgAction::Set)]
    pub drop_last: bool,
    /// Skip undecodable records instead of failing
    #[arg(long, value_name = "BOOL", default_value_t = false, action = ArgAction::Set,
          num_args = 0..=1, default_missing_value = "true")]
    pub skip_errors: bool,
}

impl AugmentArgs {
    pub fn m_policy(&self) -> MPolicy {
        match (self.m, self.m_ratio) {
            (Some(m), _) => MPolicy::Absolute(m),
            (None, Some(f)) => MPolicy::Fraction(f),
            (None, None) => MPolicy::DEFAULT,
        }
    }

    pub fn run_options(&self) -> Result<RunOptions> {
        Ok(RunOptions {
            config: self.mix.config(self.m_policy())?,
            batch_size: self.batch_size,
            workers: self.workers.count(),
            drop_last: self.drop_last,
            skip_errors: self.skip_errors,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workers {
    Auto,
    Count(usize),
}

impl Workers {
    pub fn count(self) -> usize {
        match self {
            Workers::Auto => default_workers(),
            Workers::Count(n) => n,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PreviewArgs {
    /// Input manifest (JSONL)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for composites and preview.jsonl
    #[arg(long)]
    pub out: PathBuf,
    /// Number of composites
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[command(flatten)]
    pub mix: MixArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MixEmbeddingsArgs {
    /// Image features of the first pairs (rows x dim)
    #[arg(long)]
    pub image_a: PathBuf,
    /// Image features of the second pairs, same shape as --image-a
    #[arg(long)]
    pub image_b: PathBuf,
    /// Text token features of the first caption (tokens x dim)
    #[arg(long)]
    pub text_a: PathBuf,
    /// Text token features of the second caption, same dim as --text-a
    #[arg(long)]
    pub text_b: PathBuf,
    /// Mixing coefficient in [0, 1]
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f32,
    /// Output prefix; writes PREFIX.image.mxtn and PREFIX.text.mxtn
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    /// Score tensor file, images x texts
    #[arg(long)]
    pub scores: PathBuf,
    /// JSON object {"image_to_texts": [[text indices], ...]}
    #[arg(long)]
    pub ground_truth: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Manifest to count; repeat for several sources
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FetchArgs {
    /// Manifest with remote image URLs
    #[arg(long)]
    pub manifest: PathBuf,
    /// Download directory; receives manifest.jsonl of fetched records
    #[arg(long)]
    pub dest: PathBuf,
    /// Concurrent downloads
    #[arg(long, default_value_t = 16)]
    pub parallelism: usize,
    /// Retries after a failed attempt
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Input manifest (JSONL)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Pairs per batch
    #[arg(long, default_value_t = 512)]
    pub batch_size: usize,
    /// Passes over the planned batches
    #[arg(long, default_value_t = 1)]
    pub iterations: usize,
    /// Global seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Decode target size as HxW
    #[arg(long, value_name = "HxW", default_value = "256x256", value_parser = parse_resize)]
    pub resize: (usize, usize),
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse()
}

fn parse_beta(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected A,B, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn parse_resize(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let parse = |v: &str| match v.trim().parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("{v:?} is not a positive integer")),
        Ok(n) => Ok(n),
    };
    Ok((parse(h)?, parse(w)?))
}

fn parse_workers(s: &str) -> std::result::Result<Workers, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Workers::Auto);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive count or \"auto\", got {s:?}")),
        Ok(n) => Ok(Workers::Count(n)),
    }
}

fn load_pairs(manifest: &Path) -> Result<Vec<mixgen_core::dataio::PairRecord>> {
    Ok(expand_pairs(&load_manifest(manifest)?))
}

pub fn cmd_augment(args: &AugmentArgs) -> Result<RunReport> {
    let opts = args.run_options()?;
    let pairs = load_pairs(&args.manifest)?;
    run(&pairs, &opts, &args.out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorOutput {
    pub path: PathBuf,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixEmbeddingsReport {
    pub image: TensorOutput,
    pub text: TensorOutput,
}

pub fn cmd_mix_embeddings(args: &MixEmbeddingsArgs) -> Result<MixEmbeddingsReport> {
    let image = mix_image_embeddings(&read_tensor(&args.image_a)?, &read_tensor(&args.image_b)?, args.lambda)?;
    let text = concat_text_embeddings(&read_tensor(&args.text_a)?, &read_tensor(&args.text_b)?)?;
    let with_suffix = |suffix: &str| {
        let mut s: OsString = args.out_prefix.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    let (image_path, text_path) = (with_suffix(".image.mxtn"), with_suffix(".text.mxtn"));
    write_tensor(&image, &image_path)?;
    write_tensor(&text, &text_path)?;
    Ok(MixEmbeddingsReport {
        image: TensorOutput {
            path: image_path,
            shape: [image.rows(), image.cols()],
        },
        text: TensorOutput {
            path: text_path,
            shape: [text.rows(), text.cols()],
        },
    })
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<RetrievalReport> {
    let (dims, data) = read_tensor_file(&args.scores)?;
    if dims.len() != 2 {
        return Err(Error::RankMismatch {
            expected: 2,
            actual: dims.len(),
        });
    }
    let scores = ScoreMatrix::new(dims[0], dims[1], data)?;
    let text = std::fs::read_to_string(&args.ground_truth)
        .map_err(|e| Error::Io {
            context: format!("reading {}", args.ground_truth.display()),
            source: e,
        })?;
    evaluate_retrieval(&scores, &GroundTruth::from_json(&text)?)
}

pub fn cmd_stats(args: &StatsArgs) -> Result<mixgen_core::dataio::DatasetStats> {
    let loaded = args
        .manifest
        .iter()
        .map(|path| {
            let name = path
                .file_stem()
                .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok((name, load_manifest(path)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(compute_stats(loaded.iter().map(|(n, r)| (n.as_str(), r.as_slice()))))
}

pub fn cmd_fetch(args: &FetchArgs) -> Result<FetchReport> {
    let records = load_manifest(&args.manifest)?;
    let opts = FetchOptions {
        parallelism: args.parallelism,
        retries: args.retries,
        ..FetchOptions::default()
    };
    Ok(fetch_remote(&records, &args.dest, &opts)?.report)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchReport> {
    let config = MixGenConfig {
        seed: args.seed,
        target_height: args.resize.0,
        target_width: args.resize.1,
        ..MixGenConfig::default()
    };
    bench(&load_pairs(&args.manifest)?, &config, args.batch_size, args.iterations)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

/// Runs a parsed command and returns its JSON output.
pub fn execute(cli: &Cli) -> Result<String> {
    Ok(match &cli.command {
        Command::Augment(a) => to_json(&cmd_augment(a)?),
        Command::Preview(a) => to_json(&cmd_preview(a)?),
        Command::MixEmbeddings(a) => to_json(&cmd_mix_embeddings(a)?),
        Command::Metrics(a) => to_json(&cmd_metrics(a)?),
        Command::Stats(a) => to_json(&cmd_stats(a)?),
        Command::Fetch(a) => to_json(&cmd_fetch(a)?),
        Command::Bench(a) => to_json(&cmd_bench(a)?),
    })
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

fn describe(err: &Error) -> String {
    let mut msg = err.to_string();
    let mut source = std::error::Error::source(err);
    while let Some(s) = source {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        source = s.source();
    }
    msg
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{rendered}")
            } else {
                write!(stderr, "{rendered}")
            };
            return code;
        }
    };
    match execute(&cli) {
        Ok(json) => {
            let _ = writeln!(stdout, "{json}");
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", describe(&e));
            exit_code(&e)
        }
    }
}
