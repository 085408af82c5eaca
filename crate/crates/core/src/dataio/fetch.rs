//! Download remote images listed in a manifest, tolerating dead links.
//!
//! Failures never abort the run: they are counted, their ids reported, and
//! the surviving records are written to `dest/manifest.jsonl` with image
//! paths pointing at the downloaded files.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;

use crate::dataio::manifest::{write_manifest, ManifestRecord};
use crate::error::{Error, Result};

pub const FILTERED_MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub parallelism: usize,
    pub retries: u32,
    pub timeout: Duration,
    /// Delay before retry `n` is `n * backoff`.
    pub backoff: Duration,
    pub max_bytes: u64,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            parallelism: 16,
            retries: 2,
            timeout: Duration::from_secs(30),
            backoff: Duration::from_millis(250),
            max_bytes: 64 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FetchReport {
    pub succeeded: usize,
    pub failed: usize,
    pub failed_ids: Vec<String>,
    pub accessible_fraction: f64,
}

impl FetchReport {
    pub fn summary(&self) -> String {
        format!(
            "fetched {} of {} images ({:.1}% accessible)",
            self.succeeded,
            self.succeeded + self.failed,
            self.accessible_fraction * 100.0
        )
    }
}

#[derive(Debug, Clone)]
pub struct FetchOutcome {
    pub report: FetchReport,
    pub records: Vec<ManifestRecord>,
    pub manifest_path: PathBuf,
}

enum Attempt {
    Done(Vec<u8>),
    Retry(String),
    Fatal(String),
}

fn try_once(agent: &ureq::Agent, url: &str, max_bytes: u64) -> Attempt {
    match agent.get(url).call() {
        Ok(mut resp) => {
            let status = resp.status().as_u16();
            if (200..300).contains(&status) {
                match resp.body_mut().with_config().limit(max_bytes).read_to_vec() {
                    Ok(body) => Attempt::Done(body),
                    Err(e) => Attempt::Retry(e.to_string()),
                }
            } else if status >= 500 || status == 408 || status == 429 {
                Attempt::Retry(format!("http status {status}"))
            } else {
                Attempt::Fatal(format!("http status {status}"))
            }
        }
        Err(e) => Attempt::Retry(e.to_string()),
    }
}

fn download(agent: &ureq::Agent, url: &str, opts: &FetchOptions) -> std::result::Result<Vec<u8>, String> {
    let mut last = String::new();
    for attempt in 0..=opts.retries {
        if attempt > 0 {
            std::thread::sleep(opts.backoff * attempt);
        }
        match try_once(agent, url, opts.max_bytes) {
            Attempt::Done(body) => return Ok(body),
            Attempt::Fatal(reason) => return Err(reason),
            Attempt::Retry(reason) => last = reason,
        }
    }
    Err(last)
}

fn file_name(index: usize, record: &ManifestRecord) -> String {
    let stem: String = record
        .id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .take(64)
        .collect();
    let path = record.image.split(['?', '#']).next().unwrap_or_default();
    let ext = path
        .rsplit_once('.')
        .map(|(_, e)| e.to_ascii_lowercase())
        .filter(|e| matches!(e.as_str(), "jpg" | "jpeg" | "png"))
        .unwrap_or_else(|| "img".to_string());
    format!("{index:08}_{stem}.{ext}")
}

fn ensure_writable(dest: &Path) -> Result<()> {
    let unwritable = |source| Error::DestinationUnwritable {
        path: dest.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dest).map_err(unwritable)?;
    let probe = dest.join(".write-probe");
    std::fs::write(&probe, b"").map_err(unwritable)?;
    std::fs::remove_file(&probe).map_err(unwritable)
}

/// Fetches every remote image into `dest`, with up to `opts.parallelism`
/// downloads in flight and at most `1 + opts.retries` attempts per URL.
/// Local paths are checked for existence and never touch the network.
pub fn fetch_remote(records: &[ManifestRecord], dest: &Path, opts: &FetchOptions) -> Result<FetchOutcome> {
    ensure_writable(dest)?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(opts.timeout))
        .http_status_as_error(false)
        .build()
        .new_agent();

    let results: Mutex<Vec<Option<std::result::Result<String, String>>>> =
        Mutex::new(vec![None; records.len()]);
    let next = AtomicUsize::new(0);
    let workers = opts.parallelism.max(1).min(records.len().max(1));

    let process = |index: usize| -> std::result::Result<String, String> {
        let record = &records[index];
        if !record.is_remote() {
            let path = Path::new(&record.image);
            return if path.is_file() {
                Ok(std::path::absolute(path)
                    .unwrap_or_else(|_| path.to_path_buf())
                    .to_string_lossy()
                    .into_owned())
            } else {
                Err("local file not found".to_string())
            };
        }
        let body = download(&agent, &record.image, opts)?;
        let name = file_name(index, record);
        std::fs::write(dest.join(&name), body).map_err(|e| format!("writing {name}: {e}"))?;
        Ok(name)
    };

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= records.len() {
                    break;
                }
                let outcome = process(index);
                if let Err(reason) = &outcome {
                    log::warn!("skipping {} ({}): {reason}", records[index].id, records[index].image);
                }
                results.lock().expect("no worker panics while holding the lock")[index] = Some(outcome);
            });
        }
    });

    let mut kept = Vec::new();
    let mut failed_ids = Vec::new();
    for (record, outcome) in records.iter().zip(results.into_inner().expect("workers joined")) {
        match outcome.expect("every index processed") {
            Ok(image) => kept.push(ManifestRecord {
                image,
                ..record.clone()
            }),
            Err(_) => failed_ids.push(record.id.clone()),
        }
    }

    let manifest_path = dest.join(FILTERED_MANIFEST);
    let file = std::fs::File::create(&manifest_path)
        .map_err(|e| Error::io(format!("creating {}", manifest_path.display()), e))?;
    write_manifest(std::io::BufWriter::new(file), &kept)?;

    let total = records.len();
    let report = FetchReport {
        succeeded: kept.len(),
        failed: failed_ids.len(),
        failed_ids,
        accessible_fraction: if total == 0 { 1.0 } else { kept.len() as f64 / total as f64 },
    };
    log::info!("{}", report.summary());
    Ok(FetchOutcome {
        report,
        records: kept,
        manifest_path,
    })
}
