//! Pre-training corpus compositions built from per-source manifests.
//!
//! | setting | sources                                   |
//! |---------|-------------------------------------------|
//! | 200k    | coco, vg                                  |
//! | 1m      | coco, vg, sbu                             |
//! | 2m      | coco, vg, sbu, seeded subset of cc3m      |
//! | 3m      | coco, vg, sbu, cc3m                       |

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::dataio::manifest::ManifestRecord;
use crate::error::{Error, Result};
use crate::random::{stream, uniform_below};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PretrainSetting {
    K200,
    M1,
    M2,
    M3,
}

impl PretrainSetting {
    pub fn full_sources(self) -> &'static [&'static str] {
        match self {
            PretrainSetting::K200 => &["coco", "vg"],
            PretrainSetting::M1 | PretrainSetting::M2 => &["coco", "vg", "sbu"],
            PretrainSetting::M3 => &["coco", "vg", "sbu", "cc3m"],
        }
    }
}

impl fmt::Display for PretrainSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PretrainSetting::K200 => "200k",
            PretrainSetting::M1 => "1m",
            PretrainSetting::M2 => "2m",
            PretrainSetting::M3 => "3m",
        })
    }
}

impl FromStr for PretrainSetting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "200k" => Ok(PretrainSetting::K200),
            "1m" => Ok(PretrainSetting::M1),
            "2m" => Ok(PretrainSetting::M2),
            "3m" => Ok(PretrainSetting::M3),
            other => Err(format!("unknown setting {other:?}")),
        }
    }
}

/// Uniform `k`-subset of `records` chosen by `seed`, in original order.
pub fn seeded_subset(records: &[ManifestRecord], k: usize, seed: u64) -> Vec<ManifestRecord> {
    let n = records.len();
    let k = k.min(n);
    let mut rng = stream(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + uniform_below(&mut rng, (n - i) as u64) as usize;
        idx.swap(i, j);
    }
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| records[i].clone()).collect()
}

/// Concatenates the setting's sources in table order. For `2m`,
/// `cc_subset` records of `cc3m` are added. Ids must stay unique across
/// sources.
pub fn compose(
    setting: PretrainSetting,
    sources: &BTreeMap<String, Vec<ManifestRecord>>,
    cc_subset: usize,
    seed: u64,
) -> Result<Vec<ManifestRecord>> {
    let fetch = |name: &str| {
        sources
            .get(name)
            .ok_or_else(|| Error::InvalidConfig(format!("setting {setting} needs source {name:?}")))
    };
    let mut out = Vec::new();
    for name in setting.full_sources() {
        out.extend(fetch(name)?.iter().cloned());
    }
    if setting == PretrainSetting::M2 {
        out.extend(seeded_subset(fetch("cc3m")?, cc_subset, seed));
    }
    let mut seen = HashSet::new();
    for (line, r) in out.iter().enumerate() {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateId {
                id: r.id.clone(),
                line: line + 1,
            });
        }
    }
    Ok(out)
}
