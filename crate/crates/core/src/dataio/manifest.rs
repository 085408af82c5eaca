//! JSONL manifests: one image and its captions per line.
//!
//! ```text
//! {"id":"coco_1","image":"img/1.jpg","captions":["a dog","a brown dog"]}
//! ```

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::TextSequence;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    /// Filesystem path or http(s) URL.
    pub image: String,
    pub captions: Vec<String>,
}

impl ManifestRecord {
    pub fn is_remote(&self) -> bool {
        is_url(&self.image)
    }

    fn validate(&self, line: usize) -> Result<()> {
        let bad = |reason: &str| Error::MalformedLine {
            line,
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(bad("empty id"));
        }
        if self.image.is_empty() {
            return Err(bad("empty image reference"));
        }
        if self.captions.is_empty() {
            return Err(bad("captions must be a non-empty list"));
        }
        if self.captions.iter().any(|c| c.trim().is_empty()) {
            return Err(bad("captions must not be blank"));
        }
        Ok(())
    }
}

pub fn is_url(s: &str) -> bool {
    let lower = s.get(..8).unwrap_or(s).to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://")
}

/// Parses and validates a manifest stream. Blank lines are ignored; line
/// numbers in errors are 1-based.
pub fn parse_manifest<R: BufRead>(reader: R) -> Result<Vec<ManifestRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        record.validate(line_no)?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                id: record.id,
                line: line_no,
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn parse_manifest_str(text: &str) -> Result<Vec<ManifestRecord>> {
    parse_manifest(text.as_bytes())
}

/// Reads a manifest file. Relative local image paths are resolved against
/// the manifest's directory; URLs are left alone.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening manifest {}", path.display()), e))?;
    let mut records = parse_manifest(BufReader::new(file))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for r in &mut records {
        if !r.is_remote() && Path::new(&r.image).is_relative() {
            r.image = base.join(&r.image).to_string_lossy().into_owned();
        }
    }
    Ok(records)
}

pub fn write_manifest<W: Write>(mut out: W, records: &[ManifestRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Json {
            context: format!("serializing record {}", r.id),
            source: e,
        })?;
        writeln!(out, "{line}").map_err(|e| Error::io("writing manifest", e))?;
    }
    Ok(())
}

pub fn serialize_manifest(records: &[ManifestRecord]) -> String {
    let mut buf = Vec::new();
    write_manifest(&mut buf, records).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// One (image, caption) pair whose image has not been decoded yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRecord {
    pub id: String,
    pub image: PathBuf,
    pub text: TextSequence,
}

/// One pair per caption, with id `record_id#caption_index`.
pub fn expand_pairs(records: &[ManifestRecord]) -> Vec<PairRecord> {
    records
        .iter()
        .flat_map(|r| {
            r.captions.iter().enumerate().map(move |(i, c)| PairRecord {
                id: format!("{}#{i}", r.id),
                image: PathBuf::from(&r.image),
                text: TextSequence::new(c),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schema_example() {
        let text = r#"{"id":"coco_1","image":"img/1.jpg","captions":["a dog","a brown dog"]}"#;
        let records = parse_manifest_str(text).unwrap();
        assert_eq!(records.len(), 1);
        let pairs = expand_pairs(&records);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].id, "coco_1#0");
        assert_eq!(pairs[1].text.as_str(), "a brown dog");
    }

    #[test]
    fn empty_captions_rejected() {
        let text = "\n{\"id\":\"a\",\"image\":\"x.png\",\"captions\":[]}";
        assert!(matches!(
            parse_manifest_str(text),
            Err(Error::MalformedLine { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_or_missing_fields_rejected() {
        let extra = r#"{"id":"a","image":"x.png","captions":["c"],"extra":1}"#;
        assert!(matches!(parse_manifest_str(extra), Err(Error::MalformedLine { line: 1, .. })));
        let missing = r#"{"id":"a","captions":["c"]}"#;
        assert!(matches!(parse_manifest_str(missing), Err(Error::MalformedLine { .. })));
        assert!(matches!(parse_manifest_str("not json"), Err(Error::MalformedLine { .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "{\"id\":\"a\",\"image\":\"x.png\",\"captions\":[\"c\"]}\n\
                    {\"id\":\"a\",\"image\":\"y.png\",\"captions\":[\"d\"]}\n";
        assert!(matches!(
            parse_manifest_str(text),
            Err(Error::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn expansion_base_case_and_enumeration() {
        let one = vec![ManifestRecord {
            id: "r".into(),
            image: "i.png".into(),
            captions: vec!["c".into()],
        }];
        let pairs = expand_pairs(&one);
        assert_eq!(pairs.len(), 1);
        assert!(pairs[0].id.ends_with("#0"));

        let two: Vec<ManifestRecord> = (0..2)
            .map(|i| ManifestRecord {
                id: format!("img{i}"),
                image: format!("{i}.png"),
                captions: (0..5).map(|c| format!("caption {c}")).collect(),
            })
            .collect();
        let pairs = expand_pairs(&two);
        assert_eq!(pairs.len(), 10);
        let mut expected = Vec::new();
        for i in 0..2 {
            for c in 0..5 {
                expected.push(format!("img{i}#{c}"));
            }
        }
        let ids: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
        assert_eq!(ids, expected);
        let unique: HashSet<_> = ids.iter().collect();
        assert_eq!(unique.len(), 10);
    }

    #[test]
    fn urls_are_detected() {
        assert!(is_url("https://example.com/a.jpg"));
        assert!(is_url("HTTP://example.com/a.jpg"));
        assert!(!is_url("/data/a.jpg"));
        assert!(!is_url("img/http.jpg"));
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"image\":\"img/a.png\",\"captions\":[\"c\"]}\n\
             {\"id\":\"b\",\"image\":\"https://h/b.png\",\"captions\":[\"d\"]}\n",
        )
        .unwrap();
        let records = load_manifest(&path).unwrap();
        assert_eq!(Path::new(&records[0].image), dir.path().join("img/a.png"));
        assert_eq!(records[1].image, "https://h/b.png");
    }

    fn record_strategy() -> impl Strategy<Value = ManifestRecord> {
        (
            "[a-zA-Z0-9_/-]{1,12}",
            "[a-z0-9./:]{1,20}",
            prop::collection::vec("\\PC{0,5}[a-z]\\PC{0,10}", 1..5),
        )
            .prop_map(|(id, image, captions)| ManifestRecord { id, image, captions })
    }

    proptest! {
        #[test]
        fn parse_serialize_parse_is_identity(
            records in prop::collection::vec(record_strategy(), 0..8)
        ) {
            let mut seen = HashSet::new();
            let records: Vec<_> = records.into_iter().filter(|r| seen.insert(r.id.clone())).collect();
            let text = serialize_manifest(&records);
            let parsed = parse_manifest_str(&text).unwrap();
            prop_assert_eq!(&parsed, &records);
            prop_assert_eq!(serialize_manifest(&parsed), text);
            let total: usize = records.iter().map(|r| r.captions.len()).sum();
            prop_assert_eq!(expand_pairs(&records).len(), total);
        }
    }
}
