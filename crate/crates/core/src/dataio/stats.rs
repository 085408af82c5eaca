use serde::Serialize;

use crate::dataio::manifest::ManifestRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceStats {
    pub source: String,
    pub num_images: usize,
    pub num_texts: usize,
}

/// Image and caption counts, per source and summed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub num_images: usize,
    pub num_texts: usize,
    pub per_source: Vec<SourceStats>,
}

/// Counts images (records) and texts (captions) for each tagged source.
pub fn compute_stats<'a, I>(sources: I) -> DatasetStats
where
    I: IntoIterator<Item = (&'a str, &'a [ManifestRecord])>,
{
    let per_source: Vec<SourceStats> = sources
        .into_iter()
        .map(|(name, records)| SourceStats {
            source: name.to_string(),
            num_images: records.len(),
            num_texts: records.iter().map(|r| r.captions.len()).sum(),
        })
        .collect();
    DatasetStats {
        num_images: per_source.iter().map(|s| s.num_images).sum(),
        num_texts: per_source.iter().map(|s| s.num_texts).sum(),
        per_source,
    }
}
