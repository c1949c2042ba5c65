//! Sample list and the seeded train/test split.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::volume::VolumeRecord;
use crate::error::{Error, Result};

pub const TRAIN_FRACTION: f64 = 0.8;
pub const MIN_SPLIT_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Reference to one prepared slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub source_id: String,
    /// Position of the volume among the volumes of its source.
    pub volume_index: usize,
    pub slice_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    /// Slice-store file, relative to the manifest.
    pub file: String,
}

impl SampleRef {
    /// Stable identifier, also the slice-store file stem.
    pub fn id(&self) -> String {
        format!("{}_v{:03}_s{:04}", self.source_id, self.volume_index, self.slice_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Seed of the split; `None` until split.
    pub seed: Option<u64>,
    pub train_fraction: f64,
    pub samples: Vec<SampleRef>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split_of(&self, split: Split) -> Vec<&SampleRef> {
        self.samples.iter().filter(|s| s.split == Some(split)).collect()
    }

    /// Number of samples per source, in first-seen order.
    pub fn counts_by_source(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for s in &self.samples {
            match out.iter_mut().find(|(id, _)| *id == s.source_id) {
                Some((_, n)) => *n += 1,
                None => out.push((s.source_id.clone(), 1)),
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// One sample per annotated slice of every record, in record order.
pub fn build_dataset(records: &[VolumeRecord]) -> Result<DatasetManifest> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no volumes to build a dataset from".into()));
    }
    let mut samples = Vec::new();
    let mut per_source: Vec<(&str, usize)> = Vec::new();
    for r in records {
        let volume_index = match per_source.iter_mut().find(|(id, _)| *id == r.source_id) {
            Some((_, n)) => {
                *n += 1;
                *n - 1
            }
            None => {
                per_source.push((&r.source_id, 1));
                0
            }
        };
        for &slice_index in &r.annotated_slices {
            let mut s = SampleRef {
                source_id: r.source_id.clone(),
                volume_index,
                slice_index,
                split: None,
                file: String::new(),
            };
            s.file = format!("slices/{}.npy", s.id());
            samples.push(s);
        }
    }
    Ok(DatasetManifest { seed: None, train_fraction: TRAIN_FRACTION, samples })
}

/// Number of training samples out of `n`: `floor(0.8 n)`.
pub fn train_count(n: usize) -> usize {
    n * 4 / 5
}

/// Tags a seeded random `floor(0.8 N)` of the samples as train, the rest as
/// test. Sample order is unchanged.
pub fn split_dataset(manifest: &DatasetManifest, seed: u64) -> Result<DatasetManifest> {
    let n = manifest.len();
    if n < MIN_SPLIT_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_SPLIT_SAMPLES} samples to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = manifest.clone();
    for (rank, &i) in order.iter().enumerate() {
        out.samples[i].split = Some(if rank < train_count(n) { Split::Train } else { Split::Test });
    }
    out.seed = Some(seed);
    out.train_fraction = TRAIN_FRACTION;
    Ok(out)
}
