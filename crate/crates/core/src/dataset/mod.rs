//! Labeled fingerprint datasets: device filtering, stratified splitting and
//! IDX persistence.

pub mod idx;
mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fingerprint::PayloadFingerprint;

pub use idx::{read_idx, write_idx, IdxHeader, IMAGE_MAGIC, LABEL_MAGIC};
pub use split::{split, SplitPolicy};

/// Sessions a device needs, strictly exceeded, to be kept.
pub const DEFAULT_MIN_SESSIONS: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("IDX format error: {0}")]
    Format(String),
    #[error("IDX consistency error: {0}")]
    Consistency(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest {}: {source}", path.display())]
    Manifest { path: PathBuf, source: serde_json::Error },
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
    Unsplit,
}

/// Fingerprints with class indices into `label_names`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    fingerprints: Vec<PayloadFingerprint>,
    labels: Vec<usize>,
    label_names: Vec<String>,
    split: SplitTag,
}

impl LabeledDataset {
    pub fn new(
        fingerprints: Vec<PayloadFingerprint>,
        labels: Vec<usize>,
        label_names: Vec<String>,
        split: SplitTag,
    ) -> Result<Self, DatasetError> {
        if fingerprints.len() != labels.len() {
            return Err(DatasetError::Invalid(format!(
                "{} fingerprints but {} labels",
                fingerprints.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(DatasetError::Invalid(format!(
                "label {bad} outside the {} class names",
                label_names.len()
            )));
        }
        let unique: BTreeSet<&String> = label_names.iter().collect();
        if unique.len() != label_names.len() {
            return Err(DatasetError::Invalid("duplicate class name".into()));
        }
        Ok(Self { fingerprints, labels, label_names, split })
    }

    /// Build from per-label fingerprint groups. Class indices follow
    /// `order` when given (it must name every group), else alphabetical.
    pub fn from_groups(
        groups: BTreeMap<String, Vec<PayloadFingerprint>>,
        order: Option<&[String]>,
    ) -> Result<Self, DatasetError> {
        let names: Vec<String> = match order {
            Some(order) => {
                let known: BTreeSet<&String> = order.iter().collect();
                if let Some(missing) = groups.keys().find(|k| !known.contains(k)) {
                    return Err(DatasetError::Invalid(format!("label order does not list {missing:?}")));
                }
                order.iter().filter(|n| groups.contains_key(*n)).cloned().collect()
            }
            None => groups.keys().cloned().collect(),
        };
        let mut groups = groups;
        let mut fps = Vec::new();
        let mut labels = Vec::new();
        for (i, name) in names.iter().enumerate() {
            let g = groups.remove(name).unwrap_or_default();
            labels.extend(std::iter::repeat_n(i, g.len()));
            fps.extend(g);
        }
        Self::new(fps, labels, names, SplitTag::Unsplit)
    }

    pub fn fingerprints(&self) -> &[PayloadFingerprint] {
        &self.fingerprints
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split
    }

    pub fn class_count(&self) -> usize {
        self.label_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PayloadFingerprint, usize)> {
        self.fingerprints.iter().zip(self.labels.iter().copied())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_names.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.label_names.iter().position(|n| n == name)
    }

    /// Replace the class-name table, e.g. after reading bare IDX files.
    pub fn with_label_names(self, names: Vec<String>) -> Result<Self, DatasetError> {
        Self::new(self.fingerprints, self.labels, names, self.split)
    }

    pub fn with_split_tag(mut self, tag: SplitTag) -> Self {
        self.split = tag;
        self
    }

    /// Rows at `indices` (in that order), same label space.
    pub fn subset(&self, indices: &[usize], tag: SplitTag) -> Self {
        Self {
            fingerprints: indices.iter().map(|&i| self.fingerprints[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_names: self.label_names.clone(),
            split: tag,
        }
    }

    /// Keep rows whose label passes `keep`, remapping labels through
    /// `new_names`; every kept label's name must be in `new_names`.
    pub fn relabel<F>(&self, new_names: Vec<String>, mut map: F) -> Result<Self, DatasetError>
    where
        F: FnMut(usize) -> Option<usize>,
    {
        let mut fps = Vec::new();
        let mut labels = Vec::new();
        for (fp, l) in self.iter() {
            if let Some(nl) = map(l) {
                fps.push(fp.clone());
                labels.push(nl);
            }
        }
        Self::new(fps, labels, new_names, self.split)
    }
}

/// Outcome of the minimum-session device filter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceFilter {
    pub retained: BTreeSet<String>,
    pub excluded: BTreeMap<String, usize>,
}

/// Keep labels with strictly more than `min_sessions` sessions.
pub fn filter_devices(counts: &BTreeMap<String, usize>, min_sessions: usize) -> DeviceFilter {
    let mut out = DeviceFilter::default();
    for (label, &n) in counts {
        if n > min_sessions {
            out.retained.insert(label.clone());
        } else {
            out.excluded.insert(label.clone(), n);
        }
    }
    out
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGES_FILE: &str = "images.idx3-ubyte";
pub const LABELS_FILE: &str = "labels.idx1-ubyte";
pub const MANIFEST_VERSION: u32 = 1;

/// Sidecar metadata for an IDX pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub label_names: Vec<String>,
    pub seed: Option<u64>,
    pub source_files: Vec<String>,
    pub images: String,
    pub labels: String,
    pub rows: usize,
    pub class_counts: BTreeMap<String, usize>,
    /// Labels dropped by the minimum-session filter, with their counts.
    #[serde(default)]
    pub excluded_devices: BTreeMap<String, usize>,
    /// Payloads dropped as empty or duplicate, per label.
    #[serde(default)]
    pub dropped_payloads: BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn describe(ds: &LabeledDataset) -> Self {
        let class_counts = ds
            .label_names()
            .iter()
            .cloned()
            .zip(ds.class_counts())
            .collect();
        Self {
            schema_version: MANIFEST_VERSION,
            label_names: ds.label_names().to_vec(),
            seed: None,
            source_files: Vec::new(),
            images: IMAGES_FILE.into(),
            labels: LABELS_FILE.into(),
            rows: ds.len(),
            class_counts,
            excluded_devices: BTreeMap::new(),
            dropped_payloads: BTreeMap::new(),
        }
    }
}

/// Write the IDX pair plus manifest into `dir`.
pub fn save_dataset(dir: &Path, ds: &LabeledDataset, manifest: &DatasetManifest) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
    write_idx(ds, &dir.join(&manifest.images), &dir.join(&manifest.labels))?;
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).map_err(|e| DatasetError::Manifest { path: path.clone(), source: e })?;
    fs::write(&path, text + "\n").map_err(|e| DatasetError::io(&path, e))
}

/// Read an IDX pair plus manifest written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<(LabeledDataset, DatasetManifest), DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| DatasetError::io(&path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| DatasetError::Manifest { path: path.clone(), source: e })?;
    let ds = read_idx(&dir.join(&manifest.images), &dir.join(&manifest.labels))?
        .with_label_names(manifest.label_names.clone())?;
    if ds.len() != manifest.rows {
        return Err(DatasetError::Consistency(format!(
            "manifest lists {} rows, IDX holds {}",
            manifest.rows,
            ds.len()
        )));
    }
    Ok((ds, manifest))
}
