//! Dataset directories.
//!
//! A dataset is a directory holding `dataset.json`, which lists the manifest
//! files of the seen (training) domains in stream order and of the unseen
//! domains, plus one manifest and one feature file per domain. A manifest is
//!
//! ```json
//! {"name": "seen0", "num_cameras": 3, "feature_file": "domain0.ucrf",
//!  "camera_ids": [...], "gt_ids": [... or null], "query_indices": [...],
//!  "gallery_indices": [...]}
//! ```
//!
//! Samples listed in neither index list are training samples. Feature files
//! are `"UCRF"`, version `u32`, count `u32`, dim `u32`, then `count × dim`
//! `f32` values row-major, little-endian. Domain ids are positions in
//! `dataset.json`, seen domains first.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ucr_core::eval::EvalSplit;
use ucr_core::synth::SyntheticStream;
use ucr_core::{DatasetDomain, Domain, Sample};

use crate::binary::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"UCRF";
pub const FEATURE_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seen: Vec<DatasetDomain>,
    pub unseen: Vec<DatasetDomain>,
}

impl From<SyntheticStream> for Dataset {
    fn from(s: SyntheticStream) -> Self {
        Dataset {
            seen: s.seen,
            unseen: s.unseen,
        }
    }
}

impl Dataset {
    /// Training view of the seen domains, in stream order.
    pub fn train_domains(&self) -> Vec<Domain> {
        self.seen.iter().map(DatasetDomain::train_domain).collect()
    }

    pub fn seen_splits(&self) -> Vec<EvalSplit> {
        self.seen.iter().map(DatasetDomain::eval_split).collect()
    }

    pub fn unseen_splits(&self) -> Vec<EvalSplit> {
        self.unseen.iter().map(DatasetDomain::eval_split).collect()
    }

    /// Evaluation splits by name, or all of them (seen first) when `names`
    /// is empty.
    pub fn splits(&self, names: &[String]) -> Result<Vec<EvalSplit>> {
        let all: Vec<EvalSplit> = self.seen_splits().into_iter().chain(self.unseen_splits()).collect();
        if names.is_empty() {
            return Ok(all);
        }
        names
            .iter()
            .map(|n| {
                all.iter()
                    .find(|s| &s.name == n)
                    .cloned()
                    .ok_or_else(|| Error::MissingSplit(n.clone()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Index {
    seen: Vec<String>,
    unseen: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub num_cameras: usize,
    pub feature_file: String,
    pub camera_ids: Vec<usize>,
    pub gt_ids: Vec<Option<u32>>,
    pub query_indices: Vec<usize>,
    pub gallery_indices: Vec<usize>,
}

pub fn encode_features(rows: &[&[f32]], dim: usize) -> Vec<u8> {
    let mut w = Writer::new(FEATURE_MAGIC, FEATURE_VERSION);
    w.len(rows.len());
    w.len(dim);
    for r in rows {
        assert_eq!(r.len(), dim, "feature row width");
        r.iter().for_each(|&x| w.f32(x));
    }
    w.buf
}

pub fn decode_features(path: &Path, bytes: &[u8]) -> Result<Vec<Vec<f32>>> {
    let mut r = Reader::open(path, bytes, FEATURE_MAGIC, FEATURE_VERSION)?;
    let count = r.len()?;
    let dim = r.len()?;
    let flat = r.f32s(count.checked_mul(dim).ok_or_else(|| r.malformed("size overflow"))?)?;
    r.finish()?;
    if dim == 0 {
        return Ok(vec![Vec::new(); count]);
    }
    Ok(flat.chunks_exact(dim).map(<[f32]>::to_vec).collect())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write_file(path, &bytes)
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut index = Index {
        seen: Vec::new(),
        unseen: Vec::new(),
    };
    let all = dataset.seen.iter().map(|d| (true, d)).chain(dataset.unseen.iter().map(|d| (false, d)));
    for (k, (seen, d)) in all.enumerate() {
        let feature_file = format!("domain{k}.ucrf");
        let manifest_file = format!("domain{k}.json");
        let samples = &d.domain.samples;
        let dim = samples.first().map_or(0, |s| s.features.len());
        let rows: Vec<&[f32]> = samples.iter().map(|s| s.features.as_slice()).collect();
        write_file(&dir.join(&feature_file), &encode_features(&rows, dim))?;
        let manifest = Manifest {
            name: d.domain.name.clone(),
            num_cameras: d.domain.num_cameras,
            feature_file,
            camera_ids: samples.iter().map(|s| s.camera_id).collect(),
            gt_ids: samples.iter().map(Sample::gt_id).collect(),
            query_indices: d.query.clone(),
            gallery_indices: d.gallery.clone(),
        };
        write_json(&dir.join(&manifest_file), &manifest)?;
        if seen {
            index.seen.push(manifest_file);
        } else {
            index.unseen.push(manifest_file);
        }
    }
    write_json(&dir.join(INDEX_FILE), &index)
}

fn read_domain(dir: &Path, file: &str, domain_id: usize) -> Result<DatasetDomain> {
    let path = dir.join(file);
    let m: Manifest = read_json(&path)?;
    let bad = |reason: String| Error::Malformed {
        path: path.clone(),
        reason,
    };
    let feature_path: PathBuf = dir.join(&m.feature_file);
    let features = decode_features(&feature_path, &read_file(&feature_path)?)?;
    let n = features.len();
    if m.camera_ids.len() != n || m.gt_ids.len() != n {
        return Err(bad(format!(
            "{} samples but {} camera ids and {} gt ids",
            n,
            m.camera_ids.len(),
            m.gt_ids.len()
        )));
    }
    if let Some(&i) = m.query_indices.iter().chain(&m.gallery_indices).find(|&&i| i >= n) {
        return Err(bad(format!("split index {i} out of range for {n} samples")));
    }
    if let Some(&c) = m.camera_ids.iter().find(|&&c| c >= m.num_cameras) {
        return Err(bad(format!("camera out of range: {c} with {} cameras", m.num_cameras)));
    }
    let samples = features
        .into_iter()
        .zip(&m.camera_ids)
        .zip(&m.gt_ids)
        .map(|((f, &cam), &gt)| Sample::new(f, domain_id, cam, gt))
        .collect();
    Ok(DatasetDomain {
        domain: Domain {
            name: m.name,
            samples,
            num_cameras: m.num_cameras,
        },
        query: m.query_indices,
        gallery: m.gallery_indices,
    })
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let index: Index = read_json(&dir.join(INDEX_FILE))?;
    let mut k = 0;
    let mut load = |files: &[String]| -> Result<Vec<DatasetDomain>> {
        files
            .iter()
            .map(|f| {
                let d = read_domain(dir, f, k);
                k += 1;
                d
            })
            .collect()
    };
    let seen = load(&index.seen)?;
    let unseen = load(&index.unseen)?;
    Ok(Dataset { seen, unseen })
}
