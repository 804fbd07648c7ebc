//! On-disk dataset: `manifest.json` plus one raw tensor file per sample at
//! `data/<split>/<sample_id>.bin`.
//!
//! A tensor file is a shape record followed by the values, all little-endian:
//! `u32 ndim`, `ndim x u32 dims`, then `prod(dims) x f32` in `C x H x W` order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::stats::{compute_band_stats, BandStats};
use crate::encodings::Timestamp;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::tokenizer::{SpectralImage, TemporalSample};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    /// Path relative to the dataset root.
    pub path: String,
    pub location: String,
    pub timestamp: Timestamp,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub name: String,
    pub bands: Vec<String>,
    /// `[height, width]`
    pub image_size: [usize; 2],
    pub min_year: Option<i32>,
    pub class_names: Vec<String>,
    #[serde(default)]
    pub split_sizes: BTreeMap<String, usize>,
    pub stats: Option<BandStats>,
    pub splits: BTreeMap<String, Vec<SampleRecord>>,
}

impl DatasetManifest {
    pub fn new(name: &str, bands: Vec<String>, image_size: [usize; 2], class_names: Vec<String>) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            name: name.to_string(),
            bands,
            image_size,
            min_year: None,
            class_names,
            split_sizes: BTreeMap::new(),
            stats: None,
            splits: BTreeMap::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn split(&self, split: &str) -> Result<&[SampleRecord]> {
        self.splits
            .get(split)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("dataset has no split {split}")))
    }

    /// Manifest minimum year, else the earliest training-split year.
    pub fn resolved_min_year(&self) -> i32 {
        self.min_year.unwrap_or_else(|| {
            let pick = |recs: &Vec<SampleRecord>| recs.iter().map(|r| r.timestamp.year).min();
            self.splits
                .get("train")
                .and_then(pick)
                .or_else(|| self.splits.values().filter_map(pick).min())
                .unwrap_or(0)
        })
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion {
                found: self.format_version,
                expected: MANIFEST_VERSION,
            });
        }
        let mut location_split: HashMap<&str, &str> = HashMap::new();
        for (split, recs) in &self.splits {
            for r in recs {
                if let Some(prev) = location_split.insert(&r.location, split) {
                    if prev != split {
                        return Err(Error::CorruptData {
                            what: MANIFEST_FILE.into(),
                            reason: format!("location {} appears in splits {prev} and {split}", r.location),
                        });
                    }
                }
                if let Some(l) = r.label {
                    if l >= self.class_names.len() {
                        return Err(Error::CorruptData {
                            what: r.id.clone(),
                            reason: format!("label {l} out of range"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn write_tensor(path: &Path, dims: &[usize], values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(4 + 4 * dims.len() + 4 * values.len());
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path, what: &str) -> Result<(Vec<usize>, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |reason: String| Error::CorruptData {
        what: what.to_string(),
        reason,
    };
    let word = |i: usize| -> Option<u32> { bytes.get(4 * i..4 * i + 4).map(|b| u32::from_le_bytes(b.try_into().unwrap())) };
    let ndim = word(0).ok_or_else(|| corrupt("missing shape record".into()))? as usize;
    if ndim == 0 || ndim > 8 {
        return Err(corrupt(format!("implausible rank {ndim}")));
    }
    let dims = (1..=ndim)
        .map(|i| word(i).map(|d| d as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| corrupt("truncated shape record".into()))?;
    let count: usize = dims.iter().product();
    let header = 4 * (1 + ndim);
    let expected = header + 4 * count;
    if bytes.len() != expected {
        return Err(corrupt(format!(
            "expected {expected} bytes for shape {dims:?}, found {}",
            bytes.len()
        )));
    }
    let values = bytes[header..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((dims, values))
}

/// Incrementally writes a dataset directory.
pub struct DatasetWriter {
    root: PathBuf,
    manifest: DatasetManifest,
}

impl DatasetWriter {
    pub fn create(root: impl AsRef<Path>, mut manifest: DatasetManifest) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("data")).map_err(|e| Error::io(&root, e))?;
        manifest.splits.clear();
        manifest.split_sizes.clear();
        Ok(Self { root, manifest })
    }

    pub fn add(&mut self, split: &str, id: &str, location: &str, timestamp: Timestamp, label: Option<usize>, image: &SpectralImage) -> Result<()> {
        let [h, w] = self.manifest.image_size;
        if image.band_ids() != self.manifest.bands.as_slice() || image.height() != h || image.width() != w {
            return Err(Error::invalid(format!(
                "sample {id} does not match the manifest bands and image size"
            )));
        }
        let dir = self.root.join("data").join(split);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let rel = format!("data/{split}/{id}.bin");
        write_tensor(&self.root.join(&rel), &[image.channels(), h, w], image.pixels())?;
        self.manifest.splits.entry(split.to_string()).or_default().push(SampleRecord {
            id: id.to_string(),
            path: rel,
            location: location.to_string(),
            timestamp,
            label,
        });
        Ok(())
    }

    pub fn finish(mut self) -> Result<Dataset> {
        self.manifest.split_sizes = self.manifest.splits.iter().map(|(k, v)| (k.clone(), v.len())).collect();
        if self.manifest.min_year.is_none() {
            self.manifest.min_year = Some(self.manifest.resolved_min_year());
        }
        self.manifest.validate()?;
        let ds = Dataset::from_parts(self.root, self.manifest)?;
        ds.save_manifest()?;
        Ok(ds)
    }
}

/// A dataset directory opened for reading.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
    locations: HashMap<(String, String), Vec<usize>>,
}

impl Dataset {
    fn from_parts(root: PathBuf, manifest: DatasetManifest) -> Result<Self> {
        let mut locations: HashMap<(String, String), Vec<usize>> = HashMap::new();
        for (split, recs) in &manifest.splits {
            for (i, r) in recs.iter().enumerate() {
                locations.entry((split.clone(), r.location.clone())).or_default().push(i);
            }
        }
        Ok(Self {
            root,
            manifest,
            locations,
        })
    }

    /// Open a dataset. When the manifest carries no band statistics they are
    /// computed from the training split and written back to the manifest.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let version = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: MANIFEST_VERSION,
            });
        }
        let manifest: DatasetManifest = serde_json::from_value(value)?;
        manifest.validate()?;
        let mut ds = Self::from_parts(root, manifest)?;
        if ds.manifest.stats.is_none() {
            let split = if ds.manifest.splits.contains_key("train") {
                "train".to_string()
            } else {
                ds.manifest.splits.keys().next().cloned().unwrap_or_default()
            };
            let stats = ds.compute_stats(&split)?;
            log::info!("computed band statistics for {} and cached them", ds.root.display());
            ds.manifest.stats = Some(stats);
            ds.save_manifest()?;
        }
        Ok(ds)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn stats(&self) -> Result<&BandStats> {
        self.manifest
            .stats
            .as_ref()
            .ok_or_else(|| Error::InvalidState("dataset has no band statistics".into()))
    }

    pub fn set_stats(&mut self, stats: BandStats) -> Result<()> {
        self.manifest.stats = Some(stats);
        self.save_manifest()
    }

    pub fn save_manifest(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn len(&self, split: &str) -> usize {
        self.manifest.splits.get(split).map_or(0, Vec::len)
    }

    pub fn record(&self, split: &str, index: usize) -> Result<&SampleRecord> {
        self.manifest
            .split(split)?
            .get(index)
            .ok_or_else(|| Error::invalid(format!("sample {index} out of range for split {split}")))
    }

    pub fn load(&self, split: &str, index: usize) -> Result<SpectralImage> {
        let rec = self.record(split, index)?;
        let (dims, values) = read_tensor(&self.root.join(&rec.path), &rec.id)?;
        let [h, w] = self.manifest.image_size;
        if dims != [self.manifest.bands.len(), h, w] {
            return Err(Error::CorruptData {
                what: rec.id.clone(),
                reason: format!("shape {dims:?} does not match the manifest"),
            });
        }
        SpectralImage::new(h, w, values, self.manifest.bands.clone())
    }

    pub fn compute_stats(&self, split: &str) -> Result<BandStats> {
        let n = self.len(split);
        let images = (0..n).map(|i| self.load(split, i)).collect::<Result<Vec<_>>>()?;
        compute_band_stats(&images)
    }

    pub fn locations(&self, split: &str) -> Vec<&str> {
        let mut locs: Vec<&str> = self
            .locations
            .keys()
            .filter(|(s, _)| s == split)
            .map(|(_, l)| l.as_str())
            .collect();
        locs.sort_unstable();
        locs
    }

    pub fn location_members(&self, split: &str, location: &str) -> Result<&[usize]> {
        self.locations
            .get(&(split.to_string(), location.to_string()))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("unknown location {location} in split {split}")))
    }

    /// Build a `t_target`-frame sequence around `anchor` (a sample index in
    /// `split`). Co-located images with timestamps distinct from the chosen
    /// ones are preferred; any shortfall is filled by duplicating the anchor.
    /// Frames are ordered by timestamp.
    pub fn assemble_temporal(&self, split: &str, anchor: usize, t_target: usize, seed: u64) -> Result<TemporalSample> {
        let chosen = self.assemble_indices(split, anchor, t_target, seed)?;
        let records = self.manifest.split(split)?;
        let frames = chosen.iter().map(|&i| self.load(split, i)).collect::<Result<Vec<_>>>()?;
        let timestamps = chosen.iter().map(|&i| records[i].timestamp).collect();
        TemporalSample::new(frames, timestamps, records[anchor].label)
    }

    /// The sample indices [`Dataset::assemble_temporal`] would load, in
    /// frame order.
    pub fn assemble_indices(&self, split: &str, anchor: usize, t_target: usize, seed: u64) -> Result<Vec<usize>> {
        if t_target == 0 {
            return Err(Error::invalid("temporal sample needs at least one frame"));
        }
        let anchor_rec = self.record(split, anchor)?;
        let members = self.location_members(split, &anchor_rec.location)?;
        let mut rng = stream_rng(seed, Stream::Assemble, &[anchor as u64]);
        let mut others: Vec<usize> = members.iter().copied().filter(|&i| i != anchor).collect();
        others.shuffle(&mut rng);
        let records = self.manifest.split(split)?;
        let mut chosen = vec![anchor];
        let mut seen: HashSet<Timestamp> = HashSet::from([anchor_rec.timestamp]);
        for i in others {
            if chosen.len() == t_target {
                break;
            }
            if seen.insert(records[i].timestamp) {
                chosen.push(i);
            }
        }
        while chosen.len() < t_target {
            chosen.push(anchor);
        }
        chosen.sort_by_key(|&i| (records[i].timestamp, i != anchor));
        Ok(chosen)
    }

    /// Like [`Dataset::assemble_temporal`], anchored at the location's first sample.
    pub fn assemble_location(&self, split: &str, location: &str, t_target: usize, seed: u64) -> Result<TemporalSample> {
        let first = *self
            .location_members(split, location)?
            .first()
            .ok_or_else(|| Error::invalid(format!("location {location} is empty")))?;
        self.assemble_temporal(split, first, t_target, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(v: f32) -> SpectralImage {
        SpectralImage::new(2, 2, vec![v; 8], vec!["S0".into(), "S1".into()]).unwrap()
    }

    fn write_small(root: &Path, with_stats: bool) -> Dataset {
        let mut m = DatasetManifest::new("t", vec!["S0".into(), "S1".into()], [2, 2], vec!["a".into(), "b".into()]);
        if with_stats {
            m.stats = Some(BandStats::new(m.bands.clone(), vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
        }
        let mut w = DatasetWriter::create(root, m).unwrap();
        let ts = |y, mo| Timestamp::date(y, mo).unwrap();
        w.add("train", "a0", "locA", ts(2016, 1), Some(0), &image(1.0)).unwrap();
        w.add("train", "a1", "locA", ts(2017, 1), Some(0), &image(2.0)).unwrap();
        w.add("train", "a2", "locA", ts(2018, 5), Some(0), &image(3.0)).unwrap();
        w.add("train", "a3", "locA", ts(2018, 5), Some(0), &image(4.0)).unwrap();
        w.add("train", "b0", "locB", ts(2019, 2), Some(1), &image(5.0)).unwrap();
        w.add("val", "c0", "locC", ts(2020, 3), Some(1), &image(6.0)).unwrap();
        w.finish().unwrap()
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = write_small(dir.path(), true);
        let again = Dataset::open(dir.path()).unwrap();
        assert_eq!(again.manifest(), ds.manifest());
        assert_eq!(again.load("train", 2).unwrap(), image(3.0));
        assert_eq!(again.manifest().min_year, Some(2016));
        assert_eq!(again.manifest().split_sizes["train"], 5);
    }

    #[test]
    fn truncated_file_names_sample() {
        let dir = tempfile::tempdir().unwrap();
        let ds = write_small(dir.path(), true);
        let path = dir.path().join("data/train/a1.bin");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = ds.load("train", 1).unwrap_err();
        assert!(matches!(err, Error::CorruptData { ref what, .. } if what == "a1"), "{err}");
    }

    #[test]
    fn version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_small(dir.path(), true);
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 7");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            Dataset::open(dir.path()).unwrap_err(),
            Error::UnsupportedVersion { found: 7, .. }
        ));
    }

    #[test]
    fn missing_stats_computed_and_cached() {
        let dir = tempfile::tempdir().unwrap();
        write_small(dir.path(), false);
        let ds = Dataset::open(dir.path()).unwrap();
        let stats = ds.stats().unwrap();
        assert!((stats.mean[0] - 3.0).abs() < 1e-12);
        let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let m: DatasetManifest = serde_json::from_str(&text).unwrap();
        assert!(m.stats.is_some());
    }

    #[test]
    fn temporal_assembly_rules() {
        let dir = tempfile::tempdir().unwrap();
        let ds = write_small(dir.path(), true);
        // Single-image location: duplicated anchor.
        let s = ds.assemble_temporal("train", 4, 3, 0).unwrap();
        assert_eq!(s.frames, vec![image(5.0); 3]);
        // Location with distinct timestamps available.
        let s = ds.assemble_temporal("train", 0, 3, 11).unwrap();
        let mut ts = s.timestamps.clone();
        ts.dedup();
        assert_eq!(ts.len(), 3);
        assert!(s.frames.contains(&image(1.0)));
        assert!(s.timestamps.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(ds.assemble_temporal("train", 0, 3, 11).unwrap(), s);
        assert!(ds.assemble_location("train", "nowhere", 3, 0).is_err());
        assert!(ds.assemble_location("val", "locA", 3, 0).is_err());
    }
}
