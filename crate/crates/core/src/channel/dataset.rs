//! Normalized angular-delay datasets and their binary file format.
//!
//! File layout (little-endian): magic `CSID`, version `u32`, `N_t u32`,
//! `N_c u32`, split sizes `3 x u64`, normalization min/max `2 x f64`, the
//! scenario block, then every sample as `f64` planes in
//! (sample, plane, antenna, subcarrier) order. A JSON sidecar at
//! `<path>.json` repeats the header.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::paths::{generate_csi, sample_path_set, sample_rng};
use super::sample::{CsiSample, Domain};
use super::scenario::ScenarioConfig;
use super::transform::to_angular_delay;
use crate::binio::{read_file, Reader, Writer};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"CSID";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn new(train: usize, val: usize, test: usize) -> Self {
        Self { train, val, test }
    }

    /// 4,000 / 1,000 / 1,000.
    pub fn desk() -> Self {
        Self::new(4000, 1000, 1000)
    }

    /// 100,000 / 30,000 / 20,000.
    pub fn full() -> Self {
        Self::new(100_000, 30_000, 20_000)
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    pub fn range(&self, split: Split) -> std::ops::Range<usize> {
        match split {
            Split::Train => 0..self.train,
            Split::Val => self.train..self.train + self.val,
            Split::Test => self.train + self.val..self.total(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.train == 0 || self.val == 0 || self.test == 0 {
            return Err(Error::InvalidConfig(
                "every split needs at least one sample".into(),
            ));
        }
        Ok(())
    }
}

/// Min-max constants mapping raw angular-delay values onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationMeta {
    pub global_min: f64,
    pub global_max: f64,
    pub computed_over: Split,
}

impl NormalizationMeta {
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a CsiSample>) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in samples {
            for &v in &s.values {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !(hi > lo) {
            return Err(Error::InvalidConfig(
                "training split has no dynamic range to normalize".into(),
            ));
        }
        Ok(Self {
            global_min: lo,
            global_max: hi,
            computed_over: Split::Train,
        })
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.global_min) / (self.global_max - self.global_min)
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * (self.global_max - self.global_min) + self.global_min
    }

    pub fn denormalize_all(&self, vs: &[f64]) -> Vec<f64> {
        vs.iter().map(|&v| self.denormalize(v)).collect()
    }
}

/// Entries clamped into [0, 1] per split while normalizing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampStats {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Unnormalized angular-delay samples, ordered train, val, test.
#[derive(Debug, Clone)]
pub struct RawCsiSplits {
    pub scenario: ScenarioConfig,
    pub counts: SplitCounts,
    pub samples: Vec<CsiSample>,
}

/// Generates `counts.total()` independent samples. Sample `i` draws from its
/// own RNG stream keyed on `(scenario.seed, i)`.
pub fn generate_raw(scenario: &ScenarioConfig, counts: SplitCounts) -> Result<RawCsiSplits> {
    scenario.validate()?;
    counts.validate()?;
    let samples = (0..counts.total())
        .map(|i| {
            let mut rng = sample_rng(scenario.seed, i as u64);
            let paths = sample_path_set(scenario, &mut rng);
            to_angular_delay(&generate_csi(&paths, scenario))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RawCsiSplits {
        scenario: scenario.clone(),
        counts,
        samples,
    })
}

impl RawCsiSplits {
    pub fn split(&self, split: Split) -> &[CsiSample] {
        &self.samples[self.counts.range(split)]
    }

    pub fn fit_meta(&self) -> Result<NormalizationMeta> {
        NormalizationMeta::fit(self.split(Split::Train))
    }

    /// Split-wise concatenation; the result keeps `self`'s scenario record.
    pub fn concat(&self, other: &RawCsiSplits) -> Result<RawCsiSplits> {
        if self.scenario.sample_len() != other.scenario.sample_len() {
            return Err(Error::ShapeMismatch(
                "cannot mix datasets with different CSI shapes".into(),
            ));
        }
        let mut samples = Vec::with_capacity(self.samples.len() + other.samples.len());
        for split in [Split::Train, Split::Val, Split::Test] {
            samples.extend_from_slice(self.split(split));
            samples.extend_from_slice(other.split(split));
        }
        Ok(RawCsiSplits {
            scenario: self.scenario.clone(),
            counts: SplitCounts {
                train: self.counts.train + other.counts.train,
                val: self.counts.val + other.counts.val,
                test: self.counts.test + other.counts.test,
            },
            samples,
        })
    }

    pub fn normalize(&self, meta: NormalizationMeta) -> (CsiDataset, ClampStats) {
        let mut stats = ClampStats::default();
        let mut samples = Vec::with_capacity(self.samples.len());
        for split in [Split::Train, Split::Val, Split::Test] {
            let mut clamped = 0;
            for s in self.split(split) {
                let values = s
                    .values
                    .iter()
                    .map(|&v| {
                        let x = meta.normalize(v);
                        if !(0.0..=1.0).contains(&x) {
                            clamped += 1;
                        }
                        x.clamp(0.0, 1.0)
                    })
                    .collect();
                samples.push(CsiSample {
                    values,
                    normalized: true,
                    ..s.clone()
                });
            }
            match split {
                Split::Train => stats.train = clamped,
                Split::Val => stats.val = clamped,
                Split::Test => stats.test = clamped,
            }
        }
        log::info!(
            "normalized dataset: clamped {} val and {} test entries into [0, 1]",
            stats.val,
            stats.test
        );
        (
            CsiDataset {
                samples,
                meta,
                scenario: self.scenario.clone(),
                counts: self.counts,
            },
            stats,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiDataset {
    pub samples: Vec<CsiSample>,
    pub meta: NormalizationMeta,
    pub scenario: ScenarioConfig,
    pub counts: SplitCounts,
}

pub fn build_dataset_with_stats(
    scenario: &ScenarioConfig,
    counts: SplitCounts,
) -> Result<(CsiDataset, ClampStats)> {
    let raw = generate_raw(scenario, counts)?;
    let meta = raw.fit_meta()?;
    Ok(raw.normalize(meta))
}

/// Generates, transforms and min-max normalizes a dataset using extrema of
/// the training split.
pub fn build_dataset(scenario: &ScenarioConfig, counts: SplitCounts) -> Result<CsiDataset> {
    Ok(build_dataset_with_stats(scenario, counts)?.0)
}

impl CsiDataset {
    pub fn n_t(&self) -> usize {
        self.scenario.n_tx_antennas
    }

    pub fn n_c(&self) -> usize {
        self.scenario.n_subcarriers
    }

    pub fn sample_len(&self) -> usize {
        self.scenario.sample_len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> &[CsiSample] {
        &self.samples[self.counts.range(split)]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(DATASET_MAGIC);
        w.u32(DATASET_VERSION);
        w.u32(self.n_t() as u32);
        w.u32(self.n_c() as u32);
        w.u64(self.counts.train as u64);
        w.u64(self.counts.val as u64);
        w.u64(self.counts.test as u64);
        w.f64(self.meta.global_min);
        w.f64(self.meta.global_max);
        write_scenario(&mut w, &self.scenario);
        for s in &self.samples {
            w.f64s(&s.values);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(data, path);
        r.expect_magic(DATASET_MAGIC)?;
        r.expect_version(DATASET_VERSION)?;
        let n_t = r.u32()? as usize;
        let n_c = r.u32()? as usize;
        let counts = SplitCounts::new(r.u64()? as usize, r.u64()? as usize, r.u64()? as usize);
        let meta = NormalizationMeta {
            global_min: r.f64()?,
            global_max: r.f64()?,
            computed_over: Split::Train,
        };
        let scenario = read_scenario(&mut r)?;
        if scenario.n_tx_antennas != n_t || scenario.n_subcarriers != n_c {
            return Err(r.err("header dimensions disagree with scenario block"));
        }
        let len = 2 * n_t * n_c;
        let samples = (0..counts.total())
            .map(|_| {
                Ok(CsiSample {
                    values: r.f64s(len)?,
                    n_t,
                    n_c,
                    domain: Domain::AngularDelay,
                    normalized: true,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            samples,
            meta,
            scenario,
            counts,
        })
    }

    pub fn sidecar(&self) -> DatasetHeader {
        DatasetHeader {
            magic: String::from_utf8_lossy(DATASET_MAGIC).into_owned(),
            version: DATASET_VERSION,
            n_t: self.n_t(),
            n_c: self.n_c(),
            counts: self.counts,
            meta: self.meta,
            scenario: self.scenario.clone(),
        }
    }
}

/// Human-readable mirror of the binary header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub magic: String,
    pub version: u32,
    pub n_t: usize,
    pub n_c: usize,
    pub counts: SplitCounts,
    pub meta: NormalizationMeta,
    pub scenario: ScenarioConfig,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_dataset(dataset: &CsiDataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset.to_bytes()).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&dataset.sidecar())?;
    std::fs::write(&side, json).map_err(|e| Error::io(side, e))
}

pub fn load_dataset(path: &Path) -> Result<CsiDataset> {
    CsiDataset::from_bytes(&read_file(path)?, path)
}

fn write_scenario(w: &mut Writer, s: &ScenarioConfig) {
    w.u32(s.n_tx_antennas as u32);
    w.u32(s.n_subcarriers as u32);
    w.u32(s.n_clusters as u32);
    w.u32(s.n_subpaths_per_cluster as u32);
    w.f64(s.center_frequency);
    w.f64(s.bandwidth);
    w.f64(s.antenna_spacing_over_wavelength);
    w.u8(s.los as u8);
    w.f64(s.rician_k_factor_db);
    w.f64(s.angle_spread);
    w.f64(s.max_delay);
    w.u64(s.seed);
}

fn read_scenario(r: &mut Reader<'_>) -> Result<ScenarioConfig> {
    Ok(ScenarioConfig {
        n_tx_antennas: r.u32()? as usize,
        n_subcarriers: r.u32()? as usize,
        n_clusters: r.u32()? as usize,
        n_subpaths_per_cluster: r.u32()? as usize,
        center_frequency: r.f64()?,
        bandwidth: r.f64()?,
        antenna_spacing_over_wavelength: r.f64()?,
        los: match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(r.err(format!("invalid LOS flag {other}"))),
        },
        rician_k_factor_db: r.f64()?,
        angle_spread: r.f64()?,
        max_delay: r.f64()?,
        seed: r.u64()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n_tx_antennas: 8,
            n_subcarriers: 8,
            ..ScenarioConfig::umi_los(21)
        }
    }

    #[test]
    fn train_split_spans_unit_interval() {
        let (ds, stats) = build_dataset_with_stats(&small(), SplitCounts::new(10, 5, 5)).unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(stats.train, 0);
        let train = ds.split(Split::Train);
        let lo = train.iter().flat_map(|s| &s.values).cloned().fold(f64::INFINITY, f64::min);
        let hi = train.iter().flat_map(|s| &s.values).cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 1.0);
        assert!(ds.samples.iter().all(|s| s.normalized && s.domain == Domain::AngularDelay));
    }

    #[test]
    fn clamp_counts_match_recount() {
        let scenario = small();
        let counts = SplitCounts::new(6, 20, 20);
        let raw = generate_raw(&scenario, counts).unwrap();
        let meta = raw.fit_meta().unwrap();
        let (ds, stats) = raw.normalize(meta);
        let recount = |split| {
            raw.split(split)
                .iter()
                .flat_map(|s| &s.values)
                .filter(|&&v| v < meta.global_min || v > meta.global_max)
                .count()
        };
        assert_eq!(stats.val, recount(Split::Val));
        assert_eq!(stats.test, recount(Split::Test));
        assert!(stats.val + stats.test > 0, "tiny training split should force clamping");
        assert!(ds.samples.iter().flat_map(|s| &s.values).all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rejects_empty_split() {
        assert!(build_dataset(&small(), SplitCounts::new(0, 1, 1)).is_err());
    }

    #[test]
    fn bytes_round_trip_and_truncation() {
        let ds = build_dataset(&small(), SplitCounts::new(4, 2, 2)).unwrap();
        let bytes = ds.to_bytes();
        let p = Path::new("mem.csid");
        assert_eq!(CsiDataset::from_bytes(&bytes, p).unwrap(), ds);
        assert!(matches!(
            CsiDataset::from_bytes(&bytes[..bytes.len() - 3], p),
            Err(Error::Format { .. })
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        let err = CsiDataset::from_bytes(&bad, p).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }
}
