use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{synth_scene, PairType, SceneBundle, SceneConfig, SceneManifest, ScenePools, Split, UtteranceRef};
use crate::error::{Error, Result};
use crate::motion::BrirBank;
use crate::room::RING_RADII;
use crate::signal::{wav, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, s: Split) -> usize {
        match s {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDistances {
    pub train: Vec<f64>,
    pub val: Vec<f64>,
    pub test: Vec<f64>,
}

impl SplitDistances {
    pub fn get(&self, s: Split) -> &[f64] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairWeights {
    pub child_child: f64,
    pub child_adult: f64,
    pub adult_adult: f64,
}

impl PairWeights {
    fn weight(&self, p: PairType) -> f64 {
        match p {
            PairType::ChildChild => self.child_child,
            PairType::ChildAdult => self.child_adult,
            PairType::AdultAdult => self.adult_adult,
        }
    }
}

fn default_version() -> u32 {
    1
}

/// Everything `generate_dataset` needs besides the corpus and the BRIRs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default = "default_version")]
    pub version: u32,
    pub seed: u64,
    pub counts: SplitCounts,
    pub pair_weights: PairWeights,
    pub snr_range_db: (f64, f64),
    pub babble_fraction: f64,
    pub babble_snr_range_db: (f64, f64),
    pub babble_sources: (usize, usize),
    pub distances: SplitDistances,
    /// Corpus manifest CSVs.
    #[serde(default)]
    pub corpus: Vec<PathBuf>,
    /// HRIR pack directory, or `synthetic`.
    #[serde(default = "default_hrir")]
    pub hrir: String,
}

fn default_hrir() -> String {
    "synthetic".into()
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            version: 1,
            seed: 0,
            counts: SplitCounts {
                train: 40_000,
                val: 10_000,
                test: 6_000,
            },
            pair_weights: PairWeights {
                child_child: 1.0,
                child_adult: 1.0,
                adult_adult: 1.0,
            },
            snr_range_db: (0.0, 5.0),
            babble_fraction: 0.5,
            babble_snr_range_db: (-2.5, 15.0),
            babble_sources: (3, 8),
            distances: SplitDistances {
                train: vec![1.0],
                val: vec![1.0],
                test: vec![1.0, 1.5, 2.0],
            },
            corpus: Vec::new(),
            hrir: default_hrir(),
        }
    }
}

/// One scene to be generated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneJob {
    pub split: Split,
    pub index: usize,
    pub scene_id: String,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::config("version", format!("unsupported schema version {}", self.version)));
        }
        let w = self.pair_weights;
        let ws = [w.child_child, w.child_adult, w.adult_adult];
        if ws.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || ws.iter().sum::<f64>() <= 0.0 {
            return Err(Error::config("pair_weights", "weights must be non-negative with a positive sum"));
        }
        if !(0.0..=1.0).contains(&self.babble_fraction) {
            return Err(Error::config("babble_fraction", format!("{} outside [0, 1]", self.babble_fraction)));
        }
        for split in Split::ALL {
            let d = self.distances.get(split);
            if self.counts.get(split) > 0 && d.is_empty() {
                return Err(Error::config("distances", format!("no distance for split {split}")));
            }
            if let Some(bad) = d.iter().find(|x| !RING_RADII.iter().any(|r| (*r - **x).abs() < 1e-9)) {
                return Err(Error::config("distances", format!("{bad} m is not one of {RING_RADII:?}")));
            }
        }
        if self.hrir.is_empty() {
            return Err(Error::config("hrir", "must be a pack directory or `synthetic`"));
        }
        // The per-scene fields share one validator.
        let probe = SceneConfig {
            pair_type: PairType::ChildChild,
            snr_range_db: self.snr_range_db,
            babble: true,
            babble_snr_range_db: self.babble_snr_range_db,
            babble_sources: self.babble_sources,
            distance: RING_RADII[0],
            seed: 0,
        };
        probe.validate()
    }

    pub fn total_scenes(&self) -> usize {
        self.counts.total()
    }

    /// Every scene of the dataset in canonical order.
    pub fn scene_jobs(&self) -> Vec<SceneJob> {
        let root = Rng::new(self.seed);
        Split::ALL
            .into_iter()
            .flat_map(|split| (0..self.counts.get(split)).map(move |index| (split, index)))
            .map(|(split, index)| {
                let scene_id = format!("{split}-{index:06}");
                SceneJob {
                    seed: root.derive(&format!("scene/{scene_id}")).seed(),
                    split,
                    index,
                    scene_id,
                }
            })
            .collect()
    }
}

/// Draws the per-scene conditions of `job`: room, distance, pair type and
/// whether babble is present.
pub fn scene_config_for(spec: &DatasetSpec, job: &SceneJob, room_ids: &[u32]) -> Result<(u32, SceneConfig)> {
    if room_ids.is_empty() {
        return Err(Error::config("rooms", "no rooms available"));
    }
    let root = Rng::new(job.seed);
    let room = *root.derive("room").choose(room_ids).unwrap();
    let distance = *root
        .derive("distance")
        .choose(spec.distances.get(job.split))
        .ok_or_else(|| Error::config("distances", format!("no distance for split {}", job.split)))?;
    let total: f64 = PairType::ALL.iter().map(|p| spec.pair_weights.weight(*p)).sum();
    let mut u = root.derive("pair").uniform(0.0, total);
    let mut pair_type = PairType::AdultAdult;
    for p in PairType::ALL {
        let w = spec.pair_weights.weight(p);
        if u < w {
            pair_type = p;
            break;
        }
        u -= w;
    }
    let babble = root.derive("babble-on").uniform(0.0, 1.0) < spec.babble_fraction;
    Ok((
        room,
        SceneConfig {
            pair_type,
            snr_range_db: spec.snr_range_db,
            babble,
            babble_snr_range_db: spec.babble_snr_range_db,
            babble_sources: spec.babble_sources,
            distance,
            seed: job.seed,
        },
    ))
}

/// Supplies the BRIR bank of a (room, distance) pair.
pub trait BankProvider: Sync {
    fn room_ids(&self) -> Vec<u32>;
    fn bank(&self, room_id: u32, distance: f64) -> Result<Arc<BrirBank>>;
}

/// Banks held in memory.
#[derive(Clone, Debug, Default)]
pub struct BankSet {
    banks: BTreeMap<(u32, u64), Arc<BrirBank>>,
}

fn distance_key(d: f64) -> u64 {
    (d * 1000.0).round() as u64
}

impl BankSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, bank: BrirBank) {
        self.banks
            .insert((bank.room_id(), distance_key(bank.distance())), Arc::new(bank));
    }

    pub fn len(&self) -> usize {
        self.banks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.banks.is_empty()
    }
}

impl BankProvider for BankSet {
    fn room_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.banks.keys().map(|k| k.0).collect();
        ids.dedup();
        ids
    }

    fn bank(&self, room_id: u32, distance: f64) -> Result<Arc<BrirBank>> {
        self.banks
            .get(&(room_id, distance_key(distance)))
            .cloned()
            .ok_or_else(|| Error::config("rooms", format!("no BRIR bank for room {room_id} at {distance} m")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub scene_id: String,
    pub split: Split,
    /// Over the manifest and every WAV of the scene.
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub scenes: usize,
    pub babble_scenes: usize,
    pub mean_mixture_snr_db: f64,
    pub mean_babble_snr_db: Option<f64>,
    /// Lower bin edge (dB) to count, 0.5 dB bins.
    pub mixture_snr_histogram: BTreeMap<String, usize>,
    /// Lower bin edge (dB) to count, 2.5 dB bins.
    pub babble_snr_histogram: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub pipeline_version: String,
    pub seed: u64,
    pub scenes: Vec<IndexEntry>,
    pub splits: BTreeMap<String, SplitStats>,
    /// Over the ordered scene entries.
    pub hash: String,
}

fn bin_label(v: f64, width: f64) -> String {
    format!("{:+.1}", (v / width).floor() * width)
}

fn split_stats(manifests: &[&SceneManifest]) -> SplitStats {
    let mut s = SplitStats {
        scenes: manifests.len(),
        ..Default::default()
    };
    let mut snr_sum = 0.0;
    let mut babble_sum = 0.0;
    for m in manifests {
        snr_sum += m.mixture_snr_db;
        *s.mixture_snr_histogram.entry(bin_label(m.mixture_snr_db, 0.5)).or_default() += 1;
        if let Some(b) = m.babble_snr_db {
            s.babble_scenes += 1;
            babble_sum += b;
            *s.babble_snr_histogram.entry(bin_label(b, 2.5)).or_default() += 1;
        }
    }
    if s.scenes > 0 {
        s.mean_mixture_snr_db = snr_sum / s.scenes as f64;
    }
    if s.babble_scenes > 0 {
        s.mean_babble_snr_db = Some(babble_sum / s.babble_scenes as f64);
    }
    s
}

const SCENE_FILES: [&str; 4] = ["mixture.wav", "ref1.wav", "ref2.wav", "babble.wav"];

fn write_scene(dir: &Path, bundle: &SceneBundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fmt = wav::WavFormat::Float32;
    wav::write_binaural(&dir.join("mixture.wav"), &bundle.mixture, fmt)?;
    wav::write_binaural(&dir.join("ref1.wav"), &bundle.references[0], fmt)?;
    wav::write_binaural(&dir.join("ref2.wav"), &bundle.references[1], fmt)?;
    if let Some(b) = &bundle.babble {
        wav::write_binaural(&dir.join("babble.wav"), b, fmt)?;
    }
    // The manifest goes last: its presence marks the scene complete.
    let tmp = dir.join("manifest.json.tmp");
    let text = serde_json::to_string_pretty(&bundle.manifest).map_err(|e| Error::json(&tmp, e))?;
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    let path = dir.join("manifest.json");
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(path: &Path) -> Result<SceneManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn scene_digest(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for name in std::iter::once("manifest.json").chain(SCENE_FILES) {
        let p = dir.join(name);
        match fs::read(&p) {
            Ok(bytes) => {
                h.update(name.as_bytes());
                h.update((bytes.len() as u64).to_le_bytes());
                h.update(&bytes);
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && name == "babble.wav" => {}
            Err(e) => return Err(Error::io(p, e)),
        }
    }
    Ok(format!("{:x}", h.finalize()))
}

/// Writes every scene of `spec` under `out` and returns the index, which is
/// also saved as `out/index.json`. Scenes whose manifest already exists are
/// kept, so an interrupted run resumes where it stopped.
pub fn generate_dataset(
    spec: &DatasetSpec,
    corpus: &[UtteranceRef],
    banks: &dyn BankProvider,
    out: &Path,
) -> Result<DatasetIndex> {
    spec.validate()?;
    super::check_disjoint(corpus)?;
    let pools: BTreeMap<Split, ScenePools> = Split::ALL
        .into_iter()
        .map(|s| (s, ScenePools::from_refs(corpus.iter().filter(|u| u.split == s))))
        .collect();
    let rooms = banks.room_ids();
    let jobs = spec.scene_jobs();

    let results: Vec<Result<SceneManifest>> = jobs
        .par_iter()
        .map(|job| {
            let dir = out.join(job.split.as_str()).join(&job.scene_id);
            let manifest_path = dir.join("manifest.json");
            if manifest_path.exists() {
                return read_manifest(&manifest_path);
            }
            let (room, cfg) = scene_config_for(spec, job, &rooms)?;
            let bank = banks.bank(room, cfg.distance)?;
            let bundle = synth_scene(&cfg, &job.scene_id, job.split, &pools[&job.split], &bank)?;
            write_scene(&dir, &bundle)?;
            Ok(bundle.manifest)
        })
        .collect();

    let mut manifests = Vec::with_capacity(jobs.len());
    let mut first_error = None;
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(m) => manifests.push(m),
            Err(e) if first_error.is_none() => first_error = Some((job.scene_id.clone(), e)),
            Err(_) => {}
        }
    }
    if let Some((token, cause)) = first_error {
        return Err(Error::PartialDataset {
            completed: manifests.len(),
            resume_token: token,
            cause: Box::new(cause),
        });
    }

    let scenes: Vec<IndexEntry> = jobs
        .par_iter()
        .map(|job| {
            let dir = out.join(job.split.as_str()).join(&job.scene_id);
            Ok(IndexEntry {
                scene_id: job.scene_id.clone(),
                split: job.split,
                sha256: scene_digest(&dir)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut h = Sha256::new();
    for e in &scenes {
        h.update(e.scene_id.as_bytes());
        h.update(e.sha256.as_bytes());
    }
    let splits = Split::ALL
        .into_iter()
        .map(|s| {
            let ms: Vec<&SceneManifest> = manifests.iter().filter(|m| m.split == s).collect();
            (s.to_string(), split_stats(&ms))
        })
        .collect();
    let index = DatasetIndex {
        pipeline_version: super::PIPELINE_VERSION.to_string(),
        seed: spec.seed,
        scenes,
        splits,
        hash: format!("{:x}", h.finalize()),
    };
    let path = out.join("index.json");
    let text = serde_json::to_string_pretty(&index).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_enumerates_56000_scenes() {
        let spec = DatasetSpec::default();
        spec.validate().unwrap();
        assert_eq!(spec.total_scenes(), 56_000);
        let jobs = spec.scene_jobs();
        assert_eq!(jobs.len(), 56_000);
        assert_eq!(jobs.iter().filter(|j| j.split == Split::Train).count(), 40_000);
        assert_eq!(jobs.iter().filter(|j| j.split == Split::Val).count(), 10_000);
        assert_eq!(jobs[40_000].scene_id, "val-000000");
    }

    #[test]
    fn far_distances_only_in_test_by_default() {
        let spec = DatasetSpec::default();
        let jobs = spec.scene_jobs();
        for job in jobs.iter().step_by(97) {
            let (_, cfg) = scene_config_for(&spec, job, &[0, 1, 2]).unwrap();
            if job.split != Split::Test {
                assert_eq!(cfg.distance, 1.0);
            }
        }
    }

    #[test]
    fn validation_names_the_field() {
        let mut spec = DatasetSpec::default();
        spec.distances.test.push(1.2);
        assert!(matches!(spec.validate(), Err(Error::Config { field, .. }) if field == "distances"));
        let mut spec = DatasetSpec::default();
        spec.babble_fraction = 1.5;
        assert!(matches!(spec.validate(), Err(Error::Config { field, .. }) if field == "babble_fraction"));
        let mut spec = DatasetSpec::default();
        spec.babble_sources = (4, 2);
        assert!(matches!(spec.validate(), Err(Error::Config { field, .. }) if field == "babble_sources"));
    }

    #[test]
    fn job_seeds_are_stable_and_distinct() {
        let spec = DatasetSpec {
            counts: SplitCounts {
                train: 50,
                val: 10,
                test: 10,
            },
            ..Default::default()
        };
        let a = spec.scene_jobs();
        assert_eq!(a, spec.scene_jobs());
        let mut seeds: Vec<u64> = a.iter().map(|j| j.seed).collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 70);
    }

    #[test]
    fn pair_weights_steer_pair_types() {
        let spec = DatasetSpec {
            pair_weights: PairWeights {
                child_child: 0.0,
                child_adult: 1.0,
                adult_adult: 0.0,
            },
            ..Default::default()
        };
        for job in spec.scene_jobs().iter().take(200) {
            assert_eq!(scene_config_for(&spec, job, &[0]).unwrap().1.pair_type, PairType::ChildAdult);
        }
    }

    #[test]
    fn spec_json_round_trips() {
        let spec = DatasetSpec::default();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<DatasetSpec>(&text).unwrap(), spec);
        let extra = text.replacen("{", "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<DatasetSpec>(&extra).is_err());
    }
}
