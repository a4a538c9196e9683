//! On-disk RIR and BRIR caches and the bank provider that reads them.
//!
//! Layout under the cache root:
//! `rooms.json`, then `rir/room{id}/d{dist}/az{ddd}.wav` (seven capsules)
//! and `brir/room{id}/d{dist}/az{ddd}.wav` (two ears), each with a JSON
//! sidecar of the same stem. `ddd` is the ring angle counter-clockwise
//! from the front. A sidecar is written after its WAV, so it marks a
//! finished job.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use binscene_core::binaural::Brir;
use binscene_core::motion::BrirBank;
use binscene_core::pipeline::{run_rir_job, RirJob, RoomsConfig};
use binscene_core::room::{Point3, RoomSpec};
use binscene_core::scene::BankProvider;
use binscene_core::signal::wav::{self, WavFormat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{io, json, CliError, Result};

pub const ROOMS_FILE: &str = "rooms.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RirSidecar {
    pub room: RoomSpec,
    pub listener: Point3,
    pub source: Point3,
    pub distance: f64,
    pub ring_index: usize,
    pub azimuth: f64,
    pub label: Option<i32>,
    pub direct_sample_index: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BrirSidecar {
    pub room_id: u32,
    pub distance: f64,
    pub azimuth_label: i32,
    pub listener: Point3,
    pub hrir: String,
}

fn room_dir(kind: &str, cache: &Path, room: u32, distance: f64) -> PathBuf {
    cache.join(kind).join(format!("room{room:02}")).join(format!("d{distance:.1}"))
}

fn stem(job: &RirJob) -> String {
    format!("az{:03}", job.ring_index * 5)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| json(path, e))?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    serde_json::from_str(&text).map_err(|e| json(path, e))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoomsSummary {
    pub jobs: usize,
    pub rirs_written: usize,
    pub brirs_written: usize,
    pub cached: usize,
}

/// Simulates every job of `cfg` at the chosen distances (all when `None`)
/// that is not already cached.
pub fn build_cache(cfg: &RoomsConfig, distances: Option<&[f64]>, cache: &Path) -> Result<RoomsSummary> {
    cfg.validate()?;
    if let Some(ds) = distances {
        if let Some(d) = ds.iter().find(|d| !cfg.distances.iter().any(|c| (c - *d).abs() < 1e-9)) {
            return Err(binscene_core::Error::config("distance", format!("{d} m is not in the configured {:?}", cfg.distances)).into());
        }
    }
    fs::create_dir_all(cache).map_err(|e| io(cache, e))?;
    let rooms_path = cache.join(ROOMS_FILE);
    if rooms_path.exists() {
        let old: RoomsConfig = read_json(&rooms_path)?;
        if &old != cfg {
            return Err(binscene_core::Error::config(
                "config",
                format!("{} was built with a different room configuration; use a fresh --out", cache.display()),
            )
            .into());
        }
    } else {
        write_json(&rooms_path, cfg)?;
    }
    let hrirs = cfg.load_hrirs()?;

    let jobs: Vec<RirJob> = cfg
        .rir_jobs()
        .into_iter()
        .filter(|j| distances.is_none_or(|ds| ds.iter().any(|d| (d - j.distance).abs() < 1e-9)))
        .collect();
    let mut rooms = BTreeMap::new();
    for j in &jobs {
        if let std::collections::btree_map::Entry::Vacant(e) = rooms.entry(j.room_id) {
            let room = cfg.room(j.room_id)?;
            let listener = cfg.listener(&room)?;
            e.insert((room, listener));
        }
    }
    log::info!("{} RIR jobs over {} rooms", jobs.len(), rooms.len());

    let outcomes = jobs
        .par_iter()
        .map(|job| -> Result<(bool, bool)> {
            let rdir = room_dir("rir", cache, job.room_id, job.distance);
            let bdir = room_dir("brir", cache, job.room_id, job.distance);
            let name = stem(job);
            let rir_json = rdir.join(format!("{name}.json"));
            let brir_json = bdir.join(format!("{name}.json"));
            if rir_json.exists() && (job.label.is_none() || brir_json.exists()) {
                return Ok((false, false));
            }
            let (room, listener) = &rooms[&job.room_id];
            let (rir, brir) = run_rir_job(cfg, room, *listener, job, &hrirs)?;
            fs::create_dir_all(&rdir).map_err(|e| io(&rdir, e))?;
            let chans: Vec<_> = rir.channels.iter().collect();
            wav::write_channels(&rdir.join(format!("{name}.wav")), &chans, WavFormat::Float32)?;
            write_json(
                &rir_json,
                &RirSidecar {
                    room: *room,
                    listener: *listener,
                    source: rir.source,
                    distance: job.distance,
                    ring_index: job.ring_index,
                    azimuth: job.azimuth,
                    label: job.label,
                    direct_sample_index: rir.direct_sample_index,
                    seed: cfg.seed,
                },
            )?;
            if let Some(b) = brir {
                fs::create_dir_all(&bdir).map_err(|e| io(&bdir, e))?;
                wav::write_binaural(&bdir.join(format!("{name}.wav")), &b.response, WavFormat::Float32)?;
                write_json(
                    &brir_json,
                    &BrirSidecar {
                        room_id: b.room_id,
                        distance: b.distance,
                        azimuth_label: b.azimuth_label,
                        listener: *listener,
                        hrir: cfg.hrir.clone(),
                    },
                )?;
                return Ok((true, true));
            }
            Ok((true, false))
        })
        .collect::<Vec<_>>();

    let mut summary = RoomsSummary {
        jobs: jobs.len(),
        ..Default::default()
    };
    for o in outcomes {
        match o? {
            (false, _) => summary.cached += 1,
            (true, b) => {
                summary.rirs_written += 1;
                summary.brirs_written += b as usize;
            }
        }
    }
    Ok(summary)
}

/// BRIR banks read lazily from a cache and kept in memory.
pub struct DiskBanks {
    root: PathBuf,
    config: RoomsConfig,
    loaded: Mutex<BTreeMap<(u32, u64), Arc<BrirBank>>>,
}

impl DiskBanks {
    pub fn open(cache: &Path) -> Result<Self> {
        let path = cache.join(ROOMS_FILE);
        if !path.exists() {
            return Err(binscene_core::Error::config(
                "cache",
                format!("{} has no {ROOMS_FILE}; run `binscene rooms` first", cache.display()),
            )
            .into());
        }
        Ok(DiskBanks {
            root: cache.to_path_buf(),
            config: read_json(&path)?,
            loaded: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn config(&self) -> &RoomsConfig {
        &self.config
    }

    fn load(&self, room_id: u32, distance: f64) -> Result<BrirBank> {
        let dir = room_dir("brir", &self.root, room_id, distance);
        if !dir.is_dir() {
            return Err(binscene_core::Error::config(
                "cache",
                format!("no BRIRs for room {room_id} at {distance} m under {}", self.root.display()),
            )
            .into());
        }
        let mut sidecars: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        sidecars.sort();
        let mut listener = None;
        let mut brirs = Vec::with_capacity(sidecars.len());
        for s in sidecars {
            let meta: BrirSidecar = read_json(&s)?;
            listener = Some(meta.listener);
            brirs.push(Brir {
                response: wav::read_binaural(&s.with_extension("wav"))?,
                azimuth_label: meta.azimuth_label,
                room_id: meta.room_id,
                distance: meta.distance,
            });
        }
        let bank = BrirBank::new(room_id, distance, brirs)?;
        Ok(match listener {
            Some(l) => bank.with_listener(l),
            None => bank,
        })
    }
}

impl BankProvider for DiskBanks {
    fn room_ids(&self) -> Vec<u32> {
        (0..self.config.rooms).collect()
    }

    fn bank(&self, room_id: u32, distance: f64) -> binscene_core::Result<Arc<BrirBank>> {
        let key = (room_id, (distance * 1000.0).round() as u64);
        if let Some(b) = self.loaded.lock().expect("bank lock").get(&key) {
            return Ok(b.clone());
        }
        let bank = Arc::new(self.load(room_id, distance).map_err(|e| match e {
            CliError::Core(e) => e,
            other => binscene_core::Error::invalid(other.to_string()),
        })?);
        Ok(self.loaded.lock().expect("bank lock").entry(key).or_insert(bank).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RoomsConfig {
        RoomsConfig {
            rooms: 1,
            distances: vec![1.0, 1.5],
            t60: vec![0.2],
            max_order: 2,
            late_tail: false,
            ..Default::default()
        }
    }

    #[test]
    fn cache_is_idempotent_and_readable() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let first = build_cache(&cfg, Some(&[1.0]), dir.path()).unwrap();
        assert_eq!(first.jobs, 72);
        assert_eq!(first.rirs_written, 72);
        assert_eq!(first.brirs_written, 37);
        let again = build_cache(&cfg, Some(&[1.0]), dir.path()).unwrap();
        assert_eq!(again.cached, 72);
        assert_eq!(again.rirs_written, 0);

        let banks = DiskBanks::open(dir.path()).unwrap();
        let bank = banks.bank(0, 1.0).unwrap();
        assert_eq!(bank.iter().count(), 37);
        assert!(bank.listener().is_some());
        assert!(banks.bank(0, 1.5).is_err());

        // The cached BRIR equals a fresh render of the same job.
        let room = cfg.room(0).unwrap();
        let listener = cfg.listener(&room).unwrap();
        let job = cfg.rir_jobs().into_iter().find(|j| j.label == Some(30) && j.distance == 1.0).unwrap();
        let (_, fresh) = run_rir_job(&cfg, &room, listener, &job, &cfg.load_hrirs().unwrap()).unwrap();
        let cached = bank.get(30).unwrap();
        let fresh = fresh.unwrap().response;
        for (a, b) in cached.response.left().samples().iter().zip(fresh.left().samples()) {
            assert!((a - b).abs() < 1e-6);
        }

        let other = RoomsConfig { seed: 9, ..cfg.clone() };
        assert!(matches!(
            build_cache(&other, None, dir.path()),
            Err(CliError::Core(binscene_core::Error::Config { .. }))
        ));
        assert!(build_cache(&cfg, Some(&[2.0]), dir.path()).is_err());
    }
}
