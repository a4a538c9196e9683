//! Room-to-BRIR stage: which rooms, listeners and source directions are
//! simulated, and how one direction becomes a BRIR.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binaural::{is_grid_azimuth, load_hrir_pack, render_brir, sdm_analyze, Brir, HrirSet, DEFAULT_HEAD_RADIUS};
use crate::error::{Error, Result};
use crate::motion::BrirBank;
use crate::room::{
    sample_listener_for_rings, sample_room, signed_azimuth, simulate_rir, talker_ring_positions, MicArray,
    MultiChannelRir, Point3, RirOptions, RoomSpec, RING_DIRECTIONS, RING_RADII, T60_VALUES,
};
use crate::signal::{Rng, PIPELINE_RATE};

fn default_version() -> u32 {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomsConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub seed: u64,
    pub rooms: u32,
    pub distances: Vec<f64>,
    /// Reverberation times assigned to rooms in turn.
    pub t60: Vec<f64>,
    pub max_order: u32,
    #[serde(default = "default_true")]
    pub late_tail: bool,
    /// HRIR pack directory, or `synthetic`.
    pub hrir: String,
    pub head_radius: f64,
}

impl Default for RoomsConfig {
    fn default() -> Self {
        Self {
            version: 1,
            seed: 0,
            rooms: 30,
            distances: RING_RADII.to_vec(),
            t60: T60_VALUES.to_vec(),
            max_order: 12,
            late_tail: true,
            hrir: "synthetic".into(),
            head_radius: DEFAULT_HEAD_RADIUS,
        }
    }
}

/// One simulated source direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RirJob {
    pub room_id: u32,
    pub distance: f64,
    pub ring_index: usize,
    /// Signed, counter-clockwise from the front.
    pub azimuth: f64,
    /// Grid label for frontal directions, which also get a BRIR.
    pub label: Option<i32>,
}

impl RoomsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::config("version", format!("unsupported schema version {}", self.version)));
        }
        if self.rooms == 0 {
            return Err(Error::config("rooms", "at least one room is required"));
        }
        if self.distances.is_empty() {
            return Err(Error::config("distances", "at least one distance is required"));
        }
        if let Some(d) = self.distances.iter().find(|d| !RING_RADII.iter().any(|r| (*r - **d).abs() < 1e-9)) {
            return Err(Error::config("distances", format!("{d} m is not one of {RING_RADII:?}")));
        }
        if self.t60.is_empty() {
            return Err(Error::config("t60", "at least one value is required"));
        }
        if let Some(t) = self.t60.iter().find(|t| !T60_VALUES.iter().any(|v| (*v - **t).abs() < 1e-9)) {
            return Err(Error::config("t60", format!("{t} s is not one of {T60_VALUES:?}")));
        }
        if !(0.05..=0.12).contains(&self.head_radius) {
            return Err(Error::config("head_radius", format!("{} m outside [0.05, 0.12] m", self.head_radius)));
        }
        if self.hrir.is_empty() {
            return Err(Error::config("hrir", "must be a pack directory or `synthetic`"));
        }
        Ok(())
    }

    pub fn room(&self, room_id: u32) -> Result<RoomSpec> {
        if room_id >= self.rooms {
            return Err(Error::invalid(format!("room {room_id} outside 0..{}", self.rooms)));
        }
        let mut rng = Rng::new(self.seed).derive(&format!("room/{room_id}"));
        let mut room = sample_room(room_id, &mut rng);
        room.t60 = self.t60[room_id as usize % self.t60.len()];
        room.validate()?;
        Ok(room)
    }

    /// Listener position of a room, shared by every distance.
    pub fn listener(&self, room: &RoomSpec) -> Result<Point3> {
        let mut rng = Rng::new(self.seed).derive(&format!("listener/{}", room.room_id));
        sample_listener_for_rings(room, &self.distances, &mut rng)
    }

    /// Every (room, distance, direction) in canonical order.
    pub fn rir_jobs(&self) -> Vec<RirJob> {
        let mut jobs = Vec::with_capacity(self.rooms as usize * self.distances.len() * RING_DIRECTIONS);
        for room_id in 0..self.rooms {
            for &distance in &self.distances {
                for ring_index in 0..RING_DIRECTIONS {
                    let azimuth = signed_azimuth(ring_index as f64 * 5.0);
                    let label = (azimuth.abs() <= 90.0 && is_grid_azimuth(azimuth as i32)).then_some(azimuth as i32);
                    jobs.push(RirJob {
                        room_id,
                        distance,
                        ring_index,
                        azimuth,
                        label,
                    });
                }
            }
        }
        jobs
    }

    pub fn rir_options(&self) -> RirOptions {
        RirOptions {
            max_order: self.max_order,
            late_tail: self.late_tail,
            absorption_override: None,
        }
    }

    pub fn load_hrirs(&self) -> Result<HrirSet> {
        load_hrirs(&self.hrir, self.head_radius)
    }
}

/// `synthetic` or the path of an HRIR pack.
pub fn load_hrirs(spec: &str, head_radius: f64) -> Result<HrirSet> {
    if spec == "synthetic" {
        HrirSet::synthetic(head_radius)
    } else {
        let dir = Path::new(spec);
        if !dir.is_dir() {
            return Err(Error::config("hrir", format!("{spec} is neither `synthetic` nor a directory")));
        }
        load_hrir_pack(dir)
    }
}

/// Simulates one direction and, if it is frontal, renders its BRIR.
pub fn run_rir_job(
    cfg: &RoomsConfig,
    room: &RoomSpec,
    listener: Point3,
    job: &RirJob,
    hrirs: &HrirSet,
) -> Result<(MultiChannelRir, Option<Brir>)> {
    let ring = talker_ring_positions(room, listener, job.distance)?;
    let pos = ring[job.ring_index];
    if pos.outside_room {
        return Err(Error::invalid(format!(
            "room {} direction {} at {} m lies outside the room",
            room.room_id, pos.azimuth_deg, job.distance
        )));
    }
    let array = MicArray::orthogonal_triad();
    let key = format!("{}/{:.1}/{}", room.room_id, job.distance, job.ring_index);
    let root = Rng::new(cfg.seed);
    let rir = simulate_rir(
        room,
        pos.position,
        listener,
        &array,
        PIPELINE_RATE,
        &cfg.rir_options(),
        &mut root.derive(&format!("rir/{key}")),
    )?;
    let brir = match job.label {
        Some(label) => {
            let track = sdm_analyze(&rir, &array)?;
            Some(render_brir(
                &rir,
                &track,
                hrirs,
                label,
                room.room_id,
                job.distance,
                &mut root.derive(&format!("brir/{key}")),
            )?)
        }
        None => None,
    };
    Ok((rir, brir))
}

/// In-memory BRIR bank of one (room, distance), rendered in parallel.
pub fn build_bank(cfg: &RoomsConfig, room_id: u32, distance: f64, hrirs: &HrirSet) -> Result<BrirBank> {
    let room = cfg.room(room_id)?;
    let listener = cfg.listener(&room)?;
    let jobs: Vec<RirJob> = cfg
        .rir_jobs()
        .into_iter()
        .filter(|j| j.room_id == room_id && (j.distance - distance).abs() < 1e-9 && j.label.is_some())
        .collect();
    let brirs = jobs
        .par_iter()
        .map(|j| run_rir_job(cfg, &room, listener, j, hrirs).map(|(_, b)| b.expect("frontal job")))
        .collect::<Result<Vec<_>>>()?;
    Ok(BrirBank::new(room_id, distance, brirs)?.with_listener(listener))
}
