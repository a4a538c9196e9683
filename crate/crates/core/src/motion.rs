//! Moving talkers: azimuth trajectories on the frontal grid and their
//! rendering through per-direction BRIRs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::binaural::{frontal_azimuths, is_grid_azimuth, Brir, HrirSet, FRONTAL_COUNT};
use crate::error::{Error, Result};
use crate::room::Point3;
use crate::signal::{convolve_slices, crossfade_concat, AudioBuffer, BinauralBuffer, Ear, Rng};

/// Length of every utterance and trajectory, seconds.
pub const UTTERANCE_SECONDS: f64 = 2.4;
pub const UTTERANCE_SAMPLES: usize = 38_400;
/// 5 ms at 16 kHz.
pub const CROSSFADE_SAMPLES: usize = 80;
pub const STEP_DEG: i32 = 5;
pub const VELOCITY_RANGE: (f64, f64) = (8.0, 15.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub start_time: f64,
    pub azimuth: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_azimuth: i32,
    /// +1 towards positive azimuths, -1 towards negative.
    pub direction: i8,
    /// Degrees per second.
    pub velocity: f64,
    pub steps: Vec<TrajectoryStep>,
    pub duration: f64,
}

impl Trajectory {
    /// Walks the grid in 5 degree steps with a dwell of `5 / velocity`
    /// seconds, reversing direction at +-90.
    pub fn build(start_azimuth: i32, direction: i8, velocity: f64, duration: f64) -> Result<Self> {
        if !is_grid_azimuth(start_azimuth) {
            return Err(Error::invalid(format!(
                "start azimuth {start_azimuth} is off the frontal grid"
            )));
        }
        if direction != 1 && direction != -1 {
            return Err(Error::invalid("direction must be +1 or -1"));
        }
        if !(velocity > 0.0 && duration > 0.0) {
            return Err(Error::invalid("velocity and duration must be positive"));
        }
        let dwell = STEP_DEG as f64 / velocity;
        let mut steps = Vec::new();
        let mut az = start_azimuth;
        let mut dir = direction as i32;
        let mut k = 0usize;
        loop {
            let t = k as f64 * dwell;
            if t >= duration - 1e-9 {
                break;
            }
            steps.push(TrajectoryStep {
                start_time: t,
                azimuth: az,
            });
            if !(-90..=90).contains(&(az + dir * STEP_DEG)) {
                dir = -dir;
            }
            az += dir * STEP_DEG;
            k += 1;
        }
        Ok(Self {
            start_azimuth,
            direction,
            velocity,
            steps,
            duration,
        })
    }

    /// A talker that never moves.
    pub fn stationary(azimuth: i32, duration: f64) -> Result<Self> {
        if !is_grid_azimuth(azimuth) {
            return Err(Error::invalid(format!("azimuth {azimuth} is off the frontal grid")));
        }
        Ok(Self {
            start_azimuth: azimuth,
            direction: 1,
            velocity: 0.0,
            steps: vec![TrajectoryStep {
                start_time: 0.0,
                azimuth,
            }],
            duration,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() || self.steps[0].start_time != 0.0 {
            return Err(Error::invalid("trajectory must start at t = 0"));
        }
        for w in self.steps.windows(2) {
            if (w[1].azimuth - w[0].azimuth).abs() != STEP_DEG {
                return Err(Error::invalid("consecutive azimuths must differ by 5 degrees"));
            }
            if w[1].start_time <= w[0].start_time {
                return Err(Error::invalid("step times must increase"));
            }
        }
        if let Some(s) = self.steps.iter().find(|s| !is_grid_azimuth(s.azimuth)) {
            return Err(Error::invalid(format!("azimuth {} is off the grid", s.azimuth)));
        }
        Ok(())
    }

    /// Azimuth of the step active at time `t`.
    pub fn at(&self, t: f64) -> Result<i32> {
        if !(t >= 0.0 && t <= self.duration + 1e-9) {
            return Err(Error::invalid(format!(
                "time {t} s outside [0, {}] s",
                self.duration
            )));
        }
        let i = self.steps.partition_point(|s| s.start_time <= t);
        Ok(self.steps[i.max(1) - 1].azimuth)
    }
}

pub fn sample_trajectory(rng: &mut Rng) -> Trajectory {
    let grid: Vec<i32> = frontal_azimuths().collect();
    let start = grid[rng.index(grid.len())];
    let direction = if rng.coin() { 1 } else { -1 };
    let velocity = rng.uniform(VELOCITY_RANGE.0, VELOCITY_RANGE.1);
    Trajectory::build(start, direction, velocity, UTTERANCE_SECONDS)
        .expect("sampled parameters are in range")
}

pub fn trajectory_at(traj: &Trajectory, t: f64) -> Result<i32> {
    traj.at(t)
}

/// BRIRs for every frontal azimuth of one (room, distance) pair.
#[derive(Clone, Debug)]
pub struct BrirBank {
    room_id: u32,
    distance: f64,
    listener: Option<Point3>,
    entries: BTreeMap<i32, Brir>,
}

impl BrirBank {
    pub fn new(room_id: u32, distance: f64, brirs: impl IntoIterator<Item = Brir>) -> Result<Self> {
        let mut entries: BTreeMap<i32, Brir> = brirs.into_iter().map(|b| (b.azimuth_label, b)).collect();
        if let Some(missing) = frontal_azimuths().find(|a| !entries.contains_key(a)) {
            return Err(Error::MissingAzimuth(missing));
        }
        if entries.len() != FRONTAL_COUNT {
            return Err(Error::invalid("bank holds azimuths off the frontal grid"));
        }
        let first = entries.values().next().unwrap();
        if entries.values().any(|b| b.rate() != first.rate()) {
            return Err(Error::invalid("bank BRIRs differ in sample rate"));
        }
        // Trailing zeros leave a response unchanged; pad to a common length.
        let len = entries.values().map(Brir::len).max().unwrap();
        for b in entries.values_mut() {
            if b.len() < len {
                let rate = b.rate();
                let r = std::mem::replace(&mut b.response, BinauralBuffer::zeros(0, rate));
                b.response = r.resized(len);
            }
        }
        Ok(Self {
            room_id,
            distance,
            listener: None,
            entries,
        })
    }

    /// Anechoic bank: every BRIR is the HRIR itself.
    pub fn free_field(hrirs: &HrirSet, room_id: u32, distance: f64) -> Result<Self> {
        let brirs = hrirs.iter().map(|(az, h)| Brir {
            response: h.clone(),
            azimuth_label: az,
            room_id,
            distance,
        });
        Self::new(room_id, distance, brirs)
    }

    pub fn with_listener(mut self, listener: Point3) -> Self {
        self.listener = Some(listener);
        self
    }

    pub fn listener(&self) -> Option<Point3> {
        self.listener
    }

    pub fn get(&self, azimuth: i32) -> Result<&Brir> {
        self.entries.get(&azimuth).ok_or(Error::MissingAzimuth(azimuth))
    }

    pub fn room_id(&self) -> u32 {
        self.room_id
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn rate(&self) -> u32 {
        self.entries.values().next().unwrap().rate()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Brir> {
        self.entries.values()
    }
}

/// A run of samples rendered through one BRIR.
struct Block {
    azimuth: i32,
    start: usize,
    end: usize,
}

fn blocks(traj: &Trajectory, rate: u32, len: usize) -> Vec<Block> {
    let mut out: Vec<Block> = Vec::new();
    for (i, step) in traj.steps.iter().enumerate() {
        let start = (step.start_time * rate as f64).round() as usize;
        let end = traj
            .steps
            .get(i + 1)
            .map_or(len, |n| (n.start_time * rate as f64).round() as usize)
            .min(len);
        if start >= end {
            continue;
        }
        out.push(Block {
            azimuth: step.azimuth,
            start,
            end,
        });
    }
    // A block shorter than the crossfade cannot be faded in and out; it is
    // absorbed by its predecessor.
    let mut merged: Vec<Block> = Vec::with_capacity(out.len());
    for b in out {
        match merged.last_mut() {
            Some(prev) if b.end - b.start < CROSSFADE_SAMPLES => prev.end = b.end,
            _ => merged.push(b),
        }
    }
    merged
}

/// Renders a dry utterance along a trajectory.
///
/// For every step, the utterance is convolved with that step's BRIR and the
/// output over the step's interval, extended 5 ms into the next step, forms
/// one segment. Segments are joined with 80-sample raised-cosine crossfades
/// and the result is exactly as long as the input.
pub fn render_moving_source(dry: &AudioBuffer, traj: &Trajectory, bank: &BrirBank) -> Result<BinauralBuffer> {
    let rate = bank.rate();
    if dry.rate() != rate {
        return Err(Error::invalid(format!(
            "utterance at {} Hz, BRIRs at {rate} Hz",
            dry.rate()
        )));
    }
    let want = (traj.duration * rate as f64).round() as usize;
    if dry.len() != want {
        return Err(Error::invalid(format!(
            "utterance has {} samples, trajectory needs {want}",
            dry.len()
        )));
    }
    let len = dry.len();
    let blocks = blocks(traj, rate, len);
    let x = dry.samples();

    let mut ears = Vec::with_capacity(2);
    for ear in Ear::BOTH {
        let mut segments = Vec::with_capacity(blocks.len());
        for (i, b) in blocks.iter().enumerate() {
            let h = bank.get(b.azimuth)?.response.ear(ear).samples();
            let stop = if i + 1 < blocks.len() {
                (b.end + CROSSFADE_SAMPLES).min(len)
            } else {
                len
            };
            // Output samples in [b.start, stop) only see input from here on.
            let from = b.start.saturating_sub(h.len() - 1);
            let y = convolve_slices(&x[from..stop], h);
            segments.push(AudioBuffer::new(y[b.start - from..stop - from].to_vec(), rate)?);
        }
        let joined = crossfade_concat(&segments, CROSSFADE_SAMPLES)?;
        debug_assert_eq!(joined.len(), len);
        ears.push(joined);
    }
    let right = ears.pop().unwrap();
    let left = ears.pop().unwrap();
    BinauralBuffer::new(left, right)
}
