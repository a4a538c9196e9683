use serde::{Deserialize, Serialize};

use super::{frontal_azimuths, snap_to_grid, DoaTrack, HrirSet};
use crate::error::{Error, Result};
use crate::room::MultiChannelRir;
use crate::signal::{convolve_into, AudioBuffer, BinauralBuffer, Rng};

/// Two-ear room response for one source direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Brir {
    pub response: BinauralBuffer,
    pub azimuth_label: i32,
    pub room_id: u32,
    /// Talker distance in metres.
    pub distance: f64,
}

impl Brir {
    pub fn rate(&self) -> u32 {
        self.response.rate()
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }
}

/// Projects the centre-capsule response onto two ears: every sample is
/// replaced by the HRIR of its analysed direction, scaled by the sample.
/// Diffuse samples take a uniformly drawn grid direction.
pub fn render_brir(
    rir: &MultiChannelRir,
    track: &DoaTrack,
    hrirs: &HrirSet,
    azimuth_label: i32,
    room_id: u32,
    distance: f64,
    rng: &mut Rng,
) -> Result<Brir> {
    let center = rir.center();
    if track.len() != center.len() {
        return Err(Error::invalid(format!(
            "direction track has {} samples, response has {}",
            track.len(),
            center.len()
        )));
    }
    if hrirs.rate() != center.rate() {
        return Err(Error::invalid(format!(
            "HRIRs at {} Hz cannot render a {} Hz response",
            hrirs.rate(),
            center.rate()
        )));
    }
    let grid: Vec<i32> = frontal_azimuths().collect();
    let out_len = center.len() + hrirs.filter_len() - 1;
    let mut left = vec![0.0; out_len];
    let mut right = vec![0.0; out_len];
    for (n, (&g, az)) in center.samples().iter().zip(&track.azimuth).enumerate() {
        if g == 0.0 {
            continue;
        }
        let dir = match az {
            Some(a) => snap_to_grid(*a),
            None => grid[rng.index(grid.len())],
        };
        let h = hrirs.get(dir).ok_or(Error::MissingAzimuth(dir))?;
        convolve_into(&mut left, n, &[g], h.left().samples(), 1.0);
        convolve_into(&mut right, n, &[g], h.right().samples(), 1.0);
    }
    let rate = center.rate();
    Ok(Brir {
        response: BinauralBuffer::new(
            AudioBuffer::new(left, rate)?,
            AudioBuffer::new(right, rate)?,
        )?,
        azimuth_label,
        room_id,
        distance,
    })
}

/// Inverse-distance amplitude correction to a new talker distance.
pub fn distance_scale(brir: &Brir, target_distance: f64) -> Result<Brir> {
    if !(brir.distance > 0.0 && target_distance > 0.0) {
        return Err(Error::invalid(format!(
            "distances must be positive ({} -> {target_distance})",
            brir.distance
        )));
    }
    Ok(Brir {
        response: brir.response.scaled(brir.distance / target_distance),
        distance: target_distance,
        ..brir.clone()
    })
}
