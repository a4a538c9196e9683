//! Image-source simulation with a stochastic late tail.

use serde::{Deserialize, Serialize};

use super::{t60_to_absorption, MicArray, Point3, RoomSpec};
use crate::error::{Error, Result};
use crate::signal::{AudioBuffer, Rng, SPEED_OF_SOUND};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RirOptions {
    /// Highest reflection order rendered deterministically.
    pub max_order: u32,
    /// Append the exponentially decaying noise tail after the image
    /// sources stop being complete.
    pub late_tail: bool,
    /// Per-reflection energy absorption to use instead of the value
    /// derived from the room's T60. `Some(1.0)` gives an anechoic response.
    pub absorption_override: Option<f64>,
}

impl Default for RirOptions {
    fn default() -> Self {
        Self {
            max_order: 12,
            late_tail: true,
            absorption_override: None,
        }
    }
}

impl RirOptions {
    pub fn anechoic() -> Self {
        Self {
            max_order: 0,
            late_tail: false,
            absorption_override: Some(1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiChannelRir {
    pub channels: Vec<AudioBuffer>,
    pub rate: u32,
    pub source: Point3,
    pub listener: Point3,
    /// Direct-path arrival at the centre capsule, in samples.
    pub direct_sample_index: usize,
}

impl MultiChannelRir {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self) -> &AudioBuffer {
        &self.channels[0]
    }
}

/// A mirrored copy of the source. `index` counts reflections per axis with
/// sign; `order` is the total number of wall reflections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageSource {
    pub index: [i32; 3],
    pub order: u32,
    pub position: Point3,
}

/// Position along one axis of image `i` of a source at `s` between walls
/// at 0 and `extent`.
fn image_coordinate(i: i32, s: f64, extent: f64) -> f64 {
    if i.rem_euclid(2) == 0 {
        i as f64 * extent + s
    } else {
        i as f64 * extent + extent - s
    }
}

/// All images with reflection order between `min_order` and `max_order`.
pub fn image_sources(room: &RoomSpec, source: Point3, min_order: u32, max_order: u32) -> Vec<ImageSource> {
    let dims = room.dimensions();
    let src = [source.x, source.y, source.z];
    let k = max_order as i32;
    let mut out = Vec::new();
    for i in -k..=k {
        let ri = i.abs();
        for j in -(k - ri)..=(k - ri) {
            let rj = j.abs();
            for l in -(k - ri - rj)..=(k - ri - rj) {
                let order = (ri + rj + l.abs()) as u32;
                if order < min_order {
                    continue;
                }
                let idx = [i, j, l];
                let p: Vec<f64> = (0..3)
                    .map(|a| image_coordinate(idx[a], src[a], dims[a]))
                    .collect();
                out.push(ImageSource {
                    index: idx,
                    order,
                    position: Point3::new(p[0], p[1], p[2]),
                });
            }
        }
    }
    out
}

/// Simulates the response at every capsule of `array` centred on
/// `listener`.
///
/// Images up to `max_order` are placed with 2-tap linear fractional delay
/// and amplitude `beta^order / d`. Image contributions stop at the earliest
/// arrival of an order `max_order + 1` image, where the set of images is no
/// longer complete; from there on each capsule gets an independent Gaussian
/// tail whose energy decays by 60 dB over the room's T60, level-matched to
/// the reflected energy just before the transition. Walls reflect with
/// `beta = sqrt(1 - a)` for the Sabine coefficient `a` of the room.
pub fn simulate_rir(
    room: &RoomSpec,
    source: Point3,
    listener: Point3,
    array: &MicArray,
    rate: u32,
    opts: &RirOptions,
    rng: &mut Rng,
) -> Result<MultiChannelRir> {
    if rate == 0 {
        return Err(Error::invalid("sample rate must be positive"));
    }
    if array.is_empty() {
        return Err(Error::invalid("microphone array has no capsules"));
    }
    for (name, p) in [("source", source), ("listener", listener)] {
        if !room.contains(p) {
            return Err(Error::invalid(format!(
                "{name} ({:.3}, {:.3}, {:.3}) is not strictly inside the room",
                p.x, p.y, p.z
            )));
        }
    }
    let capsules: Vec<Point3> = array.capsules.iter().map(|c| listener.add(*c)).collect();
    if let Some(c) = capsules.iter().find(|c| !room.contains(**c)) {
        return Err(Error::invalid(format!(
            "capsule at ({:.3}, {:.3}, {:.3}) is outside the room",
            c.x, c.y, c.z
        )));
    }
    let min_dist = capsules
        .iter()
        .map(|c| c.distance(source))
        .fold(f64::INFINITY, f64::min);
    if min_dist < 0.05 {
        return Err(Error::invalid(format!(
            "source is {min_dist:.3} m from a capsule; at least 0.05 m required"
        )));
    }

    let beta = match opts.absorption_override {
        Some(a) if (0.0..=1.0).contains(&a) => (1.0 - a).sqrt(),
        Some(a) => return Err(Error::invalid(format!("absorption {a} outside [0, 1]"))),
        None => (1.0 - t60_to_absorption(room)?).sqrt(),
    };

    let fs = rate as f64;
    let center = capsules[0];
    let direct_dist = center.distance(source);
    let direct_sample_index = (fs * direct_dist / SPEED_OF_SOUND).round() as usize;

    // Transition: first arrival of an image the simulation does not render.
    let horizon = image_sources(room, source, opts.max_order + 1, opts.max_order + 1)
        .iter()
        .map(|im| im.position.distance(center))
        .fold(f64::INFINITY, f64::min);
    let transition = (fs * horizon / SPEED_OF_SOUND).floor() as usize;

    let tail_len = if opts.late_tail {
        (room.t60 * fs).ceil() as usize
    } else {
        0
    };
    let max_direct = capsules
        .iter()
        .map(|c| (fs * c.distance(source) / SPEED_OF_SOUND).ceil() as usize)
        .max()
        .unwrap_or(0);
    let len = if opts.late_tail {
        transition + tail_len
    } else {
        transition
    }
    .max(max_direct + 2);

    let images = if beta > 0.0 {
        image_sources(room, source, 0, opts.max_order)
    } else {
        image_sources(room, source, 0, 0)
    };

    let mut channels = Vec::with_capacity(capsules.len());
    let mut reflected: Vec<Vec<f64>> = Vec::with_capacity(capsules.len());
    for cap in &capsules {
        let mut h = vec![0.0; len];
        let mut refl = vec![0.0; len];
        for im in &images {
            let d = im.position.distance(*cap);
            let t = fs * d / SPEED_OF_SOUND;
            let n0 = t.floor() as usize;
            if im.order > 0 && n0 + 1 >= transition {
                continue;
            }
            if n0 + 1 >= len {
                continue;
            }
            let amp = beta.powi(im.order as i32) / d;
            let frac = t - n0 as f64;
            h[n0] += amp * (1.0 - frac);
            h[n0 + 1] += amp * frac;
            if im.order > 0 {
                refl[n0] += amp * (1.0 - frac);
                refl[n0 + 1] += amp * frac;
            }
        }
        channels.push(h);
        reflected.push(refl);
    }

    if opts.late_tail && beta > 0.0 && transition < len {
        // Mean reflected energy per sample over the 20 ms before the
        // transition, on the centre capsule.
        let win = ((0.02 * fs) as usize).min(transition).max(1);
        let e0: f64 = reflected[0][transition - win..transition]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            / win as f64;
        let decay = (1e6f64).ln() / (room.t60 * fs);
        for (c, h) in channels.iter_mut().enumerate() {
            let mut tail_rng = rng.derive(&format!("tail/{c}"));
            for (k, v) in h[transition..].iter_mut().enumerate() {
                let envelope = (e0 * (-decay * k as f64).exp()).sqrt();
                *v += envelope * tail_rng.normal();
            }
        }
    }

    Ok(MultiChannelRir {
        channels: channels
            .into_iter()
            .map(|h| AudioBuffer::from_vec(h, rate))
            .collect(),
        rate,
        source,
        listener,
        direct_sample_index,
    })
}
