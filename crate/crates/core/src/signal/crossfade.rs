use std::f64::consts::PI;

use super::AudioBuffer;
use crate::error::{Error, Result};

/// Fade-out and fade-in gains for an `overlap`-sample raised-cosine
/// crossfade. The pair sums to exactly 1 at every sample.
pub fn crossfade_gains(overlap: usize) -> (Vec<f64>, Vec<f64>) {
    let fade_in: Vec<f64> = (0..overlap)
        .map(|i| 0.5 - 0.5 * (PI * (i as f64 + 0.5) / overlap as f64).cos())
        .collect();
    let fade_out = fade_in.iter().map(|g| 1.0 - g).collect();
    (fade_out, fade_in)
}

/// Joins segments end to end, overlapping each adjacent pair by `overlap`
/// samples under amplitude-complementary gains.
pub fn crossfade_concat(segments: &[AudioBuffer], overlap: usize) -> Result<AudioBuffer> {
    let first = segments
        .first()
        .ok_or_else(|| Error::invalid("crossfade needs at least one segment"))?;
    let rate = first.rate();
    for (i, s) in segments.iter().enumerate() {
        if s.rate() != rate {
            return Err(Error::invalid(format!(
                "segment {i} is at {} Hz, expected {rate} Hz",
                s.rate()
            )));
        }
        if s.len() < overlap {
            return Err(Error::invalid(format!(
                "segment {i} has {} samples, shorter than the {overlap}-sample overlap",
                s.len()
            )));
        }
    }
    if segments.len() == 1 {
        return Ok(first.clone());
    }

    let (fade_out, fade_in) = crossfade_gains(overlap);
    let total: usize =
        segments.iter().map(|s| s.len()).sum::<usize>() - (segments.len() - 1) * overlap;
    let mut out: Vec<f64> = Vec::with_capacity(total);
    out.extend_from_slice(first.samples());
    for seg in &segments[1..] {
        let tail_start = out.len() - overlap;
        for (k, o) in out[tail_start..].iter_mut().enumerate() {
            *o = *o * fade_out[k] + seg.samples()[k] * fade_in[k];
        }
        out.extend_from_slice(&seg.samples()[overlap..]);
    }
    debug_assert_eq!(out.len(), total);
    Ok(AudioBuffer::from_vec(out, rate))
}
