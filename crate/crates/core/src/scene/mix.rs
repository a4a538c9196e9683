use super::{load_utterance, UtteranceRef, DRY_RMS};
use crate::binaural::snap_to_grid;
use crate::error::{Error, Result};
use crate::motion::{render_moving_source, BrirBank, Trajectory, UTTERANCE_SAMPLES, UTTERANCE_SECONDS};
use crate::room::{signed_azimuth, RING_DIRECTIONS, RING_STEP_DEG};
use crate::signal::{AudioBuffer, BinauralBuffer, Rng, PIPELINE_RATE};

/// Each babble utterance starts this far (as a fraction of its
/// predecessor's duration) into the previous one: 70% overlap.
pub const BABBLE_START_FRACTION: f64 = 0.3;

/// Pooled-power SNR of `reference` over `interferer`, dB.
pub fn measured_snr_db(reference: &BinauralBuffer, interferer: &BinauralBuffer) -> f64 {
    10.0 * (reference.power() / interferer.power()).log10()
}

/// Scales `interferer` so that the pooled-power ratio of `reference` to it
/// equals `snr_db`. Returns the scaled interferer and the gain.
pub fn mix_at_snr(
    reference: &BinauralBuffer,
    interferer: &BinauralBuffer,
    snr_db: f64,
) -> Result<(BinauralBuffer, f64)> {
    if reference.len() != interferer.len() || reference.rate() != interferer.rate() {
        return Err(Error::invalid(format!(
            "shape mismatch: {} samples at {} Hz vs {} samples at {} Hz",
            reference.len(),
            reference.rate(),
            interferer.len(),
            interferer.rate()
        )));
    }
    let p_ref = reference.power();
    let p_int = interferer.power();
    if p_ref == 0.0 || p_int == 0.0 {
        return Err(Error::invalid("cannot set the SNR of a zero-power signal"));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid(format!("SNR must be finite, got {snr_db}")));
    }
    let gain = (p_ref / (p_int * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok((interferer.scaled(gain), gain))
}

/// Start times of consecutive utterances of one babble stream.
pub fn babble_stream_starts(durations: &[f64]) -> Vec<f64> {
    let mut t = 0.0;
    let mut out = Vec::with_capacity(durations.len());
    for d in durations {
        out.push(t);
        t += BABBLE_START_FRACTION * d;
    }
    out
}

/// Number of babble locations, uniform on the inclusive range.
pub fn babble_source_count(sources: (usize, usize), rng: &mut Rng) -> Result<usize> {
    let (lo, hi) = sources;
    if lo == 0 || hi < lo {
        return Err(Error::config("babble_sources", format!("invalid range [{lo}, {hi}]")));
    }
    Ok(rng.int_inclusive(lo as i64, hi as i64) as usize)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BabbleField {
    pub signal: BinauralBuffer,
    pub azimuths: Vec<i32>,
    pub utterances: Vec<String>,
}

/// Diffuse babble: `n` static sources on the 72-direction ring, each a
/// stream of overlapping utterances drawn without replacement from `pool`.
pub fn build_babble_field(
    pool: &[UtteranceRef],
    bank: &BrirBank,
    sources: (usize, usize),
    rng: &mut Rng,
) -> Result<BabbleField> {
    let n = babble_source_count(sources, rng)?;
    let azimuths: Vec<i32> = (0..n)
        .map(|_| {
            let ring = rng.index(RING_DIRECTIONS) as f64 * RING_STEP_DEG;
            snap_to_grid(signed_azimuth(ring))
        })
        .collect();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    rng.shuffle(&mut order);
    let mut next = order.into_iter();

    let fs = PIPELINE_RATE as f64;
    let mut used = Vec::new();
    let mut field = BinauralBuffer::zeros(UTTERANCE_SAMPLES, PIPELINE_RATE);
    for &az in &azimuths {
        let mut stream = vec![0.0; UTTERANCE_SAMPLES];
        let mut start = 0usize;
        while start < UTTERANCE_SAMPLES {
            let i = next.next().ok_or_else(|| {
                Error::PoolExhausted(format!(
                    "babble field of {n} sources needs more than {} utterances",
                    pool.len()
                ))
            })?;
            let utt = &pool[i];
            let x = load_utterance(utt)?;
            let rms = x.rms();
            if rms == 0.0 {
                return Err(Error::invalid(format!("babble utterance {} is silent", utt.path.display())));
            }
            let g = DRY_RMS / rms;
            for (o, v) in stream[start..].iter_mut().zip(x.samples()) {
                *o += g * v;
            }
            used.push(utt.path.display().to_string());
            start += (BABBLE_START_FRACTION * x.len() as f64).round().max(1.0) as usize;
        }
        let dry = AudioBuffer::new(stream, PIPELINE_RATE)?;
        let still = Trajectory::stationary(az, UTTERANCE_SECONDS)?;
        let wet = render_moving_source(&dry, &still, bank)?;
        field = field.add(&wet)?;
    }
    debug_assert!((fs * UTTERANCE_SECONDS).round() as usize == UTTERANCE_SAMPLES);
    Ok(BabbleField {
        signal: field,
        azimuths,
        utterances: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(seed: u64, scale: f64) -> BinauralBuffer {
        let mut rng = Rng::new(seed);
        let mut ch = || {
            AudioBuffer::new((0..4000).map(|_| scale * rng.normal()).collect(), 16_000).unwrap()
        };
        let l = ch();
        let r = ch();
        BinauralBuffer::new(l, r).unwrap()
    }

    #[test]
    fn closed_form_gains() {
        let a = noise(1, 0.1);
        let b = a.swapped();
        let (_, g) = mix_at_snr(&a, &b, 0.0).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
        let (_, g) = mix_at_snr(&a, &b, 5.0).unwrap();
        assert!((g - 10f64.powf(-0.25)).abs() < 1e-12);
        assert!((g - 0.5623).abs() < 1e-4);
        let (_, g) = mix_at_snr(&a, &b.scaled(2.0), 0.0).unwrap();
        assert!((g - 0.5).abs() < 1e-12);
    }

    #[test]
    fn achieved_snr_matches_request() {
        let mut rng = Rng::new(4);
        for k in 0..50 {
            let a = noise(2 * k, rng.uniform(0.01, 1.0));
            let b = noise(2 * k + 1, rng.uniform(0.01, 1.0));
            let snr = rng.uniform(-2.5, 15.0);
            let (s, _) = mix_at_snr(&a, &b, snr).unwrap();
            assert!((measured_snr_db(&a, &s) - snr).abs() < 0.01);
        }
    }

    #[test]
    fn zero_power_rejected() {
        let a = noise(1, 0.1);
        let z = BinauralBuffer::zeros(4000, 16_000);
        assert!(mix_at_snr(&a, &z, 0.0).is_err());
        assert!(mix_at_snr(&z, &a, 0.0).is_err());
    }

    #[test]
    fn stream_starts_follow_overlap_rule() {
        let s = babble_stream_starts(&[1.0; 5]);
        for (a, b) in s.iter().zip([0.0, 0.3, 0.6, 0.9, 1.2]) {
            assert!((a - b).abs() < 1e-12);
        }
        let s = babble_stream_starts(&[2.0, 1.0, 3.0]);
        assert!((s[1] - 0.6).abs() < 1e-12 && (s[2] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn source_count_is_uniform() {
        let mut rng = Rng::new(12);
        let mut counts = [0usize; 9];
        for _ in 0..10_000 {
            counts[babble_source_count((3, 8), &mut rng).unwrap()] += 1;
        }
        for c in &counts[3..=8] {
            assert!((*c as f64 / 10_000.0 - 1.0 / 6.0).abs() < 0.02);
        }
        assert_eq!(counts[..3].iter().sum::<usize>(), 0);
    }
}
