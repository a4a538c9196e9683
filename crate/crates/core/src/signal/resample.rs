use std::f64::consts::PI;

use super::AudioBuffer;
use crate::error::{Error, Result};

const TAPS: i64 = 64;
const HALF: i64 = TAPS / 2;

/// Band-limited sample-rate conversion with a 64-tap Blackman-windowed sinc
/// kernel, cutoff at 0.45 of the lower of the two rates.
pub fn resample(x: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::invalid("target sample rate must be positive"));
    }
    let rate = x.rate();
    if target_rate == rate {
        return Ok(x.clone());
    }
    let out_len = (x.len() as f64 * target_rate as f64 / rate as f64).round() as usize;
    // Cutoff in cycles per input sample.
    let fc = 0.45 * rate.min(target_rate) as f64 / rate as f64;
    let input = x.samples();
    let n_in = input.len() as i64;

    let mut out = Vec::with_capacity(out_len);
    let mut kernel = [0.0f64; TAPS as usize];
    for n in 0..out_len {
        let t = n as f64 * rate as f64 / target_rate as f64;
        let base = t.floor() as i64;
        let first = base - HALF + 1;
        let mut norm = 0.0;
        for (j, k) in kernel.iter_mut().enumerate() {
            let u = t - (first + j as i64) as f64;
            *k = windowed_sinc(u, fc);
            norm += *k;
        }
        let mut acc = 0.0;
        for (j, k) in kernel.iter().enumerate() {
            let idx = first + j as i64;
            if (0..n_in).contains(&idx) {
                acc += input[idx as usize] * k;
            }
        }
        out.push(acc / norm);
    }
    Ok(AudioBuffer::from_vec(out, target_rate))
}

fn windowed_sinc(u: f64, fc: f64) -> f64 {
    if u.abs() >= HALF as f64 {
        return 0.0;
    }
    let arg = 2.0 * fc * u;
    let sinc = if arg.abs() < 1e-12 {
        1.0
    } else {
        (PI * arg).sin() / (PI * arg)
    };
    let phase = PI * u / HALF as f64;
    let window = 0.42 + 0.5 * phase.cos() + 0.08 * (2.0 * phase).cos();
    2.0 * fc * sinc * window
}
