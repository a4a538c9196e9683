use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::binaural::{snap_to_grid, woodworth_itd};
use crate::error::{Error, Result};
use crate::motion::Trajectory;
use crate::signal::BinauralBuffer;

/// 50 ms at 16 kHz.
pub const DOA_FRAME: usize = 800;
/// 25 ms at 16 kHz.
pub const DOA_HOP: usize = 400;
/// Frames this far (dB) below the loudest frame keep the previous estimate.
pub const ENERGY_GATE_DB: f64 = -30.0;
const UPSAMPLE: usize = 8;

/// Per-frame azimuths on the 5 degree grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoaTrajectoryEstimate {
    pub azimuths: Vec<i32>,
    pub frame_length: usize,
    pub hop: usize,
    pub rate: u32,
}

impl DoaTrajectoryEstimate {
    pub fn len(&self) -> usize {
        self.azimuths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.azimuths.is_empty()
    }

    /// Centre of frame `f`, seconds.
    pub fn frame_time(&self, f: usize) -> f64 {
        (f * self.hop) as f64 / self.rate as f64 + self.frame_length as f64 / (2.0 * self.rate as f64)
    }
}

/// Generalised cross-correlation with phase transform, evaluated at
/// `UPSAMPLE` times the sample rate.
struct Gcc {
    n: usize,
    window: Option<Vec<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Gcc {
    fn new(frame: usize, windowed: bool) -> Self {
        let n = (2 * frame).next_power_of_two();
        let mut planner = FftPlanner::new();
        let window = windowed.then(|| {
            (0..frame)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / frame as f64).cos())
                .collect()
        });
        Self {
            n,
            window,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n * UPSAMPLE),
        }
    }

    /// Delay of `right` relative to `left` in samples (positive when the
    /// right ear lags), searched within `max_lag`.
    fn delay(&self, left: &[f64], right: &[f64], max_lag: f64) -> f64 {
        let n = self.n;
        let spec = |x: &[f64]| {
            let mut b: Vec<Complex64> = match &self.window {
                Some(w) => x.iter().zip(w).map(|(&v, &g)| Complex64::new(v * g, 0.0)).collect(),
                None => x.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            };
            b.resize(n, Complex64::default());
            self.fwd.process(&mut b);
            b
        };
        let l = spec(left);
        let r = spec(right);
        let m = n * UPSAMPLE;
        let mut cross = vec![Complex64::default(); m];
        for k in 0..n {
            let c = r[k] * l[k].conj();
            let mag = c.norm();
            let v = if mag > 1e-20 { c / mag } else { Complex64::default() };
            // Spread the spectrum into the longer buffer; the Nyquist bin
            // is split across both halves to keep the result real.
            if k < n / 2 {
                cross[k] = v;
            } else if k == n / 2 {
                cross[k] = v * 0.5;
                cross[m - n / 2] = v * 0.5;
            } else {
                cross[m - (n - k)] = v;
            }
        }
        self.inv.process(&mut cross);
        let span = (max_lag * UPSAMPLE as f64).ceil() as isize;
        let mut best = (f64::NEG_INFINITY, 0isize);
        for lag in -span..=span {
            let idx = lag.rem_euclid(m as isize) as usize;
            let v = cross[idx].re;
            if v > best.0 {
                best = (v, lag);
            }
        }
        best.1 as f64 / UPSAMPLE as f64
    }
}

/// Interaural delay of `x` in seconds over its whole length, positive when
/// the source is on the left.
pub fn estimate_itd(x: &BinauralBuffer, max_itd: f64) -> Result<f64> {
    if x.is_empty() || x.energy() == 0.0 {
        return Err(Error::SilentSignal);
    }
    let gcc = Gcc::new(x.len(), false);
    let fs = x.rate() as f64;
    Ok(gcc.delay(x.left().samples(), x.right().samples(), max_itd * fs + 1.0) / fs)
}

/// Azimuth whose Woodworth ITD equals `itd`, by bisection; ITDs beyond the
/// model's range map to +-90.
pub fn invert_woodworth(head_radius: f64, itd: f64) -> f64 {
    let max = woodworth_itd(head_radius, 90.0);
    if itd >= max {
        return 90.0;
    }
    if itd <= -max {
        return -90.0;
    }
    let (mut lo, mut hi) = (-90.0, 90.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if woodworth_itd(head_radius, mid) < itd {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Frame-wise direction of a binaural signal from its interaural delay.
pub fn doa_estimate(x: &BinauralBuffer, head_radius: f64) -> Result<DoaTrajectoryEstimate> {
    if x.len() < DOA_FRAME {
        return Err(Error::invalid(format!(
            "signal has {} samples, a frame needs {DOA_FRAME}",
            x.len()
        )));
    }
    let frames = (x.len() - DOA_FRAME) / DOA_HOP + 1;
    let fs = x.rate() as f64;
    let max_lag = woodworth_itd(head_radius, 90.0) * fs + 1.0;
    let (l, r) = (x.left().samples(), x.right().samples());
    let energy: Vec<f64> = (0..frames)
        .map(|f| {
            let s = f * DOA_HOP;
            l[s..s + DOA_FRAME]
                .iter()
                .chain(&r[s..s + DOA_FRAME])
                .map(|v| v * v)
                .sum()
        })
        .collect();
    let loudest = energy.iter().cloned().fold(0.0, f64::max);
    if loudest == 0.0 {
        return Err(Error::SilentSignal);
    }
    let gate = loudest * 10f64.powf(ENERGY_GATE_DB / 10.0);
    // Hann-tapered frames: leakage from strong harmonics would otherwise
    // dominate the whitened weak bins.
    let gcc = Gcc::new(DOA_FRAME, true);
    let raw: Vec<Option<i32>> = (0..frames)
        .map(|f| {
            if energy[f] < gate {
                return None;
            }
            let s = f * DOA_HOP;
            let d = gcc.delay(&l[s..s + DOA_FRAME], &r[s..s + DOA_FRAME], max_lag);
            Some(snap_to_grid(invert_woodworth(head_radius, d / fs)))
        })
        .collect();
    let first = raw.iter().flatten().next().copied().expect("loudest frame passes the gate");
    let mut prev = first;
    let azimuths = raw
        .into_iter()
        .map(|a| {
            prev = a.unwrap_or(prev);
            prev
        })
        .collect();
    Ok(DoaTrajectoryEstimate {
        azimuths,
        frame_length: DOA_FRAME,
        hop: DOA_HOP,
        rate: x.rate(),
    })
}

/// Mean absolute difference between estimated and true azimuths at the
/// frame centres, degrees.
pub fn doa_error(est: &DoaTrajectoryEstimate, truth: &Trajectory) -> Result<f64> {
    if est.is_empty() {
        return Err(Error::invalid("empty direction estimate"));
    }
    let mut total = 0.0;
    for (f, &az) in est.azimuths.iter().enumerate() {
        let t = est.frame_time(f).min(truth.duration);
        total += (az - truth.at(t)?).abs() as f64;
    }
    Ok(total / est.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binaural::synth_hrir;
    use crate::motion::{render_moving_source, BrirBank};
    use crate::binaural::HrirSet;
    use crate::signal::{fft_convolve, AudioBuffer, Rng};

    fn noise(n: usize, seed: u64) -> AudioBuffer {
        let mut rng = Rng::new(seed);
        AudioBuffer::new((0..n).map(|_| rng.normal() * 0.1).collect(), 16_000).unwrap()
    }

    fn spatialise(x: &AudioBuffer, az: f64) -> BinauralBuffer {
        let h = synth_hrir(0.07, az).unwrap();
        let l = fft_convolve(x, h.left()).unwrap().slice(0, x.len());
        let r = fft_convolve(x, h.right()).unwrap().slice(0, x.len());
        BinauralBuffer::new(l, r).unwrap()
    }

    #[test]
    fn midline_source_is_zero() {
        let x = noise(16_000, 1);
        let b = BinauralBuffer::new(x.clone(), x).unwrap();
        let est = doa_estimate(&b, 0.07).unwrap();
        assert_eq!(est.len(), (16_000 - 800) / 400 + 1);
        assert!(est.azimuths.iter().all(|&a| a == 0));
    }

    #[test]
    fn lateral_sources_recovered() {
        let x = noise(16_000, 2);
        for az in [-85.0, -40.0, -10.0, 25.0, 40.0, 70.0] {
            let est = doa_estimate(&spatialise(&x, az), 0.07).unwrap();
            for &a in &est.azimuths {
                assert!((a as f64 - az).abs() <= 5.0, "{a} vs {az}");
            }
        }
    }

    #[test]
    fn itd_inversion_round_trips() {
        for az in [-90.0, -33.0, 0.0, 12.5, 60.0, 89.0] {
            let back = invert_woodworth(0.07, woodworth_itd(0.07, az));
            assert!((back - az).abs() < 1e-6);
        }
        assert_eq!(invert_woodworth(0.07, 1.0), 90.0);
    }

    #[test]
    fn whole_signal_itd() {
        let x = noise(8000, 3);
        for az in [-60.0, 0.0, 35.0] {
            let itd = estimate_itd(&spatialise(&x, az), woodworth_itd(0.07, 90.0)).unwrap();
            assert!((itd - woodworth_itd(0.07, az)).abs() * 16_000.0 < 0.25);
        }
    }

    #[test]
    fn silent_input_rejected() {
        let z = BinauralBuffer::zeros(4000, 16_000);
        assert!(matches!(doa_estimate(&z, 0.07), Err(Error::SilentSignal)));
    }

    #[test]
    fn quiet_frames_inherit() {
        let mut x = noise(8000, 4).into_samples();
        x[4000..].iter_mut().for_each(|v| *v = 0.0);
        let b = spatialise(&AudioBuffer::new(x, 16_000).unwrap(), 45.0);
        let est = doa_estimate(&b, 0.07).unwrap();
        assert!(est.azimuths.iter().all(|&a| (a - 45).abs() <= 5));
    }

    #[test]
    fn error_arithmetic() {
        let t = Trajectory::build(-30, 1, 10.0, 2.4).unwrap();
        let frames = (38_400 - 800) / 400 + 1;
        let mut est = DoaTrajectoryEstimate {
            azimuths: vec![0; frames],
            frame_length: 800,
            hop: 400,
            rate: 16_000,
        };
        for f in 0..frames {
            est.azimuths[f] = t.at(est.frame_time(f)).unwrap();
        }
        assert_eq!(doa_error(&est, &t).unwrap(), 0.0);
        let shifted = DoaTrajectoryEstimate {
            azimuths: est.azimuths.iter().map(|a| a + 5).collect(),
            ..est.clone()
        };
        assert_eq!(doa_error(&shifted, &t).unwrap(), 5.0);
        let alt = DoaTrajectoryEstimate {
            azimuths: est.azimuths.iter().enumerate().map(|(i, a)| if i % 2 == 0 { a + 5 } else { a - 5 }).collect(),
            ..est.clone()
        };
        assert_eq!(doa_error(&alt, &t).unwrap(), 5.0);
        let empty = DoaTrajectoryEstimate { azimuths: vec![], ..est };
        assert!(doa_error(&empty, &t).is_err());
    }

    #[test]
    fn tracks_a_moving_source_free_field() {
        let bank = BrirBank::free_field(&HrirSet::synthetic(0.07).unwrap(), 0, 1.0).unwrap();
        let t = Trajectory::build(-30, 1, 10.0, 2.4).unwrap();
        let y = render_moving_source(&noise(38_400, 5), &t, &bank).unwrap();
        let est = doa_estimate(&y, 0.07).unwrap();
        assert!(doa_error(&est, &t).unwrap() < 10.0);
    }
}
