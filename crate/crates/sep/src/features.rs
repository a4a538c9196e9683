use binscene_core::signal::{stft, AudioBuffer, Window};

use crate::error::Result;

const MAG_FLOOR: f64 = 1e-8;

/// Per-frame interaural phase and level differences.
#[derive(Clone, Debug)]
pub struct SpatialFeatures {
    pub frames: usize,
    pub bins: usize,
    /// Wrapped to (-pi, pi], frame-major.
    pub ipd: Vec<f64>,
    /// dB, frame-major.
    pub ild: Vec<f64>,
}

impl SpatialFeatures {
    pub fn ipd_at(&self, frame: usize, bin: usize) -> f64 {
        self.ipd[frame * self.bins + bin]
    }

    pub fn ild_at(&self, frame: usize, bin: usize) -> f64 {
        self.ild[frame * self.bins + bin]
    }

    /// Network input: cos IPD, sin IPD and ILD / 20 for every bin.
    pub fn model_input(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.frames * self.bins * 3);
        for f in 0..self.frames {
            let row = f * self.bins..(f + 1) * self.bins;
            out.extend(self.ipd[row.clone()].iter().map(|p| p.cos()));
            out.extend(self.ipd[row.clone()].iter().map(|p| p.sin()));
            out.extend(self.ild[row].iter().map(|l| l / 20.0));
        }
        out
    }
}

fn wrap(phase: f64) -> f64 {
    use std::f64::consts::PI;
    let w = phase.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Rectangular-window STFT features aligned with the encoder frames.
pub fn compute_spatial_features(
    left: &AudioBuffer,
    right: &AudioBuffer,
    frame_length: usize,
    hop: usize,
) -> Result<SpatialFeatures> {
    let l = stft(left, frame_length, hop, Window::Rectangular)?;
    let r = stft(right, frame_length, hop, Window::Rectangular)?;
    let (frames, bins) = (l.frames(), l.bins());
    let mut ipd = Vec::with_capacity(frames * bins);
    let mut ild = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        for k in 0..bins {
            let (a, b) = (l.get(f, k), r.get(f, k));
            ipd.push(wrap(a.arg() - b.arg()));
            ild.push(20.0 * ((a.norm() + MAG_FLOOR) / (b.norm() + MAG_FLOOR)).log10());
        }
    }
    Ok(SpatialFeatures {
        frames,
        bins,
        ipd,
        ild,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn buf(x: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(x, 16_000).unwrap()
    }

    /// Sum of bin-centred cosines, periodic in the frame length so a delay
    /// is a circular shift inside every frame.
    fn periodic(n: usize, len: usize, delay: usize) -> Vec<f64> {
        (0..len)
            .map(|t| {
                let t = t as f64 - delay as f64;
                (1..n / 2)
                    .map(|k| (2.0 * PI * k as f64 * t / n as f64 + 0.3 * k as f64).cos() / k as f64)
                    .sum()
            })
            .collect()
    }

    #[test]
    fn identical_ears_have_no_difference() {
        let x = periodic(16, 400, 0);
        let f = compute_spatial_features(&buf(x.clone()), &buf(x), 16, 8).unwrap();
        assert_eq!(f.frames, 49);
        assert!(f.ipd.iter().all(|v| v.abs() < 1e-9));
        assert!(f.ild.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn half_amplitude_right_is_six_db() {
        let x = periodic(16, 400, 0);
        let half: Vec<f64> = x.iter().map(|v| v * 0.5).collect();
        let f = compute_spatial_features(&buf(x), &buf(half), 16, 8).unwrap();
        for fr in 0..f.frames {
            for k in 1..8 {
                assert!((f.ild_at(fr, k) - 6.0206).abs() < 1e-3);
                assert!(f.ipd_at(fr, k).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn delayed_right_gives_linear_phase() {
        let n = 16;
        let x = periodic(n, 400, 0);
        let y = periodic(n, 400, 2);
        let f = compute_spatial_features(&buf(x), &buf(y), n, 8).unwrap();
        for fr in 0..f.frames {
            for k in 1..n / 2 {
                let want = wrap(2.0 * PI * k as f64 * 2.0 / n as f64);
                let d = wrap(f.ipd_at(fr, k) - want);
                assert!(d.abs() < 1e-9, "frame {fr} bin {k}: {} vs {want}", f.ipd_at(fr, k));
            }
        }
    }

    #[test]
    fn model_input_layout() {
        let x = periodic(16, 64, 0);
        let f = compute_spatial_features(&buf(x.clone()), &buf(x), 16, 8).unwrap();
        let m = f.model_input();
        assert_eq!(m.len(), f.frames * 27);
        assert!((m[0] - 1.0).abs() < 1e-12);
        assert!(m[9].abs() < 1e-12);
    }
}
