use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    /// Periodic Hann.
    Hann,
}

impl Window {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
                .collect(),
        }
    }
}

/// Short-time spectrum, frames × (frame_length / 2 + 1) bins.
#[derive(Clone, Debug)]
pub struct Spectrogram {
    data: Vec<Complex64>,
    frames: usize,
    bins: usize,
    frame_length: usize,
    hop: usize,
    rate: u32,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame_length(&self) -> usize {
        self.frame_length
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn get(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex64] {
        &self.data[frame * self.bins..(frame + 1) * self.bins]
    }
}

/// Frames start at sample 0 with no padding; a trailing partial frame is
/// dropped, so `frames == (len - frame_length) / hop + 1`.
pub fn stft(x: &AudioBuffer, frame_length: usize, hop: usize, window: Window) -> Result<Spectrogram> {
    if frame_length == 0 || hop == 0 || hop > frame_length {
        return Err(Error::invalid(format!(
            "invalid STFT geometry: frame {frame_length}, hop {hop}"
        )));
    }
    if x.len() < frame_length {
        return Err(Error::invalid(format!(
            "signal of {} samples is shorter than one {frame_length}-sample frame",
            x.len()
        )));
    }
    let frames = (x.len() - frame_length) / hop + 1;
    let bins = frame_length / 2 + 1;
    let win = window.coefficients(frame_length);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_length);

    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::default(); frame_length];
    for f in 0..frames {
        let seg = &x.samples()[f * hop..f * hop + frame_length];
        for ((b, s), w) in buf.iter_mut().zip(seg).zip(&win) {
            *b = Complex64::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(Spectrogram {
        data,
        frames,
        bins,
        frame_length,
        hop,
        rate: x.rate(),
    })
}
