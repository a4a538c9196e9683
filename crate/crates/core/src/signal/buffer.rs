use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A mono signal at a fixed sample rate, full scale ±1.0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, rate: u32) -> Result<Self> {
        if rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, rate })
    }

    pub fn zeros(len: usize, rate: u32) -> Self {
        assert!(rate > 0, "sample rate must be positive");
        Self {
            samples: vec![0.0; len],
            rate,
        }
    }

    /// Builds a buffer from samples the caller already knows to be finite.
    pub(crate) fn from_vec(samples: Vec<f64>, rate: u32) -> Self {
        debug_assert!(rate > 0);
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self { samples, rate }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    /// Sum of squares.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    /// Mean square value; zero for an empty buffer.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn scale(&mut self, gain: f64) {
        self.samples.iter_mut().for_each(|s| *s *= gain);
    }

    pub fn scaled(&self, gain: f64) -> Self {
        let mut out = self.clone();
        out.scale(gain);
        out
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn resized(mut self, len: usize) -> Self {
        self.samples.resize(len, 0.0);
        self
    }

    /// Copy of `[start, end)`, zero-padded where the range runs past the end.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let mut out = vec![0.0; end.saturating_sub(start)];
        if start < self.samples.len() {
            let stop = end.min(self.samples.len());
            out[..stop - start].copy_from_slice(&self.samples[start..stop]);
        }
        Self::from_vec(out, self.rate)
    }

    /// Sample-wise sum; both buffers must share rate and length.
    pub fn add(&self, other: &AudioBuffer) -> Result<Self> {
        self.check_compatible(other)?;
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self::from_vec(samples, self.rate))
    }

    pub fn sub(&self, other: &AudioBuffer) -> Result<Self> {
        self.check_compatible(other)?;
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self::from_vec(samples, self.rate))
    }

    pub(crate) fn check_compatible(&self, other: &AudioBuffer) -> Result<()> {
        if self.rate != other.rate {
            return Err(Error::invalid(format!(
                "sample rate mismatch: {} vs {}",
                self.rate, other.rate
            )));
        }
        if self.len() != other.len() {
            return Err(Error::invalid(format!(
                "length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ear {
    Left,
    Right,
}

impl Ear {
    pub const BOTH: [Ear; 2] = [Ear::Left, Ear::Right];
}

/// Two time-aligned ear signals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinauralBuffer {
    left: AudioBuffer,
    right: AudioBuffer,
}

impl BinauralBuffer {
    pub fn new(left: AudioBuffer, right: AudioBuffer) -> Result<Self> {
        left.check_compatible(&right)?;
        Ok(Self { left, right })
    }

    pub fn zeros(len: usize, rate: u32) -> Self {
        Self {
            left: AudioBuffer::zeros(len, rate),
            right: AudioBuffer::zeros(len, rate),
        }
    }

    pub fn left(&self) -> &AudioBuffer {
        &self.left
    }

    pub fn right(&self) -> &AudioBuffer {
        &self.right
    }

    pub fn ear(&self, ear: Ear) -> &AudioBuffer {
        match ear {
            Ear::Left => &self.left,
            Ear::Right => &self.right,
        }
    }

    pub fn ear_mut(&mut self, ear: Ear) -> &mut AudioBuffer {
        match ear {
            Ear::Left => &mut self.left,
            Ear::Right => &mut self.right,
        }
    }

    pub fn into_ears(self) -> (AudioBuffer, AudioBuffer) {
        (self.left, self.right)
    }

    pub fn rate(&self) -> u32 {
        self.left.rate()
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.left.energy() + self.right.energy()
    }

    /// Mean power pooled over both ears.
    pub fn power(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.energy() / (2 * self.len()) as f64
        }
    }

    pub fn peak(&self) -> f64 {
        self.left.peak().max(self.right.peak())
    }

    pub fn scale(&mut self, gain: f64) {
        self.left.scale(gain);
        self.right.scale(gain);
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            left: self.left.scaled(gain),
            right: self.right.scaled(gain),
        }
    }

    pub fn resized(self, len: usize) -> Self {
        Self {
            left: self.left.resized(len),
            right: self.right.resized(len),
        }
    }

    pub fn add(&self, other: &BinauralBuffer) -> Result<Self> {
        Ok(Self {
            left: self.left.add(&other.left)?,
            right: self.right.add(&other.right)?,
        })
    }

    pub fn sub(&self, other: &BinauralBuffer) -> Result<Self> {
        Ok(Self {
            left: self.left.sub(&other.left)?,
            right: self.right.sub(&other.right)?,
        })
    }

    /// Left and right exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            left: self.right.clone(),
            right: self.left.clone(),
        }
    }
}
