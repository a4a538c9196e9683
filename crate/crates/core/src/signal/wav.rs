//! WAV input and output.
//!
//! Reads 16-bit PCM and 32-bit float files with any channel count and rate.
//! Writes 32-bit float unless 16-bit PCM is requested.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioBuffer, BinauralBuffer};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WavFormat {
    #[default]
    Float32,
    Pcm16,
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads every channel of a WAV file, de-interleaved.
pub fn read_channels(path: &Path) -> Result<Vec<AudioBuffer>> {
    let mut reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        (fmt, bits) => {
            return Err(Error::invalid(format!(
                "{}: unsupported WAV sample format {fmt:?} at {bits} bits",
                path.display()
            )))
        }
    };
    let frames = interleaved.len() / channels;
    (0..channels)
        .map(|c| {
            let samples = (0..frames).map(|i| interleaved[i * channels + c]).collect();
            AudioBuffer::new(samples, spec.sample_rate)
        })
        .collect()
}

/// Reads a file expected to hold exactly one channel.
pub fn read_mono(path: &Path) -> Result<AudioBuffer> {
    let mut ch = read_channels(path)?;
    if ch.len() != 1 {
        return Err(Error::invalid(format!(
            "{}: expected 1 channel, found {}",
            path.display(),
            ch.len()
        )));
    }
    Ok(ch.remove(0))
}

pub fn read_binaural(path: &Path) -> Result<BinauralBuffer> {
    let mut ch = read_channels(path)?;
    if ch.len() != 2 {
        return Err(Error::invalid(format!(
            "{}: expected 2 channels, found {}",
            path.display(),
            ch.len()
        )));
    }
    let right = ch.pop().unwrap();
    let left = ch.pop().unwrap();
    BinauralBuffer::new(left, right)
}

/// Duration in seconds from the header alone.
pub fn duration(path: &Path) -> Result<f64> {
    let reader = WavReader::open(path).map_err(wav_err(path))?;
    Ok(reader.duration() as f64 / reader.spec().sample_rate as f64)
}

pub fn write_channels(path: &Path, channels: &[&AudioBuffer], format: WavFormat) -> Result<()> {
    let first = channels
        .first()
        .ok_or_else(|| Error::invalid("cannot write a WAV file with no channels"))?;
    for c in channels {
        first.check_compatible(c)?;
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate: first.rate(),
        bits_per_sample: match format {
            WavFormat::Float32 => 32,
            WavFormat::Pcm16 => 16,
        },
        sample_format: match format {
            WavFormat::Float32 => SampleFormat::Float,
            WavFormat::Pcm16 => SampleFormat::Int,
        },
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for i in 0..first.len() {
        for c in channels {
            let v = c.samples()[i];
            match format {
                WavFormat::Float32 => w.write_sample(v as f32),
                WavFormat::Pcm16 => w.write_sample((v.clamp(-1.0, 1.0) * 32767.0).round() as i16),
            }
            .map_err(wav_err(path))?;
        }
    }
    w.finalize().map_err(wav_err(path))
}

pub fn write_mono(path: &Path, x: &AudioBuffer, format: WavFormat) -> Result<()> {
    write_channels(path, &[x], format)
}

pub fn write_binaural(path: &Path, x: &BinauralBuffer, format: WavFormat) -> Result<()> {
    write_channels(path, &[x.left(), x.right()], format)
}
