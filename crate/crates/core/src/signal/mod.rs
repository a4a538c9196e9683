//! Sample-accurate signal primitives shared by the whole pipeline.
//!
//! Processing is done in `f64`; files on disk are `f32` (or 16-bit PCM on
//! read).

mod buffer;
mod conv;
mod crossfade;
mod resample;
mod rng;
mod stft;
pub mod wav;

pub use buffer::{AudioBuffer, BinauralBuffer, Ear};
pub use conv::{convolve_into, convolve_slices, fft_convolve};
pub use crossfade::{crossfade_concat, crossfade_gains};
pub use resample::resample;
pub use rng::Rng;
pub use stft::{stft, Spectrogram, Window};

/// Sample rate of every rendered signal in the pipeline.
pub const PIPELINE_RATE: u32 = 16_000;

/// Speed of sound in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
