use std::fmt;
use std::path::Path;
use std::str::FromStr;

use binscene_core::binaural::HrirSet;
use binscene_core::eval::list_scenes;
use binscene_core::motion::Trajectory;
use binscene_core::scene::{read_manifest, PairType, SceneManifest, Split};
use binscene_core::signal::{convolve_slices, wav, AudioBuffer, BinauralBuffer, Rng, PIPELINE_RATE};
use rayon::prelude::*;

use crate::error::Result;
use crate::model::Example;

/// Which scenes a training run sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Adult-adult pairs only.
    Adult,
    /// Pairs with at least one child, from scratch.
    Classroom,
    /// Classroom pairs, a fraction of them, starting from a checkpoint.
    Finetune,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Adult => "adult",
            Strategy::Classroom => "classroom",
            Strategy::Finetune => "finetune",
        }
    }

    pub fn accepts(self, pair: PairType) -> bool {
        match self {
            Strategy::Adult => pair == PairType::AdultAdult,
            Strategy::Classroom | Strategy::Finetune => pair != PairType::AdultAdult,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = binscene_core::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "adult" => Ok(Strategy::Adult),
            "classroom" => Ok(Strategy::Classroom),
            "finetune" => Ok(Strategy::Finetune),
            other => Err(binscene_core::Error::invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Loads one scene directory as a training example.
pub fn load_scene(dir: &Path) -> Result<(SceneManifest, Example)> {
    let manifest = read_manifest(&dir.join("manifest.json"))?;
    let mixture = wav::read_binaural(&dir.join("mixture.wav"))?;
    let references = [
        wav::read_binaural(&dir.join("ref1.wav"))?,
        wav::read_binaural(&dir.join("ref2.wav"))?,
    ];
    let trajectories = Some([
        manifest.talkers[0].trajectory.clone(),
        manifest.talkers[1].trajectory.clone(),
    ]);
    Ok((
        manifest,
        Example {
            mixture,
            references,
            trajectories,
        },
    ))
}

/// Scene directories of `split` accepted by the strategy. For finetuning,
/// a seeded subset of `fraction` of them (at least one when any exist).
pub fn select_scenes(
    dataset: &Path,
    split: Split,
    strategy: Strategy,
    fraction: f64,
    seed: u64,
) -> Result<Vec<std::path::PathBuf>> {
    let mut dirs = Vec::new();
    for dir in list_scenes(dataset, split)? {
        let m = read_manifest(&dir.join("manifest.json"))?;
        if strategy.accepts(m.pair_type) {
            dirs.push(dir);
        }
    }
    if strategy == Strategy::Finetune {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(binscene_core::Error::config("finetune_fraction", format!("{fraction} is not in (0, 1]")).into());
        }
        let keep = ((dirs.len() as f64 * fraction).round() as usize).clamp(dirs.len().min(1), dirs.len());
        Rng::new(seed).derive(&format!("finetune/{split}")).shuffle(&mut dirs);
        dirs.truncate(keep);
        dirs.sort();
    }
    Ok(dirs)
}

pub fn load_examples(dirs: &[std::path::PathBuf]) -> Result<Vec<Example>> {
    dirs.par_iter().map(|d| Ok(load_scene(d)?.1)).collect()
}

pub const TOY_AZIMUTHS: [i32; 2] = [-40, 40];

fn spatialize(dry: &[f64], hrirs: &HrirSet, azimuth: i32) -> Result<BinauralBuffer> {
    let h = hrirs
        .get(azimuth)
        .ok_or(binscene_core::Error::MissingAzimuth(azimuth))?;
    let ear = |x: &AudioBuffer| {
        let mut y = convolve_slices(dry, x.samples());
        y.truncate(dry.len());
        AudioBuffer::new(y, PIPELINE_RATE)
    };
    Ok(BinauralBuffer::new(ear(h.left())?, ear(h.right())?)?)
}

/// Two amplitude-modulated sinusoid talkers in separate bands, one low at
/// -40 degrees (right) and one high at +40 (left), rendered through the synthetic HRIRs.
pub fn toy_examples(count: usize, len: usize, seed: u64) -> Result<Vec<Example>> {
    let hrirs = HrirSet::synthetic(binscene_core::binaural::DEFAULT_HEAD_RADIUS)?;
    let rate = PIPELINE_RATE as f64;
    let root = Rng::new(seed);
    let dur = len as f64 / rate;
    (0..count)
        .map(|i| {
            let mut rng = root.derive(&format!("toy/{i}"));
            let mut voice = |lo: f64, hi: f64| -> Vec<f64> {
                let f = rng.uniform(lo, hi);
                let phase = rng.uniform(0.0, std::f64::consts::TAU);
                let am = rng.uniform(2.0, 6.0);
                let am_phase = rng.uniform(0.0, std::f64::consts::TAU);
                let x: Vec<f64> = (0..len)
                    .map(|t| {
                        let t = t as f64 / rate;
                        let env = 0.6 + 0.4 * (std::f64::consts::TAU * am * t + am_phase).sin();
                        env * (std::f64::consts::TAU * f * t + phase).sin()
                    })
                    .collect();
                let rms = (x.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
                x.into_iter().map(|v| v * 0.05 / rms).collect()
            };
            let low = voice(250.0, 500.0);
            let high = voice(2000.0, 3000.0);
            let a = spatialize(&low, &hrirs, TOY_AZIMUTHS[0])?;
            let b = spatialize(&high, &hrirs, TOY_AZIMUTHS[1])?;
            Ok(Example {
                mixture: a.add(&b)?,
                references: [a, b],
                trajectories: Some([
                    Trajectory::stationary(TOY_AZIMUTHS[0], dur)?,
                    Trajectory::stationary(TOY_AZIMUTHS[1], dur)?,
                ]),
            })
        })
        .collect()
}
