use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AgeGroup, Split, UtteranceRef, DRY_RMS};
use crate::error::{Error, Result};
use crate::motion::{UTTERANCE_SAMPLES, UTTERANCE_SECONDS};
use crate::signal::{resample, wav, AudioBuffer, Rng, PIPELINE_RATE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: Vec<UtteranceRef>,
    pub rejected: Vec<Rejection>,
}

impl IngestReport {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &UtteranceRef> {
        self.accepted.iter().filter(move |u| u.split == split)
    }

    pub fn merge(&mut self, other: IngestReport) {
        self.accepted.extend(other.accepted);
        self.rejected.extend(other.rejected);
    }
}

#[derive(Deserialize)]
struct ManifestRow {
    path: String,
    speaker_id: String,
    age_group: String,
    split: String,
}

/// Reads a corpus manifest CSV with columns `path, speaker_id, age_group,
/// split`. Relative paths resolve against the manifest's directory.
pub fn ingest_corpus(manifest: &Path) -> Result<IngestReport> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(manifest)
        .map_err(|e| Error::csv(manifest, e))?;
    let mut report = IngestReport::default();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| Error::csv(manifest, e))?;
        if row.speaker_id.is_empty() {
            return Err(Error::invalid(format!("{}: empty speaker id for {}", manifest.display(), row.path)));
        }
        let path = base.join(&row.path);
        let age_group = row.age_group.parse()?;
        let split = row.split.parse()?;
        let duration = wav::duration(&path)?;
        if duration + 1e-9 < UTTERANCE_SECONDS {
            log::info!("rejecting {}: {duration:.3} s is shorter than {UTTERANCE_SECONDS} s", path.display());
            report.rejected.push(Rejection {
                path,
                reason: format!("duration {duration:.3} s < {UTTERANCE_SECONDS} s"),
            });
            continue;
        }
        report.accepted.push(UtteranceRef {
            path,
            speaker_id: row.speaker_id,
            age_group,
            split,
            duration,
        });
    }
    check_disjoint(&report.accepted)?;
    Ok(report)
}

/// Fails on the first speaker (in sorted order) found in two splits.
pub fn check_disjoint(utts: &[UtteranceRef]) -> Result<()> {
    let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
    let mut clash: Option<&str> = None;
    for u in utts {
        match seen.get(u.speaker_id.as_str()) {
            Some(&s) if s != u.split => {
                clash = Some(match clash {
                    Some(c) if c < u.speaker_id.as_str() => c,
                    _ => u.speaker_id.as_str(),
                });
            }
            Some(_) => {}
            None => {
                seen.insert(&u.speaker_id, u.split);
            }
        }
    }
    match clash {
        Some(s) => Err(Error::SpeakerOverlap(s.to_string())),
        None => Ok(()),
    }
}

/// Whole utterance at the pipeline rate.
pub fn load_utterance(utt: &UtteranceRef) -> Result<AudioBuffer> {
    let x = wav::read_mono(&utt.path)?;
    resample(&x, PIPELINE_RATE)
}

/// Random 2.4 s window of `x`, scaled to the dry RMS. Returns the crop and
/// its start sample.
pub fn crop_buffer(x: &AudioBuffer, rng: &mut Rng) -> Result<(AudioBuffer, usize)> {
    if x.len() < UTTERANCE_SAMPLES {
        return Err(Error::invalid(format!(
            "utterance has {} samples, at least {UTTERANCE_SAMPLES} needed",
            x.len()
        )));
    }
    let start = rng.index(x.len() - UTTERANCE_SAMPLES + 1);
    let crop = x.slice(start, start + UTTERANCE_SAMPLES);
    let rms = crop.rms();
    if rms == 0.0 {
        return Err(Error::invalid("cropped utterance is silent"));
    }
    Ok((crop.scaled(DRY_RMS / rms), start))
}

pub fn crop_and_normalize(utt: &UtteranceRef, rng: &mut Rng) -> Result<AudioBuffer> {
    let x = load_utterance(utt)?;
    crop_buffer(&x, rng).map(|(c, _)| c)
}

/// Parameters of a generated stand-in corpus of harmonic, syllabic
/// "speech". Child voices get higher pitch and formants than adult voices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpus {
    pub seed: u64,
    /// Per split and age group.
    pub speakers_per_group: usize,
    pub utterances_per_speaker: usize,
    /// Seconds.
    pub duration_range: (f64, f64),
    /// Extra 1 s utterances that ingestion must reject.
    pub short_utterances: usize,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        Self {
            seed: 7,
            speakers_per_group: 4,
            utterances_per_speaker: 6,
            duration_range: (2.6, 4.0),
            short_utterances: 0,
        }
    }
}

const VOWELS: [(f64, f64, f64); 5] = [
    (730.0, 1090.0, 2440.0),
    (530.0, 1840.0, 2480.0),
    (270.0, 2290.0, 3010.0),
    (570.0, 840.0, 2410.0),
    (300.0, 870.0, 2240.0),
];

fn synth_voice(f0: f64, formant_scale: f64, seconds: f64, rng: &mut Rng) -> Vec<f64> {
    let fs = PIPELINE_RATE as f64;
    let n = (seconds * fs).round() as usize;
    let mut out = vec![0.0; n];
    let mut t = rng.uniform(0.0, 0.1);
    let mut phase = 0.0;
    while t < seconds {
        let syl = rng.uniform(0.12, 0.3);
        let (f1, f2, f3) = VOWELS[rng.index(VOWELS.len())];
        let formants = [f1 * formant_scale, f2 * formant_scale, f3 * formant_scale];
        let pitch = f0 * rng.uniform(0.85, 1.15);
        let glide = rng.uniform(-0.15, 0.15);
        let start = (t * fs) as usize;
        let len = (syl * fs) as usize;
        let harmonics = ((7000.0 / pitch) as usize).max(1);
        let gains: Vec<f64> = (1..=harmonics)
            .map(|h| {
                let f = h as f64 * pitch;
                formants
                    .iter()
                    .map(|&fc| {
                        let bw = 0.1 * fc + 50.0;
                        1.0 / (1.0 + ((f - fc) / bw).powi(2))
                    })
                    .sum::<f64>()
                    / (h as f64).sqrt()
            })
            .collect();
        for k in 0..len.min(n.saturating_sub(start)) {
            let u = k as f64 / len as f64;
            let env = (PI * u).sin().powi(2);
            let f = pitch * (1.0 + glide * u);
            phase += 2.0 * PI * f / fs;
            let mut v = 0.0;
            for (h, g) in gains.iter().enumerate() {
                v += g * ((h + 1) as f64 * phase).sin();
            }
            out[start + k] += env * v + 0.02 * env * rng.normal();
        }
        t += syl + rng.uniform(0.02, 0.15);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    out
}

/// Writes WAVs plus `manifest.csv` under `dir` and returns the manifest
/// path. Speaker ids encode split and group, so splits are disjoint.
pub fn write_synthetic_corpus(dir: &Path, spec: &SyntheticCorpus) -> Result<PathBuf> {
    if spec.speakers_per_group == 0 || spec.utterances_per_speaker == 0 {
        return Err(Error::config("speakers_per_group", "corpus needs at least one speaker and utterance"));
    }
    let (lo, hi) = spec.duration_range;
    if !(lo >= UTTERANCE_SECONDS && hi >= lo) {
        return Err(Error::config("duration_range", format!("must satisfy {UTTERANCE_SECONDS} <= lo <= hi")));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let root = Rng::new(spec.seed);
    let mut rows = Vec::new();
    for split in Split::ALL {
        for group in [AgeGroup::Child, AgeGroup::Adult] {
            for s in 0..spec.speakers_per_group {
                let speaker = format!("{}-{}-{s:03}", split, group);
                let mut rng = root.derive(&format!("speaker/{speaker}"));
                let (f0, scale) = match group {
                    AgeGroup::Child => (rng.uniform(220.0, 300.0), rng.uniform(1.15, 1.3)),
                    AgeGroup::Adult => (rng.uniform(95.0, 190.0), rng.uniform(0.9, 1.05)),
                };
                let short = if s == 0 { spec.short_utterances } else { 0 };
                for u in 0..spec.utterances_per_speaker + short {
                    let secs = if u >= spec.utterances_per_speaker {
                        1.0
                    } else {
                        rng.uniform(lo, hi)
                    };
                    let x = synth_voice(f0, scale, secs, &mut rng);
                    let rel = format!("{split}/{speaker}/{speaker}_{u:02}.wav");
                    let buf = AudioBuffer::new(x, PIPELINE_RATE)?;
                    wav::write_mono(&dir.join(&rel), &buf, wav::WavFormat::Pcm16)?;
                    rows.push((rel, speaker.clone(), group, split));
                }
            }
        }
    }
    let path = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record(["path", "speaker_id", "age_group", "split"])
        .map_err(|e| Error::csv(&path, e))?;
    for (rel, speaker, group, split) in rows {
        w.write_record([rel.as_str(), speaker.as_str(), group.as_str(), split.as_str()])
            .map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
