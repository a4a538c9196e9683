use serde::{Deserialize, Serialize};

use super::{
    build_babble_field, crop_buffer, load_utterance, mix_at_snr, AgeGroup, PairType, Split, UtteranceRef,
    PIPELINE_VERSION,
};
use crate::error::{Error, Result};
use crate::motion::{render_moving_source, sample_trajectory, BrirBank, Trajectory};
use crate::room::RING_RADII;
use crate::signal::{BinauralBuffer, Rng};

const SPEAKER_ATTEMPTS: usize = 10;
/// Peak level that triggers, and is restored by, scene normalisation.
const PEAK_TARGET: f64 = 0.99;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub pair_type: PairType,
    pub snr_range_db: (f64, f64),
    pub babble: bool,
    pub babble_snr_range_db: (f64, f64),
    pub babble_sources: (usize, usize),
    pub distance: f64,
    pub seed: u64,
}

impl SceneConfig {
    pub fn new(pair_type: PairType, babble: bool, distance: f64, seed: u64) -> Self {
        Self {
            pair_type,
            snr_range_db: (0.0, 5.0),
            babble,
            babble_snr_range_db: (-2.5, 15.0),
            babble_sources: (3, 8),
            distance,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, (lo, hi)) in [
            ("snr_range_db", self.snr_range_db),
            ("babble_snr_range_db", self.babble_snr_range_db),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(field, format!("[{lo}, {hi}] is not an interval")));
            }
        }
        let (lo, hi) = self.babble_sources;
        if lo == 0 || hi < lo {
            return Err(Error::config("babble_sources", format!("invalid range [{lo}, {hi}]")));
        }
        if !RING_RADII.iter().any(|r| (r - self.distance).abs() < 1e-9) {
            return Err(Error::config(
                "distance",
                format!("{} m is not one of {RING_RADII:?}", self.distance),
            ));
        }
        Ok(())
    }
}

/// Utterances of one split, by age group.
#[derive(Clone, Debug, Default)]
pub struct ScenePools {
    pub child: Vec<UtteranceRef>,
    pub adult: Vec<UtteranceRef>,
}

impl ScenePools {
    pub fn from_refs<'a>(refs: impl IntoIterator<Item = &'a UtteranceRef>) -> Self {
        let mut p = Self::default();
        for u in refs {
            match u.age_group {
                AgeGroup::Child => p.child.push(u.clone()),
                AgeGroup::Adult => p.adult.push(u.clone()),
            }
        }
        p
    }

    pub fn group(&self, g: AgeGroup) -> &[UtteranceRef] {
        match g {
            AgeGroup::Child => &self.child,
            AgeGroup::Adult => &self.adult,
        }
    }

    pub fn len(&self) -> usize {
        self.child.len() + self.adult.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TalkerRecord {
    pub speaker_id: String,
    pub age_group: AgeGroup,
    pub utterance: String,
    pub crop_start: usize,
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub scene_id: String,
    pub split: Split,
    pub room_id: u32,
    pub listener: Option<[f64; 3]>,
    pub distance: f64,
    pub pair_type: PairType,
    pub talkers: [TalkerRecord; 2],
    /// Talker 1 over talker 2, pooled over both ears.
    pub mixture_snr_db: f64,
    /// Both talkers together over the babble.
    pub babble_snr_db: Option<f64>,
    pub babble_azimuths: Vec<i32>,
    /// Applied to every signal when the mixture would clip; 1 otherwise.
    pub peak_gain: f64,
    pub seed: u64,
    pub pipeline_version: String,
}

impl SceneManifest {
    pub fn has_babble(&self) -> bool {
        self.babble_snr_db.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    pub mixture: BinauralBuffer,
    pub references: [BinauralBuffer; 2],
    pub babble: Option<BinauralBuffer>,
    pub manifest: SceneManifest,
}

impl SceneBundle {
    pub fn trajectories(&self) -> [&Trajectory; 2] {
        [&self.manifest.talkers[0].trajectory, &self.manifest.talkers[1].trajectory]
    }
}

fn draw_speakers<'a>(
    pair: PairType,
    pools: &'a ScenePools,
    rng: &mut Rng,
) -> Result<(&'a UtteranceRef, &'a UtteranceRef)> {
    let (mut g1, mut g2) = pair.groups();
    if g1 != g2 && rng.coin() {
        std::mem::swap(&mut g1, &mut g2);
    }
    let (p1, p2) = (pools.group(g1), pools.group(g2));
    for (g, p) in [(g1, p1), (g2, p2)] {
        if p.is_empty() {
            return Err(Error::PoolExhausted(format!("no {g} utterances")));
        }
    }
    for _ in 0..SPEAKER_ATTEMPTS {
        let a = rng.choose(p1).unwrap();
        let b = rng.choose(p2).unwrap();
        if a.speaker_id != b.speaker_id {
            return Ok((a, b));
        }
    }
    Err(Error::PoolExhausted(format!(
        "no two distinct {pair} speakers after {SPEAKER_ATTEMPTS} draws"
    )))
}

/// Synthesises one scene. Every random choice comes from a stream derived
/// from `cfg.seed`, so the scene is a pure function of its inputs.
pub fn synth_scene(
    cfg: &SceneConfig,
    scene_id: &str,
    split: Split,
    pools: &ScenePools,
    bank: &BrirBank,
) -> Result<SceneBundle> {
    cfg.validate()?;
    if (bank.distance() - cfg.distance).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "bank is for {} m, scene wants {} m",
            bank.distance(),
            cfg.distance
        )));
    }
    let root = Rng::new(cfg.seed);
    let (u1, u2) = draw_speakers(cfg.pair_type, pools, &mut root.derive("speakers"))?;

    let mut talkers = Vec::with_capacity(2);
    let mut refs = Vec::with_capacity(2);
    for (k, utt) in [u1, u2].into_iter().enumerate() {
        let x = load_utterance(utt)?;
        let (dry, crop_start) = crop_buffer(&x, &mut root.derive(&format!("crop/{k}")))?;
        let trajectory = sample_trajectory(&mut root.derive(&format!("trajectory/{k}")));
        refs.push(render_moving_source(&dry, &trajectory, bank)?);
        talkers.push(TalkerRecord {
            speaker_id: utt.speaker_id.clone(),
            age_group: utt.age_group,
            utterance: utt.path.display().to_string(),
            crop_start,
            trajectory,
        });
    }
    let snr = root.derive("snr").uniform(cfg.snr_range_db.0, cfg.snr_range_db.1);
    let (mut r2, _) = mix_at_snr(&refs[0], &refs[1], snr)?;
    let mut r1 = refs.swap_remove(0);

    let mut babble = None;
    let mut babble_snr = None;
    let mut babble_azimuths = Vec::new();
    if cfg.babble {
        let speakers = [&u1.speaker_id, &u2.speaker_id];
        let pool: Vec<UtteranceRef> = pools
            .child
            .iter()
            .chain(&pools.adult)
            .filter(|u| !speakers.contains(&&u.speaker_id))
            .cloned()
            .collect();
        let field = build_babble_field(&pool, bank, cfg.babble_sources, &mut root.derive("babble"))?;
        let bsnr = root
            .derive("babble-snr")
            .uniform(cfg.babble_snr_range_db.0, cfg.babble_snr_range_db.1);
        let speech = r1.add(&r2)?;
        let (b, _) = mix_at_snr(&speech, &field.signal, bsnr)?;
        babble = Some(b);
        babble_snr = Some(bsnr);
        babble_azimuths = field.azimuths;
    }

    let mut mixture = r1.add(&r2)?;
    if let Some(b) = &babble {
        mixture = mixture.add(b)?;
    }
    let mut peak_gain = 1.0;
    let peak = mixture.peak();
    if peak > 1.0 {
        peak_gain = PEAK_TARGET / peak;
        mixture.scale(peak_gain);
        r1.scale(peak_gain);
        r2.scale(peak_gain);
        if let Some(b) = babble.as_mut() {
            b.scale(peak_gain);
        }
    }

    let talkers: [TalkerRecord; 2] = talkers.try_into().expect("two talkers");
    Ok(SceneBundle {
        mixture,
        references: [r1, r2],
        babble,
        manifest: SceneManifest {
            scene_id: scene_id.to_string(),
            split,
            room_id: bank.room_id(),
            listener: bank.listener().map(|p| [p.x, p.y, p.z]),
            distance: cfg.distance,
            pair_type: cfg.pair_type,
            talkers,
            mixture_snr_db: snr,
            babble_snr_db: babble_snr,
            babble_azimuths,
            peak_gain,
            seed: cfg.seed,
            pipeline_version: PIPELINE_VERSION.to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binaural::HrirSet;
    use crate::scene::{ingest_corpus, measured_snr_db, write_synthetic_corpus, SyntheticCorpus};
    use std::sync::OnceLock;

    struct Fixture {
        _dir: tempfile::TempDir,
        pools: ScenePools,
        bank: BrirBank,
    }

    fn fixture() -> &'static Fixture {
        static F: OnceLock<Fixture> = OnceLock::new();
        F.get_or_init(|| {
            let dir = tempfile::tempdir().unwrap();
            let spec = SyntheticCorpus {
                speakers_per_group: 3,
                utterances_per_speaker: 6,
                ..Default::default()
            };
            let manifest = write_synthetic_corpus(dir.path(), &spec).unwrap();
            let report = ingest_corpus(&manifest).unwrap();
            let pools = ScenePools::from_refs(report.split(Split::Train));
            let bank = BrirBank::free_field(&HrirSet::synthetic(0.07).unwrap(), 3, 1.0).unwrap();
            Fixture { _dir: dir, pools, bank }
        })
    }

    #[test]
    fn scene_without_babble_is_exactly_additive() {
        let f = fixture();
        let cfg = SceneConfig::new(PairType::ChildAdult, false, 1.0, 11);
        let s = synth_scene(&cfg, "train-000000", Split::Train, &f.pools, &f.bank).unwrap();
        assert!(s.babble.is_none());
        let sum = s.references[0].add(&s.references[1]).unwrap();
        assert_eq!(sum, s.mixture);
        let groups: Vec<AgeGroup> = s.manifest.talkers.iter().map(|t| t.age_group).collect();
        assert!(groups.contains(&AgeGroup::Child) && groups.contains(&AgeGroup::Adult));
        assert_ne!(s.manifest.talkers[0].speaker_id, s.manifest.talkers[1].speaker_id);
        assert!((measured_snr_db(&s.references[0], &s.references[1]) - s.manifest.mixture_snr_db).abs() < 0.01);
        assert!((0.0..=5.0).contains(&s.manifest.mixture_snr_db));
        assert_eq!(s.mixture.len(), 38_400);
    }

    #[test]
    fn babble_scene_meets_its_manifest() {
        let f = fixture();
        for seed in 0..3 {
            let cfg = SceneConfig::new(PairType::ChildChild, true, 1.0, 100 + seed);
            let s = synth_scene(&cfg, "x", Split::Train, &f.pools, &f.bank).unwrap();
            let b = s.babble.as_ref().unwrap();
            let speech = s.references[0].add(&s.references[1]).unwrap();
            let bsnr = s.manifest.babble_snr_db.unwrap();
            assert!((measured_snr_db(&speech, b) - bsnr).abs() < 0.01);
            assert!((-2.5..=15.0).contains(&bsnr));
            let n = s.manifest.babble_azimuths.len();
            assert!((3..=8).contains(&n));
            let residual = s.mixture.sub(&speech).unwrap().sub(b).unwrap();
            assert!(residual.peak() < 1e-6);
            assert!(s.mixture.peak() <= 1.0);
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let f = fixture();
        let cfg = SceneConfig::new(PairType::AdultAdult, true, 1.0, 5);
        let a = synth_scene(&cfg, "x", Split::Train, &f.pools, &f.bank).unwrap();
        let b = synth_scene(&cfg, "x", Split::Train, &f.pools, &f.bank).unwrap();
        assert_eq!(a, b);
        let c = synth_scene(&SceneConfig { seed: 6, ..cfg }, "x", Split::Train, &f.pools, &f.bank).unwrap();
        assert_ne!(a.mixture, c.mixture);
    }

    #[test]
    fn single_speaker_pool_fails_after_retries() {
        let f = fixture();
        let one = f.pools.child.iter().filter(|u| u.speaker_id == f.pools.child[0].speaker_id).cloned().collect();
        let pools = ScenePools {
            child: one,
            adult: Vec::new(),
        };
        let cfg = SceneConfig::new(PairType::ChildChild, false, 1.0, 1);
        assert!(matches!(
            synth_scene(&cfg, "x", Split::Train, &pools, &f.bank),
            Err(Error::PoolExhausted(_))
        ));
    }

    #[test]
    fn wrong_distance_rejected() {
        let f = fixture();
        let cfg = SceneConfig::new(PairType::ChildChild, false, 2.0, 1);
        assert!(synth_scene(&cfg, "x", Split::Train, &f.pools, &f.bank).is_err());
        let cfg = SceneConfig::new(PairType::ChildChild, false, 1.2, 1);
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "distance"));
    }
}
