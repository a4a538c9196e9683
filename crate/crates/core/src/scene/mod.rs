//! Two-talker classroom scenes: corpus ingestion, SNR-controlled mixing,
//! babble fields and on-disk datasets.

mod corpus;
mod dataset;
mod mix;
mod synth;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{
    check_disjoint, crop_and_normalize, crop_buffer, ingest_corpus, load_utterance, write_synthetic_corpus,
    IngestReport, Rejection, SyntheticCorpus,
};
pub use dataset::{
    generate_dataset, read_manifest, scene_config_for, BankProvider, BankSet, DatasetIndex, DatasetSpec, IndexEntry, PairWeights,
    SceneJob, SplitCounts, SplitDistances, SplitStats,
};
pub use mix::{
    babble_source_count, babble_stream_starts, build_babble_field, measured_snr_db, mix_at_snr, BabbleField, BABBLE_START_FRACTION,
};
pub use synth::{synth_scene, SceneBundle, SceneConfig, SceneManifest, ScenePools, TalkerRecord};

/// RMS every dry utterance is normalised to before spatialisation.
pub const DRY_RMS: f64 = 0.05;
pub const PIPELINE_VERSION: &str = concat!("binscene-", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    Child,
    Adult,
}

impl AgeGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            AgeGroup::Child => "child",
            AgeGroup::Adult => "adult",
        }
    }
}

impl FromStr for AgeGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "child" => Ok(AgeGroup::Child),
            "adult" => Ok(AgeGroup::Adult),
            other => Err(Error::invalid(format!("unknown age group `{other}`"))),
        }
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairType {
    ChildChild,
    ChildAdult,
    AdultAdult,
}

impl PairType {
    pub const ALL: [PairType; 3] = [PairType::ChildChild, PairType::ChildAdult, PairType::AdultAdult];

    pub fn groups(self) -> (AgeGroup, AgeGroup) {
        match self {
            PairType::ChildChild => (AgeGroup::Child, AgeGroup::Child),
            PairType::ChildAdult => (AgeGroup::Child, AgeGroup::Adult),
            PairType::AdultAdult => (AgeGroup::Adult, AgeGroup::Adult),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairType::ChildChild => "child-child",
            PairType::ChildAdult => "child-adult",
            PairType::AdultAdult => "adult-adult",
        }
    }
}

impl fmt::Display for PairType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PairType::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown pair type `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "dev" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// One usable utterance of the speech corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRef {
    pub path: PathBuf,
    pub speaker_id: String,
    pub age_group: AgeGroup,
    pub split: Split,
    /// Seconds.
    pub duration: f64,
}
