use std::fs;
use std::path::{Path, PathBuf};

use binscene_core::binaural::DEFAULT_HEAD_RADIUS;
use binscene_core::eval::{evaluate_dataset, list_scenes, summarize, write_report, EvalReport, Estimates, GccDoa};
use binscene_core::pipeline::RoomsConfig;
use binscene_core::scene::{generate_dataset, ingest_corpus, write_synthetic_corpus, DatasetSpec, IngestReport, Split, SyntheticCorpus};
use binscene_core::signal::wav::{self, WavFormat};
use binscene_core::signal::Rng;
use binscene_sep::{checkpoint, load_examples, select_scenes, separate, train_micro, ModelConfig, Params, Strategy, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{build_cache, DiskBanks, RoomsSummary};
use crate::error::{io, json, CliError, Result};

pub fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    serde_json::from_str(&text).map_err(|e| binscene_core::Error::config("config", format!("{}: {e}", path.display())).into())
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| json(path, e))?;
    fs::write(path, text).map_err(|e| io(path, e))
}

fn require_out(out: Option<&Path>) -> Result<&Path> {
    out.ok_or_else(|| CliError::Config("--out is required".into()))
}

fn check_hrir(spec: &str) -> Result<()> {
    if spec == "synthetic" || Path::new(spec).is_dir() {
        Ok(())
    } else {
        Err(binscene_core::Error::config("hrir", format!("`{spec}` is neither `synthetic` nor an HRIR pack directory")).into())
    }
}

pub struct Common<'a> {
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
    pub hrir: Option<&'a str>,
}

pub fn cmd_corpus(c: &Common) -> Result<PathBuf> {
    let out = require_out(c.out)?;
    let mut spec: SyntheticCorpus = match c.config {
        Some(p) => read_config(p)?,
        None => SyntheticCorpus::default(),
    };
    if let Some(s) = c.seed {
        spec.seed = s;
    }
    let manifest = out.join("manifest.csv");
    if manifest.exists() {
        log::info!("corpus already present at {}", manifest.display());
        return Ok(manifest);
    }
    let path = write_synthetic_corpus(out, &spec)?;
    println!("corpus manifest {}", path.display());
    Ok(path)
}

pub fn rooms_config(c: &Common) -> Result<RoomsConfig> {
    let mut cfg: RoomsConfig = match c.config {
        Some(p) => read_config(p)?,
        None => RoomsConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(h) = c.hrir {
        cfg.hrir = h.to_string();
    }
    cfg.validate()?;
    check_hrir(&cfg.hrir)?;
    Ok(cfg)
}

pub fn cmd_rooms(c: &Common, distances: &[f64]) -> Result<RoomsSummary> {
    let out = require_out(c.out)?;
    let cfg = rooms_config(c)?;
    let summary = build_cache(&cfg, (!distances.is_empty()).then_some(distances), out)?;
    println!(
        "rooms: {} jobs, {} RIRs and {} BRIRs written, {} already cached",
        summary.jobs, summary.rirs_written, summary.brirs_written, summary.cached
    );
    Ok(summary)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn cmd_synth(c: &Common, cache: &Path) -> Result<String> {
    let out = require_out(c.out)?;
    let config = c.config.ok_or_else(|| CliError::Config("synth needs --config".into()))?;
    let mut spec: DatasetSpec = read_config(config)?;
    if let Some(s) = c.seed {
        spec.seed = s;
    }
    if let Some(h) = c.hrir {
        spec.hrir = h.to_string();
    }
    spec.validate()?;
    check_hrir(&spec.hrir)?;
    let banks = DiskBanks::open(cache)?;
    if banks.config().hrir != spec.hrir {
        return Err(binscene_core::Error::config(
            "hrir",
            format!("dataset asks for `{}` but the cache was rendered with `{}`", spec.hrir, banks.config().hrir),
        )
        .into());
    }
    if spec.corpus.is_empty() {
        return Err(binscene_core::Error::config("corpus", "no corpus manifests listed").into());
    }
    let base = config.parent().unwrap_or(Path::new("."));
    let mut corpus = IngestReport::default();
    for m in &spec.corpus {
        corpus.merge(ingest_corpus(&resolve(base, m))?);
    }
    log::info!(
        "{} utterances accepted, {} rejected",
        corpus.accepted.len(),
        corpus.rejected.len()
    );
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let index = generate_dataset(&spec, &corpus.accepted, &banks, out)?;
    let mut parts = Vec::new();
    for (split, s) in &index.splits {
        let babble = s.mean_babble_snr_db.map_or("n/a".to_string(), |v| format!("{v:.2} dB"));
        parts.push(format!(
            "{split} {} ({} babble, mean SNR {:.2} dB, babble SNR {babble})",
            s.scenes, s.babble_scenes, s.mean_mixture_snr_db
        ));
    }
    println!("synth: {} scenes; {}", index.scenes.len(), parts.join("; "));
    println!("index hash {}", index.hash);
    Ok(index.hash)
}

/// Training run settings; every field is optional in the file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Caps the number of training scenes after strategy selection.
    pub max_scenes: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
struct TrainRecord<'a> {
    strategy: String,
    train_scenes: usize,
    val_scenes: usize,
    steps: usize,
    init_checkpoint: Option<&'a Path>,
    spec: &'a TrainSpec,
}

pub struct TrainArgs<'a> {
    pub data: &'a Path,
    pub strategy: Strategy,
    pub finetune_fraction: f64,
    pub checkpoint: Option<&'a Path>,
}

pub fn cmd_train(c: &Common, a: &TrainArgs) -> Result<PathBuf> {
    let out = require_out(c.out)?;
    let mut spec: TrainSpec = match c.config {
        Some(p) => read_config(p)?,
        None => TrainSpec::default(),
    };
    if let Some(s) = c.seed {
        spec.train.seed = s;
    }
    spec.model.validate()?;
    let init = match (a.strategy, a.checkpoint) {
        (Strategy::Finetune, None) => {
            return Err(binscene_core::Error::config("checkpoint", "finetune needs --checkpoint").into());
        }
        (Strategy::Finetune, Some(p)) if !p.is_file() => {
            return Err(binscene_core::Error::config("checkpoint", format!("{} does not exist", p.display())).into());
        }
        (Strategy::Finetune, Some(p)) => {
            let tf = TrainConfig::finetune();
            spec.train.decay_every = tf.decay_every;
            let params = checkpoint::load(p)?;
            spec.model = params.config.clone();
            params
        }
        (_, Some(p)) => checkpoint::load(p)?,
        (_, None) => Params::init(&spec.model, &mut Rng::new(spec.train.seed).derive("init")),
    };
    if !(a.finetune_fraction > 0.0 && a.finetune_fraction <= 1.0) {
        return Err(binscene_core::Error::config("finetune_fraction", format!("{} is not in (0, 1]", a.finetune_fraction)).into());
    }
    let model_path = out.join("model.ckpt");
    if model_path.exists() {
        log::info!("{} already exists, nothing to do", model_path.display());
        return Ok(model_path);
    }
    fs::create_dir_all(out).map_err(|e| io(out, e))?;

    let seed = spec.train.seed;
    let mut train_dirs = select_scenes(a.data, Split::Train, a.strategy, a.finetune_fraction, seed)?;
    if let Some(m) = spec.max_scenes {
        train_dirs.truncate(m);
    }
    let val_dirs = select_scenes(a.data, Split::Val, a.strategy, a.finetune_fraction, seed)?;
    log::info!(
        "training on {} scenes ({}), validating on {}",
        train_dirs.len(),
        a.strategy,
        val_dirs.len()
    );
    println!("train: {} scenes, strategy {}", train_dirs.len(), a.strategy);
    if train_dirs.is_empty() {
        return Err(CliError::Pipeline(format!("no training scenes for strategy {}", a.strategy)));
    }
    let train = load_examples(&train_dirs)?;
    let val = load_examples(&val_dirs)?;
    let outcome = match train_micro(init, &train, &val, &spec.train) {
        Ok(o) => o,
        Err(binscene_sep::Error::Diverged { step, last_good }) => {
            let p = out.join("last_good.ckpt");
            checkpoint::save(&last_good, &p)?;
            return Err(CliError::Pipeline(format!(
                "training diverged at step {step}; last finite parameters saved to {}",
                p.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    outcome.history.write_csv(&out.join("history.csv"))?;
    if !outcome.doa_history.rows.is_empty() {
        outcome.doa_history.write_csv(&out.join("doa_history.csv"))?;
    }
    write_pretty(
        &out.join("train.json"),
        &TrainRecord {
            strategy: a.strategy.to_string(),
            train_scenes: train.len(),
            val_scenes: val.len(),
            steps: outcome.steps,
            init_checkpoint: a.checkpoint,
            spec: &spec,
        },
    )?;
    checkpoint::save(&outcome.params, &model_path)?;
    println!("model saved to {}", model_path.display());
    Ok(model_path)
}

pub enum EstimateSource<'a> {
    Dir(&'a Path),
    Checkpoint(&'a Path),
    Passthrough,
    Oracle,
}

pub struct EvalArgs<'a> {
    pub data: &'a Path,
    pub split: Split,
    pub source: EstimateSource<'a>,
    pub distance: Option<f64>,
}

/// Runs a model over a split, writing `est1.wav` and `est2.wav` per scene.
/// Scenes with both files present are skipped.
pub fn write_model_estimates(params: &Params, data: &Path, split: Split, root: &Path) -> Result<()> {
    let dirs = list_scenes(data, split)?;
    dirs.par_iter()
        .map(|d| -> Result<()> {
            let id = d.file_name().expect("scene dir").to_owned();
            let dest = root.join(split.as_str()).join(id);
            if dest.join("est2.wav").exists() && dest.join("est1.wav").exists() {
                return Ok(());
            }
            let mix = wav::read_binaural(&d.join("mixture.wav"))?;
            let est = separate(params, &mix)?;
            fs::create_dir_all(&dest).map_err(|e| io(&dest, e))?;
            wav::write_binaural(&dest.join("est1.wav"), &est[0], WavFormat::Float32)?;
            wav::write_binaural(&dest.join("est2.wav"), &est[1], WavFormat::Float32)?;
            Ok(())
        })
        .collect()
}

pub fn cmd_eval(c: &Common, a: &EvalArgs) -> Result<EvalReport> {
    let out = require_out(c.out)?;
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let estimates = match a.source {
        EstimateSource::Dir(p) => Estimates::Dir(p.to_path_buf()),
        EstimateSource::Passthrough => Estimates::Passthrough,
        EstimateSource::Oracle => Estimates::Oracle,
        EstimateSource::Checkpoint(p) => {
            let params = checkpoint::load(p)?;
            let root = out.join("estimates");
            write_model_estimates(&params, a.data, a.split, &root)?;
            Estimates::Dir(root)
        }
    };
    let doa = GccDoa {
        head_radius: DEFAULT_HEAD_RADIUS,
    };
    let mut report = evaluate_dataset(a.data, a.split, &estimates, &doa)?;
    if let Some(d) = a.distance {
        report.records.retain(|r| (r.distance - d).abs() < 1e-9);
    }
    report.summary =
        summarize(&report.records).map_err(|e| CliError::Pipeline(format!("nothing to summarise: {e}")))?;
    write_report(out, &report)?;
    print_summary(&report.summary);
    Ok(report)
}

fn print_summary(s: &binscene_core::eval::Summary) {
    let doa = s.overall.doa_mean.map_or("n/a".into(), |v| format!("{v:.2} deg"));
    println!(
        "summary: {} scenes, mean SNRi {:.2} dB, mean DoA error {doa}{}",
        s.scenes,
        s.overall.snri_mean,
        if s.incomplete {
            format!(", incomplete ({} failed)", s.failed_scenes.len())
        } else {
            String::new()
        }
    );
}

pub fn cmd_report(c: &Common, metrics: &Path) -> Result<binscene_core::eval::Summary> {
    let out = require_out(c.out)?;
    let records = binscene_core::eval::read_metrics_csv(metrics)?;
    let summary = summarize(&records).map_err(|e| {
        CliError::Pipeline(format!("{} has no scored records ({e})", metrics.display()))
    })?;
    binscene_core::eval::write_summary(out, &summary)?;
    print_summary(&summary);
    Ok(summary)
}
