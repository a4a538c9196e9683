use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    cap_sentinel, doa_error, doa_estimate, fdr_adjust, mann_whitney_u, pit_align, snr, snri, DoaTrajectoryEstimate,
    StatTestResult, IDENTITY,
};
use crate::error::{Error, Result};
use crate::scene::{read_manifest, SceneManifest, Split};
use crate::signal::{wav, BinauralBuffer, Ear};

/// Source of the separated signals being scored.
#[derive(Clone, Debug, PartialEq)]
pub enum Estimates {
    /// `<dir>/<split>/<sceneId>/est1.wav` and `est2.wav`.
    Dir(PathBuf),
    /// Both outputs equal the mixture.
    Passthrough,
    /// Outputs equal the references.
    Oracle,
}

/// Frame-wise direction estimator used for the DoA error.
pub trait DoaEstimator: Sync {
    fn estimate(&self, x: &BinauralBuffer) -> Result<DoaTrajectoryEstimate>;
}

/// Interaural cross-correlation with an inverted spherical-head model.
#[derive(Clone, Copy, Debug)]
pub struct GccDoa {
    pub head_radius: f64,
}

impl DoaEstimator for GccDoa {
    fn estimate(&self, x: &BinauralBuffer) -> Result<DoaTrajectoryEstimate> {
        doa_estimate(x, self.head_radius)
    }
}

/// One talker of one scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scene_id: String,
    /// 1 or 2, the reference talker.
    pub talker: u8,
    /// 1 or 2, the estimate assigned to the talker.
    pub estimate: u8,
    pub permutation: String,
    pub pair_type: String,
    pub babble: bool,
    pub distance: f64,
    pub age_group: String,
    /// Mean over ears, uncapped.
    pub snr_db: Option<f64>,
    /// Mean over ears, uncapped; may be `inf`.
    pub snri_db: Option<f64>,
    pub doa_error_deg: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub group: String,
    pub pair_type: Option<String>,
    pub babble: Option<bool>,
    pub distance: Option<f64>,
    pub n: usize,
    pub snri_mean: f64,
    pub snri_sem: f64,
    pub doa_n: usize,
    pub doa_mean: Option<f64>,
    pub doa_sem: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub metric: String,
    pub a: String,
    pub b: String,
    pub test: StatTestResult,
    pub p_adjusted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub records: usize,
    pub scenes: usize,
    pub incomplete: bool,
    pub failed_scenes: Vec<String>,
    pub overall: GroupStat,
    pub groups: Vec<GroupStat>,
    pub contrasts: Vec<Contrast>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub records: Vec<MetricsRecord>,
    pub summary: Summary,
}

/// Scene directories of one split, sorted by scene id.
pub fn list_scenes(dataset: &Path, split: Split) -> Result<Vec<PathBuf>> {
    let dir = dataset.join(split.as_str());
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let p = entry.map_err(|e| Error::io(&dir, e))?.path();
        if p.join("manifest.json").is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn mean_over_ears(a: &BinauralBuffer, b: &BinauralBuffer) -> Result<f64> {
    let mut t = 0.0;
    for ear in Ear::BOTH {
        t += snr(a.ear(ear), b.ear(ear))?;
    }
    Ok(t / 2.0)
}

fn score_scene(
    dir: &Path,
    split: Split,
    estimates: &Estimates,
    doa: &dyn DoaEstimator,
) -> Result<(SceneManifest, Vec<MetricsRecord>)> {
    let m = read_manifest(&dir.join("manifest.json"))?;
    let mix = wav::read_binaural(&dir.join("mixture.wav"))?;
    let refs = [
        wav::read_binaural(&dir.join("ref1.wav"))?,
        wav::read_binaural(&dir.join("ref2.wav"))?,
    ];
    let ests = match estimates {
        Estimates::Dir(root) => {
            let d = root.join(split.as_str()).join(&m.scene_id);
            [wav::read_binaural(&d.join("est1.wav"))?, wav::read_binaural(&d.join("est2.wav"))?]
        }
        Estimates::Passthrough => [mix.clone(), mix.clone()],
        Estimates::Oracle => refs.clone(),
    };
    for e in &ests {
        if e.len() != mix.len() || e.rate() != mix.rate() {
            return Err(Error::invalid(format!(
                "{}: estimate shape {}@{} Hz differs from mixture {}@{} Hz",
                m.scene_id,
                e.len(),
                e.rate(),
                mix.len(),
                mix.rate()
            )));
        }
    }
    let (perm, _) = pit_align(&refs, &ests)?;
    let mut records = Vec::with_capacity(2);
    for (e, &r) in perm.iter().enumerate() {
        let talker = &m.talkers[r];
        let doa_err = match doa.estimate(&ests[e]) {
            Ok(track) => Some(doa_error(&track, &talker.trajectory)?),
            Err(Error::SilentSignal) => None,
            Err(err) => return Err(err),
        };
        records.push(MetricsRecord {
            scene_id: m.scene_id.clone(),
            talker: r as u8 + 1,
            estimate: e as u8 + 1,
            permutation: if perm == IDENTITY { "identity" } else { "swapped" }.into(),
            pair_type: m.pair_type.to_string(),
            babble: m.has_babble(),
            distance: m.distance,
            age_group: talker.age_group.to_string(),
            snr_db: Some(mean_over_ears(&refs[r], &ests[e])?),
            snri_db: Some(snri(&refs[r], &ests[e], &mix)?),
            doa_error_deg: doa_err,
            error: None,
        });
    }
    records.sort_by_key(|r| r.talker);
    Ok((m, records))
}

/// Scores every scene of `split` in `dataset`.
pub fn evaluate_dataset(
    dataset: &Path,
    split: Split,
    estimates: &Estimates,
    doa: &dyn DoaEstimator,
) -> Result<EvalReport> {
    let dirs = list_scenes(dataset, split)?;
    let scored: Vec<(PathBuf, Result<(SceneManifest, Vec<MetricsRecord>)>)> = dirs
        .into_par_iter()
        .map(|d| {
            let r = score_scene(&d, split, estimates, doa);
            (d, r)
        })
        .collect();
    let mut records = Vec::new();
    for (dir, r) in scored {
        match r {
            Ok((_, mut recs)) => records.append(&mut recs),
            Err(e) => {
                if !matches!(e, Error::Io { .. } | Error::Wav { .. } | Error::InvalidInput(_)) {
                    return Err(e);
                }
                let scene_id = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                log::warn!("scene {scene_id}: {e}");
                let m = read_manifest(&dir.join("manifest.json"))?;
                for (k, talker) in m.talkers.iter().enumerate() {
                    records.push(MetricsRecord {
                        scene_id: scene_id.clone(),
                        talker: k as u8 + 1,
                        estimate: 0,
                        permutation: String::new(),
                        pair_type: m.pair_type.to_string(),
                        babble: m.has_babble(),
                        distance: m.distance,
                        age_group: talker.age_group.to_string(),
                        snr_db: None,
                        snri_db: None,
                        doa_error_deg: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    let summary = summarize(&records)?;
    Ok(EvalReport { records, summary })
}

fn mean_sem(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn group_stat(
    label: String,
    pair_type: Option<&str>,
    babble: Option<bool>,
    distance: Option<f64>,
    recs: &[&MetricsRecord],
) -> GroupStat {
    let snri: Vec<f64> = recs.iter().filter_map(|r| r.snri_db).map(cap_sentinel).collect();
    let doa: Vec<f64> = recs.iter().filter_map(|r| r.doa_error_deg).collect();
    let (snri_mean, snri_sem) = mean_sem(&snri);
    let (dm, ds) = mean_sem(&doa);
    GroupStat {
        group: label,
        pair_type: pair_type.map(str::to_string),
        babble,
        distance,
        n: snri.len(),
        snri_mean,
        snri_sem,
        doa_n: doa.len(),
        doa_mean: (!doa.is_empty()).then_some(dm),
        doa_sem: (!doa.is_empty()).then_some(ds),
    }
}

fn babble_label(b: bool) -> &'static str {
    if b {
        "babble"
    } else {
        "clean"
    }
}

/// Group means, standard errors and FDR-adjusted contrasts between the
/// levels of each condition tag.
pub fn summarize(records: &[MetricsRecord]) -> Result<Summary> {
    let ok: Vec<&MetricsRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    if ok.is_empty() {
        return Err(Error::invalid("no scored records to summarise"));
    }
    let failed: BTreeSet<String> = records
        .iter()
        .filter(|r| r.error.is_some())
        .map(|r| r.scene_id.clone())
        .collect();
    let scenes: BTreeSet<&str> = records.iter().map(|r| r.scene_id.as_str()).collect();

    let pairs: BTreeSet<&str> = ok.iter().map(|r| r.pair_type.as_str()).collect();
    let babbles: BTreeSet<bool> = ok.iter().map(|r| r.babble).collect();
    let mut distances: Vec<f64> = ok.iter().map(|r| r.distance).collect();
    distances.sort_by(f64::total_cmp);
    distances.dedup();

    let mut groups = Vec::new();
    for use_p in [false, true] {
        for use_b in [false, true] {
            for use_d in [false, true] {
                if !(use_p || use_b || use_d) {
                    continue;
                }
                let ps: Vec<Option<&str>> = if use_p { pairs.iter().map(|p| Some(*p)).collect() } else { vec![None] };
                let bs: Vec<Option<bool>> = if use_b { babbles.iter().map(|b| Some(*b)).collect() } else { vec![None] };
                let ds: Vec<Option<f64>> = if use_d { distances.iter().map(|d| Some(*d)).collect() } else { vec![None] };
                for p in &ps {
                    for b in &bs {
                        for d in &ds {
                            let sel: Vec<&MetricsRecord> = ok
                                .iter()
                                .copied()
                                .filter(|r| p.is_none_or(|p| r.pair_type == p))
                                .filter(|r| b.is_none_or(|b| r.babble == b))
                                .filter(|r| d.is_none_or(|d| r.distance == d))
                                .collect();
                            if sel.is_empty() {
                                continue;
                            }
                            let mut parts = Vec::new();
                            if let Some(p) = p {
                                parts.push(p.to_string());
                            }
                            if let Some(b) = b {
                                parts.push(babble_label(*b).to_string());
                            }
                            if let Some(d) = d {
                                parts.push(format!("{d:.1}m"));
                            }
                            groups.push(group_stat(parts.join("/"), *p, *b, *d, &sel));
                        }
                    }
                }
            }
        }
    }

    // Marginal contrasts between levels of each tag.
    type Level<'a> = (String, Vec<&'a MetricsRecord>);
    let families: Vec<Vec<Level>> = vec![
        pairs
            .iter()
            .map(|p| (p.to_string(), ok.iter().copied().filter(|r| r.pair_type == *p).collect()))
            .collect(),
        babbles
            .iter()
            .map(|b| (babble_label(*b).to_string(), ok.iter().copied().filter(|r| r.babble == *b).collect()))
            .collect(),
        distances
            .iter()
            .map(|d| (format!("{d:.1}m"), ok.iter().copied().filter(|r| r.distance == *d).collect()))
            .collect(),
    ];
    let mut contrasts = Vec::new();
    for fam in &families {
        for (i, a) in fam.iter().enumerate() {
            for b in &fam[i + 1..] {
                for metric in ["snri_db", "doa_error_deg"] {
                    let pick = |rs: &[&MetricsRecord]| -> Vec<f64> {
                        rs.iter()
                            .filter_map(|r| match metric {
                                "snri_db" => r.snri_db.map(cap_sentinel),
                                _ => r.doa_error_deg,
                            })
                            .collect()
                    };
                    let (xa, xb) = (pick(&a.1), pick(&b.1));
                    if xa.is_empty() || xb.is_empty() {
                        continue;
                    }
                    contrasts.push(Contrast {
                        metric: metric.into(),
                        a: a.0.clone(),
                        b: b.0.clone(),
                        test: mann_whitney_u(&xa, &xb)?,
                        p_adjusted: f64::NAN,
                    });
                }
            }
        }
    }
    let raw: Vec<f64> = contrasts.iter().map(|c| c.test.p_value).collect();
    for (c, p) in contrasts.iter_mut().zip(fdr_adjust(&raw)?) {
        c.p_adjusted = p;
    }

    Ok(Summary {
        records: records.len(),
        scenes: scenes.len(),
        incomplete: !failed.is_empty(),
        failed_scenes: failed.into_iter().collect(),
        overall: group_stat("all".into(), None, None, None, &ok),
        groups,
        contrasts,
    })
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct PlotRow<'a> {
    condition: &'static str,
    pair_type: &'a str,
    distance: f64,
    n: usize,
    mean: f64,
    sem: f64,
}

/// `summary.json` and `plots/*.csv` under `out`.
pub fn write_summary(out: &Path, summary: &Summary) -> Result<()> {
    let plots = out.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let path = out.join("summary.json");
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let cells: Vec<&GroupStat> = summary
        .groups
        .iter()
        .filter(|g| g.pair_type.is_some() && g.babble.is_some() && g.distance.is_some())
        .collect();
    for (name, snri) in [("snri_by_condition.csv", true), ("doa_by_condition.csv", false)] {
        let path = plots.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        for g in &cells {
            let (n, mean, sem) = if snri {
                (g.n, g.snri_mean, g.snri_sem)
            } else {
                match (g.doa_mean, g.doa_sem) {
                    (Some(m), Some(s)) => (g.doa_n, m, s),
                    _ => continue,
                }
            };
            w.serialize(PlotRow {
                condition: babble_label(g.babble.unwrap()),
                pair_type: g.pair_type.as_deref().unwrap(),
                distance: g.distance.unwrap(),
                n,
                mean,
                sem,
            })
            .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// `metrics.csv`, `summary.json` and plot tables under `out`.
pub fn write_report(out: &Path, report: &EvalReport) -> Result<()> {
    write_metrics_csv(&out.join("metrics.csv"), &report.records)?;
    write_summary(out, &report.summary)
}
