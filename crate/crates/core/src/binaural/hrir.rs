use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{frontal_azimuths, is_grid_azimuth};
use crate::error::{Error, Result};
use crate::signal::{resample, wav, AudioBuffer, BinauralBuffer, PIPELINE_RATE, SPEED_OF_SOUND};

/// Length of a synthetic HRIR in samples at 16 kHz.
pub const HRIR_LEN: usize = 80;
/// Common delay of both ears in a synthetic HRIR, so the far-ear delay and
/// the two-sided shadow filter stay causal.
pub const HRIR_BULK_DELAY: usize = 32;
pub const DEFAULT_HEAD_RADIUS: f64 = 0.07;

const FRAC_DELAY_HALF_WIDTH: f64 = 14.0;
const SHADOW_HALF_WIDTH: i64 = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HrirOrigin {
    MeasuredPack { subject: serde_json::Value },
    Synthetic { head_radius: f64 },
}

/// Frontal-plane HRIRs on the 5 degree grid.
#[derive(Clone, Debug)]
pub struct HrirSet {
    entries: BTreeMap<i32, BinauralBuffer>,
    rate: u32,
    reference_distance: f64,
    origin: HrirOrigin,
}

impl HrirSet {
    pub fn new(
        entries: BTreeMap<i32, BinauralBuffer>,
        reference_distance: f64,
        origin: HrirOrigin,
    ) -> Result<Self> {
        let missing: Vec<i32> = frontal_azimuths().filter(|a| !entries.contains_key(a)).collect();
        if !missing.is_empty() {
            return Err(Error::invalid(format!("HRIR set lacks azimuths {missing:?}")));
        }
        if let Some(bad) = entries.keys().find(|a| !is_grid_azimuth(**a)) {
            return Err(Error::invalid(format!("azimuth {bad} is off the frontal grid")));
        }
        let first = entries.values().next().unwrap();
        if entries
            .values()
            .any(|h| h.len() != first.len() || h.rate() != first.rate())
        {
            return Err(Error::invalid("HRIRs differ in length or rate"));
        }
        if !(reference_distance > 0.0) {
            return Err(Error::invalid("reference distance must be positive"));
        }
        Ok(Self {
            rate: first.rate(),
            entries,
            reference_distance,
            origin,
        })
    }

    /// Spherical-head set at 16 kHz, referenced to 1 m.
    pub fn synthetic(head_radius: f64) -> Result<Self> {
        let entries = frontal_azimuths()
            .map(|az| Ok((az, synth_hrir(head_radius, az as f64)?)))
            .collect::<Result<_>>()?;
        Self::new(entries, 1.0, HrirOrigin::Synthetic { head_radius })
    }

    pub fn get(&self, azimuth: i32) -> Option<&BinauralBuffer> {
        self.entries.get(&azimuth)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, &BinauralBuffer)> {
        self.entries.iter().map(|(a, h)| (*a, h))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn filter_len(&self) -> usize {
        self.entries.values().next().map_or(0, |h| h.len())
    }

    pub fn reference_distance(&self) -> f64 {
        self.reference_distance
    }

    pub fn origin(&self) -> &HrirOrigin {
        &self.origin
    }

    /// Mean two-ear energy over all directions.
    pub fn mean_energy(&self) -> f64 {
        self.entries.values().map(|h| h.energy()).sum::<f64>() / self.entries.len() as f64
    }
}

/// Woodworth interaural time difference in seconds, positive when the
/// source is on the left (the right ear lags).
pub fn woodworth_itd(head_radius: f64, azimuth_deg: f64) -> f64 {
    let th = azimuth_deg.to_radians();
    let sign = if th < 0.0 { -1.0 } else { 1.0 };
    let a = th.abs();
    sign * head_radius / SPEED_OF_SOUND * (a + a.sin())
}

/// Windowed-sinc fractional delay of `delay` samples; an exact unit impulse
/// when the delay is an integer.
fn fractional_delay(delay: f64, len: usize) -> Vec<f64> {
    let mut h = vec![0.0; len];
    if (delay - delay.round()).abs() < 1e-12 {
        h[delay.round() as usize] = 1.0;
        return h;
    }
    for (n, v) in h.iter_mut().enumerate() {
        let u = n as f64 - delay;
        if u.abs() < FRAC_DELAY_HALF_WIDTH {
            let window = 0.5 + 0.5 * (PI * u / FRAC_DELAY_HALF_WIDTH).cos();
            *v = (PI * u).sin() / (PI * u) * window;
        }
    }
    h
}

/// Head shadow for the far ear: the forward-backward response of a
/// one-pole low-pass, blended in proportion to `|sin(azimuth)|`. The
/// two-sided response is symmetric, so it adds no delay.
fn head_shadow(head_radius: f64, azimuth_deg: f64) -> Vec<(i64, f64)> {
    let strength = azimuth_deg.to_radians().sin().abs();
    let cutoff = 2.0 * SPEED_OF_SOUND / (2.0 * PI * head_radius);
    let alpha = (-2.0 * PI * cutoff / PIPELINE_RATE as f64).exp();
    let scale = (1.0 - alpha) / (1.0 + alpha);
    (-SHADOW_HALF_WIDTH..=SHADOW_HALF_WIDTH)
        .map(|k| {
            let lp = scale * alpha.powi(k.abs() as i32);
            let direct = if k == 0 { 1.0 - strength } else { 0.0 };
            (k, direct + strength * lp)
        })
        .filter(|(_, g)| *g != 0.0)
        .collect()
}

/// Spherical-head HRIR at 16 kHz: Woodworth ITD applied to the far ear as
/// a fractional delay, plus a low-pass head shadow on that ear.
pub fn synth_hrir(head_radius: f64, azimuth_deg: f64) -> Result<BinauralBuffer> {
    if !(0.05..=0.12).contains(&head_radius) {
        return Err(Error::invalid(format!(
            "head radius {head_radius} m outside [0.05, 0.12] m"
        )));
    }
    if !(azimuth_deg.abs() <= 90.0) {
        return Err(Error::invalid(format!(
            "azimuth {azimuth_deg} outside the frontal range"
        )));
    }
    let lateral = azimuth_deg.abs();
    let itd = woodworth_itd(head_radius, lateral) * PIPELINE_RATE as f64;
    let near = fractional_delay(HRIR_BULK_DELAY as f64, HRIR_LEN);
    let delayed = fractional_delay(HRIR_BULK_DELAY as f64 + itd, HRIR_LEN);
    let mut far = vec![0.0; HRIR_LEN];
    for (k, g) in head_shadow(head_radius, lateral) {
        for (n, v) in far.iter_mut().enumerate() {
            let m = n as i64 - k;
            if (0..HRIR_LEN as i64).contains(&m) {
                *v += g * delayed[m as usize];
            }
        }
    }
    let near = AudioBuffer::new(near, PIPELINE_RATE)?;
    let far = AudioBuffer::new(far, PIPELINE_RATE)?;
    if azimuth_deg >= 0.0 {
        BinauralBuffer::new(near, far)
    } else {
        BinauralBuffer::new(far, near)
    }
}

/// Contents of `manifest.json` in an HRIR pack directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PackManifest {
    pub rate: u32,
    pub reference_distance: f64,
    #[serde(default)]
    pub subject: serde_json::Value,
}

/// `az+040_el000.wav`, `az-045_el000.wav`, `az+000_el000.wav`.
pub fn pack_file_name(azimuth: i32) -> String {
    let sign = if azimuth < 0 { '-' } else { '+' };
    format!("az{sign}{:03}_el000.wav", azimuth.abs())
}

/// Loads a pack directory, resampling every filter to 16 kHz.
pub fn load_hrir_pack(dir: &Path) -> Result<HrirSet> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: PackManifest =
        serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;

    let missing: Vec<i32> = frontal_azimuths()
        .filter(|&az| !dir.join(pack_file_name(az)).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::PackIncomplete {
            path: dir.to_path_buf(),
            missing,
        });
    }

    let mut entries = BTreeMap::new();
    for az in frontal_azimuths() {
        let stereo = wav::read_binaural(&dir.join(pack_file_name(az)))?;
        let (l, r) = stereo.into_ears();
        let l = resample(&l, PIPELINE_RATE)?;
        let r = resample(&r, PIPELINE_RATE)?;
        entries.insert(az, BinauralBuffer::new(l, r)?);
    }
    HrirSet::new(
        entries,
        manifest.reference_distance,
        HrirOrigin::MeasuredPack {
            subject: manifest.subject,
        },
    )
}

pub fn write_hrir_pack(set: &HrirSet, dir: &Path, subject: serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = PackManifest {
        rate: set.rate(),
        reference_distance: set.reference_distance(),
        subject,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    for (az, h) in set.iter() {
        wav::write_binaural(&dir.join(pack_file_name(az)), h, wav::WavFormat::Float32)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Interaural lag of the right ear relative to the left, from the
    /// parabolic-interpolated cross-correlation peak.
    fn xcorr_lag(h: &BinauralBuffer) -> f64 {
        let (l, r) = (h.left().samples(), h.right().samples());
        let lag_max = 20i64;
        let xc = |lag: i64| -> f64 {
            (0..l.len() as i64)
                .filter_map(|n| {
                    let m = n + lag;
                    (0..r.len() as i64).contains(&m).then(|| l[n as usize] * r[m as usize])
                })
                .sum()
        };
        let vals: Vec<f64> = (-lag_max..=lag_max).map(xc).collect();
        let k = (0..vals.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        let (a, b, c) = (vals[k - 1], vals[k], vals[k + 1]);
        (k as i64 - lag_max) as f64 + 0.5 * (a - c) / (a - 2.0 * b + c)
    }

    #[test]
    fn midline_is_diotic() {
        let h = synth_hrir(0.07, 0.0).unwrap();
        assert_eq!(h.left(), h.right());
        assert_eq!(h.left().samples()[HRIR_BULK_DELAY], 1.0);
    }

    #[test]
    fn woodworth_at_ninety_degrees() {
        let itd = woodworth_itd(0.07, 90.0);
        assert!((itd - 0.07 / 343.0 * (PI / 2.0 + 1.0)).abs() < 1e-15);
        assert!((itd * 1e6 - 524.6).abs() < 0.1);
        assert!((itd * 16_000.0 - 8.39).abs() < 0.01);
        let lag = xcorr_lag(&synth_hrir(0.07, 90.0).unwrap());
        assert!((lag - itd * 16_000.0).abs() < 0.3, "lag {lag}");
    }

    #[test]
    fn measured_lag_follows_woodworth() {
        for az in [-75.0, -40.0, -10.0, 5.0, 30.0, 60.0] {
            let lag = xcorr_lag(&synth_hrir(0.07, az).unwrap());
            let want = woodworth_itd(0.07, az) * 16_000.0;
            assert!((lag - want).abs() < 0.25, "az {az}: {lag} vs {want}");
        }
    }

    #[test]
    fn mirror_symmetry_is_exact() {
        for az in [5.0, 30.0, 45.0, 90.0] {
            let p = synth_hrir(0.07, az).unwrap();
            let m = synth_hrir(0.07, -az).unwrap();
            assert_eq!(p.left(), m.right());
            assert_eq!(p.right(), m.left());
        }
    }

    #[test]
    fn far_ear_is_quieter() {
        let h = synth_hrir(0.07, 60.0).unwrap();
        assert!(h.right().energy() < h.left().energy());
    }

    #[test]
    fn preconditions() {
        assert!(synth_hrir(0.2, 0.0).is_err());
        assert!(synth_hrir(0.07, 95.0).is_err());
    }

    #[test]
    fn pack_round_trip_and_missing_direction() {
        let dir = tempfile::tempdir().unwrap();
        let set = HrirSet::synthetic(0.07).unwrap();
        write_hrir_pack(&set, dir.path(), serde_json::json!({"age": 8})).unwrap();
        let back = load_hrir_pack(dir.path()).unwrap();
        assert_eq!(back.len(), 37);
        assert_eq!(back.reference_distance(), 1.0);
        assert_eq!(pack_file_name(-45), "az-045_el000.wav");
        assert_eq!(pack_file_name(0), "az+000_el000.wav");

        std::fs::remove_file(dir.path().join(pack_file_name(-45))).unwrap();
        let err = load_hrir_pack(dir.path()).unwrap_err();
        match &err {
            Error::PackIncomplete { missing, .. } => assert_eq!(missing, &vec![-45]),
            e => panic!("unexpected {e}"),
        }
        assert!(err.to_string().contains("-45"));
    }

    #[test]
    fn pack_at_48k_is_resampled() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("manifest.json"),
            r#"{"rate": 48000, "reference_distance": 1.0, "subject": {"id": "c01"}}"#,
        )
        .unwrap();
        for az in frontal_azimuths() {
            let mut v = vec![0.0; 240];
            v[30] = 1.0;
            let ch = AudioBuffer::new(v, 48_000).unwrap();
            wav::write_channels(&dir.path().join(pack_file_name(az)), &[&ch, &ch], wav::WavFormat::Float32)
                .unwrap();
        }
        let set = load_hrir_pack(dir.path()).unwrap();
        assert_eq!(set.rate(), 16_000);
        assert_eq!(set.filter_len(), 80);
    }
}
