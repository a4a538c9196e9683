use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::room::{MicArray, MultiChannelRir};
use crate::signal::SPEED_OF_SOUND;

/// Analysis window length in samples, centred on the sample being labelled.
pub const SDM_WINDOW: usize = 32;
/// Windows quieter than this fraction of the squared response peak carry
/// no usable direction.
const DIFFUSE_FLOOR: f64 = 1e-4;

/// Per-sample direction of arrival of a room response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoaTrack {
    /// Azimuth in degrees in (-180, 180], or `None` for diffuse samples.
    pub azimuth: Vec<Option<f64>>,
    /// Normalised correlation peak height in [0, 1].
    pub confidence: Vec<f64>,
}

impl DoaTrack {
    pub fn len(&self) -> usize {
        self.azimuth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.azimuth.is_empty()
    }

    /// Left-right mirror image (azimuth negated).
    pub fn mirrored(&self) -> Self {
        Self {
            azimuth: self.azimuth.iter().map(|a| a.map(|v| -v)).collect(),
            confidence: self.confidence.clone(),
        }
    }
}

/// Least-squares solver for a plane-wave direction from delays against the
/// centre capsule: rows of `(P^T P)^-1 P^T`.
struct PlaneWaveSolver {
    pinv: Vec<[f64; 3]>,
}

impl PlaneWaveSolver {
    fn new(array: &MicArray) -> Result<Self> {
        let p: Vec<[f64; 3]> = array.capsules[1..]
            .iter()
            .map(|c| {
                let d = c.sub(array.capsules[0]);
                [d.x, d.y, d.z]
            })
            .collect();
        let mut g = [[0.0; 3]; 3];
        for row in &p {
            for i in 0..3 {
                for j in 0..3 {
                    g[i][j] += row[i] * row[j];
                }
            }
        }
        let det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1])
            - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
            + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
        let scale = g[0][0] + g[1][1] + g[2][2];
        if p.len() < 3 || det.abs() <= 1e-9 * scale.powi(3) {
            return Err(Error::config(
                "array",
                "capsule offsets do not span three dimensions",
            ));
        }
        let inv = [
            [
                (g[1][1] * g[2][2] - g[1][2] * g[2][1]) / det,
                (g[0][2] * g[2][1] - g[0][1] * g[2][2]) / det,
                (g[0][1] * g[1][2] - g[0][2] * g[1][1]) / det,
            ],
            [
                (g[1][2] * g[2][0] - g[1][0] * g[2][2]) / det,
                (g[0][0] * g[2][2] - g[0][2] * g[2][0]) / det,
                (g[0][2] * g[1][0] - g[0][0] * g[1][2]) / det,
            ],
            [
                (g[1][0] * g[2][1] - g[1][1] * g[2][0]) / det,
                (g[0][1] * g[2][0] - g[0][0] * g[2][1]) / det,
                (g[0][0] * g[1][1] - g[0][1] * g[1][0]) / det,
            ],
        ];
        let pinv = p
            .iter()
            .map(|row| {
                let mut out = [0.0; 3];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..3).map(|j| inv[i][j] * row[j]).sum();
                }
                out
            })
            .collect();
        Ok(Self { pinv })
    }

    /// Propagation direction towards the source, unnormalised, from delays
    /// in seconds (positive when a capsule hears the wave later).
    fn direction(&self, tdoa: &[f64]) -> [f64; 3] {
        let mut u = [0.0; 3];
        for (row, t) in self.pinv.iter().zip(tdoa) {
            for i in 0..3 {
                u[i] -= row[i] * SPEED_OF_SOUND * t;
            }
        }
        u
    }
}

/// Assigns a direction to every sample of the response.
///
/// Each sample gets a 32-sample window centred on it. Every outer capsule is
/// cross-correlated with the centre capsule over the lags the array
/// geometry allows, the peak is refined by parabolic interpolation, and the
/// resulting delays give a least-squares plane-wave direction whose
/// horizontal projection is the azimuth.
pub fn sdm_analyze(rir: &MultiChannelRir, array: &MicArray) -> Result<DoaTrack> {
    if rir.channels.len() != array.len() {
        return Err(Error::invalid(format!(
            "response has {} channels, array has {} capsules",
            rir.channels.len(),
            array.len()
        )));
    }
    let len = rir.len();
    if rir.channels.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("response channels differ in length"));
    }
    let solver = PlaneWaveSolver::new(array)?;
    let fs = rir.rate as f64;
    let max_lag = (array.max_tdoa() * fs).ceil() as i64 + 1;

    let chans: Vec<&[f64]> = rir.channels.iter().map(|c| c.samples()).collect();
    let center = chans[0];
    let peak = center.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = DIFFUSE_FLOOR * peak * peak;
    let half = (SDM_WINDOW / 2) as i64;
    let at = |c: &[f64], i: i64| -> f64 {
        if i >= 0 && (i as usize) < c.len() {
            c[i as usize]
        } else {
            0.0
        }
    };

    let mut azimuth = Vec::with_capacity(len);
    let mut confidence = Vec::with_capacity(len);
    let mut tdoa = vec![0.0; chans.len() - 1];
    let mut xc = vec![0.0; (2 * max_lag + 1) as usize];
    for n in 0..len as i64 {
        let lo = n - half;
        let hi = n + half;
        let e0: f64 = (lo..hi).map(|i| at(center, i).powi(2)).sum();
        if e0 < floor || e0 == 0.0 {
            azimuth.push(None);
            confidence.push(0.0);
            continue;
        }
        let mut conf = 0.0;
        for (ci, ch) in chans[1..].iter().enumerate() {
            for (k, lag) in (-max_lag..=max_lag).enumerate() {
                xc[k] = (lo..hi).map(|i| at(center, i) * at(ch, i + lag)).sum();
            }
            let k = (0..xc.len())
                .max_by(|&a, &b| xc[a].total_cmp(&xc[b]))
                .unwrap();
            let mut lag = k as f64 - max_lag as f64;
            if k > 0 && k + 1 < xc.len() {
                let (a, b, c) = (xc[k - 1], xc[k], xc[k + 1]);
                let denom = a - 2.0 * b + c;
                if denom < 0.0 {
                    lag += (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
                }
            }
            tdoa[ci] = lag / fs;
            let ei: f64 = (lo..hi).map(|i| at(ch, i + k as i64 - max_lag).powi(2)).sum();
            if ei > 0.0 {
                conf += (xc[k] / (e0 * ei).sqrt()).clamp(0.0, 1.0);
            }
        }
        let u = solver.direction(&tdoa);
        azimuth.push(Some(u[1].atan2(u[0]).to_degrees()));
        confidence.push(conf / (chans.len() - 1) as f64);
    }
    Ok(DoaTrack {
        azimuth,
        confidence,
    })
}
