use binscene_core::eval::{best_permutation, Permutation, SNR_EPS};
use binscene_core::signal::BinauralBuffer;

use crate::error::Result;

/// Ceiling of a single training SNR term.
pub const SNR_CAP_DB: f64 = 30.0;

fn tau() -> f64 {
    10f64.powf(-SNR_CAP_DB / 10.0)
}

fn check_len(s: &[f64], s_hat: &[f64]) -> Result<()> {
    if s.len() != s_hat.len() {
        return Err(binscene_core::Error::invalid(format!(
            "reference has {} samples, estimate {}",
            s.len(),
            s_hat.len()
        ))
        .into());
    }
    Ok(())
}

fn powers(s: &[f64], s_hat: &[f64]) -> (f64, f64) {
    let ps = s.iter().map(|v| v * v).sum::<f64>();
    let pr = s.iter().zip(s_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (ps, pr)
}

/// SNR with a soft ceiling: a perfect estimate scores exactly
/// [`SNR_CAP_DB`] and the gradient stays finite everywhere.
pub fn capped_snr(s: &[f64], s_hat: &[f64]) -> Result<f64> {
    check_len(s, s_hat)?;
    let (ps, pr) = powers(s, s_hat);
    Ok(10.0 * ((ps + SNR_EPS) / (pr + tau() * ps + SNR_EPS)).log10())
}

/// Adds `scale * d capped_snr / d s_hat` to `out`.
pub(crate) fn capped_snr_grad(s: &[f64], s_hat: &[f64], scale: f64, out: &mut [f64]) {
    let (ps, pr) = powers(s, s_hat);
    let k = scale * 20.0 / std::f64::consts::LN_10 / (pr + tau() * ps + SNR_EPS);
    for ((o, a), b) in out.iter_mut().zip(s).zip(s_hat) {
        *o += k * (a - b);
    }
}

/// `[speaker][ear]` views of two binaural signals.
pub(crate) type Pair<'a> = [[&'a [f64]; 2]; 2];

pub(crate) fn pair_of(b: &[BinauralBuffer; 2]) -> Pair<'_> {
    [
        [b[0].left().samples(), b[0].right().samples()],
        [b[1].left().samples(), b[1].right().samples()],
    ]
}

pub(crate) fn pit_loss_slices(refs: &Pair, ests: &Pair) -> Result<(f64, Permutation)> {
    let mut table = [[0.0; 2]; 2];
    for (r, row) in table.iter_mut().enumerate() {
        for (e, cell) in row.iter_mut().enumerate() {
            *cell = capped_snr(refs[r][0], ests[e][0])? + capped_snr(refs[r][1], ests[e][1])?;
        }
    }
    let (perm, score) = best_permutation(|r, e| table[r][e]);
    Ok((-score, perm))
}

/// Negative summed two-ear capped SNR under the best assignment.
pub fn pit_loss(refs: &[BinauralBuffer; 2], ests: &[BinauralBuffer; 2]) -> Result<(f64, Permutation)> {
    pit_loss_slices(&pair_of(refs), &pair_of(ests))
}

/// Gradient of [`pit_loss`] for a fixed assignment, scaled, per estimate
/// `[speaker][ear]`.
pub(crate) fn pit_grad(refs: &Pair, ests: &Pair, perm: Permutation, scale: f64) -> [[Vec<f64>; 2]; 2] {
    std::array::from_fn(|c| {
        std::array::from_fn(|e| {
            let mut g = vec![0.0; ests[c][e].len()];
            capped_snr_grad(refs[perm[c]][e], ests[c][e], -scale, &mut g);
            g
        })
    })
}

/// Class of a grid azimuth in the frontal half plane, -90 maps to 0.
pub fn doa_class(azimuth: i32) -> Result<usize> {
    if !(-90..=90).contains(&azimuth) || azimuth % 5 != 0 {
        return Err(binscene_core::Error::invalid(format!("azimuth {azimuth} is off the 5-degree frontal grid")).into());
    }
    Ok(((azimuth + 90) / 5) as usize)
}

pub fn class_azimuth(class: usize) -> i32 {
    class as i32 * 5 - 90
}

fn log_softmax_row(row: &[f64]) -> (f64, f64) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = row.iter().map(|v| (v - m).exp()).sum::<f64>();
    (m, z)
}

/// Mean cross-entropy of rows of `classes` logits against integer labels.
pub fn doa_ce_loss(logits: &[f64], classes: usize, labels: &[usize]) -> Result<f64> {
    if logits.len() != classes * labels.len() || labels.iter().any(|l| *l >= classes) {
        return Err(binscene_core::Error::invalid(format!(
            "{} logits do not match {} labels of {classes} classes",
            logits.len(),
            labels.len()
        ))
        .into());
    }
    let mut total = 0.0;
    for (row, &y) in logits.chunks(classes).zip(labels) {
        let (m, z) = log_softmax_row(row);
        total += m + z.ln() - row[y];
    }
    Ok(total / labels.len() as f64)
}

/// Gradient of [`doa_ce_loss`] with respect to the logits, scaled.
pub(crate) fn doa_ce_grad(logits: &[f64], classes: usize, labels: &[usize], scale: f64) -> Vec<f64> {
    let k = scale / labels.len() as f64;
    let mut g = vec![0.0; logits.len()];
    for ((row, out), &y) in logits.chunks(classes).zip(g.chunks_mut(classes)).zip(labels) {
        let (m, z) = log_softmax_row(row);
        for (o, v) in out.iter_mut().zip(row) {
            *o = k * (v - m).exp() / z;
        }
        out[y] -= k;
    }
    g
}
