use crate::error::{Error, Result};
use crate::signal::{AudioBuffer, BinauralBuffer, Ear};

pub const SNR_EPS: f64 = 1e-12;
/// Stand-in for infinite SNRs in aggregate statistics.
pub const SNR_SENTINEL_CAP: f64 = 60.0;

/// Signal-to-noise ratio of an estimate, dB:
/// `10 log10(|s|^2 / (|s - s_hat|^2 + eps))`, or `+inf` when the residual
/// energy is below `eps`.
pub fn snr_slices(s: &[f64], s_hat: &[f64]) -> Result<f64> {
    if s.len() != s_hat.len() {
        return Err(Error::invalid(format!(
            "reference has {} samples, estimate {}",
            s.len(),
            s_hat.len()
        )));
    }
    let num: f64 = s.iter().map(|v| v * v).sum();
    if num == 0.0 {
        return Err(Error::invalid("reference signal is silent"));
    }
    let res: f64 = s.iter().zip(s_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    if res < SNR_EPS {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (num / (res + SNR_EPS)).log10())
}

pub fn snr(s: &AudioBuffer, s_hat: &AudioBuffer) -> Result<f64> {
    snr_slices(s.samples(), s_hat.samples())
}

/// Sum of the left- and right-ear SNRs.
pub fn binaural_snr_sum(s: &BinauralBuffer, s_hat: &BinauralBuffer) -> Result<f64> {
    let mut total = 0.0;
    for ear in Ear::BOTH {
        total += snr(s.ear(ear), s_hat.ear(ear))?;
    }
    Ok(total)
}

/// SNR improvement of `est` over `mix`, averaged over the ears. A perfect
/// estimate of a reference the mixture does not already equal gives `+inf`.
pub fn snri(reference: &BinauralBuffer, est: &BinauralBuffer, mix: &BinauralBuffer) -> Result<f64> {
    let mut total = 0.0;
    for ear in Ear::BOTH {
        let a = snr(reference.ear(ear), est.ear(ear))?;
        let b = snr(reference.ear(ear), mix.ear(ear))?;
        total += if a == b { 0.0 } else { a - b };
    }
    Ok(total / 2.0)
}

/// Replaces infinities with the sentinel cap.
pub fn cap_sentinel(v: f64) -> f64 {
    v.clamp(-SNR_SENTINEL_CAP, SNR_SENTINEL_CAP)
}

/// `perm[c]` is the reference assigned to estimate `c`.
pub type Permutation = [usize; 2];

pub const IDENTITY: Permutation = [0, 1];
pub const SWAPPED: Permutation = [1, 0];

/// Picks the assignment of two estimates to two references that maximises
/// the summed `score(reference, estimate)`. Ties go to the identity.
pub fn best_permutation(mut score: impl FnMut(usize, usize) -> f64) -> (Permutation, f64) {
    let id = score(0, 0) + score(1, 1);
    let sw = score(1, 0) + score(0, 1);
    if sw > id {
        (SWAPPED, sw)
    } else {
        (IDENTITY, id)
    }
}

/// Assignment of estimates to references by summed two-ear SNR; the same
/// assignment holds for both ears.
pub fn pit_align(refs: &[BinauralBuffer; 2], ests: &[BinauralBuffer; 2]) -> Result<(Permutation, f64)> {
    let mut table = [[0.0; 2]; 2];
    for (r, row) in table.iter_mut().enumerate() {
        for (e, cell) in row.iter_mut().enumerate() {
            *cell = binaural_snr_sum(&refs[r], &ests[e])?;
        }
    }
    Ok(best_permutation(|r, e| table[r][e]))
}
