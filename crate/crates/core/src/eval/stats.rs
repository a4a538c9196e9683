use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Pooled sizes up to this use exact enumeration of the null distribution.
const EXACT_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    /// U statistic of the first sample.
    pub u: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Rank-biserial correlation `1 - 2U / (n1 n2)`.
    pub r: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Midranks (1-based) of `v`, plus the tie-group sizes.
fn midranks(v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Two-sided p-value by enumerating every split of the pooled ranks into
/// groups of `n1` and the rest.
fn exact_p(ranks: &[f64], n1: usize, u_obs: f64) -> f64 {
    let n = ranks.len();
    let n2 = n - n1;
    let centre = (n1 * n2) as f64 / 2.0;
    let dev = (u_obs - centre).abs();
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let r1: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        let u = r1 - offset;
        total += 1;
        if (u - centre).abs() >= dev - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

/// Mann-Whitney U test of `x` against `y`.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<StatTestResult> {
    let (n1, n2) = (x.len(), y.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("Mann-Whitney U needs two non-empty samples"));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::invalid("samples contain NaN"));
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let nn = (n1 * n2) as f64;
    let n = (n1 + n2) as f64;

    let p_value = if n1 + n2 <= EXACT_LIMIT {
        exact_p(&ranks, n1, u)
    } else {
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
        let var = nn / 12.0 * ((n + 1.0) - tie_term);
        if var <= 0.0 {
            1.0
        } else {
            let z = ((u - nn / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
            let std = Normal::new(0.0, 1.0).expect("unit normal");
            (2.0 * (1.0 - std.cdf(z))).min(1.0)
        }
    };
    Ok(StatTestResult {
        u,
        p_value,
        r: 1.0 - 2.0 * u / nn,
        n1,
        n2,
    })
}

/// Benjamini-Hochberg adjusted p-values, in input order.
pub fn fdr_adjust(p: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut out = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in idx.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        // Never below the raw value, which rounding in p * m / k can break.
        out[i] = running.min(1.0).max(p[i]);
    }
    Ok(out)
}
