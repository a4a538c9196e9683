/// Schroeder backward-integrated energy decay curve in dB, normalised to
/// 0 dB at the start.
pub fn schroeder_curve_db(ir: &[f64]) -> Vec<f64> {
    let mut edc = vec![0.0; ir.len()];
    let mut acc = 0.0;
    for (e, v) in edc.iter_mut().zip(ir).rev() {
        acc += v * v;
        *e = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0);
    if total <= 0.0 {
        return vec![f64::NEG_INFINITY; ir.len()];
    }
    edc.iter().map(|e| 10.0 * (e / total).log10()).collect()
}

/// Reverberation time from a least-squares line through the decay curve
/// between -5 and -25 dB, extrapolated to 60 dB. `None` when the curve never
/// reaches -25 dB.
pub fn estimate_t60(ir: &[f64], rate: u32) -> Option<f64> {
    let edc = schroeder_curve_db(ir);
    let start = edc.iter().position(|&d| d <= -5.0)?;
    let end = edc.iter().position(|&d| d <= -25.0)?;
    if end <= start + 1 {
        return None;
    }
    let pts: Vec<(f64, f64)> = (start..=end)
        .map(|n| (n as f64 / rate as f64, edc[n]))
        .collect();
    let m = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let md = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - md)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_recovers_t60() {
        // Energy envelope falling 60 dB in 0.5 s.
        let rate = 16_000;
        let t60 = 0.5;
        let k = (1e6f64).ln() / (t60 * rate as f64);
        let ir: Vec<f64> = (0..16_000).map(|n| (-k * n as f64 / 2.0).exp()).collect();
        let est = estimate_t60(&ir, rate).unwrap();
        assert!((est - t60).abs() / t60 < 0.02, "{est}");
    }

    #[test]
    fn silence_has_no_estimate() {
        assert_eq!(estimate_t60(&[0.0; 100], 16_000), None);
    }
}
