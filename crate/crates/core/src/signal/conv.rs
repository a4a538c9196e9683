use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::AudioBuffer;
use crate::error::{Error, Result};

/// Below this many taps in the shorter operand, direct summation is faster
/// than the FFT route.
const DIRECT_LIMIT: usize = 64;

/// Full linear convolution, `x.len() + h.len() - 1` samples long.
pub fn fft_convolve(x: &AudioBuffer, h: &AudioBuffer) -> Result<AudioBuffer> {
    if x.rate() != h.rate() {
        return Err(Error::invalid(format!(
            "cannot convolve signals at {} Hz and {} Hz",
            x.rate(),
            h.rate()
        )));
    }
    if x.is_empty() || h.is_empty() {
        return Err(Error::invalid("convolution operands must be non-empty"));
    }
    Ok(AudioBuffer::from_vec(
        convolve_slices(x.samples(), h.samples()),
        x.rate(),
    ))
}

/// Full linear convolution of two slices. Empty input gives empty output.
pub fn convolve_slices(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; x.len() + h.len() - 1];
    if x.len().min(h.len()) <= DIRECT_LIMIT {
        convolve_into(&mut out, 0, x, h, 1.0);
    } else {
        fft_convolve_into(&mut out, x, h);
    }
    out
}

/// Accumulates `gain * (x * h)` into `out` starting at `offset`, dropping
/// anything that falls past the end of `out`.
pub fn convolve_into(out: &mut [f64], offset: usize, x: &[f64], h: &[f64], gain: f64) {
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let start = offset + i;
        if start >= out.len() {
            break;
        }
        let a = gain * xv;
        let n = h.len().min(out.len() - start);
        for (o, &hv) in out[start..start + n].iter_mut().zip(&h[..n]) {
            *o += a * hv;
        }
    }
}

fn fft_convolve_into(out: &mut [f64], x: &[f64], h: &[f64]) {
    let n = out.len().next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(n, Complex64::default());
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(n, Complex64::default());

    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);

    let norm = 1.0 / n as f64;
    for (o, v) in out.iter_mut().zip(&a) {
        *o = v.re * norm;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn direct(x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len() + h.len() - 1];
        for (i, xv) in x.iter().enumerate() {
            for (j, hv) in h.iter().enumerate() {
                out[i + j] += xv * hv;
            }
        }
        out
    }

    fn buf(v: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(v, 16_000).unwrap()
    }

    #[test]
    fn unit_impulse_is_identity() {
        let x: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = fft_convolve(&buf(x.clone()), &buf(vec![1.0])).unwrap();
        assert_eq!(y.len(), 300);
        for (a, b) in y.samples().iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut h = vec![0.0; 100];
        h[0] = 1.0;
        let y = fft_convolve(&buf(x.clone()), &buf(h)).unwrap();
        assert_eq!(y.len(), 399);
        assert!(y.samples()[..300].iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(y.samples()[300..].iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn length_law() {
        let y = fft_convolve(&buf(vec![0.5; 100]), &buf(vec![0.25; 46])).unwrap();
        assert_eq!(y.len(), 145);
    }

    #[test]
    fn shifts_compose() {
        let mut x = vec![0.0; 10];
        x[3] = 1.0;
        let mut h = vec![0.0; 80];
        h[5] = 1.0;
        let y = fft_convolve(&buf(x), &buf(h)).unwrap();
        for (i, v) in y.samples().iter().enumerate() {
            let expect = if i == 8 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12, "index {i}: {v}");
        }
    }

    #[test]
    fn rejects_rate_mismatch_and_empty() {
        let a = buf(vec![1.0]);
        let b = AudioBuffer::new(vec![1.0], 8_000).unwrap();
        assert!(matches!(fft_convolve(&a, &b), Err(Error::InvalidInput(_))));
        assert!(fft_convolve(&a, &buf(vec![])).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn matches_direct_summation(
            x in prop::collection::vec(-1.0f64..1.0, 1..1200),
            h in prop::collection::vec(-1.0f64..1.0, 1..800),
        ) {
            prop_assume!(x.len() * h.len() <= 1_000_000);
            let got = convolve_slices(&x, &h);
            let want = direct(&x, &h);
            let peak = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() / peak < 1e-9);
            }
        }
    }
}
