//! Small numeric kernels shared by the link and spectrum code.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

/// Full linear convolution.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

/// Causal FIR output `sum_j taps[j] * x[n - j]` for one index, treating
/// samples before the start of `x` as zero.
#[inline]
pub fn fir_at(x: &[f64], taps: &[f64], n: usize) -> f64 {
    let j_max = n.min(taps.len() - 1);
    let mut acc = 0.0;
    for j in 0..=j_max {
        acc += taps[j] * x[n - j];
    }
    acc
}

/// Fills `out` with i.i.d. zero-mean Gaussian samples of standard deviation `sd`.
pub fn fill_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64], sd: f64) {
    for o in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *o = sd * z;
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch averaged periodogram of a complex sequence: Hann window, 50% overlap,
/// two-sided PSD in FFT bin order, units of power per Hz.
pub fn welch_complex(x: &[Complex64], fs: f64, nfft: usize) -> Vec<f64> {
    assert!(nfft >= 2 && x.len() >= nfft, "welch: record shorter than one segment");
    let win = hann(nfft);
    let u: f64 = win.iter().map(|w| w * w).sum();
    let hop = nfft / 2;
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut acc = vec![0.0; nfft];
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let mut segments = 0usize;
    let mut start = 0;
    while start + nfft <= x.len() {
        for ((b, &s), &w) in buf.iter_mut().zip(&x[start..start + nfft]).zip(&win) {
            *b = s * w;
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let scale = 1.0 / (fs * u * segments as f64);
    acc.iter_mut().for_each(|a| *a *= scale);
    acc
}

/// One-sided Welch PSD of a real sequence, bins `0..=nfft/2`.
pub fn welch_real(x: &[f64], fs: f64, nfft: usize) -> Vec<f64> {
    let cx: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let two_sided = welch_complex(&cx, fs, nfft);
    let half = nfft / 2;
    (0..=half)
        .map(|k| {
            if k == 0 || k == half {
                two_sided[k]
            } else {
                2.0 * two_sided[k]
            }
        })
        .collect()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}
