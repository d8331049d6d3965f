//! Free-running VCO model: Brownian phase noise, Lorentzian-profile spectral
//! synthesis, carrier generation and spectrum estimation.
//!
//! The phase-noise bandwidth `beta` follows the variance law
//! `Var[theta(t)] = 2 pi beta t`. The resulting carrier spectrum is
//! Lorentzian with full half-power width `beta`:
//! `L(f) = (1/pi) (beta/2) / ((beta/2)^2 + f^2)` relative to the carrier.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::seeds::rng_from;
use crate::signals::{grid_samples, Waveform};

/// Largest admissible constant carrier frequency offset, Hz.
pub const MAX_FREQUENCY_OFFSET: f64 = 5e6;

/// Smallest record accepted by [`psd_estimate`].
pub const MIN_PSD_SAMPLES: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseNoiseMode {
    #[default]
    Brownian,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VcoSpec {
    /// Phase-noise 3-dB bandwidth, Hz.
    pub beta: f64,
    /// Constant frequency offset, Hz (receiver only).
    pub delta_f: f64,
    /// Constant phase offset, rad (receiver only).
    pub phi: f64,
    pub mode: PhaseNoiseMode,
    pub carrier_hz: f64,
}

impl VcoSpec {
    pub fn ideal(carrier_hz: f64) -> Self {
        Self {
            beta: 0.0,
            delta_f: 0.0,
            phi: 0.0,
            mode: PhaseNoiseMode::Brownian,
            carrier_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::param("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if !(self.delta_f.abs() <= MAX_FREQUENCY_OFFSET) {
            return Err(Error::param(
                "delta_f",
                format!("|{}| exceeds {MAX_FREQUENCY_OFFSET} Hz", self.delta_f),
            ));
        }
        if !(0.0..TAU).contains(&self.phi) {
            return Err(Error::param("phi", format!("must be in [0, 2pi), got {}", self.phi)));
        }
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(Error::param("carrier_hz", "must be positive"));
        }
        Ok(())
    }
}

/// Sampled phase process with `theta[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrajectory {
    pub theta: Vec<f64>,
    pub fs: f64,
    pub t0: f64,
}

impl PhaseTrajectory {
    pub fn zeros(len: usize, fs: f64) -> Self {
        Self {
            theta: vec![0.0; len],
            fs,
            t0: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

fn check_rate(duration: f64, fs: f64) -> Result<usize> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::param("fs", "must be positive"));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::param("duration", "must be positive"));
    }
    Ok((duration * fs).round().max(1.0) as usize)
}

/// Wiener phase: `theta[n] = theta[n-1] + w[n]`, `w ~ N(0, 2 pi beta / fs)`.
pub fn brownian_phase(duration: f64, fs: f64, beta: f64, rng_seed: u64) -> Result<PhaseTrajectory> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::param("beta", "must be >= 0"));
    }
    let n = check_rate(duration, fs)?;
    let mut theta = vec![0.0; n];
    if beta > 0.0 {
        let sd = (TAU * beta / fs).sqrt();
        let mut rng = rng_from(rng_seed);
        for i in 1..n {
            let z: f64 = rng.sample(StandardNormal);
            theta[i] = theta[i - 1] + sd * z;
        }
    }
    Ok(PhaseTrajectory { theta, fs, t0: 0.0 })
}

/// Single-sideband phase-noise profile: `(offset Hz, dBc/Hz)` feature points.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdProfile {
    points: Vec<(f64, f64)>,
}

impl PsdProfile {
    /// Offsets must be positive and strictly increasing. Levels may be
    /// `-inf` (no power).
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Profile("profile is empty".into()));
        }
        if points.iter().any(|&(f, _)| !(f.is_finite() && f > 0.0)) {
            return Err(Error::Profile("offsets must be positive and finite".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Profile("offsets must be strictly increasing".into()));
        }
        if points.iter().any(|&(_, d)| d.is_nan() || d == f64::INFINITY) {
            return Err(Error::Profile("levels must be finite or -inf".into()));
        }
        Ok(Self { points })
    }

    /// Lorentzian profile of full 3-dB width `beta`, sampled log-uniformly
    /// between `f_min` and `f_max`.
    pub fn lorentzian(beta: f64, f_min: f64, f_max: f64, points_per_decade: usize) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::param("beta", "Lorentzian profile needs beta > 0"));
        }
        if !(f_min > 0.0 && f_max > f_min) {
            return Err(Error::param("f_max", "need 0 < f_min < f_max"));
        }
        let decades = (f_max / f_min).log10();
        let n = ((decades * points_per_decade.max(1) as f64).ceil() as usize).max(1);
        let points = (0..=n)
            .map(|i| {
                let f = f_min * 10f64.powf(decades * i as f64 / n as f64);
                (f, 10.0 * lorentzian(beta, f).log10())
            })
            .collect();
        Self::new(points)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn max_offset(&self) -> f64 {
        self.points.last().unwrap().0
    }

    /// Linear PSD (1/Hz) at offset `f`: dB interpolated linearly in
    /// `log10 f`, held below the first point, zero above the last.
    pub fn value(&self, f: f64) -> f64 {
        let f = f.abs();
        let pts = &self.points;
        if f > pts[pts.len() - 1].0 {
            return 0.0;
        }
        let db = if f <= pts[0].0 {
            pts[0].1
        } else {
            let i = pts.partition_point(|&(x, _)| x < f);
            let (f0, d0) = pts[i - 1];
            let (f1, d1) = pts[i];
            if !(d0.is_finite() && d1.is_finite()) {
                return 0.0;
            }
            let u = (f.log10() - f0.log10()) / (f1.log10() - f0.log10());
            d0 + u * (d1 - d0)
        };
        if db == f64::NEG_INFINITY {
            0.0
        } else {
            10f64.powf(db / 10.0)
        }
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::new(parse_pairs(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

fn parse_pairs(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "offset_hz,psd_dbc_hz" => {}
        _ => return Err(Error::Profile("expected header `offset_hz,psd_dbc_hz`".into())),
    }
    lines
        .map(|l| {
            let mut it = l.split(',').map(str::trim);
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::Profile(format!("malformed row `{l}`")));
            };
            let f = a.parse::<f64>().map_err(|_| Error::Profile(format!("bad offset `{a}`")))?;
            let d = b.parse::<f64>().map_err(|_| Error::Profile(format!("bad level `{b}`")))?;
            Ok((f, d))
        })
        .collect()
}

/// Carrier Lorentzian relative to total power, full 3-dB width `beta`.
pub fn lorentzian(beta: f64, f: f64) -> f64 {
    let h = 0.5 * beta;
    h / (PI * (h * h + f * f))
}

/// Phase process whose two-sided PSD follows `profile`: Hermitian complex
/// Gaussian spectrum weighted by `sqrt(S(f_k) fs N)`, DC removed, inverse FFT.
pub fn spectral_phase(profile: &PsdProfile, duration: f64, fs: f64, rng_seed: u64) -> Result<PhaseTrajectory> {
    let n = check_rate(duration, fs)?;
    let mut rng = rng_from(rng_seed);
    let theta = synthesize(profile, n, fs, &mut rng);
    Ok(PhaseTrajectory { theta, fs, t0: 0.0 })
}

fn synthesize(profile: &PsdProfile, n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    let scale = fs * n as f64;
    for k in 1..=n / 2 {
        let f = k as f64 * fs / n as f64;
        let w = (profile.value(f) * scale).sqrt();
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        if 2 * k == n {
            spec[k] = Complex64::new(w * a, 0.0);
        } else {
            let x = Complex64::new(a, b) * (w / std::f64::consts::SQRT_2);
            spec[k] = x;
            spec[n - k] = x.conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let first = spec[0].re;
    spec.iter().map(|c| (c.re - first) / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Tx,
    Rx,
}

#[inline]
pub(crate) fn cycle_phase(freq: f64, t: f64) -> f64 {
    TAU * (freq * t).rem_euclid(1.0)
}

/// Quadrature carriers: TX `cos(2 pi f_c t + theta)`, `-sin(.)`; RX adds the
/// frequency offset and phase offset.
pub fn carrier_waves(vco: &VcoSpec, theta: &PhaseTrajectory, role: Role) -> Result<(Waveform, Waveform)> {
    vco.validate()?;
    let (freq, phi) = match role {
        Role::Tx => (vco.carrier_hz, 0.0),
        Role::Rx => (vco.carrier_hz + vco.delta_f, vco.phi),
    };
    let n = theta.len();
    let mut i_wave = Vec::with_capacity(n);
    let mut q_wave = Vec::with_capacity(n);
    for (k, th) in theta.theta.iter().enumerate() {
        let t = theta.t0 + k as f64 / theta.fs;
        let x = cycle_phase(freq, t) + th + phi;
        let (s, c) = x.sin_cos();
        i_wave.push(c);
        q_wave.push(-s);
    }
    Ok((
        Waveform::new(i_wave, theta.fs, theta.t0)?,
        Waveform::new(q_wave, theta.fs, theta.t0)?,
    ))
}

/// Single-sideband spectrum as `(offset Hz, dBc/Hz)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdCurve {
    pub offsets: Vec<f64>,
    pub dbc_hz: Vec<f64>,
}

impl PsdCurve {
    pub fn resolution(&self) -> f64 {
        self.offsets.get(1).copied().unwrap_or(0.0) - self.offsets[0]
    }

    /// Reference level: mean linear PSD of the first two nonzero-offset bins.
    pub fn reference_db(&self) -> f64 {
        let lin: f64 = self.dbc_hz[1..3].iter().map(|d| 10f64.powf(d / 10.0)).sum::<f64>() / 2.0;
        10.0 * lin.log10()
    }

    /// Offset where the spectrum first falls 3 dB below [`Self::reference_db`],
    /// linearly interpolated.
    pub fn half_power_offset(&self) -> Option<f64> {
        let target = self.reference_db() - 10.0 * 2f64.log10();
        for i in 2..self.offsets.len() {
            if self.dbc_hz[i] <= target {
                let (f0, d0) = (self.offsets[i - 1], self.dbc_hz[i - 1]);
                let (f1, d1) = (self.offsets[i], self.dbc_hz[i]);
                return Some(f0 + (target - d0) / (d1 - d0) * (f1 - f0));
            }
        }
        None
    }

    /// Full two-sided half-power width.
    pub fn three_db_bandwidth(&self) -> Option<f64> {
        self.half_power_offset().map(|f| 2.0 * f)
    }

    /// Level at `f`, linear interpolation between bins.
    pub fn level_at(&self, f: f64) -> f64 {
        let i = self.offsets.partition_point(|&x| x < f).clamp(1, self.offsets.len() - 1);
        let (f0, d0) = (self.offsets[i - 1], self.dbc_hz[i - 1]);
        let (f1, d1) = (self.offsets[i], self.dbc_hz[i]);
        d0 + (f - f0) / (f1 - f0) * (d1 - d0)
    }

    /// Least-squares slope of dB against `log10 f` over `[f_lo, f_hi]`.
    pub fn slope_db_per_decade(&self, f_lo: f64, f_hi: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .offsets
            .iter()
            .zip(&self.dbc_hz)
            .filter(|(&f, _)| f >= f_lo && f <= f_hi && f > 0.0)
            .map(|(&f, &d)| (f.log10(), d))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("offset_hz,psd_dbc_hz\n");
        for (f, d) in self.offsets.iter().zip(&self.dbc_hz) {
            let _ = writeln!(s, "{f},{d}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (offsets, dbc_hz) = parse_pairs(text)?.into_iter().unzip();
        Ok(Self { offsets, dbc_hz })
    }
}

fn default_nfft(len: usize) -> usize {
    let target = (len / 16).max(16);
    (1usize << (usize::BITS - 1 - target.leading_zeros())).min(1 << 16)
}

/// Welch estimate of a real carrier's spectrum around `f_c`, single-sideband,
/// in dBc/Hz relative to the total power of `w`.
pub fn psd_estimate(w: &Waveform, f_c: f64) -> Result<PsdCurve> {
    if w.len() < MIN_PSD_SAMPLES {
        return Err(Error::param(
            "samples",
            format!("need at least {MIN_PSD_SAMPLES} samples, got {}", w.len()),
        ));
    }
    if !(f_c >= 0.0 && f_c < w.fs / 2.0) {
        return Err(Error::param("f_c", "carrier must lie below Nyquist"));
    }
    let nfft = default_nfft(w.len());
    let psd = dsp::welch_real(&w.samples, w.fs, nfft);
    let power = w.samples.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
    let df = w.fs / nfft as f64;
    let k0 = (f_c / df).round() as usize;
    let offsets = (0..psd.len() - k0).map(|k| k as f64 * df).collect();
    let dbc_hz = psd[k0..]
        .iter()
        .map(|p| 10.0 * (p / power).max(1e-300).log10())
        .collect();
    Ok(PsdCurve { offsets, dbc_hz })
}

/// Carrier spectrum implied by a phase trajectory, computed on the complex
/// envelope `exp(j theta)` with its coherent (mean) component removed.
/// Both sidebands are averaged into one.
pub fn carrier_psd(theta: &PhaseTrajectory, nfft: Option<usize>) -> Result<PsdCurve> {
    let nfft = nfft.unwrap_or_else(|| default_nfft(theta.len()));
    if theta.len() < 4 * nfft {
        return Err(Error::param("samples", "trajectory shorter than four Welch segments"));
    }
    let mut env: Vec<Complex64> = theta.theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
    let mean = env.iter().sum::<Complex64>() / env.len() as f64;
    env.iter_mut().for_each(|e| *e -= mean);
    let psd = dsp::welch_complex(&env, theta.fs, nfft);
    let df = theta.fs / nfft as f64;
    let half = nfft / 2;
    let offsets = (0..half).map(|k| k as f64 * df).collect();
    let dbc_hz = (0..half)
        .map(|k| {
            let p = if k == 0 { psd[0] } else { 0.5 * (psd[k] + psd[nfft - k]) };
            10.0 * p.max(1e-300).log10()
        })
        .collect();
    Ok(PsdCurve { offsets, dbc_hz })
}

/// Spectral-mode streaming parameters: blocks of `block_len` samples at
/// `rate`, linearly interpolated to arbitrary query times.
#[derive(Debug, Clone)]
pub struct SpectralStreamConfig {
    pub profile: PsdProfile,
    pub rate: f64,
    pub block_len: usize,
}

impl SpectralStreamConfig {
    pub fn lorentzian(beta: f64) -> Result<Self> {
        let rate = 40e6;
        Ok(Self {
            profile: PsdProfile::lorentzian(beta, 1.0, rate / 2.0, 20)?,
            rate,
            block_len: 1 << 16,
        })
    }
}

/// Phase process sampled on demand at nondecreasing times, restartable at
/// `theta(0) = 0`.
#[derive(Debug, Clone)]
pub enum PhaseStream {
    Zero,
    Brownian {
        rate: f64,
        rng: ChaCha8Rng,
        t: f64,
        theta: f64,
    },
    Spectral {
        cfg: Box<SpectralStreamConfig>,
        rng: ChaCha8Rng,
        block: Vec<f64>,
        block_start: f64,
    },
}

impl PhaseStream {
    pub fn brownian(beta: f64, rng: ChaCha8Rng) -> Self {
        if beta == 0.0 {
            return PhaseStream::Zero;
        }
        PhaseStream::Brownian {
            rate: TAU * beta,
            rng,
            t: 0.0,
            theta: 0.0,
        }
    }

    pub fn spectral(cfg: SpectralStreamConfig, rng: ChaCha8Rng) -> Self {
        PhaseStream::Spectral {
            cfg: Box::new(cfg),
            rng,
            block: Vec::new(),
            block_start: 0.0,
        }
    }

    pub fn new(mode: PhaseNoiseMode, beta: f64, profile: Option<&PsdProfile>, rng: ChaCha8Rng) -> Result<Self> {
        if beta == 0.0 && profile.is_none() {
            return Ok(PhaseStream::Zero);
        }
        match mode {
            PhaseNoiseMode::Brownian => Ok(Self::brownian(beta, rng)),
            PhaseNoiseMode::Spectral => {
                let mut cfg = SpectralStreamConfig::lorentzian(beta.max(f64::MIN_POSITIVE))?;
                if let Some(p) = profile {
                    cfg.profile = p.clone();
                }
                Ok(Self::spectral(cfg, rng))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, PhaseStream::Zero)
    }

    /// Restarts the process at `theta(0) = 0`; the random stream continues.
    pub fn reset(&mut self) {
        match self {
            PhaseStream::Zero => {}
            PhaseStream::Brownian { t, theta, .. } => {
                *t = 0.0;
                *theta = 0.0;
            }
            PhaseStream::Spectral { block, block_start, .. } => {
                block.clear();
                *block_start = 0.0;
            }
        }
    }

    /// Writes `theta(t_start + n dt)` into `out`. Query times must not move
    /// backwards across calls.
    pub fn fill(&mut self, t_start: f64, dt: f64, out: &mut [f64]) {
        match self {
            PhaseStream::Zero => out.fill(0.0),
            PhaseStream::Brownian { rate, rng, t, theta } => {
                if out.is_empty() {
                    return;
                }
                let gap = (t_start - *t).max(0.0);
                if gap > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    *theta += (*rate * gap).sqrt() * z;
                }
                out[0] = *theta;
                let sd = (*rate * dt).sqrt();
                for o in out[1..].iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *theta += sd * z;
                    *o = *theta;
                }
                *t = t_start.max(*t) + (out.len() - 1) as f64 * dt;
            }
            PhaseStream::Spectral {
                cfg,
                rng,
                block,
                block_start,
            } => {
                for (n, o) in out.iter_mut().enumerate() {
                    let tq = t_start + n as f64 * dt;
                    *o = spectral_at(cfg, rng, block, block_start, tq);
                }
            }
        }
    }
}

fn spectral_at(
    cfg: &SpectralStreamConfig,
    rng: &mut ChaCha8Rng,
    block: &mut Vec<f64>,
    block_start: &mut f64,
    t: f64,
) -> f64 {
    if block.is_empty() {
        *block = synthesize(&cfg.profile, cfg.block_len, cfg.rate, rng);
        *block_start = 0.0;
    }
    loop {
        let span = (block.len() - 1) as f64 / cfg.rate;
        if t <= *block_start + span {
            break;
        }
        let last = *block.last().unwrap();
        let next = synthesize(&cfg.profile, cfg.block_len, cfg.rate, rng);
        *block = next.into_iter().map(|v| v + last).collect();
        *block_start += span;
    }
    let x = ((t - *block_start) * cfg.rate).max(0.0);
    let i = (x.floor() as usize).min(block.len() - 2);
    let u = x - i as f64;
    block[i] + u * (block[i + 1] - block[i])
}

/// Draws `(delta_f, phi)` uniformly from `[-xi, xi] x [0, 2 pi)`.
pub fn draw_offsets<R: Rng + ?Sized>(rng: &mut R, xi: f64) -> (f64, f64) {
    let df = xi * (2.0 * rng.random::<f64>() - 1.0);
    let phi = TAU * rng.random::<f64>();
    (df, phi)
}

/// Checks that `duration` is representable at `fs` (used by callers that need
/// exact sample counts).
pub fn samples_for(duration: f64, fs: f64) -> Result<usize> {
    grid_samples("duration", duration, fs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{mean, sample_variance};
    use rand::SeedableRng;

    #[test]
    fn zero_beta_is_flat() {
        let p = brownian_phase(1e-6, 1e9, 0.0, 1).unwrap();
        assert!(p.theta.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn brownian_variance_law() {
        let beta = 1e5;
        let fs = 1e9;
        let finals: Vec<f64> = (0..10_000u64)
            .map(|s| *brownian_phase(1e-6 + 1.0 / fs, fs, beta, s).unwrap().theta.last().unwrap())
            .collect();
        let v = sample_variance(&finals);
        let expected = TAU * beta * 1e-6;
        assert!((v - expected).abs() / expected < 0.05, "{v} vs {expected}");
    }

    #[test]
    fn brownian_increments_uncorrelated() {
        let p = brownian_phase(2e-4, 1e8, 1e5, 9).unwrap();
        let inc: Vec<f64> = p.theta.windows(2).map(|w| w[1] - w[0]).collect();
        let m = mean(&inc);
        let v = sample_variance(&inc);
        let lag1: f64 = inc.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (inc.len() - 1) as f64;
        // Standard error of a lag-1 correlation over 2e4 samples is ~0.007.
        assert!((lag1 / v).abs() < 0.03);
    }

    #[test]
    fn profile_validation() {
        assert!(PsdProfile::new(vec![]).is_err());
        assert!(PsdProfile::new(vec![(10.0, -60.0), (5.0, -70.0)]).is_err());
        assert!(PsdProfile::new(vec![(0.0, -60.0)]).is_err());
        assert!(PsdProfile::new(vec![(1.0, f64::NAN)]).is_err());
    }

    #[test]
    fn profile_interpolation() {
        let p = PsdProfile::new(vec![(1e3, -60.0), (1e5, -100.0)]).unwrap();
        assert!((10.0 * p.value(1e4).log10() + 80.0).abs() < 1e-9);
        assert!((10.0 * p.value(10.0).log10() + 60.0).abs() < 1e-9);
        assert_eq!(p.value(2e5), 0.0);
    }

    #[test]
    fn zero_profile_gives_zero_phase() {
        let p = PsdProfile::new(vec![(1.0, f64::NEG_INFINITY), (1e6, f64::NEG_INFINITY)]).unwrap();
        let t = spectral_phase(&p, 1e-3, 4e6, 3).unwrap();
        assert!(t.theta.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn spectral_variance_matches_profile_integral() {
        // Flat profile at -60 dBc/Hz up to 1 MHz at fs = 4 MHz: the phase
        // variance is the two-sided integral 2 * 1e-6 * 1e6 = 2 rad^2 minus the DC bin.
        let p = PsdProfile::new(vec![(1.0, -60.0), (1e6, -60.0)]).unwrap();
        let vars: Vec<f64> = (0..40)
            .map(|s| {
                let t = spectral_phase(&p, 1e-3, 4e6, s).unwrap();
                let m = mean(&t.theta);
                t.theta.iter().map(|x| (x - m).powi(2)).sum::<f64>() / t.len() as f64
            })
            .collect();
        let v = mean(&vars);
        assert!((v - 2.0).abs() / 2.0 < 0.05, "{v}");
    }

    #[test]
    fn carrier_identities() {
        let fc = 1e9;
        let theta = PhaseTrajectory::zeros(64, 8e9);
        let (i, q) = carrier_waves(&VcoSpec::ideal(fc), &theta, Role::Tx).unwrap();
        for (a, b) in i.samples.iter().zip(&q.samples) {
            assert!((a * a + b * b - 1.0).abs() < 1e-15);
        }
        let mut rx = VcoSpec::ideal(fc);
        rx.phi = PI / 2.0;
        let (i, _) = carrier_waves(&rx, &theta, Role::Rx).unwrap();
        for (n, v) in i.samples.iter().enumerate() {
            let t = n as f64 / 8e9;
            assert!((v + (TAU * fc * t).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn vco_validation() {
        let mut v = VcoSpec::ideal(1e9);
        v.delta_f = 6e6;
        assert!(v.validate().is_err());
        v.delta_f = 0.0;
        v.phi = TAU;
        assert!(v.validate().is_err());
        v.phi = 0.0;
        v.beta = -1.0;
        assert!(v.validate().is_err());
    }

    #[test]
    fn instantaneous_frequency_mean() {
        // Unwrapped phase slope over 10 us, averaged over trajectories: one
        // trajectory alone wanders by sqrt(2 pi beta t) / (2 pi t) ~ 3 ppm.
        let fc = 3.952e9;
        let fs = 4.0 * fc;
        let runs = 64;
        let mut f_sum = 0.0;
        for seed in 0..runs {
            let theta = brownian_phase(1e-5, fs, 1e4, seed).unwrap();
            let (i, q) = carrier_waves(&VcoSpec::ideal(fc), &theta, Role::Tx).unwrap();
            let mut total = 0.0;
            let mut prev = (-q.samples[0]).atan2(i.samples[0]);
            for n in 1..i.len() {
                let ph = (-q.samples[n]).atan2(i.samples[n]);
                let d = (ph - prev).rem_euclid(TAU);
                total += d;
                prev = ph;
            }
            f_sum += total / TAU / ((i.len() - 1) as f64 / fs);
        }
        let f_est = f_sum / runs as f64;
        assert!((f_est - fc).abs() / fc < 1e-6, "{f_est}");
    }

    #[test]
    fn pure_tone_psd() {
        let fs = 1e6;
        let n = 1 << 16;
        // Bin-centred tone for the default 4096-point segments.
        let fc = 1024.0 * fs / 4096.0;
        let w = Waveform::new((0..n).map(|k| (TAU * fc * k as f64 / fs).cos()).collect(), fs, 0.0).unwrap();
        let c = psd_estimate(&w, fc).unwrap();
        let peak = c.dbc_hz.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(c.dbc_hz[0], peak);
        assert!(c.dbc_hz[50..].iter().all(|&d| d < -100.0));
        assert!(psd_estimate(&Waveform::new(vec![0.0; 100], fs, 0.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn brownian_carrier_half_power_offset() {
        let beta = 1e5;
        let fs = 100.0 * beta;
        let t = brownian_phase(1.0, fs, beta, 21).unwrap();
        let c = carrier_psd(&t, Some(1 << 15)).unwrap();
        let f3 = c.half_power_offset().unwrap();
        assert!((f3 - beta / 2.0).abs() / (beta / 2.0) < 0.1, "{f3}");
        let slope = c.slope_db_per_decade(3.0 * beta, 10.0 * beta);
        assert!((slope + 20.0).abs() < 3.0, "{slope}");
    }

    #[test]
    fn lorentzian_profile_shape() {
        let beta = 1e4;
        let p = PsdProfile::lorentzian(beta, 1.0, 1e7, 20).unwrap();
        let l0 = p.value(10.0);
        assert!(p.value(beta / 2.0) / l0 > 0.49 && p.value(beta / 2.0) / l0 < 0.51);
        let drop = 10.0 * (p.value(1e5) / p.value(1e6)).log10();
        assert!((drop - 20.0).abs() < 0.1);
    }

    #[test]
    fn brownian_stream_matches_variance_law_across_gaps() {
        let beta = 2e5;
        let mut finals = Vec::new();
        for s in 0..4000u64 {
            let mut st = PhaseStream::brownian(beta, ChaCha8Rng::seed_from_u64(s));
            let mut buf = [0.0; 3];
            st.fill(1e-7, 1e-9, &mut buf);
            st.fill(9e-7, 5e-8, &mut buf);
            finals.push(buf[2]);
        }
        let v = sample_variance(&finals);
        let expected = TAU * beta * 1e-6;
        assert!((v - expected).abs() / expected < 0.07, "{v}");
    }

    #[test]
    fn spectral_stream_continuity_and_reset() {
        let cfg = SpectralStreamConfig {
            profile: PsdProfile::lorentzian(1e5, 1.0, 2e6, 10).unwrap(),
            rate: 4e6,
            block_len: 256,
        };
        let mut st = PhaseStream::spectral(cfg, ChaCha8Rng::seed_from_u64(2));
        let mut a = vec![0.0; 2000];
        st.fill(0.0, 0.25e-6, &mut a);
        assert_eq!(a[0], 0.0);
        let max_step = a.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        // Per-sample increments have sd sqrt(2 pi beta / rate).
        assert!(max_step < 8.0 * (TAU * 1e5 / 4e6).sqrt(), "{max_step}");
        st.reset();
        let mut b = [1.0];
        st.fill(0.0, 1.0, &mut b);
        assert_eq!(b[0], 0.0);
    }
}
