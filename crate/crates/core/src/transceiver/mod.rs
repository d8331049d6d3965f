//! Up/down-conversion, noise, receive filtering and the three receivers.
//!
//! Time convention: a pulse nominally occupying `[t, t + T_p]` is generated
//! causally (see [`crate::signals::rrc_pulse`]) and passes the receive RRC,
//! so its matched-filter peak appears at `t + T_p/2 + filter_alignment(cfg)`.
//! Integration windows are expressed on the nominal time axis and shifted by
//! that alignment when they are applied to receiver outputs.

mod link;

pub use link::{
    EnvelopeNoise, Link, LinkSpec, ModeComparison, OffsetPolicy, Session, SessionSeeds, SimMode,
    System,
};

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, SQRT_2};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, ChannelRealization};
use crate::dsp::{fill_normal, fir_at};
use crate::error::{Error, Result};
use crate::phasenoise::{cycle_phase, PhaseStream, VcoSpec};
use crate::seeds::rng_from;
use crate::signals::{grid_samples, rrc_pulse_with_span, Signaling, SystemConfig, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Downconversion {
    /// I and Q branch products summed.
    #[default]
    Iq,
    /// I branch only.
    IOnly,
}

/// Integration interval `[T1, T2]` relative to the symbol start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationWindow {
    pub t1: f64,
    pub t2: f64,
}

impl IntegrationWindow {
    pub fn t_m(&self) -> f64 {
        0.5 * (self.t1 + self.t2)
    }

    pub fn len(&self) -> f64 {
        self.t2 - self.t1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRecord {
    pub d: f64,
    pub bit_hat: i8,
    pub symbol_index: usize,
}

/// `sgn(D)` with ties resolved to `+1`.
#[inline]
pub fn decide(d: f64) -> i8 {
    if d < 0.0 {
        -1
    } else {
        1
    }
}

/// Offset from a pulse's nominal start to where the transmit and receive
/// filter delays place its matched-filter output, minus half a pulse.
pub fn filter_alignment(cfg: &SystemConfig) -> f64 {
    cfg.rrc_span() - 0.5 * cfg.pulse_width
}

fn check_pair(a: &Waveform, b: &Waveform, what: &str) -> Result<()> {
    if a.len() != b.len() || (a.fs - b.fs).abs() > 1e-9 * a.fs || (a.t0 - b.t0).abs() > 0.5 / a.fs {
        return Err(Error::Mismatch(format!(
            "{what}: lengths {} / {}, rates {} / {}",
            a.len(),
            b.len(),
            a.fs,
            b.fs
        )));
    }
    Ok(())
}

/// I-Q upconversion with a shared input: `s I_tx + s Q_tx`.
pub fn upconvert(s: &Waveform, tx_i: &Waveform, tx_q: &Waveform) -> Result<Waveform> {
    check_pair(s, tx_i, "upconvert")?;
    check_pair(s, tx_q, "upconvert")?;
    let out = s
        .samples
        .iter()
        .zip(&tx_i.samples)
        .zip(&tx_q.samples)
        .map(|((x, i), q)| x * i + x * q)
        .collect();
    Waveform::new(out, s.fs, s.t0)
}

/// Single-branch upconversion `sqrt(2) s I_tx` used by the coherent system.
pub fn upconvert_i(s: &Waveform, tx_i: &Waveform) -> Result<Waveform> {
    check_pair(s, tx_i, "upconvert_i")?;
    let out = s.samples.iter().zip(&tx_i.samples).map(|(x, i)| SQRT_2 * x * i).collect();
    Waveform::new(out, s.fs, s.t0)
}

/// Adds white Gaussian noise of one-sided PSD `n0` (variance `n0 fs / 2`).
pub fn add_awgn(w: &Waveform, n0: f64, rng_seed: u64) -> Result<Waveform> {
    add_awgn_with(w, n0, &mut rng_from(rng_seed))
}

pub fn add_awgn_with<R: Rng + ?Sized>(w: &Waveform, n0: f64, rng: &mut R) -> Result<Waveform> {
    if !(n0.is_finite() && n0 >= 0.0) {
        return Err(Error::param("n0", "must be >= 0"));
    }
    if n0 == 0.0 {
        return Ok(w.clone());
    }
    let mut noise = vec![0.0; w.len()];
    fill_normal(rng, &mut noise, (0.5 * n0 * w.fs).sqrt());
    let out = w.samples.iter().zip(&noise).map(|(x, n)| x + n).collect();
    Waveform::new(out, w.fs, w.t0)
}

/// Receive RRC lowpass with integer decimation; output sample `n` is the
/// filter output at input index `decimation * n`.
#[derive(Debug, Clone)]
pub struct ReceiveFilter {
    pub taps: Vec<f64>,
    pub fs: f64,
    pub decimation: usize,
}

impl ReceiveFilter {
    pub fn rrc(cfg: &SystemConfig, fs: f64, decimation: usize) -> Result<Self> {
        if decimation == 0 {
            return Err(Error::param("decimation", "must be at least 1"));
        }
        let g = rrc_pulse_with_span(cfg.rolloff, cfg.pulse_width, fs, cfg.span_pulses)?;
        Ok(Self {
            taps: g.samples,
            fs,
            decimation,
        })
    }

    /// The default filter: passband rate in, baseband rate out.
    pub fn for_config(cfg: &SystemConfig) -> Result<Self> {
        Self::rrc(cfg, cfg.fs_pass, cfg.decimation()?)
    }

    pub fn group_delay(&self) -> f64 {
        (self.taps.len() - 1) as f64 / (2.0 * self.fs)
    }

    pub fn apply(&self, x: &Waveform) -> Result<Waveform> {
        if (x.fs - self.fs).abs() > 1e-9 * self.fs {
            return Err(Error::Mismatch(format!("filter rate {} vs signal rate {}", self.fs, x.fs)));
        }
        let n_out = x.len().div_ceil(self.decimation);
        let inv = 1.0 / self.fs;
        let out = (0..n_out)
            .map(|n| fir_at(&x.samples, &self.taps, n * self.decimation) * inv)
            .collect();
        Waveform::new(out, self.fs / self.decimation as f64, x.t0)
    }
}

/// Mixes `r` with both receive carriers, then lowpass filters and decimates.
pub fn downconvert_iq(
    r: &Waveform,
    rx_i: &Waveform,
    rx_q: &Waveform,
    lpf: &ReceiveFilter,
) -> Result<(Waveform, Waveform)> {
    check_pair(r, rx_i, "downconvert_iq")?;
    check_pair(r, rx_q, "downconvert_iq")?;
    let mix = |c: &Waveform| {
        Waveform::new(r.samples.iter().zip(&c.samples).map(|(a, b)| a * b).collect(), r.fs, r.t0)
    };
    Ok((lpf.apply(&mix(rx_i)?)?, lpf.apply(&mix(rx_q)?)?))
}

/// Single-branch downconversion.
pub fn downconvert_i(r: &Waveform, rx_i: &Waveform, lpf: &ReceiveFilter) -> Result<Waveform> {
    check_pair(r, rx_i, "downconvert_i")?;
    let mixed = r.samples.iter().zip(&rx_i.samples).map(|(a, b)| a * b).collect();
    lpf.apply(&Waveform::new(mixed, r.fs, r.t0)?)
}

fn index_of(w: &Waveform, t: f64) -> i64 {
    ((t - w.t0) * w.fs).round() as i64
}

/// `sum [r_I(t) r_I(t - lag) + r_Q(t) r_Q(t - lag)] / fs` over `[start, end)`.
fn correlate(
    r_i: &Waveform,
    r_q: Option<&Waveform>,
    start: f64,
    end: f64,
    lag: f64,
) -> Result<f64> {
    let a = index_of(r_i, start);
    let b = index_of(r_i, end);
    let l = (lag * r_i.fs).round() as i64;
    if a - l < 0 || b > r_i.len() as i64 || a >= b {
        return Err(Error::WindowOutOfRange {
            start: a - l,
            end: b,
            len: r_i.len(),
        });
    }
    let (a, b, l) = (a as usize, b as usize, l as usize);
    let mut acc = 0.0;
    for n in a..b {
        acc += r_i.samples[n] * r_i.samples[n - l];
    }
    if let Some(q) = r_q {
        for n in a..b {
            acc += q.samples[n] * q.samples[n - l];
        }
    }
    Ok(acc / r_i.fs)
}

/// TRPC autocorrelation decision for symbol `symbol_index`.
pub fn acr_decide(
    r_i: &Waveform,
    r_q: &Waveform,
    win: &IntegrationWindow,
    cfg: &SystemConfig,
    mode: Downconversion,
    symbol_index: usize,
) -> Result<DecisionRecord> {
    check_pair(r_i, r_q, "acr_decide")?;
    grid_samples("pair_delay", cfg.pair_delay, r_i.fs)?;
    let base = symbol_index as f64 * cfg.symbol_period + filter_alignment(cfg);
    let q = match mode {
        Downconversion::Iq => Some(r_q),
        Downconversion::IOnly => None,
    };
    let d = correlate(r_i, q, base + win.t1, base + win.t2, cfg.pair_delay)?;
    Ok(DecisionRecord {
        d,
        bit_hat: decide(d),
        symbol_index,
    })
}

/// Conventional TR decision: per-frame correlation at lag `T_d'`, summed
/// over the frames' windows (see [`tr_windows`]).
pub fn tr_receive(
    r_i: &Waveform,
    r_q: &Waveform,
    windows: &[IntegrationWindow],
    cfg: &SystemConfig,
    mode: Downconversion,
    symbol_index: usize,
) -> Result<DecisionRecord> {
    check_pair(r_i, r_q, "tr_receive")?;
    cfg.validate_tr()?;
    let base = symbol_index as f64 * cfg.symbol_period + filter_alignment(cfg);
    let q = match mode {
        Downconversion::Iq => Some(r_q),
        Downconversion::IOnly => None,
    };
    let mut d = 0.0;
    for w in windows {
        d += correlate(r_i, q, base + w.t1, base + w.t2, cfg.tr_delay)?;
    }
    Ok(DecisionRecord {
        d,
        bit_hat: decide(d),
        symbol_index,
    })
}

/// Selective Rake with maximal-ratio combining on the single-branch receive
/// output `r_b`: samples the matched-filter output of every pulse at the
/// `fingers` strongest tap delays and weights each sample by its tap gain.
pub fn srake_mrc_receive(
    r_b: &Waveform,
    h: &ChannelRealization,
    fingers: usize,
    cfg: &SystemConfig,
    symbol_index: usize,
) -> Result<DecisionRecord> {
    grid_samples("tap_spacing", h.tap_spacing, r_b.fs)?;
    let peak = cfg.rrc_span();
    let sym = symbol_index as f64 * cfg.symbol_period;
    let mut z = 0.0;
    for slot in Signaling::Bpsk.layout(cfg) {
        for tap in h.strongest(fingers.max(1)) {
            let t = sym + slot.offset + h.delay(&tap) + peak;
            let n = index_of(r_b, t);
            if n < 0 || n >= r_b.len() as i64 {
                return Err(Error::WindowOutOfRange {
                    start: n,
                    end: n + 1,
                    len: r_b.len(),
                });
            }
            z += tap.gain * r_b.samples[n as usize];
        }
    }
    Ok(DecisionRecord {
        d: z,
        bit_hat: decide(z),
        symbol_index,
    })
}

fn window_bounds(h: &ChannelRealization) -> (f64, f64) {
    let total = h.energy();
    let mut before = 0.0;
    let mut t1 = 0.0;
    for tap in &h.taps {
        if before < 0.005 * total {
            t1 = h.delay(tap);
        } else {
            break;
        }
        before += tap.gain * tap.gain;
    }
    (t1, h.energy_delay(0.95))
}

/// Window heuristic: `T1` is the last tap delay preceded by less than 0.5%
/// of the channel energy; `T2 = T1 + 2 N_f T_d + tau_95`.
pub fn select_window(h: &ChannelRealization, cfg: &SystemConfig) -> IntegrationWindow {
    let (t1, tau95) = window_bounds(h);
    let t1 = t1.clamp(0.0, cfg.symbol_period);
    let t2 = (t1 + cfg.cluster_length() + tau95).clamp(t1, cfg.symbol_period);
    IntegrationWindow { t1, t2 }
}

/// One window per TR frame, covering the data pulse and its multipath spread.
pub fn tr_windows(h: &ChannelRealization, cfg: &SystemConfig) -> Vec<IntegrationWindow> {
    let (t1, tau95) = window_bounds(h);
    (0..cfg.pairs_per_symbol)
        .map(|m| {
            let start = m as f64 * cfg.tr_frame + cfg.tr_delay;
            IntegrationWindow {
                t1: start + t1,
                t2: start + cfg.pulse_width + tau95,
            }
        })
        .collect()
}

/// Equivalent-LTI receiver outputs without passband sampling:
/// `r_I + j r_Q = s_b exp(j (Psi + pi/4)) / sqrt(2)` with
/// `s_b = LPF(s * h) + complex noise` and
/// `Psi = theta_tx - theta_rx - 2 pi delta_f t - phi`.
///
/// `s` must be sampled at a rate on which the channel taps land and that is
/// an integer multiple of `cfg.fs_base`.
pub fn lti_fast_path(
    s: &Waveform,
    h: &ChannelRealization,
    vco_tx: &VcoSpec,
    vco_rx: &VcoSpec,
    n0: f64,
    cfg: &SystemConfig,
    rng_seed: u64,
) -> Result<(Waveform, Waveform)> {
    lti_fast_path_with(s, h, vco_tx, vco_rx, n0, cfg, EnvelopeNoise::Complex, rng_seed)
}

#[allow(clippy::too_many_arguments)]
pub fn lti_fast_path_with(
    s: &Waveform,
    h: &ChannelRealization,
    vco_tx: &VcoSpec,
    vco_rx: &VcoSpec,
    n0: f64,
    cfg: &SystemConfig,
    noise: EnvelopeNoise,
    rng_seed: u64,
) -> Result<(Waveform, Waveform)> {
    vco_tx.validate()?;
    vco_rx.validate()?;
    if !(n0.is_finite() && n0 >= 0.0) {
        return Err(Error::param("n0", "must be >= 0"));
    }
    let ratio = s.fs / cfg.fs_base;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
        return Err(Error::Mismatch(format!(
            "signal rate {} is not a multiple of fs_base {}",
            s.fs, cfg.fs_base
        )));
    }
    let y = apply_channel(s, h)?;
    let lpf = ReceiveFilter::rrc(cfg, s.fs, ratio.round() as usize)?;
    let sig = lpf.apply(&y)?;
    let n = sig.len();
    let fs = cfg.fs_base;

    let mut rng = rng_from(rng_seed);
    let base = ReceiveFilter::rrc(cfg, fs, 1)?;
    let mut nc = vec![0.0; n];
    let mut ns = vec![0.0; n];
    if n0 > 0.0 {
        let sd = (0.5 * n0 * fs).sqrt();
        let mut white = vec![0.0; n + base.taps.len() - 1];
        for (out, active) in [(&mut nc, true), (&mut ns, noise == EnvelopeNoise::Complex)] {
            if !active {
                continue;
            }
            fill_normal(&mut rng, &mut white, sd);
            for (k, o) in out.iter_mut().enumerate() {
                *o = fir_at(&white, &base.taps, k + base.taps.len() - 1) / fs;
            }
        }
    }

    let mut th_tx = vec![0.0; n];
    let mut th_rx = vec![0.0; n];
    let mut tx = PhaseStream::new(vco_tx.mode, vco_tx.beta, None, rng_from(rng.random()))?;
    let mut rx = PhaseStream::new(vco_rx.mode, vco_rx.beta, None, rng_from(rng.random()))?;
    tx.fill(0.0, 1.0 / fs, &mut th_tx);
    rx.fill(0.0, 1.0 / fs, &mut th_rx);

    let half_span = 0.5 * cfg.rrc_span();
    let mut r_i = Vec::with_capacity(n);
    let mut r_q = Vec::with_capacity(n);
    for k in 0..n {
        let t = sig.t0 + k as f64 / fs - half_span;
        let psi = th_tx[k] - th_rx[k] - cycle_phase(vco_rx.delta_f - vco_tx.delta_f, t) - (vco_rx.phi - vco_tx.phi);
        let z = Complex64::new(sig.samples[k] + nc[k], ns[k]) * Complex64::from_polar(FRAC_1_SQRT_2, psi + FRAC_PI_4);
        r_i.push(z.re);
        r_q.push(z.im);
    }
    Ok((Waveform::new(r_i, fs, sig.t0)?, Waveform::new(r_q, fs, sig.t0)?))
}
