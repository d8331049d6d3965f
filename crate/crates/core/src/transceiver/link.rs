//! Per-symbol link engines for Monte Carlo runs.
//!
//! A [`Link`] precomputes everything that depends only on the system and the
//! channel realization: integration windows, the noiseless receive-filter
//! outputs of the reference and data pulses, and the sample segments the
//! detector actually touches. A [`Session`] then simulates symbols one at a
//! time, generating noise and phase only where the detector looks.
//!
//! Two engines are provided. `Lti` evaluates the equivalent envelope model
//! at the baseband rate; `Passband` synthesizes the carrier-modulated signal
//! at `fs_pass`, adds white noise, mixes with the noisy receive oscillator
//! and filters, exactly like the waveform-level functions in the parent
//! module but restricted to the needed segments.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{decide, filter_alignment, select_window, tr_windows, Downconversion, IntegrationWindow};
use crate::channel::{ChannelRealization, Tap};
use crate::dsp::{convolve, fill_normal};
use crate::error::{Error, Result};
use crate::phasenoise::{cycle_phase, PhaseNoiseMode, PhaseStream, PsdProfile, MAX_FREQUENCY_OFFSET};
use crate::seeds::{derive_seed, rng_from, Stream};
use crate::signals::{grid_samples, rrc_pulse_with_span, PulseRole, Signaling, SystemConfig};

fn parse_choice<T: Copy>(s: &str, what: &'static str, choices: &[(&str, T)]) -> Result<T> {
    let key = s.trim().to_ascii_lowercase().replace('-', "_");
    choices
        .iter()
        .find(|(name, _)| *name == key)
        .map(|&(_, v)| v)
        .ok_or_else(|| {
            let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
            Error::param(what, format!("unknown value `{s}`, expected one of {}", names.join(", ")))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum System {
    /// Passband TRPC with an autocorrelation receiver.
    #[default]
    Trpc,
    /// Passband conventional TR with an autocorrelation receiver.
    Tr,
    /// Coherent selective Rake with maximal-ratio combining.
    Srake,
    /// TRPC without carriers: the perfect-oscillator reference, also used
    /// for training the semi-analytic model.
    BasebandTrpc,
}

impl System {
    pub fn signaling(self) -> Signaling {
        match self {
            System::Trpc | System::BasebandTrpc => Signaling::Trpc,
            System::Tr => Signaling::Tr,
            System::Srake => Signaling::Bpsk,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            System::Trpc => "trpc",
            System::Tr => "tr",
            System::Srake => "srake",
            System::BasebandTrpc => "baseband_trpc",
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for System {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_choice(
            s,
            "system",
            &[
                ("trpc", System::Trpc),
                ("tr", System::Tr),
                ("srake", System::Srake),
                ("baseband_trpc", System::BasebandTrpc),
                ("baseband", System::BasebandTrpc),
            ],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Lti,
    Passband,
}

impl FromStr for SimMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_choice(s, "mode", &[("lti", SimMode::Lti), ("passband", SimMode::Passband)])
    }
}

impl fmt::Display for SimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimMode::Lti => "lti",
            SimMode::Passband => "passband",
        })
    }
}

impl FromStr for Downconversion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_choice(
            s,
            "downconv",
            &[("iq", Downconversion::Iq), ("i_only", Downconversion::IOnly), ("i", Downconversion::IOnly)],
        )
    }
}

impl fmt::Display for Downconversion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Downconversion::Iq => "iq",
            Downconversion::IOnly => "i_only",
        })
    }
}

/// Noise model of the LTI envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeNoise {
    /// Complex baseband noise: what the passband receiver actually sees.
    #[default]
    Complex,
    /// Real noise on the in-phase envelope only.
    InPhase,
}

impl FromStr for EnvelopeNoise {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_choice(
            s,
            "envelope_noise",
            &[("complex", EnvelopeNoise::Complex), ("in_phase", EnvelopeNoise::InPhase), ("real", EnvelopeNoise::InPhase)],
        )
    }
}

impl fmt::Display for EnvelopeNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvelopeNoise::Complex => "complex",
            EnvelopeNoise::InPhase => "in_phase",
        })
    }
}

/// How a per-packet constant offset is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetPolicy {
    Fixed(f64),
    /// Uniform over the admissible range.
    Uniform,
}

impl OffsetPolicy {
    fn pick(self, uniform: f64) -> f64 {
        match self {
            OffsetPolicy::Fixed(v) => v,
            OffsetPolicy::Uniform => uniform,
        }
    }
}

impl fmt::Display for OffsetPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OffsetPolicy::Fixed(v) => write!(f, "{v}"),
            OffsetPolicy::Uniform => f.write_str("uniform"),
        }
    }
}

impl FromStr for OffsetPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("uniform") {
            return Ok(OffsetPolicy::Uniform);
        }
        t.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(OffsetPolicy::Fixed)
            .ok_or_else(|| Error::param("offset", format!("expected `uniform` or a number, got `{s}`")))
    }
}

/// Everything about a link that is not the channel or the noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub system: System,
    pub mode: SimMode,
    pub downconv: Downconversion,
    pub envelope_noise: EnvelopeNoise,
    /// SRake finger count.
    pub fingers: usize,
    /// Symbols sharing one offset draw and one phase-noise origin.
    pub packet_symbols: usize,
    pub beta: f64,
    pub pn_mode: PhaseNoiseMode,
    pub pn_profile: Option<PsdProfile>,
    pub delta_f: OffsetPolicy,
    pub phi: OffsetPolicy,
}

impl Default for LinkSpec {
    fn default() -> Self {
        Self {
            system: System::Trpc,
            mode: SimMode::Lti,
            downconv: Downconversion::Iq,
            envelope_noise: EnvelopeNoise::Complex,
            fingers: 8,
            packet_symbols: 100,
            beta: 0.0,
            pn_mode: PhaseNoiseMode::Brownian,
            pn_profile: None,
            delta_f: OffsetPolicy::Uniform,
            phi: OffsetPolicy::Uniform,
        }
    }
}

impl LinkSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::param("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if self.packet_symbols == 0 {
            return Err(Error::param("packet_symbols", "must be at least 1"));
        }
        if self.system == System::Srake && self.fingers == 0 {
            return Err(Error::param("fingers", "must be at least 1"));
        }
        if let OffsetPolicy::Fixed(v) = self.delta_f {
            if v.abs() > MAX_FREQUENCY_OFFSET {
                return Err(Error::param("delta_f", format!("|{v}| exceeds {MAX_FREQUENCY_OFFSET} Hz")));
            }
        }
        if let OffsetPolicy::Fixed(v) = self.phi {
            if !(0.0..TAU).contains(&v) {
                return Err(Error::param("phi", format!("must be in [0, 2pi), got {v}")));
            }
        }
        Ok(())
    }
}

/// Sorted half-open index ranges, merged when closer than `min_gap`.
fn merge_segments(mut ranges: Vec<(usize, usize)>, min_gap: usize) -> Vec<(usize, usize)> {
    ranges.retain(|r| r.1 > r.0);
    ranges.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for r in ranges {
        match out.last_mut() {
            Some(last) if r.0 < last.1 + min_gap => last.1 = last.1.max(r.1),
            _ => out.push(r),
        }
    }
    out
}

#[derive(Debug, Clone)]
struct AcrPlan {
    lag: usize,
    /// Integration ranges in baseband samples from the symbol start.
    windows: Vec<(usize, usize)>,
    segments: Vec<(usize, usize)>,
    lo: usize,
    /// Noiseless unit-amplitude filter outputs over `[lo, hi)`.
    x_ref: Vec<f64>,
    x_data: Vec<f64>,
}

#[derive(Debug, Clone)]
struct RakePlan {
    fingers: Vec<Tap>,
    /// Noiseless combiner contribution of each pulse, before the phase error.
    v: Vec<f64>,
    /// Noise variance of the combiner output per unit `N0`.
    noise_gain: f64,
    /// Output index (at `fs_pass / tap_step`) of every (pulse, finger) sample.
    samples: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
enum Plan {
    Acr(AcrPlan),
    Rake(RakePlan),
}

/// Passband synthesis layout for one symbol.
#[derive(Debug, Clone)]
struct PassLayout {
    s_ref: Vec<f64>,
    s_data: Vec<f64>,
    tx_len: usize,
    out_decim: usize,
    segments: Vec<(usize, usize)>,
    out_lo: usize,
    out_hi: usize,
}

/// A system bound to one channel realization.
#[derive(Debug, Clone)]
pub struct Link {
    cfg: SystemConfig,
    spec: LinkSpec,
    h: ChannelRealization,
    amp: f64,
    g_pass: Vec<f64>,
    g_base: Vec<f64>,
    decim: usize,
    tap_step: usize,
    plan: Plan,
    pass: PassLayout,
    window: Option<IntegrationWindow>,
}

impl Link {
    pub fn new(cfg: &SystemConfig, spec: LinkSpec, h: &ChannelRealization) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        let signaling = spec.system.signaling();
        if signaling != Signaling::Trpc {
            cfg.validate_tr()?;
        }
        let decim = cfg.decimation()?;
        let tap_step = grid_samples("tap_spacing", h.tap_spacing, cfg.fs_pass)?;
        if (h.tap_spacing - cfg.tap_spacing()).abs() > 1e-6 * cfg.tap_spacing() {
            return Err(Error::Mismatch(format!(
                "channel tap spacing {} differs from 1/f_c = {}",
                h.tap_spacing,
                cfg.tap_spacing()
            )));
        }
        let g_pass = rrc_pulse_with_span(cfg.rolloff, cfg.pulse_width, cfg.fs_pass, cfg.span_pulses)?.samples;
        let g_base = rrc_pulse_with_span(cfg.rolloff, cfg.pulse_width, cfg.fs_base, cfg.span_pulses)?.samples;
        let q: Vec<f64> = convolve(&g_pass, &g_pass).into_iter().map(|v| v / cfg.fs_pass).collect();
        let gl = g_pass.len();
        let slots = signaling
            .layout(cfg)
            .into_iter()
            .map(|s| grid_samples("pulse offset", s.offset, cfg.fs_pass).map(|n| (n, s.role)))
            .collect::<Result<Vec<_>>>()?;
        let support = slots.last().map_or(0, |s| s.0) + gl;
        let sym_pass = grid_samples("symbol_period", cfg.symbol_period, cfg.fs_pass)?;
        if support + tap_step * h.max_index() > sym_pass {
            return Err(Error::param("symbol_period", "received symbol spills into the next one"));
        }
        let mut s_ref = vec![0.0; support];
        let mut s_data = vec![0.0; support];
        for &(off, role) in &slots {
            let dst = if role == PulseRole::Reference { &mut s_ref } else { &mut s_data };
            for (d, g) in dst[off..off + gl].iter_mut().zip(&g_pass) {
                *d += g;
            }
        }

        let sym_base = sym_pass / decim;
        let mut window = None;
        let (plan, pass) = match spec.system {
            System::Srake => {
                let out_decim = tap_step;
                let fingers = h.strongest(spec.fingers);
                let peak = gl - 1;
                let mut samples = Vec::new();
                let mut ranges = Vec::new();
                for &(off, _) in &slots {
                    let base = (off + peak) / out_decim;
                    let idx: Vec<usize> = fingers.iter().map(|f| base + f.index).collect();
                    ranges.push((idx[0], idx[idx.len() - 1] + 1));
                    samples.push(idx);
                }
                let qi = |d: i64| -> f64 {
                    let i = d + peak as i64;
                    if i < 0 || i >= q.len() as i64 {
                        0.0
                    } else {
                        q[i as usize]
                    }
                };
                let point = |m: usize, k: usize| (slots[m].0 + tap_step * k) as i64;
                let mut v = vec![0.0; slots.len()];
                let mut noise_gain = 0.0;
                for (m, vm) in v.iter_mut().enumerate() {
                    for f in &fingers {
                        let tf = point(m, f.index);
                        for m2 in 0..slots.len() {
                            for t in &h.taps {
                                *vm += f.gain * t.gain * qi(tf - point(m2, t.index));
                            }
                            for f2 in &fingers {
                                noise_gain += f.gain * f2.gain * qi(tf - point(m2, f2.index));
                            }
                        }
                    }
                }
                v.iter_mut().for_each(|x| *x *= cfg.pulse_amplitude());
                let min_gap = gl.div_ceil(out_decim) + 1;
                let segments = merge_segments(ranges, min_gap);
                let out_hi = segments.last().unwrap().1;
                let pass = PassLayout {
                    s_ref,
                    s_data,
                    tx_len: support,
                    out_decim,
                    out_lo: segments[0].0,
                    out_hi,
                    segments,
                };
                (
                    Plan::Rake(RakePlan {
                        fingers,
                        v,
                        noise_gain: 0.25 * noise_gain,
                        samples,
                    }),
                    pass,
                )
            }
            _ => {
                let align = filter_alignment(cfg);
                let (wins, lag_t) = if spec.system == System::Tr {
                    (tr_windows(h, cfg), cfg.tr_delay)
                } else {
                    let w = select_window(h, cfg);
                    window = Some(w);
                    (vec![w], cfg.pair_delay)
                };
                let lag = grid_samples("correlation lag", lag_t, cfg.fs_base)?;
                let to_index = |t: f64| ((t + align) * cfg.fs_base).round().max(0.0) as usize;
                let windows: Vec<(usize, usize)> = wins
                    .iter()
                    .map(|w| {
                        let a = to_index(w.t1).clamp(lag, sym_base);
                        let b = to_index(w.t2).clamp(a, sym_base);
                        (a, b)
                    })
                    .filter(|w| w.1 > w.0)
                    .collect();
                if windows.is_empty() {
                    return Err(Error::param("window", "integration window is empty"));
                }
                let ranges = windows.iter().flat_map(|&(a, b)| [(a - lag, b - lag), (a, b)]).collect();
                let min_gap = g_base.len().max(gl.div_ceil(decim) + 1);
                let segments = merge_segments(ranges, min_gap);
                let lo = segments[0].0;
                let hi = segments.last().unwrap().1;
                let mut x_ref = vec![0.0; hi - lo];
                let mut x_data = vec![0.0; hi - lo];
                for &(off, role) in &slots {
                    let dst = if role == PulseRole::Reference { &mut x_ref } else { &mut x_data };
                    for t in &h.taps {
                        let start = off + tap_step * t.index;
                        let n0 = start.div_ceil(decim).max(lo);
                        let n1 = ((start + q.len() - 1) / decim + 1).min(hi);
                        for n in n0..n1 {
                            dst[n - lo] += t.gain * q[decim * n - start];
                        }
                    }
                }
                let half = (gl - 1) / 2;
                let tx_len = support.max(decim * (hi - 1) + 1 - half.min(decim * (hi - 1)));
                if decim * lo < half {
                    return Err(Error::param("window", "integration window starts before the filter settles"));
                }
                let pass = PassLayout {
                    s_ref,
                    s_data,
                    tx_len,
                    out_decim: decim,
                    segments: segments.clone(),
                    out_lo: lo,
                    out_hi: hi,
                };
                (
                    Plan::Acr(AcrPlan {
                        lag,
                        windows,
                        segments,
                        lo,
                        x_ref,
                        x_data,
                    }),
                    pass,
                )
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            spec,
            h: h.clone(),
            amp: cfg.pulse_amplitude(),
            g_pass,
            g_base,
            decim,
            tap_step,
            plan,
            pass,
            window,
        })
    }

    pub fn spec(&self) -> &LinkSpec {
        &self.spec
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn channel(&self) -> &ChannelRealization {
        &self.h
    }

    /// TRPC integration window, if this is a TRPC link.
    pub fn window(&self) -> Option<IntegrationWindow> {
        self.window
    }

    /// Selected SRake fingers.
    pub fn fingers(&self) -> Option<&[Tap]> {
        match &self.plan {
            Plan::Rake(r) => Some(&r.fingers),
            Plan::Acr(_) => None,
        }
    }

    /// Noiseless decision variable with ideal oscillators (LTI engine).
    pub fn noiseless_decision(&self, bit: i8) -> f64 {
        let b = bit as f64;
        match &self.plan {
            Plan::Acr(p) => {
                let scale = if self.spec.system == System::BasebandTrpc { 1.0 } else { 0.5 };
                let x = |n: usize| self.amp * (p.x_ref[n - p.lo] + b * p.x_data[n - p.lo]);
                let mut d = 0.0;
                for &(a, e) in &p.windows {
                    for n in a..e {
                        let v = x(n) * x(n - p.lag);
                        d += match self.spec.downconv {
                            Downconversion::Iq => v,
                            Downconversion::IOnly => 0.5 * v,
                        };
                    }
                }
                scale * d / self.cfg.fs_base
            }
            Plan::Rake(p) => b * FRAC_1_SQRT_2 * p.v.iter().sum::<f64>(),
        }
    }

    pub fn session(&self, n0: f64, seeds: SessionSeeds) -> Result<Session<'_>> {
        Session::new(self, n0, seeds)
    }
}

/// Seeds of the random streams of one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionSeeds {
    pub bits: u64,
    pub noise: u64,
    pub tx_phase: u64,
    pub rx_phase: u64,
    pub offsets: u64,
}

impl SessionSeeds {
    pub fn derive(master: u64, path: &[u64]) -> Self {
        let s = |stream: Stream| {
            let mut p = path.to_vec();
            p.push(stream as u64);
            derive_seed(master, &p)
        };
        Self {
            bits: s(Stream::Bits),
            noise: s(Stream::Noise),
            tx_phase: s(Stream::TxPhase),
            rx_phase: s(Stream::RxPhase),
            offsets: s(Stream::Offsets),
        }
    }
}

/// Decision variables of one symbol from both engines with shared noise and
/// phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeComparison {
    pub passband: f64,
    pub lti: f64,
}

#[derive(Debug, Default, Clone)]
struct Work {
    z: Vec<Complex64>,
    lti_z: Vec<Complex64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    white: Vec<f64>,
    th_tx: Vec<f64>,
    // Passband per-segment buffers.
    s_t: Vec<f64>,
    y: Vec<f64>,
    th_rx: Vec<f64>,
    mix_i: Vec<f64>,
    mix_q: Vec<f64>,
    nmix_i: Vec<f64>,
    nmix_q: Vec<f64>,
    // Passband outputs over [out_lo, out_hi).
    r_i: Vec<f64>,
    r_q: Vec<f64>,
    n_i: Vec<f64>,
    n_q: Vec<f64>,
    psi: Vec<f64>,
}

/// Symbol-by-symbol simulation of one link at one noise level.
pub struct Session<'a> {
    link: &'a Link,
    n0: f64,
    bits: ChaCha8Rng,
    noise: ChaCha8Rng,
    offsets: ChaCha8Rng,
    tx: PhaseStream,
    rx: PhaseStream,
    symbol: u64,
    delta_f: f64,
    phi: f64,
    work: Work,
}

impl<'a> Session<'a> {
    pub fn new(link: &'a Link, n0: f64, seeds: SessionSeeds) -> Result<Self> {
        if !(n0.is_finite() && n0 >= 0.0) {
            return Err(Error::param("n0", format!("must be >= 0, got {n0}")));
        }
        let spec = &link.spec;
        let carriers = spec.system != System::BasebandTrpc;
        let stream = |seed: u64| -> Result<PhaseStream> {
            if !carriers {
                return Ok(PhaseStream::Zero);
            }
            PhaseStream::new(spec.pn_mode, spec.beta, spec.pn_profile.as_ref(), rng_from(seed))
        };
        Ok(Self {
            link,
            n0,
            bits: rng_from(seeds.bits),
            noise: rng_from(seeds.noise),
            offsets: rng_from(seeds.offsets),
            tx: stream(seeds.tx_phase)?,
            rx: stream(seeds.rx_phase)?,
            symbol: 0,
            delta_f: 0.0,
            phi: 0.0,
            work: Work::default(),
        })
    }

    /// Symbols simulated so far.
    pub fn symbols(&self) -> u64 {
        self.symbol
    }

    /// Current `(delta_f, phi)` draw.
    pub fn offsets(&self) -> (f64, f64) {
        (self.delta_f, self.phi)
    }

    /// Packet bookkeeping; returns the symbol start time within its packet.
    fn begin_symbol(&mut self) -> f64 {
        let spec = &self.link.spec;
        let packet = spec.packet_symbols as u64;
        let k = self.symbol % packet;
        if k == 0 {
            let u_f: f64 = self.offsets.random();
            let u_p: f64 = self.offsets.random();
            self.delta_f = spec.delta_f.pick(MAX_FREQUENCY_OFFSET * (2.0 * u_f - 1.0));
            self.phi = spec.phi.pick(TAU * u_p);
            self.tx.reset();
            self.rx.reset();
        }
        self.symbol += 1;
        k as f64 * self.link.cfg.symbol_period
    }

    /// Decision variable of one transmitted symbol.
    pub fn decision(&mut self, bit: i8) -> Result<f64> {
        if bit != 1 && bit != -1 {
            return Err(Error::InvalidSymbol(bit as i64));
        }
        let t_sym = self.begin_symbol();
        let b = bit as f64;
        let link = self.link;
        Ok(match (&link.plan, link.spec.mode, link.spec.system) {
            (Plan::Acr(p), _, System::BasebandTrpc) | (Plan::Acr(p), SimMode::Lti, _) => {
                self.lti_acr(p, b, t_sym);
                acr_statistic(&self.work.z, p, link.spec.downconv) / link.cfg.fs_base
            }
            (Plan::Acr(p), SimMode::Passband, _) => {
                self.passband(b, t_sym, self.phi, false);
                let w = &mut self.work;
                w.z.clear();
                w.z.extend(w.r_i.iter().zip(&w.r_q).map(|(&i, &q)| Complex64::new(i, q)));
                acr_statistic(&w.z, p, link.spec.downconv) / link.cfg.fs_base
            }
            (Plan::Rake(p), SimMode::Lti, _) => self.lti_rake(p, b, t_sym),
            (Plan::Rake(p), SimMode::Passband, _) => {
                // The receiver removes the phase offset it measured at the packet start.
                self.passband(b, t_sym, 0.0, false);
                let lo = link.pass.out_lo;
                let mut z = 0.0;
                for idx in &p.samples {
                    for (f, &o) in p.fingers.iter().zip(idx) {
                        z += f.gain * self.work.r_i[o - lo];
                    }
                }
                z
            }
        })
    }

    /// Simulates `n` random symbols; returns `(errors, symbols)`.
    pub fn run(&mut self, n: u64) -> Result<(u64, u64)> {
        let mut errors = 0;
        for _ in 0..n {
            let bit: i8 = if self.bits.random::<bool>() { 1 } else { -1 };
            if decide(self.decision(bit)?) != bit {
                errors += 1;
            }
        }
        Ok((errors, n))
    }

    /// Runs one symbol through the passband engine and evaluates the LTI
    /// model on the same noise and phase realizations.
    pub fn compare(&mut self, bit: i8) -> Result<ModeComparison> {
        if bit != 1 && bit != -1 {
            return Err(Error::InvalidSymbol(bit as i64));
        }
        let link = self.link;
        let p = match (&link.plan, link.spec.system) {
            (Plan::Acr(p), System::Trpc | System::Tr) => p,
            _ => return Err(Error::Mismatch("mode comparison needs a passband AcR system".into())),
        };
        let t_sym = self.begin_symbol();
        let b = bit as f64;
        self.passband(b, t_sym, self.phi, true);
        let w = &mut self.work;
        w.z.clear();
        w.z.extend(w.r_i.iter().zip(&w.r_q).map(|(&i, &q)| Complex64::new(i, q)));
        let passband = acr_statistic(&w.z, p, link.spec.downconv) / link.cfg.fs_base;

        let half = (link.g_pass.len() - 1) / 2;
        let fs = link.cfg.fs_pass;
        w.lti_z.clear();
        w.lti_z.resize(w.z.len(), Complex64::new(0.0, 0.0));
        for &(s0, s1) in &p.segments {
            for n in s0..s1 {
                let i = n - p.lo;
                let m = link.decim * n - half;
                let t = t_sym + m as f64 / fs;
                let psi = w.th_tx[m] - w.psi[i] - cycle_phase(self.delta_f, t) - self.phi;
                let x = link.amp * (p.x_ref[i] + b * p.x_data[i]);
                w.lti_z[i] = Complex64::from_polar(FRAC_1_SQRT_2 * x, psi + FRAC_PI_4)
                    + Complex64::new(w.n_i[i], w.n_q[i]);
            }
        }
        let lti = acr_statistic(&w.lti_z, p, link.spec.downconv) / link.cfg.fs_base;
        Ok(ModeComparison { passband, lti })
    }

    /// Envelope model outputs into `work.z` over `[lo, hi)`.
    fn lti_acr(&mut self, p: &AcrPlan, b: f64, t_sym: f64) {
        let link = self.link;
        let fs = link.cfg.fs_base;
        let baseband = link.spec.system == System::BasebandTrpc;
        let complex_noise = link.spec.envelope_noise == EnvelopeNoise::Complex;
        let half_span = 0.5 * link.cfg.rrc_span();
        let g = &link.g_base;
        let sd = (0.5 * self.n0 * fs).sqrt();
        let w = &mut self.work;
        w.z.clear();
        w.z.resize(p.x_ref.len(), Complex64::new(0.0, 0.0));
        for &(s0, s1) in &p.segments {
            let len = s1 - s0;
            w.a.clear();
            w.a.resize(len, 0.0);
            w.b.clear();
            w.b.resize(len, 0.0);
            if self.n0 > 0.0 {
                w.white.resize(len + g.len() - 1, 0.0);
                for (out, active) in [(&mut w.a, true), (&mut w.b, complex_noise)] {
                    if !active {
                        continue;
                    }
                    fill_normal(&mut self.noise, &mut w.white, sd);
                    for (k, o) in out.iter_mut().enumerate() {
                        let top = k + g.len() - 1;
                        let mut acc = 0.0;
                        for (j, gj) in g.iter().enumerate() {
                            acc += gj * w.white[top - j];
                        }
                        *o = acc / fs;
                    }
                }
            }
            if baseband {
                for k in 0..len {
                    let i = s0 - p.lo + k;
                    let x = link.amp * (p.x_ref[i] + b * p.x_data[i]);
                    w.z[i] = Complex64::new(x + w.a[k], w.b[k]);
                }
                continue;
            }
            let t0 = t_sym + s0 as f64 / fs - half_span;
            w.c.resize(len, 0.0);
            w.d.resize(len, 0.0);
            self.tx.fill(t0, 1.0 / fs, &mut w.c);
            self.rx.fill(t0, 1.0 / fs, &mut w.d);
            for k in 0..len {
                let i = s0 - p.lo + k;
                let t = t0 + k as f64 / fs;
                let psi = w.c[k] - w.d[k] - cycle_phase(self.delta_f, t) - self.phi;
                let x = link.amp * (p.x_ref[i] + b * p.x_data[i]);
                w.z[i] = Complex64::new(x + w.a[k], w.b[k]) * Complex64::from_polar(FRAC_1_SQRT_2, psi + FRAC_PI_4);
            }
        }
    }

    fn lti_rake(&mut self, p: &RakePlan, b: f64, t_sym: f64) -> f64 {
        let link = self.link;
        let slots = p.v.len();
        let spacing = 0.5 * link.cfg.tr_frame;
        let t0 = t_sym + 0.5 * link.cfg.rrc_span();
        let w = &mut self.work;
        w.c.resize(slots, 0.0);
        w.d.resize(slots, 0.0);
        self.tx.fill(t0, spacing, &mut w.c);
        self.rx.fill(t0, spacing, &mut w.d);
        let mut z = 0.0;
        for m in 0..slots {
            let t = t0 + m as f64 * spacing;
            let eps = w.c[m] - w.d[m] - TAU * self.delta_f * t;
            z += eps.cos() * p.v[m];
        }
        let noise: f64 = self.noise.sample(StandardNormal);
        b * FRAC_1_SQRT_2 * z + (self.n0 * p.noise_gain).sqrt() * noise
    }

    /// Passband synthesis of one symbol; fills `r_i`, `r_q` over the output
    /// layout and, with `keep_noise`, the noise-only outputs and the receive
    /// phase at each output's mixer time.
    fn passband(&mut self, b: f64, t_sym: f64, lo_phase: f64, keep_noise: bool) {
        let link = self.link;
        let cfg = &link.cfg;
        let lay = &link.pass;
        let fs = cfg.fs_pass;
        let dt = 1.0 / fs;
        let g = &link.g_pass;
        let gl = g.len();
        let half = (gl - 1) / 2;
        let d = lay.out_decim;
        let single = link.spec.system == System::Srake;
        let q_branch = !single && link.spec.downconv == Downconversion::Iq || keep_noise;
        let sd = (0.5 * self.n0 * fs).sqrt();
        let f_rx = cfg.carrier_hz + self.delta_f;
        let w = &mut self.work;

        // The comparison needs the transmit phase up to the last output's mixer time.
        let th_len = if keep_noise { lay.tx_len } else { lay.s_ref.len() };
        w.th_tx.resize(th_len, 0.0);
        self.tx.fill(t_sym, dt, &mut w.th_tx);
        w.s_t.resize(lay.tx_len, 0.0);
        for m in 0..lay.tx_len {
            let s = if m < lay.s_ref.len() {
                link.amp * (lay.s_ref[m] + b * lay.s_data[m])
            } else {
                0.0
            };
            w.s_t[m] = if s == 0.0 {
                0.0
            } else {
                let x = cycle_phase(cfg.carrier_hz, t_sym + m as f64 * dt) + w.th_tx[m];
                if single {
                    SQRT_2 * s * x.cos()
                } else {
                    SQRT_2 * s * (x + FRAC_PI_4).cos()
                }
            };
        }
        let n_out = lay.out_hi - lay.out_lo;
        for buf in [&mut w.r_i, &mut w.r_q, &mut w.n_i, &mut w.n_q, &mut w.psi] {
            buf.clear();
            buf.resize(n_out, 0.0);
        }
        let p_len = lay.tx_len as i64;
        for &(o0, o1) in &lay.segments {
            let p0 = (d * o0) as i64 - (gl - 1) as i64;
            let len = d * (o1 - 1 - o0) + gl;
            w.y.clear();
            w.y.resize(len, 0.0);
            for t in &link.h.taps {
                let shift = p0 - (link.tap_step * t.index) as i64;
                let j0 = (-shift).max(0) as usize;
                let j1 = (p_len - shift).clamp(0, len as i64) as usize;
                if j0 >= j1 {
                    continue;
                }
                let src = &w.s_t[(shift + j0 as i64) as usize..(shift + j1 as i64) as usize];
                for (y, s) in w.y[j0..j1].iter_mut().zip(src) {
                    *y += t.gain * s;
                }
            }
            w.white.resize(len, 0.0);
            if self.n0 > 0.0 {
                fill_normal(&mut self.noise, &mut w.white, sd);
            } else {
                w.white.fill(0.0);
            }
            w.th_rx.resize(len, 0.0);
            let t_start = t_sym + p0 as f64 * dt;
            self.rx.fill(t_start, dt, &mut w.th_rx);
            for buf in [&mut w.mix_i, &mut w.mix_q, &mut w.nmix_i, &mut w.nmix_q] {
                buf.resize(len, 0.0);
            }
            for j in 0..len {
                let x = cycle_phase(f_rx, t_start + j as f64 * dt) + w.th_rx[j] + lo_phase;
                let (s, c) = x.sin_cos();
                let r = w.y[j] + w.white[j];
                w.mix_i[j] = r * c;
                w.mix_q[j] = -r * s;
                if keep_noise {
                    w.nmix_i[j] = w.white[j] * c;
                    w.nmix_q[j] = -w.white[j] * s;
                }
            }
            for o in o0..o1 {
                let top = d * (o - o0) + gl - 1;
                let i = o - lay.out_lo;
                let fir = |x: &[f64]| -> f64 {
                    let mut acc = 0.0;
                    for (j, gj) in g.iter().enumerate() {
                        acc += gj * x[top - j];
                    }
                    acc * dt
                };
                w.r_i[i] = fir(&w.mix_i);
                if q_branch {
                    w.r_q[i] = fir(&w.mix_q);
                }
                if keep_noise {
                    w.n_i[i] = fir(&w.nmix_i);
                    w.n_q[i] = fir(&w.nmix_q);
                    w.psi[i] = w.th_rx[top - half];
                }
            }
        }
    }
}

/// `sum_windows sum_n Re(z[n] conj(z[n - lag]))` (IQ) or the in-phase
/// product only.
fn acr_statistic(z: &[Complex64], p: &AcrPlan, mode: Downconversion) -> f64 {
    let mut acc = 0.0;
    for &(a, b) in &p.windows {
        let cur = &z[a - p.lo..b - p.lo];
        let past = &z[a - p.lag - p.lo..b - p.lag - p.lo];
        match mode {
            Downconversion::Iq => {
                for (x, y) in cur.iter().zip(past) {
                    acc += x.re * y.re + x.im * y.im;
                }
            }
            Downconversion::IOnly => {
                for (x, y) in cur.iter().zip(past) {
                    acc += x.re * y.re;
                }
            }
        }
    }
    acc
}
