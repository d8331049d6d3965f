//! Baseband transmit waveforms and the shared root-raised-cosine pulse.
//!
//! All three signalings are described by a [`PulseSlot`] layout: the start
//! offset of every pulse inside one symbol and whether it carries the
//! reference (always positive) or the data polarity. The waveform
//! generators and the receiver templates in [`crate::transceiver`] are both
//! built from the same layout.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total RRC truncation span, in pulse widths.
pub const DEFAULT_SPAN_PULSES: f64 = 8.0;

const GRID_TOLERANCE: f64 = 1e-6;

/// Physical parameters shared by every stage of the link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Nominal carrier frequency, Hz.
    pub carrier_hz: f64,
    /// Baseband pulse bandwidth, Hz (informational; the RRC roll-off sets it).
    pub bandwidth_hz: f64,
    /// Energy per symbol (normalized units).
    pub energy_per_bit: f64,
    /// Reference/data pulse pairs per symbol.
    pub pairs_per_symbol: usize,
    /// Symbol duration, s.
    pub symbol_period: f64,
    /// Delay between reference and data pulse of a pair, s.
    pub pair_delay: f64,
    /// Pulse duration (RRC symbol period), s.
    pub pulse_width: f64,
    pub rolloff: f64,
    /// RRC truncation span in units of `pulse_width`.
    pub span_pulses: f64,
    /// Passband simulation rate, Hz.
    pub fs_pass: f64,
    /// Baseband processing rate after decimation, Hz.
    pub fs_base: f64,
    /// Conventional TR frame period, s.
    pub tr_frame: f64,
    /// Conventional TR reference-to-data delay, s.
    pub tr_delay: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let carrier_hz = 3.952e9;
        let tap = 1.0 / carrier_hz;
        // 8 carrier cycles = 2.024 ns, the nearest carrier-aligned value to 2.02 ns.
        let pair_delay = 8.0 * tap;
        let fs_pass = 4.0 * carrier_hz;
        Self {
            carrier_hz,
            bandwidth_hz: 500e6,
            energy_per_bit: 1.0,
            pairs_per_symbol: 4,
            symbol_period: 1e-6,
            pair_delay,
            pulse_width: pair_delay,
            rolloff: 0.25,
            span_pulses: DEFAULT_SPAN_PULSES,
            fs_pass,
            fs_base: fs_pass / 8.0,
            tr_frame: 988.0 * tap,
            tr_delay: 494.0 * tap,
        }
    }
}

impl SystemConfig {
    /// Channel tap spacing: one carrier period.
    pub fn tap_spacing(&self) -> f64 {
        1.0 / self.carrier_hz
    }

    /// Duration of the TRPC pulse cluster, `2 N_f T_d`.
    pub fn cluster_length(&self) -> f64 {
        2.0 * self.pairs_per_symbol as f64 * self.pair_delay
    }

    /// Per-pulse amplitude `sqrt(E_b / 2N_f)`.
    pub fn pulse_amplitude(&self) -> f64 {
        (self.energy_per_bit / (2.0 * self.pairs_per_symbol as f64)).sqrt()
    }

    pub fn rrc_span(&self) -> f64 {
        self.span_pulses * self.pulse_width
    }

    /// Integer ratio `fs_pass / fs_base`.
    pub fn decimation(&self) -> Result<usize> {
        let ratio = self.fs_pass / self.fs_base;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > GRID_TOLERANCE {
            return Err(Error::param(
                "fs_base",
                format!("fs_pass / fs_base = {ratio} is not an integer"),
            ));
        }
        Ok(n as usize)
    }

    /// Checks the invariants every signaling relies on.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("carrier_hz", self.carrier_hz),
            ("energy_per_bit", self.energy_per_bit),
            ("symbol_period", self.symbol_period),
            ("pair_delay", self.pair_delay),
            ("pulse_width", self.pulse_width),
            ("span_pulses", self.span_pulses),
            ("fs_pass", self.fs_pass),
            ("fs_base", self.fs_base),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if self.pairs_per_symbol == 0 {
            return Err(Error::param("pairs_per_symbol", "must be at least 1"));
        }
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return Err(Error::param("rolloff", format!("must be in (0, 1], got {}", self.rolloff)));
        }
        if (self.pair_delay - self.pulse_width).abs() > 1e-6 * self.pulse_width {
            return Err(Error::param("pair_delay", "TRPC requires pair_delay == pulse_width"));
        }
        let cycles = self.fs_pass / (4.0 * self.carrier_hz);
        if (cycles - cycles.round()).abs() > GRID_TOLERANCE || cycles.round() < 1.0 {
            return Err(Error::param(
                "fs_pass",
                "must be an integer multiple of 4 x carrier_hz",
            ));
        }
        self.decimation()?;
        grid_samples("tap_spacing", self.tap_spacing(), self.fs_pass)?;
        grid_samples("pair_delay", self.pair_delay, self.fs_base)?;
        grid_samples("symbol_period", self.symbol_period, self.fs_base)?;
        grid_samples("rrc_span", self.rrc_span(), self.fs_base)?;
        let support = self.cluster_length() + self.rrc_span();
        if support > self.symbol_period {
            return Err(Error::param(
                "symbol_period",
                format!("cluster plus pulse span ({support:e} s) exceeds the symbol period"),
            ));
        }
        Ok(())
    }

    /// Extra checks for the conventional TR and BPSK comparison signalings.
    pub fn validate_tr(&self) -> Result<()> {
        if self.tr_delay < self.pulse_width {
            return Err(Error::param("tr_delay", "must be at least one pulse width"));
        }
        if self.tr_frame < 2.0 * self.tr_delay * (1.0 - 1e-12) {
            return Err(Error::param(
                "tr_frame",
                format!(
                    "frame {:e} s is shorter than twice the TR delay {:e} s",
                    self.tr_frame, self.tr_delay
                ),
            ));
        }
        let frames = self.pairs_per_symbol as f64 * self.tr_frame;
        if frames > self.symbol_period * (1.0 + 1e-12) {
            return Err(Error::param(
                "tr_frame",
                "N_f frames do not fit in one symbol period",
            ));
        }
        grid_samples("tr_delay", self.tr_delay, self.fs_base)?;
        grid_samples("tr_frame", self.tr_frame / 2.0, self.fs_base)?;
        Ok(())
    }
}

/// Number of samples in `duration` at rate `fs`, which must be an integer.
pub fn grid_samples(what: &'static str, duration: f64, fs: f64) -> Result<usize> {
    let x = duration * fs;
    let n = x.round();
    if n < 0.0 || (x - n).abs() > GRID_TOLERANCE {
        return Err(Error::OffGrid {
            what,
            value: duration,
            fs,
        });
    }
    Ok(n as usize)
}

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    /// Sample rate, Hz.
    pub fs: f64,
    /// Time of the first sample, s.
    pub t0: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, fs: f64, t0: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::param("fs", format!("must be positive, got {fs}")));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::param("samples", format!("sample {i} is not finite")));
        }
        Ok(Self { samples, fs, t0 })
    }

    pub fn zeros(len: usize, fs: f64, t0: f64) -> Self {
        Self {
            samples: vec![0.0; len],
            fs,
            t0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Time of sample `n`.
    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.fs
    }

    /// `sum |x|^2 / fs`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.fs
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| x * k).collect(),
            fs: self.fs,
            t0: self.t0,
        }
    }
}

fn rrc_value(t: f64, period: f64, rolloff: f64) -> f64 {
    let x = t / period;
    let a = rolloff;
    if x.abs() < 1e-12 {
        return 1.0 - a + 4.0 * a / PI;
    }
    if ((4.0 * a * x).abs() - 1.0).abs() < 1e-9 {
        let arg = PI / (4.0 * a);
        return a * FRAC_1_SQRT_2
            * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    let num = (PI * x * (1.0 - a)).sin() + 4.0 * a * x * (PI * x * (1.0 + a)).cos();
    let den = PI * x * (1.0 - (4.0 * a * x).powi(2));
    num / den
}

/// Unit-energy root-raised-cosine pulse truncated to [`DEFAULT_SPAN_PULSES`]
/// pulse widths. The pulse is causal: it starts at `t0 = 0` and peaks at the
/// center sample.
pub fn rrc_pulse(rolloff: f64, pulse_width: f64, fs: f64) -> Result<Waveform> {
    rrc_pulse_with_span(rolloff, pulse_width, fs, DEFAULT_SPAN_PULSES)
}

pub fn rrc_pulse_with_span(
    rolloff: f64,
    pulse_width: f64,
    fs: f64,
    span_pulses: f64,
) -> Result<Waveform> {
    if !(pulse_width.is_finite() && pulse_width > 0.0) {
        return Err(Error::param("pulse_width", format!("must be positive, got {pulse_width}")));
    }
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::param("fs", format!("must be positive, got {fs}")));
    }
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::param("rolloff", format!("must be in (0, 1], got {rolloff}")));
    }
    if !(span_pulses > 0.0) {
        return Err(Error::param("span_pulses", "must be positive"));
    }
    // 4 samples per pulse width is the coarsest rate the receiver filter runs at.
    if fs * pulse_width < 4.0 - 1e-9 {
        return Err(Error::param(
            "fs",
            format!("needs at least 4 samples per pulse width, got {}", fs * pulse_width),
        ));
    }
    let half = (0.5 * span_pulses * pulse_width * fs).round() as i64;
    let mut samples: Vec<f64> = (-half..=half)
        .map(|n| rrc_value(n as f64 / fs, pulse_width, rolloff))
        .collect();
    let energy = samples.iter().map(|x| x * x).sum::<f64>() / fs;
    let k = energy.sqrt().recip();
    samples.iter_mut().for_each(|x| *x *= k);
    Waveform::new(samples, fs, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseRole {
    /// Unmodulated reference pulse.
    Reference,
    /// Pulse multiplied by the symbol polarity.
    Data,
}

/// One pulse of a symbol: start offset from the symbol boundary and role.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSlot {
    pub offset: f64,
    pub role: PulseRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signaling {
    /// Transmitted-reference pulse cluster: `N_f` back-to-back pairs at `T_d`.
    Trpc,
    /// Conventional TR: one pair per frame, pair delay `T_d'`, frame `T_f`.
    Tr,
    /// Bipolar pulses for the coherent Rake comparison system.
    Bpsk,
}

impl Signaling {
    /// Pulse slots of one symbol.
    pub fn layout(self, cfg: &SystemConfig) -> Vec<PulseSlot> {
        let nf = cfg.pairs_per_symbol;
        match self {
            Signaling::Trpc => (0..2 * nf)
                .map(|j| PulseSlot {
                    offset: j as f64 * cfg.pair_delay,
                    role: if j % 2 == 0 {
                        PulseRole::Reference
                    } else {
                        PulseRole::Data
                    },
                })
                .collect(),
            Signaling::Tr => (0..nf)
                .flat_map(|m| {
                    let frame = m as f64 * cfg.tr_frame;
                    [
                        PulseSlot {
                            offset: frame,
                            role: PulseRole::Reference,
                        },
                        PulseSlot {
                            offset: frame + cfg.tr_delay,
                            role: PulseRole::Data,
                        },
                    ]
                })
                .collect(),
            Signaling::Bpsk => (0..2 * nf)
                .map(|m| PulseSlot {
                    offset: m as f64 * cfg.tr_frame / 2.0,
                    role: PulseRole::Data,
                })
                .collect(),
        }
    }
}

pub(crate) fn check_bits(bits: &[i8]) -> Result<()> {
    if bits.is_empty() {
        return Err(Error::param("bits", "sequence is empty"));
    }
    match bits.iter().find(|&&b| b != 1 && b != -1) {
        Some(&b) => Err(Error::InvalidSymbol(b as i64)),
        None => Ok(()),
    }
}

/// Adds `amp * pulse` into `out` starting at sample `start`, clipping at the end.
pub(crate) fn add_pulse(out: &mut [f64], pulse: &[f64], start: usize, amp: f64) {
    if start >= out.len() {
        return;
    }
    let end = (start + pulse.len()).min(out.len());
    for (o, p) in out[start..end].iter_mut().zip(pulse) {
        *o += amp * p;
    }
}

/// Baseband waveform of `bits` under `signaling`, sampled at `fs`.
pub fn baseband(signaling: Signaling, bits: &[i8], cfg: &SystemConfig, fs: f64) -> Result<Waveform> {
    check_bits(bits)?;
    cfg.validate()?;
    if signaling != Signaling::Trpc {
        cfg.validate_tr()?;
    }
    let pulse = rrc_pulse_with_span(cfg.rolloff, cfg.pulse_width, fs, cfg.span_pulses)?;
    let sym = grid_samples("symbol_period", cfg.symbol_period, fs)?;
    let slots = signaling
        .layout(cfg)
        .into_iter()
        .map(|s| grid_samples("pulse offset", s.offset, fs).map(|n| (n, s.role)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(&(last, _)) = slots.last() {
        if last + pulse.len() > sym {
            return Err(Error::param(
                "symbol_period",
                "pulse support spills into the next symbol",
            ));
        }
    }
    let amp = cfg.pulse_amplitude();
    let mut out = vec![0.0; bits.len() * sym];
    for (i, &b) in bits.iter().enumerate() {
        for &(offset, role) in &slots {
            let sign = match role {
                PulseRole::Reference => 1.0,
                PulseRole::Data => b as f64,
            };
            add_pulse(&mut out, &pulse.samples, i * sym + offset, amp * sign);
        }
    }
    Waveform::new(out, fs, 0.0)
}

/// Baseband TRPC signal: per symbol, `N_f` reference/data pairs spaced `T_d`.
pub fn trpc_baseband(bits: &[i8], cfg: &SystemConfig, fs: f64) -> Result<Waveform> {
    baseband(Signaling::Trpc, bits, cfg, fs)
}

/// Conventional TR signal: one pair per frame.
pub fn tr_baseband(bits: &[i8], cfg: &SystemConfig, fs: f64) -> Result<Waveform> {
    baseband(Signaling::Tr, bits, cfg, fs)
}

/// Bipolar signal for the coherent SRake/MRC system: `2 N_f` pulses spaced `T_f / 2`.
pub fn bpsk_baseband(bits: &[i8], cfg: &SystemConfig, fs: f64) -> Result<Waveform> {
    baseband(Signaling::Bpsk, bits, cfg, fs)
}
