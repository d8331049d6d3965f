//! IEEE 802.15.3a Saleh-Valenzuela multipath channels on the carrier-period
//! tap grid.

mod io;

pub use io::ChannelEnsemble;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::rng_from;
use crate::signals::{grid_samples, SystemConfig, Waveform};

/// Fraction of channel energy kept when truncating the tail.
pub const ENERGY_KEPT: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelModel {
    #[serde(rename = "CM1")]
    Cm1,
    #[serde(rename = "CM2")]
    Cm2,
}

impl ChannelModel {
    pub fn label(self) -> &'static str {
        match self {
            ChannelModel::Cm1 => "CM1",
            ChannelModel::Cm2 => "CM2",
        }
    }

    pub fn parameters(self) -> &'static SvParameters {
        let table = sv_table();
        match self {
            ChannelModel::Cm1 => &table.cm1,
            ChannelModel::Cm2 => &table.cm2,
        }
    }
}

impl fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ChannelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CM1" => Ok(ChannelModel::Cm1),
            "CM2" => Ok(ChannelModel::Cm2),
            _ => Err(Error::UnknownModel(s.to_string())),
        }
    }
}

/// S-V model parameters, times in ns.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SvParameters {
    pub cluster_rate: f64,
    pub ray_rate: f64,
    pub cluster_decay: f64,
    pub ray_decay: f64,
    pub sigma_cluster_db: f64,
    pub sigma_ray_db: f64,
    pub sigma_shadow_db: f64,
    pub target_mean_excess_delay_ns: f64,
    pub target_rms_delay_spread_ns: f64,
}

#[derive(Deserialize)]
struct SvTable {
    #[allow(dead_code)]
    version: u32,
    models: SvModels,
}

#[derive(Deserialize)]
struct SvModels {
    #[serde(rename = "CM1")]
    cm1: SvParameters,
    #[serde(rename = "CM2")]
    cm2: SvParameters,
}

struct Table {
    cm1: SvParameters,
    cm2: SvParameters,
}

fn sv_table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(|| {
        let raw: SvTable = serde_json::from_str(include_str!("../../data/sv_params.json"))
            .expect("bundled S-V parameter file is valid JSON");
        Table {
            cm1: raw.models.cm1,
            cm2: raw.models.cm2,
        }
    })
}

/// One continuous-time multipath arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub gain: f64,
    /// Delay, s.
    pub delay: f64,
}

/// Tap on the `tap_spacing` grid: delay is `index * tap_spacing`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub index: usize,
    pub gain: f64,
}

/// Discretized channel impulse response `sum_k alpha_k delta(t - k T_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Nonzero taps, indices strictly increasing.
    pub taps: Vec<Tap>,
    pub model: Option<ChannelModel>,
    pub tap_spacing: f64,
}

impl ChannelRealization {
    pub fn new(taps: Vec<Tap>, model: Option<ChannelModel>, tap_spacing: f64) -> Result<Self> {
        if !(tap_spacing.is_finite() && tap_spacing > 0.0) {
            return Err(Error::param("tap_spacing", "must be positive"));
        }
        if taps.is_empty() {
            return Err(Error::param("taps", "channel has no taps"));
        }
        if taps.windows(2).any(|w| w[1].index <= w[0].index) {
            return Err(Error::param("taps", "tap indices must be strictly increasing"));
        }
        if taps.iter().any(|t| !t.gain.is_finite()) {
            return Err(Error::param("taps", "tap gain is not finite"));
        }
        Ok(Self {
            taps,
            model,
            tap_spacing,
        })
    }

    /// Single tap of unit gain at delay zero.
    pub fn identity(tap_spacing: f64) -> Self {
        Self {
            taps: vec![Tap { index: 0, gain: 1.0 }],
            model: None,
            tap_spacing,
        }
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.gain * t.gain).sum()
    }

    pub fn delay(&self, tap: &Tap) -> f64 {
        tap.index as f64 * self.tap_spacing
    }

    /// `(alpha_k, tau_k)` pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.taps.iter().map(|t| (t.gain, self.delay(t)))
    }

    pub fn max_index(&self) -> usize {
        self.taps.last().map_or(0, |t| t.index)
    }

    pub fn max_delay(&self) -> f64 {
        self.max_index() as f64 * self.tap_spacing
    }

    pub fn normalized(mut self) -> Result<Self> {
        let e = self.energy();
        if !(e > 0.0) {
            return Err(Error::param("taps", "channel has zero energy"));
        }
        let k = e.sqrt().recip();
        self.taps.iter_mut().for_each(|t| t.gain *= k);
        Ok(self)
    }

    pub fn mean_excess_delay(&self) -> f64 {
        let e = self.energy();
        self.pairs().map(|(a, t)| a * a * t).sum::<f64>() / e
    }

    pub fn rms_delay_spread(&self) -> f64 {
        let e = self.energy();
        let m = self.mean_excess_delay();
        let m2 = self.pairs().map(|(a, t)| a * a * t * t).sum::<f64>() / e;
        (m2 - m * m).max(0.0).sqrt()
    }

    /// Smallest tap delay at which the cumulative energy reaches `fraction`
    /// of the total.
    pub fn energy_delay(&self, fraction: f64) -> f64 {
        let total = self.energy();
        let mut acc = 0.0;
        for t in &self.taps {
            acc += t.gain * t.gain;
            if acc >= fraction * total * (1.0 - 1e-12) {
                return self.delay(t);
            }
        }
        self.max_delay()
    }

    /// The `count` strongest taps (ties broken by delay), returned in delay order.
    pub fn strongest(&self, count: usize) -> Vec<Tap> {
        let mut taps = self.taps.clone();
        taps.sort_by(|a, b| {
            b.gain
                .abs()
                .partial_cmp(&a.gain.abs())
                .unwrap()
                .then(a.index.cmp(&b.index))
        });
        taps.truncate(count.min(self.taps.len()));
        taps.sort_by_key(|t| t.index);
        taps
    }

    /// Drops trailing taps beyond `max_delay`.
    pub fn truncate_delay(&mut self, max_delay: f64) -> usize {
        let before = self.taps.len();
        let tc = self.tap_spacing;
        self.taps
            .retain(|t| t.index as f64 * tc <= max_delay * (1.0 + 1e-12));
        before - self.taps.len()
    }
}

/// Draws continuous-time S-V arrivals following the 802.15.3a reference
/// generator: Poisson cluster and ray arrivals, double-exponential mean
/// power decay, lognormal cluster and ray fading, equiprobable polarity.
pub fn generate_sv_arrivals<R: Rng + ?Sized>(model: ChannelModel, rng: &mut R) -> Vec<Arrival> {
    let p = model.parameters();
    let ln10 = std::f64::consts::LN_10;
    let mu_const = (p.sigma_cluster_db.powi(2) + p.sigma_ray_db.powi(2)) * ln10 / 20.0;
    let cluster_gap = Exp::new(p.cluster_rate).expect("positive rate");
    let ray_gap = Exp::new(p.ray_rate).expect("positive rate");
    let mut out = Vec::new();
    let mut tc = 0.0;
    while tc < 10.0 * p.cluster_decay {
        let z: f64 = rng.sample(StandardNormal);
        let ln_xi = p.sigma_cluster_db * z;
        let mut tr = 0.0;
        while tr < 10.0 * p.ray_decay {
            let mu = -10.0 * (tc / p.cluster_decay + tr / p.ray_decay) / ln10 - mu_const;
            let z: f64 = rng.sample(StandardNormal);
            let ln_beta = mu + p.sigma_ray_db * z;
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            out.push(Arrival {
                gain: sign * 10f64.powf((ln_xi + ln_beta) / 20.0),
                delay: (tc + tr) * 1e-9,
            });
            tr += ray_gap.sample(rng);
        }
        tc += cluster_gap.sample(rng);
    }
    out.sort_by(|a, b| a.delay.partial_cmp(&b.delay).unwrap());
    out
}

/// Adds every arrival's gain into the nearest `tap_spacing` bin.
pub fn discretize_channel(arrivals: &[Arrival], tap_spacing: f64) -> Result<ChannelRealization> {
    if !(tap_spacing.is_finite() && tap_spacing > 0.0) {
        return Err(Error::param("tap_spacing", "must be positive"));
    }
    if arrivals.is_empty() {
        return Err(Error::param("arrivals", "no multipath arrivals to discretize"));
    }
    let mut bins = std::collections::BTreeMap::<usize, f64>::new();
    for a in arrivals {
        if !(a.delay.is_finite() && a.delay >= 0.0 && a.gain.is_finite()) {
            return Err(Error::param("arrivals", "delays must be finite and non-negative"));
        }
        let k = (a.delay / tap_spacing).round() as usize;
        *bins.entry(k).or_insert(0.0) += a.gain;
    }
    let taps: Vec<Tap> = bins
        .into_iter()
        .filter(|&(_, g)| g != 0.0)
        .map(|(index, gain)| Tap { index, gain })
        .collect();
    ChannelRealization::new(taps, None, tap_spacing)
}

fn truncate_energy(h: &mut ChannelRealization, fraction: f64) {
    let total = h.energy();
    let mut acc = 0.0;
    let mut keep = h.taps.len();
    for (i, t) in h.taps.iter().enumerate() {
        acc += t.gain * t.gain;
        if acc >= fraction * total {
            keep = i + 1;
            break;
        }
    }
    h.taps.truncate(keep);
}

/// One normalized CM1/CM2 realization on the carrier-period grid of the
/// default [`SystemConfig`].
pub fn generate_sv_channel(model: ChannelModel, rng_seed: u64) -> Result<ChannelRealization> {
    generate_sv_channel_for(model, rng_seed, &SystemConfig::default())
}

/// As [`generate_sv_channel`], on `cfg`'s tap grid, truncated so that the
/// pulse cluster plus channel spread fits in one symbol.
pub fn generate_sv_channel_for(
    model: ChannelModel,
    rng_seed: u64,
    cfg: &SystemConfig,
) -> Result<ChannelRealization> {
    let mut rng = rng_from(rng_seed);
    let arrivals = generate_sv_arrivals(model, &mut rng);
    let mut h = discretize_channel(&arrivals, cfg.tap_spacing())?;
    h.model = Some(model);
    truncate_energy(&mut h, ENERGY_KEPT);
    let bound = cfg.symbol_period - cfg.cluster_length();
    if h.max_delay() > bound {
        let dropped = h.truncate_delay(bound);
        log::warn!(
            "{model} seed {rng_seed}: dropped {dropped} taps beyond {bound:e} s to keep symbols ISI-free"
        );
    }
    h.normalized()
}

/// `sum_k alpha_k w(t - tau_k)`; output is longer than the input by the
/// maximum tap delay.
pub fn apply_channel(w: &Waveform, h: &ChannelRealization) -> Result<Waveform> {
    let step = grid_samples("tap_spacing", h.tap_spacing, w.fs)?;
    let extra = h.max_index() * step;
    let mut out = vec![0.0; w.len() + extra];
    for t in &h.taps {
        let shift = t.index * step;
        for (o, &x) in out[shift..shift + w.len()].iter_mut().zip(&w.samples) {
            *o += t.gain * x;
        }
    }
    Waveform::new(out, w.fs, w.t0)
}
