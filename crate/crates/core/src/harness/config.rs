//! Flat `key = value` run configuration.
//!
//! ```text
//! # CM1 beta sweep
//! system = trpc
//! mode = lti
//! model = cm1
//! beta_hz = 1e5
//! ebn0_db = 0:2:20
//! symbols_per_point = 200000
//! ```
//!
//! Blank lines and `#` comments are ignored. `ebn0_db` is either
//! `start:step:stop` (inclusive) or a comma-separated list.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelEnsemble, ChannelModel};
use crate::error::{Error, Result};
use crate::phasenoise::{PhaseNoiseMode, PsdProfile};
use crate::signals::SystemConfig;
use crate::transceiver::{Downconversion, EnvelopeNoise, LinkSpec, OffsetPolicy, SimMode, System};

/// Smallest admissible symbol budget per sweep point.
pub const MIN_SYMBOLS_PER_POINT: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: System,
    pub mode: SimMode,
    pub downconv: Downconversion,
    pub model: ChannelModel,
    pub beta_hz: f64,
    pub pn_mode: PhaseNoiseMode,
    pub pn_profile: Option<PathBuf>,
    /// `None` picks the system default: uniform for TRPC, zero otherwise.
    pub delta_f: Option<OffsetPolicy>,
    pub phi: OffsetPolicy,
    pub ebn0_db: Vec<f64>,
    pub symbols_per_point: u64,
    /// Early stop once this many errors are counted at a point; 0 disables.
    pub max_errors: u64,
    pub realizations: usize,
    pub channel_file: Option<PathBuf>,
    pub channel_seed: u64,
    pub master_seed: u64,
    pub fingers: usize,
    pub packet_symbols: usize,
    pub envelope_noise: EnvelopeNoise,
    pub threads: Option<usize>,
    /// Symbols per realization in the first early-stop round.
    pub batch_symbols: u64,
    pub training_symbols: usize,
    pub physical: SystemConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: System::Trpc,
            mode: SimMode::Lti,
            downconv: Downconversion::Iq,
            model: ChannelModel::Cm1,
            beta_hz: 0.0,
            pn_mode: PhaseNoiseMode::Brownian,
            pn_profile: None,
            delta_f: None,
            phi: OffsetPolicy::Uniform,
            ebn0_db: (0..=10).map(|k| 2.0 * k as f64).collect(),
            symbols_per_point: 200_000,
            max_errors: 200,
            realizations: 20,
            channel_file: None,
            channel_seed: 1,
            master_seed: 1,
            fingers: 8,
            packet_symbols: 100,
            envelope_noise: EnvelopeNoise::Complex,
            threads: None,
            batch_symbols: 500,
            training_symbols: crate::analysis::TRAINING_SYMBOLS,
            physical: SystemConfig::default(),
        }
    }
}

/// Parses `start:step:stop` or `a, b, c`; the result is sorted.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| Error::param("ebn0_db", format!("`{text}`: {why}"));
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    let mut grid = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:step:stop"));
        }
        let (a, s, b) = match (num(parts[0]), num(parts[1]), num(parts[2])) {
            (Some(a), Some(s), Some(b)) => (a, s, b),
            _ => return Err(bad("not a number")),
        };
        if !(s > 0.0) || b < a {
            return Err(bad("step must be positive and stop >= start"));
        }
        let n = ((b - a) / s + 1e-9).floor() as usize;
        (0..=n).map(|k| a + k as f64 * s).collect::<Vec<_>>()
    } else {
        text.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| num(s).ok_or_else(|| bad("not a number")))
            .collect::<Result<Vec<_>>>()?
    };
    if grid.is_empty() {
        return Err(bad("grid is empty"));
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    Ok(grid)
}

fn parse_num<T: std::str::FromStr>(key: &'static str, v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| Error::param(key, format!("cannot parse `{v}`")))
}

fn parse_opt_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Keys accepted by [`RunConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "system",
        "mode",
        "downconv",
        "model",
        "beta_hz",
        "pn_mode",
        "pn_profile",
        "delta_f_hz",
        "phi_rad",
        "ebn0_db",
        "symbols_per_point",
        "max_errors",
        "realizations",
        "channel_file",
        "channel_seed",
        "master_seed",
        "fingers",
        "packet_symbols",
        "envelope_noise",
        "threads",
        "batch_symbols",
        "training_symbols",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "system" => self.system = v.parse()?,
            "mode" => self.mode = v.parse()?,
            "downconv" => self.downconv = v.parse()?,
            "model" => self.model = v.parse()?,
            "beta_hz" => self.beta_hz = parse_num("beta_hz", v)?,
            "pn_mode" => {
                self.pn_mode = match v.to_ascii_lowercase().as_str() {
                    "brownian" => PhaseNoiseMode::Brownian,
                    "spectral" => PhaseNoiseMode::Spectral,
                    _ => return Err(Error::param("pn_mode", format!("expected brownian or spectral, got `{v}`"))),
                }
            }
            "pn_profile" => self.pn_profile = parse_opt_path(v),
            "delta_f_hz" => {
                self.delta_f = if v.eq_ignore_ascii_case("default") {
                    None
                } else {
                    Some(v.parse()?)
                }
            }
            "phi_rad" => self.phi = v.parse()?,
            "ebn0_db" => self.ebn0_db = parse_grid(v)?,
            "symbols_per_point" => self.symbols_per_point = parse_num::<f64>("symbols_per_point", v)? as u64,
            "max_errors" => self.max_errors = parse_num("max_errors", v)?,
            "realizations" => self.realizations = parse_num("realizations", v)?,
            "channel_file" => self.channel_file = parse_opt_path(v),
            "channel_seed" => self.channel_seed = parse_num("channel_seed", v)?,
            "master_seed" => self.master_seed = parse_num("master_seed", v)?,
            "fingers" => self.fingers = parse_num("fingers", v)?,
            "packet_symbols" => self.packet_symbols = parse_num("packet_symbols", v)?,
            "envelope_noise" => self.envelope_noise = v.parse()?,
            "threads" => {
                let n: usize = parse_num("threads", v)?;
                self.threads = (n > 0).then_some(n);
            }
            "batch_symbols" => self.batch_symbols = parse_num("batch_symbols", v)?,
            "training_symbols" => self.training_symbols = parse_num("training_symbols", v)?,
            other => return Err(Error::param("key", format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(k, v).map_err(|e| Error::Config {
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut cfg = Self::parse(&fs::read_to_string(path)?)?;
        // Relative file references resolve against the config's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.channel_file, &mut cfg.pn_profile].into_iter().flatten() {
            if p.is_relative() && !p.exists() {
                let candidate = base.join(&*p);
                if candidate.exists() {
                    *p = candidate;
                }
            }
        }
        Ok(cfg)
    }

    /// Serializes back to the file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let grid: Vec<String> = self.ebn0_db.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "system = {}", self.system);
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "downconv = {}", self.downconv);
        let _ = writeln!(s, "model = {}", self.model);
        let _ = writeln!(s, "beta_hz = {}", self.beta_hz);
        let _ = writeln!(
            s,
            "pn_mode = {}",
            match self.pn_mode {
                PhaseNoiseMode::Brownian => "brownian",
                PhaseNoiseMode::Spectral => "spectral",
            }
        );
        let _ = writeln!(s, "pn_profile = {}", path(&self.pn_profile));
        let _ = writeln!(s, "delta_f_hz = {}", self.delta_f.map_or("default".to_string(), |d| d.to_string()));
        let _ = writeln!(s, "phi_rad = {}", self.phi);
        let _ = writeln!(s, "ebn0_db = {}", grid.join(", "));
        let _ = writeln!(s, "symbols_per_point = {}", self.symbols_per_point);
        let _ = writeln!(s, "max_errors = {}", self.max_errors);
        let _ = writeln!(s, "realizations = {}", self.realizations);
        let _ = writeln!(s, "channel_file = {}", path(&self.channel_file));
        let _ = writeln!(s, "channel_seed = {}", self.channel_seed);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "fingers = {}", self.fingers);
        let _ = writeln!(s, "packet_symbols = {}", self.packet_symbols);
        let _ = writeln!(s, "envelope_noise = {}", self.envelope_noise);
        let _ = writeln!(s, "threads = {}", self.threads.unwrap_or(0));
        let _ = writeln!(s, "batch_symbols = {}", self.batch_symbols);
        let _ = writeln!(s, "training_symbols = {}", self.training_symbols);
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.ebn0_db.is_empty() {
            return Err(Error::param("ebn0_db", "grid is empty"));
        }
        if self.symbols_per_point < MIN_SYMBOLS_PER_POINT {
            return Err(Error::param(
                "symbols_per_point",
                format!("must be at least {MIN_SYMBOLS_PER_POINT}, got {}", self.symbols_per_point),
            ));
        }
        if self.realizations == 0 {
            return Err(Error::param("realizations", "must be at least 1"));
        }
        if self.batch_symbols == 0 {
            return Err(Error::param("batch_symbols", "must be at least 1"));
        }
        for p in [&self.channel_file, &self.pn_profile].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::MissingFile(p.clone()));
            }
        }
        self.link_spec_without_profile().validate()?;
        self.physical.validate()
    }

    pub fn effective_delta_f(&self) -> OffsetPolicy {
        self.delta_f.unwrap_or(match self.system {
            System::Trpc | System::BasebandTrpc => OffsetPolicy::Uniform,
            System::Tr | System::Srake => OffsetPolicy::Fixed(0.0),
        })
    }

    fn link_spec_without_profile(&self) -> LinkSpec {
        LinkSpec {
            system: self.system,
            mode: self.mode,
            downconv: self.downconv,
            envelope_noise: self.envelope_noise,
            fingers: self.fingers,
            packet_symbols: self.packet_symbols,
            beta: self.beta_hz,
            pn_mode: self.pn_mode,
            pn_profile: None,
            delta_f: self.effective_delta_f(),
            phi: self.phi,
        }
    }

    pub fn link_spec(&self) -> Result<LinkSpec> {
        let mut spec = self.link_spec_without_profile();
        if let Some(p) = &self.pn_profile {
            spec.pn_profile = Some(PsdProfile::load(p)?);
        }
        Ok(spec)
    }

    /// The channel set of the run: the first `realizations` entries of the
    /// channel file, or a fresh ensemble from `channel_seed`.
    pub fn channels(&self) -> Result<ChannelEnsemble> {
        match &self.channel_file {
            Some(path) => {
                let mut ens = ChannelEnsemble::load(path)?;
                if ens.model != self.model {
                    log::warn!("channel file holds {} realizations; config says {}", ens.model, self.model);
                }
                if ens.len() < self.realizations {
                    return Err(Error::Mismatch(format!(
                        "channel file has {} realizations, {} requested",
                        ens.len(),
                        self.realizations
                    )));
                }
                ens.realizations.truncate(self.realizations);
                Ok(ens)
            }
            None => ChannelEnsemble::generate(self.model, self.realizations, self.channel_seed, &self.physical),
        }
    }
}
