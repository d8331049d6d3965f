use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_sv_channel_for, ChannelModel, ChannelRealization, Tap};
use crate::error::{Error, Result};
use crate::seeds::{derive_seed, Stream};
use crate::signals::SystemConfig;

/// A persisted set of realizations shared by Monte Carlo and semi-analytic runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEnsemble {
    pub model: ChannelModel,
    pub seed: u64,
    pub tap_spacing: f64,
    pub realizations: Vec<ChannelRealization>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    model: ChannelModel,
    seed: u64,
    count: usize,
    tap_spacing_s: f64,
    /// Gains are decimal strings so the file round-trips bit-exactly.
    realizations: Vec<Vec<(usize, String)>>,
}

impl ChannelEnsemble {
    /// Realization `i` is generated from `derive_seed(seed, [Channel, i])`.
    pub fn generate(model: ChannelModel, count: usize, seed: u64, cfg: &SystemConfig) -> Result<Self> {
        if count == 0 {
            return Err(Error::param("count", "ensemble needs at least one realization"));
        }
        let realizations = (0..count)
            .into_par_iter()
            .map(|i| {
                let s = derive_seed(seed, &[Stream::Channel as u64, i as u64]);
                generate_sv_channel_for(model, s, cfg).map_err(|e| e.in_realization(i))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            seed,
            tap_spacing: cfg.tap_spacing(),
            realizations,
        })
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = EnsembleFile {
            model: self.model,
            seed: self.seed,
            count: self.realizations.len(),
            tap_spacing_s: self.tap_spacing,
            realizations: self
                .realizations
                .iter()
                .map(|h| h.taps.iter().map(|t| (t.index, format!("{:?}", t.gain))).collect())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EnsembleFile = serde_json::from_str(text)?;
        if file.count != file.realizations.len() {
            return Err(Error::Mismatch(format!(
                "channel file declares {} realizations but holds {}",
                file.count,
                file.realizations.len()
            )));
        }
        let realizations = file
            .realizations
            .into_iter()
            .enumerate()
            .map(|(i, taps)| {
                let taps = taps
                    .into_iter()
                    .map(|(index, g)| {
                        g.parse::<f64>()
                            .map(|gain| Tap { index, gain })
                            .map_err(|_| Error::param("realizations", format!("bad gain `{g}`")))
                    })
                    .collect::<Result<Vec<_>>>()
                    .and_then(|taps| {
                        ChannelRealization::new(taps, Some(file.model), file.tap_spacing_s)
                    });
                taps.map_err(|e| e.in_realization(i))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model: file.model,
            seed: file.seed,
            tap_spacing: file.tap_spacing_s,
            realizations,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&fs::read_to_string(path)?)
    }
}
