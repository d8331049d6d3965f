use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::io::write_outputs;
use super::montecarlo::{noise_psd, with_threads, RunMetadata};
use crate::analysis::{composite_bep, estimate_dv_stats_with, training_seed, SemiAnalyticResult};
use crate::channel::ChannelEnsemble;
use crate::error::{Error, Result};
use crate::transceiver::System;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiAnalyticPoint {
    pub ebn0_db: f64,
    pub pe_mean: f64,
    pub pe_min: f64,
    pub pe_max: f64,
    pub beta_hz: f64,
    pub model: String,
    /// Per-realization results in realization order.
    pub realizations: Vec<SemiAnalyticResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiAnalyticCurve {
    pub points: Vec<SemiAnalyticPoint>,
    pub metadata: RunMetadata,
}

impl SemiAnalyticCurve {
    pub const CSV_HEADER: &'static str = "ebn0_db,pe_mean,pe_min,pe_max,beta_hz,model";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{:.6e},{:.6e},{:.6e},{},{}",
                p.ebn0_db, p.pe_mean, p.pe_min, p.pe_max, p.beta_hz, p.model
            );
        }
        s
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        write_outputs(dir, stem, &self.to_csv(), &serde_json::to_string_pretty(&self.metadata)?)
    }

    /// Eb/N0 where `pe_mean` first reaches `target` (log-linear interpolation).
    pub fn ebn0_at(&self, target: f64) -> Option<f64> {
        let lt = target.log10();
        let mut prev: Option<(f64, f64)> = None;
        for p in &self.points {
            if p.pe_mean <= target {
                return Some(match prev {
                    Some((x0, y0)) if p.pe_mean > 0.0 => {
                        x0 + (lt - y0) * (p.ebn0_db - x0) / (p.pe_mean.log10() - y0)
                    }
                    _ => p.ebn0_db,
                });
            }
            prev = Some((p.ebn0_db, p.pe_mean.log10()));
        }
        None
    }
}

pub fn run_semianalytic(cfg: &RunConfig) -> Result<SemiAnalyticCurve> {
    cfg.validate()?;
    let ens = cfg.channels()?;
    run_semianalytic_on(cfg, &ens, |_| {})
}

/// Per point and realization: train the DV statistics at that noise level,
/// evaluate the composite BEP, then average over the ensemble.
pub fn run_semianalytic_on(
    cfg: &RunConfig,
    ens: &ChannelEnsemble,
    mut on_point: impl FnMut(&SemiAnalyticPoint) + Send,
) -> Result<SemiAnalyticCurve> {
    cfg.validate()?;
    if cfg.system != System::Trpc {
        return Err(Error::param("system", "the semi-analytic model covers TRPC only"));
    }
    let metadata = RunMetadata::new("semianalytic", cfg, ens)?;
    let t_d = cfg.physical.pair_delay;
    let points = with_threads(cfg.threads, || -> Result<Vec<SemiAnalyticPoint>> {
        let mut points = Vec::with_capacity(cfg.ebn0_db.len());
        for (k, &ebn0) in cfg.ebn0_db.iter().enumerate() {
            let n0 = noise_psd(cfg, ebn0);
            let results = ens
                .realizations
                .par_iter()
                .enumerate()
                .map(|(r, h)| {
                    estimate_dv_stats_with(
                        h,
                        &cfg.physical,
                        n0,
                        training_seed(cfg.master_seed, k, r),
                        cfg.training_symbols,
                        cfg.envelope_noise,
                    )
                    .and_then(|s| composite_bep(&s, cfg.beta_hz, t_d))
                    .map_err(|e| e.in_realization(r))
                })
                .collect::<Result<Vec<_>>>()?;
            let pes: Vec<f64> = results.iter().map(|r| r.pe).collect();
            let p = SemiAnalyticPoint {
                ebn0_db: ebn0,
                pe_mean: pes.iter().sum::<f64>() / pes.len() as f64,
                pe_min: pes.iter().cloned().fold(f64::INFINITY, f64::min),
                pe_max: pes.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                beta_hz: cfg.beta_hz,
                model: ens.model.to_string(),
                realizations: results,
            };
            log::info!("semi-analytic Eb/N0 {ebn0} dB: Pe {:.3e}", p.pe_mean);
            on_point(&p);
            points.push(p);
        }
        Ok(points)
    })??;
    Ok(SemiAnalyticCurve { points, metadata })
}
