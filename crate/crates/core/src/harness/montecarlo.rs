use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::io::{sha256_hex, write_outputs};
use crate::channel::ChannelEnsemble;
use crate::error::{Error, Result};
use crate::transceiver::{Link, SessionSeeds};

/// 95% two-sided normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub ebn0_db: f64,
    pub errors: u64,
    pub bits: u64,
    pub ber: f64,
}

impl BerPoint {
    pub fn new(ebn0_db: f64, errors: u64, bits: u64) -> Self {
        Self {
            ebn0_db,
            errors,
            bits,
            ber: if bits == 0 { 0.0 } else { errors as f64 / bits as f64 },
        }
    }

    pub fn ci95(&self) -> (f64, f64) {
        wilson_interval(self.errors, self.bits, Z95)
    }
}

/// Run description written next to every result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub kind: String,
    pub version: String,
    pub config: RunConfig,
    pub channel_model: String,
    pub channel_count: usize,
    /// SHA-256 of the channel ensemble in its file format.
    pub channel_sha256: String,
    /// Symbols per point are a budget choice, not a measured quantity.
    pub budget_note: String,
}

impl RunMetadata {
    pub fn new(kind: &str, cfg: &RunConfig, ens: &ChannelEnsemble) -> Result<Self> {
        Ok(Self {
            kind: kind.into(),
            version: crate::VERSION.into(),
            config: cfg.clone(),
            channel_model: ens.model.to_string(),
            channel_count: ens.len(),
            channel_sha256: sha256_hex(ens.to_json()?.as_bytes()),
            budget_note: format!(
                "{} symbols per point over {} realizations, early stop at {} errors",
                cfg.symbols_per_point, cfg.realizations, cfg.max_errors
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub points: Vec<BerPoint>,
    pub metadata: RunMetadata,
}

impl BerCurve {
    pub const CSV_HEADER: &'static str = "ebn0_db,errors,bits,ber";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{:.6e}", p.ebn0_db, p.errors, p.bits, p.ber);
        }
        s
    }

    /// Parses the CSV body (metadata is not part of the CSV).
    pub fn points_from_csv(text: &str) -> Result<Vec<BerPoint>> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(Self::CSV_HEADER) {
            return Err(Error::param("csv", format!("expected header `{}`", Self::CSV_HEADER)));
        }
        lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                let bad = || Error::param("csv", format!("bad row `{l}`"));
                if f.len() != 4 {
                    return Err(bad());
                }
                Ok(BerPoint::new(
                    f[0].parse().map_err(|_| bad())?,
                    f[1].parse().map_err(|_| bad())?,
                    f[2].parse().map_err(|_| bad())?,
                ))
            })
            .collect()
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        write_outputs(dir, stem, &self.to_csv(), &serde_json::to_string_pretty(&self.metadata)?)
    }

    /// Eb/N0 where the curve first crosses `target`, by linear
    /// interpolation of `log10(BER)`; `None` if it never gets there.
    pub fn ebn0_at(&self, target: f64) -> Option<f64> {
        ebn0_at_ber(&self.points, target)
    }
}

pub fn ebn0_at_ber(points: &[BerPoint], target: f64) -> Option<f64> {
    let lt = target.log10();
    let mut prev: Option<(f64, f64)> = None;
    for p in points {
        if p.bits == 0 {
            continue;
        }
        if p.errors == 0 || p.ber <= target {
            return Some(match prev {
                Some((x0, y0)) if p.errors > 0 => {
                    let y1 = p.ber.log10();
                    x0 + (lt - y0) * (p.ebn0_db - x0) / (y1 - y0)
                }
                Some((x0, _)) if p.errors == 0 => 0.5 * (x0 + p.ebn0_db),
                _ => p.ebn0_db,
            });
        }
        prev = Some((p.ebn0_db, p.ber.log10()));
    }
    None
}

/// Noise PSD for the given Eb/N0 in dB.
pub fn noise_psd(cfg: &RunConfig, ebn0_db: f64) -> f64 {
    cfg.physical.energy_per_bit / 10f64.powf(ebn0_db / 10.0)
}

pub(crate) fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::param("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Loads or generates the channel set and runs the sweep.
pub fn run_monte_carlo(cfg: &RunConfig) -> Result<BerCurve> {
    cfg.validate()?;
    let ens = cfg.channels()?;
    run_monte_carlo_on(cfg, &ens, |_| {})
}

/// Sweep over a given ensemble; `on_point` sees each finished point in order.
///
/// Every (point, realization) cell draws from its own seeded streams, so
/// results do not depend on the thread count. Symbols are simulated in
/// rounds of `batch_symbols * 2^k` per realization; a point stops after the
/// first round whose cumulative error count reaches `max_errors`.
pub fn run_monte_carlo_on(
    cfg: &RunConfig,
    ens: &ChannelEnsemble,
    mut on_point: impl FnMut(&BerPoint) + Send,
) -> Result<BerCurve> {
    cfg.validate()?;
    let spec = cfg.link_spec()?;
    let metadata = RunMetadata::new("monte_carlo", cfg, ens)?;
    let points = with_threads(cfg.threads, || -> Result<Vec<BerPoint>> {
        let links = ens
            .realizations
            .par_iter()
            .enumerate()
            .map(|(r, h)| Link::new(&cfg.physical, spec.clone(), h).map_err(|e| e.in_realization(r)))
            .collect::<Result<Vec<_>>>()?;
        let quota = cfg.symbols_per_point.div_ceil(links.len() as u64);
        let mut points = Vec::with_capacity(cfg.ebn0_db.len());
        for (k, &ebn0) in cfg.ebn0_db.iter().enumerate() {
            let n0 = noise_psd(cfg, ebn0);
            let mut sessions = links
                .iter()
                .enumerate()
                .map(|(r, l)| l.session(n0, SessionSeeds::derive(cfg.master_seed, &[k as u64, r as u64])))
                .collect::<Result<Vec<_>>>()?;
            let (mut errors, mut bits, mut done) = (0u64, 0u64, 0u64);
            let mut round = 0u32;
            while done < quota {
                let n = cfg.batch_symbols.saturating_mul(1u64 << round.min(40)).min(quota - done);
                let counts = sessions
                    .par_iter_mut()
                    .enumerate()
                    .map(|(r, s)| s.run(n).map_err(|e| e.in_realization(r)))
                    .collect::<Result<Vec<_>>>()?;
                for (e, b) in counts {
                    errors += e;
                    bits += b;
                }
                done += n;
                round += 1;
                if cfg.max_errors > 0 && errors >= cfg.max_errors {
                    break;
                }
            }
            let p = BerPoint::new(ebn0, errors, bits);
            log::info!("{} Eb/N0 {ebn0} dB: {errors} errors / {bits} bits, BER {:.3e}", cfg.system, p.ber);
            on_point(&p);
            points.push(p);
        }
        Ok(points)
    })??;
    Ok(BerCurve { points, metadata })
}
