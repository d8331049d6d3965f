//! Run configuration, Monte Carlo and semi-analytic sweeps, result files.

pub mod config;
pub mod io;
pub mod montecarlo;
pub mod semianalytic;

pub use config::{parse_grid, RunConfig};
pub use io::{output_dir, sha256_hex, OUT_DIR_ENV};
pub use montecarlo::{
    ebn0_at_ber, noise_psd, run_monte_carlo, run_monte_carlo_on, wilson_interval, BerCurve, BerPoint,
    RunMetadata, Z95,
};
pub use semianalytic::{run_semianalytic, run_semianalytic_on, SemiAnalyticCurve, SemiAnalyticPoint};
