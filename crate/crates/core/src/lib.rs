//! Passband transmitted-reference pulse-cluster (TRPC) UWB link simulation
//! under free-running oscillator phase noise, with conventional TR and
//! selective-Rake comparison systems and a semi-analytic BER model.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod dsp;
pub mod error;
pub mod harness;
pub mod phasenoise;
pub mod seeds;
pub mod signals;
pub mod transceiver;

pub use analysis::{composite_bep, estimate_dv_stats, p_phi, q_function, DvStats, SemiAnalyticResult};
pub use channel::{
    apply_channel, discretize_channel, generate_sv_channel, Arrival, ChannelEnsemble, ChannelModel,
    ChannelRealization, Tap,
};
pub use error::{Error, Result};
pub use harness::{
    run_monte_carlo, run_semianalytic, BerCurve, BerPoint, RunConfig, SemiAnalyticCurve,
    SemiAnalyticPoint,
};
pub use phasenoise::{
    brownian_phase, carrier_psd, carrier_waves, psd_estimate, spectral_phase, PhaseNoiseMode,
    PhaseTrajectory, PsdCurve, PsdProfile, Role, VcoSpec,
};
pub use signals::{
    bpsk_baseband, rrc_pulse, tr_baseband, trpc_baseband, Signaling, SystemConfig, Waveform,
};
pub use transceiver::{
    acr_decide, add_awgn, downconvert_iq, select_window, srake_mrc_receive, tr_receive, upconvert,
    DecisionRecord, Downconversion, IntegrationWindow,
};

/// Crate version recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
