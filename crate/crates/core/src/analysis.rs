//! Semi-analytic BER of the passband TRPC link: decision-variable statistics
//! from a carrier-free training run, Gaussian baseband error probabilities,
//! and the chi-square phase-noise correction `P_phi`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::seeds::{derive_seed, Stream};
use crate::signals::SystemConfig;
use crate::transceiver::{EnvelopeNoise, Link, LinkSpec, SessionSeeds, System};

/// Default training length, symbols.
pub const TRAINING_SYMBOLS: usize = 1024;

/// Variances below this are treated as zero.
pub const MIN_VARIANCE: f64 = 1e-30;

/// Gaussian tail probability `Q(x) = erfc(x / sqrt 2) / 2`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// `Omega = 1 / (2 pi beta T_d)`; infinite for `beta = 0`.
pub fn phase_threshold(beta: f64, t_d: f64) -> f64 {
    if beta == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (2.0 * PI * beta * t_d)
    }
}

/// `P_phi = P(Y < Omega)` for `Y ~ chi-square(1)`, i.e. `1 - 2 Q(sqrt Omega)`.
pub fn p_phi(beta: f64, t_d: f64) -> f64 {
    p_phi_omega(phase_threshold(beta, t_d))
}

pub fn p_phi_omega(omega: f64) -> f64 {
    if omega.is_infinite() {
        return 1.0;
    }
    // erf(sqrt(omega/2)) == 1 - 2 Q(sqrt(omega)) without the cancellation.
    libm::erf((0.5 * omega).sqrt())
}

/// Conditional decision-variable statistics of one channel realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DvStats {
    pub m_plus: f64,
    pub m_minus: f64,
    pub var_plus: f64,
    pub var_minus: f64,
    pub n_t: usize,
}

impl DvStats {
    /// Sample means and unbiased variances of the two populations.
    pub fn from_samples(plus: &[f64], minus: &[f64]) -> Result<Self> {
        if plus.len() < 2 || minus.len() < 2 {
            return Err(Error::param("n_t", "need at least two samples per polarity"));
        }
        let stats = Self {
            m_plus: crate::dsp::mean(plus),
            m_minus: crate::dsp::mean(minus),
            var_plus: crate::dsp::sample_variance(plus),
            var_minus: crate::dsp::sample_variance(minus),
            n_t: plus.len() + minus.len(),
        };
        stats.check()?;
        Ok(stats)
    }

    pub fn check(&self) -> Result<()> {
        let v = self.var_plus.min(self.var_minus);
        if !(v >= MIN_VARIANCE) {
            return Err(Error::DegenerateVariance { variance: v });
        }
        Ok(())
    }

    /// `(P_B^+, P_B^-)` under the Gaussian approximation.
    pub fn baseband_errors(&self) -> (f64, f64) {
        (
            q_function(self.m_plus / self.var_plus.sqrt()),
            q_function(-self.m_minus / self.var_minus.sqrt()),
        )
    }
}

/// Trains on the carrier-free TRPC pipeline with complex envelope noise.
pub fn estimate_dv_stats(h: &ChannelRealization, cfg: &SystemConfig, n0: f64, rng_seed: u64) -> Result<DvStats> {
    estimate_dv_stats_with(h, cfg, n0, rng_seed, TRAINING_SYMBOLS, EnvelopeNoise::Complex)
}

/// `n_t / 2` symbols `+1` followed by `n_t / 2` symbols `-1`, detected with
/// the same integration window as the passband receiver.
pub fn estimate_dv_stats_with(
    h: &ChannelRealization,
    cfg: &SystemConfig,
    n0: f64,
    rng_seed: u64,
    n_t: usize,
    noise: EnvelopeNoise,
) -> Result<DvStats> {
    if n_t < 4 || !n_t.is_multiple_of(2) {
        return Err(Error::param("n_t", format!("must be even and at least 4, got {n_t}")));
    }
    let spec = LinkSpec {
        system: System::BasebandTrpc,
        envelope_noise: noise,
        ..LinkSpec::default()
    };
    let link = Link::new(cfg, spec, h)?;
    let mut session = link.session(n0, SessionSeeds::derive(rng_seed, &[Stream::Training as u64]))?;
    let half = n_t / 2;
    let plus = (0..half).map(|_| session.decision(1)).collect::<Result<Vec<_>>>()?;
    let minus = (0..half).map(|_| session.decision(-1)).collect::<Result<Vec<_>>>()?;
    DvStats::from_samples(&plus, &minus)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiAnalyticResult {
    pub p_b_plus: f64,
    pub p_b_minus: f64,
    pub omega: f64,
    pub p_phi: f64,
    pub pe: f64,
}

/// `Pe = [(1 - P+) - (1 - 2P+) P_phi] / 2 + [(1 - P-) - (1 - 2P-) P_phi] / 2`.
pub fn composite_from_parts(p_b_plus: f64, p_b_minus: f64, p_phi: f64) -> f64 {
    let half = |p: f64| 0.5 * ((1.0 - p) - (1.0 - 2.0 * p) * p_phi);
    (half(p_b_plus) + half(p_b_minus)).clamp(0.0, 1.0)
}

pub fn composite_bep(stats: &DvStats, beta: f64, t_d: f64) -> Result<SemiAnalyticResult> {
    stats.check()?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::param("beta", format!("must be >= 0, got {beta}")));
    }
    let (p_b_plus, p_b_minus) = stats.baseband_errors();
    let omega = phase_threshold(beta, t_d);
    let p_phi = p_phi_omega(omega);
    Ok(SemiAnalyticResult {
        p_b_plus,
        p_b_minus,
        omega,
        p_phi,
        pe: composite_from_parts(p_b_plus, p_b_minus, p_phi),
    })
}

/// Training seed of realization `r` at sweep point `k`.
pub fn training_seed(master: u64, point: usize, realization: usize) -> u64 {
    derive_seed(master, &[point as u64, realization as u64])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_sv_channel_for, ChannelModel};
    use crate::phasenoise::PhaseStream;
    use crate::seeds::rng_from;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    /// Composite Simpson integral of the normal density over [x, 40].
    fn q_numeric(x: f64) -> f64 {
        let n = 200_000;
        let b = 40.0;
        let h = (b - x) / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
        let mut s = f(x) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(x + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn q_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert!((q_function(1.2816) - 0.1).abs() < 1e-4);
        for x in [0.3, 1.2816, 2.5, 4.0] {
            assert!((q_function(x) - q_numeric(x)).abs() < 1e-12, "{x}");
        }
        for x in [0.5, 1.0, 3.0] {
            assert!((q_function(-x) - (1.0 - q_function(x))).abs() < 1e-15);
        }
    }

    #[test]
    fn p_phi_against_chi_square() {
        let chi = ChiSquared::new(1.0).unwrap();
        let mut omega: f64 = 1e-3;
        while omega <= 1e4 {
            let diff = (p_phi_omega(omega) - chi.cdf(omega)).abs();
            assert!(diff < 1e-9, "omega {omega}: {diff}");
            omega *= 1.17;
        }
    }

    #[test]
    fn p_phi_examples() {
        let t_d = 2.02e-9;
        assert_eq!(p_phi(0.0, t_d), 1.0);
        assert!(p_phi(1e-3, t_d) > 1.0 - 1e-15);
        let omega = phase_threshold(1e5, t_d);
        assert!((omega - 787.9).abs() < 0.1, "{omega}");
        let expected = 1.0 - 2.0 * q_function(omega.sqrt());
        assert!((p_phi(1e5, t_d) - expected).abs() < 1e-15);
        assert!((phase_threshold(2e5, t_d) - 393.9).abs() < 0.1);
        assert!(p_phi(2e5, t_d) <= p_phi(1e5, t_d));
        assert!(p_phi(1e9, t_d) < p_phi(1e8, t_d));
    }

    #[test]
    fn remark_limits() {
        let (pp, pm) = (0.013, 0.021);
        assert!((composite_from_parts(pp, pm, 1.0) - 0.5 * (pp + pm)).abs() < 1e-15);
        assert!((composite_from_parts(pp, pm, 0.0) - (1.0 - 0.5 * (pp + pm))).abs() < 1e-15);
        for p_phi in [0.2, 0.9, 0.999] {
            assert!((composite_from_parts(0.0, 0.0, p_phi) - (1.0 - p_phi)).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn pe_bounded_and_monotone(pp in 0.0..1.0f64, pm in 0.0..1.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let pe_a = composite_from_parts(pp, pm, a);
            prop_assert!((0.0..=1.0).contains(&pe_a));
            if pp + pm < 1.0 {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                prop_assert!(composite_from_parts(pp, pm, hi) <= composite_from_parts(pp, pm, lo) + 1e-15);
            }
        }
    }

    #[test]
    fn x_law_from_phase_streams() {
        // X = Phi(t_m) / (2 sqrt(pi beta T_d)) has unit variance.
        let beta = 1e5;
        let t_d = SystemConfig::default().pair_delay;
        let t_m = 20e-9;
        let draws = 100_000;
        let mut tx = PhaseStream::brownian(beta, rng_from(1));
        let mut rx = PhaseStream::brownian(beta, rng_from(2));
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        let xs: Vec<f64> = (0..draws)
            .map(|_| {
                tx.reset();
                rx.reset();
                tx.fill(t_m - t_d, t_d, &mut a);
                rx.fill(t_m - t_d, t_d, &mut b);
                let phi = (a[1] - b[1]) - (a[0] - b[0]);
                phi / (2.0 * (PI * beta * t_d).sqrt())
            })
            .collect();
        let v = crate::dsp::sample_variance(&xs);
        assert!((v - 1.0).abs() < 0.03, "{v}");
    }

    #[test]
    fn noiseless_training_is_degenerate() {
        let cfg = SystemConfig::default();
        let h = generate_sv_channel_for(ChannelModel::Cm1, 1, &cfg).unwrap();
        assert!(matches!(
            estimate_dv_stats(&h, &cfg, 0.0, 1),
            Err(Error::DegenerateVariance { .. })
        ));
        assert!(estimate_dv_stats_with(&h, &cfg, 0.1, 1, 7, EnvelopeNoise::Complex).is_err());
    }

    #[test]
    fn training_means_are_ordered() {
        // With pairs spaced by one pulse width, m_plus follows the channel
        // gain near DC and can sit close to zero in a deep fade.
        let cfg = SystemConfig::default();
        let n0 = 10f64.powf(-0.8);
        let mut positive = 0;
        for seed in 0..10 {
            let h = generate_sv_channel_for(ChannelModel::Cm1, seed, &cfg).unwrap();
            let s = estimate_dv_stats(&h, &cfg, n0, seed).unwrap();
            assert!(s.m_minus < 0.0 && s.m_plus > s.m_minus, "{seed}: {s:?}");
            assert_eq!(s.n_t, TRAINING_SYMBOLS);
            positive += usize::from(s.m_plus > 0.0);
        }
        assert!(positive >= 7, "{positive}");
        let id = crate::channel::ChannelRealization::identity(cfg.tap_spacing());
        let s = estimate_dv_stats(&id, &cfg, n0, 1).unwrap();
        assert!(s.m_plus > 0.0 && s.m_minus < 0.0);
    }

    #[test]
    fn mean_scales_with_energy() {
        let cfg = SystemConfig::default();
        let h = generate_sv_channel_for(ChannelModel::Cm1, 3, &cfg).unwrap();
        let n0 = 0.05;
        let a = estimate_dv_stats_with(&h, &cfg, n0, 4, 4096, EnvelopeNoise::Complex).unwrap();
        let double = SystemConfig {
            energy_per_bit: 2.0,
            ..cfg.clone()
        };
        let b = estimate_dv_stats_with(&h, &double, n0, 4, 4096, EnvelopeNoise::Complex).unwrap();
        let ratio = b.m_plus / a.m_plus;
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn composite_examples() {
        let stats = DvStats {
            m_plus: 1.0,
            m_minus: -1.2,
            var_plus: 0.25,
            var_minus: 0.36,
            n_t: 1024,
        };
        let r = composite_bep(&stats, 0.0, 2.02e-9).unwrap();
        assert_eq!(r.p_phi, 1.0);
        assert!((r.p_b_plus - q_function(2.0)).abs() < 1e-15);
        assert!((r.p_b_minus - q_function(2.0)).abs() < 1e-15);
        assert!((r.pe - q_function(2.0)).abs() < 1e-15);
        let bad = DvStats { var_plus: 0.0, ..stats };
        assert!(composite_bep(&bad, 0.0, 2.02e-9).is_err());
    }
}
