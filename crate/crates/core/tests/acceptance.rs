//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits 0 either way.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use trpc_core::analysis::{composite_from_parts, p_phi, p_phi_omega};
use trpc_core::channel::{ChannelEnsemble, ChannelModel};
use trpc_core::dsp::sample_variance;
use trpc_core::harness::{run_monte_carlo_on, run_semianalytic_on, BerCurve, RunConfig, SemiAnalyticCurve};
use trpc_core::phasenoise::{brownian_phase, carrier_psd, spectral_phase, PhaseStream, PsdProfile};
use trpc_core::seeds::rng_from;
use trpc_core::transceiver::{
    decide, Downconversion, Link, LinkSpec, OffsetPolicy, SessionSeeds, SimMode, System,
};
use trpc_core::SystemConfig;

/// Desk-scale ensemble and budget.
const REALIZATIONS: usize = 20;
const SYMBOLS: u64 = 200_000;
const CHANNEL_SEED: u64 = 7;
const MASTER_SEED: u64 = 1;

struct Outcome {
    id: u32,
    pass: bool,
    summary: String,
}

fn report(id: u32, title: &str, pass: bool, detail: String, started: Instant) -> Outcome {
    let line = format!(
        "[{}] criterion {id:>2}: {title} | {detail} ({:.1} s)",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    println!("{line}");
    Outcome { id, pass, summary: line }
}

fn grid() -> Vec<f64> {
    (0..=10).map(|k| 2.0 * k as f64).collect()
}

fn base(model: ChannelModel) -> RunConfig {
    RunConfig {
        model,
        ebn0_db: grid(),
        symbols_per_point: SYMBOLS,
        realizations: REALIZATIONS,
        channel_seed: CHANNEL_SEED,
        master_seed: MASTER_SEED,
        fingers: if model == ChannelModel::Cm1 { 8 } else { 16 },
        ..RunConfig::default()
    }
}

fn fmt_db(x: Option<f64>) -> String {
    x.map_or("not reached".into(), |v| format!("{v:.2} dB"))
}

/// Horizontal gap between two curves at `target`.
fn penalty(reference: &BerCurve, other: &BerCurve, target: f64) -> Option<f64> {
    Some(other.ebn0_at(target)? - reference.ebn0_at(target)?)
}

fn top(c: &BerCurve) -> f64 {
    c.points.last().unwrap().ber
}

/// Monte Carlo curves shared by several criteria, computed once.
struct Curves {
    cm1: ChannelEnsemble,
    trpc_cm1: Vec<(f64, BerCurve)>,
    trpc_cm2: Vec<(f64, BerCurve)>,
    ionly_cm1: BerCurve,
    ionly_cm2: BerCurve,
    seconds_trpc_cm1_beta0: f64,
}

impl Curves {
    fn trpc(&self, model: ChannelModel, beta: f64) -> &BerCurve {
        let list = if model == ChannelModel::Cm1 { &self.trpc_cm1 } else { &self.trpc_cm2 };
        &list.iter().find(|(b, _)| *b == beta).unwrap().1
    }
}

fn mc(cfg: &RunConfig, ens: &ChannelEnsemble) -> BerCurve {
    run_monte_carlo_on(cfg, ens, |_| {}).expect("Monte Carlo sweep")
}

fn build_curves() -> Curves {
    let c1 = base(ChannelModel::Cm1);
    let c2 = base(ChannelModel::Cm2);
    let cm1 = c1.channels().unwrap();
    let cm2 = c2.channels().unwrap();
    // Fixed budgets and shared seeds across beta: curves differ only by phase noise.
    let fixed = |c: &RunConfig, beta: f64| RunConfig { beta_hz: beta, max_errors: 0, ..c.clone() };
    let t = Instant::now();
    let first = mc(&fixed(&c1, 0.0), &cm1);
    let seconds_trpc_cm1_beta0 = t.elapsed().as_secs_f64();
    let mut trpc_cm1 = vec![(0.0, first)];
    for beta in [1e4, 1e5] {
        trpc_cm1.push((beta, mc(&fixed(&c1, beta), &cm1)));
    }
    let trpc_cm2 = [0.0, 1e5].iter().map(|&b| (b, mc(&fixed(&c2, b), &cm2))).collect();
    let ionly = |c: &RunConfig, ens: &ChannelEnsemble| {
        mc(
            &RunConfig {
                downconv: Downconversion::IOnly,
                ..fixed(c, 1e5)
            },
            ens,
        )
    };
    Curves {
        ionly_cm1: ionly(&c1, &cm1),
        ionly_cm2: ionly(&c2, &cm2),
        cm1,
        trpc_cm1,
        trpc_cm2,
        seconds_trpc_cm1_beta0,
    }
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let trajectories = 10_000u64;
    let fs = 100e6;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (bi, beta) in [1e4, 1e5, 2e5].into_iter().enumerate() {
        let mut at = [Vec::new(), Vec::new()];
        for s in 0..trajectories {
            let th = brownian_phase(1.01e-6, fs, beta, 1_000 * bi as u64 + s).unwrap();
            at[0].push(th.theta[10]);
            at[1].push(th.theta[100]);
        }
        for (k, time) in [1e-7, 1e-6].into_iter().enumerate() {
            let want = TAU * beta * time;
            let rel = (sample_variance(&at[k]) - want).abs() / want;
            worst = worst.max(rel);
            parts.push(format!("{:.0}k/{:.1}us {:.1}%", beta / 1e3, time * 1e6, 100.0 * rel));
        }
    }
    report(
        1,
        "Var[theta(t)] = 2 pi beta t within 5%",
        worst < 0.05,
        format!("worst {:.2}% [{}]", 100.0 * worst, parts.join(", ")),
        t,
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let cfg = SystemConfig::default();
    let t_d = cfg.pair_delay;
    let t_m = 0.5e-6;
    let draws = 100_000u64;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for beta in [1e4, 1e5, 2e5] {
        let mut phi = Vec::with_capacity(draws as usize);
        let mut buf_tx = [0.0; 2];
        let mut buf_rx = [0.0; 2];
        for s in 0..draws {
            let mut tx = PhaseStream::brownian(beta, rng_from(2 * s));
            let mut rx = PhaseStream::brownian(beta, rng_from(2 * s + 1));
            tx.fill(t_m - t_d, t_d, &mut buf_tx);
            rx.fill(t_m - t_d, t_d, &mut buf_rx);
            phi.push((buf_tx[1] - buf_rx[1]) - (buf_tx[0] - buf_rx[0]));
        }
        let want = 4.0 * PI * beta * t_d;
        let got = sample_variance(&phi);
        let rel = (got - want).abs() / want;
        worst = worst.max(rel);
        parts.push(format!("{:.0}k: {got:.4e} vs {want:.4e}", beta / 1e3));
    }
    report(
        2,
        "Var[Phi(t_m)] = 4 pi beta T_d within 5%",
        worst < 0.05,
        format!("worst {:.2}% [{}]", 100.0 * worst, parts.join(", ")),
        t,
    )
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [1e4, 1e5] {
        let fs = 100.0 * beta;
        let duration = 4e4 / beta;
        let profile = PsdProfile::lorentzian(beta, 0.1 / duration, fs / 2.0, 20).unwrap();
        for (name, th) in [
            ("brownian", brownian_phase(duration, fs, beta, 31).unwrap()),
            ("spectral", spectral_phase(&profile, duration, fs, 32).unwrap()),
        ] {
            let psd = carrier_psd(&th, Some(1 << 15)).unwrap();
            let width = psd.three_db_bandwidth().unwrap_or(f64::NAN);
            let slope = psd.slope_db_per_decade(3.0 * beta, 10.0 * beta);
            let good = (width - beta).abs() <= 0.2 * beta && (slope + 20.0).abs() <= 3.0;
            ok &= good;
            parts.push(format!(
                "{name} {:.0}k: width {:.1} kHz, skirt {slope:.1} dB/dec",
                beta / 1e3,
                width / 1e3
            ));
        }
    }
    report(
        3,
        "Lorentzian 3-dB width beta +-20%, -20 dB/decade skirt",
        ok,
        parts.join("; "),
        t,
    )
}

fn criterion_4(ens: &ChannelEnsemble) -> Outcome {
    let t = Instant::now();
    let cfg = SystemConfig::default();
    let h = &ens.realizations[0];
    let dv = |downconv: Downconversion, df: f64, phi: f64, bit: i8, symbol: usize| -> f64 {
        let spec = LinkSpec {
            system: System::Trpc,
            mode: SimMode::Passband,
            downconv,
            beta: 0.0,
            delta_f: OffsetPolicy::Fixed(df),
            phi: OffsetPolicy::Fixed(phi),
            ..LinkSpec::default()
        };
        let link = Link::new(&cfg, spec, h).unwrap();
        let mut s = link.session(0.0, SessionSeeds::derive(4, &[])).unwrap();
        let mut d = 0.0;
        for _ in 0..=symbol {
            d = s.decision(bit).unwrap();
        }
        d
    };
    let mut phi_only: f64 = 0.0;
    let mut full: f64 = 0.0;
    let mut residual_model: f64 = 0.0;
    for bit in [1i8, -1] {
        for symbol in [0usize, 3] {
            let d0 = dv(Downconversion::Iq, 0.0, 0.0, bit, symbol);
            for k in 0..8 {
                let phi = TAU * k as f64 / 8.0;
                for df in [-5e6, -2.5e6, 0.0, 2.5e6, 5e6] {
                    let rel = (dv(Downconversion::Iq, df, phi, bit, symbol) - d0).abs() / d0.abs();
                    full = full.max(rel);
                    if df == 0.0 {
                        phi_only = phi_only.max(rel);
                    }
                    residual_model = residual_model.max(1.0 - (TAU * df * cfg.pair_delay).cos());
                }
            }
        }
    }
    let iq_ok = full <= 1e-6;
    // I-only, df = 0: 32 phases, look for variation and a sign flip.
    let d_i: Vec<f64> = (0..32)
        .map(|k| dv(Downconversion::IOnly, 0.0, TAU * k as f64 / 32.0, 1, 0))
        .collect();
    let spread = d_i.iter().cloned().fold(f64::MIN, f64::max) - d_i.iter().cloned().fold(f64::MAX, f64::min);
    let flips = d_i.iter().any(|&d| decide(d) != 1);
    let ionly_ok = spread > 1e-3 * d_i.iter().map(|d| d.abs()).fold(0.0, f64::max);
    report(
        4,
        "IQ DV invariant to (df, phi) to 1e-6; I-only phi-dependent",
        iq_ok && ionly_ok,
        format!(
            "IQ max rel dev {full:.2e} over df in +-5 MHz (phi-only {phi_only:.2e}; \
             1-cos(2 pi df T_d) predicts {residual_model:.2e}); I-only spread {spread:.2e} over 32 phases (sign flip seen: {flips})"
        ),
        t,
    )
}

fn criterion_5(ens: &ChannelEnsemble) -> Outcome {
    let t = Instant::now();
    let cfg = SystemConfig::default();
    let n0 = cfg.energy_per_bit / 10f64.powf(1.4);
    let per_realization = 10_000usize.div_ceil(ens.len());
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [0.0, 1e5] {
        let (mut agree, mut total) = (0usize, 0usize);
        for (r, h) in ens.realizations.iter().enumerate() {
            let spec = LinkSpec {
                system: System::Trpc,
                mode: SimMode::Passband,
                beta,
                ..LinkSpec::default()
            };
            let link = Link::new(&cfg, spec, h).unwrap();
            let mut s = link.session(n0, SessionSeeds::derive(5, &[r as u64])).unwrap();
            let mut bits = rng_from(500 + r as u64);
            for _ in 0..per_realization {
                let bit = if rand::Rng::random::<bool>(&mut bits) { 1 } else { -1 };
                let m = s.compare(bit).unwrap();
                agree += usize::from(decide(m.passband) == decide(m.lti));
                total += 1;
            }
        }
        let frac = agree as f64 / total as f64;
        ok &= frac >= 0.999;
        parts.push(format!("beta {:.0}k: {agree}/{total} = {:.3}%", beta / 1e3, 100.0 * frac));
    }
    report(
        5,
        "passband vs LTI decision agreement >= 99.9% (CM1, 14 dB)",
        ok,
        parts.join(", "),
        t,
    )
}

fn criterion_6(ens: &ChannelEnsemble) -> Outcome {
    let t = Instant::now();
    let c = base(ChannelModel::Cm1);
    let pass = mc(
        &RunConfig {
            mode: SimMode::Passband,
            ..c.clone()
        },
        ens,
    );
    let bb = mc(
        &RunConfig {
            system: System::BasebandTrpc,
            master_seed: MASTER_SEED + 100,
            ..c
        },
        ens,
    );
    let mut bad = Vec::new();
    let mut compared = 0;
    for (a, b) in pass.points.iter().zip(&bb.points) {
        if a.ber < 1e-4 && b.ber < 1e-4 {
            continue;
        }
        compared += 1;
        let (la, ha) = a.ci95();
        let (lb, hb) = b.ci95();
        if !(la <= hb && lb <= ha) {
            bad.push(format!("{} dB ({:.3e} vs {:.3e})", a.ebn0_db, a.ber, b.ber));
        }
    }
    report(
        6,
        "beta=0 passband TRPC overlaps baseband TRPC within 95% CIs (CM1)",
        bad.is_empty(),
        format!(
            "{compared} points compared, BER at 20 dB {:.3e} vs {:.3e}; non-overlapping: {}",
            top(&pass),
            top(&bb),
            if bad.is_empty() { "none".into() } else { bad.join(", ") }
        ),
        t,
    )
}

fn criterion_7(curves: &Curves) -> Outcome {
    let t = Instant::now();
    let p1 = penalty(curves.trpc(ChannelModel::Cm1, 0.0), curves.trpc(ChannelModel::Cm1, 1e5), 1e-4);
    let p2 = penalty(curves.trpc(ChannelModel::Cm2, 0.0), curves.trpc(ChannelModel::Cm2, 1e5), 1e-3);
    let ok = p1.is_some_and(|p| (p - 1.8).abs() <= 0.5) && p2.is_some_and(|p| (p - 1.0).abs() <= 0.5);
    let info1 = penalty(curves.trpc(ChannelModel::Cm1, 0.0), curves.trpc(ChannelModel::Cm1, 1e5), 3e-2);
    let info2 = penalty(curves.trpc(ChannelModel::Cm2, 0.0), curves.trpc(ChannelModel::Cm2, 1e5), 3e-2);
    report(
        7,
        "beta=100 kHz penalty 1.8+-0.5 dB at 1e-4 (CM1), ~1 dB at 1e-3 (CM2)",
        ok,
        format!(
            "CM1 penalty {} (lowest BER {:.2e}), CM2 penalty {} (lowest BER {:.2e}); at BER 3e-2: CM1 {}, CM2 {}",
            fmt_db(p1),
            top(curves.trpc(ChannelModel::Cm1, 0.0)),
            fmt_db(p2),
            top(curves.trpc(ChannelModel::Cm2, 0.0)),
            fmt_db(info1),
            fmt_db(info2)
        ),
        t,
    )
}

fn criterion_8(curves: &Curves) -> Outcome {
    let t = Instant::now();
    let r1 = top(&curves.ionly_cm1) / top(curves.trpc(ChannelModel::Cm1, 1e5));
    let r2 = top(&curves.ionly_cm2) / top(curves.trpc(ChannelModel::Cm2, 1e5));
    report(
        8,
        "beta=100 kHz I-only floor >= 10x IQ floor (CM1, CM2)",
        r1 >= 10.0 && r2 >= 10.0,
        format!(
            "at 20 dB: CM1 I-only {:.3e} / IQ {:.3e} = {r1:.2}x; CM2 I-only {:.3e} / IQ {:.3e} = {r2:.2}x",
            top(&curves.ionly_cm1),
            top(curves.trpc(ChannelModel::Cm1, 1e5)),
            top(&curves.ionly_cm2),
            top(curves.trpc(ChannelModel::Cm2, 1e5)),
        ),
        t,
    )
}

fn criterion_9(curves: &Curves) -> Outcome {
    let t = Instant::now();
    let c = base(ChannelModel::Cm1);
    let ens = &curves.cm1;
    let run = |system: System, beta: f64| {
        mc(
            &RunConfig {
                system,
                beta_hz: beta,
                max_errors: 0,
                ..c.clone()
            },
            ens,
        )
    };
    // TR: floor means the beta=10 kHz curve flattens well above the beta=100 Hz one.
    let tr_ref = run(System::Tr, 100.0);
    let tr = run(System::Tr, 1e4);
    let n = tr.points.len();
    let flattening = tr.points[n - 1].ber / tr.points[n - 3].ber.max(f64::MIN_POSITIVE);
    let tr_excess = top(&tr) / top(&tr_ref).max(0.5 / tr_ref.points[n - 1].bits as f64);
    let tr_floor = tr_excess >= 10.0 && flattening >= 0.5;

    let rake_ref = run(System::Srake, 100.0);
    let rake = run(System::Srake, 1e4);
    let rake_at = (rake_ref.ebn0_at(1e-4), rake.ebn0_at(1e-4));
    let (rake_ok, rake_txt) = match rake_at {
        (Some(a), Some(b)) => (b - a >= 3.0, format!("{:.2} dB", b - a)),
        (Some(a), None) => (
            true,
            format!("> {:.2} dB (beta=10 kHz BER {:.2e} at 20 dB)", grid().last().unwrap() - a, top(&rake)),
        ),
        _ => (false, "reference curve never reaches 1e-4".into()),
    };

    let r0 = curves.trpc(ChannelModel::Cm1, 0.0);
    let r1 = curves.trpc(ChannelModel::Cm1, 1e4);
    let trpc_pen: Vec<Option<f64>> = [1e-1, 3e-2].iter().map(|&b| penalty(r0, r1, b)).collect();
    let trpc_ok = trpc_pen.iter().all(|p| p.is_some_and(|v| v.abs() < 0.3));
    report(
        9,
        "beta=10 kHz: TR floor, SRake >= 3 dB at 1e-4, TRPC < 0.3 dB",
        tr_floor && rake_ok && trpc_ok,
        format!(
            "TR at 20 dB {:.3e} vs {:.3e} at 100 Hz ({tr_excess:.2}x, last-4-dB ratio {flattening:.2}) floor {tr_floor}; \
             SRake penalty {rake_txt}; TRPC penalty at 1e-1/3e-2: {}/{}",
            top(&tr),
            top(&tr_ref),
            fmt_db(trpc_pen[0]),
            fmt_db(trpc_pen[1])
        ),
        t,
    )
}

fn criterion_10() -> Outcome {
    let t = Instant::now();
    let chi = ChiSquared::new(1.0).unwrap();
    let mut worst: f64 = 0.0;
    let n = 2000;
    for k in 0..=n {
        let omega = 10f64.powf(-3.0 + 7.0 * k as f64 / n as f64);
        worst = worst.max((p_phi_omega(omega) - chi.cdf(omega)).abs());
    }
    let t_d = SystemConfig::default().pair_delay;
    let limit_beta = (p_phi(0.0, t_d) - 1.0).abs();
    let mut limit_pe: f64 = 0.0;
    for k in 1..=100 {
        let p = k as f64 / 100.0;
        limit_pe = limit_pe.max((composite_from_parts(0.0, 0.0, p) - (1.0 - p)).abs());
    }
    let exact = limit_beta == 0.0 && limit_pe <= f64::EPSILON;
    report(
        10,
        "P_phi = chi-square(1) CDF to 1e-9; limits P_phi->1, Pe->1-P_phi",
        worst <= 1e-9 && exact,
        format!("max |diff| {worst:.2e} over [1e-3, 1e4]; |P_phi(0)-1| = {limit_beta:e}; max |Pe-(1-P_phi)| = {limit_pe:e}"),
        t,
    )
}

fn criterion_11(curves: &Curves) -> Outcome {
    let t = Instant::now();
    let c = base(ChannelModel::Cm1);
    let mut ok = true;
    let mut parts = Vec::new();
    let mut sa_seconds = 0.0;
    for beta in [0.0, 1e4, 1e5] {
        // Spread over independent training draws gives the semi-analytic interval.
        let runs: Vec<SemiAnalyticCurve> = (0..5)
            .map(|k| {
                let s = Instant::now();
                let out = run_semianalytic_on(
                    &RunConfig {
                        beta_hz: beta,
                        master_seed: 1000 + k,
                        ..c.clone()
                    },
                    &curves.cm1,
                    |_| {},
                )
                .unwrap();
                if beta == 0.0 && k == 0 {
                    sa_seconds = s.elapsed().as_secs_f64();
                }
                out
            })
            .collect();
        let sim = curves.trpc(ChannelModel::Cm1, beta);
        let mut agree = 0;
        let mut total = 0;
        let mut worst = (0.0, 0.0, 0.0);
        for (i, p) in sim.points.iter().enumerate() {
            if p.ber < 1e-5 {
                continue;
            }
            let v: Vec<f64> = runs.iter().map(|r| r.points[i].pe_mean).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let half = 1.96 * (sample_variance(&v) / v.len() as f64).sqrt();
            let (lo, hi) = p.ci95();
            total += 1;
            if m - half <= hi && lo <= m + half {
                agree += 1;
            } else {
                let gap = (m / p.ber).log10().abs();
                if gap > worst.0 {
                    worst = (gap, p.ebn0_db, m / p.ber);
                }
            }
        }
        let text = format!(
            "{:.0}k: {agree}/{total} points overlap{}",
            beta / 1e3,
            if agree < total { format!(" (worst {:.0} dB, ratio {:.3})", worst.1, worst.2) } else { String::new() }
        );
        if beta <= 1e4 {
            ok &= agree == total;
        } else {
            parts.push(format!("reported only: {text}"));
            continue;
        }
        parts.push(text);
    }
    let speed = curves.seconds_trpc_cm1_beta0 / sa_seconds.max(1e-9);
    report(
        11,
        "semi-analytic vs simulation within overlapping CIs for beta <= 10 kHz",
        ok,
        format!("{}; semi-analytic {speed:.0}x faster than Monte Carlo", parts.join("; ")),
        t,
    )
}

fn main() {
    // `cargo test` passes harness flags; a name filter that excludes us means skip.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return;
    }
    let started = Instant::now();
    println!("acceptance: {REALIZATIONS} realizations, {SYMBOLS} symbols per point, Eb/N0 0:2:20 dB");
    let mut out = vec![criterion_1(), criterion_2(), criterion_3(), criterion_10()];
    let shared = Instant::now();
    let curves = build_curves();
    println!("shared curves ready ({:.1} s)", shared.elapsed().as_secs_f64());
    for (label, list) in [("CM1", &curves.trpc_cm1), ("CM2", &curves.trpc_cm2)] {
        for (beta, c) in list {
            let b: Vec<String> = c.points.iter().map(|p| format!("{:.2e}", p.ber)).collect();
            println!("  TRPC {label} beta {beta:>6}: {}", b.join(" "));
        }
    }
    out.push(criterion_4(&curves.cm1));
    out.push(criterion_5(&curves.cm1));
    out.push(criterion_6(&curves.cm1));
    out.push(criterion_7(&curves));
    out.push(criterion_8(&curves));
    out.push(criterion_9(&curves));
    out.push(criterion_11(&curves));
    out.sort_by_key(|o| o.id);
    let passed = out.iter().filter(|o| o.pass).count();
    println!();
    println!("summary: {passed}/{} criteria pass ({:.0} s)", out.len(), started.elapsed().as_secs_f64());
    for o in &out {
        println!("{}", o.summary);
    }
}
