use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use trpc_core::channel::ChannelEnsemble;
use trpc_core::harness::{output_dir, run_monte_carlo_on, run_semianalytic_on, RunConfig};
use trpc_core::phasenoise::{brownian_phase, carrier_psd, spectral_phase, PsdProfile};

#[derive(Parser, Debug)]
#[command(name = "trpc", version, about = "Passband TRPC-UWB link simulator")]
struct Cli {
    /// Master seed (channel seed for gen-channels).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 0 or absent uses all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output file or directory. Defaults to $TRPC_OUT_DIR, else the working directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a channel ensemble file.
    GenChannels {
        #[command(flatten)]
        run: RunArgs,
        /// Number of realizations.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Monte Carlo BER sweep.
    Simulate(RunArgs),
    /// Semi-analytic BEP sweep (TRPC only).
    Semianalytic(RunArgs),
    /// Carrier spectrum of a simulated phase-noise process.
    PnPsd {
        /// 3-dB bandwidth in Hz.
        #[arg(long)]
        beta: f64,
        #[arg(long, value_enum, default_value_t = PnMode::Brownian)]
        mode: PnMode,
        /// PSD profile CSV for spectral mode; Lorentzian when absent.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Trajectory length in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Welch segment length.
        #[arg(long, default_value_t = 1 << 15)]
        nfft: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PnMode {
    Brownian,
    Spectral,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    downconv: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Phase-noise 3-dB bandwidth in Hz.
    #[arg(long)]
    beta: Option<f64>,
    /// Eb/N0 grid, `start:step:stop` or a list.
    #[arg(long)]
    ebn0: Option<String>,
    #[arg(long)]
    symbols: Option<String>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Channel ensemble file.
    #[arg(long)]
    channels: Option<PathBuf>,
    /// Any config key, `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output file stem; derived from the run when absent.
    #[arg(long)]
    name: Option<String>,
}

impl RunArgs {
    fn resolve(&self, cli: &Cli) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => RunConfig::default(),
        };
        let mut set = |k: &str, v: &str| cfg.set(k, v).with_context(|| format!("option for `{k}`"));
        for (key, val) in [
            ("system", self.system.clone()),
            ("mode", self.mode.clone()),
            ("downconv", self.downconv.clone()),
            ("model", self.model.clone()),
            ("beta_hz", self.beta.map(|b| b.to_string())),
            ("ebn0_db", self.ebn0.clone()),
            ("symbols_per_point", self.symbols.clone()),
            ("realizations", self.realizations.map(|r| r.to_string())),
            ("master_seed", cli.seed.map(|s| s.to_string())),
            ("threads", cli.threads.map(|t| t.to_string())),
        ] {
            if let Some(v) = val {
                set(key, &v)?;
            }
        }
        for kv in &self.sets {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            set(k, v)?;
        }
        if let Some(p) = &self.channels {
            cfg.channel_file = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_stem(cfg: &RunConfig, kind: &str) -> String {
    format!("{kind}_{}_{}_{}_beta{}", cfg.system, cfg.model, cfg.downconv, cfg.beta_hz)
        .to_lowercase()
}

/// `--out x.csv` names the file, any other `--out` is a directory.
fn split_out(out: Option<&Path>, name: Option<&str>, stem: String) -> (PathBuf, String) {
    match out {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => (
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
            p.file_stem().unwrap().to_string_lossy().into_owned(),
        ),
        _ => (output_dir(out), name.map_or(stem, str::to_string)),
    }
}

fn load_channels(cfg: &RunConfig) -> Result<ChannelEnsemble> {
    if let Some(p) = &cfg.channel_file {
        if !p.exists() {
            bail!("channel file not found: {}", p.display());
        }
    }
    Ok(cfg.channels()?)
}

fn gen_channels(cli: &Cli, run: &RunArgs, count: Option<usize>) -> Result<()> {
    let mut cfg = run.resolve(cli)?;
    if let Some(s) = cli.seed {
        cfg.channel_seed = s;
    }
    let count = count.unwrap_or(cfg.realizations);
    let ens = ChannelEnsemble::generate(cfg.model, count, cfg.channel_seed, &cfg.physical)?;
    let path = match &cli.out {
        Some(p) if p.extension().is_some_and(|e| e == "json") => p.clone(),
        out => output_dir(out.as_deref()).join(format!("{}_{}.json", cfg.model.label().to_lowercase(), count)),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    ens.save(&path)?;
    let mean = ens.realizations.iter().map(|h| h.rms_delay_spread()).sum::<f64>() / count.max(1) as f64;
    eprintln!(
        "{} realizations of {} (seed {}), mean rms delay spread {:.2} ns -> {}",
        count,
        cfg.model,
        cfg.channel_seed,
        mean * 1e9,
        path.display()
    );
    Ok(())
}

fn simulate(cli: &Cli, run: &RunArgs) -> Result<()> {
    let cfg = run.resolve(cli)?;
    let ens = load_channels(&cfg)?;
    let curve = run_monte_carlo_on(&cfg, &ens, |p| {
        let (lo, hi) = p.ci95();
        eprintln!(
            "Eb/N0 {:>5.1} dB  BER {:.3e}  [{:.2e}, {:.2e}]  {} errors / {} bits",
            p.ebn0_db, p.ber, lo, hi, p.errors, p.bits
        );
    })?;
    let (dir, stem) = split_out(cli.out.as_deref(), run.name.as_deref(), default_stem(&cfg, "ber"));
    let (csv, _) = curve.write(&dir, &stem)?;
    eprintln!("wrote {}", csv.display());
    Ok(())
}

fn semianalytic(cli: &Cli, run: &RunArgs) -> Result<()> {
    let cfg = run.resolve(cli)?;
    let ens = load_channels(&cfg)?;
    let curve = run_semianalytic_on(&cfg, &ens, |p| {
        eprintln!(
            "Eb/N0 {:>5.1} dB  Pe {:.3e}  (min {:.2e}, max {:.2e})",
            p.ebn0_db, p.pe_mean, p.pe_min, p.pe_max
        );
    })?;
    let (dir, stem) = split_out(cli.out.as_deref(), run.name.as_deref(), default_stem(&cfg, "semianalytic"));
    let (csv, _) = curve.write(&dir, &stem)?;
    eprintln!("wrote {}", csv.display());
    Ok(())
}

fn pn_psd(
    cli: &Cli,
    beta: f64,
    mode: PnMode,
    profile: Option<&Path>,
    duration: Option<f64>,
    nfft: usize,
) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        bail!("--beta must be a positive bandwidth in Hz, got {beta}");
    }
    let fs = 100.0 * beta;
    let duration = duration.unwrap_or(4e4 / beta);
    let seed = cli.seed.unwrap_or(1);
    let theta = match mode {
        PnMode::Brownian => brownian_phase(duration, fs, beta, seed)?,
        PnMode::Spectral => {
            let p = match profile {
                Some(path) => PsdProfile::load(path)?,
                None => PsdProfile::lorentzian(beta, 0.1 / duration, fs / 2.0, 20)?,
            };
            spectral_phase(&p, duration, fs, seed)?
        }
    };
    let psd = carrier_psd(&theta, Some(nfft))?;
    let path = match &cli.out {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => p.clone(),
        out => output_dir(out.as_deref()).join(format!("pn_psd_{:?}_beta{beta}.csv", mode).to_lowercase()),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, psd.to_csv())?;
    let f3 = psd.half_power_offset().map_or("n/a".into(), |f| format!("{:.3} kHz", 2.0 * f / 1e3));
    let slope = psd.slope_db_per_decade(3.0 * beta, 10.0 * beta);
    eprintln!(
        "{mode:?} beta {beta} Hz: measured 3-dB width {f3}, skirt {slope:.1} dB/decade -> {}",
        path.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Command::GenChannels { run, count } => gen_channels(cli, run, *count),
        Command::Simulate(run) => simulate(cli, run),
        Command::Semianalytic(run) => semianalytic(cli, run),
        Command::PnPsd {
            beta,
            mode,
            profile,
            duration,
            nfft,
        } => pn_psd(cli, *beta, *mode, profile.as_deref(), *duration, *nfft),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_path_splitting() {
        let (d, s) = split_out(Some(Path::new("res/a.csv")), None, "x".into());
        assert_eq!((d, s.as_str()), (PathBuf::from("res"), "a"));
        let (d, s) = split_out(Some(Path::new("res")), Some("run"), "x".into());
        assert_eq!((d, s.as_str()), (PathBuf::from("res"), "run"));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::parse_from(["trpc", "--seed", "9", "simulate", "--beta", "1e4", "--set", "fingers=4"]);
        let Command::Simulate(run) = &cli.cmd else { panic!() };
        let cfg = run.resolve(&cli).unwrap();
        assert_eq!(cfg.master_seed, 9);
        assert_eq!(cfg.beta_hz, 1e4);
        assert_eq!(cfg.fingers, 4);
    }
}
