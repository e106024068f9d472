//! Command-line driver: `scma-dl sweep ...` and `scma-dl trial ...`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scma_core::bigamp::{trace_csv, BigAmpOptions, ChannelInit, SymbolInit};
use scma_core::harness::{emit_csv, run_trial_on, sweep, Link, ReceiverOptions, SweepSpec};
use scma_core::model::{SupportMode, SystemConfig};
use scma_core::{Error, Result};

#[derive(Parser)]
#[command(name = "scma-dl", version, about = "Grant-free SCMA uplink with a BiG-AMP receiver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte-Carlo sweep over a (gamma, SNR) grid, written as CSV.
    Sweep(SweepArgs),
    /// One trial, printed as JSON.
    Trial(TrialArgs),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration; flags given explicitly override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    df: Option<usize>,
    #[arg(long)]
    dv: Option<usize>,
    /// Data codewords per frame (I).
    #[arg(long)]
    symbols: Option<usize>,
    /// Receive antennas; defaults to N.
    #[arg(long)]
    antennas: Option<usize>,
    #[arg(long)]
    support_mode: Option<SupportMode>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 200)]
    tmax: usize,
    #[arg(long, default_value_t = 1e-8)]
    tau_stop: f64,
    #[arg(long, default_value_t = 0.3)]
    damp: f64,
    /// Adaptive damping: halve on cost increase, grow on decrease.
    #[arg(long)]
    damp_adapt: bool,
    /// Extra BiG-AMP attempts after a divergence or a poor fit.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Restart when `‖Y - ĤX̂‖² > restart_fit · J L σ²`.
    #[arg(long, default_value_t = f64::INFINITY)]
    restart_fit: f64,
    /// `data` or `prior`.
    #[arg(long, default_value = "data")]
    channel_init: ChannelInit,
    /// `prior_draw` or `jitter`.
    #[arg(long, default_value = "prior_draw")]
    symbol_init: SymbolInit,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    strict_paper_variances: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Sparsity level; repeat for several.
    #[arg(long = "gamma", required_unless_present = "config")]
    gammas: Vec<f64>,
    /// SNR in dB; repeat, or give a range `start:stop:step`.
    #[arg(long = "snr-db", required = true)]
    snrs: Vec<String>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrialArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, required_unless_present = "config")]
    gamma: Option<f64>,
    #[arg(long = "snr-db", allow_negative_numbers = true)]
    snr_db: f64,
    /// Per-iteration BiG-AMP trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn parse_snrs(items: &[String]) -> Result<Vec<f64>> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad SNR `{s}`")))
    };
    let mut out = Vec::new();
    for item in items {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [one] => out.push(num(one)?),
            [a, b, step] => {
                let (a, b, step) = (num(a)?, num(b)?, num(step)?);
                if !(step > 0.0) || b < a {
                    return Err(Error::InvalidArgument(format!("bad SNR range `{item}`")));
                }
                let n = ((b - a) / step + 1e-9).floor() as usize;
                out.extend((0..=n).map(|i| a + i as f64 * step));
            }
            _ => return Err(Error::Parse(format!("bad SNR `{item}`"))),
        }
    }
    Ok(out)
}

impl Common {
    fn receiver(&self) -> ReceiverOptions {
        ReceiverOptions {
            bigamp: BigAmpOptions {
                t_max: self.tmax,
                tau_stop: self.tau_stop,
                damp: self.damp,
                damp_adapt: self.damp_adapt,
                max_restarts: self.restarts,
                restart_fit: self.restart_fit,
                channel_init: self.channel_init,
                symbol_init: self.symbol_init,
                strict_paper_variances: self.strict_paper_variances,
                ..Default::default()
            },
            tau: self.tau,
            ..Default::default()
        }
    }

    fn base(&self) -> Result<Option<SystemConfig>> {
        self.config.as_ref().map(SystemConfig::from_kv_file).transpose()
    }

    fn spec(&self, base: Option<&SystemConfig>) -> SweepSpec {
        let mut spec = SweepSpec::default();
        if let Some(cfg) = base {
            spec.d_f = cfg.d_f;
            spec.d_v = cfg.d_v;
            spec.symbols = cfg.symbols;
            spec.order = cfg.order;
            spec.power = cfg.power;
            spec.support_mode = cfg.support_mode;
            if cfg.antennas != cfg.users {
                spec.antennas = Some(cfg.antennas);
            }
        }
        spec.d_f = self.df.unwrap_or(spec.d_f);
        spec.d_v = self.dv.unwrap_or(spec.d_v);
        spec.symbols = self.symbols.unwrap_or(spec.symbols);
        spec.antennas = self.antennas.or(spec.antennas);
        spec.support_mode = self.support_mode.unwrap_or(spec.support_mode);
        spec
    }
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    let base = a.common.base()?;
    let spec = a.common.spec(base.as_ref());
    let gammas = match (&base, a.gammas.is_empty()) {
        (Some(cfg), true) => vec![cfg.gamma()],
        _ => a.gammas.clone(),
    };
    let snrs = parse_snrs(&a.snrs)?;
    let result = sweep(
        &spec,
        &gammas,
        &snrs,
        a.trials,
        a.parallelism,
        a.common.seed,
        &a.common.receiver(),
    )?;
    let meta = emit_csv(&result, &a.out)?;
    for p in &result.points {
        eprintln!(
            "gamma={} snr={} ber={:.3e} ±{:.1e} id_err={:.3} iters={:.1}",
            p.gamma, p.snr_db, p.ber, p.ci95, p.id_error_rate, p.mean_iters
        );
    }
    eprintln!("wrote {} and {}", a.out.display(), meta.display());
    Ok(())
}

fn run_single(a: &TrialArgs) -> Result<()> {
    let base = a.common.base()?;
    let cfg = match (base, a.gamma) {
        (Some(cfg), None) if a.common.df.is_none() && a.common.dv.is_none() => {
            let mut cfg = cfg;
            cfg.symbols = a.common.symbols.unwrap_or(cfg.symbols);
            cfg.antennas = a.common.antennas.unwrap_or(cfg.antennas);
            cfg.support_mode = a.common.support_mode.unwrap_or(cfg.support_mode);
            cfg.validate()?
        }
        (base, gamma) => {
            let gamma = gamma
                .or(base.as_ref().map(|c| c.gamma()))
                .ok_or_else(|| Error::InvalidArgument("--gamma is required".into()))?;
            a.common.spec(base.as_ref()).config(gamma)?
        }
    };
    let link = Link::new(&cfg)?;
    let opts = a.common.receiver();
    opts.bigamp.validate()?;
    opts.detector(&link.constellation).validate(&link.constellation)?;
    let mut rows = Vec::new();
    let trace = a.trace.as_ref().map(|_| &mut rows);
    let res = run_trial_on(&link, a.snr_db, a.common.seed, &opts, trace)?;
    if let Some(path) = &a.trace {
        std::fs::write(path, trace_csv(&rows))?;
    }
    println!("{}", serde_json::to_string_pretty(&res)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match &cli.cmd {
        Cmd::Sweep(a) => run_sweep(a),
        Cmd::Trial(a) => run_single(a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
