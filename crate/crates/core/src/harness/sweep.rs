use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::{mix, run_trial_on, timed, Link, ReceiverOptions, TrialResult};
use crate::model::{SupportMode, SystemConfig};
use crate::{Error, Result};

/// Exact CSV header of [`emit_csv`].
pub const CSV_HEADER: &str =
    "gamma,K,N,J,I,snr_db,trials,ber,ci95,id_error_rate,mean_iters,runtime_s";

/// Everything except `gamma` and the SNR needed to build a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub d_f: usize,
    pub d_v: usize,
    pub symbols: usize,
    pub order: usize,
    pub power: f64,
    /// `None` means `J = N`.
    pub antennas: Option<usize>,
    pub support_mode: SupportMode,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            d_f: 2,
            d_v: 3,
            symbols: 1000,
            order: 4,
            power: 1.0,
            antennas: None,
            support_mode: SupportMode::PerSymbol,
        }
    }
}

impl SweepSpec {
    pub fn config(&self, gamma: f64) -> Result<SystemConfig> {
        let mut cfg = SystemConfig::from_sparsity(self.d_f, self.d_v, gamma, self.symbols)?;
        cfg.order = self.order;
        cfg.power = self.power;
        cfg.support_mode = self.support_mode;
        if let Some(j) = self.antennas {
            cfg.antennas = j;
        }
        cfg.validate()
    }
}

/// Aggregates of one `(gamma, snr)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub gamma: f64,
    pub subcarriers: usize,
    pub users: usize,
    pub antennas: usize,
    pub symbols: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub ber: f64,
    /// Normal-approximation 95% half-width of the mean BER.
    pub ci95: f64,
    pub id_error_rate: f64,
    pub mean_iters: f64,
    pub converged_fraction: f64,
    /// Summed wall time of this point's trials.
    pub runtime_s: f64,
    pub results: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstellationDump {
    pub gamma: f64,
    /// `(re, im, gray label)` in point order.
    pub points: Vec<(f64, f64, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMetadata {
    pub software: String,
    pub version: String,
    pub master_seed: u64,
    pub seed_rule: String,
    pub spec: SweepSpec,
    pub gammas: Vec<f64>,
    pub snrs_db: Vec<f64>,
    pub trials: usize,
    pub receiver: ReceiverOptions,
    pub snr_definition: String,
    pub path_loss: String,
    pub frame_power_slack: f64,
    pub tau_rule: String,
    pub scoring: String,
    pub damping_scheme: String,
    pub constellations: Vec<ConstellationDump>,
    pub signature_seeds: Vec<(f64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub points: Vec<PointResult>,
    pub metadata: SweepMetadata,
}

/// Seed of trial `trial` at sparsity index `g`. Independent of the SNR, so
/// every SNR point of a curve sees the same payloads, channels and
/// normalized noise.
fn trial_seed(master_seed: u64, g: usize, trial: usize) -> u64 {
    mix(mix(master_seed, g as u64), trial as u64)
}

/// Runs `trials` frames at every `(gamma, snr)` grid point.
///
/// Trials run on a pool of `parallelism` threads; results are reduced in
/// trial order, so aggregates do not depend on the thread count.
pub fn sweep(
    spec: &SweepSpec,
    gammas: &[f64],
    snrs_db: &[f64],
    trials: usize,
    parallelism: usize,
    master_seed: u64,
    opts: &ReceiverOptions,
) -> Result<SweepResult> {
    if gammas.is_empty() || snrs_db.is_empty() {
        return Err(Error::InvalidArgument("empty sweep grid".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    opts.bigamp.validate()?;
    let links = gammas
        .iter()
        .map(|&g| Link::new(&spec.config(g)?))
        .collect::<Result<Vec<_>>>()?;
    for link in &links {
        opts.detector(&link.constellation).validate(&link.constellation)?;
    }

    let mut tasks = Vec::new();
    for g in 0..gammas.len() {
        for s in 0..snrs_db.len() {
            for t in 0..trials {
                tasks.push((g, s, t));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let outcomes: Vec<Result<(TrialResult, f64)>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(g, s, t)| {
                let seed = trial_seed(master_seed, g, t);
                let (res, secs) = timed(|| run_trial_on(&links[g], snrs_db[s], seed, opts, None));
                res.map(|r| (r, secs))
            })
            .collect()
    });

    let mut outcomes = outcomes.into_iter();
    let mut points = Vec::new();
    for (g, link) in links.iter().enumerate() {
        for &snr in snrs_db {
            let mut results = Vec::with_capacity(trials);
            let mut runtime = 0.0;
            for _ in 0..trials {
                let (r, secs) = outcomes.next().expect("one outcome per task")?;
                runtime += secs;
                results.push(r);
            }
            points.push(aggregate(gammas[g], link, snr, results, runtime));
        }
    }

    let metadata = SweepMetadata {
        software: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed,
        seed_rule: "trial seed = mix(mix(master_seed, gamma_index), trial_index); \
                    streams payload/frame/channel/noise/receiver = mix(trial_seed, 1..=5); \
                    shared across SNR points"
            .into(),
        spec: spec.clone(),
        gammas: gammas.to_vec(),
        snrs_db: snrs_db.to_vec(),
        trials,
        receiver: opts.clone(),
        snr_definition: "SNR_dB = 10 log10(P / sigma2), P = per-slot average transmit power"
            .into(),
        path_loss: "beta_n = 1 for all users, beta_bar = 1".into(),
        frame_power_slack: 0.25,
        tau_rule: match opts.tau {
            Some(t) => format!("fixed tau = {t}"),
            None => "tau = amplitude / 2".into(),
        },
        scoring: "unidentified users and diverged trials count every payload bit as an error"
            .into(),
        damping_scheme: if opts.bigamp.damp_adapt {
            "reject pass on cost increase and halve damp (min damp_min); \
             otherwise damp *= damp_grow (max 1); cost = sum |y - w_hat|^2 / (v_w + sigma2)"
                .into()
        } else {
            format!("fixed damp = {}", opts.bigamp.damp)
        },
        constellations: links
            .iter()
            .zip(gammas)
            .map(|(l, &g)| ConstellationDump {
                gamma: g,
                points: l
                    .constellation
                    .points()
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        (
                            p.re,
                            p.im,
                            format!(
                                "{:0width$b}",
                                l.constellation.label(i),
                                width = l.constellation.bits_per_symbol()
                            ),
                        )
                    })
                    .collect(),
            })
            .collect(),
        signature_seeds: links
            .iter()
            .zip(gammas)
            .map(|(l, &g)| (g, l.frames.signatures().seed()))
            .collect(),
    };
    Ok(SweepResult { points, metadata })
}

fn aggregate(gamma: f64, link: &Link, snr_db: f64, results: Vec<TrialResult>, runtime: f64) -> PointResult {
    let n = results.len() as f64;
    let mean = |f: &dyn Fn(&TrialResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    let ber = mean(&|r| r.ber);
    let ci95 = if results.len() > 1 {
        let var = results.iter().map(|r| (r.ber - ber).powi(2)).sum::<f64>() / (n - 1.0);
        1.96 * (var / n).sqrt()
    } else {
        0.0
    };
    PointResult {
        gamma,
        subcarriers: link.cfg.subcarriers,
        users: link.cfg.users,
        antennas: link.cfg.antennas,
        symbols: link.cfg.symbols,
        snr_db,
        trials: results.len(),
        ber,
        ci95,
        id_error_rate: mean(&|r| r.id_error_rate),
        mean_iters: mean(&|r| r.iters as f64),
        converged_fraction: mean(&|r| if r.converged { 1.0 } else { 0.0 }),
        runtime_s: runtime,
        results,
    }
}

/// One parsed CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub gamma: f64,
    pub subcarriers: usize,
    pub users: usize,
    pub antennas: usize,
    pub symbols: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub ber: f64,
    pub ci95: f64,
    pub id_error_rate: f64,
    pub mean_iters: f64,
    pub runtime_s: f64,
}

impl From<&PointResult> for CsvRow {
    fn from(p: &PointResult) -> Self {
        CsvRow {
            gamma: p.gamma,
            subcarriers: p.subcarriers,
            users: p.users,
            antennas: p.antennas,
            symbols: p.symbols,
            snr_db: p.snr_db,
            trials: p.trials,
            ber: p.ber,
            ci95: p.ci95,
            id_error_rate: p.id_error_rate,
            mean_iters: p.mean_iters,
            runtime_s: p.runtime_s,
        }
    }
}

fn csv_text(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in &result.points {
        // `{}` on f64 prints the shortest string that parses back exactly
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.gamma,
            p.subcarriers,
            p.users,
            p.antennas,
            p.symbols,
            p.snr_db,
            p.trials,
            p.ber,
            p.ci95,
            p.id_error_rate,
            p.mean_iters,
            p.runtime_s
        ));
    }
    out
}

/// Path of the metadata file written next to `csv`.
pub fn metadata_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes the CSV and its `<path>.meta.json` sibling.
pub fn emit_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    std::fs::write(path, csv_text(result))?;
    let meta_path = metadata_path(path);
    let meta = serde_json::json!({
        "metadata": result.metadata,
        "points": result.points.iter().map(|p| serde_json::json!({
            "gamma": p.gamma,
            "snr_db": p.snr_db,
            "converged_fraction": p.converged_fraction,
            "trial_seeds": p.results.iter().map(|r| r.seed).collect::<Vec<_>>(),
            "trial_ber": p.results.iter().map(|r| r.ber).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(meta_path)
}

/// Reads a CSV written by [`emit_csv`].
pub fn parse_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected header {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 12 {
                return Err(Error::Parse(format!("expected 12 fields: {line}")));
            }
            let fl = |i: usize| {
                f[i].parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number `{}`", f[i])))
            };
            let us = |i: usize| {
                f[i].parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad integer `{}`", f[i])))
            };
            Ok(CsvRow {
                gamma: fl(0)?,
                subcarriers: us(1)?,
                users: us(2)?,
                antennas: us(3)?,
                symbols: us(4)?,
                snr_db: fl(5)?,
                trials: us(6)?,
                ber: fl(7)?,
                ci95: fl(8)?,
                id_error_rate: fl(9)?,
                mean_iters: fl(10)?,
                runtime_s: fl(11)?,
            })
        })
        .collect()
}
