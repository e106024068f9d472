//! Monte-Carlo driver: single trials, SNR/sparsity sweeps, CSV output and
//! the brute-force reference detector.

mod oracle;
mod sweep;

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bigamp::{self, BigAmpOptions, BigAmpOutput, Priors, TraceRow};
use crate::channel::{apply_channel, draw_channel, snr_to_sigma2, ChannelRealization, ReceivedMatrix};
use crate::codebook::Constellation;
use crate::detector::{detect, DetectionResult, DetectorOptions, PhaseReference};
use crate::model::SystemConfig;
use crate::txframe::{FrameBuilder, SignalMatrix};
use crate::{Error, Result};

pub use oracle::{enumerate_codewords, map_oracle, MAX_CANDIDATES};
pub use sweep::{
    emit_csv, parse_csv, sweep, CsvRow, PointResult, SweepMetadata, SweepResult, SweepSpec,
    CSV_HEADER,
};

/// Receiver settings shared by every trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReceiverOptions {
    pub bigamp: BigAmpOptions,
    /// Detection threshold; `None` means half the constellation amplitude.
    pub tau: Option<f64>,
    pub phase_reference: PhaseReference,
}

impl Default for ReceiverOptions {
    fn default() -> Self {
        ReceiverOptions {
            bigamp: BigAmpOptions::default(),
            tau: None,
            phase_reference: PhaseReference::Label,
        }
    }
}

impl ReceiverOptions {
    pub fn detector(&self, c: &Constellation) -> DetectorOptions {
        let mut d = DetectorOptions::for_constellation(c);
        if let Some(tau) = self.tau {
            d.tau = tau;
        }
        d.phase_reference = self.phase_reference;
        d
    }
}

/// Independent random streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub payload: u64,
    pub frame: u64,
    pub channel: u64,
    pub noise: u64,
    pub receiver: u64,
}

impl TrialSeeds {
    pub fn from_seed(seed: u64) -> Self {
        let derive = |stream: u64| mix(seed, stream);
        TrialSeeds {
            payload: derive(1),
            frame: derive(2),
            channel: derive(3),
            noise: derive(4),
            receiver: derive(5),
        }
    }
}

/// Counter-based seed derivation.
pub fn mix(seed: u64, counter: u64) -> u64 {
    use crate::txframe::splitmix64;
    splitmix64(splitmix64(seed) ^ counter.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Outcome of one simulated frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub ber: f64,
    pub id_error_rate: f64,
    pub iters: usize,
    pub converged: bool,
    /// BiG-AMP produced non-finite values even after a restart.
    pub diverged: bool,
    pub seed: u64,
    pub bit_errors: usize,
    pub total_bits: usize,
    pub flagged_blocks: usize,
}

/// Everything drawn on the transmit side of one trial.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub payloads: Vec<Vec<u8>>,
    pub x: SignalMatrix,
    pub channel: ChannelRealization,
    pub received: ReceivedMatrix,
}

/// Prebuilt, immutable per-configuration objects.
#[derive(Debug, Clone)]
pub struct Link {
    pub cfg: SystemConfig,
    pub constellation: Constellation,
    pub frames: FrameBuilder,
}

impl Link {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        let cfg = cfg.clone().validate_runnable()?;
        let constellation = Constellation::new(cfg.order, cfg.power, cfg.gamma())?;
        let frames = FrameBuilder::new(&cfg, &constellation)?;
        Ok(Link {
            cfg,
            constellation,
            frames,
        })
    }

    /// Payload, frames, channel and noisy observation for `seeds`.
    pub fn transmit(&self, sigma2: f64, seeds: &TrialSeeds) -> Result<TrialData> {
        let cfg = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds.payload);
        let payloads: Vec<Vec<u8>> = (0..cfg.users)
            .map(|_| (0..cfg.payload_bits()).map(|_| rng.random_range(0..2u8)).collect())
            .collect();
        let x = self
            .frames
            .build_signal_matrix(&payloads, &mut ChaCha8Rng::seed_from_u64(seeds.frame))?;
        let channel = draw_channel(cfg, &mut ChaCha8Rng::seed_from_u64(seeds.channel));
        let received = apply_channel(&channel, &x, sigma2, &mut ChaCha8Rng::seed_from_u64(seeds.noise))?;
        Ok(TrialData {
            payloads,
            x,
            channel,
            received,
        })
    }

    pub fn priors(&self, sigma2: f64, floor: f64) -> Priors {
        Priors::new(
            self.cfg.gamma(),
            self.constellation.clone(),
            self.cfg.beta_bar,
            sigma2.max(floor),
        )
    }

    /// BiG-AMP on `y`.
    pub fn factorize(
        &self,
        y: &Array2<crate::C64>,
        sigma2: f64,
        opts: &ReceiverOptions,
        seed: u64,
        trace: Option<&mut Vec<TraceRow>>,
    ) -> Result<BigAmpOutput> {
        let priors = self.priors(sigma2, opts.bigamp.variance_floor);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        bigamp::run(y, self.cfg.users, &priors, &opts.bigamp, &mut rng, trace)
    }

    pub fn detect(&self, x_hat: &Array2<crate::C64>, opts: &ReceiverOptions) -> Result<DetectionResult> {
        detect(
            x_hat,
            self.frames.signatures().signatures(),
            &self.frames.layout(),
            &self.constellation,
            self.cfg.d_f,
            &opts.detector(&self.constellation),
        )
    }

    /// Bit errors per user; unidentified users score all bits wrong.
    pub fn score(&self, det: &DetectionResult, payloads: &[Vec<u8>]) -> (usize, usize, usize) {
        let mut errors = 0;
        let mut total = 0;
        let mut id_errors = 0;
        for (u, truth) in payloads.iter().enumerate() {
            total += truth.len();
            match (&det.bits[u], det.id_success()[u]) {
                (Some(bits), true) => {
                    errors += bits.iter().zip(truth).filter(|(a, b)| a != b).count();
                }
                _ => {
                    errors += truth.len();
                    id_errors += 1;
                }
            }
        }
        (errors, total, id_errors)
    }
}

/// One full trial at `snr_db` (use `f64::INFINITY` for a noiseless link).
pub fn run_trial(
    cfg: &SystemConfig,
    snr_db: f64,
    seed: u64,
    opts: &ReceiverOptions,
) -> Result<TrialResult> {
    let link = Link::new(cfg)?;
    run_trial_on(&link, snr_db, seed, opts, None)
}

pub fn run_trial_on(
    link: &Link,
    snr_db: f64,
    seed: u64,
    opts: &ReceiverOptions,
    trace: Option<&mut Vec<TraceRow>>,
) -> Result<TrialResult> {
    let seeds = TrialSeeds::from_seed(seed);
    let sigma2 = snr_to_sigma2(snr_db, link.cfg.power);
    let data = link.transmit(sigma2, &seeds)?;
    let total_bits = link.cfg.users * link.cfg.payload_bits();

    let out = match link.factorize(&data.received.y, sigma2, opts, seeds.receiver, trace) {
        Ok(out) => out,
        Err(Error::Diverged { iter }) => {
            return Ok(TrialResult {
                ber: 1.0,
                id_error_rate: 1.0,
                iters: iter,
                converged: false,
                diverged: true,
                seed,
                bit_errors: total_bits,
                total_bits,
                flagged_blocks: 0,
            })
        }
        Err(e) => return Err(e),
    };
    let det = link.detect(&out.x_hat, opts)?;
    let (bit_errors, total, id_errors) = link.score(&det, &data.payloads);
    Ok(TrialResult {
        ber: bit_errors as f64 / total as f64,
        id_error_rate: id_errors as f64 / link.cfg.users as f64,
        iters: out.iters,
        converged: out.converged,
        diverged: false,
        seed,
        bit_errors,
        total_bits: total,
        flagged_blocks: det.flagged_blocks.iter().sum(),
    })
}

/// Wall-clock helper for sweeps.
pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}
