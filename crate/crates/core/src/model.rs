//! System configuration shared by every stage of the link.
//!
//! A [`SystemConfig`] describes one SCMA uplink: `K` subcarriers, `N` active
//! users each occupying `d_f` of the `K` subcarriers per codeword, `d_v`
//! users colliding on every subcarrier, and a base station with `J`
//! antennas. The sparsity level is `gamma = d_f / K` and the overload factor
//! is `d_v / d_f = N / K`.
//!
//! Configurations can be read from a flat `key = value` file whose keys are
//! `K`, `N`, `J`, `I`, `d_f`, `d_v`, `M`, `P`, `sigma2`, `beta`, `beta_bar`
//! (plus the optional `gamma` and `support_mode`).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How often a fresh sparse support is drawn for a user's data codewords.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    /// New support for every `K`-length codeword.
    #[default]
    PerSymbol,
    /// One support per user, reused for the whole frame.
    PerFrame,
}

impl FromStr for SupportMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "per_symbol" => Ok(SupportMode::PerSymbol),
            "per_frame" => Ok(SupportMode::PerFrame),
            other => Err(Error::Parse(format!("unknown support_mode `{other}`"))),
        }
    }
}

impl fmt::Display for SupportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SupportMode::PerSymbol => f.write_str("per_symbol"),
            SupportMode::PerFrame => f.write_str("per_frame"),
        }
    }
}

/// Scalar parameters of one simulated uplink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// `K`
    pub subcarriers: usize,
    /// `N`
    pub users: usize,
    /// `J`
    pub antennas: usize,
    /// `I`, data codewords per frame.
    pub symbols: usize,
    /// Nonzero subcarriers per codeword.
    pub d_f: usize,
    /// Users per subcarrier.
    pub d_v: usize,
    /// Constellation size `M`.
    pub order: usize,
    /// Average power budget `P` per symbol slot.
    pub power: f64,
    /// Noise variance per complex receive sample.
    pub sigma2: f64,
    /// Per-user path loss.
    pub beta: Vec<f64>,
    /// Average path loss, the channel prior variance at the receiver.
    pub beta_bar: f64,
    #[serde(default)]
    pub support_mode: SupportMode,
}

impl SystemConfig {
    /// Builds a configuration from the sparsity level: `K = d_f / gamma`,
    /// `N = d_v / gamma`, `J = N`, QPSK, `P = 1`, unit path losses and no
    /// noise. Fails when `K` or `N` would not be an integer.
    pub fn from_sparsity(d_f: usize, d_v: usize, gamma: f64, symbols: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Config(format!("gamma = {gamma} is outside (0, 1)")));
        }
        let subcarriers = exact_ratio(d_f, gamma, "K = d_f / gamma")?;
        let users = exact_ratio(d_v, gamma, "N = d_v / gamma")?;
        let cfg = SystemConfig {
            subcarriers,
            users,
            antennas: users,
            symbols,
            d_f,
            d_v,
            order: 4,
            power: 1.0,
            sigma2: 0.0,
            beta: vec![1.0; users],
            beta_bar: 1.0,
            support_mode: SupportMode::PerSymbol,
        };
        cfg.validate()
    }

    /// Checks every structural invariant and returns the configuration
    /// unchanged.
    pub fn validate(self) -> Result<Self> {
        let cfg = self.validate_runnable()?;
        // N = d_v / gamma = d_v * K / d_f exactly.
        if cfg.users * cfg.d_f != cfg.d_v * cfg.subcarriers {
            return Err(Error::Config(format!(
                "N = {} is not d_v * K / d_f = {} * {} / {}",
                cfg.users, cfg.d_v, cfg.subcarriers, cfg.d_f
            )));
        }
        Ok(cfg)
    }

    /// All checks of [`validate`](Self::validate) except the overload
    /// identity `N * d_f = d_v * K`, for hand-built test instances such as
    /// `N = 3, K = 4, d_f = 2` whose `d_v` is not an integer.
    pub fn validate_runnable(self) -> Result<Self> {
        let fail = |msg: String| Err(Error::Config(msg));
        let positive = [
            ("K", self.subcarriers),
            ("N", self.users),
            ("J", self.antennas),
            ("I", self.symbols),
            ("d_f", self.d_f),
        ];
        for (name, v) in positive {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.order < 2 || !self.order.is_power_of_two() {
            return fail(format!("M = {} must be a power of two >= 2", self.order));
        }
        if self.d_f >= self.subcarriers {
            return fail(format!(
                "gamma = d_f / K = {}/{} must lie in (0, 1)",
                self.d_f, self.subcarriers
            ));
        }
        if self.antennas < self.users {
            return fail(format!("J = {} must be >= N = {}", self.antennas, self.users));
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return fail(format!("P = {} must be positive", self.power));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return fail(format!("sigma2 = {} must be >= 0", self.sigma2));
        }
        if self.beta.len() != self.users {
            return fail(format!(
                "beta has {} entries, expected N = {}",
                self.beta.len(),
                self.users
            ));
        }
        if self.beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return fail("every beta_n must be positive".into());
        }
        let mean = self.beta.iter().sum::<f64>() / self.beta.len() as f64;
        if !(self.beta_bar > 0.0) || (self.beta_bar - mean).abs() > 1e-9 * mean.max(1.0) {
            return fail(format!(
                "beta_bar = {} is not the mean of beta ({mean})",
                self.beta_bar
            ));
        }
        Ok(self)
    }

    /// Sparsity level `d_f / K`.
    pub fn gamma(&self) -> f64 {
        self.d_f as f64 / self.subcarriers as f64
    }

    /// Overload factor `d_v / d_f`.
    pub fn overload(&self) -> f64 {
        self.d_v as f64 / self.d_f as f64
    }

    /// Frame length `L = K*I + K + 1`.
    pub fn frame_len(&self) -> usize {
        self.subcarriers * self.symbols + self.subcarriers + 1
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    /// Payload bits carried by one user's frame.
    pub fn payload_bits(&self) -> usize {
        self.symbols * self.d_f * self.bits_per_symbol()
    }

    /// Replaces the path-loss vector and keeps `beta_bar` consistent.
    pub fn with_beta(mut self, beta: Vec<f64>) -> Self {
        self.beta_bar = beta.iter().sum::<f64>() / beta.len().max(1) as f64;
        self.beta = beta;
        self
    }

    /// Parses the flat `key = value` format. Blank lines and `#` comments are
    /// ignored. Either `K`/`N` or `gamma` must be present.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            kv.insert(key.trim().to_string(), value.trim().to_string());
        }

        fn get<T: FromStr>(
            kv: &std::collections::BTreeMap<String, String>,
            key: &str,
        ) -> Result<Option<T>> {
            kv.get(key)
                .map(|v| {
                    v.parse::<T>()
                        .map_err(|_| Error::Parse(format!("bad value for `{key}`: {v}")))
                })
                .transpose()
        }

        let known = [
            "K", "N", "J", "I", "d_f", "d_v", "M", "P", "sigma2", "beta", "beta_bar", "gamma",
            "support_mode",
        ];
        if let Some(k) = kv.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::Parse(format!("unknown key `{k}`")));
        }

        let d_f: usize = get(&kv, "d_f")?.ok_or_else(|| Error::Parse("missing d_f".into()))?;
        let d_v: usize = get(&kv, "d_v")?.ok_or_else(|| Error::Parse("missing d_v".into()))?;
        let symbols: usize = get(&kv, "I")?.ok_or_else(|| Error::Parse("missing I".into()))?;
        let gamma: Option<f64> = get(&kv, "gamma")?;
        let subcarriers = match (get::<usize>(&kv, "K")?, gamma) {
            (Some(k), _) => k,
            (None, Some(g)) => exact_ratio(d_f, g, "K = d_f / gamma")?,
            (None, None) => return Err(Error::Parse("need K or gamma".into())),
        };
        let users = match (get::<usize>(&kv, "N")?, gamma) {
            (Some(n), _) => n,
            (None, Some(g)) => exact_ratio(d_v, g, "N = d_v / gamma")?,
            (None, None) => return Err(Error::Parse("need N or gamma".into())),
        };
        if let Some(g) = gamma {
            if (d_f as f64 / subcarriers as f64 - g).abs() > 1e-12 {
                return Err(Error::Config(format!("gamma = {g} disagrees with d_f / K")));
            }
        }
        let beta = match kv.get("beta") {
            None => vec![1.0; users],
            Some(v) => {
                let parsed = v
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Parse(format!("bad beta list: {v}")))?;
                if parsed.len() == 1 {
                    vec![parsed[0]; users]
                } else {
                    parsed
                }
            }
        };
        let mean = beta.iter().sum::<f64>() / beta.len().max(1) as f64;
        let cfg = SystemConfig {
            subcarriers,
            users,
            antennas: get(&kv, "J")?.unwrap_or(users),
            symbols,
            d_f,
            d_v,
            order: get(&kv, "M")?.unwrap_or(4),
            power: get(&kv, "P")?.unwrap_or(1.0),
            sigma2: get(&kv, "sigma2")?.unwrap_or(0.0),
            beta,
            beta_bar: get(&kv, "beta_bar")?.unwrap_or(mean),
            support_mode: get(&kv, "support_mode")?.unwrap_or_default(),
        };
        cfg.validate()
    }

    pub fn from_kv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    /// Writes the configuration back in the `key = value` format.
    pub fn to_kv_string(&self) -> String {
        let beta = self
            .beta
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "K = {}\nN = {}\nJ = {}\nI = {}\nd_f = {}\nd_v = {}\nM = {}\nP = {}\nsigma2 = {}\nbeta = {}\nbeta_bar = {}\nsupport_mode = {}\n",
            self.subcarriers,
            self.users,
            self.antennas,
            self.symbols,
            self.d_f,
            self.d_v,
            self.order,
            self.power,
            self.sigma2,
            beta,
            self.beta_bar,
            self.support_mode
        )
    }
}

/// `count / gamma` when it is an integer (up to rounding of `gamma`).
fn exact_ratio(count: usize, gamma: f64, what: &str) -> Result<usize> {
    let v = count as f64 / gamma;
    let r = v.round();
    if r < 1.0 || (v - r).abs() > 1e-9 * r {
        return Err(Error::Config(format!("{what} = {v} is not an integer")));
    }
    Ok(r as usize)
}
