//! Transmit frames and the stacked signal matrix `X`.
//!
//! Every user's frame of length `L = K*I + K + 1` is laid out as
//!
//! ```text
//! | x0 | signature (K) | codeword 1 (K) | ... | codeword I (K) |
//! ```
//!
//! The symbol label `x0` is the same known point for all users and sits in
//! column 0 so it is always the first nonzero entry of a row. The signature
//! is a sparse, constellation-valued word derived from the user id; the
//! receiver uses it to undo the row permutation of the factorization.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codebook::{draw_support, Constellation, Support};
use crate::model::{SupportMode, SystemConfig};
use crate::{Error, Result, C64};

/// Seed of the first signature-book attempt.
const SIGNATURE_SEED: u64 = 0x5c3a_d1c7_0000_0000;

/// Column ranges of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub subcarriers: usize,
    pub symbols: usize,
}

impl FrameLayout {
    pub fn new(cfg: &SystemConfig) -> Self {
        FrameLayout {
            subcarriers: cfg.subcarriers,
            symbols: cfg.symbols,
        }
    }

    pub fn label_index(&self) -> usize {
        0
    }

    pub fn signature_span(&self) -> std::ops::Range<usize> {
        1..self.subcarriers + 1
    }

    pub fn data_span(&self) -> std::ops::Range<usize> {
        self.subcarriers + 1..self.len()
    }

    /// Columns of data codeword `i`.
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        let start = self.subcarriers + 1 + i * self.subcarriers;
        start..start + self.subcarriers
    }

    pub fn len(&self) -> usize {
        self.subcarriers * self.symbols + self.subcarriers + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The known symbol label: the constellation point at angle zero.
pub fn build_symbol_label(c: &Constellation) -> C64 {
    c.points()[0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserSignature {
    pub user_id: usize,
    pub symbols: Vec<C64>,
}

impl UserSignature {
    pub fn distance_sqr(&self, other: &[C64]) -> f64 {
        self.symbols
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum()
    }
}

/// Deterministic signatures for users `0..N`, pairwise at distance of at
/// least one constellation amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureBook {
    signatures: Vec<UserSignature>,
    seed: u64,
}

impl SignatureBook {
    pub fn new(users: usize, subcarriers: usize, d_f: usize, c: &Constellation) -> Result<Self> {
        if d_f == 0 || d_f > subcarriers {
            return Err(Error::InvalidArgument(format!(
                "d_f = {d_f} must lie in 1..={subcarriers}"
            )));
        }
        let distinct = binomial(subcarriers, d_f) * (c.order() as f64).powi(d_f as i32);
        if (users as f64) > distinct {
            return Err(Error::InvalidArgument(format!(
                "{users} users but only {distinct} distinct signatures"
            )));
        }
        let min_dist2 = c.amplitude() * c.amplitude() * (1.0 - 1e-9);
        for attempt in 0..10_000u64 {
            let seed = SIGNATURE_SEED.wrapping_add(attempt);
            let signatures: Vec<_> = (0..users)
                .map(|id| signature_from_seed(id, seed, subcarriers, d_f, c))
                .collect();
            let collision = (0..users).any(|a| {
                (a + 1..users)
                    .any(|b| signatures[a].distance_sqr(&signatures[b].symbols) < min_dist2)
            });
            if !collision {
                return Ok(SignatureBook { signatures, seed });
            }
        }
        Err(Error::InvalidArgument(
            "no collision-free signature set found".into(),
        ))
    }

    pub fn for_config(cfg: &SystemConfig, c: &Constellation) -> Result<Self> {
        Self::new(cfg.users, cfg.subcarriers, cfg.d_f, c)
    }

    pub fn get(&self, user_id: usize) -> Result<&UserSignature> {
        self.signatures.get(user_id).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "user id {user_id} out of range 0..{}",
                self.signatures.len()
            ))
        })
    }

    pub fn signatures(&self) -> &[UserSignature] {
        &self.signatures
    }

    /// Seed that produced this collision-free set.
    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn signature_from_seed(
    user_id: usize,
    seed: u64,
    subcarriers: usize,
    d_f: usize,
    c: &Constellation,
) -> UserSignature {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(user_id as u64)));
    let support = draw_support(subcarriers, d_f, &mut rng).expect("d_f checked by caller");
    let mut symbols = vec![C64::new(0.0, 0.0); subcarriers];
    for &k in support.indices() {
        symbols[k] = c.points()[rng.random_range(0..c.order())];
    }
    UserSignature { user_id, symbols }
}

/// Signature of one user under `cfg`.
pub fn build_user_signature(
    user_id: usize,
    cfg: &SystemConfig,
    c: &Constellation,
) -> Result<UserSignature> {
    if user_id >= cfg.users {
        return Err(Error::InvalidArgument(format!(
            "user id {user_id} out of range 0..{}",
            cfg.users
        )));
    }
    Ok(SignatureBook::for_config(cfg, c)?.get(user_id)?.clone())
}

/// Stacked `N x L` transmit matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    pub entries: Array2<C64>,
    pub layout: FrameLayout,
}

/// Frame assembly for one configuration.
#[derive(Debug, Clone)]
pub struct FrameBuilder {
    cfg: SystemConfig,
    constellation: Constellation,
    signatures: SignatureBook,
    layout: FrameLayout,
}

impl FrameBuilder {
    pub fn new(cfg: &SystemConfig, constellation: &Constellation) -> Result<Self> {
        Ok(FrameBuilder {
            cfg: cfg.clone(),
            constellation: constellation.clone(),
            signatures: SignatureBook::for_config(cfg, constellation)?,
            layout: FrameLayout::new(cfg),
        })
    }

    pub fn layout(&self) -> FrameLayout {
        self.layout
    }

    pub fn signatures(&self) -> &SignatureBook {
        &self.signatures
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    /// One user's frame row.
    pub fn build_frame<R: Rng + ?Sized>(
        &self,
        user_id: usize,
        payload_bits: &[u8],
        rng: &mut R,
    ) -> Result<Vec<C64>> {
        let cfg = &self.cfg;
        if payload_bits.len() != cfg.payload_bits() {
            return Err(Error::InvalidArgument(format!(
                "payload has {} bits, expected I * d_f * log2(M) = {}",
                payload_bits.len(),
                cfg.payload_bits()
            )));
        }
        let sig = self.signatures.get(user_id)?;
        let mut row = vec![C64::new(0.0, 0.0); self.layout.len()];
        row[self.layout.label_index()] = build_symbol_label(&self.constellation);
        row[self.layout.signature_span()].copy_from_slice(&sig.symbols);

        let bps = cfg.bits_per_symbol();
        let fixed: Option<Support> = match cfg.support_mode {
            SupportMode::PerFrame => Some(draw_support(cfg.subcarriers, cfg.d_f, rng)?),
            SupportMode::PerSymbol => None,
        };
        for (i, bits) in payload_bits.chunks(cfg.d_f * bps).enumerate() {
            let support = match &fixed {
                Some(s) => s.clone(),
                None => draw_support(cfg.subcarriers, cfg.d_f, rng)?,
            };
            let block = self.layout.block(i);
            for (&k, sym_bits) in support.indices().iter().zip(bits.chunks(bps)) {
                row[block.start + k] = self.constellation.bits_to_symbol(sym_bits)?;
            }
        }
        Ok(row)
    }

    /// Stacks the frames of all `N` users.
    pub fn build_signal_matrix<R: Rng + ?Sized>(
        &self,
        payloads: &[Vec<u8>],
        rng: &mut R,
    ) -> Result<SignalMatrix> {
        if payloads.len() != self.cfg.users {
            return Err(Error::InvalidArgument(format!(
                "{} payloads for {} users",
                payloads.len(),
                self.cfg.users
            )));
        }
        let mut entries = Array2::zeros((self.cfg.users, self.layout.len()));
        for (n, bits) in payloads.iter().enumerate() {
            let row = self.build_frame(n, bits, rng)?;
            entries
                .row_mut(n)
                .iter_mut()
                .zip(row)
                .for_each(|(dst, v)| *dst = v);
        }
        Ok(SignalMatrix {
            entries,
            layout: self.layout,
        })
    }
}

impl SignalMatrix {
    /// One CSV line of `re,im` pairs per user.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.entries.rows() {
            let line = row
                .iter()
                .map(|v| format!("{},{}", v.re, v.im))
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
