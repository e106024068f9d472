//! Quasi-static flat Rayleigh fading and additive white Gaussian noise.
//!
//! `CN(0, v)` always means total variance `v`, split evenly between the real
//! and imaginary parts.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::SystemConfig;
use crate::txframe::SignalMatrix;
use crate::{Error, Result, C64};

/// One draw of `CN(0, var)`.
pub fn complex_gaussian<R: Rng + ?Sized>(var: f64, rng: &mut R) -> C64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

/// `J x N` channel, constant over the frame and across subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: Array2<C64>,
    pub beta: Vec<f64>,
}

/// `J x L` observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedMatrix {
    pub y: Array2<C64>,
    pub sigma2: f64,
}

/// Column `n` is `sqrt(beta_n) * g_n` with `g_n ~ CN(0, I_J)`.
pub fn draw_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelRealization {
    let mut h = Array2::zeros((cfg.antennas, cfg.users));
    // column-major draw order so each user's column is one contiguous stream
    for n in 0..cfg.users {
        let beta = cfg.beta.get(n).copied().unwrap_or(1.0);
        for j in 0..cfg.antennas {
            h[[j, n]] = complex_gaussian(beta, rng);
        }
    }
    ChannelRealization {
        h,
        beta: cfg.beta.clone(),
    }
}

/// `sigma2 = P / 10^(snr_db / 10)`.
pub fn snr_to_sigma2(snr_db: f64, power: f64) -> f64 {
    power / 10f64.powf(snr_db / 10.0)
}

/// `Y = H X + Z` with `Z` i.i.d. `CN(0, sigma2)`.
pub fn apply_channel<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    x: &SignalMatrix,
    sigma2: f64,
    rng: &mut R,
) -> Result<ReceivedMatrix> {
    apply_channel_raw(&channel.h, &x.entries, sigma2, rng)
}

pub(crate) fn apply_channel_raw<R: Rng + ?Sized>(
    h: &Array2<C64>,
    x: &Array2<C64>,
    sigma2: f64,
    rng: &mut R,
) -> Result<ReceivedMatrix> {
    if h.ncols() != x.nrows() {
        return Err(Error::Dimension(format!(
            "H is {}x{} but X is {}x{}",
            h.nrows(),
            h.ncols(),
            x.nrows(),
            x.ncols()
        )));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma2 = {sigma2}")));
    }
    let mut y = h.dot(x);
    if sigma2 > 0.0 {
        y.iter_mut().for_each(|v| *v += complex_gaussian(sigma2, rng));
    }
    Ok(ReceivedMatrix { y, sigma2 })
}
