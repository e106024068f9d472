//! Scalar posterior computations for the two variable types.

use crate::codebook::Constellation;
use crate::C64;

/// Receiver-side model knowledge: symbol prior, channel prior and noise.
#[derive(Debug, Clone)]
pub struct Priors {
    /// Probability that a symbol is nonzero.
    pub gamma: f64,
    pub constellation: Constellation,
    /// Prior variance of every channel coefficient.
    pub beta_bar: f64,
    /// Noise variance per complex sample.
    pub sigma2: f64,
    log_zero: f64,
    log_point: f64,
}

impl Priors {
    pub fn new(gamma: f64, constellation: Constellation, beta_bar: f64, sigma2: f64) -> Self {
        let m = constellation.order() as f64;
        Priors {
            gamma,
            log_zero: (1.0 - gamma).ln(),
            log_point: (gamma / m).ln(),
            constellation,
            beta_bar,
            sigma2,
        }
    }

    /// `E[x]` under the Bernoulli-constellation prior.
    pub fn symbol_mean(&self) -> C64 {
        let m = self.constellation.order() as f64;
        self.constellation.points().iter().sum::<C64>() * (self.gamma / m)
    }

    /// `Var[x]` under the Bernoulli-constellation prior.
    pub fn symbol_variance(&self) -> f64 {
        let m = self.constellation.order() as f64;
        let second: f64 = self
            .constellation
            .points()
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            * (self.gamma / m);
        second - self.symbol_mean().norm_sqr()
    }
}

/// Posterior of `h ~ CN(0, beta_bar)` observed through `CN(q_hat, v_q)`.
pub fn gaussian_posterior(q_hat: C64, v_q: f64, beta_bar: f64) -> (C64, f64) {
    let denom = beta_bar + v_q;
    (q_hat * (beta_bar / denom), beta_bar * v_q / denom)
}

/// Posterior mean and variance of a symbol with prior
/// `(1 - gamma) delta(x) + gamma/M sum_c delta(x - c)` observed through
/// `CN(r_hat, v_r)`.
///
/// Log-weights are shifted by their maximum before exponentiation.
pub fn discrete_posterior(r_hat: C64, v_r: f64, p: &Priors) -> (C64, f64) {
    let count = p.constellation.order() + 1;
    if count <= 65 {
        let mut buf = [0.0f64; 65];
        posterior_with(r_hat, v_r, p, &mut buf[..count])
    } else {
        posterior_with(r_hat, v_r, p, &mut vec![0.0; count])
    }
}

fn posterior_with(r_hat: C64, v_r: f64, p: &Priors, logw: &mut [f64]) -> (C64, f64) {
    let points = p.constellation.points();
    let inv = 1.0 / v_r;
    logw[0] = p.log_zero - r_hat.norm_sqr() * inv;
    let mut max = logw[0];
    for (slot, c) in logw[1..].iter_mut().zip(points) {
        *slot = p.log_point - (r_hat - c).norm_sqr() * inv;
        if *slot > max {
            max = *slot;
        }
    }
    let mut z = 0.0;
    let mut mean = C64::new(0.0, 0.0);
    for (w, c) in logw.iter_mut().skip(1).zip(points) {
        *w = (*w - max).exp();
        z += *w;
        mean += c * *w;
    }
    logw[0] = (logw[0] - max).exp();
    z += logw[0];
    mean /= z;
    let mut var = logw[0] * mean.norm_sqr();
    for (w, c) in logw[1..].iter().zip(points) {
        var += w * (c - mean).norm_sqr();
    }
    (mean, var / z)
}
