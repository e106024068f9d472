//! Bilinear generalized AMP for `Y = H X + Z`.
//!
//! Each pass runs the factor-node stage (plug-in mean and variance of
//! `(HX)_{j,l}`, Onsager correction, AWGN output posterior, scaled residual)
//! followed by the variable-node stage (pseudo-measurements for every
//! `h_{j,n}` and `x_{n,l}` and their scalar posteriors under the Gaussian
//! channel prior and the Bernoulli-constellation symbol prior).
//!
//! The variance bookkeeping follows the transcription where the output
//! posterior and the residual mean use the plug-in variance `v̄ʷ` while the
//! residual variance uses the full `vʷ`. Setting
//! [`BigAmpOptions::strict_paper_variances`] to `false` uses `v̄ʷ` everywhere
//! instead.

mod denoise;
mod init;

use ndarray::{Array2, Zip};
use rand::Rng;

use crate::channel::complex_gaussian;
use crate::{Error, Result, C64};

pub use denoise::{discrete_posterior, gaussian_posterior, Priors};
pub use init::{data_dictionary, initial_symbols, ChannelInit, SymbolInit, MAX_INIT_COLUMNS};

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BigAmpOptions {
    pub t_max: usize,
    /// Stop when the relative squared change of `w̄` drops below this.
    pub tau_stop: f64,
    /// Initial damping factor; 1 means no damping.
    pub damp: f64,
    pub damp_adapt: bool,
    pub damp_min: f64,
    pub damp_grow: f64,
    pub variance_floor: f64,
    pub strict_paper_variances: bool,
    /// Extra attempts from fresh initializations after a divergence or a
    /// poor fit.
    pub max_restarts: usize,
    /// A run whose `‖Y - ĤX̂‖²` exceeds this multiple of `J L σ²` counts as a
    /// poor fit. Infinite by default, so only divergence restarts.
    pub restart_fit: f64,
    pub channel_init: ChannelInit,
    /// `v_h(1)` as a fraction of `beta_bar` for channel columns found by
    /// [`ChannelInit::Data`].
    pub data_init_variance: f64,
    pub symbol_init: SymbolInit,
    /// Magnitude of the random offset of [`SymbolInit::Jitter`], as a
    /// fraction of the constellation amplitude.
    pub init_jitter: f64,
}

impl Default for BigAmpOptions {
    fn default() -> Self {
        BigAmpOptions {
            t_max: 200,
            tau_stop: 1e-8,
            damp: 0.3,
            damp_adapt: false,
            damp_min: 0.05,
            damp_grow: 1.1,
            variance_floor: 1e-12,
            strict_paper_variances: true,
            max_restarts: 1,
            restart_fit: f64::INFINITY,
            channel_init: ChannelInit::Data,
            data_init_variance: 0.01,
            symbol_init: SymbolInit::PriorDraw,
            init_jitter: 0.01,
        }
    }
}

impl BigAmpOptions {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be >= 1".into()));
        }
        if !(self.tau_stop > 0.0) {
            return Err(Error::Config("tau_stop must be positive".into()));
        }
        if !(self.damp > 0.0 && self.damp <= 1.0) {
            return Err(Error::Config(format!("damp = {} outside (0, 1]", self.damp)));
        }
        if !(self.damp_min > 0.0 && self.damp_min <= 1.0) || !(self.damp_grow >= 1.0) {
            return Err(Error::Config("bad adaptive damping schedule".into()));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::Config("variance_floor must be positive".into()));
        }
        if !(self.restart_fit > 0.0) {
            return Err(Error::Config("restart_fit must be positive".into()));
        }
        if !(self.data_init_variance > 0.0) || !(self.init_jitter >= 0.0) {
            return Err(Error::Config("bad initialization settings".into()));
        }
        Ok(())
    }
}

/// All per-iteration means and variances.
#[derive(Debug, Clone, PartialEq)]
pub struct BigAmpState {
    pub h_hat: Array2<C64>,
    pub v_h: Array2<f64>,
    pub x_hat: Array2<C64>,
    pub v_x: Array2<f64>,
    pub s_hat: Array2<C64>,
    pub v_s: Array2<f64>,
    pub w_bar: Array2<C64>,
    pub v_w_bar: Array2<f64>,
    pub v_w: Array2<f64>,
    pub w_hat: Array2<C64>,
    pub z_hat: Array2<C64>,
    pub v_z: Array2<f64>,
    pub q_hat: Array2<C64>,
    pub v_q: Array2<f64>,
    pub r_hat: Array2<C64>,
    pub v_r: Array2<f64>,
    pub iter: usize,
    /// Whether `v_w_bar`/`v_w` hold a previous pass (damping reference).
    has_front: bool,
    /// Whether `s_hat`/`v_s` hold a previous pass.
    has_back: bool,
}

impl BigAmpState {
    /// State with the given estimates and zeroed message arrays.
    pub fn from_estimates(
        h_hat: Array2<C64>,
        v_h: Array2<f64>,
        x_hat: Array2<C64>,
        v_x: Array2<f64>,
    ) -> Result<Self> {
        let (j, n) = h_hat.dim();
        let (n2, l) = x_hat.dim();
        if n != n2 || v_h.dim() != (j, n) || v_x.dim() != (n, l) {
            return Err(Error::Dimension(format!(
                "H is {j}x{n}, X is {n2}x{l}, v_h {:?}, v_x {:?}",
                v_h.dim(),
                v_x.dim()
            )));
        }
        let jl_c = || Array2::<C64>::zeros((j, l));
        let jl_r = || Array2::<f64>::zeros((j, l));
        Ok(BigAmpState {
            h_hat,
            v_h,
            x_hat,
            v_x,
            s_hat: jl_c(),
            v_s: jl_r(),
            w_bar: jl_c(),
            v_w_bar: jl_r(),
            v_w: jl_r(),
            w_hat: jl_c(),
            z_hat: jl_c(),
            v_z: jl_r(),
            q_hat: Array2::zeros((j, n)),
            v_q: Array2::zeros((j, n)),
            r_hat: Array2::zeros((n, l)),
            v_r: Array2::zeros((n, l)),
            iter: 0,
            has_front: false,
            has_back: false,
        })
    }

    fn is_finite(&self) -> bool {
        let c = |a: &Array2<C64>| a.iter().all(|v| v.re.is_finite() && v.im.is_finite());
        let r = |a: &Array2<f64>| a.iter().all(|v| v.is_finite());
        c(&self.h_hat)
            && c(&self.x_hat)
            && c(&self.w_bar)
            && c(&self.s_hat)
            && r(&self.v_h)
            && r(&self.v_x)
            && r(&self.v_w)
            && r(&self.v_s)
    }
}

/// Channel and symbol starting points per `o.channel_init` and
/// `o.symbol_init`, prior variances, and `ŝ(0) = 0`.
pub fn initialize<R: Rng + ?Sized>(
    y: &Array2<C64>,
    n_users: usize,
    p: &Priors,
    o: &BigAmpOptions,
    rng: &mut R,
) -> Result<BigAmpState> {
    if y.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::InvalidArgument("observation is not finite".into()));
    }
    let (j, l) = y.dim();
    let mut v_h = Array2::from_elem((j, n_users), p.beta_bar);
    let h_hat = match o.channel_init {
        ChannelInit::Prior => {
            Array2::from_shape_simple_fn((j, n_users), || complex_gaussian(p.beta_bar, rng))
        }
        ChannelInit::Data => {
            let (h, found) = data_dictionary(y, n_users, p, rng);
            v_h.columns_mut()
                .into_iter()
                .take(found)
                .for_each(|mut c| c.fill(o.data_init_variance * p.beta_bar));
            h
        }
    };
    let x_hat = initial_symbols((n_users, l), o.symbol_init, o.init_jitter, p, rng);
    let v_x = Array2::from_elem((n_users, l), p.symbol_variance().max(o.variance_floor));
    BigAmpState::from_estimates(h_hat, v_h, x_hat, v_x)
}

fn abs2(a: &Array2<C64>) -> Array2<f64> {
    a.mapv(|v| v.norm_sqr())
}

fn conj_t(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|v| v.conj())
}

fn blend_r(new: &mut Array2<f64>, old: &Array2<f64>, damp: f64) {
    Zip::from(new).and(old).for_each(|n, &o| *n = damp * *n + (1.0 - damp) * o);
}

fn blend_c(new: &mut Array2<C64>, old: &Array2<C64>, damp: f64) {
    Zip::from(new).and(old).for_each(|n, &o| *n = *n * damp + o * (1.0 - damp));
}

/// R1-R4: plug-in moments of `(HX)`, damped against the previous pass, and
/// the Onsager-corrected mean. Returns the cost surrogate
/// `sum |y - ŵ|² / (vʷ + σ²)` used by adaptive damping.
fn factor_stage(
    st: &mut BigAmpState,
    y: &Array2<C64>,
    p: &Priors,
    o: &BigAmpOptions,
    damp: f64,
) -> f64 {
    let floor = o.variance_floor;
    let abs2_h = abs2(&st.h_hat);
    let abs2_x = abs2(&st.x_hat);

    // R1
    let mut v_w_bar = abs2_h.dot(&st.v_x) + st.v_h.dot(&abs2_x);
    // R2
    st.w_bar = st.h_hat.dot(&st.x_hat);
    // R3
    let mut v_w = &v_w_bar + &st.v_h.dot(&st.v_x);

    if st.has_front {
        blend_r(&mut v_w_bar, &st.v_w_bar, damp);
        blend_r(&mut v_w, &st.v_w, damp);
    }
    v_w_bar.mapv_inplace(|v| v.max(floor));
    v_w.mapv_inplace(|v| v.max(floor));
    st.v_w_bar = v_w_bar;
    st.v_w = v_w;
    st.has_front = true;

    // R4
    Zip::from(&mut st.w_hat)
        .and(&st.w_bar)
        .and(&st.s_hat)
        .and(&st.v_w_bar)
        .for_each(|w_hat, &w_bar, &s, &vb| *w_hat = w_bar - s * vb);
    Zip::from(&st.w_hat)
        .and(&st.v_w)
        .and(y)
        .fold(0.0, |acc, &w_hat, &vw, &yv| {
            acc + (yv - w_hat).norm_sqr() / (vw + p.sigma2).max(floor)
        })
}

/// R5-R16: output posterior, residuals, pseudo-measurements and the scalar
/// posteriors of every channel and symbol entry.
fn variable_stage(
    st: &mut BigAmpState,
    y: &Array2<C64>,
    p: &Priors,
    o: &BigAmpOptions,
    damp: f64,
) {
    let floor = o.variance_floor;
    let sigma2 = p.sigma2.max(floor);
    let strict = o.strict_paper_variances;

    // R5-R8
    let mut s_new = Array2::<C64>::zeros(y.dim());
    let mut v_s_new = Array2::<f64>::zeros(y.dim());
    {
        let w_hat = st.w_hat.as_slice().expect("standard layout");
        let v_w_bar = st.v_w_bar.as_slice().expect("standard layout");
        let v_w = st.v_w.as_slice().expect("standard layout");
        let y = y.as_slice().expect("standard layout");
        let z_hat = st.z_hat.as_slice_mut().expect("standard layout");
        let v_z = st.v_z.as_slice_mut().expect("standard layout");
        let s = s_new.as_slice_mut().expect("standard layout");
        let v_s = v_s_new.as_slice_mut().expect("standard layout");
        for i in 0..y.len() {
            let vb = v_w_bar[i];
            let gain = 1.0 / (vb + sigma2);
            v_z[i] = (vb * sigma2 * gain).max(floor);
            z_hat[i] = (y[i] - w_hat[i]) * (vb * gain) + w_hat[i];
            let v_res = if strict { v_w[i] } else { vb };
            v_s[i] = ((1.0 - v_z[i] / v_res) / v_res).max(floor);
            s[i] = (z_hat[i] - w_hat[i]) / vb;
        }
    }
    if st.has_back {
        blend_c(&mut s_new, &st.s_hat, damp);
        blend_r(&mut v_s_new, &st.v_s, damp);
    }
    st.s_hat = s_new;
    st.v_s = v_s_new;
    st.has_back = true;

    let abs2_h = abs2(&st.h_hat);
    let abs2_x = abs2(&st.x_hat);

    // R9-R10: indices (j, n), sums over l
    let prec_q = st.v_s.dot(&abs2_x.t());
    let corr_q = st.v_s.dot(&st.v_x.t());
    let match_q = st.s_hat.dot(&conj_t(&st.x_hat));
    Zip::from(&mut st.q_hat)
        .and(&mut st.v_q)
        .and(&st.h_hat)
        .and(&prec_q)
        .and(&corr_q)
        .and(&match_q)
        .for_each(|q, vq, &h, &prec, &corr, &m| {
            *vq = (1.0 / prec.max(floor)).max(floor);
            *q = h * (1.0 - *vq * corr) + m * *vq;
        });

    // R11-R12: indices (n, l), sums over j
    let prec_r = abs2_h.t().dot(&st.v_s);
    let corr_r = st.v_h.t().dot(&st.v_s);
    let match_r = conj_t(&st.h_hat).dot(&st.s_hat);
    Zip::from(&mut st.r_hat)
        .and(&mut st.v_r)
        .and(&st.x_hat)
        .and(&prec_r)
        .and(&corr_r)
        .and(&match_r)
        .for_each(|r, vr, &x, &prec, &corr, &m| {
            *vr = (1.0 / prec.max(floor)).max(floor);
            *r = x * (1.0 - *vr * corr) + m * *vr;
        });

    // R13-R14
    Zip::from(&mut st.h_hat)
        .and(&mut st.v_h)
        .and(&st.q_hat)
        .and(&st.v_q)
        .for_each(|h, vh, &q, &vq| {
            let (mean, var) = gaussian_posterior(q, vq, p.beta_bar);
            *h = mean * damp + *h * (1.0 - damp);
            *vh = var.max(floor);
        });

    // R15-R16
    Zip::from(&mut st.x_hat)
        .and(&mut st.v_x)
        .and(&st.r_hat)
        .and(&st.v_r)
        .for_each(|x, vx, &r, &vr| {
            let (mean, var) = discrete_posterior(r, vr, p);
            *x = mean * damp + *x * (1.0 - damp);
            *vx = var.max(floor);
        });
}

/// One full pass R1-R16 with the fixed damping factor `o.damp`.
pub fn iterate(
    mut st: BigAmpState,
    y: &Array2<C64>,
    p: &Priors,
    o: &BigAmpOptions,
) -> Result<BigAmpState> {
    check_dims(&st, y)?;
    factor_stage(&mut st, y, p, o, o.damp);
    variable_stage(&mut st, y, p, o, o.damp);
    st.iter += 1;
    if !st.is_finite() {
        return Err(Error::Diverged { iter: st.iter });
    }
    Ok(st)
}

fn check_dims(st: &BigAmpState, y: &Array2<C64>) -> Result<()> {
    if st.h_hat.nrows() != y.nrows() || st.x_hat.ncols() != y.ncols() {
        return Err(Error::Dimension(format!(
            "state is {}x{} * {}x{}, observation {:?}",
            st.h_hat.nrows(),
            st.h_hat.ncols(),
            st.x_hat.nrows(),
            st.x_hat.ncols(),
            y.dim()
        )));
    }
    Ok(())
}

/// One line of the optional iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// Relative squared change of `w̄`, the stopping statistic.
    pub residual: f64,
    pub damp: f64,
    /// Mean `|Δx̂|` over all symbol entries.
    pub mean_dx: f64,
    pub accepted: bool,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("iter,residual,damp,mean_dx\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.iter, r.residual, r.damp, r.mean_dx));
    }
    out
}

/// Final posterior statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BigAmpOutput {
    pub h_hat: Array2<C64>,
    pub v_h: Array2<f64>,
    pub x_hat: Array2<C64>,
    pub v_x: Array2<f64>,
    /// Passes executed, rejected adaptive-damping steps included.
    pub iters: usize,
    pub converged: bool,
    /// Index of the returned attempt; 0 means the first initialization.
    pub restarts: usize,
    /// `‖Y - ĤX̂‖² / (J L σ²)`.
    pub fit: f64,
}

/// Runs from a fresh initialization, restarting from a new one (drawn from
/// `rng`) after a divergence or when the fit `‖Y - ĤX̂‖²` exceeds
/// `o.restart_fit` times its noise-only value `J L σ²`, at most
/// `o.max_restarts` times. Returns the best-fitting attempt.
pub fn run<R: Rng + ?Sized>(
    y: &Array2<C64>,
    n_users: usize,
    p: &Priors,
    o: &BigAmpOptions,
    rng: &mut R,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<BigAmpOutput> {
    o.validate()?;
    let noise_fit = y.len() as f64 * p.sigma2.max(o.variance_floor);
    let mut best: Option<BigAmpOutput> = None;
    let mut last_err = None;
    let mut passes = 0;
    for restart in 0..=o.max_restarts {
        let st = initialize(y, n_users, p, o, rng)?;
        match run_from(st, y, p, o, trace.as_deref_mut()) {
            Ok(mut out) => {
                passes += out.iters;
                out.fit = residual_norm(y, &out.h_hat, &out.x_hat).powi(2) / noise_fit;
                out.restarts = restart;
                let good = out.fit <= o.restart_fit;
                if best.as_ref().is_none_or(|b| out.fit < b.fit) {
                    best = Some(out);
                }
                if good {
                    break;
                }
            }
            Err(Error::Diverged { iter }) => {
                passes += iter;
                last_err = Some(Error::Diverged { iter: passes });
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(mut out) => {
            out.iters = passes;
            Ok(out)
        }
        None => Err(last_err.expect("at least one attempt")),
    }
}

/// Iterates from `st` until the relative change of `w̄` falls below
/// `tau_stop` or `t_max` passes have been spent.
///
/// With adaptive damping, a pass that increases the cost surrogate is
/// rejected: the previous state is restored, the damping factor is halved
/// (down to `damp_min`) and the pass is recomputed. Accepted passes grow the
/// factor by `damp_grow`, capped at 1.
pub fn run_from(
    mut st: BigAmpState,
    y: &Array2<C64>,
    p: &Priors,
    o: &BigAmpOptions,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<BigAmpOutput> {
    o.validate()?;
    check_dims(&st, y)?;
    let mut damp = o.damp;
    let mut cost = factor_stage(&mut st, y, p, o, damp);
    if !st.is_finite() {
        return Err(Error::Diverged { iter: st.iter });
    }
    let mut accepted = st.clone();
    let mut converged = false;
    let mut passes = 0;

    while passes < o.t_max {
        passes += 1;
        variable_stage(&mut st, y, p, o, damp);
        st.iter += 1;
        let new_cost = factor_stage(&mut st, y, p, o, damp);
        if !st.is_finite() || !new_cost.is_finite() {
            return Err(Error::Diverged { iter: passes });
        }

        let norm: f64 = accepted.w_bar.iter().map(|v| v.norm_sqr()).sum();
        let change: f64 = Zip::from(&accepted.w_bar)
            .and(&st.w_bar)
            .fold(0.0, |acc, a, b| acc + (a - b).norm_sqr());
        let residual = if norm > 0.0 { change / norm } else { change };

        let reject = o.damp_adapt && new_cost > cost && damp > o.damp_min;
        if let Some(t) = trace.as_deref_mut() {
            let dx = Zip::from(&accepted.x_hat)
                .and(&st.x_hat)
                .fold(0.0, |acc, a, b| acc + (a - b).norm());
            t.push(TraceRow {
                iter: passes,
                residual,
                damp,
                mean_dx: dx / st.x_hat.len().max(1) as f64,
                accepted: !reject,
            });
        }

        if reject {
            damp = (damp * 0.5).max(o.damp_min);
            st.clone_from(&accepted);
            continue;
        }
        if o.damp_adapt {
            damp = (damp * o.damp_grow).min(1.0);
        }
        cost = new_cost;
        accepted.clone_from(&st);
        if residual < o.tau_stop {
            converged = true;
            break;
        }
    }

    Ok(BigAmpOutput {
        h_hat: accepted.h_hat,
        v_h: accepted.v_h,
        x_hat: accepted.x_hat,
        v_x: accepted.v_x,
        iters: passes,
        converged,
        restarts: 0,
        fit: f64::NAN,
    })
}

/// `‖Y - H X‖_F`.
pub fn residual_norm(y: &Array2<C64>, h: &Array2<C64>, x: &Array2<C64>) -> f64 {
    let fit = h.dot(x);
    Zip::from(y)
        .and(&fit)
        .fold(0.0, |acc, a, b| acc + (a - b).norm_sqr())
        .sqrt()
}
