//! Starting points for the channel and symbol estimates.

use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use super::Priors;
use crate::channel::complex_gaussian;
use crate::C64;

/// How `ĥ(1)` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelInit {
    /// I.i.d. draws from `CN(0, beta_bar)`.
    Prior,
    /// Directions of received columns carrying a single user, see
    /// [`data_dictionary`]; columns not found this way fall back to prior
    /// draws.
    #[default]
    Data,
}

/// How `x̂(1)` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolInit {
    /// Prior mean plus a random offset of magnitude `init_jitter * amplitude`.
    Jitter,
    /// I.i.d. draws from the Bernoulli-constellation prior.
    #[default]
    PriorDraw,
}

impl std::str::FromStr for ChannelInit {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "prior" => Ok(ChannelInit::Prior),
            "data" => Ok(ChannelInit::Data),
            other => Err(crate::Error::Parse(format!("unknown channel init `{other}`"))),
        }
    }
}

impl std::str::FromStr for SymbolInit {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "jitter" => Ok(SymbolInit::Jitter),
            "prior_draw" => Ok(SymbolInit::PriorDraw),
            other => Err(crate::Error::Parse(format!("unknown symbol init `{other}`"))),
        }
    }
}

/// Columns used by [`data_dictionary`] at most.
pub const MAX_INIT_COLUMNS: usize = 3000;

/// Dictionary estimate from the columns of `y` that carry one user only.
///
/// Such columns are `h_n x` plus noise, so their directions cluster
/// tightly around `h_n` up to phase. Clusters are taken greedily by size;
/// each gives the principal direction of its members, scaled so that the
/// constellation amplitude reproduces the members' mean energy. Returns the
/// `J x n_users` estimate and how many columns were found; the remaining
/// columns are drawn from the prior.
pub fn data_dictionary<R: Rng + ?Sized>(
    y: &Array2<C64>,
    n_users: usize,
    p: &Priors,
    rng: &mut R,
) -> (Array2<C64>, usize) {
    let (j, l) = y.dim();
    let amplitude = p.constellation.amplitude();
    let energy = |c: usize| y.column(c).iter().map(|v| v.norm_sqr()).sum::<f64>();

    let mut cols: Vec<usize> = (0..l).filter(|&c| energy(c) > 0.0).collect();
    if cols.len() > MAX_INIT_COLUMNS {
        for i in 0..MAX_INIT_COLUMNS {
            let k = rng.random_range(i..cols.len());
            cols.swap(i, k);
        }
        cols.truncate(MAX_INIT_COLUMNS);
    }
    let m = cols.len();
    let unit: Vec<Vec<C64>> = cols
        .iter()
        .map(|&c| {
            let norm = energy(c).sqrt();
            y.column(c).iter().map(|v| v / norm).collect()
        })
        .collect();
    let overlap = |a: usize, b: usize| -> f64 {
        unit[a]
            .iter()
            .zip(&unit[b])
            .map(|(u, v)| u.conj() * v)
            .sum::<C64>()
            .norm_sqr()
    };

    // noise moves a single-user direction by about sigma2 / (beta_bar A²)
    let spread = p.sigma2 / (p.beta_bar * amplitude * amplitude);
    let threshold = (1.0 - 3.0 * spread).clamp(0.7, 0.95);
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); m];
    for a in 0..m {
        neighbours[a].push(a);
        for b in a + 1..m {
            if overlap(a, b) > threshold {
                neighbours[a].push(b);
                neighbours[b].push(a);
            }
        }
    }

    let mut h = Array2::from_shape_simple_fn((j, n_users), || complex_gaussian(p.beta_bar, rng));
    let mut used = vec![false; m];
    let mut found = 0;
    while found < n_users {
        let Some(centre) = (0..m).filter(|&a| !used[a]).max_by_key(|&a| {
            let size = neighbours[a].iter().filter(|&&b| !used[b]).count();
            (size, std::cmp::Reverse(a))
        }) else {
            break;
        };
        let members: Vec<usize> = neighbours[centre].iter().copied().filter(|&b| !used[b]).collect();
        if members.len() < 2 && found > 0 {
            break;
        }

        let mut dir = unit[centre].clone();
        for _ in 0..20 {
            let mut next = vec![C64::new(0.0, 0.0); j];
            for &b in &members {
                let col = y.column(cols[b]);
                let ip: C64 = col.iter().zip(&dir).map(|(u, v)| u.conj() * v).sum();
                for (n, u) in next.iter_mut().zip(col.iter()) {
                    *n += u * ip;
                }
            }
            let norm = next.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            dir = next.into_iter().map(|v| v / norm).collect();
        }
        let mean_energy =
            members.iter().map(|&b| energy(cols[b])).sum::<f64>() / members.len() as f64;
        let scale = (mean_energy - j as f64 * p.sigma2).max(0.0).sqrt() / amplitude;
        for (k, v) in dir.iter().enumerate() {
            h[[k, found]] = v * scale;
        }
        found += 1;

        for a in 0..m {
            if !used[a] && overlap(centre, a) > 0.5 {
                used[a] = true;
            }
        }
        used[centre] = true;
    }
    (h, found)
}

/// `x̂(1)` under `mode`.
pub fn initial_symbols<R: Rng + ?Sized>(
    shape: (usize, usize),
    mode: SymbolInit,
    jitter: f64,
    p: &Priors,
    rng: &mut R,
) -> Array2<C64> {
    let points = p.constellation.points();
    match mode {
        SymbolInit::Jitter => {
            let mean = p.symbol_mean();
            let radius = jitter * p.constellation.amplitude();
            Array2::from_shape_simple_fn(shape, || {
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                mean + C64::from_polar(radius, phase)
            })
        }
        SymbolInit::PriorDraw => Array2::from_shape_simple_fn(shape, || {
            if rng.random::<f64>() < p.gamma {
                points[rng.random_range(0..points.len())]
            } else {
                C64::new(0.0, 0.0)
            }
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::Constellation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn priors(gamma: f64, sigma2: f64) -> Priors {
        Priors::new(gamma, Constellation::new(4, 1.0, gamma).unwrap(), 1.0, sigma2)
    }

    #[test]
    fn recovers_dictionary_from_single_user_columns() {
        let p = priors(0.25, 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = Array2::from_shape_simple_fn((6, 3), || complex_gaussian(1.0, &mut rng));
        let pts = p.constellation.points();
        // 3 users, 40 columns each active alone
        let mut y = Array2::<C64>::zeros((6, 120));
        for c in 0..120 {
            let n = c % 3;
            let x = pts[rng.random_range(0..4)];
            for k in 0..6 {
                y[[k, c]] = h[[k, n]] * x + complex_gaussian(1e-4, &mut rng);
            }
        }
        let (est, found) = data_dictionary(&y, 3, &p, &mut rng);
        assert_eq!(found, 3);
        for n in 0..3 {
            let truth = h.column(n);
            let best = (0..3)
                .map(|m| {
                    let e = est.column(m);
                    let ip: C64 = truth.iter().zip(e.iter()).map(|(a, b)| a.conj() * b).sum();
                    let nt = truth.iter().map(|v| v.norm_sqr()).sum::<f64>();
                    let ne = e.iter().map(|v| v.norm_sqr()).sum::<f64>();
                    (ip.norm() / (nt * ne).sqrt(), (ne / nt).sqrt())
                })
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            assert!(best.0 > 0.999, "{best:?}");
            assert!((best.1 - 1.0).abs() < 0.01, "{best:?}");
        }
    }

    #[test]
    fn falls_back_to_prior_draws() {
        let p = priors(0.25, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (h, found) = data_dictionary(&Array2::zeros((4, 10)), 4, &p, &mut rng);
        assert_eq!(found, 0);
        assert!(h.iter().all(|v| v.norm() > 0.0));
    }

    #[test]
    fn prior_draw_symbols_follow_the_prior() {
        let p = priors(0.2, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = initial_symbols((50, 1000), SymbolInit::PriorDraw, 0.01, &p, &mut rng);
        let nz = x.iter().filter(|v| v.norm() > 0.0).count() as f64 / x.len() as f64;
        assert!((nz - 0.2).abs() < 0.01);
        assert!(x
            .iter()
            .filter(|v| v.norm() > 0.0)
            .all(|v| p.constellation.index_of(*v).is_some()));
        let j = initial_symbols((2, 3), SymbolInit::Jitter, 0.01, &p, &mut rng);
        let a = p.constellation.amplitude();
        assert!(j.iter().all(|v| (v.norm() - 0.01 * a).abs() < 1e-12));
    }
}
