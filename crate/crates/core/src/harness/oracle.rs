//! Exhaustive maximum-likelihood detection given the true channel.
//!
//! Only usable on tiny instances; it exists to cross-check the receiver.

use ndarray::{s, Array2};

use crate::codebook::Constellation;
use crate::model::SystemConfig;
use crate::txframe::FrameLayout;
use crate::{Error, Result, C64};

/// Upper bound on joint codeword combinations per block.
pub const MAX_CANDIDATES: f64 = 1e6;

/// All `K`-length codewords with exactly `d_f` nonzero constellation entries.
pub fn enumerate_codewords(k: usize, d_f: usize, c: &Constellation) -> Vec<Vec<C64>> {
    let mut supports = Vec::new();
    let mut current = Vec::with_capacity(d_f);
    fn choose(start: usize, k: usize, d_f: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d_f {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            choose(i + 1, k, d_f, cur, out);
            cur.pop();
        }
    }
    choose(0, k, d_f, &mut current, &mut supports);

    let m = c.order();
    let mut words = Vec::new();
    for support in supports {
        for code in 0..m.pow(d_f as u32) {
            let mut word = vec![C64::new(0.0, 0.0); k];
            let mut rest = code;
            for &idx in &support {
                word[idx] = c.points()[rest % m];
                rest /= m;
            }
            words.push(word);
        }
    }
    words
}

/// Per-block joint ML estimate of `X` (`N x L`) from `Y` and the true `H`.
///
/// The label column is searched over all-nonzero columns, the signature
/// block and every data block over all joint sparse codewords.
pub fn map_oracle(
    y: &Array2<C64>,
    h_true: &Array2<C64>,
    cfg: &SystemConfig,
    c: &Constellation,
) -> Result<Array2<C64>> {
    let users = cfg.users;
    let layout = FrameLayout::new(cfg);
    let words = enumerate_codewords(cfg.subcarriers, cfg.d_f, c);
    let combos = (words.len() as f64).powi(users as i32);
    if users > 4 || combos > MAX_CANDIDATES {
        return Err(Error::TooLarge(format!(
            "N = {users}, {combos} joint candidates per block"
        )));
    }
    if h_true.dim() != (y.nrows(), users) || y.ncols() != layout.len() {
        return Err(Error::Dimension(format!(
            "Y {:?}, H {:?}, frame length {}",
            y.dim(),
            h_true.dim(),
            layout.len()
        )));
    }

    let mut x = Array2::<C64>::zeros((users, layout.len()));

    // label column: every entry nonzero
    let label_words: Vec<Vec<C64>> = c.points().iter().map(|p| vec![*p]).collect();
    let col = y.slice(s![.., 0..1]).to_owned();
    let best = search_block(&col, h_true, &label_words);
    for (n, w) in best.iter().enumerate() {
        x[[n, 0]] = label_words[*w][0];
    }

    let mut blocks = vec![layout.signature_span()];
    blocks.extend((0..cfg.symbols).map(|i| layout.block(i)));
    for range in blocks {
        let yb = y.slice(s![.., range.clone()]).to_owned();
        let best = search_block(&yb, h_true, &words);
        for (n, w) in best.iter().enumerate() {
            for (k, v) in words[*w].iter().enumerate() {
                x[[n, range.start + k]] = *v;
            }
        }
    }
    Ok(x)
}

/// Index of each user's codeword minimizing `‖Y_b - H X_b‖²`.
fn search_block(yb: &Array2<C64>, h: &Array2<C64>, words: &[Vec<C64>]) -> Vec<usize> {
    let (j, width) = yb.dim();
    let users = h.ncols();
    // contrib[n][w] = h_n * word_w^T, flattened j-major
    let contrib: Vec<Vec<Vec<C64>>> = (0..users)
        .map(|n| {
            words
                .iter()
                .map(|w| {
                    let mut m = vec![C64::new(0.0, 0.0); j * width];
                    for jj in 0..j {
                        for (kk, v) in w.iter().enumerate() {
                            m[jj * width + kk] = h[[jj, n]] * v;
                        }
                    }
                    m
                })
                .collect()
        })
        .collect();
    let target: Vec<C64> = yb.iter().copied().collect();

    let mut best = (f64::INFINITY, vec![0; users]);
    let mut choice = vec![0usize; users];
    let mut partial = vec![vec![C64::new(0.0, 0.0); j * width]; users + 1];
    recurse(0, &contrib, &target, &mut choice, &mut partial, &mut best);
    best.1
}

fn recurse(
    n: usize,
    contrib: &[Vec<Vec<C64>>],
    target: &[C64],
    choice: &mut Vec<usize>,
    partial: &mut Vec<Vec<C64>>,
    best: &mut (f64, Vec<usize>),
) {
    if n == contrib.len() {
        let err: f64 = partial[n]
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        if err < best.0 {
            *best = (err, choice.clone());
        }
        return;
    }
    for (w, m) in contrib[n].iter().enumerate() {
        let (head, tail) = partial.split_at_mut(n + 1);
        for ((dst, a), b) in tail[0].iter_mut().zip(&head[n]).zip(m) {
            *dst = a + b;
        }
        choice[n] = w;
        recurse(n + 1, contrib, target, choice, partial, best);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::channel::{apply_channel, draw_channel};
    use crate::txframe::FrameBuilder;

    #[test]
    fn candidate_count() {
        let c = Constellation::new(2, 1.0, 0.5).unwrap();
        assert_eq!(enumerate_codewords(2, 1, &c).len(), 4);
        let q = Constellation::new(4, 1.0, 0.5).unwrap();
        assert_eq!(enumerate_codewords(4, 2, &q).len(), 96);
    }

    fn tiny_cfg() -> SystemConfig {
        // K = 4, d_f = 2, N = 3 requires d_v = 3 * 2 / 4, not an integer;
        // build the struct directly.
        SystemConfig {
            subcarriers: 4,
            users: 3,
            antennas: 3,
            symbols: 2,
            d_f: 2,
            d_v: 1,
            order: 4,
            power: 1.0,
            sigma2: 0.0,
            beta: vec![1.0; 3],
            beta_bar: 1.0,
            support_mode: Default::default(),
        }
    }

    #[test]
    fn noiseless_recovers_x() {
        let cfg = tiny_cfg();
        let c = Constellation::new(4, 1.0, cfg.gamma()).unwrap();
        let fb = FrameBuilder::new(&cfg, &c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..3 {
            let payloads: Vec<Vec<u8>> = (0..cfg.users)
                .map(|_| (0..cfg.payload_bits()).map(|_| rng.random_range(0..2)).collect())
                .collect();
            let x = fb.build_signal_matrix(&payloads, &mut rng).unwrap();
            let ch = draw_channel(&cfg, &mut rng);
            let y = apply_channel(&ch, &x, 0.0, &mut rng).unwrap();
            let est = map_oracle(&y.y, &ch.h, &cfg, &c).unwrap();
            assert_eq!(est, x.entries);
        }
    }

    #[test]
    fn rejects_large_instances() {
        let cfg = SystemConfig::from_sparsity(2, 3, 0.25, 1).unwrap();
        let c = Constellation::new(4, 1.0, 0.25).unwrap();
        let y = Array2::zeros((cfg.antennas, cfg.frame_len()));
        let h = Array2::zeros((cfg.antennas, cfg.users));
        assert!(matches!(map_oracle(&y, &h, &cfg, &c), Err(Error::TooLarge(_))));
    }
}
