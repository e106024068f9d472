//! From posterior symbol means to identified users and bits.
//!
//! The factorization returns `X` only up to a per-row complex gain and a row
//! permutation. The detector
//!
//! 1. zeroes every soft estimate with magnitude below `tau`,
//! 2. rescales each row so its label entry equals the known `x0`,
//! 3. matches rows to users by comparing the signature span against every
//!    user's signature (optimal assignment),
//! 4. maps surviving entries to the nearest constellation point and demaps
//!    each codeword's nonzero entries.

use ndarray::Array2;

use crate::assign::min_cost_assignment;
use crate::codebook::Constellation;
use crate::txframe::{build_symbol_label, FrameLayout, UserSignature};
use crate::{Error, Result, C64};

/// Which entry of a thresholded row is taken as the received label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseReference {
    /// Column 0 when it survives thresholding, else the first nonzero entry.
    #[default]
    Label,
    /// Always the first nonzero entry.
    FirstNonzero,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DetectorOptions {
    /// Magnitude threshold separating zero symbols from constellation points.
    pub tau: f64,
    pub phase_reference: PhaseReference,
}

impl DetectorOptions {
    /// Half the constellation amplitude.
    pub fn for_constellation(c: &Constellation) -> Self {
        DetectorOptions {
            tau: 0.5 * c.amplitude(),
            phase_reference: PhaseReference::Label,
        }
    }

    pub fn validate(&self, c: &Constellation) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < c.amplitude()) {
            return Err(Error::Config(format!(
                "tau = {} must lie in (0, amplitude = {})",
                self.tau,
                c.amplitude()
            )));
        }
        Ok(())
    }
}

/// Keeps entries with magnitude `>= tau`, zeroes the rest.
pub fn threshold_row(row: &[C64], tau: f64) -> Vec<C64> {
    row.iter()
        .map(|&v| if v.norm() >= tau { v } else { C64::new(0.0, 0.0) })
        .collect()
}

/// Scales `row` so that its first nonzero entry becomes `x0`. Returns the
/// gain and the corrected row.
pub fn phase_correct(row: &[C64], x0: C64) -> Result<(C64, Vec<C64>)> {
    let first = row
        .iter()
        .position(|v| *v != C64::new(0.0, 0.0))
        .ok_or(Error::Unidentifiable)?;
    Ok(phase_correct_at(row, first, x0))
}

fn phase_correct_at(row: &[C64], reference: usize, x0: C64) -> (C64, Vec<C64>) {
    let phi = x0 / row[reference];
    let mut out: Vec<C64> = row.iter().map(|v| v * phi).collect();
    // exact by construction, not by rounding
    out[reference] = x0;
    (phi, out)
}

/// Result of matching recovered rows to users.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `user_of_row[r]`: user assigned to recovered row `r`.
    pub user_of_row: Vec<Option<usize>>,
    /// `row_of_user[u]`: recovered row assigned to user `u`.
    pub row_of_user: Vec<Option<usize>>,
    /// Squared signature distance of each user's assigned row.
    pub cost: Vec<f64>,
    /// Per user: matched with cost below a quarter of the signature energy.
    pub id_success: Vec<bool>,
}

/// Optimal assignment of phase-corrected rows to user signatures.
///
/// `rows[r]` is `None` for rows that could not be phase-corrected; such rows
/// are never reported as matched.
pub fn match_users(
    rows: &[Option<Vec<C64>>],
    signatures: &[UserSignature],
    layout: &FrameLayout,
) -> Assignment {
    let n = rows.len().max(signatures.len());
    let span = layout.signature_span();
    // Larger than any real distance so degenerate rows only take leftovers.
    let energy_max = signatures
        .iter()
        .map(|s| s.symbols.iter().map(|v| v.norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut cost = vec![vec![0.0; n]; n];
    let mut degenerate_cost = 1.0;
    for (r, row) in rows.iter().enumerate() {
        if let Some(row) = row {
            for (u, sig) in signatures.iter().enumerate() {
                let d = sig.distance_sqr(&row[span.clone()]);
                cost[r][u] = d;
                degenerate_cost = f64::max(degenerate_cost, d);
            }
        }
    }
    let degenerate_cost = 4.0 * (degenerate_cost + energy_max);
    for r in 0..n {
        let usable = rows.get(r).map(|v| v.is_some()).unwrap_or(false);
        for u in 0..n {
            if !usable || u >= signatures.len() {
                cost[r][u] = degenerate_cost;
            }
        }
    }
    let solved = min_cost_assignment(&cost);

    let mut user_of_row = vec![None; rows.len()];
    let mut row_of_user = vec![None; signatures.len()];
    let mut user_cost = vec![f64::INFINITY; signatures.len()];
    let mut id_success = vec![false; signatures.len()];
    for (r, &u) in solved.iter().enumerate() {
        if r >= rows.len() || u >= signatures.len() || rows[r].is_none() {
            continue;
        }
        user_of_row[r] = Some(u);
        row_of_user[u] = Some(r);
        user_cost[u] = cost[r][u];
        let energy: f64 = signatures[u].symbols.iter().map(|v| v.norm_sqr()).sum();
        id_success[u] = cost[r][u] < energy / 4.0;
    }
    Assignment {
        user_of_row,
        row_of_user,
        cost: user_cost,
        id_success,
    }
}

/// Nearest constellation point for nonzero entries; zeros stay zero.
pub fn hard_decision(row: &[C64], c: &Constellation) -> Vec<C64> {
    row.iter()
        .map(|&v| {
            if v == C64::new(0.0, 0.0) {
                v
            } else {
                c.points()[c.nearest(v)]
            }
        })
        .collect()
}

/// Bits of one user's data span.
#[derive(Debug, Clone, PartialEq)]
pub struct Demodulated {
    pub bits: Vec<u8>,
    /// Codewords whose nonzero count differed from `d_f`.
    pub flagged_blocks: usize,
}

/// Demaps every `K`-block of `symbols` (hard decisions over the data span).
///
/// A block with exactly `d_f` nonzeros is demapped in ascending index order.
/// Any other block falls back to the `d_f` entries of `soft` (the
/// phase-corrected, unthresholded estimates) with the largest magnitude.
pub fn demodulate(
    symbols: &[C64],
    soft: &[C64],
    subcarriers: usize,
    d_f: usize,
    c: &Constellation,
) -> Result<Demodulated> {
    if symbols.len() != soft.len() || subcarriers == 0 || symbols.len() % subcarriers != 0 {
        return Err(Error::Dimension(format!(
            "{} symbols / {} soft values do not form {}-blocks",
            symbols.len(),
            soft.len(),
            subcarriers
        )));
    }
    let mut bits = Vec::with_capacity(symbols.len() / subcarriers * d_f * c.bits_per_symbol());
    let mut flagged_blocks = 0;
    for (block, soft_block) in symbols.chunks(subcarriers).zip(soft.chunks(subcarriers)) {
        let nonzero: Vec<usize> = (0..subcarriers)
            .filter(|&k| block[k] != C64::new(0.0, 0.0))
            .collect();
        if nonzero.len() == d_f {
            for k in nonzero {
                bits.extend(c.symbol_to_bits(block[k])?);
            }
        } else {
            flagged_blocks += 1;
            let mut order: Vec<usize> = (0..subcarriers).collect();
            order.sort_by(|&a, &b| soft_block[b].norm().total_cmp(&soft_block[a].norm()));
            let mut picked = order[..d_f.min(subcarriers)].to_vec();
            picked.sort_unstable();
            for k in picked {
                let point = c.points()[c.nearest(soft_block[k])];
                bits.extend(c.symbol_to_bits(point)?);
            }
        }
    }
    Ok(Demodulated {
        bits,
        flagged_blocks,
    })
}

/// Full detector output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub assignment: Assignment,
    /// Complex gain applied to each user's row.
    pub phase: Vec<Option<C64>>,
    /// Hard-decided data span per user.
    pub symbols: Vec<Option<Vec<C64>>>,
    pub bits: Vec<Option<Vec<u8>>>,
    pub flagged_blocks: Vec<usize>,
}

impl DetectionResult {
    pub fn id_success(&self) -> &[bool] {
        &self.assignment.id_success
    }
}

/// Runs the whole detection chain on the posterior means `x_hat` (`N x L`,
/// rows in arbitrary order and scale).
pub fn detect(
    x_hat: &Array2<C64>,
    signatures: &[UserSignature],
    layout: &FrameLayout,
    c: &Constellation,
    d_f: usize,
    opts: &DetectorOptions,
) -> Result<DetectionResult> {
    opts.validate(c)?;
    if x_hat.ncols() != layout.len() {
        return Err(Error::Dimension(format!(
            "estimate has {} columns, frame has {}",
            x_hat.ncols(),
            layout.len()
        )));
    }
    let x0 = build_symbol_label(c);
    let mut gains = Vec::with_capacity(x_hat.nrows());
    let mut corrected = Vec::with_capacity(x_hat.nrows());
    for row in x_hat.rows() {
        let soft = row.to_vec();
        let kept = threshold_row(&soft, opts.tau);
        let reference = match opts.phase_reference {
            PhaseReference::Label if kept[layout.label_index()] != C64::new(0.0, 0.0) => {
                Some(layout.label_index())
            }
            _ => kept.iter().position(|v| *v != C64::new(0.0, 0.0)),
        };
        match reference {
            Some(idx) => {
                let (phi, row_c) = phase_correct_at(&kept, idx, x0);
                gains.push(Some(phi));
                let soft_c: Vec<C64> = soft.iter().map(|v| v * phi).collect();
                corrected.push(Some((row_c, soft_c)));
            }
            None => {
                gains.push(None);
                corrected.push(None);
            }
        }
    }

    let rows: Vec<Option<Vec<C64>>> = corrected
        .iter()
        .map(|r| r.as_ref().map(|(row, _)| row.clone()))
        .collect();
    let assignment = match_users(&rows, signatures, layout);

    let users = signatures.len();
    let mut phase = vec![None; users];
    let mut symbols = vec![None; users];
    let mut bits = vec![None; users];
    let mut flagged_blocks = vec![0; users];
    let span = layout.data_span();
    for u in 0..users {
        let Some(r) = assignment.row_of_user[u] else {
            continue;
        };
        let Some((row, soft)) = &corrected[r] else {
            continue;
        };
        let hard = hard_decision(&row[span.clone()], c);
        let demod = demodulate(&hard, &soft[span.clone()], layout.subcarriers, d_f, c)?;
        phase[u] = gains[r];
        symbols[u] = Some(hard);
        bits[u] = Some(demod.bits);
        flagged_blocks[u] = demod.flagged_blocks;
    }

    Ok(DetectionResult {
        assignment,
        phase,
        symbols,
        bits,
        flagged_blocks,
    })
}
