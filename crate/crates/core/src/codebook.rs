//! Constellation, Gray bit mapping and sparse codeword supports.

use std::f64::consts::PI;

use rand::seq::index;
use rand::Rng;

use crate::{Error, Result, C64};

/// Equal-energy M-PSK point set shared by every user.
///
/// Points are ordered by angle, starting on the positive real axis; point
/// `m` carries the Gray label `m ^ (m >> 1)` (MSB first).
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<C64>,
    labels: Vec<usize>,
    bits_per_symbol: usize,
    amplitude: f64,
}

impl Constellation {
    /// Builds `M`-PSK on the circle of radius `sqrt(power / gamma)`, so that a
    /// symbol which is nonzero with probability `gamma` has mean energy
    /// `power`.
    pub fn new(order: usize, power: f64, gamma: f64) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "constellation size {order} must be a power of two >= 2"
            )));
        }
        if !(power > 0.0) || !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need power > 0 and gamma in (0, 1], got {power}, {gamma}"
            )));
        }
        let amplitude = (power / gamma).sqrt();
        let points = (0..order)
            .map(|m| {
                let (s, c) = (2.0 * PI * m as f64 / order as f64).sin_cos();
                // exact zeros on the axes keep hard decisions bit-exact
                C64::new(amplitude * snap(c), amplitude * snap(s))
            })
            .collect();
        let labels = (0..order).map(|m| m ^ (m >> 1)).collect();
        Ok(Constellation {
            points,
            labels,
            bits_per_symbol: order.trailing_zeros() as usize,
            amplitude,
        })
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Gray label of point `index`.
    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    /// Index of the point carrying `label`.
    fn index_of_label(&self, label: usize) -> usize {
        // inverse Gray code
        let mut m = label;
        let mut shift = label >> 1;
        while shift != 0 {
            m ^= shift;
            shift >>= 1;
        }
        m
    }

    pub fn bits_to_symbol(&self, bits: &[u8]) -> Result<C64> {
        if bits.len() != self.bits_per_symbol {
            return Err(Error::InvalidArgument(format!(
                "expected {} bits, got {}",
                self.bits_per_symbol,
                bits.len()
            )));
        }
        let label = bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
        Ok(self.points[self.index_of_label(label)])
    }

    /// Index of the point equal to `s` (up to rounding), if any.
    pub fn index_of(&self, s: C64) -> Option<usize> {
        let tol = 1e-9 * self.amplitude;
        self.points.iter().position(|p| (p - s).norm() <= tol)
    }

    /// Inverse of [`bits_to_symbol`](Self::bits_to_symbol). `s` must already
    /// be hard-decided onto the constellation.
    pub fn symbol_to_bits(&self, s: C64) -> Result<Vec<u8>> {
        let idx = self
            .index_of(s)
            .ok_or(Error::NotAConstellationPoint { re: s.re, im: s.im })?;
        let label = self.labels[idx];
        Ok((0..self.bits_per_symbol)
            .rev()
            .map(|b| ((label >> b) & 1) as u8)
            .collect())
    }

    /// Nearest point index; ties go to the lowest index.
    pub fn nearest(&self, s: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (s - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Rows of `(re, im, gray label)` in point order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,label\n");
        for (p, l) in self.points.iter().zip(&self.labels) {
            out.push_str(&format!(
                "{},{},{:0width$b}\n",
                p.re,
                p.im,
                l,
                width = self.bits_per_symbol
            ));
        }
        out
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-12 {
        r
    } else {
        v
    }
}

/// Positions of the `d_f` nonzero entries of one codeword, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Support {
    indices: Vec<usize>,
}

impl Support {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Uniformly random `d_f`-subset of `0..k`.
pub fn draw_support<R: Rng + ?Sized>(k: usize, d_f: usize, rng: &mut R) -> Result<Support> {
    if d_f > k {
        return Err(Error::InvalidArgument(format!("d_f = {d_f} exceeds K = {k}")));
    }
    let mut indices = index::sample(rng, k, d_f).into_vec();
    indices.sort_unstable();
    Ok(Support { indices })
}
