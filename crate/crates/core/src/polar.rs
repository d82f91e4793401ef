//! Binary polar codes in natural (Kronecker) order: transform, encoding
//! with a frozen set, and successive-cancellation decoding.
//!
//! Bits are `u8` values in {0, 1}. LLRs use the convention
//! `ln(P[bit = 0] / P[bit = 1])`. All indices are 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitude bound applied to channel LLRs before decoding.
pub const LLR_CLAMP: f64 = 40.0;

/// A single polar code of length `2^n_exp`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolarCodeSpec {
    n_exp: u32,
    info_set: Vec<usize>,
    /// Value of every position; only frozen positions are read.
    frozen_values: Vec<u8>,
    info_mask: Vec<bool>,
}

impl PolarCodeSpec {
    /// Code of length `2^n_exp` carrying information on `info_set`
    /// (any order, no duplicates); all frozen bits are zero.
    pub fn new(n_exp: u32, info_set: impl IntoIterator<Item = usize>) -> Result<Self> {
        if n_exp == 0 || n_exp > 24 {
            return Err(Error::invalid(format!("code exponent {n_exp} outside 1..=24")));
        }
        let len = 1usize << n_exp;
        let mut info_set: Vec<usize> = info_set.into_iter().collect();
        info_set.sort_unstable();
        let mut info_mask = vec![false; len];
        for &i in &info_set {
            if i >= len {
                return Err(Error::invalid(format!("info index {i} out of range for N = {len}")));
            }
            if info_mask[i] {
                return Err(Error::invalid(format!("duplicate info index {i}")));
            }
            info_mask[i] = true;
        }
        Ok(Self {
            n_exp,
            info_set,
            frozen_values: vec![0; len],
            info_mask,
        })
    }

    /// Overrides frozen bit values; `values` has length N and entries at
    /// information positions are ignored.
    pub fn with_frozen_values(mut self, values: &[u8]) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::invalid(format!(
                "frozen value vector has length {}, expected {}",
                values.len(),
                self.len()
            )));
        }
        check_bits(values)?;
        self.frozen_values = values
            .iter()
            .zip(&self.info_mask)
            .map(|(&v, &info)| if info { 0 } else { v })
            .collect();
        Ok(self)
    }

    pub fn n_exp(&self) -> u32 {
        self.n_exp
    }

    pub fn len(&self) -> usize {
        1 << self.n_exp
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of information bits.
    pub fn k(&self) -> usize {
        self.info_set.len()
    }

    pub fn info_set(&self) -> &[usize] {
        &self.info_set
    }

    pub fn is_info(&self, index: usize) -> bool {
        self.info_mask[index]
    }

    pub fn frozen_values(&self) -> &[u8] {
        &self.frozen_values
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.len() as f64
    }
}

fn check_bits(bits: &[u8]) -> Result<()> {
    match bits.iter().position(|&b| b > 1) {
        Some(p) => Err(Error::invalid(format!("non-binary value {} at position {p}", bits[p]))),
        None => Ok(()),
    }
}

/// In-place `x = u · F^{⊗n}` over GF(2) with `F = [[1,0],[1,1]]`.
pub fn polar_transform_in_place(bits: &mut [u8]) -> Result<()> {
    if !bits.len().is_power_of_two() {
        return Err(Error::invalid(format!(
            "transform length {} is not a power of two",
            bits.len()
        )));
    }
    let mut half = bits.len() / 2;
    while half >= 1 {
        for block in bits.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter()) {
                *a ^= *b;
            }
        }
        half /= 2;
    }
    Ok(())
}

pub fn polar_transform(u: &[u8]) -> Result<Vec<u8>> {
    let mut x = u.to_vec();
    polar_transform_in_place(&mut x)?;
    Ok(x)
}

/// Places `message` on the information set, frozen values elsewhere, and
/// transforms.
pub fn encode(message: &[u8], spec: &PolarCodeSpec) -> Result<Vec<u8>> {
    if message.len() != spec.k() {
        return Err(Error::invalid(format!(
            "message has {} bits, code carries {}",
            message.len(),
            spec.k()
        )));
    }
    check_bits(message)?;
    let mut u = spec.frozen_values.clone();
    for (&pos, &bit) in spec.info_set.iter().zip(message) {
        u[pos] = bit;
    }
    polar_transform_in_place(&mut u)?;
    Ok(u)
}

/// Check-node update rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckNode {
    /// `2·atanh(tanh(a/2)·tanh(b/2))`.
    #[default]
    Exact,
    MinSum,
}

/// Exact box-plus `2·atanh(tanh(a/2)·tanh(b/2))`.
///
/// With `e_x = e^{-|x|}` and `p_x = 1 - e_x` the magnitude equals
/// `ln(1 + p_a·p_b / (e_a + e_b))`. Taking `p_x` from `expm1` below `ln 2`
/// keeps tiny inputs exact; past the point where `e_a + e_b` could
/// underflow the min-plus-correction form takes over.
#[inline]
pub fn boxplus(a: f64, b: f64) -> f64 {
    let (x, y) = (a.abs(), b.abs());
    let m = x.min(y);
    let mag = if m > 30.0 {
        m + (-(x + y)).exp().ln_1p() - (-(x - y).abs()).exp().ln_1p()
    } else {
        let (px, ex) = split_exp(x);
        let (py, ey) = split_exp(y);
        (px * py / (ex + ey)).ln_1p()
    };
    if (a < 0.0) ^ (b < 0.0) {
        -mag
    } else {
        mag
    }
}

/// `(1 - e^{-x}, e^{-x})` for `x ≥ 0`, each to full relative precision.
#[inline]
fn split_exp(x: f64) -> (f64, f64) {
    if x < std::f64::consts::LN_2 {
        let p = -(-x).exp_m1();
        (p, 1.0 - p)
    } else {
        let e = (-x).exp();
        (1.0 - e, e)
    }
}

#[inline]
fn min_sum(a: f64, b: f64) -> f64 {
    let m = a.abs().min(b.abs());
    if (a < 0.0) ^ (b < 0.0) {
        -m
    } else {
        m
    }
}

/// Output of [`sc_decode`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScOutput {
    pub message: Vec<u8>,
    /// Re-encoding of the decided input vector.
    pub codeword: Vec<u8>,
}

/// Successive-cancellation decoding with the exact check-node rule.
pub fn sc_decode(llr: &[f64], spec: &PolarCodeSpec) -> Result<ScOutput> {
    sc_decode_with(llr, spec, CheckNode::Exact)
}

pub fn sc_decode_with(llr: &[f64], spec: &PolarCodeSpec, rule: CheckNode) -> Result<ScOutput> {
    let n = spec.len();
    if llr.len() != n {
        return Err(Error::invalid(format!(
            "LLR vector has length {}, code length is {n}",
            llr.len()
        )));
    }
    let channel: Vec<f64> = llr.iter().map(|&l| clamp_llr(l)).collect();
    let mut u = vec![0u8; n];
    let mut x = vec![0u8; n];
    let mut scratch = vec![0.0; n];
    let mut node = ScNode { spec, rule };
    node.decode(&channel, 0, &mut u, &mut x, &mut scratch);
    let message = spec.info_set.iter().map(|&i| u[i]).collect();
    Ok(ScOutput { message, codeword: x })
}

/// Clamps to ±[`LLR_CLAMP`]; NaN maps to 0.
#[inline]
pub fn clamp_llr(l: f64) -> f64 {
    if l.is_nan() {
        0.0
    } else {
        l.clamp(-LLR_CLAMP, LLR_CLAMP)
    }
}

struct ScNode<'a> {
    spec: &'a PolarCodeSpec,
    rule: CheckNode,
}

impl ScNode<'_> {
    /// Decodes the sub-block of input positions `offset..offset+llr.len()`.
    /// Writes decisions into `u` and the sub-block's re-encoded bits into `x`.
    fn decode(&mut self, llr: &[f64], offset: usize, u: &mut [u8], x: &mut [u8], scratch: &mut [f64]) {
        let n = llr.len();
        if n == 1 {
            let bit = if self.spec.info_mask[offset] {
                u8::from(llr[0] < 0.0)
            } else {
                self.spec.frozen_values[offset]
            };
            u[0] = bit;
            x[0] = bit;
            return;
        }
        let h = n / 2;
        let (child, rest) = scratch.split_at_mut(h);
        let (l_lo, l_hi) = llr.split_at(h);
        match self.rule {
            CheckNode::Exact => {
                for ((c, &a), &b) in child.iter_mut().zip(l_lo).zip(l_hi) {
                    *c = boxplus(a, b);
                }
            }
            CheckNode::MinSum => {
                for ((c, &a), &b) in child.iter_mut().zip(l_lo).zip(l_hi) {
                    *c = min_sum(a, b);
                }
            }
        }
        let (u_lo, u_hi) = u.split_at_mut(h);
        let (x_lo, x_hi) = x.split_at_mut(h);
        self.decode(child, offset, u_lo, x_lo, rest);
        for (j, c) in child.iter_mut().enumerate() {
            *c = if x_lo[j] == 0 {
                l_hi[j] + l_lo[j]
            } else {
                l_hi[j] - l_lo[j]
            };
        }
        self.decode(child, offset + h, u_hi, x_hi, rest);
        for (a, b) in x_lo.iter_mut().zip(x_hi.iter()) {
            *a ^= *b;
        }
    }
}
