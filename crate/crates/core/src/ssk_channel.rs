//! Space-shift keying over an i.i.d. Rayleigh MIMO channel.
//!
//! A label `[b^{m-1} … b^1 b^0]` selects transmit antenna
//! `k = 1 + Σ b^j 2^j`; the receiver sees `y = h_k + n`. Level `i`
//! (1-based) of a multilevel scheme carries bit `b^{i-1}`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polar::LLR_CLAMP;
use crate::rng::complex_normal;

/// How an `E_s/N_0` value in dB maps to the complex noise variance per
/// receive antenna (with unit-variance channel coefficients).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrConvention {
    /// Noise variance `N_0 / 2` per complex sample. This is the axis on
    /// which the published 16-SSK design points (3.29 dB, -5.61 dB, ...)
    /// land at their stated spectral efficiencies.
    #[default]
    TwoSided,
    /// Noise variance `N_0` per complex sample.
    UnitEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SskConfig {
    /// Transmit antennas, a power of two.
    pub nt: usize,
    /// Receive antennas.
    pub nr: usize,
    pub es_n0_db: f64,
    #[serde(default)]
    pub convention: SnrConvention,
    /// Forces the noise variance (e.g. 0 for noiseless debugging).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_override: Option<f64>,
}

impl SskConfig {
    pub fn new(nt: usize, nr: usize, es_n0_db: f64) -> Result<Self> {
        if nt < 2 || !nt.is_power_of_two() || nt > 1 << 16 {
            return Err(Error::invalid(format!(
                "N_T = {nt} must be a power of two in 2..=65536"
            )));
        }
        if nr == 0 {
            return Err(Error::invalid("N_R must be at least 1"));
        }
        if !es_n0_db.is_finite() {
            return Err(Error::invalid("E_s/N_0 must be finite"));
        }
        Ok(Self {
            nt,
            nr,
            es_n0_db,
            convention: SnrConvention::default(),
            noise_override: None,
        })
    }

    pub fn with_convention(mut self, convention: SnrConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_snr(mut self, es_n0_db: f64) -> Self {
        self.es_n0_db = es_n0_db;
        self
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_override = Some(0.0);
        self
    }

    /// Bits per SSK symbol, `log2(N_T)`.
    pub fn bits_per_symbol(&self) -> usize {
        self.nt.trailing_zeros() as usize
    }

    /// Complex noise variance per receive antenna (the `N_0` of the
    /// likelihood `exp(-‖y - h_k‖² / N_0)`).
    pub fn noise_variance(&self) -> f64 {
        if let Some(v) = self.noise_override {
            return v;
        }
        let lin = 10f64.powf(-self.es_n0_db / 10.0);
        match self.convention {
            SnrConvention::TwoSided => 0.5 * lin,
            SnrConvention::UnitEnergy => lin,
        }
    }
}

/// 1-based transmit antenna number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Antenna(usize);

impl Antenna {
    pub fn new(number: usize, nt: usize) -> Result<Self> {
        if number == 0 || number > nt {
            return Err(Error::invalid(format!("antenna {number} outside 1..={nt}")));
        }
        Ok(Self(number))
    }

    pub fn from_label(label: usize) -> Self {
        Self(label + 1)
    }

    pub fn number(self) -> usize {
        self.0
    }

    /// Decimal value of the bit label, `number - 1`.
    pub fn label(self) -> usize {
        self.0 - 1
    }
}

/// `M`: bits `[b^0, b^1, …, b^{m-1}]` (least significant first) to antenna.
pub fn map_bits(bits: &[u8], bits_per_symbol: usize) -> Result<Antenna> {
    if bits.len() != bits_per_symbol {
        return Err(Error::invalid(format!(
            "label has {} bits, expected {bits_per_symbol}",
            bits.len()
        )));
    }
    let mut label = 0usize;
    for (j, &b) in bits.iter().enumerate() {
        if b > 1 {
            return Err(Error::invalid(format!("non-binary label bit {b}")));
        }
        label |= (b as usize) << j;
    }
    Ok(Antenna::from_label(label))
}

/// `M^{-1}`: antenna to bits `[b^0, …, b^{m-1}]`.
pub fn unmap(antenna: Antenna, bits_per_symbol: usize) -> Vec<u8> {
    (0..bits_per_symbol)
        .map(|j| ((antenna.label() >> j) & 1) as u8)
        .collect()
}

/// `N_R × N_T` channel matrix, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    nr: usize,
    nt: usize,
    data: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn from_columns(nr: usize, nt: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != nr * nt {
            return Err(Error::invalid(format!(
                "channel data has {} entries, expected {nr}×{nt}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("channel entries must be finite"));
        }
        Ok(Self { nr, nt, data })
    }

    /// i.i.d. CN(0, 1) entries.
    pub fn draw<R: Rng + ?Sized>(nr: usize, nt: usize, rng: &mut R) -> Self {
        let data = (0..nr * nt).map(|_| complex_normal(rng, 1.0)).collect();
        Self { nr, nt, data }
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    /// Column `h_k` for the antenna with decimal label `label`.
    #[inline]
    pub fn column(&self, label: usize) -> &[Complex64] {
        &self.data[label * self.nr..(label + 1) * self.nr]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.nr)
    }
}

/// Received vector of `N_R` complex samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedVector(pub Vec<Complex64>);

/// `y = h_k + n` with `n ~ CN(0, n0 I)`.
pub fn transmit<R: Rng + ?Sized>(
    antenna: Antenna,
    channel: &ChannelRealization,
    n0: f64,
    rng: &mut R,
) -> Result<ReceivedVector> {
    if antenna.number() > channel.nt() {
        return Err(Error::invalid(format!(
            "antenna {} outside 1..={}",
            antenna.number(),
            channel.nt()
        )));
    }
    let y = channel
        .column(antenna.label())
        .iter()
        .map(|&h| h + complex_normal(rng, n0))
        .collect();
    Ok(ReceivedVector(y))
}

/// Soft demapping rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemapRule {
    /// Log-sum-exp over each label subset.
    #[default]
    Exact,
    /// Maximum metric per subset only.
    MaxLog,
}

/// Log-likelihood metrics `-‖y - h_k‖² / n0` for every antenna label,
/// written into `out` (length `N_T`).
pub fn antenna_metrics(y: &[Complex64], channel: &ChannelRealization, n0: f64, out: &mut [f64]) {
    let n0 = n0.max(f64::MIN_POSITIVE);
    for (m, h) in out.iter_mut().zip(channel.columns()) {
        let d: f64 = y.iter().zip(h).map(|(a, b)| (a - b).norm_sqr()).sum();
        *m = -d / n0;
    }
}

/// Accumulates `ln Σ exp(x)` in one pass over a stream of values.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    pub(crate) const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    #[inline]
    pub(crate) fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    #[inline]
    pub(crate) fn value(self, rule: DemapRule) -> f64 {
        match rule {
            DemapRule::Exact => self.max + self.sum.ln(),
            DemapRule::MaxLog => self.max,
        }
    }
}

#[inline]
fn llr_of(s0: LogSumExp, s1: LogSumExp, rule: DemapRule) -> f64 {
    let (a, b) = (s0.value(rule), s1.value(rule));
    // Both infinite only when every metric underflowed, which leaves no evidence.
    let l = if a == b { 0.0 } else { a - b };
    l.clamp(-LLR_CLAMP, LLR_CLAMP)
}

/// Multi-stage LLR for bit `b^{level-1}` given the decided lower label bits
/// `prior_label` (bit j holds `b^j`, j < level - 1).
pub fn msd_llr_from_metrics(metrics: &[f64], level: usize, prior_label: usize, rule: DemapRule) -> f64 {
    let low_mask = (1usize << (level - 1)) - 1;
    let prior = prior_label & low_mask;
    let mut sets = [LogSumExp::EMPTY; 2];
    for (label, &m) in metrics.iter().enumerate() {
        if label & low_mask == prior {
            sets[(label >> (level - 1)) & 1].push(m);
        }
    }
    llr_of(sets[0], sets[1], rule)
}

/// Metrics turned into weights `e^{m_k - max_j m_j}`. The largest weight is 1.
pub fn metric_weights(metrics: &[f64], out: &mut [f64]) {
    let top = metrics.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (w, &m) in out.iter_mut().zip(metrics) {
        *w = if top == f64::NEG_INFINITY { 0.0 } else { (m - top).exp() };
    }
}

#[inline]
fn llr_of_sums(s0: f64, s1: f64) -> f64 {
    let l = if s0 == s1 { 0.0 } else { s0.ln() - s1.ln() };
    l.clamp(-LLR_CLAMP, LLR_CLAMP)
}

/// Below this, a weight sum may be made of subnormals and the log-domain
/// path is used instead.
const WEIGHT_FLOOR: f64 = 1e-280;

/// [`msd_llr_from_metrics`] with weights from [`metric_weights`] precomputed,
/// saving the exponentials when several levels of one symbol are demapped.
pub fn msd_llr_from_weights(
    weights: &[f64],
    metrics: &[f64],
    level: usize,
    prior_label: usize,
    rule: DemapRule,
) -> f64 {
    if rule == DemapRule::MaxLog {
        return msd_llr_from_metrics(metrics, level, prior_label, rule);
    }
    let low_mask = (1usize << (level - 1)) - 1;
    let prior = prior_label & low_mask;
    let mut sums = [0.0; 2];
    // Labels consistent with the prior: prior + q·2^{level-1}.
    let mut label = prior;
    while label < weights.len() {
        sums[(label >> (level - 1)) & 1] += weights[label];
        label += 1 << (level - 1);
    }
    if sums[0] + sums[1] < WEIGHT_FLOOR {
        return msd_llr_from_metrics(metrics, level, prior_label, rule);
    }
    llr_of_sums(sums[0], sums[1])
}

/// Prior-free LLR for every label bit, written into `out` (length `m_a`).
pub fn bicm_llrs_from_metrics(metrics: &[f64], rule: DemapRule, out: &mut [f64]) {
    if rule == DemapRule::Exact && metrics.len() <= 64 {
        // The side holding the best label sums to at least 1, so any
        // underflow on the other side only affects LLRs beyond the clamp.
        let mut w = [0.0; 64];
        metric_weights(metrics, &mut w[..metrics.len()]);
        for (j, o) in out.iter_mut().enumerate() {
            let mut sums = [0.0; 2];
            for (label, &x) in w[..metrics.len()].iter().enumerate() {
                sums[(label >> j) & 1] += x;
            }
            *o = llr_of_sums(sums[0], sums[1]);
        }
        return;
    }
    for (j, o) in out.iter_mut().enumerate() {
        let mut sets = [LogSumExp::EMPTY; 2];
        for (label, &m) in metrics.iter().enumerate() {
            sets[(label >> j) & 1].push(m);
        }
        *o = llr_of(sets[0], sets[1], rule);
    }
}

/// LLR of bit `b^{level-1}` conditioned on `prior_bits = [b^0 … b^{level-2}]`.
pub fn msd_llr(
    y: &ReceivedVector,
    channel: &ChannelRealization,
    n0: f64,
    level: usize,
    prior_bits: &[u8],
) -> Result<f64> {
    let m_a = channel.nt().trailing_zeros() as usize;
    if level == 0 || level > m_a {
        return Err(Error::invalid(format!("level {level} outside 1..={m_a}")));
    }
    if prior_bits.len() != level - 1 {
        return Err(Error::invalid(format!(
            "level {level} needs {} prior bits, got {}",
            level - 1,
            prior_bits.len()
        )));
    }
    check_dims(y, channel)?;
    let prior = prior_bits
        .iter()
        .enumerate()
        .fold(0usize, |acc, (j, &b)| acc | (((b & 1) as usize) << j));
    let mut metrics = vec![0.0; channel.nt()];
    antenna_metrics(&y.0, channel, n0, &mut metrics);
    let mut weights = vec![0.0; channel.nt()];
    metric_weights(&metrics, &mut weights);
    Ok(msd_llr_from_weights(&weights, &metrics, level, prior, DemapRule::Exact))
}

/// Prior-free LLRs `[L(b^0), …, L(b^{m-1})]`.
pub fn bicm_llr(y: &ReceivedVector, channel: &ChannelRealization, n0: f64) -> Result<Vec<f64>> {
    check_dims(y, channel)?;
    let m_a = channel.nt().trailing_zeros() as usize;
    let mut metrics = vec![0.0; channel.nt()];
    antenna_metrics(&y.0, channel, n0, &mut metrics);
    let mut out = vec![0.0; m_a];
    bicm_llrs_from_metrics(&metrics, DemapRule::Exact, &mut out);
    Ok(out)
}

fn check_dims(y: &ReceivedVector, channel: &ChannelRealization) -> Result<()> {
    if y.0.len() != channel.nr() {
        return Err(Error::invalid(format!(
            "received vector has {} entries, channel has {} receive antennas",
            y.0.len(),
            channel.nr()
        )));
    }
    Ok(())
}
