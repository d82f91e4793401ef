//! Polar code design for the multilevel SSK system.
//!
//! Synthesized-channel reliabilities of the length `m_a·N` mother code are
//! estimated by genie-aided SC decoding of the all-zero codeword sent with
//! BPSK over a SISO Rayleigh channel at the design SNR. Besides the raw
//! decision-error frequency, every leaf LLR `L` contributes its posterior
//! error probability `1 / (1 + e^{|L|})`; the mean of that quantity estimates
//! the same error probability with far lower variance and keeps resolving
//! channels long after their error counts have hit zero. Ranking uses it.
//! The mother code is
//! then cut into `m_a` consecutive blocks of `N` indices; level `i` takes
//! the `K_i` most reliable indices of block `i`.

use serde::{Deserialize, Serialize};

use crate::capacity::CapacityReport;
use crate::error::{Error, Result};
use crate::par;
use crate::polar::{boxplus, clamp_llr, PolarCodeSpec};
use crate::rng::{complex_normal, stream, Domain};
use crate::ssk_channel::{SnrConvention, SskConfig};

/// Monte-Carlo samples used by default for reliability estimation.
pub const DEFAULT_SAMPLES: u64 = 200_000;

const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityProfile {
    /// Per synthesized channel (0-based input index), the fraction of
    /// samples on which the genie-aided decision was wrong.
    pub error_prob: Vec<f64>,
    /// Natural log of the mean posterior error probability per channel.
    pub log_posterior_error: Vec<f64>,
    pub design_snr_db: f64,
    pub samples: u64,
    pub seed: u64,
}

impl ReliabilityProfile {
    pub fn len(&self) -> usize {
        self.error_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.error_prob.is_empty()
    }

    /// Indices of `range` sorted from most to least reliable, ties broken
    /// by the smaller index.
    fn ranked(&self, range: std::ops::Range<usize>) -> Vec<usize> {
        let mut idx: Vec<usize> = range.collect();
        let key = &self.log_posterior_error;
        idx.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)));
        idx
    }
}

/// Per-channel tallies of one batch of genie-aided decodes.
struct LeafStats {
    errors: Vec<u64>,
    /// Running `ln Σ 1/(1 + e^{|L|})`, kept as (max, scaled sum).
    log_max: Vec<f64>,
    scaled: Vec<f64>,
}

impl LeafStats {
    fn new(len: usize) -> Self {
        Self {
            errors: vec![0; len],
            log_max: vec![f64::NEG_INFINITY; len],
            scaled: vec![0.0; len],
        }
    }

    #[inline]
    fn leaf(&mut self, i: usize, llr: f64) {
        if llr < 0.0 {
            self.errors[i] += 1;
        }
        // ln(1 / (1 + e^{|L|})) = -|L| - ln(1 + e^{-|L|})
        let a = llr.abs();
        let x = -a - (-a).exp().ln_1p();
        let m = self.log_max[i];
        if x <= m {
            self.scaled[i] += (x - m).exp();
        } else {
            self.scaled[i] = self.scaled[i] * (m - x).exp() + 1.0;
            self.log_max[i] = x;
        }
    }

    fn log_total(&self, i: usize) -> f64 {
        self.log_max[i] + self.scaled[i].ln()
    }

    fn merge(&mut self, other: &LeafStats) {
        for i in 0..self.errors.len() {
            self.errors[i] += other.errors[i];
            let lt = other.log_total(i);
            if lt == f64::NEG_INFINITY {
                continue;
            }
            let m = self.log_max[i];
            if lt <= m {
                self.scaled[i] += (lt - m).exp();
            } else {
                self.scaled[i] = self.scaled[i] * (m - lt).exp() + 1.0;
                self.log_max[i] = lt;
            }
        }
    }
}

/// Genie-aided SC over the all-zero codeword: every earlier decision is
/// known to be 0, so the bit-node update is a plain sum.
fn genie_decode(llr: &[f64], offset: usize, stats: &mut LeafStats, scratch: &mut [f64]) {
    let n = llr.len();
    if n == 1 {
        stats.leaf(offset, llr[0]);
        return;
    }
    let h = n / 2;
    let (child, rest) = scratch.split_at_mut(h);
    let (lo, hi) = llr.split_at(h);
    for ((c, &a), &b) in child.iter_mut().zip(lo).zip(hi) {
        *c = boxplus(a, b);
    }
    genie_decode(child, offset, stats, rest);
    for ((c, &a), &b) in child.iter_mut().zip(lo).zip(hi) {
        *c = a + b;
    }
    genie_decode(child, offset + h, stats, rest);
}

/// Reliabilities at `design_snr_db` under the default SNR convention.
pub fn estimate_reliabilities(
    total_length: usize,
    design_snr_db: f64,
    samples: u64,
    seed: u64,
) -> Result<ReliabilityProfile> {
    estimate_reliabilities_with(total_length, design_snr_db, SnrConvention::default(), samples, seed)
}

pub fn estimate_reliabilities_with(
    total_length: usize,
    design_snr_db: f64,
    convention: SnrConvention,
    samples: u64,
    seed: u64,
) -> Result<ReliabilityProfile> {
    if samples == 0 {
        return Err(Error::invalid("reliability estimation needs at least one sample"));
    }
    if total_length < 2 || !total_length.is_power_of_two() {
        return Err(Error::invalid(format!(
            "mother code length {total_length} is not a power of two ≥ 2"
        )));
    }
    let n0 = if design_snr_db == f64::INFINITY {
        0.0
    } else {
        SskConfig::new(2, 1, design_snr_db)?
            .with_convention(convention)
            .noise_variance()
    };
    let inv = 4.0 / n0.max(f64::MIN_POSITIVE);
    let ranges = par::chunks(samples as usize, CHUNK);
    let parts = par::map_indexed(ranges.len(), |c| {
        let (_, len) = ranges[c];
        let mut rng = stream(seed, Domain::Construction, c as u64);
        let mut stats = LeafStats::new(total_length);
        let mut llr = vec![0.0; total_length];
        let mut scratch = vec![0.0; total_length];
        for _ in 0..len {
            for l in llr.iter_mut() {
                let h = complex_normal(&mut rng, 1.0);
                let y = h + complex_normal(&mut rng, n0);
                *l = clamp_llr((h.conj() * y).re * inv);
            }
            genie_decode(&llr, 0, &mut stats, &mut scratch);
        }
        stats
    });
    let mut stats = LeafStats::new(total_length);
    for p in &parts {
        stats.merge(p);
    }
    let ln_samples = (samples as f64).ln();
    Ok(ReliabilityProfile {
        error_prob: stats.errors.iter().map(|&e| e as f64 / samples as f64).collect(),
        log_posterior_error: (0..total_length).map(|i| stats.log_total(i) - ln_samples).collect(),
        design_snr_db,
        samples,
        seed,
    })
}

/// Per-level information counts of a multilevel code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateAllocation {
    /// Component code length `N`.
    pub component_length: usize,
    /// `K_i` for `i = 1..m_a`.
    pub k: Vec<usize>,
}

impl RateAllocation {
    pub fn levels(&self) -> usize {
        self.k.len()
    }

    /// `R_i = K_i / N`.
    pub fn rates(&self) -> Vec<f64> {
        self.k
            .iter()
            .map(|&k| k as f64 / self.component_length as f64)
            .collect()
    }

    pub fn total_k(&self) -> usize {
        self.k.iter().sum()
    }

    /// `R = K / (m_a·N)`.
    pub fn overall_rate(&self) -> f64 {
        self.total_k() as f64 / (self.levels() * self.component_length) as f64
    }
}

/// Capacity rule with `R_i = C^i`: `K_i = ⌊C^i·N + 1/2⌋` clamped to `[0, N]`.
pub fn allocate_from_capacities(capacities: &[f64], component_length: usize) -> Result<RateAllocation> {
    if component_length == 0 {
        return Err(Error::invalid("component length must be positive"));
    }
    if let Some(c) = capacities.iter().find(|c| !c.is_finite()) {
        return Err(Error::invalid(format!("non-finite capacity {c}")));
    }
    let n = component_length as f64;
    let k = capacities
        .iter()
        .map(|&c| (c * n + 0.5).floor().clamp(0.0, n) as usize)
        .collect();
    Ok(RateAllocation { component_length, k })
}

/// Allocation from a capacity report. A level whose estimate is negative
/// by more than three standard errors indicates a broken estimate.
pub fn allocate_rates(report: &CapacityReport, component_length: usize) -> Result<RateAllocation> {
    for (i, (&c, &se)) in report.level_capacity.iter().zip(&report.level_std_error).enumerate() {
        if c < -3.0 * se {
            return Err(Error::EstimationFailure(format!(
                "level {} capacity {c:.5} is below zero by more than 3 standard errors ({se:.5})",
                i + 1
            )));
        }
    }
    allocate_from_capacities(&report.level_capacity, component_length)
}

/// Splits the mother code into per-level component codes.
pub fn segregate(profile: &ReliabilityProfile, alloc: &RateAllocation) -> Result<Vec<PolarCodeSpec>> {
    let n = alloc.component_length;
    if !n.is_power_of_two() || n < 2 {
        return Err(Error::invalid(format!(
            "component length {n} is not a power of two ≥ 2"
        )));
    }
    if profile.len() != alloc.levels() * n {
        return Err(Error::invalid(format!(
            "profile length {} does not equal {} levels × N = {n}",
            profile.len(),
            alloc.levels()
        )));
    }
    let n_exp = n.trailing_zeros();
    alloc
        .k
        .iter()
        .enumerate()
        .map(|(level, &k)| {
            if k > n {
                return Err(Error::invalid(format!("K_{} = {k} exceeds N = {n}", level + 1)));
            }
            let base = level * n;
            let info = profile.ranked(base..base + n).into_iter().take(k).map(|i| i - base);
            PolarCodeSpec::new(n_exp, info)
        })
        .collect()
}

/// Single code over the whole profile with the `k` globally most reliable
/// indices as information set.
pub fn most_reliable(profile: &ReliabilityProfile, k: usize) -> Result<PolarCodeSpec> {
    let len = profile.len();
    if k > len {
        return Err(Error::invalid(format!("K = {k} exceeds code length {len}")));
    }
    let info = profile.ranked(0..len).into_iter().take(k);
    PolarCodeSpec::new(len.trailing_zeros(), info)
}
