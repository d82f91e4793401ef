//! Monte-Carlo estimation of SSK ergodic capacities.
//!
//! For `i = 1..m_a` the subset capacity `C_i^0` is the mean of
//!
//! ```text
//! log2( 2^i · Σ_{k ∈ X(b^i)} e^{-‖y-h_k‖²/N_0} / Σ_{k'} e^{-‖y-h_k'‖²/N_0} )
//! ```
//!
//! over draws of `(H, k, y)`, where `X(b^i)` holds the antennas whose `i`
//! lowest label bits equal those of the transmitted antenna. At `i = m_a`
//! the subset is a singleton and the mean is the total capacity `C(X)`.
//! The bit-level capacities are successive differences, computed on the
//! same draws so that they telescope to `C(X)` exactly.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{complex_normal, stream, Domain};
use crate::ssk_channel::{DemapRule, LogSumExp, SskConfig};

/// Smallest accepted trial count.
pub const MIN_FRAMES: u64 = 10_000;
/// Trial count used when designing codes.
pub const DESIGN_FRAMES: u64 = 200_000;
/// Trial count used for reproduction runs.
pub const REFERENCE_FRAMES: u64 = 1_000_000;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub config: SskConfig,
    pub frames: u64,
    pub seed: u64,
    /// `C(X)` in bits per channel use.
    pub total_capacity: f64,
    pub total_std_error: f64,
    /// `C_i^0` for `i = 1..m_a-1`.
    pub subset_capacity: Vec<f64>,
    pub subset_std_error: Vec<f64>,
    /// `C^i` for `i = 1..m_a`.
    pub level_capacity: Vec<f64>,
    pub level_std_error: Vec<f64>,
    /// `per_label[i-1][j]` is `C_{i,j}`: the conditional mean of the level-`i`
    /// integrand given the transmitted label's low `i` bits equal `j`.
    /// The last row (`i = m_a`) holds the singleton terms of `C(X)`.
    pub per_label: Vec<Vec<f64>>,
}

impl CapacityReport {
    pub fn bits_per_symbol(&self) -> usize {
        self.level_capacity.len()
    }
}

#[derive(Clone)]
struct Accumulator {
    /// Per level: sum and sum of squares of the subset integrand.
    subset: Vec<(f64, f64)>,
    /// Per level: sum and sum of squares of the level increment.
    level: Vec<(f64, f64)>,
    per_label: Vec<Vec<(f64, u64)>>,
    trials: u64,
}

impl Accumulator {
    fn new(m_a: usize) -> Self {
        Self {
            subset: vec![(0.0, 0.0); m_a],
            level: vec![(0.0, 0.0); m_a],
            per_label: (1..=m_a).map(|i| vec![(0.0, 0); 1 << i]).collect(),
            trials: 0,
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.subset.iter_mut().zip(&other.subset) {
            a.0 += b.0;
            a.1 += b.1;
        }
        for (a, b) in self.level.iter_mut().zip(&other.level) {
            a.0 += b.0;
            a.1 += b.1;
        }
        for (ra, rb) in self.per_label.iter_mut().zip(&other.per_label) {
            for (a, b) in ra.iter_mut().zip(rb) {
                a.0 += b.0;
                a.1 += b.1;
            }
        }
        self.trials += other.trials;
    }
}

/// Draws one trial and writes the subset integrands `z_1..z_{m_a}` (bits).
/// Returns the transmitted label.
fn trial<R: Rng + ?Sized>(
    config: &SskConfig,
    n0: f64,
    rng: &mut R,
    h: &mut [Complex64],
    y: &mut [Complex64],
    metrics: &mut [f64],
    z: &mut [f64],
) -> usize {
    let (nt, nr) = (config.nt, config.nr);
    for c in h.iter_mut() {
        *c = complex_normal(rng, 1.0);
    }
    let k = rng.random_range(0..nt);
    for (p, yp) in y.iter_mut().enumerate() {
        *yp = h[k * nr + p] + complex_normal(rng, n0);
    }
    subset_integrands(h, nr, y, n0, k, metrics, z);
    k
}

/// Subset integrands `z_1..z_{m_a}` for one realization with antenna
/// label `k` transmitted. `h` is column-major with `nr` rows.
pub(crate) fn subset_integrands(
    h: &[Complex64],
    nr: usize,
    y: &[Complex64],
    n0: f64,
    k: usize,
    metrics: &mut [f64],
    z: &mut [f64],
) {
    let nt = metrics.len();
    let inv_n0 = 1.0 / n0.max(f64::MIN_POSITIVE);
    let mut all = LogSumExp::EMPTY;
    for (label, m) in metrics.iter_mut().enumerate() {
        let col = &h[label * nr..(label + 1) * nr];
        let d: f64 = y.iter().zip(col).map(|(a, b)| (a - b).norm_sqr()).sum();
        *m = -d * inv_n0;
        all.push(*m);
    }
    let denom = all.value(DemapRule::Exact);
    for (idx, zi) in z.iter_mut().enumerate() {
        let i = idx + 1;
        let mask = (1usize << i) - 1;
        let mut sub = LogSumExp::EMPTY;
        // Labels sharing the low i bits of k: k & mask + q·2^i.
        let mut label = k & mask;
        while label < nt {
            sub.push(metrics[label]);
            label += 1 << i;
        }
        *zi = (i as f64) + (sub.value(DemapRule::Exact) - denom) * std::f64::consts::LOG2_E;
    }
}

fn run_chunk(config: &SskConfig, n0: f64, seed: u64, chunk_index: usize, len: usize) -> Accumulator {
    let m_a = config.bits_per_symbol();
    let mut acc = Accumulator::new(m_a);
    let mut rng = stream(seed, Domain::Capacity, chunk_index as u64);
    let mut h = vec![Complex64::new(0.0, 0.0); config.nr * config.nt];
    let mut y = vec![Complex64::new(0.0, 0.0); config.nr];
    let mut metrics = vec![0.0; config.nt];
    let mut z = vec![0.0; m_a];
    for _ in 0..len {
        let k = trial(config, n0, &mut rng, &mut h, &mut y, &mut metrics, &mut z);
        let mut prev = 0.0;
        for (i, &zi) in z.iter().enumerate() {
            acc.subset[i].0 += zi;
            acc.subset[i].1 += zi * zi;
            let d = zi - prev;
            acc.level[i].0 += d;
            acc.level[i].1 += d * d;
            prev = zi;
            let cell = &mut acc.per_label[i][k & ((1 << (i + 1)) - 1)];
            cell.0 += zi;
            cell.1 += 1;
        }
    }
    acc.trials = len as u64;
    acc
}

fn mean_and_se((sum, sumsq): (f64, f64), n: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sumsq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Estimates `C(X)`, `C_i^0` and `C^i` from `frames` independent trials.
/// Reproducible for a given `(seed, frames)` regardless of thread count.
pub fn estimate_capacities(config: &SskConfig, frames: u64, seed: u64) -> Result<CapacityReport> {
    if frames < MIN_FRAMES {
        return Err(Error::invalid(format!(
            "need at least {MIN_FRAMES} frames, got {frames}"
        )));
    }
    let m_a = config.bits_per_symbol();
    let n0 = config.noise_variance();
    let parts = par::map_indexed(par::chunks(frames as usize, CHUNK).len(), |c| {
        let start = c * CHUNK;
        let len = CHUNK.min(frames as usize - start);
        run_chunk(config, n0, seed, c, len)
    });
    let mut acc = Accumulator::new(m_a);
    for p in &parts {
        acc.merge(p);
    }

    let subset: Vec<(f64, f64)> = acc.subset.iter().map(|&s| mean_and_se(s, acc.trials)).collect();
    let (total_capacity, total_std_error) = subset[m_a - 1];
    let subset_capacity: Vec<f64> = subset[..m_a - 1].iter().map(|s| s.0).collect();
    let subset_std_error = subset[..m_a - 1].iter().map(|s| s.1).collect();
    let mut level_capacity = Vec::with_capacity(m_a);
    let mut prev = 0.0;
    for s in &subset {
        level_capacity.push(s.0 - prev);
        prev = s.0;
    }
    let level_std_error = acc.level.iter().map(|&s| mean_and_se(s, acc.trials).1).collect();
    let per_label = acc
        .per_label
        .iter()
        .map(|row| {
            row.iter()
                .map(|&(s, n)| if n == 0 { f64::NAN } else { s / n as f64 })
                .collect()
        })
        .collect();

    let report = CapacityReport {
        config: *config,
        frames,
        seed,
        total_capacity,
        total_std_error,
        subset_capacity,
        subset_std_error,
        level_capacity,
        level_std_error,
        per_label,
    };
    let finite = report.total_capacity.is_finite()
        && report.level_capacity.iter().all(|c| c.is_finite())
        && report.level_std_error.iter().all(|c| c.is_finite());
    if !finite {
        return Err(Error::NumericalFailure(format!(
            "non-finite capacity accumulator at {} dB",
            config.es_n0_db
        )));
    }
    Ok(report)
}

/// Lower end of the design-SNR search bracket, dB.
pub const SEARCH_LOW_DB: f64 = -30.0;
/// Upper end of the design-SNR search bracket, dB.
pub const SEARCH_HIGH_DB: f64 = 30.0;

/// Bisects `E_s/N_0` over `[-30, 30]` dB until `C(X)` meets `target_bpcu`,
/// stopping when the bracket is at most `tol_db` wide. Every evaluation
/// reuses the same seed, so the estimated curve is a smooth function of SNR.
pub fn find_design_snr(template: &SskConfig, target_bpcu: f64, tol_db: f64, frames: u64, seed: u64) -> Result<f64> {
    let m_a = template.bits_per_symbol() as f64;
    if !(target_bpcu > 0.0 && target_bpcu < m_a) {
        return Err(Error::invalid(format!("target {target_bpcu} bpcu outside (0, {m_a})")));
    }
    if tol_db.is_nan() || tol_db <= 0.0 {
        return Err(Error::invalid("bisection tolerance must be positive"));
    }
    let eval = |db: f64| estimate_capacities(&template.with_snr(db), frames, seed);

    let (mut lo, mut hi) = (SEARCH_LOW_DB, SEARCH_HIGH_DB);
    let top = eval(hi)?;
    if target_bpcu > top.total_capacity + 3.0 * top.total_std_error {
        return Err(Error::OutOfRange(format!(
            "{target_bpcu} bpcu exceeds C(X) = {:.4} at {hi} dB",
            top.total_capacity
        )));
    }
    let bottom = eval(lo)?;
    if target_bpcu < bottom.total_capacity - 3.0 * bottom.total_std_error {
        return Err(Error::OutOfRange(format!(
            "{target_bpcu} bpcu is below C(X) = {:.6} at {lo} dB",
            bottom.total_capacity
        )));
    }
    while hi - lo > tol_db {
        let mid = 0.5 * (lo + hi);
        if eval(mid)?.total_capacity < target_bpcu {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
