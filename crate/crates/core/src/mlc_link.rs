//! End-to-end transceivers over a fading frame of `N` SSK symbols.
//!
//! * Multilevel: level `i` codeword bit `t` becomes label bit `b^{i-1}` of
//!   symbol `t`; the receiver decodes level by level, re-encoding each
//!   decision to condition the next level's demapper.
//! * BICM: one length `m_a·N` code, a fixed random interleaver, consecutive
//!   groups of `m_a` bits per symbol and a prior-free demapper.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polar::{encode, sc_decode_with, CheckNode, PolarCodeSpec};
use crate::rng::{complex_normal, stream, Domain};
use crate::ssk_channel::{
    antenna_metrics, bicm_llrs_from_metrics, metric_weights, msd_llr_from_weights, Antenna, ChannelRealization,
    DemapRule, ReceivedVector, SskConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MlcSystemSpec {
    pub ssk: SskConfig,
    levels: Vec<PolarCodeSpec>,
}

impl MlcSystemSpec {
    pub fn new(ssk: SskConfig, levels: Vec<PolarCodeSpec>) -> Result<Self> {
        if levels.len() != ssk.bits_per_symbol() {
            return Err(Error::invalid(format!(
                "{} component codes for {} bits per symbol",
                levels.len(),
                ssk.bits_per_symbol()
            )));
        }
        if levels.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(Error::invalid("component codes must share one length"));
        }
        Ok(Self { ssk, levels })
    }

    pub fn levels(&self) -> &[PolarCodeSpec] {
        &self.levels
    }

    /// Symbols per frame, `N`.
    pub fn frame_len(&self) -> usize {
        self.levels[0].len()
    }

    pub fn k(&self) -> usize {
        self.levels.iter().map(PolarCodeSpec::k).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicmSystemSpec {
    pub ssk: SskConfig,
    code: PolarCodeSpec,
    /// Interleaved position `t` carries code bit `interleaver[t]`.
    interleaver: Vec<usize>,
    interleaver_seed: Option<u64>,
}

impl BicmSystemSpec {
    /// Uniformly random interleaver drawn from `interleaver_seed`.
    pub fn new(ssk: SskConfig, code: PolarCodeSpec, interleaver_seed: u64) -> Result<Self> {
        let mut perm: Vec<usize> = (0..code.len()).collect();
        perm.shuffle(&mut stream(interleaver_seed, Domain::Interleaver, 0));
        let mut spec = Self::with_interleaver(ssk, code, perm)?;
        spec.interleaver_seed = Some(interleaver_seed);
        Ok(spec)
    }

    pub fn with_interleaver(ssk: SskConfig, code: PolarCodeSpec, interleaver: Vec<usize>) -> Result<Self> {
        let m_a = ssk.bits_per_symbol();
        if !code.len().is_multiple_of(m_a) || code.len() < m_a {
            return Err(Error::invalid(format!(
                "code length {} is not a multiple of {m_a} bits per symbol",
                code.len()
            )));
        }
        if interleaver.len() != code.len() {
            return Err(Error::invalid("interleaver length differs from code length"));
        }
        let mut seen = vec![false; interleaver.len()];
        for &p in &interleaver {
            if p >= seen.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::invalid("interleaver is not a permutation"));
            }
        }
        Ok(Self {
            ssk,
            code,
            interleaver,
            interleaver_seed: None,
        })
    }

    pub fn code(&self) -> &PolarCodeSpec {
        &self.code
    }

    pub fn interleaver(&self) -> &[usize] {
        &self.interleaver
    }

    pub fn interleaver_seed(&self) -> Option<u64> {
        self.interleaver_seed
    }

    pub fn frame_len(&self) -> usize {
        self.code.len() / self.ssk.bits_per_symbol()
    }

    pub fn k(&self) -> usize {
        self.code.k()
    }

    pub fn interleave<T: Copy>(&self, data: &[T]) -> Vec<T> {
        self.interleaver.iter().map(|&p| data[p]).collect()
    }

    pub fn deinterleave<T: Copy + Default>(&self, data: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); data.len()];
        for (&p, &v) in self.interleaver.iter().zip(data) {
            out[p] = v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameResult {
    pub bit_errors: usize,
    pub frame_error: bool,
    pub decoded_message: Vec<u8>,
}

impl FrameResult {
    fn compare(decoded: Vec<u8>, truth: &[u8]) -> Self {
        let bit_errors = decoded.iter().zip(truth).filter(|(a, b)| a != b).count();
        Self {
            bit_errors,
            frame_error: bit_errors > 0,
            decoded_message: decoded,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiverOptions {
    pub demap: DemapRule,
    pub check_node: CheckNode,
}

/// Instrumentation points of the multi-stage receiver.
pub trait MsdObserver {
    /// Called before level `level` (1-based) is demapped, with exactly the
    /// codeword decisions that stage conditions on.
    fn before_demap(&mut self, _level: usize, _priors: &[Vec<u8>]) {}

    /// Sees (and may replace) the re-encoded codeword of `level` before it
    /// feeds later stages.
    fn after_decode(&mut self, _level: usize, _codeword: &mut Vec<u8>) {}
}

struct NoObserver;
impl MsdObserver for NoObserver {}

fn check_message(message: &[u8], k: usize) -> Result<()> {
    if message.len() != k {
        return Err(Error::invalid(format!(
            "message has {} bits, system carries {k}",
            message.len()
        )));
    }
    Ok(())
}

/// Splits the message across levels, encodes each and maps column-wise.
pub fn mlc_encode(message: &[u8], spec: &MlcSystemSpec) -> Result<Vec<Antenna>> {
    check_message(message, spec.k())?;
    let mut rest = message;
    let mut codewords = Vec::with_capacity(spec.levels.len());
    for code in &spec.levels {
        let (chunk, tail) = rest.split_at(code.k());
        codewords.push(encode(chunk, code)?);
        rest = tail;
    }
    Ok((0..spec.frame_len())
        .map(|t| {
            let label = codewords
                .iter()
                .enumerate()
                .fold(0usize, |acc, (j, c)| acc | ((c[t] as usize) << j));
            Antenna::from_label(label)
        })
        .collect())
}

/// Encodes, interleaves and maps groups of `m_a` bits, `b^0` first.
pub fn bicm_encode(message: &[u8], spec: &BicmSystemSpec) -> Result<Vec<Antenna>> {
    check_message(message, spec.k())?;
    let interleaved = spec.interleave(&encode(message, &spec.code)?);
    Ok(interleaved
        .chunks_exact(spec.ssk.bits_per_symbol())
        .map(|group| {
            let label = group
                .iter()
                .enumerate()
                .fold(0usize, |acc, (j, &b)| acc | ((b as usize) << j));
            Antenna::from_label(label)
        })
        .collect())
}

fn frame_metrics(
    y_seq: &[ReceivedVector],
    h_seq: &[ChannelRealization],
    ssk: &SskConfig,
    n: usize,
) -> Result<Vec<f64>> {
    if y_seq.len() != n || h_seq.len() != n {
        return Err(Error::invalid(format!(
            "frame carries {} received vectors and {} channels, expected {n}",
            y_seq.len(),
            h_seq.len()
        )));
    }
    let nt = ssk.nt;
    let n0 = ssk.noise_variance();
    let mut metrics = vec![0.0; n * nt];
    for ((y, h), m) in y_seq.iter().zip(h_seq).zip(metrics.chunks_exact_mut(nt)) {
        if h.nt() != nt || h.nr() != ssk.nr || y.0.len() != ssk.nr {
            return Err(Error::invalid(
                "channel or received vector dimensions do not match the SSK configuration",
            ));
        }
        antenna_metrics(&y.0, h, n0, m);
    }
    Ok(metrics)
}

/// Multi-stage demapping and SC decoding.
pub fn msd_receive(
    y_seq: &[ReceivedVector],
    h_seq: &[ChannelRealization],
    spec: &MlcSystemSpec,
    message: &[u8],
) -> Result<FrameResult> {
    msd_receive_with(y_seq, h_seq, spec, message, ReceiverOptions::default(), &mut NoObserver)
}

pub fn msd_receive_with(
    y_seq: &[ReceivedVector],
    h_seq: &[ChannelRealization],
    spec: &MlcSystemSpec,
    message: &[u8],
    options: ReceiverOptions,
    observer: &mut dyn MsdObserver,
) -> Result<FrameResult> {
    check_message(message, spec.k())?;
    let n = spec.frame_len();
    let nt = spec.ssk.nt;
    let metrics = frame_metrics(y_seq, h_seq, &spec.ssk, n)?;
    let mut weights = vec![0.0; metrics.len()];
    for (w, m) in weights.chunks_exact_mut(nt).zip(metrics.chunks_exact(nt)) {
        metric_weights(m, w);
    }
    let mut decided: Vec<Vec<u8>> = Vec::with_capacity(spec.levels.len());
    let mut prior_labels = vec![0usize; n];
    let mut decoded = Vec::with_capacity(spec.k());
    let mut llr = vec![0.0; n];
    for (idx, code) in spec.levels.iter().enumerate() {
        let level = idx + 1;
        observer.before_demap(level, &decided[..idx]);
        for (t, l) in llr.iter_mut().enumerate() {
            let sym = t * nt..(t + 1) * nt;
            *l = msd_llr_from_weights(
                &weights[sym.clone()],
                &metrics[sym],
                level,
                prior_labels[t],
                options.demap,
            );
        }
        let out = sc_decode_with(&llr, code, options.check_node)?;
        decoded.extend_from_slice(&out.message);
        let mut codeword = out.codeword;
        observer.after_decode(level, &mut codeword);
        for (p, &c) in prior_labels.iter_mut().zip(&codeword) {
            *p |= ((c & 1) as usize) << idx;
        }
        decided.push(codeword);
    }
    Ok(FrameResult::compare(decoded, message))
}

/// Demaps every symbol without priors, de-interleaves and decodes once.
pub fn bicm_receive(
    y_seq: &[ReceivedVector],
    h_seq: &[ChannelRealization],
    spec: &BicmSystemSpec,
    message: &[u8],
) -> Result<FrameResult> {
    bicm_receive_with(y_seq, h_seq, spec, message, ReceiverOptions::default())
}

pub fn bicm_receive_with(
    y_seq: &[ReceivedVector],
    h_seq: &[ChannelRealization],
    spec: &BicmSystemSpec,
    message: &[u8],
    options: ReceiverOptions,
) -> Result<FrameResult> {
    check_message(message, spec.k())?;
    let llr = bicm_decoder_input(y_seq, h_seq, spec, options.demap)?;
    let out = sc_decode_with(&llr, &spec.code, options.check_node)?;
    Ok(FrameResult::compare(out.message, message))
}

/// The LLR vector handed to the BICM SC decoder, in code-bit order.
pub fn bicm_decoder_input(
    y_seq: &[ReceivedVector],
    h_seq: &[ChannelRealization],
    spec: &BicmSystemSpec,
    rule: DemapRule,
) -> Result<Vec<f64>> {
    let n = spec.frame_len();
    let nt = spec.ssk.nt;
    let m_a = spec.ssk.bits_per_symbol();
    let metrics = frame_metrics(y_seq, h_seq, &spec.ssk, n)?;
    let mut interleaved = vec![0.0; n * m_a];
    for (m, out) in metrics.chunks_exact(nt).zip(interleaved.chunks_exact_mut(m_a)) {
        bicm_llrs_from_metrics(m, rule, out);
    }
    Ok(spec.deinterleave(&interleaved))
}

/// Channel model across the symbols of one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fading {
    /// Independent `H` per symbol.
    #[default]
    Fast,
    /// One `H` for the whole frame.
    QuasiStatic,
}

/// Randomness of one simulated frame: the message, the channel of every
/// symbol and unit-variance noise. Both arms of a comparison are fed the
/// same draw.
#[derive(Debug, Clone)]
pub struct FrameDraw {
    pub message: Vec<u8>,
    pub channels: Vec<ChannelRealization>,
    unit_noise: Vec<Complex64>,
    nr: usize,
}

impl FrameDraw {
    pub fn draw(ssk: &SskConfig, symbols: usize, k: usize, fading: Fading, seed: u64, frame: u64) -> Self {
        let mut rng = stream(seed, Domain::Frame, frame);
        let message = (0..k).map(|_| rng.random_range(0..2u8)).collect();
        let channels = match fading {
            Fading::Fast => (0..symbols)
                .map(|_| ChannelRealization::draw(ssk.nr, ssk.nt, &mut rng))
                .collect(),
            Fading::QuasiStatic => vec![ChannelRealization::draw(ssk.nr, ssk.nt, &mut rng); symbols],
        };
        let unit_noise = (0..symbols * ssk.nr).map(|_| complex_normal(&mut rng, 1.0)).collect();
        Self {
            message,
            channels,
            unit_noise,
            nr: ssk.nr,
        }
    }

    /// `y_t = h_{k_t} + sqrt(n0)·w_t`.
    pub fn receive(&self, antennas: &[Antenna], n0: f64) -> Vec<ReceivedVector> {
        let s = n0.sqrt();
        antennas
            .iter()
            .zip(&self.channels)
            .zip(self.unit_noise.chunks_exact(self.nr))
            .map(|((a, h), w)| ReceivedVector(h.column(a.label()).iter().zip(w).map(|(&c, &n)| c + s * n).collect()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_mlc(n_exp: u32, nt: usize, k: &[usize]) -> MlcSystemSpec {
        let n = 1usize << n_exp;
        let ssk = SskConfig::new(nt, 1, 10.0).unwrap();
        let levels = k
            .iter()
            .map(|&ki| PolarCodeSpec::new(n_exp, n - ki..n).unwrap())
            .collect();
        MlcSystemSpec::new(ssk, levels).unwrap()
    }

    #[test]
    fn zero_message_maps_to_first_antenna() {
        let spec = toy_mlc(3, 4, &[2, 5]);
        let ks = mlc_encode(&[0; 7], &spec).unwrap();
        assert!(ks.iter().all(|k| k.number() == 1));
        assert!(mlc_encode(&[0; 6], &spec).is_err());
    }

    #[test]
    fn uncoded_levels_enumerated_by_hand() {
        // N = 4, m_a = 2, K_i = N: the codewords are transforms of the chunks.
        let spec = toy_mlc(2, 4, &[4, 4]);
        let message = [1, 0, 0, 0, 0, 1, 1, 0];
        // By hand: [1,0,0,0] is fixed; [0,1,1,0] → (h=2) [1,1,1,0] → (h=1) [0,1,1,0].
        let c1 = crate::polar::polar_transform(&[1, 0, 0, 0]).unwrap();
        let c2 = crate::polar::polar_transform(&[0, 1, 1, 0]).unwrap();
        assert_eq!(c1, vec![1, 0, 0, 0]);
        assert_eq!(c2, vec![0, 1, 1, 0]);
        let labels: Vec<usize> = mlc_encode(&message, &spec).unwrap().iter().map(|a| a.label()).collect();
        // label = c1[t] + 2·c2[t]
        assert_eq!(labels, vec![1, 2, 2, 0]);
    }

    #[test]
    fn bicm_group_read_by_hand() {
        let ssk = SskConfig::new(4, 1, 0.0).unwrap();
        let code = PolarCodeSpec::new(2, 0..4).unwrap();
        let spec = BicmSystemSpec::with_interleaver(ssk, code, vec![3, 2, 1, 0]).unwrap();
        // codeword of [0,0,0,1] is [1,1,1,1]; of [0,1,0,0] is [1,1,0,0].
        let labels: Vec<usize> = bicm_encode(&[0, 1, 0, 0], &spec)
            .unwrap()
            .iter()
            .map(|a| a.label())
            .collect();
        // interleaved = [c3,c2,c1,c0] = [0,0,1,1] → groups (0,0), (1,1).
        assert_eq!(labels, vec![0, 3]);
        let zero: Vec<usize> = bicm_encode(&[0; 4], &spec).unwrap().iter().map(|a| a.label()).collect();
        assert_eq!(zero, vec![0, 0]);
    }

    #[test]
    fn interleaver_round_trip() {
        let ssk = SskConfig::new(16, 1, 0.0).unwrap();
        let spec = BicmSystemSpec::new(ssk, PolarCodeSpec::new(6, 0..20).unwrap(), 99).unwrap();
        let data: Vec<usize> = (0..64).map(|i| i * 3 + 1).collect();
        assert_eq!(spec.deinterleave(&spec.interleave(&data)), data);
        assert_ne!(spec.interleave(&data), data);
        assert!(BicmSystemSpec::with_interleaver(ssk, PolarCodeSpec::new(2, 0..1).unwrap(), vec![0, 0, 1, 2]).is_err());
    }

    #[test]
    fn noiseless_chains_recover_message() {
        let mlc = toy_mlc(4, 8, &[3, 8, 12]);
        let ssk = mlc.ssk.noiseless();
        let mlc = MlcSystemSpec::new(ssk, mlc.levels().to_vec()).unwrap();
        // m_a = 3 does not divide a power-of-two length; use 4-SSK for BICM.
        let ssk4 = SskConfig::new(4, 2, 0.0).unwrap().noiseless();
        let bicm = BicmSystemSpec::new(ssk4, PolarCodeSpec::new(5, 9..32).unwrap(), 5).unwrap();
        for frame in 0..20 {
            let d = FrameDraw::draw(&ssk, 16, mlc.k(), Fading::Fast, 1, frame);
            let ks = mlc_encode(&d.message, &mlc).unwrap();
            let r = msd_receive(&d.receive(&ks, 0.0), &d.channels, &mlc, &d.message).unwrap();
            assert!(!r.frame_error);
            assert_eq!(r.decoded_message, d.message);

            let d = FrameDraw::draw(&ssk4, 16, bicm.k(), Fading::Fast, 2, frame);
            let ks = bicm_encode(&d.message, &bicm).unwrap();
            let r = bicm_receive(&d.receive(&ks, 0.0), &d.channels, &bicm, &d.message).unwrap();
            assert!(!r.frame_error);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = toy_mlc(2, 4, &[1, 1]);
        let d = FrameDraw::draw(&spec.ssk, 4, 2, Fading::Fast, 1, 0);
        let ks = mlc_encode(&d.message, &spec).unwrap();
        let y = d.receive(&ks, 0.1);
        assert!(msd_receive(&y[..3], &d.channels, &spec, &d.message).is_err());
    }

    #[test]
    fn quasi_static_repeats_channel() {
        let ssk = SskConfig::new(4, 2, 0.0).unwrap();
        let d = FrameDraw::draw(&ssk, 8, 4, Fading::QuasiStatic, 3, 0);
        assert!(d.channels.windows(2).all(|w| w[0] == w[1]));
        let f = FrameDraw::draw(&ssk, 8, 4, Fading::Fast, 3, 0);
        assert_ne!(f.channels[0], f.channels[1]);
    }
}
