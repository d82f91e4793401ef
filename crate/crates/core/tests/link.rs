use mlc_ssk::mlc_link::{
    bicm_decoder_input, bicm_encode, bicm_receive, mlc_encode, msd_receive, msd_receive_with, BicmSystemSpec, Fading,
    FrameDraw, MlcSystemSpec, MsdObserver, ReceiverOptions,
};
use mlc_ssk::polar::{encode, PolarCodeSpec, LLR_CLAMP};
use mlc_ssk::sim::{simulate_point, Arm, PointPlan};
use mlc_ssk::ssk_channel::{DemapRule, SskConfig};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_code(rng: &mut ChaCha8Rng, n_exp: u32) -> PolarCodeSpec {
    let n = 1usize << n_exp;
    let k = rng.random_range(0..=n);
    PolarCodeSpec::new(n_exp, sample(rng, n, k)).unwrap()
}

#[test]
fn noiseless_end_to_end_for_random_specs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..100u64 {
        let m_a = rng.random_range(1..=5usize);
        let nr = rng.random_range(1..=3);
        let ssk = SskConfig::new(1 << m_a, nr, 0.0).unwrap().noiseless();
        let n_exp = rng.random_range(3..=6);
        let mlc = MlcSystemSpec::new(ssk, (0..m_a).map(|_| random_code(&mut rng, n_exp)).collect()).unwrap();
        let d = FrameDraw::draw(&ssk, mlc.frame_len(), mlc.k(), Fading::Fast, 4, case);
        let y = d.receive(&mlc_encode(&d.message, &mlc).unwrap(), 0.0);
        let r = msd_receive(&y, &d.channels, &mlc, &d.message).unwrap();
        assert_eq!(r.decoded_message, d.message, "case {case}");

        // BICM needs m_a | length; 2-, 4- and 16-SSK with power-of-two lengths.
        let m_b = [1usize, 2, 4][case as usize % 3];
        let ssk_b = SskConfig::new(1 << m_b, nr, 0.0).unwrap().noiseless();
        let code = random_code(&mut rng, n_exp + 2);
        let bicm = BicmSystemSpec::new(ssk_b, code, case).unwrap();
        let d = FrameDraw::draw(&ssk_b, bicm.frame_len(), bicm.k(), Fading::Fast, 5, case);
        let y = d.receive(&bicm_encode(&d.message, &bicm).unwrap(), 0.0);
        let r = bicm_receive(&y, &d.channels, &bicm, &d.message).unwrap();
        assert_eq!(r.decoded_message, d.message, "case {case}");
    }
}

fn design_16(ssk: SskConfig, seed: u64) -> MlcSystemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ks = [10, 20, 32, 44];
    let levels = ks
        .iter()
        .map(|&k| PolarCodeSpec::new(6, sample(&mut rng, 64, k)).unwrap())
        .collect();
    MlcSystemSpec::new(ssk, levels).unwrap()
}

/// Records what each stage is allowed to see.
#[derive(Default)]
struct Recorder {
    seen: Vec<(usize, Vec<Vec<u8>>)>,
    decided: Vec<Vec<u8>>,
}

impl MsdObserver for Recorder {
    fn before_demap(&mut self, level: usize, priors: &[Vec<u8>]) {
        self.seen.push((level, priors.to_vec()));
    }
    fn after_decode(&mut self, _level: usize, codeword: &mut Vec<u8>) {
        self.decided.push(codeword.clone());
    }
}

#[test]
fn stages_only_see_lower_levels() {
    let ssk = SskConfig::new(16, 1, 4.0).unwrap();
    let mlc = design_16(ssk, 1);
    for frame in 0..20 {
        let d = FrameDraw::draw(&ssk, 64, mlc.k(), Fading::Fast, 9, frame);
        let y = d.receive(&mlc_encode(&d.message, &mlc).unwrap(), ssk.noise_variance());
        let mut rec = Recorder::default();
        msd_receive_with(&y, &d.channels, &mlc, &d.message, ReceiverOptions::default(), &mut rec).unwrap();
        assert_eq!(rec.seen.len(), 4);
        for (idx, (level, priors)) in rec.seen.iter().enumerate() {
            assert_eq!(*level, idx + 1);
            assert_eq!(priors.len(), idx);
            assert_eq!(priors[..], rec.decided[..idx]);
        }
    }
}

/// Replaces the decisions of chosen levels before they feed later stages.
struct Override {
    level: usize,
    codeword: Vec<u8>,
}

impl MsdObserver for Override {
    fn after_decode(&mut self, level: usize, codeword: &mut Vec<u8>) {
        if level == self.level {
            codeword.clone_from(&self.codeword);
        }
    }
}

fn split_codewords(mlc: &MlcSystemSpec, message: &[u8]) -> Vec<Vec<u8>> {
    let mut rest = message;
    mlc.levels()
        .iter()
        .map(|c| {
            let (chunk, tail) = rest.split_at(c.k());
            rest = tail;
            encode(chunk, c).unwrap()
        })
        .collect()
}

#[test]
fn corrupted_decisions_propagate_upward_only() {
    let ssk = SskConfig::new(16, 1, 12.0).unwrap();
    let mlc = design_16(ssk, 2);
    let ks: Vec<usize> = mlc.levels().iter().map(|c| c.k()).collect();
    let mut later_damage = 0;
    for frame in 0..30 {
        let d = FrameDraw::draw(&ssk, 64, mlc.k(), Fading::Fast, 10, frame);
        let y = d.receive(&mlc_encode(&d.message, &mlc).unwrap(), ssk.noise_variance());
        let clean = msd_receive(&y, &d.channels, &mlc, &d.message).unwrap();
        // Flip every bit of the level-2 decision.
        let truth = split_codewords(&mlc, &d.message);
        let mut ov = Override {
            level: 2,
            codeword: truth[1].iter().map(|b| b ^ 1).collect(),
        };
        let bad = msd_receive_with(&y, &d.channels, &mlc, &d.message, ReceiverOptions::default(), &mut ov).unwrap();
        let head = ks[0] + ks[1];
        assert_eq!(bad.decoded_message[..head], clean.decoded_message[..head]);
        later_damage += bad.decoded_message[head..]
            .iter()
            .zip(&d.message[head..])
            .filter(|(a, b)| a != b)
            .count();
    }
    assert!(later_damage > 0);
}

#[test]
fn genie_priors_never_hurt_on_average() {
    let ssk = SskConfig::new(16, 1, 5.0).unwrap();
    let mlc = design_16(ssk, 3);
    let (mut plain, mut genie) = (0usize, 0usize);
    for frame in 0..200 {
        let d = FrameDraw::draw(&ssk, 64, mlc.k(), Fading::Fast, 11, frame);
        let y = d.receive(&mlc_encode(&d.message, &mlc).unwrap(), ssk.noise_variance());
        plain += msd_receive(&y, &d.channels, &mlc, &d.message).unwrap().bit_errors;
        struct Genie(Vec<Vec<u8>>);
        impl MsdObserver for Genie {
            fn after_decode(&mut self, level: usize, codeword: &mut Vec<u8>) {
                codeword.clone_from(&self.0[level - 1]);
            }
        }
        let mut g = Genie(split_codewords(&mlc, &d.message));
        genie += msd_receive_with(&y, &d.channels, &mlc, &d.message, ReceiverOptions::default(), &mut g)
            .unwrap()
            .bit_errors;
    }
    assert!(plain > 0);
    assert!(genie <= plain, "genie {genie} > plain {plain}");
}

#[test]
fn single_bit_ssk_msd_equals_bicm() {
    // 2×1: one level, so both receivers demap the same pairwise LLR.
    let ssk = SskConfig::new(2, 1, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let code = random_code(&mut rng, 7);
    let mlc = MlcSystemSpec::new(ssk, vec![code.clone()]).unwrap();
    let bicm = BicmSystemSpec::with_interleaver(ssk, code, (0..128).collect()).unwrap();
    let mut errors = 0;
    for frame in 0..100 {
        let d = FrameDraw::draw(&ssk, 128, mlc.k(), Fading::Fast, 6, frame);
        let a = mlc_encode(&d.message, &mlc).unwrap();
        assert_eq!(a, bicm_encode(&d.message, &bicm).unwrap());
        let y = d.receive(&a, ssk.noise_variance());
        let r1 = msd_receive(&y, &d.channels, &mlc, &d.message).unwrap();
        let r2 = bicm_receive(&y, &d.channels, &bicm, &d.message).unwrap();
        assert_eq!(r1, r2);
        errors += r1.bit_errors;
    }
    assert!(errors > 0);
}

#[test]
fn bicm_plumbing_matches_hand_built_llrs() {
    let ssk = SskConfig::new(16, 2, 0.0).unwrap();
    let n0 = ssk.noise_variance();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let bicm = BicmSystemSpec::new(ssk, random_code(&mut rng, 8), 17).unwrap();
    let d = FrameDraw::draw(&ssk, 64, bicm.k(), Fading::Fast, 7, 0);
    let y = d.receive(&bicm_encode(&d.message, &bicm).unwrap(), n0);
    let got = bicm_decoder_input(&y, &d.channels, &bicm, DemapRule::Exact).unwrap();
    let perm = bicm.interleaver();
    let mut want = vec![f64::NAN; 256];
    for (p, &code_pos) in perm.iter().enumerate() {
        let (t, j) = (p / 4, p % 4);
        let (mut s0, mut s1) = (0.0, 0.0);
        for k in 0..16 {
            let d2: f64 = y[t]
                .0
                .iter()
                .zip(d.channels[t].column(k))
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            let w = (-d2 / n0).exp();
            if (k >> j) & 1 == 0 {
                s0 += w;
            } else {
                s1 += w;
            }
        }
        want[code_pos] = (s0 / s1).ln().clamp(-LLR_CLAMP, LLR_CLAMP);
    }
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0), "{g} vs {w}");
    }
}

#[test]
fn shared_draws_make_arms_independent_of_each_other() {
    let ssk = SskConfig::new(16, 1, 4.0).unwrap();
    let mlc = design_16(ssk, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let info = sample(&mut rng, 256, mlc.k());
    let bicm = BicmSystemSpec::new(ssk, PolarCodeSpec::new(8, info).unwrap(), 3).unwrap();
    let plan = PointPlan {
        es_n0_db: 4.0,
        frames_max: 300,
        fe_limit: 20,
        seed: 2,
        stream_offset: 0,
        fading: Fading::Fast,
        receiver: ReceiverOptions::default(),
        noiseless: false,
    };
    let both = simulate_point(&mlc, &bicm, Arm::Both, &plan).unwrap();
    let only_mlc = simulate_point(&mlc, &bicm, Arm::Mlc, &plan).unwrap();
    let only_bicm = simulate_point(&mlc, &bicm, Arm::Bicm, &plan).unwrap();
    assert_eq!(both.len(), 2);
    assert_eq!(both[0], only_mlc[0]);
    assert_eq!(both[1], only_bicm[0]);
    // Frame f is the same draw for whichever arm consumes it.
    let a = FrameDraw::draw(&ssk, 64, mlc.k(), Fading::Fast, 2, 17);
    let b = FrameDraw::draw(&ssk, 64, mlc.k(), Fading::Fast, 2, 17);
    assert_eq!(a.message, b.message);
    assert_eq!(a.channels, b.channels);
}
