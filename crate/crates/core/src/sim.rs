//! Experiment orchestration: capacity sweeps, code design and BER sweeps.
//!
//! Output formats:
//!
//! * capacity CSV: `es_n0_db,c_total,c1..cM,se_total,se1..seM`
//! * BER CSV: `arm,es_n0_db,frames,bit_errors,frame_errors,ber,fer`
//! * design file: JSON, see [`DesignFile`]
//!
//! Each CSV starts with a `#` line naming the schema version. Information
//! sets in design files are 0-based.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capacity::{self, estimate_capacities, find_design_snr, CapacityReport};
use crate::construction::{self, allocate_rates, estimate_reliabilities_with, most_reliable, segregate};
use crate::error::{Error, Result};
use crate::mlc_link::{
    bicm_encode, bicm_receive_with, mlc_encode, msd_receive_with, BicmSystemSpec, Fading, FrameDraw, MlcSystemSpec,
    MsdObserver, ReceiverOptions,
};
use crate::par;
use crate::polar::PolarCodeSpec;
use crate::ssk_channel::{SnrConvention, SskConfig};

pub const CAPACITY_CSV_VERSION: &str = "# mlc-ssk capacity v1";
pub const BER_CSV_VERSION: &str = "# mlc-ssk ber v1";
pub const DESIGN_VERSION: u32 = 1;

/// Frames simulated between two checks of the stopping rule.
const BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Capacity,
    Design,
    Ber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Mlc,
    Bicm,
    Both,
}

impl Arm {
    fn tag(self) -> &'static str {
        match self {
            Arm::Mlc => "mlc",
            Arm::Bicm => "bicm",
            Arm::Both => "both",
        }
    }
}

/// Experiment settings; every field has a JSON key of the same name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub nt: usize,
    pub nr: usize,
    /// Component code length `N`.
    pub n: usize,
    pub target_bpcu: Option<f64>,
    pub snr_start: f64,
    pub snr_stop: f64,
    pub snr_step: f64,
    pub frames_max: u64,
    pub fe_limit: u64,
    pub seed: u64,
    pub design: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub arm: Arm,
    /// Monte-Carlo trials per capacity estimate.
    pub capacity_frames: u64,
    /// Samples for reliability estimation.
    pub construction_samples: u64,
    /// Width of the final design-SNR bracket, dB.
    pub tol_db: f64,
    pub interleaver_seed: u64,
    pub convention: SnrConvention,
    pub fading: Fading,
    pub receiver: ReceiverOptions,
    /// Debug switch: zero noise variance at every point.
    pub noiseless: bool,
    /// Worker threads, 0 for the default pool.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Ber,
            nt: 16,
            nr: 1,
            n: 256,
            target_bpcu: None,
            snr_start: 0.0,
            snr_stop: 10.0,
            snr_step: 1.0,
            frames_max: 5_000_000,
            fe_limit: 100,
            seed: 1,
            design: None,
            out: None,
            arm: Arm::Both,
            capacity_frames: capacity::DESIGN_FRAMES,
            construction_samples: construction::DEFAULT_SAMPLES,
            tol_db: 0.02,
            interleaver_seed: 0x5eed,
            convention: SnrConvention::default(),
            fading: Fading::default(),
            receiver: ReceiverOptions::default(),
            noiseless: false,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The SNR grid `start, start + step, …` up to `stop` inclusive.
    pub fn snr_grid(&self) -> Result<Vec<f64>> {
        if self.snr_step.is_nan() || self.snr_step <= 0.0 || !self.snr_start.is_finite() || !self.snr_stop.is_finite() {
            return Err(Error::Validation("SNR step must be positive and bounds finite".into()));
        }
        let count = ((self.snr_stop - self.snr_start) / self.snr_step + 1e-9).floor();
        if count < 0.0 {
            return Err(Error::Validation(format!(
                "empty SNR grid: start {} > stop {}",
                self.snr_start, self.snr_stop
            )));
        }
        Ok((0..=count as usize)
            .map(|i| round_db(self.snr_start + i as f64 * self.snr_step))
            .collect())
    }

    pub fn ssk(&self) -> Result<SskConfig> {
        SskConfig::new(self.nt, self.nr, self.snr_start).map(|c| c.with_convention(self.convention))
    }

    pub fn validate(&self) -> Result<()> {
        self.ssk().map_err(|e| Error::Validation(e.to_string()))?;
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(Error::Validation(format!(
                "component length {} is not a power of two ≥ 2",
                self.n
            )));
        }
        if self.frames_max < 1 {
            return Err(Error::Validation("frames_max must be at least 1".into()));
        }
        if self.fe_limit < 1 {
            return Err(Error::Validation("fe_limit must be at least 1".into()));
        }
        if self.mode != Mode::Design {
            self.snr_grid()?;
        }
        Ok(())
    }
}

/// Grid values are printed with fixed precision; strip accumulation noise.
fn round_db(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Sweeps the SNR grid and writes one capacity row per point. With an
/// output path, the full reports also go to the same path with a `.json`
/// extension.
pub fn run_capacity(config: &ExperimentConfig) -> Result<Vec<CapacityReport>> {
    config.validate()?;
    let grid = config.snr_grid()?;
    let base = config.ssk()?;
    let m_a = base.bits_per_symbol();
    let out_path = config.out.as_deref();
    let mut w = sink(out_path)?;
    let io_err = |e| Error::io(out_path.unwrap_or(Path::new("<stdout>")), e);

    let mut header = vec!["es_n0_db".to_string(), "c_total".to_string()];
    header.extend((1..=m_a).map(|i| format!("c{i}")));
    header.push("se_total".into());
    header.extend((1..=m_a).map(|i| format!("se{i}")));
    writeln!(w, "{CAPACITY_CSV_VERSION}").map_err(io_err)?;
    writeln!(w, "{}", header.join(",")).map_err(io_err)?;

    let mut reports = Vec::with_capacity(grid.len());
    for &db in &grid {
        let mut cfg = base.with_snr(db);
        if config.noiseless {
            cfg = cfg.noiseless();
        }
        let r = estimate_capacities(&cfg, config.capacity_frames, config.seed)?;
        let mut row = vec![format!("{db:.4}"), format!("{:.8}", r.total_capacity)];
        row.extend(r.level_capacity.iter().map(|c| format!("{c:.8}")));
        row.push(format!("{:.8}", r.total_std_error));
        row.extend(r.level_std_error.iter().map(|c| format!("{c:.8}")));
        writeln!(w, "{}", row.join(",")).map_err(io_err)?;
        w.flush().map_err(io_err)?;
        reports.push(r);
    }
    if let Some(p) = out_path {
        let json = p.with_extension("json");
        let mut jw = create(&json)?;
        serde_json::to_writer_pretty(&mut jw, &reports)?;
        jw.flush().map_err(|e| Error::io(&json, e))?;
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SskDims {
    pub nt: usize,
    pub nr: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDesign {
    pub n_exp: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub info_set: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicmDesign {
    #[serde(rename = "K")]
    pub k: usize,
    pub info_set: Vec<usize>,
    pub interleaver_seed: u64,
}

/// Multilevel and BICM codes designed for one SSK mode and target rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub version: u32,
    pub ssk: SskDims,
    pub dsnr_db: f64,
    pub seed: u64,
    pub levels: Vec<LevelDesign>,
    pub bicm: BicmDesign,
    #[serde(default)]
    pub convention: SnrConvention,
    #[serde(default)]
    pub target_bpcu: Option<f64>,
    #[serde(default)]
    pub level_capacity: Vec<f64>,
    #[serde(default)]
    pub construction_samples: u64,
}

impl DesignFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let d: DesignFile = serde_json::from_str(&text)?;
        if d.version != DESIGN_VERSION {
            return Err(Error::Validation(format!(
                "unsupported design file version {}",
                d.version
            )));
        }
        Ok(d)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn k(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.k).collect()
    }

    /// Builds both transceivers for `ssk` (whose SNR is set per point).
    pub fn systems(&self, ssk: SskConfig) -> Result<(MlcSystemSpec, BicmSystemSpec)> {
        let levels = self
            .levels
            .iter()
            .map(|l| {
                if l.k != l.info_set.len() {
                    return Err(Error::Validation(format!(
                        "K = {} but {} info indices",
                        l.k,
                        l.info_set.len()
                    )));
                }
                PolarCodeSpec::new(l.n_exp, l.info_set.iter().copied())
            })
            .collect::<Result<Vec<_>>>()?;
        let mlc = MlcSystemSpec::new(ssk, levels)?;
        let total = mlc.frame_len() * ssk.bits_per_symbol();
        if self.bicm.k != self.bicm.info_set.len() {
            return Err(Error::Validation("BICM K does not match its info set".into()));
        }
        let code = PolarCodeSpec::new(total.trailing_zeros(), self.bicm.info_set.iter().copied())?;
        let bicm = BicmSystemSpec::new(ssk, code, self.bicm.interleaver_seed)?;
        Ok((mlc, bicm))
    }
}

/// Design-SNR search, capacity-rule allocation, reliability estimation and
/// segregation; writes the design file when an output path is set.
pub fn run_design(config: &ExperimentConfig) -> Result<DesignFile> {
    config.validate()?;
    let target = config
        .target_bpcu
        .ok_or_else(|| Error::Validation("design mode needs a target rate (--bpcu)".into()))?;
    if target.is_nan() || target <= 0.0 {
        return Err(Error::Validation(format!(
            "target rate {target} bpcu would freeze every bit; it must be positive"
        )));
    }
    let ssk = config.ssk()?;
    let dsnr = find_design_snr(&ssk, target, config.tol_db, config.capacity_frames, config.seed)?;
    let report = estimate_capacities(&ssk.with_snr(dsnr), config.capacity_frames, config.seed)?;
    let alloc = allocate_rates(&report, config.n)?;
    if alloc.total_k() == 0 {
        return Err(Error::Validation(
            "capacity-rule allocation left every level empty".into(),
        ));
    }
    let m_a = ssk.bits_per_symbol();
    let profile = estimate_reliabilities_with(
        m_a * config.n,
        dsnr,
        config.convention,
        config.construction_samples,
        config.seed,
    )?;
    let levels = segregate(&profile, &alloc)?;
    let bicm = most_reliable(&profile, alloc.total_k())?;
    let design = DesignFile {
        version: DESIGN_VERSION,
        ssk: SskDims {
            nt: config.nt,
            nr: config.nr,
        },
        dsnr_db: dsnr,
        seed: config.seed,
        levels: levels
            .iter()
            .map(|c| LevelDesign {
                n_exp: c.n_exp(),
                k: c.k(),
                info_set: c.info_set().to_vec(),
            })
            .collect(),
        bicm: BicmDesign {
            k: bicm.k(),
            info_set: bicm.info_set().to_vec(),
            interleaver_seed: config.interleaver_seed,
        },
        convention: config.convention,
        target_bpcu: Some(target),
        level_capacity: report.level_capacity.clone(),
        construction_samples: config.construction_samples,
    };
    if let Some(p) = &config.out {
        design.write(p)?;
    }
    Ok(design)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub arm: Arm,
    pub es_n0_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub ber: f64,
    pub fer: f64,
}

impl BerRecord {
    fn csv_row(&self) -> String {
        format!(
            "{},{:.4},{},{},{},{:.6e},{:.6e}",
            self.arm.tag(),
            self.es_n0_db,
            self.frames,
            self.bit_errors,
            self.frame_errors,
            self.ber,
            self.fer
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    frames: u64,
    bit_errors: u64,
    frame_errors: u64,
    done: bool,
}

impl Tally {
    fn add(&mut self, bit_errors: usize, frames_max: u64, fe_limit: u64) {
        if self.done {
            return;
        }
        self.frames += 1;
        self.bit_errors += bit_errors as u64;
        self.frame_errors += u64::from(bit_errors > 0);
        self.done = self.frame_errors >= fe_limit || self.frames >= frames_max;
    }

    fn record(&self, arm: Arm, db: f64, k: usize) -> BerRecord {
        let f = self.frames.max(1) as f64;
        BerRecord {
            arm,
            es_n0_db: db,
            frames: self.frames,
            bit_errors: self.bit_errors,
            frame_errors: self.frame_errors,
            ber: self.bit_errors as f64 / (f * k as f64),
            fer: self.frame_errors as f64 / f,
        }
    }
}

/// Stopping rule and randomness of one simulated SNR point.
#[derive(Debug, Clone, Copy)]
pub struct PointPlan {
    pub es_n0_db: f64,
    pub frames_max: u64,
    pub fe_limit: u64,
    pub seed: u64,
    /// Separates the frame streams of different points.
    pub stream_offset: u64,
    pub fading: Fading,
    pub receiver: ReceiverOptions,
    pub noiseless: bool,
}

struct Noop;
impl MsdObserver for Noop {}

/// Simulates one SNR point. Every frame is drawn once and fed to each
/// active arm; an arm stops at exactly the frame where its frame-error
/// count reaches the limit (or at `frames_max`).
pub fn simulate_point(
    mlc: &MlcSystemSpec,
    bicm: &BicmSystemSpec,
    arm: Arm,
    plan: &PointPlan,
) -> Result<Vec<BerRecord>> {
    if mlc.k() != bicm.k() || mlc.frame_len() != bicm.frame_len() {
        return Err(Error::Validation(format!(
            "arms differ: MLC carries {} bits over {} symbols, BICM {} over {}",
            mlc.k(),
            mlc.frame_len(),
            bicm.k(),
            bicm.frame_len()
        )));
    }
    let mut ssk = mlc.ssk.with_snr(plan.es_n0_db);
    if plan.noiseless {
        ssk = ssk.noiseless();
    }
    let n0 = ssk.noise_variance();
    let mlc = MlcSystemSpec::new(ssk, mlc.levels().to_vec())?;
    let bicm = BicmSystemSpec::with_interleaver(ssk, bicm.code().clone(), bicm.interleaver().to_vec())?;
    let (k, symbols) = (mlc.k(), mlc.frame_len());
    let run_mlc = matches!(arm, Arm::Mlc | Arm::Both);
    let run_bicm = matches!(arm, Arm::Bicm | Arm::Both);

    let mut t_mlc = Tally {
        done: !run_mlc,
        ..Tally::default()
    };
    let mut t_bicm = Tally {
        done: !run_bicm,
        ..Tally::default()
    };
    let mut next = 0u64;
    while !(t_mlc.done && t_bicm.done) {
        let (want_mlc, want_bicm) = (!t_mlc.done, !t_bicm.done);
        let batch = BATCH.min((plan.frames_max - next) as usize);
        let results = par::map_indexed(batch, |i| -> Result<(usize, usize)> {
            let frame = plan.stream_offset + next + i as u64;
            let d = FrameDraw::draw(&ssk, symbols, k, plan.fading, plan.seed, frame);
            let mut errs = (0, 0);
            if want_mlc {
                let ks = mlc_encode(&d.message, &mlc)?;
                let y = d.receive(&ks, n0);
                errs.0 = msd_receive_with(&y, &d.channels, &mlc, &d.message, plan.receiver, &mut Noop)?.bit_errors;
            }
            if want_bicm {
                let ks = bicm_encode(&d.message, &bicm)?;
                let y = d.receive(&ks, n0);
                errs.1 = bicm_receive_with(&y, &d.channels, &bicm, &d.message, plan.receiver)?.bit_errors;
            }
            Ok(errs)
        });
        for r in results {
            let (a, b) = r?;
            t_mlc.add(a, plan.frames_max, plan.fe_limit);
            t_bicm.add(b, plan.frames_max, plan.fe_limit);
        }
        next += batch as u64;
    }
    let mut out = Vec::new();
    if run_mlc {
        out.push(t_mlc.record(Arm::Mlc, plan.es_n0_db, k));
    }
    if run_bicm {
        out.push(t_bicm.record(Arm::Bicm, plan.es_n0_db, k));
    }
    Ok(out)
}

/// Runs the BER sweep for a design, appending rows to the output as each
/// point completes.
pub fn run_ber(config: &ExperimentConfig, design: &DesignFile) -> Result<Vec<BerRecord>> {
    config.validate()?;
    if design.ssk.nt != config.nt || design.ssk.nr != config.nr {
        return Err(Error::Validation(format!(
            "design is for {}×{} SSK, configuration asks for {}×{}",
            design.ssk.nt, design.ssk.nr, config.nt, config.nr
        )));
    }
    if design.levels.iter().any(|l| 1usize << l.n_exp != config.n) {
        return Err(Error::Validation(format!(
            "design component length differs from N = {}",
            config.n
        )));
    }
    if design.convention != config.convention {
        return Err(Error::Validation(
            "design and configuration use different SNR conventions".into(),
        ));
    }
    let (mlc, bicm) = design.systems(config.ssk()?)?;
    let grid = config.snr_grid()?;
    let out_path = config.out.as_deref();
    let mut w = sink(out_path)?;
    let io_err = |e| Error::io(out_path.unwrap_or(Path::new("<stdout>")), e);
    writeln!(w, "{BER_CSV_VERSION}").map_err(io_err)?;
    writeln!(w, "arm,es_n0_db,frames,bit_errors,frame_errors,ber,fer").map_err(io_err)?;
    w.flush().map_err(io_err)?;

    let mut records = Vec::new();
    for (p, &db) in grid.iter().enumerate() {
        let plan = PointPlan {
            es_n0_db: db,
            frames_max: config.frames_max,
            fe_limit: config.fe_limit,
            seed: config.seed,
            stream_offset: (p as u64) << 40,
            fading: config.fading,
            receiver: config.receiver,
            noiseless: config.noiseless,
        };
        for r in simulate_point(&mlc, &bicm, config.arm, &plan)? {
            writeln!(w, "{}", r.csv_row()).map_err(io_err)?;
            records.push(r);
        }
        w.flush().map_err(io_err)?;
    }
    Ok(records)
}

/// Dispatches on `config.mode`.
pub fn run(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    par::with_threads(config.threads, || match config.mode {
        Mode::Capacity => run_capacity(config).map(|_| ()),
        Mode::Design => run_design(config).map(|_| ()),
        Mode::Ber => {
            let path = config
                .design
                .as_deref()
                .ok_or_else(|| Error::Validation("BER mode needs a design file (--design)".into()))?;
            run_ber(config, &DesignFile::read(path)?).map(|_| ())
        }
    })
}

/// SNR at which a BER curve crosses `target`, by linear interpolation of
/// `log10(ber)` between the first pair of grid points that brackets it.
pub fn crossing_snr(points: &[(f64, f64)], target: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let ((x0, b0), (x1, b1)) = (w[0], w[1]);
        if b0 >= target && b1 < target && b1 > 0.0 {
            let (l0, l1, lt) = (b0.log10(), b1.log10(), target.log10());
            Some(x0 + (lt - l0) * (x1 - x0) / (l1 - l0))
        } else {
            None
        }
    })
}

/// `(es_n0_db, ber)` pairs of one arm, in grid order.
pub fn curve(records: &[BerRecord], arm: Arm) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter(|r| r.arm == arm)
        .map(|r| (r.es_n0_db, r.ber))
        .collect()
}
