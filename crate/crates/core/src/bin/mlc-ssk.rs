use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mlc_ssk::sim::{self, Arm, ExperimentConfig, Mode};

/// Multilevel polar-coded SSK: capacity curves, code design and BER sweeps.
///
/// Settings come from an optional JSON config file; every flag overrides
/// the config key of the same name.
#[derive(Debug, Parser)]
#[command(name = "mlc-ssk", version)]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Transmit antennas.
    #[arg(long)]
    nt: Option<usize>,
    /// Receive antennas.
    #[arg(long)]
    nr: Option<usize>,
    /// Component code length N.
    #[arg(long)]
    n: Option<usize>,
    /// Target rate in bits per channel use (design mode).
    #[arg(long)]
    bpcu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    snr_start: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    snr_stop: Option<f64>,
    #[arg(long)]
    snr_step: Option<f64>,
    #[arg(long)]
    frames_max: Option<u64>,
    /// Frame errors after which a point stops.
    #[arg(long)]
    fe_limit: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Design file (written in design mode, read in BER mode).
    #[arg(long)]
    design: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    arm: Option<Arm>,
    /// Monte-Carlo trials per capacity estimate.
    #[arg(long)]
    capacity_frames: Option<u64>,
    /// Samples for reliability estimation.
    #[arg(long)]
    samples: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Zero the noise at every point (debugging).
    #[arg(long)]
    noiseless: bool,
}

impl Cli {
    fn into_config(self) -> mlc_ssk::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $key:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$key = v; })*
            };
        }
        set!(
            mode => mode, nt => nt, nr => nr, n => n, snr_start => snr_start, snr_stop => snr_stop,
            snr_step => snr_step, frames_max => frames_max, fe_limit => fe_limit, seed => seed,
            arm => arm, capacity_frames => capacity_frames, samples => construction_samples,
            threads => threads,
        );
        if self.bpcu.is_some() {
            c.target_bpcu = self.bpcu;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        if c.mode == Mode::Design && self.design.is_some() && c.out.is_none() {
            c.out = self.design.clone();
        }
        if self.design.is_some() {
            c.design = self.design;
        }
        c.noiseless |= self.noiseless;
        Ok(c)
    }
}

fn main() -> ExitCode {
    let result = Cli::parse().into_config().and_then(|c| sim::run(&c));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mlc-ssk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
