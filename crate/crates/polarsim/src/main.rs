//! Command-line driver for the experiment pipeline.
//!
//! One subcommand per stage (`compress`, `map`, `simulate`, `eic`,
//! `report`) plus `selftest`. Every stage takes the same flags: a config
//! file, an output root, and knob overrides. Artifacts land in
//! `<out>/<config-hash prefix>/`, so reruns and sweeps never clobber each
//! other.
//!
//! Exit codes: `0` success, `2` config/usage errors (bad config, stage
//! order, corrupt artifacts), `3` constraint-verification failure, `4`
//! oracle-equivalence failure, `1` anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use polarsim::pipeline::{load_config, run_stage, selftest, Overrides, Stage};

#[derive(Parser)]
#[command(
    name = "polarsim",
    version,
    about = "Compression and simulation toolkit for polarized ReRAM crossbar accelerators",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every pipeline stage.
#[derive(Args)]
struct StageArgs {
    /// Experiment config file (JSON); defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output root; artifacts go to `<out>/<first 16 config-hash hex>/`.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Override the training and variation seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the fragment size `m`.
    #[arg(long, value_name = "M")]
    fragment_size: Option<usize>,

    /// Override the weight resolution in bits.
    #[arg(long, value_name = "BITS")]
    quant_bits: Option<u32>,

    /// Override the simulated ADC resolution in bits.
    #[arg(long, value_name = "BITS")]
    adc_bits: Option<u32>,

    /// Disable input zero-skipping in the simulation.
    #[arg(long)]
    no_skip: bool,

    /// Override the lognormal cell-variation spread.
    #[arg(long, value_name = "SIGMA")]
    sigma: Option<f64>,

    /// Override the comparison baseline (isaac or polarized-m{4,8,16}).
    #[arg(long, value_name = "DESIGN")]
    baseline: Option<String>,
}

impl StageArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            fragment_size: self.fragment_size,
            quant_bits: self.quant_bits,
            adc_bits: self.adc_bits,
            no_skip: self.no_skip,
            sigma: self.sigma,
            baseline: self.baseline.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train, run the compression phases, and verify the constraints.
    Compress(StageArgs),
    /// Place the compressed weights onto crossbar arrays.
    Map(StageArgs),
    /// Run bit-serial inference over the test split.
    Simulate(StageArgs),
    /// Export the effective-input-cycle histograms as CSV.
    Eic(StageArgs),
    /// Roll the run up into performance, energy, and comparison reports.
    Report(StageArgs),
    /// Check the simulator against its independent oracles.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> polarsim::Result<()> {
    let (stage, args) = match command {
        Command::Selftest => {
            for check in selftest()? {
                println!("ok {:<12} {}", check.name, check.detail);
            }
            println!("self-test passed");
            return Ok(());
        }
        Command::Compress(a) => (Stage::Compress, a),
        Command::Map(a) => (Stage::Map, a),
        Command::Simulate(a) => (Stage::Simulate, a),
        Command::Eic(a) => (Stage::Eic, a),
        Command::Report(a) => (Stage::Report, a),
    };
    let config = load_config(args.config.as_deref(), &args.overrides())?;
    let outcome = run_stage(stage, &config, &args.out)?;
    println!("stage {stage} finished in {}", outcome.dir.display());
    for (name, hash) in &outcome.manifest.outputs {
        println!("  {name}  sha256:{}", &hash[..16]);
    }
    println!("  {}", outcome.manifest_path.display());
    Ok(())
}
