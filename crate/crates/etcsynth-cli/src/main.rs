use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use etcsynth_cli::commands::{
    cmd_acquire, cmd_design, cmd_reproduce, cmd_simulate, cmd_verify, DEFAULT_SEED,
};
use etcsynth_cli::config::PipelineConfig;
use etcsynth_cli::error::{CliError, EXIT_VERIFY};

/// Data-driven event-triggered controller synthesis.
///
/// A pipeline lives in one output directory: `acquire` runs the open-loop
/// experiment, `design` solves the synthesis programs, `simulate`
/// integrates the closed loop, and `verify` re-derives every certificate
/// from the stored files. `reproduce` drives a bundled scenario end to
/// end.
#[derive(Parser)]
#[command(name = "etcsynth", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the open-loop experiment and store the data matrices.
    Acquire(StageArgs),
    /// Solve the synthesis programs and store the design report.
    Design(StageArgs),
    /// Integrate the event-triggered loop and store trajectory logs.
    Simulate(StageArgs),
    /// Re-verify every certificate behind a stored design.
    Verify(StageArgs),
    /// Run a bundled scenario (1: exact data, 2: mixed rule under noise,
    /// 3: time-regularized rule under noise).
    Reproduce {
        /// Scenario number, 1 through 3.
        example: u8,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct StageArgs {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    /// Root seed; every stage derives its own stream from it.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Pipeline output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps; 0 keeps the runtime default.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Acquire(a) => {
            let cfg = PipelineConfig::load(&a.config)?;
            cmd_acquire(&cfg, &a.common.out, a.common.seed)?;
        }
        Cmd::Design(a) => {
            let cfg = PipelineConfig::load(&a.config)?;
            cmd_design(&cfg, &a.common.out, a.common.seed)?;
        }
        Cmd::Simulate(a) => {
            let cfg = PipelineConfig::load(&a.config)?;
            cmd_simulate(&cfg, &a.common.out, a.common.seed)?;
        }
        Cmd::Verify(a) => {
            let cfg = PipelineConfig::load(&a.config)?;
            let outcome = cmd_verify(&cfg, &a.common.out, a.common.seed)?;
            if !outcome.all_pass {
                let failed = outcome.checks.iter().filter(|c| !c.pass).count();
                return Err(CliError::Verification(format!(
                    "{failed} verification check(s) failed"
                )));
            }
        }
        Cmd::Reproduce { example, common } => {
            cmd_reproduce(example, &common.out, common.seed, common.jobs)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

// Referenced so the constant stays in sync with the error module.
const _: () = assert!(EXIT_VERIFY == 3);
