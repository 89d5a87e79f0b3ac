use std::path::PathBuf;
use std::process::ExitCode;

use amplitude_cli::{run, Command, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "amplitude", version, about = "Amplitude equations for SPDEs near a bifurcation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Derive the amplitude equation and write derive.json
    Derive { config: PathBuf },
    /// Simulate SPDE and amplitude paths at sim.epsilon
    Simulate { config: PathBuf },
    /// Error-scaling campaign over experiment.eps_grid
    Compare { config: PathBuf },
    /// Lyapunov scan over experiment.nu_grid
    Stability { config: PathBuf },
    /// OU stationary check and manifest verification
    Report { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, path) = match cli.command {
        Cmd::Derive { config } => (Command::Derive, config),
        Cmd::Simulate { config } => (Command::Simulate, config),
        Cmd::Compare { config } => (Command::Compare, config),
        Cmd::Stability { config } => (Command::Stability, config),
        Cmd::Report { config } => (Command::Report, config),
    };
    let result = RunConfig::load(&path).and_then(|cfg| {
        let summary = run(command, &cfg)?;
        Ok((cfg, summary))
    });
    match result {
        Ok((cfg, summary)) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            for f in &summary.files {
                println!("{}", cfg.output_dir.join(&f.path).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
