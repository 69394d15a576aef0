use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use twistgap::config::{RunConfig, Stage};
use twistgap::pipeline::{self, CheckStatus};

/// Band structures, gap-edge data and eigenvalue counting for periodically
/// twisted waveguides.
#[derive(Parser)]
#[command(name = "twistgap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chart the band functions and detect spectral gaps.
    Bands(StageArgs),
    /// Bands plus gap-edge analysis (extremizers, effective masses).
    Edges(StageArgs),
    /// Edges plus the periodic coupling functions.
    Coupling(StageArgs),
    /// Coupling plus effective-model counting curves and asymptotic fits.
    Count(StageArgs),
    /// Birman-Schwinger cross-check of the counting route.
    BsCheck(StageArgs),
    /// Truncated full-tube window counts.
    TubeCheck(StageArgs),
    /// All stages requested by the config.
    Run(StageArgs),
    /// Run and grade the expectations embedded in the config.
    Verify(StageArgs),
}

#[derive(clap::Args)]
struct StageArgs {
    /// Path to the JSON run configuration.
    config: PathBuf,
    /// Also emit plot-ready two-column series.
    #[arg(long)]
    plot: bool,
}

fn stages_for(command: &Command) -> Option<Vec<Stage>> {
    let upto = |s: Stage| {
        let mut v = s.prerequisites().to_vec();
        v.push(s);
        v
    };
    match command {
        Command::Bands(_) => Some(upto(Stage::Bands)),
        Command::Edges(_) => Some(upto(Stage::Edges)),
        Command::Coupling(_) => Some(upto(Stage::Coupling)),
        Command::Count(_) => Some(upto(Stage::Count)),
        Command::BsCheck(_) => Some(upto(Stage::BsCheck)),
        Command::TubeCheck(_) => Some(upto(Stage::TubeCheck)),
        Command::Run(_) | Command::Verify(_) => None,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Bands(a)
        | Command::Edges(a)
        | Command::Coupling(a)
        | Command::Count(a)
        | Command::BsCheck(a)
        | Command::TubeCheck(a)
        | Command::Run(a)
        | Command::Verify(a) => a,
    };

    let (mut config, text) = match RunConfig::from_path(&args.config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(stages) = stages_for(&cli.command) {
        config.stages = stages;
        if let Err(e) = config.validate() {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    }

    match &cli.command {
        Command::Verify(_) => match pipeline::verify(&config, &text) {
            Ok(v) => {
                print!("{}", v.matrix());
                for w in &v.run.data.warnings {
                    eprintln!("warning: {w}");
                }
                if v.all_passed() {
                    let skipped = v
                        .checks
                        .iter()
                        .filter(|c| matches!(c.status, CheckStatus::Skipped(_)))
                        .count();
                    println!(
                        "verify: {} checks, {} skipped, all passing",
                        v.checks.len(),
                        skipped
                    );
                    ExitCode::SUCCESS
                } else {
                    println!("verify: failures present");
                    ExitCode::FAILURE
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        _ => match pipeline::run(&config, &text, args.plot) {
            Ok(out) => {
                for w in &out.data.warnings {
                    eprintln!("warning: {w}");
                }
                println!(
                    "wrote {} artifact(s) to {}",
                    out.report.artifacts.len(),
                    out.out_dir.display()
                );
                for (gap, side, value) in &out.report.edge_values {
                    println!("edge gap={gap} side={side} value={value:.12e}");
                }
                for r in &out.report.regimes {
                    println!("regime gap={} side={} {}", r.gap_index, r.side, r.regime);
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
