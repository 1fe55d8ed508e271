use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bihj::config::{Mode, ScenarioConfig};
use bihj::oracle::CompositionCase;
use bihj::run::{emit_outputs, run, Command, FigureId, RunOptions};

#[derive(Parser)]
#[command(
    name = "bihj",
    version,
    about = "Bi-Hamilton-Jacobi trajectory laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output_dir, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reference run, fields, and trajectory congruences.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
    },
    /// Integral curves of v_A + v_B from curves of v_A.
    Compose {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_case)]
        case: Option<CompositionCase>,
    },
    /// ψ rebuilt from actions against the reference.
    Reconstruct {
        #[command(flatten)]
        common: Common,
    },
    /// Full acceptance suite.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form Gaussian values.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Plot-ready series.
    Figure {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_figure)]
        id: FigureId,
        #[arg(long, value_parser = parse_case)]
        case: Option<CompositionCase>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("expected reference or autonomous, got {s}"))
}

fn parse_case(s: &str) -> Result<CompositionCase, String> {
    CompositionCase::parse(s).ok_or_else(|| format!("expected i, ii, or converse, got {s}"))
}

fn parse_figure(s: &str) -> Result<FigureId, String> {
    FigureId::parse(s).ok_or_else(|| format!("expected fig2 or fig3, got {s}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut options = RunOptions::default();
    let mut mode = None;
    let (command, common) = match cli.command {
        Cmd::Simulate { common, mode: m } => {
            mode = m;
            (Command::Simulate, common)
        }
        Cmd::Compose { common, case } => {
            options.case = case;
            (Command::Compose, common)
        }
        Cmd::Reconstruct { common } => (Command::Reconstruct, common),
        Cmd::Verify { common } => (Command::Verify, common),
        Cmd::Oracle { common } => (Command::Oracle, common),
        Cmd::Figure { common, id, case } => {
            options.figure = Some(id);
            options.case = case;
            (Command::Figure, common)
        }
    };

    let mut config = match ScenarioConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(m) = mode {
        config.mode = m;
    }
    let out = common
        .out
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    let bundle = match run(command, &config, options) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for line in &bundle.summary {
        println!("{line}");
    }
    for check in bundle.checks.iter().filter(|c| !c.passed) {
        eprintln!(
            "check failed: {} (measured {:e})",
            check.name, check.measured
        );
    }
    for (stage, secs) in &bundle.timings {
        eprintln!("{stage}: {secs:.3} s");
    }
    match emit_outputs(&bundle, &out) {
        Ok(files) => {
            for f in files {
                println!("wrote {} ({} bytes)", out.join(&f.name).display(), f.bytes);
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if bundle.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
