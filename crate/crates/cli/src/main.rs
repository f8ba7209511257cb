//! `dac`: run consensus scenarios from the command line.
//!
//! Exit codes: 0 success, 1 invalid scenario, 2 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dac_core::export;
use dac_core::harness::{self, Outcome, RunResult};
use dac_core::scenario::paper_scenario;
use dac_core::{Error, Mode, Overrides, Scenario};

const EXIT_INVALID: u8 = 1;
const EXIT_IO: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "dac",
    version,
    about = "Robust dynamic average consensus simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and write series.csv, events.csv, summary.json.
    Simulate {
        #[arg(long, value_name = "PATH")]
        scenario: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run (or print) the built-in ten-agent benchmark scenario.
    PaperScenario {
        /// Print the scenario JSON to stdout instead of running it.
        #[arg(long)]
        emit: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check a scenario file and list every problem found.
    Validate {
        #[arg(long, value_name = "PATH")]
        scenario: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Continuous,
    Event,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Continuous => Mode::Continuous,
            ModeArg::Event => Mode::Event,
            ModeArg::Both => Mode::Both,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "event")]
    mode: ModeArg,
    /// Integration step in seconds.
    #[arg(long, value_name = "FLOAT")]
    step: Option<f64>,
    #[arg(long, value_name = "FLOAT")]
    duration: Option<f64>,
    #[arg(long, value_name = "UINT")]
    seed: Option<u64>,
    /// Broadcast every agent at every step.
    #[arg(long)]
    force_trigger: bool,
    /// Replace sgn(v) by clamp(v / FLOAT, -1, 1).
    #[arg(long, value_name = "FLOAT")]
    boundary_layer: Option<f64>,
    #[arg(long, value_name = "UINT")]
    record_stride: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            step: self.step,
            duration: self.duration,
            seed: self.seed,
            force_trigger: self.force_trigger,
            boundary_layer: self.boundary_layer,
            record_stride: self.record_stride,
        }
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(if err.is_io() { EXIT_IO } else { EXIT_INVALID })
}

fn load(path: &Path) -> Result<Scenario, Error> {
    Scenario::load(path)
}

fn describe(result: &RunResult) -> String {
    let mut line = format!("{:?}", result.variant).to_lowercase();
    if let Some(stats) = result.trigger_stats() {
        let fractions: Vec<String> = stats.iter().map(|s| format!("{:.3}", s.fraction)).collect();
        line += &format!(
            " mean_trigger_fraction={:.4} fractions=[{}]",
            result.mean_trigger_fraction().unwrap_or(0.0),
            fractions.join(",")
        );
    }
    match result.trailing_error() {
        Some(e) => line + &format!(" trailing_error={e:.6e}"),
        None => line,
    }
}

fn execute(scenario: Scenario, run: &RunArgs) -> ExitCode {
    let scenario = scenario.with_overrides(&run.overrides());
    let prepared = match scenario.prepare() {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    for w in &prepared.warnings {
        eprintln!("warning: {w}");
    }
    let outcome = match harness::run(&scenario, run.mode.into()) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let written = match &outcome {
        Outcome::Single(r) => export::export(r, &run.out).map(|_| ()),
        Outcome::Paired(p) => export::export(&p.continuous, &run.out.join("continuous"))
            .and_then(|_| export::export(&p.event, &run.out.join("event")))
            .map(|_| ()),
    };
    if let Err(e) = written {
        return fail(&e);
    }
    match &outcome {
        Outcome::Single(r) => println!("{}", describe(r)),
        Outcome::Paired(p) => println!(
            "{} | {} | max_deviation={:e}",
            describe(&p.continuous),
            describe(&p.event),
            p.max_deviation
        ),
    }
    ExitCode::SUCCESS
}

fn validate(path: &Path) -> ExitCode {
    let scenario = match load(path) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    match scenario.prepare() {
        Ok(p) => {
            for w in &p.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}: valid", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { scenario, run } => match load(&scenario) {
            Ok(s) => execute(s, &run),
            Err(e) => fail(&e),
        },
        Command::PaperScenario { emit, run } => {
            let scenario = paper_scenario(run.seed.unwrap_or(42));
            if emit {
                println!("{}", scenario.with_overrides(&run.overrides()).to_json());
                ExitCode::SUCCESS
            } else {
                execute(scenario, &run)
            }
        }
        Command::Validate { scenario } => validate(&scenario),
    }
}
