//! `uvms-sim`: runs scenarios, the reference case suite and the oracle checks.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime or controller
//! error, 3 failed acceptance check.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uvms_core::check;
use uvms_core::control::Status;
use uvms_core::jacobian::VehicleMode;
use uvms_core::par::Execution;
use uvms_core::sim::{
    read_scenario_unvalidated, run_case, run_suite, CommandStream, ConfigError, ScenarioConfig,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_ASSERTION: u8 = 3;

#[derive(Parser)]
#[command(name = "uvms-sim", version, about = "Continuum vehicle-manipulator kinematic simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario.
    Run(RunArgs),
    /// Run the reference cases and check the expected trends.
    Suite(SuiteArgs),
    /// Run the randomized oracle checks.
    Check(CheckArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML). Defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overriding the scenario's.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Hold pitch and roll at zero (4-DoF vehicle).
    #[arg(long)]
    reduced: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Reference case 1..=9, replacing the scenario's case.
    #[arg(long, value_name = "N")]
    case: Option<u8>,
    /// Emit the command stream (stdout unless the scenario names a file).
    #[arg(long)]
    stream: bool,
}

#[derive(Args)]
struct SuiteArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated case ids; may be empty.
    #[arg(long, value_name = "LIST", default_value = "1,2,3,4,5,6,7,8,9")]
    cases: String,
    /// Run cases one after another.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Evaluate samples on one thread.
    #[arg(long)]
    sequential: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
    Assertion(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

/// Reads the scenario, applies command-line overrides, then validates.
fn load(args: &ScenarioArgs, case: Option<u8>) -> Result<(ScenarioConfig, PathBuf), Failure> {
    let mut config = match &args.config {
        Some(path) => read_scenario_unvalidated(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(id) = case {
        config = config.with_case(id);
    }
    if args.reduced {
        config.vehicle_mode = VehicleMode::Reduced4;
    }
    config.validate()?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&config.output.dir));
    Ok((config, out))
}

fn parse_cases(list: &str) -> Result<Vec<u8>, Failure> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<u8>() {
            Ok(id) if (1..=9).contains(&id) => Ok(id),
            _ => Err(Failure::Config(format!("invalid case id {s:?}, expected 1..=9"))),
        })
        .collect()
}

fn open_stream(config: &ScenarioConfig, out: &Path) -> Result<(CommandStream, bool), Failure> {
    match &config.output.stream_path {
        Some(p) => {
            let path = if Path::new(p).is_absolute() {
                PathBuf::from(p)
            } else {
                out.join(p)
            };
            fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
            let file = fs::File::create(&path)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            Ok((CommandStream::new(Box::new(io::BufWriter::new(file))), false))
        }
        None => Ok((CommandStream::stdout(), true)),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let (config, out) = load(&args.scenario, args.case)?;
    let streaming = args.stream || config.stream;
    let (mut stream, to_stdout) = if streaming {
        let (s, stdout) = open_stream(&config, &out)?;
        (Some(s), stdout)
    } else {
        (None, false)
    };
    let artifacts = run_case(&config, &out, stream.as_mut())
        .map_err(|e| Failure::Runtime(format!("writing {}: {e}", out.display())))?;
    if let Some(e) = stream.as_ref().and_then(|s| s.failure()) {
        eprintln!("command stream stopped: {e}");
    }
    let s = &artifacts.trajectory.summary;
    let line = format!(
        "case {}: {} after {} steps, delta_p {:.4e} m, delta_mu {:.4e} rad -> {}",
        config.label(),
        s.status,
        s.steps,
        s.final_delta_p,
        s.final_delta_mu,
        artifacts.trajectory_csv.display()
    );
    emit(&line, to_stdout);
    match s.status {
        Status::Converged => Ok(()),
        _ => Err(Failure::Runtime(
            s.message.clone().unwrap_or_else(|| format!("run ended with status {}", s.status)),
        )),
    }
}

fn cmd_suite(args: SuiteArgs) -> Result<(), Failure> {
    let ids = parse_cases(&args.cases)?;
    let (config, out) = load(&args.scenario, None)?;
    let report = run_suite(&config, &ids, execution(args.sequential));
    report
        .write(&out)
        .map_err(|e| Failure::Runtime(format!("writing {}: {e}", out.display())))?;
    for r in &report.results {
        let s = &r.trajectory.summary;
        let line = format!(
            "case {}: {} after {} steps in {:.3} s",
            r.config.label(),
            s.status,
            s.steps,
            r.elapsed.as_secs_f64()
        );
        emit(&line, false);
    }
    for c in &report.checks {
        let line = format!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        emit(&line, false);
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Assertion(format!("{failed} of {} checks failed", report.checks.len())));
    }
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<(), Failure> {
    let outcomes = check::run_all(args.seed, execution(args.sequential));
    for o in &outcomes {
        emit(&o.to_string(), false);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(Failure::Assertion(format!("{failed} of {} checks failed", outcomes.len())));
    }
    Ok(())
}

fn emit(line: &str, stdout_taken: bool) {
    if stdout_taken {
        eprintln!("{line}");
    } else {
        // a closed stdout is not worth failing the run over
        let _ = writeln!(io::stdout(), "{line}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Suite(a) => cmd_suite(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Assertion(m)) => {
            eprintln!("failed: {m}");
            ExitCode::from(EXIT_ASSERTION)
        }
    }
}
