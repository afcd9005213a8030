use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use invariant_flow::demo::run_demo;
use invariant_flow::diagnostics::Status;
use invariant_flow::scenario::{self, Mode};
use invariant_flow::tangency::check_tangency;
use invariant_flow::Result;

#[derive(Parser)]
#[command(name = "invariant-flow", version, about = "Invariant convex sets for reaction-diffusion systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Flat,
    Bundle,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write trajectory, diagnostics and verdict.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        cadence: Option<usize>,
        #[arg(long)]
        exit_threshold: Option<f64>,
    },
    /// Sample the tangency condition of a scenario's reaction term.
    CheckTangency {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a packaged demonstration.
    Demo { name: String },
}

fn mode(arg: Option<ModeArg>) -> Option<Mode> {
    arg.map(|m| match m {
        ModeArg::Flat => Mode::Flat,
        ModeArg::Bundle => Mode::Bundle,
    })
}

fn configure_threads() {
    if let Some(n) = std::env::var("INVARIANT_FLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn execute(command: Command) -> Result<u8> {
    match command {
        Command::Run {
            scenario,
            out,
            mode: m,
            seed,
            cadence,
            exit_threshold,
        } => {
            let mut loaded = scenario::load(&scenario, mode(m))?;
            loaded.override_run(seed, cadence, exit_threshold);
            let output = loaded.model.solve()?;
            for w in &output.warnings {
                eprintln!("warning: {w}");
            }
            loaded.model.write_outputs(&output, &out)?;
            if let Some(e) = &output.failure {
                eprintln!("error: {e}");
                return Ok(2);
            }
            let v = &output.verdict;
            println!(
                "{} (worst dist {:.3e}, threshold {:.3e})",
                match v.status {
                    Status::Invariant => "invariant",
                    Status::Exited => "exited",
                },
                v.worst_dist,
                v.exit_threshold
            );
            Ok(match v.status {
                Status::Invariant => 0,
                Status::Exited => 4,
            })
        }
        Command::CheckTangency { scenario, mode: m, seed } => {
            let mut loaded = scenario::load(&scenario, mode(m))?;
            loaded.override_run(seed, None, None);
            let report = check_tangency(
                loaded.phi(),
                loaded.set(),
                &loaded.t_samples,
                &loaded.x_samples,
                &loaded.tangency,
            )?;
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, &report)?;
            writeln!(lock)?;
            Ok(if report.certified { 0 } else { 3 })
        }
        Command::Demo { name } => {
            let stdout = std::io::stdout();
            let code = run_demo(&name, &mut stdout.lock())?;
            Ok(code as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    configure_threads();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
