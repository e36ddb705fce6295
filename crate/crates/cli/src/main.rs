use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctrlrough::scenario::{run_integrate, run_lift, run_solve, run_verify, ScenarioConfig};
use ctrlrough::Error;

/// Rough path lifts, rough integrals and RDE solves from JSON scenario files.
#[derive(Parser)]
#[command(name = "ctrlrough", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for generated drivers and verification suites.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Lift the driver and tabulate its Hölder norms.
    Lift(Common),
    /// Integrate the configured field along the canonical lift.
    Integrate(Common),
    /// Solve dY = F(Y) dX.
    Solve(Common),
    /// Run the invariant suites; always exits 0 once the report is written.
    Verify(Common),
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_validation() { 1 } else { 2 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Lift(c) | Command::Integrate(c) | Command::Solve(c) | Command::Verify(c)) = &cli.command;
    let cfg = match ScenarioConfig::from_file(&c.config) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e),
    };
    if let Ok(Some(w)) = cfg.validate() {
        eprintln!("warning: {w}");
    }
    let cfg = match c.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    let out = c.out.as_deref();
    let result = match &cli.command {
        Command::Lift(_) => run_lift(&cfg, out).map(|files| {
            for f in files {
                println!("wrote {}", f.display());
            }
        }),
        Command::Integrate(_) => run_integrate(&cfg, out).map(|(s, _)| {
            println!("integral over [{}, {}]: {:?} (error estimate {:e})", s.start, s.end, s.value, s.error_estimate);
        }),
        Command::Solve(_) => run_solve(&cfg, out).map(|(y, r)| {
            println!(
                "solved on [{}, {}] in {} patches, endpoint {:?}, global residual {:e}",
                y.times()[0],
                y.times()[y.len() - 1],
                r.patches.len(),
                y.endpoint(),
                r.global_residual
            );
        }),
        Command::Verify(_) => run_verify(&cfg, out).map(|r| {
            for s in &r.suites {
                println!(
                    "{:<10} {} max deviation {:e} ({})",
                    s.name,
                    if s.pass { "pass" } else { "FAIL" },
                    s.max_deviation,
                    s.detail
                );
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
