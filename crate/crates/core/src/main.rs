use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quanta::cli::{commands, Overrides};

#[derive(Parser)]
#[command(name = "quanta", version, about = "Parallel tempering with mode-rescaling swaps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sampling experiment.
    Run(Common),
    /// Report quadrature functionals, optimal scaling and cold-order fits.
    VerifyTheory(Common),
    /// Tune a temperature ladder by pilot runs.
    TuneSchedule(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the configured number of repeats.
    #[arg(long)]
    repeats: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (Command::Run(c) | Command::VerifyTheory(c) | Command::TuneSchedule(c)) = &cli.command;
    if let Some(t) = c.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let overrides = Overrides {
        seed: c.seed,
        out: c.out.clone(),
        repeats: c.repeats,
    };
    let mut stdout = std::io::stdout();
    let result = match &cli.command {
        Command::Run(_) => commands::run_experiment(&c.config, &overrides).map(|o| {
            let _ = commands::print_digest(&o, &mut stdout);
            if o.failures() > 0 {
                eprintln!("{} run(s) failed; see error.txt in their directories", o.failures());
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }),
        Command::VerifyTheory(_) => commands::verify_theory(&c.config, &overrides).and_then(|r| {
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(ExitCode::SUCCESS)
        }),
        Command::TuneSchedule(_) => commands::tune(&c.config, &overrides).and_then(|r| {
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(ExitCode::SUCCESS)
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
