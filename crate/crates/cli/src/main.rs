use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use next_cli::experiment::{aggregate, dump_graph};
use next_cli::{run_all, validate, write_outputs, CliError, ExperimentConfig, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "next-bench", version, about = "Run distributed optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm of a config and write CSV traces plus summary.csv.
    Run {
        config: PathBuf,
        /// Output directory; defaults to run.out_dir, then $NEXT_OUT_DIR, then ./out.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override run.repetitions.
        #[arg(long)]
        reps: Option<usize>,
        /// Worker threads for the repetitions.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Print the communication schedule of the first repetition.
    GraphDump { config: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::load(path).map_err(CliError::Config)
}

fn out_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli.or_else(|| cfg.run.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(|d| PathBuf::from(d).join(&cfg.name)))
        .unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

fn run(config: &Path, out: Option<PathBuf>, reps: Option<usize>, threads: Option<usize>) -> Result<(), CliError> {
    let mut cfg = load(config)?;
    if let Some(r) = reps {
        if r == 0 {
            return Err(CliError::Config(vec!["--reps: must be at least 1".into()]));
        }
        cfg.run.repetitions = r;
    }
    let diagnostics = validate(&cfg);
    if !diagnostics.is_empty() {
        return Err(CliError::Config(diagnostics));
    }
    let outcomes = match threads {
        Some(0) => return Err(CliError::Config(vec!["--threads: must be at least 1".into()])),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Config(vec![format!("--threads: {e}")]))?
            .install(|| run_all(&cfg))?,
        None => run_all(&cfg)?,
    };
    let dir = out_dir(out, &cfg);
    write_outputs(&dir, &outcomes, cfg.run.threshold)?;
    println!("{}: {} repetitions written to {}", cfg.name, cfg.run.repetitions, dir.display());
    for (label, mean, hits, final_j) in aggregate(&cfg, &outcomes) {
        let mean = mean.map_or("NA".to_string(), |m| format!("{m:.1}"));
        println!(
            "  {label}: exchanges to J <= {:e}: {mean} ({hits}/{} reached), mean final J {final_j:.3e}",
            cfg.run.threshold, cfg.run.repetitions
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, reps, threads } => run(&config, out, reps, threads),
        Command::Validate { config } => load(&config).and_then(|cfg| {
            let d = validate(&cfg);
            if d.is_empty() {
                println!("{}: ok", config.display());
                Ok(())
            } else {
                Err(CliError::Config(d))
            }
        }),
        Command::GraphDump { config } => load(&config).and_then(|cfg| {
            print!("{}", dump_graph(&cfg)?);
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            for line in e.to_string().lines() {
                eprintln!("error: {line}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
