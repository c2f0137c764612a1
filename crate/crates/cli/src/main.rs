use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gamo_cli::commands::{cmd_ablate, cmd_export, cmd_oracle, cmd_plot, cmd_train, Overrides};
use gamo_cli::error::{CliError, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "gamo", version, about = "Generative adversarial minority oversampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SpecArgs {
    /// Run specification (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; overrides `out` in the spec.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; repetition r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of repetitions.
    #[arg(long)]
    reps: Option<usize>,
    /// Repetitions trained in parallel.
    #[arg(long)]
    jobs: Option<usize>,
}

impl SpecArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            reps: self.reps,
            jobs: self.jobs,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the spec's variant for every repetition and write results.csv.
    Train(SpecArgs),
    /// Compare variants under both losses and write ablation.csv.
    Ablate(SpecArgs),
    /// Run the gradient, convexity, loss, optimum and sampling checks.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_gradient_fault: Option<f64>,
    },
    /// Draw decision regions and points for a 2-D run directory.
    Plot {
        /// Directory written by `train` or `ablate`.
        run_dir: PathBuf,
        /// Where to put the SVG files (default RUN_DIR/plots).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a class-balanced dataset with generated minority points.
    Export {
        #[command(flatten)]
        args: SpecArgs,
        /// Use a trained model instead of training one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let mut out = io::stdout();
    let result: Result<(), CliError> = match &cli.command {
        Command::Train(a) => cmd_train(&a.spec, &a.overrides(), &mut out).map(drop),
        Command::Ablate(a) => cmd_ablate(&a.spec, &a.overrides(), &mut out).map(drop),
        Command::Oracle {
            seed,
            inject_gradient_fault,
        } => cmd_oracle(*seed, *inject_gradient_fault, &mut out).map(drop),
        Command::Plot { run_dir, out: dir } => cmd_plot(run_dir, dir.as_deref(), &mut out).map(drop),
        Command::Export { args, checkpoint } => {
            cmd_export(&args.spec, checkpoint.as_deref(), &args.overrides(), &mut out).map(drop)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
