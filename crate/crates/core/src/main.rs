use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qsl::runner::{emit_plot_script, parse_config, run, RunConfig, RunError};

#[derive(Parser)]
#[command(name = "qsl", version, about = "Quantum speed limits under continuous measurement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write plot.py next to the figure tables.
        #[arg(long)]
        emit_plot: bool,
    },
    /// Parse and validate a config file without computing anything.
    Validate { config: PathBuf },
    /// Write plot.py for an existing results directory.
    Plot { dir: PathBuf },
}

fn load(path: &Path) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn execute(command: Command) -> Result<(), RunError> {
    match command {
        Command::Run { config, out, emit_plot } => {
            let cfg = load(&config)?;
            let summary = run(&cfg, out.as_deref(), emit_plot)?;
            for file in &summary.files {
                println!("wrote {}", file.display());
            }
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("{}: ok ({})", config.display(), cfg.experiment.name());
        }
        Command::Plot { dir } => {
            let path = emit_plot_script(&dir)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors count as validation failures.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
