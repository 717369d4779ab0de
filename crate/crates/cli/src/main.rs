use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cloaklab_cli::config::Suite;
use cloaklab_cli::{run, Overrides};

#[derive(Parser)]
#[command(name = "cloaklab", version, about = "Run cloaking experiment suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites described by a TOML or JSON config file.
    Run {
        config: PathBuf,
        /// Override the suite named in the config.
        #[arg(long, value_enum)]
        suite: Option<Suite>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLOAKLAB_LOG", "info")).init();
    let cli = Cli::parse();
    let Command::Run {
        config,
        suite,
        out,
        threads,
    } = cli.command;
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::error!("cannot size thread pool: {e}");
            return ExitCode::from(4);
        }
    }
    match run(&config, &Overrides { suite, out }) {
        Ok(summary) if summary.all_pass() => ExitCode::SUCCESS,
        Ok(_) => {
            log::error!("at least one verdict failed");
            ExitCode::from(1)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
