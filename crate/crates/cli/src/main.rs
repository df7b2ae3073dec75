use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use taskbandit::experiment::{self, RunConfig};
use taskbandit::metrics;
use taskbandit::Error;

/// Multi-agent task-assignment bandit experiments.
#[derive(Parser)]
#[command(name = "taskbandit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        /// Write outputs here instead of the configured directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// List or print the built-in experiment presets.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Fit mean violation and regret against ln t and t.
    Fit {
        summary: PathBuf,
        /// Only use rows with t greater than this.
        #[arg(long, default_value_t = 0)]
        from: u64,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names.
    List,
    /// Print a preset as a TOML config.
    Show { name: String },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, output_dir } => {
            let mut cfg = RunConfig::load(&config).map_err(|e| match e {
                Error::Io { .. } => Error::Config {
                    path: config.display().to_string(),
                    message: e.to_string(),
                },
                other => other,
            })?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let dir = cfg.resolved_output_dir();
            let result = experiment::execute(&cfg)?;
            let files = experiment::write_outputs(&result, &dir)?;
            let last = result.summary.last();
            println!(
                "B = {}, L_bar = {}, per-round optimum = {:.6}",
                result.meta.init_budget, result.meta.l_bar, result.bench.per_round_opt
            );
            if let Some(row) = last {
                println!(
                    "t = {}: mean reward {:.3}, mean violation {:.3}, regret (alpha = 0) {:.3}",
                    row.t, row.mean_e, row.mean_v, row.regret_proxy_alpha0
                );
            }
            let broken = result.meta.trials.iter().filter(|t| !t.structure_ok).count();
            if broken > 0 {
                println!("warning: {broken} trial(s) failed structural checks; see {}", experiment::META_FILE);
            }
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Preset { action: PresetAction::List } => {
            for (name, about, _) in experiment::presets() {
                println!("{name:<20} {about}");
            }
            Ok(())
        }
        Command::Preset {
            action: PresetAction::Show { name },
        } => {
            let cfg = experiment::preset(&name).ok_or_else(|| Error::Config {
                path: "preset".into(),
                message: format!("unknown preset `{name}`"),
            })?;
            print!("{}", cfg.to_toml_string()?);
            Ok(())
        }
        Command::Fit { summary, from } => {
            let rows = experiment::read_summary(&summary)?;
            let report = metrics::report_logfit(&rows, from);
            print!("{}", toml::to_string(&report)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
