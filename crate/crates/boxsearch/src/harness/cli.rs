//! Command-line front end. Exit codes: 0 success, 1 runtime failure,
//! 2 invalid config or arguments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{config, Error, Result};
use crate::oracle;

use super::config::ExperimentConfig;
use super::report::write_report;
use super::runner::run_experiment;

#[derive(Parser)]
#[command(name = "boxsearch", version, about = "online box-opening experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results.csv, runs.jsonl, summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; created when missing.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds, replacing the config's list.
        #[arg(long)]
        seeds: Option<String>,
        /// Replica count, replacing the config's value.
        #[arg(long)]
        replicas: Option<usize>,
        /// Config patch `dotted.path=json`; repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Aggregate run outputs into CSV tables and SVG charts.
    Report {
        /// Run directories or results.csv files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precompute exhaustive benchmark fixtures for a config's instance.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Fixture JSON path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Parse and validate a config, printing its content hash.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn seeds_override(raw: &str) -> Result<String> {
    let mut seeds = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let seed: u64 =
            part.parse().map_err(|_| config(format!("bad seed `{part}` in --seeds")))?;
        seeds.push(seed.to_string());
    }
    if seeds.is_empty() {
        return Err(config("--seeds lists no seeds"));
    }
    Ok(format!("seeds=[{}]", seeds.join(",")))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config: path, out, seeds, replicas, mut overrides } => {
            if let Some(raw) = &seeds {
                overrides.push(seeds_override(raw)?);
            }
            if let Some(r) = replicas {
                overrides.push(format!("replicas={r}"));
            }
            let cfg = ExperimentConfig::load(&path, &overrides)?;
            let art = run_experiment(&cfg, &out)?;
            println!("config {:016x}: {} runs", cfg.content_hash(), art.records.len());
            for h in &art.summary.per_horizon {
                match h.mean_avg_regret {
                    Some(r) => println!("T={}: {} runs, mean avg regret {r:.6}", h.t, h.runs),
                    None => println!("T={}: {} runs, no benchmark", h.t, h.runs),
                }
            }
            if let Some(slope) = art.summary.loglog_slope {
                println!("log-log regret slope {slope:.4}");
            }
            println!("wrote {}", art.results_path.display());
            println!("wrote {}", art.runs_path.display());
            println!("wrote {}", art.summary_path.display());
            Ok(())
        }
        Command::Report { inputs, out } => {
            let art = write_report(&inputs, &out)?;
            if let Some(slope) = art.slope {
                println!("log-log regret slope {slope:.4}");
            }
            for p in [&art.rounds_csv, &art.runs_csv, &art.regret_svg, &art.ratio_svg] {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Oracle { config: path, out, overrides } => {
            let cfg = ExperimentConfig::load(&path, &overrides)?;
            let seed = cfg.seeds[0];
            let (seq, _) = cfg.instance.realize(None, seed)?;
            let fixture = oracle::compute_fixture(&seq, &cfg.family)?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(&out, serde_json::to_string_pretty(&fixture)?)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Validate { config: path, overrides } => {
            let cfg = ExperimentConfig::load(&path, &overrides)?;
            println!("ok {:016x}", cfg.content_hash());
            Ok(())
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

pub fn run_cli() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_flag_becomes_an_override() {
        assert_eq!(seeds_override("1, 2,3").unwrap(), "seeds=[1,2,3]");
        assert!(seeds_override("1,x").is_err());
        assert!(seeds_override(" ,").is_err());
    }

    #[test]
    fn config_errors_map_to_exit_two() {
        assert_eq!(exit_code(&config("bad")), 2);
        assert_eq!(exit_code(&Error::Infeasible("x".into())), 1);
    }

    #[test]
    fn cli_declares_expected_subcommands() {
        use clap::CommandFactory;
        let cmd = Cli::command();
        let names: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();
        for want in ["run", "report", "oracle", "validate"] {
            assert!(names.contains(&want), "missing subcommand {want}");
        }
    }
}
