use std::path::Path;
use std::process::ExitCode;

use rayon::prelude::*;

use neuron_agents::archive::{self, SummaryRow};
use neuron_agents::cli::{parse_cli, Command, EXIT_RUNTIME, EXIT_USAGE};
use neuron_agents::rewards::RewardLedger;
use neuron_agents::trainer::{self, run_seeds, train_run_with, ExperimentSummary};
use neuron_agents::ExperimentConfig;

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn run_with_ledgers(config: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary, String> {
    std::fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let runs = run_seeds(config)
        .into_par_iter()
        .map(|seed| {
            let path = out.join(format!("ledger-{seed}.csv"));
            let mut writer =
                csv::Writer::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            writer
                .write_record(RewardLedger::CSV_HEADER)
                .map_err(|e| e.to_string())?;
            let mut failure = None;
            let result = train_run_with(config, seed, |outcome| {
                if failure.is_none() {
                    if let Err(e) =
                        outcome
                            .ledger
                            .write_csv(&mut writer, seed, outcome.episode_index + 1)
                    {
                        failure = Some(e.to_string());
                    }
                }
            })
            .map_err(|e| e.to_string())?;
            if let Some(e) = failure {
                return Err(e);
            }
            writer.flush().map_err(|e| e.to_string())?;
            Ok(result)
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(ExperimentSummary::from_runs(config, runs))
}

fn main() -> ExitCode {
    let cli = match parse_cli(std::env::args_os()) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return exit(err.exit_code());
        }
    };

    match cli.command {
        Command::Config { flags } => match flags.resolve().and_then(|c| c.to_toml()) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit(EXIT_USAGE)
            }
        },
        Command::Run {
            flags,
            out,
            dump_ledger,
        } => {
            let config = match flags.resolve() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit(EXIT_USAGE);
                }
            };
            eprintln!(
                "training {} run(s): scheme {}, {} layer(s) of width {}, budget {} episodes",
                config.num_runs,
                config.scheme.key(),
                config.num_layers,
                config.layer_width,
                config.max_episodes
            );
            let summary = if dump_ledger {
                run_with_ledgers(&config, &out)
            } else {
                trainer::run_experiment(&config).map_err(|e| e.to_string())
            };
            let summary = match summary {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit(EXIT_RUNTIME);
                }
            };
            for run in &summary.runs {
                let outcome = match (run.episodes_to_solve, &run.abort) {
                    (_, Some(reason)) => format!("aborted ({reason})"),
                    (Some(n), None) => format!("solved after {n} episodes"),
                    (None, None) => "not solved".to_string(),
                };
                eprintln!(
                    "  seed {:>6}: {outcome} in {:.1}s",
                    run.run_seed, run.wall_time
                );
            }
            if let Err(e) = archive::write_results(&out, &summary, &config) {
                eprintln!("error: {e}");
                return exit(EXIT_RUNTIME);
            }
            match archive::emit_table(&[SummaryRow::from_summary(&summary)]) {
                Ok(table) => print!("{table}"),
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit(EXIT_RUNTIME);
                }
            }
            eprintln!(
                "solved {}/{}; mean episodes to solve {}; archive written to {}",
                summary.solved,
                summary.runs.len(),
                summary.mean_episodes_to_solve,
                out.display()
            );
            ExitCode::SUCCESS
        }
        Command::Table { archives } => {
            let mut rows = Vec::new();
            for dir in &archives {
                match archive::read_summary(dir) {
                    Ok(r) => rows.extend(r),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return exit(EXIT_RUNTIME);
                    }
                }
            }
            match archive::emit_table(&rows) {
                Ok(table) => {
                    print!("{table}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit(EXIT_RUNTIME)
                }
            }
        }
    }
}
