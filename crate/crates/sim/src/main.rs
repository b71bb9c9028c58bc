use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use xchain_core::perf_model::{CostParams, ScenarioKind};
use xchain_sim::{
    emit_report, load_config, model_csv, model_json, model_table, run, scenario_description,
    state_dump_json, trace_jsonl, ReportFormat,
};

#[derive(Parser)]
#[command(
    name = "xchain-sim",
    version,
    about = "Atomic crosschain transaction simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Write the per-event cost trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the final chain state and coordination entries as JSON.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Print the analytical throughput table as CSV followed by JSON.
    Model {
        /// Scenario name, or `all`.
        #[arg(long, default_value = "all")]
        scenario: String,
        #[arg(long, default_value_t = 375.0)]
        base_tps: f64,
        #[arg(long, default_value_t = 5.0)]
        verify_ms: f64,
        /// Instigators taking turns coordinating (amortized column).
        #[arg(long, default_value_t = 1)]
        instigators: u32,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn write_or_print(path: Option<&PathBuf>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            format,
            trace,
            state,
        } => {
            let mut config = load_config(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let outcome = run(&config)?;
            let format = match format {
                Format::Json => ReportFormat::Json,
                Format::Csv => ReportFormat::Csv,
            };
            write_or_print(out.as_ref(), &emit_report(&outcome.report, format)?)?;
            if let Some(p) = trace {
                fs::write(&p, trace_jsonl(&outcome)?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            if let Some(p) = state {
                fs::write(&p, state_dump_json(&outcome)?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            let agg = &outcome.report.aggregate;
            eprintln!(
                "{}: {} committed, {} ignored, {} atomicity violations",
                config.scenario, agg.committed, agg.ignored, agg.atomicity_violations
            );
            if agg.atomicity_violations > 0 {
                for v in &agg.violations {
                    eprintln!("violation: {v}");
                }
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Model {
            scenario,
            base_tps,
            verify_ms,
            instigators,
            csv,
            json,
        } => {
            let scenarios = if scenario.eq_ignore_ascii_case("all") {
                Vec::new()
            } else {
                vec![scenario
                    .parse::<ScenarioKind>()
                    .map_err(|e| anyhow::anyhow!("{e}: {scenario}"))?]
            };
            let params = CostParams {
                base_tx_rate: base_tps,
                bls_verify_time: verify_ms / 1000.0,
            };
            let table = model_table(&scenarios, &params, instigators)?;
            let csv_text = model_csv(&table);
            let json_text = model_json(&table)?;
            if let Some(p) = &csv {
                fs::write(p, &csv_text).with_context(|| format!("writing {}", p.display()))?;
            }
            if let Some(p) = &json {
                fs::write(p, &json_text).with_context(|| format!("writing {}", p.display()))?;
            }
            print!("{csv_text}\n{json_text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenarios => {
            for kind in ScenarioKind::ALL {
                println!("{:<26}{}", kind.name(), scenario_description(kind));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
