use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use wrangle_core::evaluate::evaluate;
use wrangle_core::ingest::{load_named, CsvDialect};
use wrangle_core::model::NullTokens;
use wrangle_core::pipeline::{render_text, run_pipeline, write_outputs, Overrides};
use wrangle_core::Error;

#[derive(Parser)]
#[command(name = "wrangle", version, about = "Context-informed data wrangling into a target schema")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Enable or disable data context for a stage, e.g. `repair=off`.
        #[arg(long = "toggle", value_parser = parse_toggle)]
        toggles: Vec<(String, bool)>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a result CSV against ground truth.
    Eval {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Comma-separated key attributes.
        #[arg(long, value_delimiter = ',', required = true)]
        keys: Vec<String>,
        #[arg(long)]
        excluded_marker: Option<String>,
    },
}

fn parse_toggle(s: &str) -> Result<(String, bool), String> {
    let (stage, state) = s
        .split_once('=')
        .ok_or_else(|| format!("expected <stage>=<on|off>, got `{s}`"))?;
    let on = match state.trim().to_lowercase().as_str() {
        "on" | "true" | "1" => true,
        "off" | "false" | "0" => false,
        other => return Err(format!("expected on or off, got `{other}`")),
    };
    Ok((stage.trim().to_string(), on))
}

fn exec(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            toggles,
            seed,
        } => {
            let result = run_pipeline(&config, &Overrides { toggles, seed })?;
            write_outputs(&result, &out)?;
            print!("{}", render_text(&result.report));
            println!("\nwrote {}", out.display());
        }
        Command::Eval {
            result,
            truth,
            keys,
            excluded_marker,
        } => {
            let nulls = NullTokens::default();
            let dialect = CsvDialect::default();
            let res = load_named(&result, "result", &dialect, &nulls)?;
            let gt = load_named(&truth, "result", &dialect, &nulls)?;
            let m = evaluate(&res, &gt, &keys, excluded_marker.as_deref())
                .with_context(|| format!("evaluating {}", result.display()))?;
            println!("{m}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<Error>().is_some_and(Error::is_config_error);
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
