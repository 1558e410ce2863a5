use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use luq_cli::stages::{cmd_ensemble, cmd_estimate, cmd_eval, cmd_sample, cmd_select, EvalOptions};
use luq_cli::{LoadedConfig, Outcome, Overrides};
use luq_core::domain::Method;

#[derive(Parser)]
#[command(name = "luq", version, about = "Uncertainty of long-form LLM answers from cross-sample consistency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated method names, e.g. `luq,luq_atomic,ecc`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    /// `mock` or the base URL of an NLI scoring service.
    #[arg(long)]
    scorer: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate main responses and samples.
    Sample(Common),
    /// Compute uncertainty scores from samples.
    Estimate(Common),
    /// Join scores with factuality and write the report.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ensemble: bool,
        #[arg(long)]
        selective: bool,
    },
    /// Pick each question's least uncertain model.
    Ensemble(Common),
    /// Selective answering curves.
    Select(Common),
}

fn load(c: &Common) -> Result<LoadedConfig, luq_cli::CliError> {
    let overrides = Overrides {
        methods: c.methods.clone(),
        n_samples: c.n,
        temperature: c.temperature,
        scorer: c.scorer.clone(),
        seed: c.seed,
        out: c.out.clone(),
    };
    LoadedConfig::load(&c.config, &overrides)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sample(c) => load(c).and_then(|cfg| cmd_sample(&cfg)),
        Command::Estimate(c) => load(c).and_then(|cfg| cmd_estimate(&cfg)),
        Command::Eval { common, ensemble, selective } => load(common).and_then(|cfg| {
            cmd_eval(&cfg, EvalOptions { require_ensemble: *ensemble, require_selective: *selective })
        }),
        Command::Ensemble(c) => load(c).and_then(|cfg| cmd_ensemble(&cfg)),
        Command::Select(c) => load(c).and_then(|cfg| cmd_select(&cfg)),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("luq: {e}");
            Outcome::Fatal
        }
    };
    match outcome {
        Outcome::Partial => eprintln!("luq: finished with failures; see the manifest"),
        Outcome::Fatal => {}
        Outcome::Success => {}
    }
    ExitCode::from(outcome.exit_code())
}
