use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semcost_cli::backend::{load_fixtures, BackendOpts};
use semcost_cli::commands::{self, CliResult};
use semcost_cli::server::{self, ServerConfig};

#[derive(Parser)]
#[command(name = "semcost", version, about = "Danger-aware grid planning from operator prompts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan once on the scenario's prior field and print the metrics.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        w1: Option<f64>,
        #[arg(long)]
        w2: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Apply one prompt, replan, and print a table row.
    Prompt {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        trust: Option<f64>,
        /// Continue from (and save back to) this session file.
        #[arg(long)]
        session: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendOpts,
        #[arg(long)]
        json: bool,
    },
    /// Run each prompt of a list in a fresh session and tabulate the results.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
        #[command(flatten)]
        backend: BackendOpts,
        #[arg(long)]
        json: bool,
    },
    /// Repeat a prompt and report mean and std of the posterior means.
    Ablate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Mock score noise, e.g. `discrete:-0.1,0,0.1` or `uniform:0.05`.
        #[arg(long)]
        noise: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        backend: BackendOpts,
        #[arg(long)]
        json: bool,
    },
    /// Posterior mean after one prompt for several trust values.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        text: String,
        /// Comma separated trust values.
        #[arg(long, default_value = "0,1,2,5,10,50")]
        n_values: String,
        #[command(flatten)]
        backend: BackendOpts,
        #[arg(long)]
        json: bool,
    },
    /// Record sensor replies for a prompt list into a fixture file.
    Record {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        backend: BackendOpts,
    },
    /// Start the session HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        state_dir: Option<PathBuf>,
        #[arg(long = "fixtures")]
        fixtures: Vec<PathBuf>,
        #[arg(long, default_value = "https://api.openai.com")]
        base_url: String,
        #[arg(long, default_value = "gpt-3.5-turbo")]
        model: String,
    },
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Plan { scenario, gamma, w1, w2, json } => commands::plan(&commands::PlanArgs {
            scenario,
            gamma,
            w1,
            w2,
            json,
        }),
        Command::Prompt { scenario, text, trust, session, backend, json } => commands::prompt(&commands::PromptArgs {
            scenario,
            text,
            trust,
            backend,
            session,
            json,
        }),
        Command::Compare { scenario, prompts, backend, json } => commands::compare(&commands::CompareArgs {
            scenario,
            prompts,
            backend,
            json,
        }),
        Command::Ablate { scenario, text, runs, noise, seed, backend, json } => commands::ablate(&commands::AblateArgs {
            scenario,
            text,
            runs,
            noise,
            seed,
            backend,
            json,
        }),
        Command::Sweep { scenario, text, n_values, backend, json } => commands::sweep(&commands::SweepArgs {
            scenario,
            text,
            n_values: commands::parse_n_values(&n_values)?,
            backend,
            json,
        }),
        Command::Record { scenario, prompts, out, backend } => commands::record(&commands::RecordArgs {
            scenario,
            prompts,
            out,
            backend,
        }),
        Command::Serve { port, state_dir, fixtures, base_url, model } => {
            let config = ServerConfig {
                state_dir,
                fixtures: load_fixtures(&fixtures)?,
                http: semcost::HttpConfig {
                    base_url,
                    model,
                    ..Default::default()
                },
            };
            tokio::runtime::Runtime::new()?.block_on(server::serve(port, config))?;
            Ok(String::new())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
