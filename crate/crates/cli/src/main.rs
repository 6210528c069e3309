mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "habits",
    version,
    about = "MCTS with learned action habits on the Sticky Tangram task"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate certified training, budget-test and ambiguous silhouettes.
    Gen(Invocation),
    /// Run every (variant, seed) stream over the training set.
    Train(Invocation),
    /// Test frozen models on the budget-restricted silhouettes.
    TestBudget(Invocation),
    /// Test frozen models on ambiguous silhouettes with a flexible budget.
    TestAmbiguous(Invocation),
    /// Print recorded plans as board states, one per edge.
    Replay(Invocation),
    /// Print the most likely next tokens for every observed context.
    ModelDump(Invocation),
}

#[derive(Debug, Args)]
struct Invocation {
    /// Key-value config file; flags override its values.
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Args)]
struct Flags {
    /// duplet or triplet.
    #[arg(long)]
    condition: Option<String>,
    /// Training trials to generate; for replay, how many plans to print.
    #[arg(long, allow_hyphen_values = true)]
    trials: Option<String>,
    /// N (seeds 0..N), a..b, or a comma-separated list ("3," is seed 3 alone).
    #[arg(long)]
    seeds: Option<String>,
    /// Node budget during training.
    #[arg(long, allow_hyphen_values = true)]
    budget: Option<String>,
    /// Exploration coefficient.
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    /// Habit weight of the full variant.
    #[arg(long, allow_hyphen_values = true)]
    h: Option<String>,
    /// Open-loop entropy threshold (nats) of the full variant.
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<String>,
    /// Sequence-model concentration.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Grid size as WIDTHxHEIGHT.
    #[arg(long)]
    grid: Option<String>,
    /// JSON block inventory.
    #[arg(long)]
    shapes: Option<String>,
    /// Input run directory or file.
    #[arg(long = "in")]
    input: Option<String>,
    /// Output run directory or file.
    #[arg(long)]
    out: Option<String>,
    /// Worker threads (default: available cores).
    #[arg(long, allow_hyphen_values = true)]
    workers: Option<String>,
    /// Master seed for generation and every stream.
    #[arg(long, alias = "seed", allow_hyphen_values = true)]
    master_seed: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, &String)> {
        let all = [
            ("condition", &self.condition),
            ("trials", &self.trials),
            ("seeds", &self.seeds),
            ("budget", &self.budget),
            ("c", &self.c),
            ("h", &self.h),
            ("omega", &self.omega),
            ("alpha", &self.alpha),
            ("grid", &self.grid),
            ("shapes", &self.shapes),
            ("in", &self.input),
            ("out", &self.out),
            ("workers", &self.workers),
            ("master-seed", &self.master_seed),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
            .collect()
    }
}

/// Defaults, then `inherited` (settings saved next to the inputs), then the
/// config file, then flags.
fn resolve(inv: &Invocation, inherit: bool) -> Result<RunConfig, String> {
    let file = match &inv.config {
        Some(p) => config::read_kv(p)?,
        None => Default::default(),
    };
    let build =
        |base: Option<&std::collections::BTreeMap<String, String>>| -> Result<RunConfig, String> {
            let mut c = RunConfig::default();
            if let Some(b) = base {
                c.apply(b)?;
            }
            c.apply(&file)?;
            for (k, v) in inv.flags.pairs() {
                c.set(k, v)?;
            }
            Ok(c)
        };
    let first = build(None)?;
    if !inherit {
        return Ok(first);
    }
    let Some(dir) = first.input.as_deref().map(commands::run_dir) else {
        return Ok(first);
    };
    let saved = dir.join(commands::CONFIG_FILE);
    if !saved.is_file() {
        return Ok(first);
    }
    build(Some(&config::read_kv(&saved)?))
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Gen(inv) => commands::gen(&resolve(&inv, false)?),
        Command::Train(inv) => commands::train(&resolve(&inv, false)?),
        Command::TestBudget(inv) => commands::test_budget(&resolve(&inv, true)?),
        Command::TestAmbiguous(inv) => commands::test_ambiguous(&resolve(&inv, true)?),
        Command::Replay(inv) => commands::replay(&resolve(&inv, false)?),
        Command::ModelDump(inv) => commands::model_dump(&resolve(&inv, false)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
