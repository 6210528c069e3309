use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mcts_habits::harness::{
    aggregate, complexity_bins, models_from_json, models_to_json, read_jsonl, run_ambiguous_test,
    run_budget_test, run_training, write_csv, write_jsonl, SummaryRow, TrainedModel, TrialRecord,
};
use mcts_habits::tangram::{Inventory, Tangram};
use mcts_habits::taskgen::{Kind, ProblemSet, SetPlan};

use crate::config::RunConfig;

pub const PROBLEMS_FILE: &str = "problems.json";
pub const MODELS_FILE: &str = "models.json";
pub const CONFIG_FILE: &str = "config.txt";
const TOP_K: usize = 5;
const COMPLEXITY_BINS: usize = 3;

/// The directory of a run: `path` itself, or its parent when it names a file.
pub fn run_dir(path: &Path) -> PathBuf {
    if path.extension().is_some() && !path.is_dir() {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        path.to_path_buf()
    }
}

fn input_dir(config: &RunConfig) -> Result<PathBuf, String> {
    let path = config.input.as_deref().ok_or("--in is required")?;
    if !path.exists() {
        return Err(format!("{}: no such file or directory", path.display()));
    }
    Ok(run_dir(path))
}

fn output_dir(config: &RunConfig, fallback: &Path) -> Result<PathBuf, String> {
    let dir = config
        .output
        .clone()
        .unwrap_or_else(|| fallback.to_path_buf());
    std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, String> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn with_workers<T: Send>(config: &RunConfig, f: impl FnOnce() -> T + Send) -> Result<T, String> {
    match config.workers {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| e.to_string()),
    }
}

fn load_set(dir: &Path, config: &RunConfig) -> Result<ProblemSet, String> {
    let path = dir.join(PROBLEMS_FILE);
    let set = with_workers(config, || ProblemSet::load(&path))?.map_err(|e| e.to_string())?;
    if let Some(c) = config.condition {
        if c != set.condition {
            return Err(format!(
                "{} holds a {} set but --condition is {c}",
                path.display(),
                set.condition
            ));
        }
    }
    Ok(set)
}

fn load_models(path: &Path) -> Result<Vec<TrainedModel>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    models_from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), String> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn write_records(dir: &Path, stem: &str, records: &[TrialRecord]) -> Result<(), String> {
    write_csv(create(&dir.join(format!("{stem}.csv")))?, records).map_err(|e| e.to_string())?;
    write_jsonl(create(&dir.join(format!("{stem}.jsonl")))?, records).map_err(|e| e.to_string())?;
    write_summary(
        &dir.join(format!("{stem}_summary.csv")),
        &aggregate(records),
    )?;
    write_summary(
        &dir.join(format!("{stem}_bins.csv")),
        &complexity_bins(records, COMPLEXITY_BINS),
    )
}

fn print_success(records: &[TrialRecord]) {
    let mut by_variant: std::collections::BTreeMap<String, (usize, usize)> = Default::default();
    for r in records {
        let e = by_variant.entry(r.variant.to_string()).or_default();
        e.0 += r.solved as usize;
        e.1 += 1;
    }
    for (v, (s, n)) in by_variant {
        eprintln!("{v:>10}: solved {s}/{n}");
    }
}

pub fn gen(config: &RunConfig) -> Result<(), String> {
    let condition = config.condition.ok_or("--condition is required")?;
    let inventory = match &config.shapes {
        Some(p) => Inventory::from_file(p).map_err(|e| e.to_string())?,
        None => Inventory::default(),
    };
    let (w, h) = config.grid;
    let env = Tangram::with_size(w, h, inventory).map_err(|e| e.to_string())?;
    let chunk = condition.default_chunk(&env).map_err(|e| e.to_string())?;
    let plan = SetPlan {
        trials: config.trials.unwrap_or(SetPlan::default().trials),
        ..SetPlan::default()
    };
    let set = with_workers(config, || {
        ProblemSet::generate(&env, condition, chunk, &plan, config.master_seed)
    })?
    .map_err(|e| e.to_string())?;
    let dir = output_dir(config, Path::new("."))?;
    let path = dir.join(PROBLEMS_FILE);
    set.save(&path).map_err(|e| e.to_string())?;
    let count = |k: Kind| set.training.iter().filter(|p| p.kind == k).count();
    eprintln!(
        "{condition}: {} training ({} chunky, {} random), {} budget tests, {} ambiguous -> {}",
        set.training.len(),
        count(Kind::Chunky),
        count(Kind::Random),
        set.budget_tests
            .iter()
            .map(|b| b.problems.len())
            .sum::<usize>(),
        set.ambiguous.len(),
        path.display()
    );
    Ok(())
}

pub fn train(config: &RunConfig) -> Result<(), String> {
    let dir = input_dir(config)?;
    let set = load_set(&dir, config)?;
    let harness = config.harness((0..32).collect());
    let training = run_training(&set, &harness).map_err(|e| e.to_string())?;
    let out = output_dir(config, &dir)?;
    let json = models_to_json(&training.models).map_err(|e| e.to_string())?;
    std::fs::write(out.join(MODELS_FILE), json).map_err(|e| e.to_string())?;
    write_records(&out, "training", &training.records)?;
    let mut saved = config.clone();
    saved.condition = Some(set.condition);
    saved.seeds = Some(harness.seeds.clone());
    std::fs::write(out.join(CONFIG_FILE), saved.to_kv()).map_err(|e| e.to_string())?;
    print_success(&training.records);
    Ok(())
}

fn frozen_inputs(config: &RunConfig) -> Result<(PathBuf, ProblemSet, Vec<TrainedModel>), String> {
    let dir = input_dir(config)?;
    let set = load_set(&dir, config)?;
    let models = load_models(&dir.join(MODELS_FILE))?;
    Ok((dir, set, models))
}

fn model_seeds(models: &[TrainedModel]) -> Vec<u64> {
    let mut seeds: Vec<u64> = Vec::new();
    for m in models {
        if !seeds.contains(&m.seed) {
            seeds.push(m.seed);
        }
    }
    seeds
}

pub fn test_budget(config: &RunConfig) -> Result<(), String> {
    let (dir, set, models) = frozen_inputs(config)?;
    let harness = config.harness(model_seeds(&models));
    let records = run_budget_test(&set, &harness, &models).map_err(|e| e.to_string())?;
    write_records(&output_dir(config, &dir)?, "budget", &records)?;
    print_success(&records);
    Ok(())
}

pub fn test_ambiguous(config: &RunConfig) -> Result<(), String> {
    let (dir, set, models) = frozen_inputs(config)?;
    let harness = config.harness(model_seeds(&models));
    let records = run_ambiguous_test(&set, &harness, &models).map_err(|e| e.to_string())?;
    write_records(&output_dir(config, &dir)?, "ambiguous", &records)?;
    print_success(&records);
    Ok(())
}

fn sink(config: &RunConfig) -> Result<Box<dyn Write>, String> {
    match &config.output {
        Some(p) => Ok(Box::new(create(p)?)),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

/// Board states after every edge of a recorded plan; chunk edges are
/// marked with `*`.
pub fn render_plan(set: &ProblemSet, record: &TrialRecord) -> Result<String, String> {
    let env = set.env().map_err(|e| e.to_string())?;
    let problem = set
        .all_problems()
        .find(|p| p.id == record.problem_id)
        .ok_or_else(|| format!("problem {} is not in the problem set", record.problem_id))?;
    let mut state = env.initial(problem.silhouette).map_err(|e| e.to_string())?;
    let mut out = format!(
        "{} {} seed {} trial {} {}: {} in {} steps, {} nodes\n",
        record.experiment,
        record.variant,
        record.seed,
        record.trial,
        record.problem_id,
        if record.solved { "solved" } else { "unsolved" },
        record.chunk_lengths.len(),
        record.nodes_evaluated
    );
    out.push_str(&env.render(&state));
    let mut tokens = record.plan_tokens.iter();
    for (step, &len) in record.chunk_lengths.iter().enumerate() {
        let mut names = Vec::with_capacity(len);
        for t in tokens.by_ref().take(len) {
            let p = env.detokenize(&state, *t);
            state = env
                .apply(&state, p)
                .map_err(|e| format!("step {}: {t} breaks a rule: {e}", step + 1))?;
            names.push(t.to_string());
        }
        let mark = if len > 1 { "*" } else { " " };
        out.push_str(&format!("{mark} step {}: {}\n", step + 1, names.join(" ")));
        out.push_str(&env.render(&state));
    }
    Ok(out)
}

pub fn replay(config: &RunConfig) -> Result<(), String> {
    let path = config.input.as_deref().ok_or("--in is required")?;
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let records =
        read_jsonl(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))?;
    let set = load_set(&run_dir(path), config)?;
    let limit = config.trials.unwrap_or(1);
    let mut out = sink(config)?;
    let chosen = records
        .iter()
        .filter(|r| r.solved && r.condition == set.condition)
        .filter(|r| config.seeds.as_ref().is_none_or(|s| s.contains(&r.seed)))
        .take(limit);
    for r in chosen {
        writeln!(out, "{}", render_plan(&set, r)?).map_err(|e| e.to_string())?;
    }
    Ok(())
}

pub fn model_dump(config: &RunConfig) -> Result<(), String> {
    let path = config.input.as_deref().ok_or("--in is required")?;
    let file = if path.is_dir() {
        path.join(MODELS_FILE)
    } else {
        path.to_path_buf()
    };
    let models = load_models(&file)?;
    let mut out = sink(config)?;
    let io = |e: std::io::Error| e.to_string();
    for m in models
        .iter()
        .filter(|m| config.seeds.as_ref().is_none_or(|s| s.contains(&m.seed)))
        .filter(|m| m.model.total_customers() > 0)
    {
        writeln!(out, "== {} seed {}", m.variant, m.seed).map_err(io)?;
        for ctx in m.model.contexts() {
            let dist = m.model.predict(&ctx.0).map_err(|e| e.to_string())?;
            let top: Vec<String> = dist
                .top_k(TOP_K)
                .iter()
                .map(|(t, p)| format!("{t} {p:.4}"))
                .collect();
            let shown: Vec<String> = ctx.0.iter().map(ToString::to_string).collect();
            writeln!(
                out,
                "[{}] H={:.3} -> {}",
                shown.join(" "),
                dist.entropy(),
                top.join(", ")
            )
            .map_err(io)?;
        }
    }
    Ok(())
}
