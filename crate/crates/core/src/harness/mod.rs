//! Experiment orchestration: training streams, frozen-model budget tests,
//! flexible-budget ambiguity tests, aggregation and result files.

mod records;
mod summary;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::habits::{HabitsError, SeqModel};
use crate::planner::{plan, Budget, PlanError, PlannerConfig};
use crate::taskgen::{chunk_order, preserving_share, Problem, ProblemSet, TaskgenError};

pub use records::{read_jsonl, write_csv, write_jsonl, Experiment, TrialRecord, CSV_HEADER};
pub use summary::{aggregate, complexity_bins, SummaryRow};

pub const DEFAULT_MAX_DEPTH: usize = 3;
pub const TRAINING_BUDGET: u32 = 50;
pub const FLEXIBLE_CAP: u32 = 500;
pub const MODELS_FORMAT: &str = "mcts-habits/trained-models";
pub const MODELS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Habits(#[from] HabitsError),
    #[error(transparent)]
    Taskgen(#[from] TaskgenError),
    #[error(transparent)]
    Tangram(#[from] crate::tangram::TangramError),
    #[error("sequence model of {variant} seed {seed} changed during a frozen test")]
    ModelMutated { variant: Variant, seed: u64 },
    #[error("{variant} seed {seed} consulted the sequence model")]
    ModelConsulted { variant: Variant, seed: u64 },
    #[error("no trained model for {variant} seed {seed}")]
    MissingModel { variant: Variant, seed: u64 },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "open-loop")]
    OpenLoop,
    #[serde(rename = "one-step")]
    OneStep,
    #[serde(rename = "vanilla")]
    Vanilla,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::OpenLoop,
        Variant::OneStep,
        Variant::Vanilla,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::OpenLoop => "open-loop",
            Variant::OneStep => "one-step",
            Variant::Vanilla => "vanilla",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant '{s}'"))
    }
}

/// One row of the variant table: budget, exploration, habit weight,
/// open-loop entropy threshold and sequence-model strength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub variant: Variant,
    pub budget: u32,
    pub exploration: f64,
    pub habit: f64,
    pub omega: f64,
    /// `None` when the variant has no sequence model.
    pub alpha: Option<f64>,
}

impl VariantConfig {
    pub fn table() -> [VariantConfig; 4] {
        let row = |variant, habit, omega, alpha| VariantConfig {
            variant,
            budget: TRAINING_BUDGET,
            exploration: 1.0,
            habit,
            omega,
            alpha,
        };
        [
            row(Variant::Full, 5.0, 1.5, Some(1.0)),
            row(Variant::OpenLoop, 0.0, 1.5, Some(1.0)),
            row(Variant::OneStep, 5.0, 0.0, Some(1.0)),
            row(Variant::Vanilla, 0.0, 0.0, None),
        ]
    }

    pub fn of(variant: Variant) -> VariantConfig {
        VariantConfig::table()
            .into_iter()
            .find(|v| v.variant == variant)
            .expect("every variant has a row")
    }

    /// Whether plans are fed back into a sequence model.
    pub fn learns(&self) -> bool {
        self.alpha.is_some() && (self.habit > 0.0 || self.omega > 0.0)
    }

    pub fn planner(&self, budget: Budget, seed: u64) -> PlannerConfig {
        PlannerConfig {
            budget,
            exploration: self.exploration,
            habit: self.habit,
            omega: self.omega,
            rollout_limit: None,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HarnessConfig {
    pub variants: Vec<VariantConfig>,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub max_depth: usize,
    pub flexible_cap: u32,
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            variants: VariantConfig::table().to_vec(),
            seeds: (0..32).collect(),
            master_seed: 0,
            max_depth: DEFAULT_MAX_DEPTH,
            flexible_cap: FLEXIBLE_CAP,
            workers: None,
        }
    }
}

impl HarnessConfig {
    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
        match self.workers {
            None => Ok(f()),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map(|pool| pool.install(f))
                .map_err(|e| HarnessError::Config(e.to_string())),
        }
    }

    fn streams(&self) -> Vec<(VariantConfig, u64)> {
        self.variants
            .iter()
            .flat_map(|v| self.seeds.iter().map(move |&s| (*v, s)))
            .collect()
    }
}

/// Seeds a stream-specific generator. Trial order depends only on the seed,
/// so every variant sees the same order under the same seed.
fn stream_rng(master: u64, seed: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(lane);
    rng
}

fn lane(v: Variant) -> u64 {
    1 + Variant::ALL
        .iter()
        .position(|x| *x == v)
        .expect("known variant") as u64
}

/// A model trained by one (variant, seed) stream.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub variant: Variant,
    pub seed: u64,
    pub model: SeqModel,
}

#[derive(Serialize, Deserialize)]
struct ModelsFile {
    format: String,
    version: u32,
    models: Vec<ModelEntry>,
}

#[derive(Serialize, Deserialize)]
struct ModelEntry {
    variant: Variant,
    seed: u64,
    model: Box<RawValue>,
}

pub fn models_to_json(models: &[TrainedModel]) -> Result<String, HarnessError> {
    let models = models
        .iter()
        .map(|m| {
            let text = m.model.to_json()?;
            let model = RawValue::from_string(text).map_err(|e| HarnessError::Io(e.to_string()))?;
            Ok(ModelEntry {
                variant: m.variant,
                seed: m.seed,
                model,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    serde_json::to_string(&ModelsFile {
        format: MODELS_FORMAT.into(),
        version: MODELS_VERSION,
        models,
    })
    .map_err(|e| HarnessError::Io(e.to_string()))
}

pub fn models_from_json(text: &str) -> Result<Vec<TrainedModel>, HarnessError> {
    let file: ModelsFile =
        serde_json::from_str(text).map_err(|e| HarnessError::Io(e.to_string()))?;
    if file.format != MODELS_FORMAT || file.version != MODELS_VERSION {
        return Err(HarnessError::Io(format!(
            "unsupported model file {} v{} (expected {MODELS_FORMAT} v{MODELS_VERSION})",
            file.format, file.version
        )));
    }
    file.models
        .into_iter()
        .map(|e| {
            Ok(TrainedModel {
                variant: e.variant,
                seed: e.seed,
                model: SeqModel::from_json(e.model.get())?,
            })
        })
        .collect()
}

fn find_model(
    models: &[TrainedModel],
    variant: Variant,
    seed: u64,
) -> Result<&SeqModel, HarnessError> {
    models
        .iter()
        .find(|m| m.variant == variant && m.seed == seed)
        .map(|m| &m.model)
        .ok_or(HarnessError::MissingModel { variant, seed })
}

struct Ctx<'a> {
    set: &'a ProblemSet,
    env: crate::tangram::Tangram,
}

impl Ctx<'_> {
    #[allow(clippy::too_many_arguments)]
    fn trial(
        &self,
        experiment: Experiment,
        v: &VariantConfig,
        seed: u64,
        trial: usize,
        problem: &Problem,
        budget: Budget,
        model: &SeqModel,
        rng: &mut ChaCha8Rng,
    ) -> Result<TrialRecord, HarnessError> {
        let before = model.predict_calls();
        let state = self.env.initial(problem.silhouette)?;
        let config = v.planner(budget, rng.gen());
        let result = plan(&self.env, &state, Some(model), &config, rng)?;
        if !(v.habit > 0.0 || v.omega > 0.0) && model.predict_calls() != before {
            return Err(HarnessError::ModelConsulted {
                variant: v.variant,
                seed,
            });
        }
        let order = (experiment == Experiment::Ambiguous && result.solved)
            .then(|| chunk_order(&result.placements(), &self.set.chunk));
        Ok(TrialRecord {
            experiment,
            condition: self.set.condition,
            variant: v.variant,
            seed,
            trial,
            problem_id: problem.id.clone(),
            kind: problem.kind,
            complexity: problem.complexity,
            budget: budget.limit(),
            solved: result.solved,
            nodes_evaluated: result.nodes_evaluated,
            used_chunk: result.used_chunk,
            chunk_lengths: result.chunk_lengths,
            plan_tokens: result.plan_token_sequence,
            hit_cap: result.hit_cap,
            chunk_order: order,
            chance_share: (experiment == Experiment::Ambiguous)
                .then(|| preserving_share(&self.set.chunk, &problem.solutions)),
        })
    }
}

fn new_model(
    set: &ProblemSet,
    config: &HarnessConfig,
    v: &VariantConfig,
    seed: u64,
) -> Result<SeqModel, HarnessError> {
    let env = set.env()?;
    let mut rng = stream_rng(config.master_seed, seed, 100 + lane(v.variant));
    Ok(SeqModel::new(
        env.vocab(),
        v.alpha.unwrap_or(1.0),
        config.max_depth,
        rng.gen(),
    )?)
}

/// Output of [`run_training`].
#[derive(Clone, Debug)]
pub struct Training {
    pub records: Vec<TrialRecord>,
    pub models: Vec<TrainedModel>,
}

/// Runs every (variant, seed) stream over the training set at the variant's
/// budget, feeding every emitted plan (solved or not) to the stream's
/// sequence model.
pub fn run_training(set: &ProblemSet, config: &HarnessConfig) -> Result<Training, HarnessError> {
    let ctx = Ctx {
        set,
        env: set.env()?,
    };
    let streams = config.streams();
    let outputs = config.install(|| {
        streams
            .par_iter()
            .map(
                |(v, seed)| -> Result<(Vec<TrialRecord>, TrainedModel), HarnessError> {
                    let mut model = new_model(set, config, v, *seed)?;
                    let mut order: Vec<usize> = (0..set.training.len()).collect();
                    order.shuffle(&mut stream_rng(config.master_seed, *seed, 0));
                    let mut rng = stream_rng(config.master_seed, *seed, lane(v.variant));
                    let mut records = Vec::with_capacity(order.len());
                    for (t, &i) in order.iter().enumerate() {
                        let problem = &set.training[i];
                        let r = ctx.trial(
                            Experiment::Training,
                            v,
                            *seed,
                            t,
                            problem,
                            Budget::Nodes(v.budget),
                            &model,
                            &mut rng,
                        )?;
                        if v.learns() {
                            model.observe(&r.plan_tokens)?;
                        }
                        records.push(r);
                    }
                    if !v.learns() && (model.observe_calls() > 0 || model.total_customers() > 0) {
                        return Err(HarnessError::ModelConsulted {
                            variant: v.variant,
                            seed: *seed,
                        });
                    }
                    Ok((
                        records,
                        TrainedModel {
                            variant: v.variant,
                            seed: *seed,
                            model,
                        },
                    ))
                },
            )
            .collect::<Result<Vec<_>, _>>()
    })??;
    let mut records = Vec::new();
    let mut models = Vec::new();
    for (r, m) in outputs {
        records.extend(r);
        models.push(m);
    }
    Ok(Training { records, models })
}

/// Runs `problems` per stream against frozen models, checking the model's
/// serialization is unchanged afterwards.
fn frozen_runs(
    set: &ProblemSet,
    config: &HarnessConfig,
    models: &[TrainedModel],
    experiment: Experiment,
    problems: &[(Budget, &Problem)],
) -> Result<Vec<TrialRecord>, HarnessError> {
    let ctx = Ctx {
        set,
        env: set.env()?,
    };
    let lane_offset = match experiment {
        Experiment::Budget => 10,
        _ => 20,
    };
    let streams = config.streams();
    let outputs = config.install(|| {
        streams
            .par_iter()
            .map(|(v, seed)| -> Result<Vec<TrialRecord>, HarnessError> {
                let model = find_model(models, v.variant, *seed)?.clone();
                let frozen = model.to_json()?;
                let mut rng = stream_rng(config.master_seed, *seed, lane_offset + lane(v.variant));
                let mut out = Vec::with_capacity(problems.len());
                for (t, (budget, problem)) in problems.iter().enumerate() {
                    out.push(
                        ctx.trial(experiment, v, *seed, t, problem, *budget, &model, &mut rng)?,
                    );
                }
                if model.to_json()? != frozen {
                    return Err(HarnessError::ModelMutated {
                        variant: v.variant,
                        seed: *seed,
                    });
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(outputs.into_iter().flatten().collect())
}

/// Every budget-test silhouette at its budget, per stream.
pub fn run_budget_test(
    set: &ProblemSet,
    config: &HarnessConfig,
    models: &[TrainedModel],
) -> Result<Vec<TrialRecord>, HarnessError> {
    let problems: Vec<(Budget, &Problem)> = set
        .budget_tests
        .iter()
        .flat_map(|b| b.problems.iter().map(move |p| (Budget::Nodes(b.budget), p)))
        .collect();
    frozen_runs(set, config, models, Experiment::Budget, &problems)
}

/// Every ambiguous silhouette with a flexible budget, per stream.
pub fn run_ambiguous_test(
    set: &ProblemSet,
    config: &HarnessConfig,
    models: &[TrainedModel],
) -> Result<Vec<TrialRecord>, HarnessError> {
    let budget = Budget::Flexible {
        cap: config.flexible_cap,
    };
    let problems: Vec<(Budget, &Problem)> = set.ambiguous.iter().map(|p| (budget, p)).collect();
    frozen_runs(set, config, models, Experiment::Ambiguous, &problems)
}
