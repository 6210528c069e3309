use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    balanced_compositions, certify, combinations, complexity, gen_silhouette, match_balanced,
    match_sets, solve_exhaustive, ChunkSpec, GenConfig, Kind, MatchConfig, TaskgenError,
    DEFAULT_COMPLEXITY_REPEATS,
};
use crate::tangram::{Grid, Inventory, Placement, Silhouette, Tangram};

pub const PROBLEM_SET_FORMAT: &str = "mcts-habits/problem-set";
pub const PROBLEM_SET_VERSION: u32 = 1;

/// One certified silhouette with its measured complexity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub kind: Kind,
    pub silhouette: Silhouette,
    pub blocks: Vec<u8>,
    pub complexity: u32,
    pub tree_size: usize,
    pub solutions: Vec<Vec<Placement>>,
    /// SHA-256 over the solution list.
    pub certificate: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Duplet,
    Triplet,
}

impl Condition {
    /// The chunk used for this condition with the default inventory.
    pub fn default_chunk(self, env: &Tangram) -> Result<ChunkSpec, TaskgenError> {
        match self {
            Condition::Duplet => ChunkSpec::new(env, 2, &[(1, (-1, 2))]),
            Condition::Triplet => ChunkSpec::new(env, 0, &[(5, (-1, 1)), (4, (-1, 2))]),
        }
    }

    pub fn chunk_len(self) -> usize {
        match self {
            Condition::Duplet => 2,
            Condition::Triplet => 3,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Duplet => "duplet",
            Condition::Triplet => "triplet",
        })
    }
}

impl FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "duplet" => Ok(Condition::Duplet),
            "triplet" => Ok(Condition::Triplet),
            _ => Err(format!(
                "unknown condition '{s}' (expected duplet or triplet)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSet {
    pub budget: u32,
    pub problems: Vec<Problem>,
}

/// Sizes and tolerances for [`ProblemSet::generate`].
#[derive(Clone, Debug)]
pub struct SetPlan {
    pub trials: usize,
    pub budgets: Vec<u32>,
    /// Chunky and random silhouettes per budget.
    pub per_budget: (usize, usize),
    pub ambiguous: usize,
    pub matching: MatchConfig,
    pub repeats: usize,
    pub gen: GenConfig,
    /// Candidate rounds per slot before matching gives up.
    pub max_rounds: usize,
    /// Largest relative deviation of per-block usage in the training set.
    pub balance_tolerance: f64,
}

impl Default for SetPlan {
    fn default() -> Self {
        SetPlan {
            trials: 19,
            budgets: vec![12, 8, 5, 1],
            per_budget: (2, 2),
            ambiguous: 4,
            matching: MatchConfig::default(),
            repeats: DEFAULT_COMPLEXITY_REPEATS,
            gen: GenConfig::default(),
            max_rounds: 40,
            balance_tolerance: 0.10,
        }
    }
}

impl SetPlan {
    /// Closest chunky:random split of `trials` to 4:3.
    pub fn training_split(&self) -> (usize, usize) {
        let chunky = ((self.trials as f64) * 4.0 / 7.0).round() as usize;
        (chunky, self.trials - chunky)
    }
}

/// Every silhouette one condition needs, with certificates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSet {
    pub format: String,
    pub version: u32,
    pub condition: Condition,
    pub chunk: ChunkSpec,
    pub grid: Grid,
    pub inventory: Inventory,
    pub generator_seed: u64,
    pub complexity_cap: u32,
    pub tree_guard: usize,
    pub training: Vec<Problem>,
    pub budget_tests: Vec<BudgetSet>,
    pub ambiguous: Vec<Problem>,
}

/// One position of a set. Rounds cycle through the feasible block
/// compositions, starting from the slot's balanced pick.
struct Slot {
    kind: Kind,
    compositions: Vec<Vec<u8>>,
    round: usize,
    rng: ChaCha8Rng,
    pool: Vec<Problem>,
}

impl Slot {
    fn new(kind: Kind, first: Vec<u8>, options: &[Vec<u8>], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rest: Vec<Vec<u8>> = options.iter().filter(|o| **o != first).cloned().collect();
        rest.shuffle(&mut rng);
        let mut compositions = vec![first];
        compositions.extend(rest);
        Slot {
            kind,
            compositions,
            round: 0,
            rng,
            pool: Vec::new(),
        }
    }

    /// Adds one admissible candidate, or nothing if this round's draw fails.
    fn grow(
        &mut self,
        env: &Tangram,
        chunk: &ChunkSpec,
        plan: &SetPlan,
    ) -> Result<(), TaskgenError> {
        let extra = self.compositions[self.round % self.compositions.len()].clone();
        self.round += 1;
        let g = match gen_silhouette(env, self.kind, chunk, &extra, &plan.gen, &mut self.rng) {
            Ok(g) => g,
            Err(TaskgenError::RetryCap { .. }) => return Ok(()),
            Err(e) => return Err(e),
        };
        let cap = (10 * g.tree_size).min(u32::MAX as usize) as u32;
        match complexity(env, &g.silhouette, plan.repeats, cap, &mut self.rng) {
            Ok(c) if c <= plan.matching.cap => {
                self.pool.push(Problem {
                    id: String::new(),
                    kind: self.kind,
                    silhouette: g.silhouette,
                    certificate: g.certificate_hash(),
                    blocks: g.blocks,
                    complexity: c,
                    tree_size: g.tree_size,
                    solutions: g.solutions,
                });
                Ok(())
            }
            Ok(_) | Err(TaskgenError::Unsolvable { .. }) => Ok(()),
            Err(e) => Err(e),
        }
    }
}

fn grow_all(
    slots: &mut [Slot],
    env: &Tangram,
    chunk: &ChunkSpec,
    plan: &SetPlan,
) -> Result<(), TaskgenError> {
    slots
        .par_iter_mut()
        .map(|s| s.grow(env, chunk, plan))
        .collect::<Result<Vec<()>, _>>()
        .map(|_| ())
}

/// Generates chunky and random slots and matches them, adding a candidate
/// to every slot per round until matching succeeds. With `balanced`, rounds
/// continue until per-block usage is within the plan's tolerance; the most
/// balanced match is returned when rounds run out.
fn matched_set(
    env: &Tangram,
    chunk: &ChunkSpec,
    plan: &SetPlan,
    n_chunky: usize,
    n_random: usize,
    balanced: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Problem>, TaskgenError> {
    let others: Vec<u8> = (0..env.num_blocks() as u8)
        .filter(|b| !chunk.blocks().contains(b))
        .collect();
    let n_blocks = plan.gen.n_blocks;
    if n_blocks < chunk.len() || others.len() < n_blocks.saturating_sub(chunk.len()) {
        return Err(TaskgenError::BadChunk(format!(
            "cannot compose {n_blocks}-block silhouettes around a {}-block chunk",
            chunk.len()
        )));
    }
    let mut counts = BTreeMap::new();
    let r_options = feasible_options(env, Kind::Random, chunk, &others, n_blocks, plan, rng)?;
    let c_options = feasible_options(
        env,
        Kind::Chunky,
        chunk,
        &others,
        n_blocks - chunk.len(),
        plan,
        rng,
    )?;
    let randoms = balanced_compositions(&r_options, n_random, &mut counts, rng);
    let chunkies = balanced_compositions(&c_options, n_chunky, &mut counts, rng);
    let mut chunky: Vec<Slot> = chunkies
        .into_iter()
        .map(|e| Slot::new(Kind::Chunky, e, &c_options, rng.gen()))
        .collect();
    let mut random: Vec<Slot> = randoms
        .into_iter()
        .map(|e| Slot::new(Kind::Random, e, &r_options, rng.gen()))
        .collect();
    let mut last_err = None;
    let mut best: Option<(f64, Vec<Problem>)> = None;
    for _ in 0..plan.max_rounds {
        grow_all(&mut chunky, env, chunk, plan)?;
        grow_all(&mut random, env, chunk, plan)?;
        let cp: Vec<Vec<Problem>> = chunky.iter().map(|s| s.pool.clone()).collect();
        let rp: Vec<Vec<Problem>> = random.iter().map(|s| s.pool.clone()).collect();
        if !balanced {
            match match_sets(&cp, &rp, plan.matching, rng) {
                Ok(set) => return Ok(set),
                Err(e) => last_err = Some(e),
            }
            continue;
        }
        match match_balanced(&cp, &rp, plan.matching, env.num_blocks(), rng) {
            Ok((set, balance)) => {
                if balance.max_deviation <= plan.balance_tolerance {
                    return Ok(set);
                }
                if best.as_ref().map_or(true, |b| balance.max_deviation < b.0) {
                    best = Some((balance.max_deviation, set));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    if let Some((_, set)) = best {
        return Ok(set);
    }
    Err(last_err.unwrap_or_else(|| TaskgenError::PoolTooSmall("no rounds run".into())))
}

/// Block compositions of size `k` from `pool` for which the generator can
/// produce a certified silhouette of `kind` within its retry cap.
fn feasible_options(
    env: &Tangram,
    kind: Kind,
    chunk: &ChunkSpec,
    pool: &[u8],
    k: usize,
    plan: &SetPlan,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<u8>>, TaskgenError> {
    let candidates: Vec<(Vec<u8>, u64)> = combinations(pool, k.min(pool.len()))
        .into_iter()
        .map(|c| (c, rng.gen()))
        .collect();
    let probed: Vec<Option<Vec<u8>>> = candidates
        .into_par_iter()
        .map(|(c, seed)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            match gen_silhouette(env, kind, chunk, &c, &plan.gen, &mut r) {
                Ok(_) => Ok(Some(c)),
                Err(TaskgenError::RetryCap { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_, _>>()?;
    let options: Vec<Vec<u8>> = probed.into_iter().flatten().collect();
    if options.is_empty() {
        return Err(TaskgenError::RetryCap {
            kind,
            tries: plan.gen.retry_cap,
        });
    }
    Ok(options)
}

fn ambiguous_set(
    env: &Tangram,
    chunk: &ChunkSpec,
    plan: &SetPlan,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Problem>, TaskgenError> {
    let others: Vec<u8> = (0..env.num_blocks() as u8)
        .filter(|b| !chunk.blocks().contains(b))
        .collect();
    let mut counts = BTreeMap::new();
    let k = plan.gen.n_blocks.saturating_sub(chunk.len());
    let options = feasible_options(env, Kind::Ambiguous, chunk, &others, k, plan, rng)?;
    let mut slots: Vec<Slot> = balanced_compositions(&options, plan.ambiguous, &mut counts, rng)
        .into_iter()
        .map(|e| Slot::new(Kind::Ambiguous, e, &options, rng.gen()))
        .collect();
    for _ in 0..plan.max_rounds {
        let open: Vec<&mut Slot> = slots.iter_mut().filter(|s| s.pool.is_empty()).collect();
        if open.is_empty() {
            break;
        }
        open.into_par_iter()
            .map(|s| s.grow(env, chunk, plan))
            .collect::<Result<Vec<()>, _>>()?;
    }
    let filled = slots.iter().filter(|s| !s.pool.is_empty()).count();
    if filled < slots.len() {
        return Err(TaskgenError::PoolTooSmall(format!(
            "only {filled} of {} ambiguous silhouettes could be generated",
            slots.len()
        )));
    }
    Ok(slots
        .into_iter()
        .map(|mut s| s.pool.swap_remove(0))
        .collect())
}

fn label(problems: &mut [Problem], prefix: &str) {
    for (i, p) in problems.iter_mut().enumerate() {
        p.id = format!("{prefix}-{i:02}");
    }
}

impl ProblemSet {
    /// Builds the training, budget-test and ambiguous sets for one condition.
    pub fn generate(
        env: &Tangram,
        condition: Condition,
        chunk: ChunkSpec,
        plan: &SetPlan,
        seed: u64,
    ) -> Result<ProblemSet, TaskgenError> {
        chunk.validate(env)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n_chunky, n_random) = plan.training_split();
        let mut training = matched_set(env, &chunk, plan, n_chunky, n_random, true, &mut rng)?;
        label(&mut training, "train");
        let mut budget_tests = Vec::new();
        for &budget in &plan.budgets {
            let (c, r) = plan.per_budget;
            let mut problems = matched_set(env, &chunk, plan, c, r, false, &mut rng)?;
            label(&mut problems, &format!("budget{budget}"));
            budget_tests.push(BudgetSet { budget, problems });
        }
        let mut ambiguous = ambiguous_set(env, &chunk, plan, &mut rng)?;
        label(&mut ambiguous, "ambiguous");
        Ok(ProblemSet {
            format: PROBLEM_SET_FORMAT.into(),
            version: PROBLEM_SET_VERSION,
            condition,
            chunk,
            grid: env.grid(),
            inventory: env.inventory().clone(),
            generator_seed: seed,
            complexity_cap: plan.matching.cap,
            tree_guard: plan.gen.tree_guard,
            training,
            budget_tests,
            ambiguous,
        })
    }

    pub fn env(&self) -> Result<Tangram, TaskgenError> {
        let inventory = Inventory::new(self.inventory.shapes.clone())?;
        Ok(Tangram::new(self.grid, inventory))
    }

    pub fn all_problems(&self) -> impl Iterator<Item = &Problem> {
        self.training
            .iter()
            .chain(self.budget_tests.iter().flat_map(|b| &b.problems))
            .chain(&self.ambiguous)
    }

    /// Re-enumerates every silhouette and checks it against its stored certificate.
    pub fn verify(&self) -> Result<(), TaskgenError> {
        if self.format != PROBLEM_SET_FORMAT || self.version != PROBLEM_SET_VERSION {
            return Err(TaskgenError::Certificate(format!(
                "unsupported problem-set format {} v{}",
                self.format, self.version
            )));
        }
        let env = self.env()?;
        self.chunk.validate(&env)?;
        let problems: Vec<&Problem> = self.all_problems().collect();
        problems.par_iter().try_for_each(|p| {
            let bad = |why: &str| TaskgenError::Certificate(format!("{}: {why}", p.id));
            if p.silhouette.grid() != self.grid {
                return Err(bad("grid differs from the set's grid"));
            }
            let ex = solve_exhaustive(&env, &p.silhouette, self.tree_guard)?;
            if ex.solutions != p.solutions || ex.tree_size != p.tree_size {
                return Err(bad("solution set differs from a fresh enumeration"));
            }
            if super::certificate_hash(&ex.solutions) != p.certificate {
                return Err(bad("certificate hash differs"));
            }
            if !certify(p.kind, &self.chunk, &ex.solutions) {
                return Err(bad("solutions do not satisfy the kind's conditions"));
            }
            if p.kind != super::Kind::Ambiguous && p.complexity > self.complexity_cap {
                return Err(bad("complexity above cap"));
            }
            Ok(())
        })
    }

    pub fn to_json(&self) -> Result<String, TaskgenError> {
        serde_json::to_string_pretty(self).map_err(|e| TaskgenError::Io(e.to_string()))
    }

    /// Parses and re-verifies a problem set.
    pub fn from_json(text: &str) -> Result<ProblemSet, TaskgenError> {
        let set: ProblemSet =
            serde_json::from_str(text).map_err(|e| TaskgenError::Io(e.to_string()))?;
        set.verify()?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<(), TaskgenError> {
        std::fs::write(path, self.to_json()?)
            .map_err(|e| TaskgenError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<ProblemSet, TaskgenError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TaskgenError::Io(format!("{}: {e}", path.display())))?;
        ProblemSet::from_json(&text)
    }
}
