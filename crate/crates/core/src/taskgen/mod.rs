//! Problem generation: chunky, random and sequence-ambiguous silhouettes,
//! the exhaustive game-tree oracle, vanilla-MCTS complexity and
//! complexity-matched trial sets.

mod matching;
mod set;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::habits::ActionToken;
use crate::planner::{plan, Budget, PlanError, PlannerConfig};
use crate::tangram::{BoardState, CellSet, Placement, Silhouette, Tangram, TangramError};

pub use matching::{
    balance_report, balanced_compositions, block_usage, combinations, match_balanced, match_sets,
    BlockBalance, MatchConfig,
};
pub use set::{
    BudgetSet, Condition, Problem, ProblemSet, SetPlan, PROBLEM_SET_FORMAT, PROBLEM_SET_VERSION,
};

/// Largest game tree [`solve_exhaustive`] will walk by default.
pub const DEFAULT_TREE_GUARD: usize = 100_000;
/// Attempts per silhouette before generation gives up.
pub const DEFAULT_RETRY_CAP: usize = 10_000;
/// Vanilla runs whose median defines complexity.
pub const DEFAULT_COMPLEXITY_REPEATS: usize = 32;
/// Largest complexity admitted into a trial set.
pub const DEFAULT_COMPLEXITY_CAP: u32 = 50;

#[derive(Debug, Error)]
pub enum TaskgenError {
    #[error("game tree exceeds {limit} nodes")]
    TreeTooLarge { limit: usize },
    #[error("no {kind:?} silhouette after {tries} attempts")]
    RetryCap { kind: Kind, tries: usize },
    #[error("invalid chunk: {0}")]
    BadChunk(String),
    #[error("vanilla search solved only {solved} of {repeats} runs within {cap} nodes")]
    Unsolvable {
        solved: usize,
        repeats: usize,
        cap: u32,
    },
    #[error("cannot assemble trial set: {0}")]
    PoolTooSmall(String),
    #[error("certificate mismatch for {0}")]
    Certificate(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Tangram(#[from] TangramError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Chunky,
    Random,
    Ambiguous,
}

/// A fixed multi-block arrangement: block ids in placement order and each
/// member's anchor offset from the previous member.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSpec {
    pub first: u8,
    pub rest: Vec<(u8, (i32, i32))>,
}

impl ChunkSpec {
    pub fn new(env: &Tangram, first: u8, rest: &[(u8, (i32, i32))]) -> Result<Self, TaskgenError> {
        let spec = ChunkSpec {
            first,
            rest: rest.to_vec(),
        };
        spec.validate(env)?;
        Ok(spec)
    }

    pub fn len(&self) -> usize {
        1 + self.rest.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn blocks(&self) -> Vec<u8> {
        std::iter::once(self.first)
            .chain(self.rest.iter().map(|(b, _)| *b))
            .collect()
    }

    /// Tokens of the second and later members (the first depends on context).
    pub fn tail_tokens(&self) -> Vec<ActionToken> {
        self.rest
            .iter()
            .map(|&(b, (dx, dy))| ActionToken::new(b, dx as i8, dy as i8))
            .collect()
    }

    /// Absolute placements when the first member's anchor is at `(x, y)`.
    pub fn placements_at(&self, x: i32, y: i32) -> Vec<Placement> {
        let mut out = vec![Placement::new(self.first, x, y)];
        let (mut px, mut py) = (x, y);
        for &(b, (dx, dy)) in &self.rest {
            px += dx;
            py += dy;
            out.push(Placement::new(b, px, py));
        }
        out
    }

    pub fn validate(&self, env: &Tangram) -> Result<(), TaskgenError> {
        let blocks = self.blocks();
        let distinct: BTreeSet<u8> = blocks.iter().copied().collect();
        if self.rest.is_empty() {
            return Err(TaskgenError::BadChunk(
                "a chunk needs at least two members".into(),
            ));
        }
        if distinct.len() != blocks.len() {
            return Err(TaskgenError::BadChunk(
                "members must be distinct blocks".into(),
            ));
        }
        if blocks.iter().any(|&b| b as usize >= env.num_blocks()) {
            return Err(TaskgenError::BadChunk("unknown block".into()));
        }
        // Lay it out far from the edges of a scratch grid and check stickiness.
        let grid = crate::tangram::Grid::new(16, 8).map_err(|e| TaskgenError::BadChunk(e))?;
        let scratch = Tangram::new(grid, env.inventory().clone());
        let mut built = CellSet::EMPTY;
        for (i, p) in self.placements_at(5, 2).into_iter().enumerate() {
            let cells = scratch
                .cells_of(p)
                .ok_or_else(|| TaskgenError::BadChunk("arrangement too large".into()))?;
            if cells.intersects(built) {
                return Err(TaskgenError::BadChunk(format!("member {i} overlaps")));
            }
            if i > 0 && !cells.intersects(grid.neighbours(built)) {
                return Err(TaskgenError::BadChunk(format!("member {i} does not touch")));
            }
            built = built.union(cells);
        }
        Ok(())
    }
}

/// Where a solution stands relative to a chunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkOrder {
    /// Members placed consecutively, in order, in the chunk's arrangement.
    Preserved,
    /// The arrangement is built but not as one consecutive ordered run.
    Reordered,
    Absent,
}

pub fn chunk_order(solution: &[Placement], chunk: &ChunkSpec) -> ChunkOrder {
    let k = chunk.len();
    let blocks = chunk.blocks();
    for i in 0..solution.len() {
        if i + k > solution.len() {
            break;
        }
        let run = &solution[i..i + k];
        let ok = run.iter().zip(&blocks).all(|(p, b)| p.block == *b)
            && run
                .windows(2)
                .zip(&chunk.rest)
                .all(|(w, (_, (dx, dy)))| w[1].x - w[0].x == *dx && w[1].y - w[0].y == *dy);
        if ok {
            return ChunkOrder::Preserved;
        }
    }
    let find = |b: u8| solution.iter().find(|p| p.block == b);
    let Some(first) = find(chunk.first) else {
        return ChunkOrder::Absent;
    };
    let expected = chunk.placements_at(first.x, first.y);
    if expected.iter().all(|e| find(e.block) == Some(e)) {
        ChunkOrder::Reordered
    } else {
        ChunkOrder::Absent
    }
}

/// Full enumeration of a silhouette's game tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exhaustive {
    /// Every root-to-goal placement sequence, in depth-first canonical order.
    pub solutions: Vec<Vec<Placement>>,
    /// Number of nodes below the root.
    pub tree_size: usize,
}

/// Depth-first walk of every valid placement sequence from the empty board.
pub fn solve_exhaustive(
    env: &Tangram,
    silhouette: &Silhouette,
    guard: usize,
) -> Result<Exhaustive, TaskgenError> {
    fn walk(
        env: &Tangram,
        state: &BoardState,
        path: &mut Vec<Placement>,
        out: &mut Exhaustive,
        guard: usize,
    ) -> Result<(), TaskgenError> {
        if state.is_goal() {
            out.solutions.push(path.clone());
            return Ok(());
        }
        for p in env.valid_actions(state) {
            out.tree_size += 1;
            if out.tree_size > guard {
                return Err(TaskgenError::TreeTooLarge { limit: guard });
            }
            let next = env.apply(state, p).expect("valid action");
            path.push(p);
            walk(env, &next, path, out, guard)?;
            path.pop();
        }
        Ok(())
    }
    let root = env.initial(*silhouette)?;
    let mut out = Exhaustive {
        solutions: Vec::new(),
        tree_size: 0,
    };
    walk(env, &root, &mut Vec::new(), &mut out, guard)?;
    Ok(out)
}

/// Lower median of vanilla-MCTS node counts over the runs that solved.
pub fn complexity<R: Rng + ?Sized>(
    env: &Tangram,
    silhouette: &Silhouette,
    repeats: usize,
    budget_cap: u32,
    rng: &mut R,
) -> Result<u32, TaskgenError> {
    let root = env.initial(*silhouette)?;
    let config = PlannerConfig::vanilla(Budget::Nodes(budget_cap.max(1)));
    let mut counts = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let mut run_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let r = plan(env, &root, None, &config, &mut run_rng)?;
        if r.solved {
            counts.push(r.nodes_evaluated);
        }
    }
    if counts.is_empty() || counts.len() * 2 < repeats {
        return Err(TaskgenError::Unsolvable {
            solved: counts.len(),
            repeats,
            cap: budget_cap,
        });
    }
    counts.sort_unstable();
    Ok(counts[(counts.len() - 1) / 2])
}

/// A generated silhouette with its solution certificate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generated {
    pub silhouette: Silhouette,
    pub kind: Kind,
    /// Blocks the generator used.
    pub blocks: Vec<u8>,
    /// Every solution, as placement sequences.
    pub solutions: Vec<Vec<Placement>>,
    pub tree_size: usize,
}

impl Generated {
    pub fn certificate_hash(&self) -> String {
        certificate_hash(&self.solutions)
    }
}

pub fn certificate_hash(solutions: &[Vec<Placement>]) -> String {
    let mut h = Sha256::new();
    for s in solutions {
        for p in s {
            h.update([p.block]);
            h.update(p.x.to_le_bytes());
            h.update(p.y.to_le_bytes());
        }
        h.update([0xff]);
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub n_blocks: usize,
    pub retry_cap: usize,
    pub tree_guard: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_blocks: 4,
            retry_cap: DEFAULT_RETRY_CAP,
            tree_guard: DEFAULT_TREE_GUARD,
        }
    }
}

/// Placements of `block` on an unconstrained grid that stick to `built`
/// (or touch the floor when nothing is built) and avoid `built` and `forbidden`.
fn growth_options(
    env: &Tangram,
    built: CellSet,
    block: u8,
    forbidden: CellSet,
) -> Vec<(Placement, CellSet)> {
    let grid = env.grid();
    let floor = grid.row(0);
    let touch = grid.neighbours(built);
    let mut out = Vec::new();
    for x in 0..grid.width() {
        for y in 0..grid.height() {
            let p = Placement::new(block, x, y);
            let Some(cells) = env.cells_of(p) else {
                continue;
            };
            if cells.intersects(built) || cells.intersects(forbidden) {
                continue;
            }
            let ok = if built.is_empty() {
                cells.intersects(floor)
            } else {
                cells.intersects(touch)
            };
            if ok {
                out.push((p, cells));
            }
        }
    }
    out
}

/// Places the chunk with its first member resting on the floor.
fn place_chunk<R: Rng + ?Sized>(
    env: &Tangram,
    chunk: &ChunkSpec,
    rng: &mut R,
) -> Option<(CellSet, Vec<Placement>)> {
    let grid = env.grid();
    let mut starts: Vec<i32> = (0..grid.width()).collect();
    starts.shuffle(rng);
    for x in starts {
        let placements = chunk.placements_at(x, 0);
        let mut built = CellSet::EMPTY;
        let mut ok = true;
        for p in &placements {
            match env.cells_of(*p) {
                Some(c) if !c.intersects(built) => built = built.union(c),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && built.intersects(grid.row(0)) {
            return Some((built, placements));
        }
    }
    None
}

/// Grows a construction and certifies it by exhaustive search.
///
/// * `Chunky`: the chunk first (resting on the floor) then `extra` blocks
///   kept off the floor row; every solution must contain the chunk as a
///   consecutive ordered run.
/// * `Random`: `extra` blocks only; no solution may contain the chunk's
///   arrangement. Solutions may tile the silhouette with other blocks.
/// * `Ambiguous`: the chunk plus `extra` blocks anywhere; at least one
///   solution keeps the chunk order and at least one builds the chunk's
///   arrangement in a different order.
pub fn gen_silhouette<R: Rng + ?Sized>(
    env: &Tangram,
    kind: Kind,
    chunk: &ChunkSpec,
    extra: &[u8],
    config: &GenConfig,
    rng: &mut R,
) -> Result<Generated, TaskgenError> {
    let chunk_blocks = chunk.blocks();
    let mut blocks: Vec<u8> = match kind {
        Kind::Random => extra.to_vec(),
        _ => chunk_blocks.iter().chain(extra).copied().collect(),
    };
    if kind == Kind::Random && extra.iter().any(|b| chunk_blocks.contains(b)) {
        return Err(TaskgenError::BadChunk(
            "random silhouettes use unchunked blocks only".into(),
        ));
    }
    let distinct: BTreeSet<u8> = blocks.iter().copied().collect();
    if distinct.len() != blocks.len() || blocks.iter().any(|&b| b as usize >= env.num_blocks()) {
        return Err(TaskgenError::BadChunk(format!("bad block list {blocks:?}")));
    }
    blocks.sort_unstable();
    for _ in 0..config.retry_cap {
        let Some(built) = grow(env, kind, chunk, extra, rng) else {
            continue;
        };
        let silhouette = Silhouette::from_mask(env.grid(), built)?;
        let ex = match solve_exhaustive(env, &silhouette, config.tree_guard) {
            Ok(ex) => ex,
            Err(TaskgenError::TreeTooLarge { .. }) => continue,
            Err(e) => return Err(e),
        };
        if certify(kind, chunk, &ex.solutions) {
            return Ok(Generated {
                silhouette,
                kind,
                blocks,
                solutions: ex.solutions,
                tree_size: ex.tree_size,
            });
        }
    }
    Err(TaskgenError::RetryCap {
        kind,
        tries: config.retry_cap,
    })
}

fn grow<R: Rng + ?Sized>(
    env: &Tangram,
    kind: Kind,
    chunk: &ChunkSpec,
    extra: &[u8],
    rng: &mut R,
) -> Option<CellSet> {
    let grid = env.grid();
    let mut built = CellSet::EMPTY;
    let mut forbidden = CellSet::EMPTY;
    if kind != Kind::Random {
        let (cells, placements) = place_chunk(env, chunk, rng)?;
        built = cells;
        if kind == Kind::Chunky {
            // Extra blocks stay off the floor and away from all but the last
            // member, so nothing can be built before the chunk is complete.
            let last = env.cells_of(*placements.last()?)?;
            forbidden = grid.row(0).union(grid.neighbours(built.difference(last)));
        }
    }
    let mut order = extra.to_vec();
    order.shuffle(rng);
    for b in order {
        let options = growth_options(env, built, b, forbidden);
        let &(_, cells) = options.choose(rng)?;
        built = built.union(cells);
    }
    Some(built)
}

/// Checks a solution set against the kind's certificate conditions.
pub fn certify(kind: Kind, chunk: &ChunkSpec, solutions: &[Vec<Placement>]) -> bool {
    if solutions.is_empty() {
        return false;
    }
    match kind {
        Kind::Chunky => solutions
            .iter()
            .all(|s| chunk_order(s, chunk) == ChunkOrder::Preserved),
        Kind::Random => solutions
            .iter()
            .all(|s| chunk_order(s, chunk) == ChunkOrder::Absent),
        Kind::Ambiguous => {
            let orders: Vec<ChunkOrder> = solutions.iter().map(|s| chunk_order(s, chunk)).collect();
            orders.contains(&ChunkOrder::Preserved) && orders.contains(&ChunkOrder::Reordered)
        }
    }
}

/// Whether every solution places exactly `blocks` (sorted).
pub fn uses_exactly(blocks: &[u8], solutions: &[Vec<Placement>]) -> bool {
    solutions.iter().all(|s| {
        let mut b: Vec<u8> = s.iter().map(|p| p.block).collect();
        b.sort_unstable();
        b == blocks
    })
}

/// Fraction of a certificate's solutions that keep the chunk order.
pub fn preserving_share(chunk: &ChunkSpec, solutions: &[Vec<Placement>]) -> f64 {
    if solutions.is_empty() {
        return 0.0;
    }
    let n = solutions
        .iter()
        .filter(|s| chunk_order(s, chunk) == ChunkOrder::Preserved)
        .count();
    n as f64 / solutions.len() as f64
}
