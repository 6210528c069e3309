//! A plain UCT written from scratch, and checks of the planner against it
//! and against exhaustive enumeration.

use std::collections::HashSet;

use mcts_habits::habits::{ActionToken, SeqModel};
use mcts_habits::planner::{plan, Budget, PlannerConfig};
use mcts_habits::tangram::{BoardState, Placement, Silhouette, Tangram};
use mcts_habits::taskgen::solve_exhaustive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::rules;

pub fn glued(rng: &mut ChaCha8Rng, env: &Tangram) -> Silhouette {
    Silhouette::from_cells(env.grid(), &rules::glued(rng, env.inventory())).unwrap()
}

pub struct RefNode {
    state: BoardState,
    edge: Option<Placement>,
    untried: Vec<Placement>,
    children: Vec<usize>,
    parent: Option<usize>,
    wins: u32,
    visits: u32,
    dead: bool,
}

pub struct RefResult {
    pub solved: bool,
    pub evaluated: u32,
    pub expansions: Vec<Placement>,
    pub plan: Vec<Placement>,
}

fn pick<R: Rng>(values: &[f64], rng: &mut R) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
    if ties.len() > 1 {
        ties[rng.gen_range(0..ties.len())]
    } else {
        ties[0]
    }
}

/// Textbook UCT: expand one random untried action per iteration, random
/// rollout, binary reward, first solving rollout ends the search.
pub fn reference_uct<R: Rng>(
    env: &Tangram,
    root: &BoardState,
    budget: u32,
    c: f64,
    rng: &mut R,
) -> RefResult {
    let fresh = |state: BoardState, edge, parent| {
        let untried = env.valid_actions(&state);
        RefNode {
            dead: untried.is_empty(),
            state,
            edge,
            untried,
            children: vec![],
            parent,
            wins: 0,
            visits: 0,
        }
    };
    let mut tree = vec![fresh(root.clone(), None, None)];
    let mut out = RefResult {
        solved: false,
        evaluated: 0,
        expansions: vec![],
        plan: vec![],
    };
    let path_to = |tree: &[RefNode], mut n: usize| {
        let mut ps = vec![];
        while let Some(p) = tree[n].edge {
            ps.push(p);
            n = tree[n].parent.unwrap();
        }
        ps.reverse();
        ps
    };
    while out.evaluated < budget && !tree[0].dead {
        let mut n = 0;
        while tree[n].untried.is_empty() {
            let open: Vec<usize> = tree[n]
                .children
                .iter()
                .copied()
                .filter(|&k| !tree[k].dead)
                .collect();
            let parent_visits = tree[n].visits as f64;
            let values: Vec<f64> = open
                .iter()
                .map(|&k| {
                    let v = tree[k].visits as f64;
                    tree[k].wins as f64 / v + c * (parent_visits.ln() / v).sqrt()
                })
                .collect();
            n = open[pick(&values, rng)];
        }
        let i = rng.gen_range(0..tree[n].untried.len());
        let p = tree[n].untried.remove(i);
        let state = env.apply(&tree[n].state, p).unwrap();
        let child = tree.len();
        tree.push(fresh(state, Some(p), Some(n)));
        tree[n].children.push(child);
        out.evaluated += 1;
        out.expansions.push(p);

        let mut s = tree[child].state.clone();
        let cap = env.remaining_blocks(&s) + 1;
        let mut suffix = vec![];
        let reward = loop {
            if s.is_goal() {
                break 1;
            }
            let actions = env.valid_actions(&s);
            if suffix.len() >= cap || actions.is_empty() {
                break 0;
            }
            let a = actions[rng.gen_range(0..actions.len())];
            s = env.apply(&s, a).unwrap();
            suffix.push(a);
        };
        let mut cur = Some(child);
        while let Some(k) = cur {
            tree[k].visits += 1;
            tree[k].wins += reward;
            cur = tree[k].parent;
        }
        if tree[child].dead {
            let mut cur = tree[child].parent;
            while let Some(k) = cur {
                if !tree[k].untried.is_empty() || tree[k].children.iter().any(|&x| !tree[x].dead) {
                    break;
                }
                tree[k].dead = true;
                cur = tree[k].parent;
            }
        }
        if reward == 1 {
            out.solved = true;
            out.plan = path_to(&tree, child);
            out.plan.extend(suffix);
            return out;
        }
    }
    if out.evaluated == 0 {
        return out;
    }
    let mut n = 0;
    while !tree[n].children.is_empty() {
        let kids = &tree[n].children;
        let key = |k: usize| (tree[k].visits, tree[k].wins);
        let best = kids.iter().map(|&k| key(k)).max().unwrap();
        let ties: Vec<usize> = kids.iter().copied().filter(|&k| key(k) == best).collect();
        n = if ties.len() > 1 {
            ties[rng.gen_range(0..ties.len())]
        } else {
            ties[0]
        };
    }
    out.plan = path_to(&tree, n);
    out
}

pub fn random_model(env: &Tangram, seed: u64) -> SeqModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = env.vocab();
    let mut m = SeqModel::new(vocab, 1.0, 3, seed).unwrap();
    for _ in 0..30 {
        let ep: Vec<_> = (0..rng.gen_range(1..6))
            .map(|_| vocab.token(rng.gen_range(0..vocab.len() as u32)))
            .collect();
        m.observe(&ep).unwrap();
    }
    m
}

/// Vanilla settings, with and without a model, against the reference on
/// `count` problems; returns (solved, unsolved).
pub fn check_reference(count: u64) -> (usize, usize) {
    let env = rules::env();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = random_model(&env, 9);
    let (mut solved, mut unsolved) = (0, 0);
    for i in 0..count {
        let sil = glued(&mut rng, &env);
        let root = env.initial(sil).unwrap();
        let budget = rng.gen_range(1..=60);
        let c = [1.0, 0.5, 2.0][i as usize % 3];
        let config = PlannerConfig {
            exploration: c,
            ..PlannerConfig::vanilla(Budget::Nodes(budget))
        };
        let want = reference_uct(&env, &root, budget, c, &mut ChaCha8Rng::seed_from_u64(i));
        for m in [None, Some(&model)] {
            let got = plan(&env, &root, m, &config, &mut ChaCha8Rng::seed_from_u64(i)).unwrap();
            assert_eq!(got.nodes_evaluated, want.evaluated, "problem {i}");
            assert_eq!(got.solved, want.solved, "problem {i}");
            let expanded: Vec<Placement> = got.expansions.iter().map(|e| e[0]).collect();
            assert!(got.expansions.iter().all(|e| e.len() == 1));
            assert_eq!(expanded, want.expansions, "problem {i}");
            assert_eq!(got.placements(), want.plan, "problem {i}");
            assert!(!got.used_chunk);
        }
        if want.solved {
            solved += 1;
        } else {
            unsolved += 1;
        }
    }
    (solved, unsolved)
}

/// Plans of three habit settings on `count` enumerable silhouettes must be
/// enumerated solutions; returns (searches, solved, chunk plans).
pub fn check_exhaustive_subset(count: usize) -> (usize, usize, usize) {
    let env = rules::env();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // a vertical domino topped by a horizontal one, then anything
    let mut model = SeqModel::new(env.vocab(), 1.0, 3, 1).unwrap();
    for i in 0..24i8 {
        let ep = [
            ActionToken::new(2, 0, 0),
            ActionToken::new(1, -1, 2),
            ActionToken::new(3 + (i % 4) as u8, i % 6 - 3, i / 6 - 2),
        ];
        model.observe(&ep).unwrap();
    }
    let (mut checked, mut solved, mut chunky) = (0, 0, 0);
    while checked < count {
        let sil = glued(&mut rng, &env);
        let Ok(ex) = solve_exhaustive(&env, &sil, 20_000) else {
            continue;
        };
        if ex.solutions.is_empty() {
            continue;
        }
        let all: HashSet<Vec<Placement>> = ex.solutions.iter().cloned().collect();
        let root = env.initial(sil).unwrap();
        for (h, omega) in [(5.0, 1.5), (0.0, 1.5), (5.0, 0.0)] {
            let config = PlannerConfig {
                budget: Budget::Flexible { cap: 500 },
                habit: h,
                omega,
                ..PlannerConfig::default()
            };
            let r = plan(&env, &root, Some(&model), &config, &mut rng).unwrap();
            if !r.solved {
                assert!(r.hit_cap || r.nodes_evaluated as usize >= ex.tree_size.min(500));
                continue;
            }
            solved += 1;
            assert!(
                all.contains(&r.placements()),
                "{:?} is not a solution",
                r.placements()
            );
            assert_eq!(
                r.plan_token_sequence,
                env.tokenize_sequence(&root, &r.placements())
            );
            assert_eq!(r.chunk_lengths.iter().sum::<usize>(), r.placements().len());
            chunky += r.used_chunk as usize;
        }
        checked += 1;
    }
    (3 * checked, solved, chunky)
}
