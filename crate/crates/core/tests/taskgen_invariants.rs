//! Generated silhouettes and problem sets keep their certificates.

use std::time::Instant;

use mcts_habits::tangram::{Silhouette, Tangram};
use mcts_habits::taskgen::{
    balance_report, certify, chunk_order, complexity, gen_silhouette, preserving_share,
    solve_exhaustive, ChunkOrder, Condition, GenConfig, Kind, ProblemSet, SetPlan,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn env() -> Tangram {
    Tangram::default()
}

/// A small tower: vertical domino, bar on top, an ell hanging left and a
/// single cell under it. Only one build order satisfies every rule.
fn example() -> Silhouette {
    let rows = [
        "..........",
        "..........",
        "..#.......",
        "..#####...",
        "..#.#.....",
        "....#.....",
    ];
    Silhouette::from_rows(env().grid(), &rows).unwrap()
}

#[test]
fn example_has_one_solution_in_a_small_tree() {
    let env = env();
    let start = Instant::now();
    let ex = solve_exhaustive(&env, &example(), 10_000).unwrap();
    assert_eq!(ex.solutions.len(), 1);
    assert_eq!(ex.tree_size, 18);
    let first = complexity(&env, &example(), 32, 50, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(start.elapsed().as_secs_f64() < 1.0, "{:?}", start.elapsed());
    assert!((first as usize) < ex.tree_size, "complexity {first}");
    for seed in 1..20 {
        let again = complexity(
            &env,
            &example(),
            32,
            50,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        assert!(
            again.abs_diff(first) <= 3,
            "seed {seed}: {again} vs {first}"
        );
    }
    let same = complexity(&env, &example(), 32, 50, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(same, first);
}

const UNCHUNKED_DUPLET: [u8; 5] = [0, 3, 4, 5, 6];
const UNCHUNKED_TRIPLET: [u8; 4] = [1, 2, 3, 6];

fn pick(pool: &[u8], n: usize, mut bits: u64) -> Vec<u8> {
    let mut pool = pool.to_vec();
    let mut out = Vec::new();
    for _ in 0..n {
        let i = (bits % pool.len() as u64) as usize;
        bits /= pool.len() as u64;
        out.push(pool.remove(i));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn generated_silhouettes_hold_their_certificate(
        seed in any::<u64>(),
        bits in any::<u64>(),
        kind in prop::sample::select(vec![Kind::Chunky, Kind::Random, Kind::Ambiguous]),
        triplet in any::<bool>(),
    ) {
        let env = env();
        let condition = if triplet { Condition::Triplet } else { Condition::Duplet };
        let chunk = condition.default_chunk(&env).unwrap();
        let pool: &[u8] = if triplet { &UNCHUNKED_TRIPLET } else { &UNCHUNKED_DUPLET };
        let extra = match kind {
            Kind::Random => pick(pool, 4, bits),
            _ => pick(pool, 4 - chunk.len(), bits),
        };
        let config = GenConfig { retry_cap: 500, ..GenConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gen_silhouette(&env, kind, &chunk, &extra, &config, &mut rng);
        prop_assume!(g.is_ok());
        let g = g.unwrap();
        let ex = solve_exhaustive(&env, &g.silhouette, config.tree_guard).unwrap();
        prop_assert_eq!(&ex.solutions, &g.solutions);
        prop_assert_eq!(ex.tree_size, g.tree_size);
        prop_assert!(certify(kind, &chunk, &g.solutions));
        let start = env.initial(g.silhouette).unwrap();
        for s in &g.solutions {
            prop_assert!(env.apply_all(&start, s).unwrap().is_goal());
        }
        let orders: Vec<ChunkOrder> = g.solutions.iter().map(|s| chunk_order(s, &chunk)).collect();
        match kind {
            Kind::Chunky => prop_assert!(orders.iter().all(|o| *o == ChunkOrder::Preserved)),
            Kind::Random => prop_assert!(orders.iter().all(|o| *o == ChunkOrder::Absent)),
            Kind::Ambiguous => {
                prop_assert!(orders.contains(&ChunkOrder::Preserved));
                prop_assert!(orders.iter().any(|o| *o != ChunkOrder::Preserved));
                let share = preserving_share(&chunk, &g.solutions);
                prop_assert!(share > 0.0 && share < 1.0);
            }
        }
        if let Ok(c) = complexity(&env, &g.silhouette, 8, 50, &mut rng) {
            prop_assert!(c as usize <= g.tree_size);
        }
    }
}

#[test]
fn problem_sets_are_certified_balanced_and_matched() {
    let env = env();
    let plan = SetPlan::default();
    for condition in [Condition::Duplet, Condition::Triplet] {
        for seed in 1..=3 {
            let chunk = condition.default_chunk(&env).unwrap();
            let set = ProblemSet::generate(&env, condition, chunk, &plan, seed).unwrap();
            set.verify().unwrap();
            let count = |k: Kind| set.training.iter().filter(|p| p.kind == k).count();
            assert_eq!(
                (count(Kind::Chunky), count(Kind::Random)),
                plan.training_split()
            );
            let balance = balance_report(&set.training, env.num_blocks());
            assert!(
                balance.max_deviation <= plan.balance_tolerance,
                "{condition} {seed}: {balance:?}"
            );
            assert!(set
                .training
                .iter()
                .all(|p| p.complexity <= plan.matching.cap));
            for p in set.training.iter().filter(|p| p.kind == Kind::Chunky) {
                let nearest = set
                    .training
                    .iter()
                    .filter(|q| q.kind == Kind::Random)
                    .map(|q| q.complexity.abs_diff(p.complexity))
                    .min()
                    .unwrap();
                assert!(
                    nearest <= plan.matching.max_gap,
                    "{condition} {seed}: {}",
                    p.id
                );
            }
            assert_eq!(set.budget_tests.len(), plan.budgets.len());
            for b in &set.budget_tests {
                let kinds: Vec<Kind> = b.problems.iter().map(|p| p.kind).collect();
                assert_eq!(
                    kinds.iter().filter(|k| **k == Kind::Chunky).count(),
                    plan.per_budget.0
                );
                assert_eq!(
                    kinds.iter().filter(|k| **k == Kind::Random).count(),
                    plan.per_budget.1
                );
            }
            assert_eq!(set.ambiguous.len(), plan.ambiguous);
            assert!(set.ambiguous.iter().all(|p| p.kind == Kind::Ambiguous));
            let again =
                ProblemSet::generate(&env, condition, set.chunk.clone(), &plan, seed).unwrap();
            assert_eq!(again, set);
        }
    }
}
