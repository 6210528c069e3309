//! A dense, brute-force restaurant-franchise computation over a
//! four-token vocabulary.

use std::collections::BTreeMap;

use mcts_habits::habits::{ActionToken, SeqModel, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEPTH: usize = 3;

pub fn vocab4() -> Vocab {
    Vocab::new(4, 1, 1)
}

pub fn tok(i: usize) -> ActionToken {
    ActionToken::new(i as u8, 0, 0)
}

pub fn ctx(ids: &[usize]) -> Vec<ActionToken> {
    ids.iter().map(|&i| tok(i)).collect()
}

/// Every sequence of length `len` over `n` symbols.
pub fn sequences(n: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..n).map(move |a| {
                    let mut t = s.clone();
                    t.push(a);
                    t
                })
            })
            .collect();
    }
    out
}

pub fn all_contexts() -> Vec<Vec<usize>> {
    (0..=DEPTH).flat_map(|k| sequences(4, k)).collect()
}

/// Customers seated directly (not as proxies) per (context, token).
pub fn direct_counts(episodes: &[Vec<usize>]) -> BTreeMap<(Vec<usize>, usize), u32> {
    let mut out = BTreeMap::new();
    for ep in episodes {
        for i in 0..ep.len() {
            let u = ep[i.saturating_sub(DEPTH)..i].to_vec();
            *out.entry((u, ep[i])).or_insert(0) += 1;
        }
    }
    out
}

/// p(a | u) by the discount-free recursion, evaluated densely from the
/// shortest suffix outwards with the model's seating statistics.
pub fn oracle(model: &SeqModel, alpha: f64, context: &[usize]) -> [f64; 4] {
    let u = &context[context.len().saturating_sub(DEPTH)..];
    let mut p = [0.25; 4];
    for k in 0..=u.len() {
        let suffix = ctx(&u[u.len() - k..]);
        let c: [u32; 4] = std::array::from_fn(|a| model.counts(&suffix, tok(a)).0);
        let total: u32 = c.iter().sum();
        if total == 0 {
            continue;
        }
        let denom = total as f64 + alpha;
        p = std::array::from_fn(|a| (c[a] as f64 + alpha * p[a]) / denom);
    }
    p
}

pub fn check_seating(model: &SeqModel, episodes: &[Vec<usize>]) {
    let direct = direct_counts(episodes);
    for u in all_contexts() {
        for a in 0..4 {
            let (customers, tables) = model.counts(&ctx(&u), tok(a));
            assert!(tables <= customers, "{u:?} {a}");
            assert_eq!(tables == 0, customers == 0, "{u:?} {a}");
            let mut expected = direct.get(&(u.clone(), a)).copied().unwrap_or(0);
            if u.len() < DEPTH {
                for b in 0..4 {
                    let mut child = vec![b];
                    child.extend_from_slice(&u);
                    expected += model.counts(&ctx(&child), tok(a)).1;
                }
            }
            assert_eq!(customers, expected, "context {u:?} token {a}: {episodes:?}");
        }
    }
}

pub fn check_corpus(episodes: &[Vec<usize>], alpha: f64, seed: u64) {
    let mut model = SeqModel::new(vocab4(), alpha, DEPTH, seed).unwrap();
    for ep in episodes {
        model.observe(&ctx(ep)).unwrap();
    }
    check_seating(&model, episodes);
    for u in all_contexts() {
        let want = oracle(&model, alpha, &u);
        let got = model.predict(&ctx(&u)).unwrap();
        for (a, w) in want.iter().enumerate() {
            let g = got.prob(tok(a));
            assert!(
                (g - w).abs() < 1e-12,
                "{episodes:?} ctx {u:?} token {a}: {g} vs {w}"
            );
        }
    }
}

/// Every single-episode corpus up to `max_len` tokens; returns how many.
pub fn check_all_corpora(max_len: usize) -> usize {
    let mut n = 0;
    for len in 0..=max_len {
        for s in sequences(4, len) {
            check_corpus(&[s], 1.0, n as u64);
            n += 1;
        }
    }
    n
}

pub fn random_episode(rng: &mut ChaCha8Rng, vocab: &Vocab) -> Vec<ActionToken> {
    let len = rng.gen_range(0..8);
    // a small alphabet so contexts repeat
    let pool: Vec<ActionToken> = (0..12)
        .map(|i| vocab.token((i * 97 % vocab.len()) as u32))
        .collect();
    (0..len)
        .map(|_| pool[rng.gen_range(0..pool.len())])
        .collect()
}

/// Sum and entropy of the predictive distribution on fuzzed contexts over
/// the full default vocabulary; returns the number of queries.
pub fn fuzz_normalization(queries: usize) -> usize {
    let vocab = Vocab::new(7, 10, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut done = 0;
    let mut m = 0;
    while done < queries {
        let alpha = [0.1, 1.0, 5.0][m % 3];
        let mut model = SeqModel::new(vocab, alpha, 1 + m % 4, m as u64).unwrap();
        for _ in 0..rng.gen_range(0..40) {
            model.observe(&random_episode(&mut rng, &vocab)).unwrap();
        }
        for _ in 0..200.min(queries - done) {
            let context = random_episode(&mut rng, &vocab);
            let d = model.predict(&context).unwrap();
            let mut total = 0.0;
            let mut h = 0.0;
            for (_, p) in d.iter() {
                assert!(p >= 0.0);
                total += p;
                if p > 0.0 {
                    h -= p * p.ln();
                }
            }
            assert!((total - 1.0).abs() < 1e-9, "sum {total}");
            assert!(
                (d.entropy() - h).abs() < 1e-9,
                "entropy {} vs {h}",
                d.entropy()
            );
            done += 1;
        }
        m += 1;
    }
    done
}
