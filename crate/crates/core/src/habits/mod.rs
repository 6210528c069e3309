//! Online hierarchical Dirichlet process over action tokens.
//!
//! Each context (the last `k <= max_depth` tokens) owns a restaurant whose
//! base measure is the restaurant of the context with its earliest token
//! dropped; the empty context backs off to the uniform distribution over the
//! vocabulary. Observations are seated along a single path: a customer joins
//! an existing table for its token with probability proportional to the table
//! size, or opens a new table with probability proportional to `alpha`, in
//! which case a proxy customer is sent to the parent restaurant.
//!
//! The predictive distribution is the discount-free recursion
//!
//! ```text
//! p(a | u) = (c(a | u) + alpha * p(a | parent(u))) / (c(u) + alpha)
//! ```
//!
//! It is kept sparse: a shared per-token share of the uniform base plus the
//! extra mass of tokens that have customers somewhere along the path.

mod token;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use token::{ActionToken, Context, Vocab};

/// Longest conditioning context used by default.
pub const DEFAULT_MAX_DEPTH: usize = 3;
/// Concentration shared by every level.
pub const DEFAULT_ALPHA: f64 = 1.0;

const FORMAT_NAME: &str = "mcts-habits/seq-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HabitsError {
    #[error("token {0} is not in the vocabulary")]
    UnknownToken(ActionToken),
    #[error("alpha must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("model file is {found}, expected {FORMAT_NAME} version {FORMAT_VERSION}")]
    Version { found: String },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model serialization: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Seats {
    customers: u32,
    tables: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Restaurant {
    customers: u32,
    seats: BTreeMap<u32, Seats>,
}

/// The sequence model. Mutated only through [`SeqModel::observe`]; all
/// queries take `&self` and may run concurrently.
#[derive(Debug)]
pub struct SeqModel {
    alpha: f64,
    max_depth: usize,
    vocab: Vocab,
    seed: u64,
    rng: ChaCha8Rng,
    restaurants: BTreeMap<Vec<u32>, Restaurant>,
    predict_calls: AtomicU64,
    observe_calls: AtomicU64,
}

impl Clone for SeqModel {
    fn clone(&self) -> Self {
        SeqModel {
            alpha: self.alpha,
            max_depth: self.max_depth,
            vocab: self.vocab,
            seed: self.seed,
            rng: self.rng.clone(),
            restaurants: self.restaurants.clone(),
            predict_calls: AtomicU64::new(self.predict_calls.load(Ordering::Relaxed)),
            observe_calls: AtomicU64::new(self.observe_calls.load(Ordering::Relaxed)),
        }
    }
}

/// Next-token distribution for one context.
#[derive(Clone, Debug)]
pub struct PredictiveDist {
    vocab: Vocab,
    /// Probability of every token from the uniform base alone.
    base: f64,
    /// Additional probability for tokens seen along the context path.
    extra: BTreeMap<u32, f64>,
    entropy: f64,
}

impl PredictiveDist {
    fn new(vocab: Vocab, base: f64, extra: BTreeMap<u32, f64>) -> Self {
        let plogp = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
        let unseen = (vocab.len() - extra.len()) as f64;
        let entropy = unseen * plogp(base) + extra.values().map(|e| plogp(base + e)).sum::<f64>();
        PredictiveDist {
            vocab,
            base,
            extra,
            entropy,
        }
    }

    /// Entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    pub fn prob(&self, t: ActionToken) -> f64 {
        match self.vocab.index(t) {
            Some(i) => self.prob_index(i),
            None => 0.0,
        }
    }

    fn prob_index(&self, i: u32) -> f64 {
        self.base + self.extra.get(&i).copied().unwrap_or(0.0)
    }

    /// Every token with its probability, in vocabulary order.
    pub fn iter(&self) -> impl Iterator<Item = (ActionToken, f64)> + '_ {
        (0..self.vocab.len() as u32).map(|i| (self.vocab.token(i), self.prob_index(i)))
    }

    pub fn total(&self) -> f64 {
        self.iter().map(|(_, p)| p).sum()
    }

    /// The `k` most probable tokens; ties keep vocabulary order.
    pub fn top_k(&self, k: usize) -> Vec<(ActionToken, f64)> {
        let mut seen: Vec<(ActionToken, f64)> = self
            .extra
            .keys()
            .map(|&i| (self.vocab.token(i), self.prob_index(i)))
            .collect();
        seen.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut out: Vec<_> = seen.into_iter().take(k).collect();
        if out.len() < k {
            let fill = (0..self.vocab.len() as u32)
                .filter(|i| !self.extra.contains_key(i))
                .take(k - out.len())
                .map(|i| (self.vocab.token(i), self.base));
            out.extend(fill);
        }
        out
    }

    /// Draws one token. The uniform part and the sparse part are sampled as a
    /// two-component mixture so no dense pass over the vocabulary is needed.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionToken {
        let r: f64 = rng.gen();
        let mut acc = 0.0;
        for (&i, &e) in &self.extra {
            acc += e;
            if r < acc {
                return self.vocab.token(i);
            }
        }
        let n = self.vocab.len();
        let i = if self.base > 0.0 {
            (((r - acc) / self.base) as usize).min(n - 1)
        } else {
            // all mass is sparse; rounding pushed r past it
            return self
                .vocab
                .token(*self.extra.keys().next_back().expect("non-empty"));
        };
        self.vocab.token(i as u32)
    }
}

impl SeqModel {
    pub fn new(vocab: Vocab, alpha: f64, max_depth: usize, seed: u64) -> Result<Self, HabitsError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(HabitsError::BadAlpha(alpha));
        }
        Ok(SeqModel {
            alpha,
            max_depth,
            vocab,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            restaurants: BTreeMap::new(),
            predict_calls: AtomicU64::new(0),
            observe_calls: AtomicU64::new(0),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn vocab(&self) -> Vocab {
        self.vocab
    }

    /// Number of `predict` evaluations served (habit values and unrolls included).
    pub fn predict_calls(&self) -> u64 {
        self.predict_calls.load(Ordering::Relaxed)
    }

    pub fn observe_calls(&self) -> u64 {
        self.observe_calls.load(Ordering::Relaxed)
    }

    fn indices(&self, tokens: &[ActionToken]) -> Result<Vec<u32>, HabitsError> {
        tokens
            .iter()
            .map(|&t| self.vocab.index(t).ok_or(HabitsError::UnknownToken(t)))
            .collect()
    }

    /// Seats one episode. The context starts empty; nothing carries over
    /// from earlier episodes.
    pub fn observe(&mut self, episode: &[ActionToken]) -> Result<(), HabitsError> {
        let idx = self.indices(episode)?;
        self.observe_calls.fetch_add(1, Ordering::Relaxed);
        for i in 0..idx.len() {
            let start = i.saturating_sub(self.max_depth);
            self.seat(&idx[start..i], idx[i]);
        }
        Ok(())
    }

    /// Adds one customer for `token` in `context` (already truncated to
    /// `max_depth`), recursing to the parent whenever a table opens.
    pub(crate) fn seat(&mut self, context: &[u32], token: u32) {
        let mut ctx = context;
        loop {
            let alpha = self.alpha;
            let rest = self.restaurants.entry(ctx.to_vec()).or_default();
            let seats = rest.seats.entry(token).or_default();
            rest.customers += 1;
            seats.customers += 1;
            let joined = if seats.tables.is_empty() {
                None
            } else {
                let total = (seats.customers - 1) as f64;
                let r = self.rng.gen::<f64>() * (total + alpha);
                let mut acc = 0.0;
                seats.tables.iter().position(|&size| {
                    acc += size as f64;
                    r < acc
                })
            };
            match joined {
                Some(j) => {
                    seats.tables[j] += 1;
                    return;
                }
                None => {
                    seats.tables.push(1);
                    if ctx.is_empty() {
                        return;
                    }
                    ctx = &ctx[1..];
                }
            }
        }
    }

    /// Next-token distribution given `context`; only the most recent
    /// `max_depth` tokens are used.
    pub fn predict(&self, context: &[ActionToken]) -> Result<PredictiveDist, HabitsError> {
        let idx = self.indices(context)?;
        Ok(self.predict_indices(&idx))
    }

    fn predict_indices(&self, idx: &[u32]) -> PredictiveDist {
        self.predict_calls.fetch_add(1, Ordering::Relaxed);
        let ctx = &idx[idx.len().saturating_sub(self.max_depth)..];
        let mut base = 1.0 / self.vocab.len() as f64;
        let mut extra: BTreeMap<u32, f64> = BTreeMap::new();
        for k in 0..=ctx.len() {
            let Some(rest) = self.restaurants.get(&ctx[ctx.len() - k..]) else {
                break;
            };
            if rest.customers == 0 {
                continue;
            }
            let denom = rest.customers as f64 + self.alpha;
            let scale = self.alpha / denom;
            base *= scale;
            for e in extra.values_mut() {
                *e *= scale;
            }
            for (&tok, seats) in &rest.seats {
                *extra.entry(tok).or_insert(0.0) += seats.customers as f64 / denom;
            }
        }
        PredictiveDist::new(self.vocab, base, extra)
    }

    /// Probability of `first` after `context`. Chunks are valued by their
    /// first token, exactly like the primitive they start with.
    pub fn habit_value(
        &self,
        context: &[ActionToken],
        first: ActionToken,
    ) -> Result<f64, HabitsError> {
        Ok(self.predict(context)?.prob(first))
    }

    /// Extends `first` by sampled successors while the next-token entropy
    /// stays below `omega` (nats) and the chunk is shorter than `max_len`.
    pub fn unroll_chunk<R: Rng + ?Sized>(
        &self,
        context: &[ActionToken],
        first: ActionToken,
        omega: f64,
        max_len: usize,
        rng: &mut R,
    ) -> Result<Vec<ActionToken>, HabitsError> {
        let mut trace = self.indices(context)?;
        let first_idx = self
            .vocab
            .index(first)
            .ok_or(HabitsError::UnknownToken(first))?;
        trace.push(first_idx);
        let mut chunk = vec![first];
        while chunk.len() < max_len {
            let dist = self.predict_indices(&trace);
            if dist.entropy() >= omega {
                break;
            }
            let next = dist.sample(rng);
            trace.push(self.vocab.index(next).expect("sampled from vocab"));
            chunk.push(next);
        }
        Ok(chunk)
    }

    /// Contexts that hold customers, in canonical order.
    pub fn contexts(&self) -> Vec<Context> {
        self.restaurants
            .iter()
            .filter(|(_, r)| r.customers > 0)
            .map(|(k, _)| Context::new(k.iter().map(|&i| self.vocab.token(i)).collect()))
            .collect()
    }

    /// Customers and tables for `token` in `context`.
    pub fn counts(&self, context: &[ActionToken], token: ActionToken) -> (u32, u32) {
        let (Ok(ctx), Some(t)) = (self.indices(context), self.vocab.index(token)) else {
            return (0, 0);
        };
        self.restaurants
            .get(&ctx)
            .and_then(|r| r.seats.get(&t))
            .map_or((0, 0), |s| (s.customers, s.tables.len() as u32))
    }

    pub fn total_customers(&self) -> u64 {
        self.restaurants.values().map(|r| r.customers as u64).sum()
    }

    pub fn to_json(&self) -> Result<String, HabitsError> {
        let file = ModelFile {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            alpha: self.alpha,
            max_depth: self.max_depth,
            vocab: self.vocab,
            seed: self.seed,
            rng_word_pos: self.rng.get_word_pos(),
            restaurants: self
                .restaurants
                .iter()
                .map(|(ctx, r)| RestaurantRecord {
                    context: ctx.clone(),
                    seats: r
                        .seats
                        .iter()
                        .map(|(&token, s)| SeatRecord {
                            token,
                            tables: s.tables.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, HabitsError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let format = value.get("format").and_then(|v| v.as_str()).unwrap_or("?");
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if format != FORMAT_NAME || version != FORMAT_VERSION as u64 {
            return Err(HabitsError::Version {
                found: format!("{format} version {version}"),
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        let mut model = SeqModel::new(file.vocab, file.alpha, file.max_depth, file.seed)?;
        model.rng.set_word_pos(file.rng_word_pos);
        for rec in file.restaurants {
            if rec.context.len() > file.max_depth {
                return Err(HabitsError::Corrupt("context longer than max_depth".into()));
            }
            let mut rest = Restaurant::default();
            for seat in rec.seats {
                if seat.token as usize >= file.vocab.len()
                    || seat.tables.is_empty()
                    || seat.tables.contains(&0)
                {
                    return Err(HabitsError::Corrupt(format!(
                        "bad seating for token index {}",
                        seat.token
                    )));
                }
                let customers: u32 = seat.tables.iter().sum();
                rest.customers += customers;
                rest.seats.insert(
                    seat.token,
                    Seats {
                        customers,
                        tables: seat.tables,
                    },
                );
            }
            model.restaurants.insert(rec.context, rest);
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    alpha: f64,
    max_depth: usize,
    vocab: Vocab,
    seed: u64,
    rng_word_pos: u128,
    restaurants: Vec<RestaurantRecord>,
}

#[derive(Serialize, Deserialize)]
struct RestaurantRecord {
    context: Vec<u32>,
    seats: Vec<SeatRecord>,
}

#[derive(Serialize, Deserialize)]
struct SeatRecord {
    token: u32,
    tables: Vec<u32>,
}
