//! Synthetic draft/target model pairs with a tunable agreement knob.
//!
//! The target model is an order-`n` categorical table: for each context (the
//! last `order` tokens) its next-token distribution is drawn from a symmetric
//! Dirichlet(0.3), generated lazily and deterministically from the seed so no
//! table is ever stored. The draft model is a mixture of the target and the
//! uniform distribution, `(1 - mismatch) * target + mismatch * uniform`:
//! mismatch 0 gives a draft that agrees with the target exactly, mismatch 1 a
//! draft that knows nothing.
//!
//! The mixture alone is always under-confident about likely tokens, so
//! speculative acceptance of drafted tokens is certain and extra tree width
//! buys nothing. The optional `sharpen` exponent (default 1, plain mixture)
//! raises the mixture to the power `1/sharpen` and renormalizes; values below
//! 1 give an over-confident draft whose drafted tokens really are rejected
//! sometimes, which is what makes over-drafting cost something.

use serde::Serialize;

use crate::draft_tree::TokenId;
use crate::policy::DraftDistribution;

use super::rng::KeyedRng;

/// Dirichlet concentration of the synthetic target tables.
const TARGET_CONCENTRATION: f64 = 0.3;

const TAG_TARGET: u64 = 0x7A67;

/// Specification of a synthetic draft/target pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyntheticModelPair {
    /// Vocabulary size, at least 2.
    pub vocab_size: usize,
    /// How many trailing tokens condition the next-token table.
    pub order: usize,
    pub seed: u64,
    /// Draft-vs-target divergence in [0, 1].
    pub mismatch: f64,
    /// Draft confidence exponent; 1 leaves the mixture as-is, below 1 makes
    /// the draft over-confident.
    pub sharpen: f64,
}

impl SyntheticModelPair {
    /// Pair with the given vocabulary, order, seed and mismatch; plain
    /// (unsharpened) mixture draft.
    pub fn new(vocab_size: usize, order: usize, seed: u64, mismatch: f64) -> Self {
        Self {
            vocab_size,
            order,
            seed,
            mismatch,
            sharpen: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.vocab_size < 2 {
            return Err(format!(
                "vocab_size must be at least 2, got {}",
                self.vocab_size
            ));
        }
        if !(0.0..=1.0).contains(&self.mismatch) {
            return Err(format!("mismatch must be in [0, 1], got {}", self.mismatch));
        }
        if !self.sharpen.is_finite() || self.sharpen <= 0.0 {
            return Err(format!("sharpen must be positive, got {}", self.sharpen));
        }
        Ok(())
    }
}

/// Instantiate the pair. Both models are cheap handles over the same lazy
/// tables; queries are deterministic functions of (seed, context).
pub fn build_models(spec: &SyntheticModelPair) -> (TargetModel, DraftModel) {
    (TargetModel { spec: *spec }, DraftModel { spec: *spec })
}

/// Full next-token distribution access shared by both synthetic models.
pub trait TokenDistribution {
    /// Next-token probability vector given the context (trailing tokens
    /// beyond the table order are ignored by the synthetic models).
    fn probs(&self, context: &[TokenId]) -> Vec<f64>;

    /// Top-k (token, probability) pairs, descending with index tie-break.
    fn top_k(&self, context: &[TokenId], k: usize) -> Vec<(TokenId, f64)> {
        let probs = self.probs(context);
        let mut pairs: Vec<(TokenId, f64)> = probs
            .iter()
            .enumerate()
            .map(|(t, &p)| (t as TokenId, p))
            .collect();
        pairs.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        pairs.truncate(k);
        pairs
    }

    /// Most likely next token, smallest index on ties.
    fn argmax(&self, context: &[TokenId]) -> TokenId {
        let probs = self.probs(context);
        let mut best = 0usize;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        best as TokenId
    }
}

fn target_probs(spec: &SyntheticModelPair, context: &[TokenId]) -> Vec<f64> {
    let tail_start = context.len().saturating_sub(spec.order);
    let tail = &context[tail_start..];
    let mut key = Vec::with_capacity(tail.len() + 3);
    key.push(spec.seed);
    key.push(TAG_TARGET);
    key.push(tail.len() as u64);
    key.extend(tail.iter().map(|&t| t as u64));
    let mut rng = KeyedRng::from_key(&key);
    let mut weights: Vec<f64> = (0..spec.vocab_size)
        .map(|_| rng.gamma(TARGET_CONCENTRATION))
        .collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in &mut weights {
            *w /= total;
        }
    } else {
        let u = 1.0 / spec.vocab_size as f64;
        weights.fill(u);
    }
    weights
}

/// The expensive model being accelerated.
#[derive(Debug, Clone)]
pub struct TargetModel {
    spec: SyntheticModelPair,
}

impl TokenDistribution for TargetModel {
    fn probs(&self, context: &[TokenId]) -> Vec<f64> {
        target_probs(&self.spec, context)
    }
}

/// The cheap drafting model: a mismatch-weighted blend of target and uniform.
#[derive(Debug, Clone)]
pub struct DraftModel {
    spec: SyntheticModelPair,
}

impl TokenDistribution for DraftModel {
    fn probs(&self, context: &[TokenId]) -> Vec<f64> {
        let mut probs = target_probs(&self.spec, context);
        let m = self.spec.mismatch;
        let uniform = 1.0 / self.spec.vocab_size as f64;
        let mut total = 0.0;
        for p in &mut probs {
            *p = (1.0 - m) * *p + m * uniform;
            total += *p;
        }
        // the blend of two normalized vectors is normalized; renormalize to
        // absorb rounding anyway
        for p in &mut probs {
            *p /= total;
        }
        if (self.spec.sharpen - 1.0).abs() > 1e-12 {
            let exponent = 1.0 / self.spec.sharpen;
            let mut total = 0.0;
            for p in &mut probs {
                *p = p.powf(exponent);
                total += *p;
            }
            for p in &mut probs {
                *p /= total;
            }
        }
        probs
    }
}

/// Adapter pinning a committed context so a model can serve tree builders,
/// which only supply the drafted ancestor tokens.
pub struct ContextualDraft<'a, M> {
    pub model: &'a M,
    pub context: &'a [TokenId],
}

impl<M: TokenDistribution> DraftDistribution<f64> for ContextualDraft<'_, M> {
    fn top_k(&self, ancestors: &[TokenId], k: usize) -> Vec<(TokenId, f64)> {
        let mut full = Vec::with_capacity(self.context.len() + ancestors.len());
        full.extend_from_slice(self.context);
        full.extend_from_slice(ancestors);
        self.model.top_k(&full, k)
    }
}
