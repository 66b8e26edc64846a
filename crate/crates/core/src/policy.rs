//! Tree-construction policies.
//!
//! Three ways to build a draft tree over the same draft-distribution
//! interface:
//!
//! - [`smart_build`]: greedy marginal benefit–cost construction. The tree
//!   grows layer by layer; a candidate is kept only while its discounted
//!   marginal benefit–cost ratio exceeds the tree's current global speedup
//!   ratio, under a per-sequence token budget `B = b_verify / batch_size`.
//! - [`baseline_build`]: the likelihood-maximizing two-stage policy — expand
//!   the global top-k nodes of each layer by cumulative probability, then
//!   rerank everything generated and keep the top-g for verification.
//! - [`brute_force_optimal`]: exhaustive search over every ancestor-closed
//!   subset of the full k-ary candidate tree, capped at toy sizes. Exists to
//!   measure how far the greedy policy lands from the true optimum.

use std::cmp::Ordering;

use thiserror::Error;

use crate::acceptance::{marginal_acceptance, tree_reward, TreeReward};
use crate::cost_model::{marginal_spec_cost_flagged, CostError, CostModelParams};
use crate::draft_tree::{DraftTree, NodeId, TokenId, TreeError};
use crate::Scalar;

/// Source of draft-token candidates.
///
/// `ancestors` is the drafted token path from the tree root to the node being
/// expanded (empty when expanding the root); the implementation supplies the
/// committed context itself. Returned pairs must be sorted by descending
/// probability with ties broken by ascending token id, contain distinct
/// tokens, and have probabilities in `[0, 1]`.
pub trait DraftDistribution<S> {
    fn top_k(&self, ancestors: &[TokenId], k: usize) -> Vec<(TokenId, S)>;
}

/// Policy hyperparameters governing tree construction.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BuildConfig<S> {
    /// Candidates drawn per expanded node.
    pub k: usize,
    /// Maximum drafted depth; 0 builds the root-only tree.
    pub d: u32,
    /// Discount on the draft model's optimistic benefit estimates, in (0, 1].
    pub alpha: S,
    /// Total verification token budget across the batch.
    pub b_verify: usize,
    /// Batch size the budget is split across.
    pub batch_size: usize,
    /// Retained node count for the baseline's rerank stage.
    pub rerank_g: usize,
}

impl<S: Scalar> BuildConfig<S> {
    /// Per-sequence budget `floor(b_verify / batch_size)`.
    pub fn budget(&self) -> usize {
        self.b_verify / self.batch_size
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.k == 0 {
            return Err(PolicyError::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.alpha > S::zero() && self.alpha <= S::one()) {
            return Err(PolicyError::InvalidConfig(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.batch_size == 0 {
            return Err(PolicyError::InvalidConfig(
                "batch_size must be at least 1".into(),
            ));
        }
        if self.budget() == 0 {
            return Err(PolicyError::InvalidConfig(format!(
                "per-sequence budget floor({} / {}) must be at least 1",
                self.b_verify, self.batch_size
            )));
        }
        if self.rerank_g == 0 {
            return Err(PolicyError::InvalidConfig(
                "rerank_g must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid build config: {0}")]
    InvalidConfig(String),
    #[error("marginal cost must be positive, got {0}")]
    NonPositiveMarginalCost(f64),
    #[error("instance too large for enumeration: {candidates} candidates exceeds cap {cap}")]
    InstanceTooLarge { candidates: usize, cap: usize },
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Inputs to the per-candidate expansion decision.
#[derive(Debug, Clone, Copy)]
pub struct DecisionInputs<S> {
    /// Marginal benefit: autoregressive cost of the candidate's expected
    /// acceptance gain.
    pub delta_target: S,
    /// Marginal speculative cost of one more drafted token.
    pub delta_spec: S,
    /// Global term: autoregressive cost of the current tree's expected
    /// acceptance.
    pub c_target: S,
    /// Global term: speculative cost of the current tree.
    pub c_spec: S,
    /// Benefit discount in (0, 1].
    pub alpha: S,
}

/// The expansion decision: keep a candidate iff
/// `alpha * delta_target / delta_spec - c_target / c_spec > 0`.
///
/// The global term is defined as 0 when `c_spec` is 0 (the empty-tree seed),
/// which makes the first layer admit any candidate with positive benefit.
/// Ties at exactly 0 are rejected.
pub fn decision_rule<S: Scalar>(inputs: &DecisionInputs<S>) -> Result<(S, bool), PolicyError> {
    if inputs.delta_spec.partial_cmp(&S::zero()) != Some(Ordering::Greater) {
        return Err(PolicyError::NonPositiveMarginalCost(
            inputs.delta_spec.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let global = if inputs.c_spec > S::zero() {
        inputs.c_target / inputs.c_spec
    } else {
        S::zero()
    };
    let delta_j = inputs.alpha * inputs.delta_target / inputs.delta_spec - global;
    Ok((delta_j, delta_j > S::zero()))
}

/// Why construction stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxDepth,
    EmptyActiveSet,
    BudgetExhausted,
}

/// One scored candidate together with the global terms it was scored
/// against, so any admission can be replayed through [`decision_rule`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CandidateScore<S> {
    pub parent: NodeId,
    pub token: TokenId,
    pub draft_prob: S,
    pub delta_target: S,
    pub delta_spec: S,
    /// Global terms at scoring time (the tree state including candidates
    /// admitted earlier in the same layer).
    pub c_target: S,
    pub c_spec: S,
    pub delta_j: S,
    /// Decision-rule admission (`delta_j > 0`). A rule-admitted candidate can
    /// still be left out of the tree by the mid-layer budget cut.
    pub admitted: bool,
}

/// Per-layer build record.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LayerTrace<S> {
    pub layer: u32,
    /// Size of the active set expanded into this layer.
    pub active_in: usize,
    /// Candidates generated (k per active node).
    pub candidates: usize,
    /// Nodes that joined the tree this layer (the new active set).
    pub admitted: usize,
    pub tree_size_after: usize,
    /// Global terms snapshotted at layer start; each candidate's as-scored
    /// globals live in its [`CandidateScore`].
    pub c_target: S,
    pub c_spec: S,
    pub global_ratio: S,
    pub scores: Vec<CandidateScore<S>>,
    /// Set on the final layer only.
    pub termination: Option<Termination>,
}

/// Full record of one greedy build.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildTrace<S> {
    pub layers: Vec<LayerTrace<S>>,
    pub termination: Termination,
    /// Total candidates generated across all layers; bounded by `k * B + k`.
    pub candidate_evals: usize,
}

impl<S: Scalar + serde::Serialize> BuildTrace<S> {
    /// JSON-lines form: one record per layer.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for layer in &self.layers {
            out.push_str(&serde_json::to_string(layer).expect("layer trace serializes"));
            out.push('\n');
        }
        out
    }
}

struct Candidate<S> {
    parent: NodeId,
    token: TokenId,
    prob: S,
}

/// Greedy speedup-maximizing construction.
///
/// Layer by layer: draw top-k candidates for every active node, then score
/// candidates in descending draft-probability order, admitting those the
/// decision rule keeps while the budget lasts. Scoring is sequential within
/// the layer: each candidate sees the tree as it stands, including candidates
/// admitted earlier in the same sweep, in both the global reward terms and
/// the path-count dilution. Without this, the zero seed ratio of the first
/// layer would admit every positive-probability candidate and a single
/// low-value sibling would permanently dilute the path average the reward is
/// built on. Stops at the first of: maximum depth reached, no candidate
/// admitted, or budget filled; the budget is enforced mid-layer (in the
/// descending-probability order) so the tree never exceeds `B` tokens.
pub fn smart_build<S: Scalar>(
    draft: &dyn DraftDistribution<S>,
    params: &CostModelParams<S>,
    config: &BuildConfig<S>,
) -> Result<(DraftTree<S>, BuildTrace<S>), PolicyError> {
    config.validate()?;
    let budget = config.budget();
    let mut tree = DraftTree::new();
    let mut active: Vec<NodeId> = vec![NodeId::ROOT];
    let mut layers: Vec<LayerTrace<S>> = Vec::new();
    let mut candidate_evals = 0usize;
    let mut termination = Termination::MaxDepth;

    // Running expected-acceptance state: per-node sums of cumulative
    // probabilities along the root path, the total over current leaves, and
    // the leaf count. Keeping these incremental makes per-candidate global
    // terms O(1).
    let mut path_sum: Vec<S> = vec![S::zero()];
    let mut leaf_sum = S::zero();

    for layer in 1..=config.d {
        let mut candidates: Vec<Candidate<S>> = Vec::new();
        for &parent in &active {
            let ancestors = tree.token_path(parent);
            for (token, prob) in draft.top_k(&ancestors, config.k) {
                candidates.push(Candidate {
                    parent,
                    token,
                    prob,
                });
            }
        }
        candidate_evals += candidates.len();

        candidates.sort_by(|a, b| {
            b.prob
                .partial_cmp(&a.prob)
                .unwrap_or(Ordering::Equal)
                .then(a.parent.cmp(&b.parent))
                .then(a.token.cmp(&b.token))
        });

        let layer_start = tree_reward(&tree, params);
        let mut scores = Vec::with_capacity(candidates.len());
        let mut next_active = Vec::new();
        for cand in &candidates {
            let size = tree.size();
            let l_tree =
                leaf_sum / S::from_usize(tree.path_count()).expect("path count fits scalar");
            let c_target = params.c_token * l_tree;
            let c_spec = crate::cost_model::eval_draft_cost(params, size)
                + crate::cost_model::eval_verify_cost(params, size);
            let (marginal, saturated) = marginal_spec_cost_flagged(params, size.max(1))?;
            // A saturated marginal means the device model blew past its
            // exponent cap; such candidates are never worth expanding.
            let delta_spec = if saturated { S::infinity() } else { marginal };
            let delta_l = marginal_acceptance(&tree, cand.parent, cand.prob)?;
            let delta_target = params.c_token * delta_l;
            let (delta_j, admitted) = decision_rule(&DecisionInputs {
                delta_target,
                delta_spec,
                c_target,
                c_spec,
                alpha: config.alpha,
            })?;
            scores.push(CandidateScore {
                parent: cand.parent,
                token: cand.token,
                draft_prob: cand.prob,
                delta_target,
                delta_spec,
                c_target,
                c_spec,
                delta_j,
                admitted,
            });
            if admitted && size < budget {
                let parent_was_leaf = tree.is_leaf(cand.parent);
                let id = tree.add_node(cand.parent, cand.token, cand.prob)?;
                let sum = path_sum[cand.parent.index()] + tree.node(id).cum_prob;
                path_sum.push(sum);
                if parent_was_leaf {
                    leaf_sum = leaf_sum + tree.node(id).cum_prob;
                } else {
                    leaf_sum = leaf_sum + sum;
                }
                next_active.push(id);
            }
        }

        layers.push(LayerTrace {
            layer,
            active_in: active.len(),
            candidates: candidates.len(),
            admitted: next_active.len(),
            tree_size_after: tree.size(),
            c_target: layer_start.c_target,
            c_spec: layer_start.c_spec,
            global_ratio: layer_start.ratio,
            scores,
            termination: None,
        });

        active = next_active;
        if tree.size() >= budget {
            termination = Termination::BudgetExhausted;
            break;
        }
        if active.is_empty() {
            termination = Termination::EmptyActiveSet;
            break;
        }
    }

    if let Some(last) = layers.last_mut() {
        last.termination = Some(termination);
    }
    Ok((
        tree,
        BuildTrace {
            layers,
            termination,
            candidate_evals,
        },
    ))
}

/// Likelihood-maximizing two-stage baseline.
///
/// Stage 1 expands, at each layer, the global top-k nodes of the previous
/// layer by cumulative probability, generating top-k children for each.
/// Stage 2 reranks every generated node by cumulative probability and keeps
/// the top `rerank_g`, pulling pruned ancestors back in (and trimming the
/// lowest-probability retained leaves to get back to `g`) so the result stays
/// a connected tree. The tree shape is fixed by `(k, d, g)` and never reacts
/// to costs or batch size.
pub fn baseline_build<S: Scalar>(
    draft: &dyn DraftDistribution<S>,
    config: &BuildConfig<S>,
) -> Result<DraftTree<S>, PolicyError> {
    config.validate()?;
    let mut tree = DraftTree::new();
    let mut active: Vec<NodeId> = vec![NodeId::ROOT];

    for _layer in 1..=config.d {
        let mut layer_nodes: Vec<NodeId> = Vec::new();
        for &parent in &active {
            let ancestors = tree.token_path(parent);
            for (token, prob) in draft.top_k(&ancestors, config.k) {
                layer_nodes.push(tree.add_node(parent, token, prob)?);
            }
        }
        if layer_nodes.is_empty() {
            break;
        }
        layer_nodes.sort_by(|&a, &b| {
            tree.node(b)
                .cum_prob
                .partial_cmp(&tree.node(a).cum_prob)
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        layer_nodes.truncate(config.k);
        active = layer_nodes;
    }

    if tree.size() <= config.rerank_g {
        return Ok(tree);
    }

    // Rerank: top-g by cumulative probability, ids ascending on ties. Because
    // a parent's cumulative probability is at least its child's and its id is
    // smaller, this ranking already keeps ancestors of everything it keeps;
    // the closure pass below only matters for hypothetical orderings that
    // break that property.
    let mut ranked: Vec<NodeId> = tree.nodes()[1..].iter().map(|n| n.id).collect();
    ranked.sort_by(|&a, &b| {
        tree.node(b)
            .cum_prob
            .partial_cmp(&tree.node(a).cum_prob)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut retained: std::collections::BTreeSet<NodeId> =
        ranked.iter().take(config.rerank_g).copied().collect();

    // Ancestor closure, then trim retained leaves back to g.
    loop {
        let mut to_add = Vec::new();
        for &id in &retained {
            let mut cur = id;
            while let Some(parent) = tree.node(cur).parent {
                if parent != NodeId::ROOT && !retained.contains(&parent) {
                    to_add.push(parent);
                }
                cur = parent;
            }
        }
        if to_add.is_empty() {
            break;
        }
        retained.extend(to_add);
    }
    while retained.len() > config.rerank_g {
        let removable = retained
            .iter()
            .copied()
            .filter(|&id| tree.children(id).iter().all(|c| !retained.contains(c)))
            .min_by(|&a, &b| {
                tree.node(a)
                    .cum_prob
                    .partial_cmp(&tree.node(b).cum_prob)
                    .unwrap_or(Ordering::Equal)
                    .then(b.cmp(&a))
            })
            .expect("a nonempty retained set has a removable leaf");
        retained.remove(&removable);
    }

    // Rebuild compactly; ascending ids visit parents before children.
    let mut rebuilt = DraftTree::new();
    let mut remap = std::collections::HashMap::new();
    remap.insert(NodeId::ROOT, NodeId::ROOT);
    for &id in &retained {
        let node = tree.node(id);
        let parent = remap[&node.parent.expect("retained nodes are drafted")];
        let new_id = rebuilt.add_node(parent, node.token, node.draft_prob)?;
        remap.insert(id, new_id);
    }
    Ok(rebuilt)
}

const ENUMERATION_CAP: usize = 20;

/// Exhaustive optimal tree over the full k-ary candidate expansion, for toy
/// instances only (at most [`ENUMERATION_CAP`] candidates). Every
/// ancestor-closed subset within budget is evaluated; ties are broken toward
/// the smaller tree and then the lexicographically earliest node set.
pub fn brute_force_optimal<S: Scalar>(
    draft: &dyn DraftDistribution<S>,
    params: &CostModelParams<S>,
    config: &BuildConfig<S>,
) -> Result<(DraftTree<S>, TreeReward<S>), PolicyError> {
    config.validate()?;
    // Candidate count for a full k-ary expansion: k + k^2 + ... + k^d.
    let mut expected = 0usize;
    let mut level = 1usize;
    for _ in 0..config.d {
        level = level.saturating_mul(config.k);
        expected = expected.saturating_add(level);
        if expected > ENUMERATION_CAP {
            return Err(PolicyError::InstanceTooLarge {
                candidates: expected,
                cap: ENUMERATION_CAP,
            });
        }
    }

    // Materialize the full candidate tree in level order. Parent index
    // usize::MAX marks children of the root; level order guarantees
    // parent index < child index.
    struct Cand<S> {
        parent: usize,
        token: TokenId,
        prob: S,
        cum: S,
        /// Sum of cumulative probabilities along the root-to-here path.
        path_sum: S,
        tokens: Vec<TokenId>,
    }
    let mut cands: Vec<Cand<S>> = Vec::new();
    let mut frontier: Vec<usize> = vec![usize::MAX];
    for _ in 1..=config.d {
        let mut next_frontier = Vec::new();
        for &parent in &frontier {
            let (ancestors, parent_cum, parent_sum) = if parent == usize::MAX {
                (Vec::new(), S::one(), S::zero())
            } else {
                (
                    cands[parent].tokens.clone(),
                    cands[parent].cum,
                    cands[parent].path_sum,
                )
            };
            for (token, prob) in draft.top_k(&ancestors, config.k) {
                let cum = parent_cum * prob;
                let mut tokens = ancestors.clone();
                tokens.push(token);
                cands.push(Cand {
                    parent,
                    token,
                    prob,
                    cum,
                    path_sum: parent_sum + cum,
                    tokens,
                });
                next_frontier.push(cands.len() - 1);
            }
        }
        frontier = next_frontier;
    }

    let n = cands.len();
    let budget = config.budget();
    // Speculative cost per tree size, shared by every subset of that size.
    let c_spec_by_size: Vec<S> = (0..=n)
        .map(|s| {
            crate::cost_model::eval_draft_cost(params, s)
                + crate::cost_model::eval_verify_cost(params, s)
        })
        .collect();

    // Lexicographic order on the sorted node-index lists of two masks: the
    // mask containing the lowest differing index comes first.
    let lex_cmp = |a: u32, b: u32| -> Ordering {
        let diff = a ^ b;
        if diff == 0 {
            return Ordering::Equal;
        }
        let low = diff.trailing_zeros();
        if a & (1 << low) != 0 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    };

    let mut best_mask = 0u32;
    let mut best_ratio = S::zero();
    let mut best_size = 0usize;
    let mut has_child = vec![false; n.max(1)];
    for mask in 0u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size > budget {
            continue;
        }
        // Ancestor closure: every selected node's parent is selected.
        let closed = cands.iter().enumerate().all(|(i, cand)| {
            mask & (1 << i) == 0 || cand.parent == usize::MAX || mask & (1 << cand.parent) != 0
        });
        if !closed {
            continue;
        }
        let ratio = if size == 0 {
            S::zero()
        } else {
            for flag in has_child.iter_mut().take(n) {
                *flag = false;
            }
            for i in 0..n {
                if mask & (1 << i) != 0 && cands[i].parent != usize::MAX {
                    has_child[cands[i].parent] = true;
                }
            }
            let mut sum = S::zero();
            let mut leaves = 0usize;
            for i in 0..n {
                if mask & (1 << i) != 0 && !has_child[i] {
                    sum = sum + cands[i].path_sum;
                    leaves += 1;
                }
            }
            let l_tree = sum / S::from_usize(leaves).expect("leaf count fits scalar");
            let c_spec = c_spec_by_size[size];
            if c_spec > S::zero() {
                params.c_token * l_tree / c_spec
            } else {
                S::zero()
            }
        };
        let better = match ratio.partial_cmp(&best_ratio) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Equal) => match size.cmp(&best_size) {
                Ordering::Less => true,
                Ordering::Equal => lex_cmp(mask, best_mask) == Ordering::Less,
                Ordering::Greater => false,
            },
            _ => false,
        };
        if better {
            best_mask = mask;
            best_ratio = ratio;
            best_size = size;
        }
    }

    // Rebuild the winner; ascending candidate indices visit parents first.
    let mut tree = DraftTree::new();
    let mut remap = vec![NodeId::ROOT; n];
    for (i, cand) in cands.iter().enumerate() {
        if best_mask & (1 << i) != 0 {
            let parent = if cand.parent == usize::MAX {
                NodeId::ROOT
            } else {
                remap[cand.parent]
            };
            remap[i] = tree.add_node(parent, cand.token, cand.prob)?;
        }
    }
    let reward = tree_reward(&tree, params);
    Ok((tree, reward))
}
