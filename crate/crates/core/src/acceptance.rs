//! Expected acceptance length and the tree-level speedup reward.
//!
//! The expected number of tokens accepted from a draft tree is estimated as
//! the mean, over all root-to-leaf paths, of the per-path sum of cumulative
//! acceptance probabilities: accepting exactly the first `j` tokens of a path
//! happens with the probability that the whole prefix survives verification,
//! so the expected accepted count along one path is the sum of its prefix
//! probabilities. Averaging over paths is exact for chains and is the chosen
//! approximation for branching trees (true tree verification takes the best
//! surviving branch at each level, which this estimate does not model).
//!
//! The reward of a tree compares what the target model would spend decoding
//! the same expected number of tokens autoregressively against what drafting
//! plus verification costs: `ratio = c_token * l_tree / (C_draft + C_verify)`.
//! The empty tree is defined to have ratio 0 so that the very first expansion
//! decision compares against a floor every positive-benefit candidate clears.

use crate::cost_model::{eval_draft_cost, eval_verify_cost, CostModelParams};
use crate::draft_tree::{DraftTree, NodeId, TreeError};
use crate::Scalar;

/// The reward triple evaluated on one tree.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TreeReward<S> {
    /// Expected accepted tokens per verification pass.
    pub l_tree: S,
    /// Autoregressive cost of the same tokens: `c_token * l_tree`.
    pub c_target: S,
    /// Speculative cost: draft plus verify at the tree's size.
    pub c_spec: S,
    /// Expected speedup `c_target / c_spec`; 0 for the empty tree.
    pub ratio: S,
}

/// Mean over root-to-leaf paths of the per-path sum of cumulative
/// probabilities. The root-only tree has one empty path and returns 0.
pub fn expected_acceptance_length<S: Scalar>(tree: &DraftTree<S>) -> S {
    let mut total = S::zero();
    for leaf in tree.leaves() {
        let mut cur = leaf;
        while let Some(parent) = tree.node(cur).parent {
            total = total + tree.node(cur).cum_prob;
            cur = parent;
        }
    }
    total / S::from_usize(tree.path_count()).expect("path count fits scalar")
}

/// Marginal gain in expected acceptance length from adding a child of
/// `parent` with conditional probability `draft_prob`.
///
/// The candidate's cumulative probability is diluted by the path count the
/// tree would have after the addition: unchanged if the parent is currently a
/// leaf (the candidate extends an existing path), one more otherwise.
pub fn marginal_acceptance<S: Scalar>(
    tree: &DraftTree<S>,
    parent: NodeId,
    draft_prob: S,
) -> Result<S, TreeError> {
    if parent.index() >= tree.nodes().len() {
        return Err(TreeError::UnknownParent(parent.0));
    }
    if !(draft_prob >= S::zero() && draft_prob <= S::one()) {
        return Err(TreeError::ProbabilityOutOfRange(
            draft_prob.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let paths_after = if tree.is_leaf(parent) {
        tree.path_count()
    } else {
        tree.path_count() + 1
    };
    let candidate_cum = tree.node(parent).cum_prob * draft_prob;
    Ok(candidate_cum / S::from_usize(paths_after).expect("path count fits scalar"))
}

/// Evaluate the reward triple on a tree under the given device parameters.
pub fn tree_reward<S: Scalar>(tree: &DraftTree<S>, params: &CostModelParams<S>) -> TreeReward<S> {
    let l_tree = expected_acceptance_length(tree);
    let c_target = params.c_token * l_tree;
    let c_spec = eval_draft_cost(params, tree.size()) + eval_verify_cost(params, tree.size());
    let ratio = if c_spec > S::zero() {
        c_target / c_spec
    } else {
        S::zero()
    };
    TreeReward {
        l_tree,
        c_target,
        c_spec,
        ratio,
    }
}
