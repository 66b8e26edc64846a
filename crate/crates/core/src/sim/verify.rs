//! Tree verification against the target model.
//!
//! Two acceptance modes:
//!
//! - `GreedyMatch`: walk from the root; at each position accept the child
//!   whose token equals the target's argmax for the accepted prefix, if it is
//!   offered. Deterministic and RNG-free; the rejection point's argmax is the
//!   bonus token.
//! - `Stochastic`: speculative-sampling acceptance. Children are tried in
//!   descending draft-probability order; child `t` is accepted with
//!   probability `min(1, p_target(t) / p_draft(t))`. When every offered child
//!   is rejected (or a leaf is reached) the bonus token is sampled from the
//!   residual distribution `max(0, p_target - p_draft)` renormalized, with
//!   `p_draft` the draft model's full vector at that position. On
//!   single-child chains this is the standard lossless speculative-sampling
//!   scheme: the committed next token is marginally distributed exactly as
//!   the target.

use crate::draft_tree::{DraftTree, NodeId, TokenId};

use super::model::TokenDistribution;
use super::rng::KeyedRng;

/// How drafted tokens are accepted during verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceMode {
    GreedyMatch,
    Stochastic,
}

/// Verify a tree built over `context`. Returns the accepted node sequence
/// (possibly empty) and exactly one bonus token. The draft model is consulted
/// only in stochastic mode, for the bonus token's residual distribution.
pub fn verify_tree<T: TokenDistribution, D: TokenDistribution>(
    tree: &DraftTree<f64>,
    target: &T,
    draft: &D,
    context: &[TokenId],
    mode: AcceptanceMode,
    rng: &mut KeyedRng,
) -> (Vec<NodeId>, TokenId) {
    let mut accepted: Vec<NodeId> = Vec::new();
    let mut prefix: Vec<TokenId> = context.to_vec();
    let mut cur = NodeId::ROOT;

    loop {
        let children = tree.children(cur);
        match mode {
            AcceptanceMode::GreedyMatch => {
                let want = target.argmax(&prefix);
                match children.iter().find(|&&c| tree.node(c).token == want) {
                    Some(&child) => {
                        accepted.push(child);
                        prefix.push(want);
                        cur = child;
                    }
                    None => return (accepted, want),
                }
            }
            AcceptanceMode::Stochastic => {
                let probs = target.probs(&prefix);
                let mut ordered: Vec<NodeId> = children.to_vec();
                ordered.sort_by(|&a, &b| {
                    tree.node(b)
                        .draft_prob
                        .partial_cmp(&tree.node(a).draft_prob)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                });
                let mut took = None;
                for &child in &ordered {
                    let node = tree.node(child);
                    let p_draft = node.draft_prob;
                    let p_target = probs[node.token as usize];
                    let ratio = if p_draft > 0.0 {
                        (p_target / p_draft).min(1.0)
                    } else {
                        0.0
                    };
                    if rng.next_f64() < ratio {
                        took = Some(child);
                        break;
                    }
                }
                match took {
                    Some(child) => {
                        let token = tree.node(child).token;
                        accepted.push(child);
                        prefix.push(token);
                        cur = child;
                    }
                    None => {
                        // residual over the full vocabulary with the draft
                        // model's mass removed; this is what keeps the
                        // committed-token marginal equal to the target on
                        // single-child chains
                        let draft_probs = draft.probs(&prefix);
                        let mut residual = probs;
                        for (slot, &d) in residual.iter_mut().zip(&draft_probs) {
                            *slot = (*slot - d).max(0.0);
                        }
                        let total: f64 = residual.iter().sum();
                        let bonus = if total > 0.0 {
                            rng.sample_index(&residual) as TokenId
                        } else {
                            // target mass exactly covered by the draft;
                            // unreachable in theory, fall back to the plain
                            // target distribution
                            rng.sample_index(&target.probs(&prefix)) as TokenId
                        };
                        return (accepted, bonus);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::draft_tree::DraftTree;
    use crate::sim::model::{build_models, SyntheticModelPair, TokenDistribution};

    fn pair(mismatch: f64, seed: u64) -> SyntheticModelPair {
        SyntheticModelPair::new(30, 2, seed, mismatch)
    }

    #[test]
    fn empty_tree_yields_only_the_bonus() {
        let (target, draft) = build_models(&pair(0.0, 5));
        let tree = DraftTree::<f64>::new();
        let ctx = [1u32, 2];
        let mut rng = KeyedRng::from_key(&[0]);
        let (accepted, bonus) = verify_tree(
            &tree,
            &target,
            &draft,
            &ctx,
            AcceptanceMode::GreedyMatch,
            &mut rng,
        );
        assert!(accepted.is_empty());
        assert_eq!(bonus, target.argmax(&ctx));

        let (accepted, _) = verify_tree(
            &tree,
            &target,
            &draft,
            &ctx,
            AcceptanceMode::Stochastic,
            &mut rng,
        );
        assert!(accepted.is_empty());
    }

    #[test]
    fn greedy_match_accepts_the_argmax_chain() {
        let (target, draft) = build_models(&pair(0.0, 11));
        let ctx = [4u32, 9];
        // build the chain of target argmaxes by hand
        let mut tree = DraftTree::<f64>::new();
        let mut prefix = ctx.to_vec();
        let mut cur = NodeId::ROOT;
        for _ in 0..4 {
            let t = target.argmax(&prefix);
            let p = target.probs(&prefix)[t as usize];
            cur = tree.add_node(cur, t, p).unwrap();
            prefix.push(t);
        }
        let mut rng = KeyedRng::from_key(&[0]);
        let (accepted, bonus) = verify_tree(
            &tree,
            &target,
            &draft,
            &ctx,
            AcceptanceMode::GreedyMatch,
            &mut rng,
        );
        assert_eq!(accepted.len(), 4, "the full argmax chain must be accepted");
        assert_eq!(bonus, target.argmax(&prefix));
    }

    #[test]
    fn greedy_match_stops_at_first_mismatch() {
        let (target, draft) = build_models(&pair(0.0, 11));
        let ctx = [4u32, 9];
        let want = target.argmax(&ctx);
        let other = if want == 0 { 1 } else { want - 1 };
        let mut tree = DraftTree::<f64>::new();
        tree.add_node(NodeId::ROOT, other, 0.9).unwrap();
        let mut rng = KeyedRng::from_key(&[0]);
        let (accepted, bonus) = verify_tree(
            &tree,
            &target,
            &draft,
            &ctx,
            AcceptanceMode::GreedyMatch,
            &mut rng,
        );
        assert!(accepted.is_empty());
        assert_eq!(bonus, want);
    }

    #[test]
    fn greedy_match_never_falsely_rejects_on_path_nodes() {
        // branchy tree: every node lying on the target's greedy path must be
        // accepted no matter what siblings surround it
        let (target, draft) = build_models(&pair(0.0, 47));
        let ctx = [1u32, 5];
        let mut tree = DraftTree::<f64>::new();
        let mut prefix = ctx.to_vec();
        let mut cur = NodeId::ROOT;
        let mut on_path = Vec::new();
        for _ in 0..3 {
            let want = target.argmax(&prefix);
            let other = (want + 1) % 30;
            tree.add_node(cur, other, 0.2).unwrap();
            let node = tree.add_node(cur, want, 0.5).unwrap();
            on_path.push(node);
            prefix.push(want);
            cur = node;
        }
        let mut rng = KeyedRng::from_key(&[0]);
        let (accepted, _) = verify_tree(
            &tree,
            &target,
            &draft,
            &ctx,
            AcceptanceMode::GreedyMatch,
            &mut rng,
        );
        assert_eq!(accepted, on_path);
    }

    #[test]
    fn stochastic_accepts_certainly_when_target_dominates() {
        // p_target >= p_draft for the offered child means acceptance is sure
        let (target, draft) = build_models(&pair(0.0, 23));
        let ctx = [7u32, 3];
        let t = target.argmax(&ctx);
        let p_t = target.probs(&ctx)[t as usize];
        let mut tree = DraftTree::<f64>::new();
        tree.add_node(NodeId::ROOT, t, (p_t - 1e-6).max(0.0))
            .unwrap();
        for trial in 0..200u64 {
            let mut rng = KeyedRng::from_key(&[trial]);
            let (accepted, _) = verify_tree(
                &tree,
                &target,
                &draft,
                &ctx,
                AcceptanceMode::Stochastic,
                &mut rng,
            );
            assert_eq!(accepted.len(), 1);
        }
    }

    #[test]
    fn stochastic_acceptance_frequency_matches_analytic_rate() {
        // overconfident fixture: two children whose draft probabilities
        // exceed the target's, so rejections actually happen
        let (target, draft) = build_models(&pair(0.0, 31));
        let ctx = [2u32, 8];
        let probs = target.probs(&ctx);
        let top = target.top_k(&ctx, 2);
        let (t0, p0) = top[0];
        let (t1, p1) = top[1];
        let d0 = (p0 * 1.6).min(1.0);
        let d1 = (p1 * 1.9).min(1.0);
        let mut tree = DraftTree::<f64>::new();
        tree.add_node(NodeId::ROOT, t0, d0).unwrap();
        tree.add_node(NodeId::ROOT, t1, d1).unwrap();

        // sequential rejection in descending draft-probability order
        let (first, second) = if d0 >= d1 {
            ((t0, d0), (t1, d1))
        } else {
            ((t1, d1), (t0, d0))
        };
        let a_first = (probs[first.0 as usize] / first.1).min(1.0);
        let a_second = (probs[second.0 as usize] / second.1).min(1.0);
        let expect_any = a_first + (1.0 - a_first) * a_second;

        let trials = 100_000;
        let mut hits = 0usize;
        for trial in 0..trials {
            let mut rng = KeyedRng::from_key(&[0xACC, trial as u64]);
            let (accepted, _) = verify_tree(
                &tree,
                &target,
                &draft,
                &ctx,
                AcceptanceMode::Stochastic,
                &mut rng,
            );
            if !accepted.is_empty() {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        assert!(
            (freq - expect_any).abs() <= 0.02 * expect_any,
            "empirical {freq} vs analytic {expect_any}"
        );
    }

    #[test]
    fn stochastic_chain_preserves_target_marginal() {
        // draft a depth-1 chain sampled from the draft model each trial; the
        // committed next token must be distributed as the target conditional
        let spec = pair(0.5, 77);
        let (target, draft) = build_models(&spec);
        let ctx = [6u32, 1];
        let t_probs = target.probs(&ctx);
        let d_probs = draft.probs(&ctx);
        let trials = 100_000usize;
        let mut counts = vec![0usize; spec.vocab_size];
        for trial in 0..trials {
            let mut rng = KeyedRng::from_key(&[0x10E5, trial as u64]);
            let drafted = rng.sample_index(&d_probs) as TokenId;
            let mut tree = DraftTree::<f64>::new();
            tree.add_node(NodeId::ROOT, drafted, d_probs[drafted as usize])
                .unwrap();
            let (accepted, bonus) = verify_tree(
                &tree,
                &target,
                &draft,
                &ctx,
                AcceptanceMode::Stochastic,
                &mut rng,
            );
            let committed = if accepted.is_empty() { bonus } else { drafted };
            counts[committed as usize] += 1;
        }
        let tv: f64 = counts
            .iter()
            .zip(&t_probs)
            .map(|(&c, &p)| (c as f64 / trials as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= 0.01, "total variation {tv} exceeds 0.01");
    }
}
