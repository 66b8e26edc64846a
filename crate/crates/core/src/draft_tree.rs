//! Layered draft-tree storage shared by all construction policies.
//!
//! A [`DraftTree`] is an append-only arena of nodes. The root represents the
//! last committed token and is *not* a drafted token: it carries probability
//! one, contributes nothing to [`DraftTree::size`], and is excluded from the
//! drafted portion of every root-to-leaf path. Each drafted node stores the
//! conditional probability the draft model assigned to its token and the
//! running product of those probabilities along its ancestry (the cumulative
//! acceptance probability). Pruning is expressed by never adding a node;
//! nothing is ever removed, so node ids stay stable for the lifetime of the
//! tree.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::Scalar;

/// Vocabulary index of a token.
pub type TokenId = u32;

/// Dense handle into a tree's node arena. Id 0 is always the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct NodeId(pub u32);

impl NodeId {
    /// The root node id.
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Errors from tree mutation.
#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("unknown parent node id {0}")]
    UnknownParent(u32),
    #[error("draft probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("malformed tree line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One node of a draft tree.
#[derive(Debug, Clone, PartialEq)]
pub struct DraftNode<S> {
    pub id: NodeId,
    /// `None` for the root only.
    pub parent: Option<NodeId>,
    pub token: TokenId,
    /// Depth; the root sits at layer 0.
    pub layer: u32,
    /// Conditional probability of this token given its ancestors.
    pub draft_prob: S,
    /// Product of `draft_prob` over the root-to-node ancestry.
    pub cum_prob: S,
}

/// Rooted draft tree with incremental leaf tracking.
#[derive(Debug, Clone)]
pub struct DraftTree<S> {
    nodes: Vec<DraftNode<S>>,
    children: Vec<Vec<NodeId>>,
    leaves: BTreeSet<NodeId>,
}

impl<S: Scalar> Default for DraftTree<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> DraftTree<S> {
    /// Tree with a single root node. `size()` is 0 and the root is a leaf.
    pub fn new() -> Self {
        let root = DraftNode {
            id: NodeId::ROOT,
            parent: None,
            token: 0,
            layer: 0,
            draft_prob: S::one(),
            cum_prob: S::one(),
        };
        let mut leaves = BTreeSet::new();
        leaves.insert(NodeId::ROOT);
        Self {
            nodes: vec![root],
            children: vec![Vec::new()],
            leaves,
        }
    }

    /// Append a drafted child of `parent`.
    ///
    /// The new node's cumulative probability is the parent's cumulative
    /// probability times `draft_prob`, computed once here and never
    /// re-derived.
    pub fn add_node(
        &mut self,
        parent: NodeId,
        token: TokenId,
        draft_prob: S,
    ) -> Result<NodeId, TreeError> {
        if parent.index() >= self.nodes.len() {
            return Err(TreeError::UnknownParent(parent.0));
        }
        if !(draft_prob >= S::zero() && draft_prob <= S::one()) {
            return Err(TreeError::ProbabilityOutOfRange(
                draft_prob.to_f64().unwrap_or(f64::NAN),
            ));
        }
        let id = NodeId(self.nodes.len() as u32);
        let p = &self.nodes[parent.index()];
        let node = DraftNode {
            id,
            parent: Some(parent),
            token,
            layer: p.layer + 1,
            draft_prob,
            cum_prob: p.cum_prob * draft_prob,
        };
        self.nodes.push(node);
        self.children.push(Vec::new());
        self.children[parent.index()].push(id);
        self.leaves.remove(&parent);
        self.leaves.insert(id);
        Ok(id)
    }

    /// Count of drafted nodes; the root is not drafted and does not count.
    pub fn size(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node(&self, id: NodeId) -> &DraftNode<S> {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[DraftNode<S>] {
        &self.nodes
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.index()]
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.children[id.index()].is_empty()
    }

    /// Leaves in ascending id order. The root-only tree has one leaf: the root.
    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.leaves.iter().copied()
    }

    /// Number of root-to-leaf paths; always `leaves().count()`, at least 1.
    pub fn path_count(&self) -> usize {
        self.leaves.len()
    }

    /// Drafted-node sequences of every root-to-leaf path, one per leaf.
    ///
    /// The root is position 0 of every path and contributes no probability
    /// term, so it is excluded from the returned sequences; the root-only
    /// tree yields a single empty path.
    pub fn paths(&self) -> Vec<Vec<NodeId>> {
        self.leaves
            .iter()
            .map(|&leaf| {
                let mut path = Vec::new();
                let mut cur = leaf;
                while let Some(parent) = self.nodes[cur.index()].parent {
                    path.push(cur);
                    cur = parent;
                }
                path.reverse();
                path
            })
            .collect()
    }

    /// Token sequence (drafted portion) from the root down to `id`.
    pub fn token_path(&self, id: NodeId) -> Vec<TokenId> {
        let mut tokens = Vec::new();
        let mut cur = id;
        while let Some(parent) = self.nodes[cur.index()].parent {
            tokens.push(self.nodes[cur.index()].token);
            cur = parent;
        }
        tokens.reverse();
        tokens
    }

    /// Deepest drafted layer in the tree; 0 for the root-only tree.
    pub fn depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.layer).max().unwrap_or(0)
    }

    /// Line-oriented text form: one node per line,
    /// `id parent token layer draft_prob`, root line `0 - -1 0 1.0`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("0 - -1 0 1.0\n");
        for node in &self.nodes[1..] {
            writeln!(
                out,
                "{} {} {} {} {:.12e}",
                node.id.0,
                node.parent.expect("non-root has a parent").0,
                node.token,
                node.layer,
                node.draft_prob
            )
            .expect("writing to String cannot fail");
        }
        out
    }

    /// Parse the text form produced by [`DraftTree::to_text`].
    pub fn from_text(text: &str) -> Result<Self, TreeError> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| TreeError::Parse {
            line: 1,
            reason: "empty input".into(),
        })?;
        if first.trim() != "0 - -1 0 1.0" {
            return Err(TreeError::Parse {
                line: 1,
                reason: format!("bad root line `{first}`"),
            });
        }
        let mut tree = Self::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(TreeError::Parse {
                    line: line_no,
                    reason: format!("expected 5 fields, got {}", fields.len()),
                });
            }
            let id: u32 = fields[0].parse().map_err(|_| TreeError::Parse {
                line: line_no,
                reason: format!("bad id `{}`", fields[0]),
            })?;
            if id as usize != tree.nodes.len() {
                return Err(TreeError::Parse {
                    line: line_no,
                    reason: format!("non-contiguous id {id}"),
                });
            }
            let parent: u32 = fields[1].parse().map_err(|_| TreeError::Parse {
                line: line_no,
                reason: format!("bad parent `{}`", fields[1]),
            })?;
            let token: TokenId = fields[2].parse().map_err(|_| TreeError::Parse {
                line: line_no,
                reason: format!("bad token `{}`", fields[2]),
            })?;
            let prob: f64 = fields[4].parse().map_err(|_| TreeError::Parse {
                line: line_no,
                reason: format!("bad probability `{}`", fields[4]),
            })?;
            let prob = S::from_f64(prob).ok_or_else(|| TreeError::Parse {
                line: line_no,
                reason: format!("unrepresentable probability `{}`", fields[4]),
            })?;
            let added =
                tree.add_node(NodeId(parent), token, prob)
                    .map_err(|e| TreeError::Parse {
                        line: line_no,
                        reason: e.to_string(),
                    })?;
            let declared_layer: u32 = fields[3].parse().map_err(|_| TreeError::Parse {
                line: line_no,
                reason: format!("bad layer `{}`", fields[3]),
            })?;
            if tree.node(added).layer != declared_layer {
                return Err(TreeError::Parse {
                    line: line_no,
                    reason: format!(
                        "layer {declared_layer} does not match parent depth {}",
                        tree.node(added).layer
                    ),
                });
            }
        }
        Ok(tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Tree = DraftTree<f64>;

    #[test]
    fn new_tree_is_empty_with_root_leaf() {
        let tree = Tree::new();
        assert_eq!(tree.size(), 0);
        assert_eq!(tree.node(NodeId::ROOT).layer, 0);
        assert_eq!(tree.node(NodeId::ROOT).cum_prob, 1.0);
        assert_eq!(tree.leaves().collect::<Vec<_>>(), vec![NodeId::ROOT]);
        assert_eq!(tree.paths(), vec![Vec::<NodeId>::new()]);
        assert_eq!(tree.path_count(), 1);
    }

    #[test]
    fn cum_prob_is_running_product() {
        let mut tree = Tree::new();
        let a = tree.add_node(NodeId::ROOT, 7, 0.5).unwrap();
        assert_eq!(tree.node(a).cum_prob, 0.5);
        let b = tree.add_node(a, 9, 0.5).unwrap();
        assert_eq!(tree.node(b).cum_prob, 0.25);
        assert_eq!(tree.node(b).layer, 2);
        // multiplying by 1.0 keeps the parent's cumulative probability
        let c = tree.add_node(NodeId::ROOT, 3, 0.3).unwrap();
        let d = tree.add_node(c, 4, 1.0).unwrap();
        assert_eq!(tree.node(d).cum_prob, tree.node(c).cum_prob);
        assert_eq!(tree.node(d).cum_prob, 0.3);
    }

    #[test]
    fn add_node_rejects_bad_inputs() {
        let mut tree = Tree::new();
        assert_eq!(
            tree.add_node(NodeId(5), 0, 0.5),
            Err(TreeError::UnknownParent(5))
        );
        assert!(matches!(
            tree.add_node(NodeId::ROOT, 0, 1.5),
            Err(TreeError::ProbabilityOutOfRange(_))
        ));
        assert!(matches!(
            tree.add_node(NodeId::ROOT, 0, -0.1),
            Err(TreeError::ProbabilityOutOfRange(_))
        ));
        assert!(matches!(
            tree.add_node(NodeId::ROOT, 0, f64::NAN),
            Err(TreeError::ProbabilityOutOfRange(_))
        ));
        assert_eq!(tree.size(), 0);
    }

    #[test]
    fn star_and_chain_paths() {
        let mut star = Tree::new();
        star.add_node(NodeId::ROOT, 1, 0.6).unwrap();
        star.add_node(NodeId::ROOT, 2, 0.4).unwrap();
        let paths = star.paths();
        assert_eq!(paths.len(), 2);
        assert!(paths.iter().all(|p| p.len() == 1));

        let mut chain = Tree::new();
        let a = chain.add_node(NodeId::ROOT, 1, 0.9).unwrap();
        let b = chain.add_node(a, 2, 0.9).unwrap();
        chain.add_node(b, 3, 0.9).unwrap();
        let paths = chain.paths();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].len(), 3);
        assert_eq!(chain.size(), 3);
        assert_eq!(chain.depth(), 3);
    }

    #[test]
    fn leaves_track_mutations() {
        let mut tree = Tree::new();
        let a = tree.add_node(NodeId::ROOT, 1, 0.5).unwrap();
        assert_eq!(tree.leaves().collect::<Vec<_>>(), vec![a]);
        let b = tree.add_node(NodeId::ROOT, 2, 0.5).unwrap();
        let c = tree.add_node(a, 3, 0.5).unwrap();
        assert_eq!(tree.leaves().collect::<Vec<_>>(), vec![b, c]);
        assert_eq!(tree.path_count(), 2);
    }

    #[test]
    fn adding_never_mutates_existing_nodes() {
        let mut tree = Tree::new();
        let a = tree.add_node(NodeId::ROOT, 1, 0.25).unwrap();
        let before = tree.node(a).clone();
        tree.add_node(a, 2, 0.5).unwrap();
        tree.add_node(NodeId::ROOT, 3, 0.5).unwrap();
        assert_eq!(*tree.node(a), before);
    }

    #[test]
    fn token_path_walks_from_root() {
        let mut tree = Tree::new();
        let a = tree.add_node(NodeId::ROOT, 11, 0.5).unwrap();
        let b = tree.add_node(a, 22, 0.5).unwrap();
        assert_eq!(tree.token_path(b), vec![11, 22]);
        assert_eq!(tree.token_path(NodeId::ROOT), Vec::<TokenId>::new());
    }

    #[test]
    fn text_round_trip() {
        let mut tree = Tree::new();
        let a = tree.add_node(NodeId::ROOT, 5, 0.123456789012345).unwrap();
        tree.add_node(a, 6, 0.75).unwrap();
        tree.add_node(NodeId::ROOT, 7, 1.0 / 3.0).unwrap();
        let text = tree.to_text();
        assert!(text.starts_with("0 - -1 0 1.0\n"));
        let parsed = Tree::from_text(&text).unwrap();
        assert_eq!(parsed.size(), tree.size());
        for (orig, new) in tree.nodes().iter().zip(parsed.nodes()) {
            assert_eq!(orig.token, new.token);
            assert_eq!(orig.parent, new.parent);
            assert_eq!(orig.layer, new.layer);
            assert!((orig.draft_prob - new.draft_prob).abs() < 1e-12);
        }
    }

    #[test]
    fn from_text_reports_line_numbers() {
        let err = Tree::from_text("0 - -1 0 1.0\n1 0 3 1 0.5\n2 9 4 2 0.5\n").unwrap_err();
        match err {
            TreeError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
