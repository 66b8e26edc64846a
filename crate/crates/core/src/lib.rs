//! Speedup-maximizing draft-tree construction for speculative decoding.
//!
//! Tree-based speculative decoding verifies a branching tree of draft tokens
//! in one target-model forward pass. Bigger trees accept more tokens per pass
//! but cost more to draft and verify, and past a hardware-dependent point the
//! verification cost grows super-linearly and wall-clock speedup goes
//! negative. This crate implements the machinery to reason about that
//! trade-off without real models or GPUs:
//!
//! - [`draft_tree`]: the layered draft-tree structure with per-node draft and
//!   cumulative acceptance probabilities.
//! - [`cost_model`]: linear draft-cost and power-exponential verify-cost
//!   models, their analytic marginals, and fitting from profiling samples.
//! - [`acceptance`]: expected acceptance length of a tree and the tree-level
//!   speedup reward (autoregressive cost over speculative cost).
//! - [`policy`]: tree-construction policies — the marginal benefit–cost
//!   greedy builder, the likelihood-maximizing expand/rerank baseline, and a
//!   brute-force optimal oracle for toy instances.
//! - [`sim`]: a deterministic simulator over synthetic draft/target model
//!   pairs, with tree verification and sweep harnesses.
//!
//! Core numeric code is generic over the scalar type via [`Scalar`]; concrete
//! `f64` aliases for the main types live at the crate root. The simulator and
//! anything involving RNG streams is `f64` only so that runs are bit-for-bit
//! reproducible.

use std::fmt;

pub mod acceptance;
pub mod cost_model;
pub mod draft_tree;
pub mod policy;
pub mod sim;

/// Floating-point scalar the numeric core is generic over.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + fmt::Debug + fmt::Display + fmt::LowerExp + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub use acceptance::{expected_acceptance_length, marginal_acceptance, tree_reward, TreeReward};
pub use cost_model::{
    eval_draft_cost, eval_verify_cost, fit_draft_model, fit_verify_model, load_samples,
    marginal_spec_cost, CostError, CostModelParams, LatencySample, SampleKind,
};
pub use draft_tree::{DraftNode, DraftTree, NodeId, TokenId, TreeError};
pub use policy::{
    baseline_build, brute_force_optimal, decision_rule, smart_build, BuildConfig, BuildTrace,
    CandidateScore, DraftDistribution, LayerTrace, PolicyError, Termination,
};

/// `f64` instantiations used by the simulator and the CLI.
pub type DraftTree64 = DraftTree<f64>;
pub type CostModelParams64 = CostModelParams<f64>;
pub type TreeReward64 = TreeReward<f64>;
pub type BuildConfig64 = BuildConfig<f64>;
pub type BuildTrace64 = BuildTrace<f64>;
