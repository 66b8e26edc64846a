//! Deterministic speculative-decoding simulator.
//!
//! Synthetic draft/target pairs with a tunable agreement knob, tree
//! verification in greedy-match or stochastic (speculative-sampling) mode,
//! modeled wall-clock from the device cost models, and sweep harnesses over
//! batch size, verification budget, and the benefit discount.

mod decode;
mod model;
mod rng;
mod verify;

pub use decode::{
    initial_context, reports_to_csv, run_decode, run_decode_with_steps, run_sweep,
    sweep_to_long_csv, PolicyKind, SimConfig, SimError, SimReport, StepOutcome, SweepAxis,
    REPORT_CSV_HEADER,
};
pub use model::{
    build_models, ContextualDraft, DraftModel, SyntheticModelPair, TargetModel, TokenDistribution,
};
pub use rng::KeyedRng;
pub use verify::{verify_tree, AcceptanceMode};
