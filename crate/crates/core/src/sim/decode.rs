//! End-to-end decoding simulation and sweep harnesses.
//!
//! A run decodes `num_sequences` independent sequences to `generation_length`
//! tokens each. Per step: build a tree with the configured policy, verify it
//! against the target model, commit the accepted tokens plus the one bonus
//! token every verification pass yields, and charge modeled wall-clock from
//! the device cost models. The autoregressive reference cost for the same
//! token count is `c_token * tokens`.
//!
//! Batching is modeled through two effects: the per-sequence budget
//! `B = b_verify / batch_size` that the greedy policy builds against, and the
//! verification charge, which is evaluated at the batch-aggregate drafted
//! token count `batch_size * |T|` and split evenly across the batch. That
//! aggregate charge is what makes oversized fixed trees collapse at large
//! batch sizes while budget-aware trees stay in the cheap region of the
//! curve. With batch size 1 it reduces to the plain per-tree verify cost.
//!
//! Everything is keyed off the run seed; repeated runs are bit-identical.

use serde::Serialize;
use thiserror::Error;

use crate::cost_model::{eval_draft_cost, eval_verify_cost, CostModelParams};
use crate::draft_tree::TokenId;
use crate::policy::{baseline_build, smart_build, BuildConfig, PolicyError};

use super::model::{build_models, ContextualDraft, SyntheticModelPair};
use super::rng::KeyedRng;
use super::verify::{verify_tree, AcceptanceMode};

const TAG_CONTEXT: u64 = 0xC07E;
const TAG_STEP: u64 = 0x57E9;

/// Which construction policy a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Smart,
    Baseline,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Smart => "smart",
            PolicyKind::Baseline => "baseline",
        }
    }
}

/// Full configuration of one simulated decoding run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub model: SyntheticModelPair,
    pub params: CostModelParams<f64>,
    pub build: BuildConfig<f64>,
    pub policy: PolicyKind,
    pub generation_length: usize,
    pub num_sequences: usize,
    pub acceptance_mode: AcceptanceMode,
    pub seed: u64,
}

/// One verification step's bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepOutcome {
    pub tree_size: usize,
    /// Drafted tokens committed this step; the step emits `accepted + 1`
    /// tokens in total (the bonus token guarantees progress).
    pub accepted: usize,
    pub modeled_draft_ms: f64,
    pub modeled_verify_ms: f64,
}

/// Aggregate result of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub policy: String,
    pub batch: usize,
    pub budget: usize,
    pub alpha: f64,
    pub tokens: usize,
    pub spec_ms: f64,
    pub ar_ms: f64,
    pub speedup: f64,
    /// Fraction of drafted tokens accepted; the bonus token is not drafted
    /// and does not count.
    pub beta: f64,
    pub mean_tree_size: f64,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Starting context for a sequence: `order` tokens drawn from the run seed.
pub fn initial_context(model: &SyntheticModelPair, seed: u64, sequence: usize) -> Vec<TokenId> {
    let mut rng = KeyedRng::from_key(&[seed, TAG_CONTEXT, sequence as u64]);
    (0..model.order.max(1))
        .map(|_| rng.below(model.vocab_size as u64) as TokenId)
        .collect()
}

fn validate(config: &SimConfig) -> Result<(), SimError> {
    config.model.validate().map_err(SimError::InvalidConfig)?;
    config.build.validate()?;
    if config.generation_length == 0 {
        return Err(SimError::InvalidConfig(
            "generation_length must be at least 1".into(),
        ));
    }
    if config.num_sequences == 0 {
        return Err(SimError::InvalidConfig(
            "num_sequences must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Run one config and return the aggregate report.
pub fn run_decode(config: &SimConfig) -> Result<SimReport, SimError> {
    run_decode_with_steps(config).map(|(report, _)| report)
}

/// Run one config, also returning every step outcome in order.
pub fn run_decode_with_steps(
    config: &SimConfig,
) -> Result<(SimReport, Vec<StepOutcome>), SimError> {
    validate(config)?;
    let (target, draft) = build_models(&config.model);
    let batch = config.build.batch_size;
    let batch_f = batch as f64;

    let mut outcomes = Vec::new();
    let mut total_tokens = 0usize;
    let mut total_spec_ms = 0.0f64;
    let mut total_accepted = 0usize;
    let mut total_drafted = 0usize;

    for seq in 0..config.num_sequences {
        let mut context = initial_context(&config.model, config.seed, seq);
        let mut remaining = config.generation_length;
        let mut step = 0u64;

        while remaining > 0 {
            let adapter = ContextualDraft {
                model: &draft,
                context: &context,
            };
            let tree = match config.policy {
                PolicyKind::Smart => smart_build(&adapter, &config.params, &config.build)?.0,
                PolicyKind::Baseline => baseline_build(&adapter, &config.build)?,
            };
            let mut step_rng = KeyedRng::from_key(&[config.seed, TAG_STEP, seq as u64, step]);
            let (accepted_nodes, bonus) = verify_tree(
                &tree,
                &target,
                &draft,
                &context,
                config.acceptance_mode,
                &mut step_rng,
            );

            // the final step is truncated so the sequence emits exactly
            // generation_length tokens
            let emit = (accepted_nodes.len() + 1).min(remaining);
            let accepted_used = emit - 1;
            for &node in accepted_nodes.iter().take(accepted_used) {
                context.push(tree.node(node).token);
            }
            let last = if accepted_used < accepted_nodes.len() {
                tree.node(accepted_nodes[accepted_used]).token
            } else {
                bonus
            };
            context.push(last);

            let tree_size = tree.size();
            let draft_ms = eval_draft_cost(&config.params, tree_size);
            let verify_ms = eval_verify_cost(&config.params, batch * tree_size) / batch_f;
            outcomes.push(StepOutcome {
                tree_size,
                accepted: accepted_used,
                modeled_draft_ms: draft_ms,
                modeled_verify_ms: verify_ms,
            });
            total_tokens += emit;
            total_spec_ms += draft_ms + verify_ms;
            total_accepted += accepted_used;
            total_drafted += tree_size;
            remaining -= emit;
            step += 1;
        }
    }

    let ar_ms = config.params.c_token * total_tokens as f64;
    let steps = outcomes.len().max(1);
    let report = SimReport {
        policy: config.policy.name().to_string(),
        batch,
        budget: config.build.b_verify,
        alpha: config.build.alpha,
        tokens: total_tokens,
        spec_ms: total_spec_ms,
        ar_ms,
        speedup: if total_spec_ms > 0.0 {
            ar_ms / total_spec_ms
        } else {
            0.0
        },
        beta: if total_drafted > 0 {
            total_accepted as f64 / total_drafted as f64
        } else {
            0.0
        },
        mean_tree_size: total_drafted as f64 / steps as f64,
    };
    Ok((report, outcomes))
}

/// Which config field a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Batch,
    Budget,
    Alpha,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Batch => "batch",
            SweepAxis::Budget => "budget",
            SweepAxis::Alpha => "alpha",
        }
    }
}

fn config_at(base: &SimConfig, axis: SweepAxis, value: f64) -> Result<SimConfig, SimError> {
    let mut config = *base;
    match axis {
        SweepAxis::Batch => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(SimError::InvalidConfig(format!(
                    "batch values must be positive integers, got {value}"
                )));
            }
            config.build.batch_size = value as usize;
        }
        SweepAxis::Budget => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(SimError::InvalidConfig(format!(
                    "budget values must be positive integers, got {value}"
                )));
            }
            config.build.b_verify = value as usize;
        }
        SweepAxis::Alpha => {
            if !(value > 0.0 && value <= 1.0) {
                return Err(SimError::InvalidConfig(format!(
                    "alpha values must be in (0, 1], got {value}"
                )));
            }
            config.build.alpha = value;
        }
    }
    Ok(config)
}

/// Run both policies at every axis value with shared seeds.
///
/// The budget-aware policy sees the batch through its per-sequence budget
/// `B = b_verify / batch_size`; the baseline's `(k, d, g)` tree shape never
/// reacts. Both pay verification at the batch-aggregate token count. Sweep
/// points execute in parallel; output order follows the declared value order.
pub fn run_sweep(
    base: &SimConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<(SimReport, SimReport)>, SimError> {
    let mut jobs: Vec<SimConfig> = Vec::with_capacity(values.len() * 2);
    for &value in values {
        let at = config_at(base, axis, value)?;
        jobs.push(SimConfig {
            policy: PolicyKind::Smart,
            ..at
        });
        jobs.push(SimConfig {
            policy: PolicyKind::Baseline,
            ..at
        });
    }

    let reports: Vec<Result<SimReport, SimError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|config| scope.spawn(move || run_decode(config)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });

    let mut out = Vec::with_capacity(values.len());
    let mut iter = reports.into_iter();
    while let (Some(smart), Some(baseline)) = (iter.next(), iter.next()) {
        out.push((smart?, baseline?));
    }
    Ok(out)
}

/// CSV header shared by all report files.
pub const REPORT_CSV_HEADER: &str =
    "policy,batch,budget,alpha,tokens,spec_ms,ar_ms,speedup,beta,mean_tree_size";

/// Render reports as CSV, header included.
pub fn reports_to_csv(reports: &[SimReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.policy,
            r.batch,
            r.budget,
            r.alpha,
            r.tokens,
            r.spec_ms,
            r.ar_ms,
            r.speedup,
            r.beta,
            r.mean_tree_size
        ));
    }
    out
}

/// Plot-ready long format: one row per (axis value, policy, metric).
pub fn sweep_to_long_csv(
    axis: SweepAxis,
    values: &[f64],
    pairs: &[(SimReport, SimReport)],
) -> String {
    let mut out = String::from("axis,value,policy,metric,metric_value\n");
    for (&value, (smart, baseline)) in values.iter().zip(pairs) {
        for report in [smart, baseline] {
            for (metric, metric_value) in [
                ("speedup", report.speedup),
                ("beta", report.beta),
                ("mean_tree_size", report.mean_tree_size),
            ] {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    axis.name(),
                    value,
                    report.policy,
                    metric,
                    metric_value
                ));
            }
        }
    }
    out
}
