//! Device-specific drafting and verification latency models.
//!
//! Drafting is memory-bound and scales linearly with the number of drafted
//! tokens: `C_draft(x) = lambda * x + beta`. Verification is compute-bound at
//! scale and is approximated by a power-exponential curve:
//! `C_verify(x) = gamma * (exp(delta * x^rho) - 1) + eta`. The bias terms
//! `beta` and `eta` are fixed to zero when fitting so both curves pass
//! through the origin.
//!
//! Fitting is deterministic and derivative-free: the linear model has a
//! closed-form through-origin slope, and the verify curve is fitted by a
//! coarse grid over `(delta, rho)` with `gamma` solved in closed form per
//! grid point, followed by golden-section refinement of `delta` and `rho`.
//! Five clean profiling points per curve are enough to reproduce it; the
//! parameter triple itself is not identifiable from so few points and callers
//! should judge a fit by its residuals, not by parameter equality.

use std::path::Path;

use thiserror::Error;

use crate::Scalar;

/// Fitted device parameters plus the autoregressive per-token cost.
///
/// Times are in milliseconds by convention; only ratios matter downstream.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CostModelParams<S> {
    /// Draft cost per drafted token.
    pub lambda: S,
    /// Draft cost intercept, fixed to 0 by fitting.
    pub beta: S,
    /// Verify curve scale.
    pub gamma: S,
    /// Verify exponent scale.
    pub delta: S,
    /// Verify exponent power.
    pub rho: S,
    /// Verify cost intercept, fixed to 0 by fitting.
    pub eta: S,
    /// Wall-clock per autoregressively decoded token on the target model.
    pub c_token: S,
}

impl<S: Scalar> CostModelParams<S> {
    pub fn new(lambda: S, gamma: S, delta: S, rho: S, c_token: S) -> Self {
        Self {
            lambda,
            beta: S::zero(),
            gamma,
            delta,
            rho,
            eta: S::zero(),
            c_token,
        }
    }

    /// Flat `key=value` text form, one parameter per line.
    pub fn to_key_value(&self) -> String {
        format!(
            "lambda={:.10e}\nbeta={:.10e}\ngamma={:.10e}\ndelta={:.10e}\nrho={:.10e}\neta={:.10e}\nc_T={:.10e}\n",
            self.lambda, self.beta, self.gamma, self.delta, self.rho, self.eta, self.c_token
        )
    }

    /// Parse the `key=value` form written by [`CostModelParams::to_key_value`].
    pub fn from_key_value(text: &str) -> Result<Self, CostError> {
        let mut fields = [None::<S>; 7];
        const KEYS: [&str; 7] = ["lambda", "beta", "gamma", "delta", "rho", "eta", "c_T"];
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CostError::Parse {
                line: idx + 1,
                reason: format!("expected key=value, got `{line}`"),
            })?;
            let slot =
                KEYS.iter()
                    .position(|k| *k == key.trim())
                    .ok_or_else(|| CostError::Parse {
                        line: idx + 1,
                        reason: format!("unknown key `{key}`"),
                    })?;
            let parsed: f64 = value.trim().parse().map_err(|_| CostError::Parse {
                line: idx + 1,
                reason: format!("bad value `{value}`"),
            })?;
            fields[slot] = S::from_f64(parsed);
        }
        let take = |i: usize| {
            fields[i].ok_or_else(|| CostError::Parse {
                line: 0,
                reason: format!("missing key `{}`", KEYS[i]),
            })
        };
        Ok(Self {
            lambda: take(0)?,
            beta: take(1)?,
            gamma: take(2)?,
            delta: take(3)?,
            rho: take(4)?,
            eta: take(5)?,
            c_token: take(6)?,
        })
    }
}

/// Which latency a profiling sample measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Draft,
    Verify,
}

/// One profiling measurement: tree size in drafted tokens and wall-clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySample<S> {
    pub kind: SampleKind,
    pub tree_size: usize,
    pub latency_ms: S,
}

#[derive(Debug, Error)]
pub enum CostError {
    #[error("degenerate fit: {0}")]
    DegenerateFit(&'static str),
    #[error("marginal cost undefined at tree size 0 for rho < 1 (rho = {rho})")]
    MarginalAtZero { rho: f64 },
    #[error("sample parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Largest exponent argument fed to `exp`: 700, or just under the scalar
/// type's own overflow point if that is lower (it is for f32). Anything above
/// saturates so costs stay finite instead of overflowing to infinity.
fn exp_arg_cap<S: Scalar>() -> S {
    let spec_cap = S::from_f64(700.0).expect("700 representable");
    spec_cap.min(S::max_value().ln() - S::from_f64(0.5).expect("margin representable"))
}

/// `exp(arg) - 1`, saturating at the cap. Returns the value and whether the
/// cap was hit.
fn exp_m1_capped<S: Scalar>(arg: S) -> (S, bool) {
    let cap = exp_arg_cap::<S>();
    if arg > cap {
        (cap.exp() - S::one(), true)
    } else {
        (arg.exp() - S::one(), false)
    }
}

/// Draft cost `lambda * tree_size + beta`.
pub fn eval_draft_cost<S: Scalar>(params: &CostModelParams<S>, tree_size: usize) -> S {
    params.lambda * S::from_usize(tree_size).expect("tree size fits scalar") + params.beta
}

/// Verify cost `gamma * (exp(delta * tree_size^rho) - 1) + eta`.
///
/// Saturates (rather than overflowing) when the exponent argument exceeds the
/// cap; use [`eval_verify_cost_flagged`] to observe saturation.
pub fn eval_verify_cost<S: Scalar>(params: &CostModelParams<S>, tree_size: usize) -> S {
    eval_verify_cost_flagged(params, tree_size).0
}

/// Verify cost plus a saturation flag. Saturated values mean the budget
/// region was misconfigured for this device; policies treat them as "never
/// expand".
pub fn eval_verify_cost_flagged<S: Scalar>(
    params: &CostModelParams<S>,
    tree_size: usize,
) -> (S, bool) {
    let x = S::from_usize(tree_size).expect("tree size fits scalar");
    let (grown, saturated) = exp_m1_capped(params.delta * x.powf(params.rho));
    (params.gamma * grown + params.eta, saturated)
}

/// Marginal speculative cost of one more drafted token at the current size:
/// `lambda + gamma * delta * rho * x^(rho-1) * exp(delta * x^rho)`.
pub fn marginal_spec_cost<S: Scalar>(
    params: &CostModelParams<S>,
    tree_size: usize,
) -> Result<S, CostError> {
    marginal_spec_cost_flagged(params, tree_size).map(|(v, _)| v)
}

/// Marginal speculative cost plus a saturation flag.
pub fn marginal_spec_cost_flagged<S: Scalar>(
    params: &CostModelParams<S>,
    tree_size: usize,
) -> Result<(S, bool), CostError> {
    if tree_size == 0 && params.rho < S::one() {
        return Err(CostError::MarginalAtZero {
            rho: params.rho.to_f64().unwrap_or(f64::NAN),
        });
    }
    let x = S::from_usize(tree_size).expect("tree size fits scalar");
    let cap = exp_arg_cap::<S>();
    let arg = (params.delta * x.powf(params.rho)).min(cap);
    let saturated = params.delta * x.powf(params.rho) > cap;
    let verify_slope = params.gamma
        * params.delta
        * params.rho
        * x.powf(params.rho - S::one())
        * arg.exp().min(cap.exp());
    Ok((params.lambda + verify_slope, saturated))
}

/// Result of fitting the linear draft-cost model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DraftFit<S> {
    pub lambda: S,
    /// Always 0; the intercept is constrained, not fitted.
    pub beta: S,
    pub rmse: S,
}

/// Result of fitting the power-exponential verify-cost model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyFit<S> {
    pub gamma: S,
    pub delta: S,
    pub rho: S,
    /// Always 0; the intercept is constrained, not fitted.
    pub eta: S,
    pub rmse: S,
    /// Set when the closed-form gamma came out negative and was clamped to 0.
    pub gamma_clamped: bool,
}

/// Least-squares slope through the origin: `lambda = sum(x*y) / sum(x^2)`.
pub fn fit_draft_model<S: Scalar>(samples: &[LatencySample<S>]) -> Result<DraftFit<S>, CostError> {
    let draft: Vec<&LatencySample<S>> = samples
        .iter()
        .filter(|s| s.kind == SampleKind::Draft)
        .collect();
    let mut sizes: Vec<usize> = draft.iter().map(|s| s.tree_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 2 {
        return Err(CostError::DegenerateFit(
            "need at least 2 draft samples with distinct sizes",
        ));
    }
    let mut xy = S::zero();
    let mut xx = S::zero();
    for s in &draft {
        let x = S::from_usize(s.tree_size).expect("tree size fits scalar");
        xy = xy + x * s.latency_ms;
        xx = xx + x * x;
    }
    let lambda = xy / xx;
    let mut sse = S::zero();
    for s in &draft {
        let x = S::from_usize(s.tree_size).expect("tree size fits scalar");
        let r = s.latency_ms - lambda * x;
        sse = sse + r * r;
    }
    let n = S::from_usize(draft.len()).expect("sample count fits scalar");
    Ok(DraftFit {
        lambda,
        beta: S::zero(),
        rmse: (sse / n).sqrt(),
    })
}

/// Sum of squared residuals of `gamma * (exp(delta * x^rho) - 1)` with the
/// scale solved in closed form. Returns the unclamped closed-form `gamma` and
/// the residual of the non-negative-clamped fit.
fn verify_sse<S: Scalar>(points: &[(S, S)], delta: S, rho: S) -> (S, S) {
    let mut gy = S::zero();
    let mut gg = S::zero();
    for &(x, y) in points {
        let (g, _) = exp_m1_capped(delta * x.powf(rho));
        gy = gy + g * y;
        gg = gg + g * g;
    }
    let gamma_raw = if gg > S::zero() { gy / gg } else { S::zero() };
    let gamma = gamma_raw.max(S::zero());
    let mut sse = S::zero();
    for &(x, y) in points {
        let (g, _) = exp_m1_capped(delta * x.powf(rho));
        let r = y - gamma * g;
        sse = sse + r * r;
    }
    (gamma_raw, sse)
}

/// Golden-section minimization of `f` over `[lo, hi]`.
fn golden_section<S: Scalar>(mut f: impl FnMut(S) -> S, lo: S, hi: S) -> S {
    let phi = S::from_f64(0.618_033_988_749_894_9).expect("phi representable");
    let mut a = lo;
    let mut b = hi;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..48 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

const DELTA_GRID: usize = 64;
const RHO_GRID: usize = 40;
const DELTA_LO: f64 = 1e-4;
const DELTA_HI: f64 = 1.0;
const RHO_LO: f64 = 0.3;
const RHO_HI: f64 = 2.0;

/// Fit the verify-cost curve. Outer grid over `(delta, rho)` — log-spaced in
/// `delta`, linear in `rho` — with the closed-form scale per point, then three
/// rounds of golden-section refinement on each of `delta` and `rho` over one
/// grid cell around the incumbent.
pub fn fit_verify_model<S: Scalar>(
    samples: &[LatencySample<S>],
) -> Result<VerifyFit<S>, CostError> {
    let points: Vec<(S, S)> = samples
        .iter()
        .filter(|s| s.kind == SampleKind::Verify)
        .map(|s| {
            (
                S::from_usize(s.tree_size).expect("tree size fits scalar"),
                s.latency_ms,
            )
        })
        .collect();
    let mut sizes: Vec<usize> = samples
        .iter()
        .filter(|s| s.kind == SampleKind::Verify && s.tree_size > 0)
        .map(|s| s.tree_size)
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 4 {
        return Err(CostError::DegenerateFit(
            "need at least 4 verify samples with distinct positive sizes",
        ));
    }

    let ln_lo = DELTA_LO.ln();
    let ln_step = (DELTA_HI.ln() - ln_lo) / (DELTA_GRID - 1) as f64;
    let rho_step = (RHO_HI - RHO_LO) / (RHO_GRID - 1) as f64;

    let mut best = (S::infinity(), S::zero(), S::zero(), S::zero());
    for i in 0..DELTA_GRID {
        let delta = S::from_f64((ln_lo + ln_step * i as f64).exp()).expect("grid point");
        for j in 0..RHO_GRID {
            let rho = S::from_f64(RHO_LO + rho_step * j as f64).expect("grid point");
            let (gamma, sse) = verify_sse(&points, delta, rho);
            if sse < best.0 {
                best = (sse, gamma, delta, rho);
            }
        }
    }
    let (_, _, mut delta, mut rho) = best;

    // Local refinement: golden-section on delta (log-space, one grid cell to
    // either side) with rho line-minimized inside each evaluation, then
    // golden-section on rho. The nesting matters because the two parameters
    // trade off along a diagonal valley that plain coordinate descent crawls
    // through.
    let ln_step_s = S::from_f64(ln_step).expect("step");
    let rho_lo = S::from_f64(RHO_LO).expect("bound");
    let rho_hi = S::from_f64(RHO_HI).expect("bound");
    for _ in 0..3 {
        let ln_delta = delta.ln();
        let best_rho_for =
            |ld: S| golden_section(|r| verify_sse(&points, ld.exp(), r).1, rho_lo, rho_hi);
        let ln_best = golden_section(
            |ld| {
                let r = best_rho_for(ld);
                verify_sse(&points, ld.exp(), r).1
            },
            ln_delta - ln_step_s,
            ln_delta + ln_step_s,
        );
        delta = ln_best.exp();
        rho = golden_section(|r| verify_sse(&points, delta, r).1, rho_lo, rho_hi);
    }

    let (gamma_raw, sse) = verify_sse(&points, delta, rho);
    let gamma_clamped = gamma_raw < S::zero();
    let gamma = gamma_raw.max(S::zero());
    let n = S::from_usize(points.len()).expect("sample count fits scalar");
    Ok(VerifyFit {
        gamma,
        delta,
        rho,
        eta: S::zero(),
        rmse: (sse / n).sqrt(),
        gamma_clamped,
    })
}

/// Parse a profiling CSV with header `kind,tree_size,latency_ms`.
pub fn load_samples<S: Scalar>(path: &Path) -> Result<Vec<LatencySample<S>>, CostError> {
    let text = std::fs::read_to_string(path)?;
    parse_samples(&text)
}

/// Parse profiling CSV text; see [`load_samples`].
pub fn parse_samples<S: Scalar>(text: &str) -> Result<Vec<LatencySample<S>>, CostError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| CostError::Parse {
        line: 1,
        reason: "empty file".into(),
    })?;
    if header.trim() != "kind,tree_size,latency_ms" {
        return Err(CostError::Parse {
            line: 1,
            reason: format!("expected header `kind,tree_size,latency_ms`, got `{header}`"),
        });
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(CostError::Parse {
                line: line_no,
                reason: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let kind = match fields[0] {
            "draft" => SampleKind::Draft,
            "verify" => SampleKind::Verify,
            other => {
                return Err(CostError::Parse {
                    line: line_no,
                    reason: format!("unknown kind `{other}`"),
                })
            }
        };
        let tree_size: usize = fields[1].parse().map_err(|_| CostError::Parse {
            line: line_no,
            reason: format!("bad tree_size `{}`", fields[1]),
        })?;
        let latency: f64 = fields[2].parse().map_err(|_| CostError::Parse {
            line: line_no,
            reason: format!("bad latency_ms `{}`", fields[2]),
        })?;
        if !latency.is_finite() || latency < 0.0 {
            return Err(CostError::Parse {
                line: line_no,
                reason: format!("latency_ms must be finite and non-negative, got {latency}"),
            });
        }
        out.push(LatencySample {
            kind,
            tree_size,
            latency_ms: S::from_f64(latency).expect("latency fits scalar"),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: f64, gamma: f64, delta: f64, rho: f64, c_token: f64) -> CostModelParams<f64> {
        CostModelParams::new(lambda, gamma, delta, rho, c_token)
    }

    #[test]
    fn draft_cost_is_linear() {
        let p = params(2.0, 0.0, 0.0, 1.0, 1.0);
        assert_eq!(eval_draft_cost(&p, 10), 20.0);
        let zero = params(0.0, 0.0, 0.0, 1.0, 1.0);
        assert_eq!(eval_draft_cost(&zero, 37), 0.0);
        let p = params(0.35, 0.0, 0.0, 1.0, 1.0);
        assert!((eval_draft_cost(&p, 60) - 21.0).abs() < 1e-12);
    }

    #[test]
    fn verify_cost_closed_forms() {
        // delta = 0 kills the exponential term
        let p = CostModelParams {
            eta: 0.25,
            ..params(0.0, 3.0, 0.0, 1.0, 1.0)
        };
        assert_eq!(eval_verify_cost(&p, 50), 0.25);
        // gamma=1, delta=1, rho=1, x=1 -> e - 1
        let p = params(0.0, 1.0, 1.0, 1.0, 1.0);
        assert!((eval_verify_cost(&p, 1) - (1f64.exp() - 1.0)).abs() < 1e-12);
        // origin constraint with beta = eta = 0
        let p = params(1.0, 2.0, 0.3, 1.2, 1.0);
        assert_eq!(eval_verify_cost(&p, 0), 0.0);
        assert_eq!(eval_draft_cost(&p, 0), 0.0);
    }

    #[test]
    fn verify_cost_saturates_instead_of_overflowing() {
        let p = params(0.0, 1.0, 10.0, 2.0, 1.0);
        let (cost, saturated) = eval_verify_cost_flagged(&p, 1000);
        assert!(saturated);
        assert!(cost.is_finite());
        // monotone: the saturated value is an upper plateau
        assert!(eval_verify_cost(&p, 500) <= cost);
    }

    #[test]
    fn marginal_cost_closed_forms() {
        // rho = 1: lambda + gamma * delta * exp(delta x)
        let p = params(0.5, 2.0, 0.1, 1.0, 1.0);
        let expect = 0.5 + 2.0 * 0.1 * (0.1f64 * 12.0).exp();
        assert!((marginal_spec_cost(&p, 12).unwrap() - expect).abs() < 1e-12);
        // gamma = 0: pure linear model
        let p = params(0.7, 0.0, 0.3, 0.8, 1.0);
        assert_eq!(marginal_spec_cost(&p, 5).unwrap(), 0.7);
        // singular at x = 0 when rho < 1
        let p = params(0.1, 1.0, 0.1, 0.5, 1.0);
        assert!(matches!(
            marginal_spec_cost(&p, 0),
            Err(CostError::MarginalAtZero { .. })
        ));
        // fine at x = 0 when rho >= 1
        let p = params(0.1, 1.0, 0.1, 1.0, 1.0);
        assert!((marginal_spec_cost(&p, 0).unwrap() - (0.1 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn marginal_matches_central_difference() {
        // continuous-x evaluation of the speculative cost, test-local oracle
        let c_spec = |p: &CostModelParams<f64>, x: f64| {
            p.lambda * x + p.beta + p.gamma * ((p.delta * x.powf(p.rho)).exp() - 1.0) + p.eta
        };
        for &lambda in &[0.0, 0.2, 1.0] {
            for &gamma in &[0.1, 1.0, 4.0] {
                for &delta in &[0.01, 0.05] {
                    for &rho in &[0.8, 1.0, 1.2, 1.5] {
                        let p = params(lambda, gamma, delta, rho, 1.0);
                        for x in (2usize..=60).step_by(2) {
                            let diff = c_spec(&p, x as f64 + 0.5) - c_spec(&p, x as f64 - 0.5);
                            let analytic = marginal_spec_cost(&p, x).unwrap();
                            assert!(
                                (analytic - diff).abs() <= 0.02 * diff.abs(),
                                "lambda={lambda} gamma={gamma} delta={delta} rho={rho} x={x}: {analytic} vs {diff}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn verify_cost_is_monotone_in_tree_size() {
        let mut state = 0x2545_F491_4F6C_DD1Du64;
        let mut next = move || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let p = params(next(), 4.0 * next(), 0.2 * next(), 0.3 + 1.7 * next(), 1.0);
            let mut prev = eval_verify_cost(&p, 0);
            for x in 1..=128 {
                let cur = eval_verify_cost(&p, x);
                assert!(cur >= prev, "non-monotone at x={x} for {p:?}");
                prev = cur;
            }
        }
    }

    #[test]
    fn marginal_positive_when_model_nontrivial() {
        let p = params(0.01, 0.0, 0.0, 1.0, 1.0);
        assert!(marginal_spec_cost(&p, 3).unwrap() > 0.0);
        let p = params(0.0, 0.5, 0.2, 1.1, 1.0);
        assert!(marginal_spec_cost(&p, 3).unwrap() > 0.0);
    }

    #[test]
    fn marginal_telescopes_to_cost_difference() {
        // summing per-token marginals should track C_spec(n) - C_spec(0)
        for &rho in &[0.8, 1.0, 1.2, 1.5] {
            for &delta in &[0.01, 0.03] {
                let n = 40usize;
                let p = params(0.2, 1.5, delta, rho, 1.0);
                if p.delta * (n as f64).powf(rho) > 5.0 {
                    continue;
                }
                let mut summed = 0.0;
                for x in 1..=n {
                    summed += marginal_spec_cost(&p, x).unwrap();
                }
                let total = eval_draft_cost(&p, n) + eval_verify_cost(&p, n)
                    - (eval_draft_cost(&p, 0) + eval_verify_cost(&p, 0));
                assert!(
                    (summed - total).abs() <= 0.05 * total.abs(),
                    "rho={rho} delta={delta}: {summed} vs {total}"
                );
            }
        }
    }

    #[test]
    fn draft_fit_recovers_exact_slope() {
        let mk = |x: usize, y: f64| LatencySample {
            kind: SampleKind::Draft,
            tree_size: x,
            latency_ms: y,
        };
        let fit = fit_draft_model(&[mk(1, 3.0), mk(2, 6.0), mk(5, 15.0)]).unwrap();
        assert!((fit.lambda - 3.0).abs() < 1e-12);
        assert!(fit.rmse < 1e-12);
        let fit = fit_draft_model(&[mk(1, 2.0), mk(2, 4.0), mk(3, 6.0)]).unwrap();
        assert!((fit.lambda - 2.0).abs() < 1e-12);
    }

    #[test]
    fn draft_fit_rejects_degenerate_input() {
        let mk = |x: usize, y: f64| LatencySample {
            kind: SampleKind::Draft,
            tree_size: x,
            latency_ms: y,
        };
        assert!(matches!(
            fit_draft_model(&[mk(0, 0.0), mk(0, 0.1)]),
            Err(CostError::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_draft_model(&[mk(4, 1.0), mk(4, 1.1), mk(4, 0.9)]),
            Err(CostError::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_draft_model(&[mk(4, 1.0)]),
            Err(CostError::DegenerateFit(_))
        ));
    }

    #[test]
    fn verify_fit_reproduces_clean_curve() {
        let truth = params(0.0, 0.5, 0.05, 1.2, 1.0);
        let samples: Vec<LatencySample<f64>> = [8usize, 16, 32, 48, 64]
            .iter()
            .map(|&x| LatencySample {
                kind: SampleKind::Verify,
                tree_size: x,
                latency_ms: eval_verify_cost(&truth, x),
            })
            .collect();
        let fit = fit_verify_model(&samples).unwrap();
        let fitted = params(0.0, fit.gamma, fit.delta, fit.rho, 1.0);
        for s in &samples {
            let predicted = eval_verify_cost(&fitted, s.tree_size);
            assert!(
                (predicted - s.latency_ms).abs() <= 0.01 * s.latency_ms,
                "x={}: predicted {predicted}, measured {}",
                s.tree_size,
                s.latency_ms
            );
        }
        assert!(!fit.gamma_clamped);
    }

    #[test]
    fn verify_fit_beats_constant_model_on_linear_data() {
        let samples: Vec<LatencySample<f64>> = [4usize, 10, 20, 35, 50]
            .iter()
            .map(|&x| LatencySample {
                kind: SampleKind::Verify,
                tree_size: x,
                latency_ms: 0.8 * x as f64,
            })
            .collect();
        let fit = fit_verify_model(&samples).unwrap();
        // best constant model is the mean; compute its rmse directly
        let mean = samples.iter().map(|s| s.latency_ms).sum::<f64>() / samples.len() as f64;
        let const_rmse = (samples
            .iter()
            .map(|s| (s.latency_ms - mean).powi(2))
            .sum::<f64>()
            / samples.len() as f64)
            .sqrt();
        assert!(
            fit.rmse <= const_rmse,
            "fit rmse {} vs constant {}",
            fit.rmse,
            const_rmse
        );
    }

    #[test]
    fn verify_fit_rejects_degenerate_input() {
        let samples = vec![
            LatencySample {
                kind: SampleKind::Verify,
                tree_size: 16,
                latency_ms: 2.0f64
            };
            6
        ];
        assert!(matches!(
            fit_verify_model(&samples),
            Err(CostError::DegenerateFit(_))
        ));
    }

    #[test]
    fn sample_csv_parses_and_validates() {
        let samples: Vec<LatencySample<f64>> =
            parse_samples("kind,tree_size,latency_ms\ndraft,10,3.5\nverify,20,7.25\n").unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].kind, SampleKind::Draft);
        assert_eq!(samples[0].tree_size, 10);
        assert_eq!(samples[1].latency_ms, 7.25);

        let empty: Vec<LatencySample<f64>> = parse_samples("kind,tree_size,latency_ms\n").unwrap();
        assert!(empty.is_empty());

        let err = parse_samples::<f64>("kind,tree_size,latency_ms\ndraft,10,-1.0\n").unwrap_err();
        match err {
            CostError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_samples::<f64>("kind,tree_size,latency_ms\nwarmup,10,1.0\n").unwrap_err();
        assert!(matches!(err, CostError::Parse { line: 2, .. }));
    }

    #[test]
    fn params_file_round_trip() {
        let p = params(0.35, 1.25, 0.0123456789, 1.1, 8.5);
        let text = p.to_key_value();
        let back = CostModelParams::<f64>::from_key_value(&text).unwrap();
        assert!((back.lambda - p.lambda).abs() < 1e-9);
        assert!((back.delta - p.delta).abs() < 1e-11);
        assert!((back.c_token - p.c_token).abs() < 1e-9);
        assert!(CostModelParams::<f64>::from_key_value("lambda=1.0\n").is_err());
    }
}
