//! Command-line frontend: fit device cost models from profiling samples,
//! build single draft trees, and run decoding simulations and sweeps.
//!
//! Every run writes a manifest next to its outputs recording the resolved
//! configuration, so any artifact can be reproduced byte-for-byte. Exit
//! codes: 0 success, 2 usage or config error, 3 data error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use spectree_core::cost_model::{self, SampleKind};
use spectree_core::policy;
use spectree_core::sim::{
    self, initial_context, ContextualDraft, PolicyKind, SimConfig, SweepAxis,
};
use spectree_core::CostModelParams64;

use config::{RawConfig, RunManifest};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(
    name = "spectree",
    version,
    about = "Speedup-maximizing draft-tree construction: cost-model fitting, tree building, and decoding simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Smart,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Batch,
    Budget,
    Alpha,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Batch => SweepAxis::Batch,
            AxisArg::Budget => SweepAxis::Budget,
            AxisArg::Alpha => SweepAxis::Alpha,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the draft and verify cost models from a profiling CSV.
    Fit {
        /// Profiling samples, header `kind,tree_size,latency_ms`.
        #[arg(long)]
        samples: PathBuf,
        /// Output fitted-parameter file.
        #[arg(long)]
        out: PathBuf,
        /// Autoregressive per-token cost to record alongside the fits
        /// (not derivable from the profiling samples).
        #[arg(long = "c-t", default_value_t = 1.0)]
        c_t: f64,
    },
    /// Build one draft tree against the configured synthetic distribution.
    Build {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Override the configured maximum depth.
        #[arg(long)]
        d: Option<u32>,
        /// Override the configured run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output tree file (line-oriented text format).
        #[arg(long)]
        out: PathBuf,
        /// Build-trace output (JSON lines, one record per layer); ignored for
        /// the baseline policy, which has no admission trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run one decoding simulation and write report CSV/JSON.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output prefix; writes `<out>.csv`, `<out>.json`, `<out>.manifest.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one axis, running both policies per value with shared seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output prefix; writes `<out>.csv`, `<out>_long.csv`, `<out>.json`,
        /// `<out>.manifest.json`.
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure tagged with the exit code it should produce.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error,
    }
}

fn data(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_DATA,
        error,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Fit { samples, out, c_t } => cmd_fit(&samples, &out, c_t),
        Command::Build {
            config,
            params,
            policy,
            d,
            seed,
            out,
            trace,
        } => cmd_build(&config, &params, policy, d, seed, &out, trace.as_deref()),
        Command::Simulate {
            config,
            params,
            policy,
            seed,
            out,
        } => cmd_simulate(&config, &params, policy, seed, &out),
        Command::Sweep {
            config,
            params,
            axis,
            values,
            seed,
            out,
        } => cmd_sweep(&config, &params, axis.into(), &values, seed, &out),
    }
}

fn load_params(path: &Path) -> Result<CostModelParams64, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading params `{}`", path.display()))
        .map_err(usage)?;
    CostModelParams64::from_key_value(&text).map_err(|e| data(anyhow!(e)))
}

fn resolve_config(
    config_path: &Path,
    params: CostModelParams64,
    policy: Option<PolicyArg>,
    seed: Option<u64>,
) -> Result<SimConfig, Failure> {
    let raw = RawConfig::load(config_path).map_err(usage)?;
    let mut config = raw.to_sim_config(params).map_err(usage)?;
    if let Some(policy) = policy {
        config.policy = match policy {
            PolicyArg::Smart => PolicyKind::Smart,
            PolicyArg::Baseline => PolicyKind::Baseline,
        };
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .with_context(|| format!("writing `{}`", path.display()))
        .map_err(data)
}

fn cmd_fit(samples_path: &Path, out: &Path, c_t: f64) -> Result<(), Failure> {
    if !samples_path.exists() {
        return Err(usage(anyhow!(
            "samples file `{}` not found",
            samples_path.display()
        )));
    }
    let samples: Vec<cost_model::LatencySample<f64>> =
        cost_model::load_samples(samples_path).map_err(|e| data(anyhow!(e)))?;
    for kind in [SampleKind::Draft, SampleKind::Verify] {
        if !samples.iter().any(|s| s.kind == kind) {
            let name = match kind {
                SampleKind::Draft => "draft",
                SampleKind::Verify => "verify",
            };
            return Err(usage(anyhow!(
                "no `{name}` samples in `{}`",
                samples_path.display()
            )));
        }
    }
    if !c_t.is_finite() || c_t <= 0.0 {
        return Err(usage(anyhow!("--c-t must be positive, got {c_t}")));
    }

    let draft_fit = cost_model::fit_draft_model(&samples).map_err(|e| data(anyhow!(e)))?;
    let verify_fit = cost_model::fit_verify_model(&samples).map_err(|e| data(anyhow!(e)))?;
    if verify_fit.gamma_clamped {
        eprintln!("warning: fitted gamma was negative and has been clamped to 0");
    }
    let params = CostModelParams64 {
        lambda: draft_fit.lambda,
        beta: draft_fit.beta,
        gamma: verify_fit.gamma,
        delta: verify_fit.delta,
        rho: verify_fit.rho,
        eta: verify_fit.eta,
        c_token: c_t,
    };
    write_file(out, &params.to_key_value())?;
    println!(
        "draft fit:  lambda = {:.6}  rmse = {:.6e}",
        draft_fit.lambda, draft_fit.rmse
    );
    println!(
        "verify fit: gamma = {:.6}  delta = {:.6}  rho = {:.6}  rmse = {:.6e}",
        verify_fit.gamma, verify_fit.delta, verify_fit.rho, verify_fit.rmse
    );
    println!("c_T = {c_t} (from --c-t)");
    println!("wrote {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_build(
    config_path: &Path,
    params_path: &Path,
    policy: Option<PolicyArg>,
    d_override: Option<u32>,
    seed: Option<u64>,
    out: &Path,
    trace_out: Option<&Path>,
) -> Result<(), Failure> {
    let params = load_params(params_path)?;
    let mut config = resolve_config(config_path, params, policy, seed)?;
    if let Some(d) = d_override {
        config.build.d = d;
    }
    config.build.validate().map_err(|e| usage(anyhow!(e)))?;
    config.model.validate().map_err(|e| usage(anyhow!(e)))?;

    let (_, draft) = sim::build_models(&config.model);
    let context = initial_context(&config.model, config.seed, 0);
    let adapter = ContextualDraft {
        model: &draft,
        context: &context,
    };

    let mut outputs = vec![out.display().to_string()];
    match config.policy {
        PolicyKind::Smart => {
            let (tree, trace) = policy::smart_build(&adapter, &config.params, &config.build)
                .map_err(|e| data(anyhow!(e)))?;
            write_file(out, &tree.to_text())?;
            println!(
                "smart tree: {} nodes, depth {}, {} paths, termination {:?}",
                tree.size(),
                tree.depth(),
                tree.path_count(),
                trace.termination
            );
            if let Some(trace_path) = trace_out {
                write_file(trace_path, &trace.to_json_lines())?;
                outputs.push(trace_path.display().to_string());
            }
        }
        PolicyKind::Baseline => {
            let tree =
                policy::baseline_build(&adapter, &config.build).map_err(|e| data(anyhow!(e)))?;
            write_file(out, &tree.to_text())?;
            println!(
                "baseline tree: {} nodes, depth {}, {} paths",
                tree.size(),
                tree.depth(),
                tree.path_count()
            );
        }
    }

    let config_str = config_path.display().to_string();
    let params_str = params_path.display().to_string();
    RunManifest {
        command: "build",
        config_path: Some(&config_str),
        params_path: Some(&params_str),
        resolved_config: Some(&config),
        seed: Some(config.seed),
        outputs,
        tool_version: env!("CARGO_PKG_VERSION"),
    }
    .write(&manifest_path_for(out))
    .map_err(data)?;
    Ok(())
}

fn cmd_simulate(
    config_path: &Path,
    params_path: &Path,
    policy: Option<PolicyArg>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let params = load_params(params_path)?;
    let config = resolve_config(config_path, params, policy, seed)?;
    let report = sim::run_decode(&config).map_err(map_sim_error)?;

    let csv_path = out.with_extension("csv");
    let json_path = out.with_extension("json");
    write_file(
        &csv_path,
        &sim::reports_to_csv(std::slice::from_ref(&report)),
    )?;
    write_file(
        &json_path,
        &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
    )?;

    println!(
        "{:<10} batch {:>3}  budget {:>4}  alpha {:.2}  speedup {:>6.2}  beta {:.3}  mean tree {:.1}",
        report.policy,
        report.batch,
        report.budget,
        report.alpha,
        report.speedup,
        report.beta,
        report.mean_tree_size
    );

    let config_str = config_path.display().to_string();
    let params_str = params_path.display().to_string();
    RunManifest {
        command: "simulate",
        config_path: Some(&config_str),
        params_path: Some(&params_str),
        resolved_config: Some(&config),
        seed: Some(config.seed),
        outputs: vec![
            csv_path.display().to_string(),
            json_path.display().to_string(),
        ],
        tool_version: env!("CARGO_PKG_VERSION"),
    }
    .write(&manifest_path_for(out))
    .map_err(data)?;
    Ok(())
}

fn cmd_sweep(
    config_path: &Path,
    params_path: &Path,
    axis: SweepAxis,
    values: &[f64],
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let params = load_params(params_path)?;
    let config = resolve_config(config_path, params, None, seed)?;
    let pairs = sim::run_sweep(&config, axis, values).map_err(map_sim_error)?;

    let mut flat = Vec::with_capacity(pairs.len() * 2);
    for (smart, baseline) in &pairs {
        flat.push(smart.clone());
        flat.push(baseline.clone());
    }
    let csv_path = out.with_extension("csv");
    let long_path = long_csv_path(out);
    let json_path = out.with_extension("json");
    write_file(&csv_path, &sim::reports_to_csv(&flat))?;
    write_file(&long_path, &sim::sweep_to_long_csv(axis, values, &pairs))?;
    write_file(
        &json_path,
        &(serde_json::to_string_pretty(&flat).expect("reports serialize") + "\n"),
    )?;

    println!("{:>8}  {:>12}  {:>12}", axis.name(), "smart", "baseline");
    for (value, (smart, baseline)) in values.iter().zip(&pairs) {
        println!(
            "{value:>8}  {:>12.2}  {:>12.2}",
            smart.speedup, baseline.speedup
        );
    }

    let config_str = config_path.display().to_string();
    let params_str = params_path.display().to_string();
    RunManifest {
        command: "sweep",
        config_path: Some(&config_str),
        params_path: Some(&params_str),
        resolved_config: Some(&config),
        seed: Some(config.seed),
        outputs: vec![
            csv_path.display().to_string(),
            long_path.display().to_string(),
            json_path.display().to_string(),
        ],
        tool_version: env!("CARGO_PKG_VERSION"),
    }
    .write(&manifest_path_for(out))
    .map_err(data)?;
    Ok(())
}

fn map_sim_error(e: sim::SimError) -> Failure {
    match e {
        sim::SimError::InvalidConfig(_) => usage(anyhow!(e)),
        sim::SimError::Policy(policy::PolicyError::InvalidConfig(_)) => usage(anyhow!(e)),
        other => data(anyhow!(other)),
    }
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn long_csv_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push("_long.csv");
    out.with_file_name(name)
}
