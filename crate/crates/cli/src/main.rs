//! `hjflow`: train a generating-function network against the groupoid
//! Hamilton-Jacobi residual, roll out the induced Poisson integrator for
//! the free rigid body, verify its structure-preservation properties, and
//! compare trajectories against a fine Runge-Kutta oracle. Every command
//! writes a provenance manifest beside its primary output, and all data
//! artifacts are byte-reproducible given the same inputs.

mod checks;
mod manifest;

use std::fs::File;
use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

use hjflow::integrator::{bisection_step, compare_with_oracle, rollout, NewtonConfig};
use hjflow::io::{trajectory_row, write_compare_csv, write_loss_history_csv, TRAJECTORY_HEADER};
use hjflow::lie_poisson::{casimir, rk4_rollout, QuadraticHamiltonian, TrajectoryRecord};
use hjflow::net::GeneratingFunctionNet;
use hjflow::train::{train, TrainingConfig};
use manifest::{sha256_hex, RunManifest};

#[derive(Parser)]
#[command(
    name = "hjflow",
    version,
    about = "Poisson integrators for the free rigid body from learned generating functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generating function on the Hamilton-Jacobi residual and save
    /// the weight file plus a loss-history CSV
    Train(TrainArgs),
    /// Roll out the induced integrator from an initial state and write the
    /// trajectory CSV with per-step invariants and solver diagnostics
    Simulate(SimulateArgs),
    /// Run the structure-preservation property suite and write a
    /// machine-readable report
    Check(CheckArgs),
    /// Compare a rollout against the Runge-Kutta oracle, column by column
    Compare(CompareArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training config JSON (see `TrainingConfig`; desk-scale documents are
    /// small and human-writable)
    #[arg(long, conflicts_with = "full_scale")]
    config: Option<PathBuf>,
    /// Weight-file output path
    #[arg(long)]
    out: PathBuf,
    /// Loss-history CSV path [default: <out>.loss.csv]
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Use the heavyweight built-in config (80,000 points, 500-250-250-250
    /// net, 10,000 iterations) — hours of compute
    #[arg(long)]
    full_scale: bool,
    /// Seed for --full-scale (with --config the seed comes from the
    /// config document)
    #[arg(long, default_value_t = 0, conflicts_with = "config")]
    seed: u64,
}

#[derive(Args)]
struct SolverArgs {
    /// Newton residual tolerance (max-norm)
    #[arg(long, default_value_t = 1e-12)]
    tolerance: f64,
    /// Newton iteration cap per step
    #[arg(long, default_value_t = 50)]
    max_iterations: usize,
    /// Finite-difference step for the Newton Jacobian
    #[arg(long, default_value_t = 1e-7)]
    fd_step: f64,
    /// Invert the source leg instead of the target leg (runs the inverse map)
    #[arg(long)]
    swap_legs: bool,
}

impl SolverArgs {
    fn newton_config(&self) -> NewtonConfig {
        NewtonConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            fd_step: self.fd_step,
            swap_legs: self.swap_legs,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Weight file of the trained (or untrained) generating function
    #[arg(long)]
    model: PathBuf,
    /// Initial state as comma-separated reals, e.g. 1,1,2
    #[arg(long, value_parser = parse_vector3)]
    initial: Vector3<f64>,
    /// Time step h
    #[arg(long)]
    step_size: f64,
    /// Number of steps
    #[arg(long)]
    steps: usize,
    /// Trajectory CSV output path
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct CheckArgs {
    /// Weight file to put under test; without it the integrator properties
    /// run on a random-weight network (they must hold either way)
    #[arg(long)]
    model: Option<PathBuf>,
    /// JSON report output path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Weight file for the model trajectory
    #[arg(long, required_unless_present = "oracle_self", conflicts_with = "oracle_self")]
    model: Option<PathBuf>,
    /// Compare the oracle with itself (error column must be exactly zero)
    #[arg(long)]
    oracle_self: bool,
    /// Initial state as comma-separated reals, e.g. 3,2,0
    #[arg(long, value_parser = parse_vector3)]
    initial: Vector3<f64>,
    /// Time step h of the compared trajectory
    #[arg(long)]
    step_size: f64,
    /// Number of steps
    #[arg(long)]
    steps: usize,
    /// Oracle Runge-Kutta substeps per h
    #[arg(long, default_value_t = 100)]
    substeps: usize,
    /// Comparison CSV output path
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

fn parse_vector3(text: &str) -> Result<Vector3<f64>, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated reals, got {text:?}"));
    }
    let mut v = Vector3::zeros();
    for (k, part) in parts.iter().enumerate() {
        v[k] = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("component {}: {e}", k + 1))?;
        if !v[k].is_finite() {
            return Err(format!("component {} must be finite", k + 1));
        }
    }
    Ok(v)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let started = Utc::now();
    let (cfg, config_text) = if args.full_scale {
        let cfg = TrainingConfig::full_scale(args.seed);
        let text = serde_json::to_string_pretty(&cfg)?;
        (cfg, text)
    } else {
        let path = args
            .config
            .context("either --config or --full-scale is required")?;
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg = TrainingConfig::from_json(&text)
            .with_context(|| format!("invalid training config {}", path.display()))?;
        (cfg, text)
    };
    let digest = sha256_hex(config_text.as_bytes());
    eprintln!(
        "training a {:?} net on {} points for {} iterations (seed {})",
        cfg.layer_sizes, cfg.n_points, cfg.n_iterations, cfg.seed
    );
    let outcome = train(&cfg)?;
    let mut net = outcome.net;
    net.training_config_digest = Some(digest.clone());
    net.save_weights(&args.out)
        .with_context(|| format!("writing model {}", args.out.display()))?;

    let loss_csv = args
        .loss_csv
        .unwrap_or_else(|| args.out.with_extension("loss.csv"));
    write_loss_history_csv(&loss_csv, &outcome.history)?;

    let dropped: usize = outcome.history.iter().map(|r| r.dropped_points).sum();
    if dropped > 0 {
        eprintln!(
            "warning: {dropped} collocation evaluations left the exponential chart and were dropped"
        );
    }
    let first = outcome.history.first().map(|r| r.loss);
    let last = outcome.history.last().map(|r| r.loss);
    if let (Some(first), Some(last)) = (first, last) {
        println!("loss: {first:.6e} -> {last:.6e} over {} iterations", outcome.history.len());
    }
    RunManifest::new(
        "train",
        digest,
        cfg.seed,
        started,
        vec![&args.out, &loss_csv],
    )
    .write_beside(&args.out)?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let started = Utc::now();
    let model_bytes = std::fs::read(&args.model)
        .with_context(|| format!("reading model {}", args.model.display()))?;
    let net = GeneratingFunctionNet::load_weights(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let hm = QuadraticHamiltonian::default();
    let ncfg = args.solver.newton_config();

    let mut file = File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    writeln!(file, "{TRAJECTORY_HEADER}")?;
    let mut mu = args.initial;
    let (h0, c0) = (hm.value(&mu), casimir(&mu));
    file.write_all(trajectory_row(0, args.step_size, &mu, h0, c0, 0, 0.0).as_bytes())?;
    file.flush()?;
    let (mut h_drift, mut c_drift) = (0.0f64, 0.0f64);
    for step in 1..=args.steps {
        // Flush row by row so a solver failure still leaves the completed
        // prefix of the trajectory on disk.
        let (next, diag) = match bisection_step(&net, args.step_size, &mu, &ncfg) {
            Ok(v) => v,
            Err(e) => {
                file.flush()?;
                bail!("step {step} failed: {e}");
            }
        };
        mu = next;
        let (h_val, c_val) = (hm.value(&mu), casimir(&mu));
        h_drift = h_drift.max((h_val - h0).abs());
        c_drift = c_drift.max((c_val - c0).abs());
        file.write_all(
            trajectory_row(
                step,
                args.step_size,
                &mu,
                h_val,
                c_val,
                diag.newton_iterations,
                diag.final_residual,
            )
            .as_bytes(),
        )?;
        file.flush()?;
    }
    println!(
        "{} steps at h = {}: |dH| <= {h_drift:.3e}, |dC| <= {c_drift:.3e}, final state ({}, {}, {})",
        args.steps, args.step_size, mu.x, mu.y, mu.z
    );
    RunManifest::new(
        "simulate",
        sha256_hex(&model_bytes),
        net.seed.unwrap_or(0),
        started,
        vec![&args.out],
    )
    .write_beside(&args.out)?;
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<()> {
    let started = Utc::now();
    let (net, digest, seed, model_label) = match &args.model {
        Some(path) => {
            let bytes =
                std::fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
            let net = GeneratingFunctionNet::load_weights(path)
                .with_context(|| format!("loading model {}", path.display()))?;
            let seed = net.seed.unwrap_or(0);
            (
                Some(net),
                sha256_hex(&bytes),
                seed,
                Some(path.display().to_string()),
            )
        }
        None => (None, sha256_hex(b""), 0, None),
    };
    let properties = checks::run_checks(net.as_ref())?;
    let all_passed = properties.iter().all(|p| p.passed);
    let report = checks::CheckReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        model: model_label,
        all_passed,
        properties,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(&args.out, text)
        .with_context(|| format!("writing report {}", args.out.display()))?;
    for p in &report.properties {
        println!(
            "{} {}: measured {:.3e}, threshold {:.3e}",
            if p.passed { "PASS" } else { "FAIL" },
            p.name,
            p.measured,
            p.threshold
        );
    }
    RunManifest::new("check", digest, seed, started, vec![&args.out]).write_beside(&args.out)?;
    if !all_passed {
        let failing: Vec<&str> = report
            .properties
            .iter()
            .filter(|p| !p.passed)
            .map(|p| p.name.as_str())
            .collect();
        bail!("property checks failed: {}", failing.join(", "));
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let started = Utc::now();
    if args.substeps == 0 {
        bail!("--substeps must be at least 1");
    }
    let hm = QuadraticHamiltonian::default();
    let (traj, digest, seed) = if args.oracle_self {
        // The "model" trajectory is the oracle itself, computed on the same
        // substep grid the comparison will rebuild — the error column is
        // then exactly zero, which makes this a self-test of the pipeline.
        let fine = rk4_rollout(
            &hm,
            args.initial,
            args.step_size / args.substeps as f64,
            args.steps * args.substeps,
        );
        let mut traj = TrajectoryRecord::new(args.step_size);
        for state in fine.states.iter().step_by(args.substeps) {
            traj.push(&hm, *state);
        }
        (traj, sha256_hex(b""), 0)
    } else {
        let path = args.model.as_ref().expect("clap enforces model XOR oracle_self");
        let bytes =
            std::fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
        let net = GeneratingFunctionNet::load_weights(path)
            .with_context(|| format!("loading model {}", path.display()))?;
        let (traj, _) = rollout(
            &net,
            args.step_size,
            &args.initial,
            args.steps,
            &hm,
            &args.solver.newton_config(),
        )?;
        (traj, sha256_hex(&bytes), net.seed.unwrap_or(0))
    };
    let report = compare_with_oracle(&traj, &hm, args.substeps);
    write_compare_csv(&args.out, &report)?;
    println!(
        "{} steps at h = {}: max |error| = {:.3e}, model |dH| <= {:.3e}, model |dC| <= {:.3e}",
        args.steps,
        args.step_size,
        report.max_error(),
        report.model_hamiltonian_drift(),
        report.model_casimir_drift()
    );
    RunManifest::new("compare", digest, seed, started, vec![&args.out]).write_beside(&args.out)?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Check(args) => cmd_check(args),
        Command::Compare(args) => cmd_compare(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
