//! CSV rendering for run artifacts and config-file loading.
//!
//! All real numbers are written with Rust's shortest round-trip formatting,
//! so a parsed column reproduces the in-memory `f64` bit for bit. The CSV
//! renderers are pure functions of their inputs; combined with the
//! deterministic training loop this makes repeated runs byte-comparable.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::integrator::{CompareReport, StepDiagnostics};
use crate::lie_poisson::TrajectoryRecord;
use crate::train::{IterationRecord, TrainingConfig};

/// Renders a loss history as `iteration,loss,dropped_points` rows.
pub fn loss_history_csv(history: &[IterationRecord]) -> String {
    let mut out = String::from("iteration,loss,dropped_points\n");
    for (i, rec) in history.iter().enumerate() {
        writeln!(out, "{},{},{}", i, rec.loss, rec.dropped_points).expect("string write");
    }
    out
}

/// One `step,t,mu1,mu2,mu3,H,C,newton_iters,newton_residual` row (newline
/// included). Step 0 carries the initial condition with zeroed solver
/// columns, since no solve produces it.
pub fn trajectory_row(
    step: usize,
    step_size: f64,
    mu: &crate::lie_poisson::AlgebraDualPoint,
    hamiltonian: f64,
    casimir: f64,
    newton_iters: usize,
    newton_residual: f64,
) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        step,
        step as f64 * step_size,
        mu.x,
        mu.y,
        mu.z,
        hamiltonian,
        casimir,
        newton_iters,
        newton_residual
    )
}

/// Renders a trajectory with per-step solver diagnostics, one row per state
/// including step 0.
pub fn trajectory_csv(record: &TrajectoryRecord, diags: &[StepDiagnostics]) -> Result<String> {
    if record.states.len() != diags.len() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "trajectory has {} states but {} step diagnostics",
            record.states.len(),
            diags.len()
        )));
    }
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for (k, mu) in record.states.iter().enumerate() {
        let (iters, residual) = if k == 0 {
            (0, 0.0)
        } else {
            (
                diags[k - 1].newton_iterations,
                diags[k - 1].final_residual,
            )
        };
        out.push_str(&trajectory_row(
            k,
            record.step_size,
            mu,
            record.hamiltonian_values[k],
            record.casimir_values[k],
            iters,
            residual,
        ));
    }
    Ok(out)
}

pub const TRAJECTORY_HEADER: &str = "step,t,mu1,mu2,mu3,H,C,newton_iters,newton_residual";

/// Renders an oracle comparison as
/// `step,t,error_norm,H_model,H_oracle,C_model,C_oracle` rows.
pub fn compare_csv(report: &CompareReport) -> String {
    let mut out = String::from("step,t,error_norm,H_model,H_oracle,C_model,C_oracle\n");
    for k in 0..report.error_norms.len() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            k,
            k as f64 * report.step_size,
            report.error_norms[k],
            report.model_hamiltonian[k],
            report.oracle_hamiltonian[k],
            report.model_casimir[k],
            report.oracle_casimir[k]
        )
        .expect("string write");
    }
    out
}

pub fn write_loss_history_csv(path: &Path, history: &[IterationRecord]) -> Result<()> {
    std::fs::write(path, loss_history_csv(history))?;
    Ok(())
}

pub fn write_trajectory_csv(
    path: &Path,
    record: &TrajectoryRecord,
    diags: &[StepDiagnostics],
) -> Result<()> {
    std::fs::write(path, trajectory_csv(record, diags)?)?;
    Ok(())
}

pub fn write_compare_csv(path: &Path, report: &CompareReport) -> Result<()> {
    std::fs::write(path, compare_csv(report))?;
    Ok(())
}

/// Loads and validates a training config document.
pub fn load_training_config(path: &Path) -> Result<TrainingConfig> {
    let text = std::fs::read_to_string(path)?;
    TrainingConfig::from_json(&text)
}
