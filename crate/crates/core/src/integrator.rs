//! The one-step map induced by a generating function's bisection.
//!
//! At step size `h` the graph `L_h = {(x, p) : x = dS/dp(h, p; W)}` is a
//! Lagrangian section of the groupoid over momentum space, and the
//! composition `source o (target|_L)^{-1}` of its two momentum-map legs is a
//! Poisson map by construction. [`bisection_step`] realizes that map: a
//! damped Newton solve inverts the target leg (three unknowns, central
//! finite-difference Jacobian), then the source leg is evaluated at the
//! solution. Because both legs act on points of the *same* bisection, the
//! Casimir `|mu|^2 / 2` is conserved to solver tolerance for arbitrary
//! weights — structure preservation is independent of training quality,
//! which only controls how close the map is to the time-`h` rigid-body flow.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::groupoid::{GroupoidPoint, MapSelector};
use crate::lie_poisson::{rk4_rollout, AlgebraDualPoint, QuadraticHamiltonian, TrajectoryRecord};
use crate::net::GeneratingFunctionNet;

/// Newton-solve parameters for inverting the bisection's target leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Convergence threshold on the residual max-norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Central-difference step for the 3x3 Jacobian.
    pub fd_step: f64,
    /// Swaps which leg is inverted and which is evaluated, turning the step
    /// into its inverse map. The default orientation advances the flow
    /// forward in time (pinned by the direction-consistency test against
    /// the Euler equations); the swap exists because that orientation is a
    /// sign convention, not a law.
    pub swap_legs: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 50,
            fd_step: 1e-7,
            swap_legs: false,
        }
    }
}

/// Per-step solver report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub newton_iterations: usize,
    /// Residual max-norm at exit; at most the tolerance on success.
    pub final_residual: f64,
    /// Largest chart-coordinate norm `|dS/dp|` seen at accepted iterates —
    /// a margin-to-chart-boundary gauge.
    pub chart_max_x_norm: f64,
}

/// Evaluates the configured leg of the bisection point over `p`, returning
/// the mapped momentum together with the chart coordinate used.
fn leg_value(
    net: &GeneratingFunctionNet,
    h: f64,
    p: &Vector3<f64>,
    leg: MapSelector,
) -> Result<(AlgebraDualPoint, Vector3<f64>)> {
    let x = net.eval_input_grad(h, p).dp;
    let mapped = leg.apply(&GroupoidPoint::new(x, *p))?;
    Ok((mapped, x))
}

/// Advances `mu` by one step of the map induced by the net's bisection at
/// time `h`.
///
/// Solves `F(p) = solve_leg(dS/dp(h, p), p) - mu = 0` by damped Newton from
/// the initial guess `p = mu` (exact at `h = 0` thanks to the structural
/// `t` factor, O(h)-close otherwise), then returns the other leg evaluated
/// at the solution. The step is halved up to 20 times whenever the residual
/// max-norm fails to decrease.
pub fn bisection_step(
    net: &GeneratingFunctionNet,
    h: f64,
    mu: &AlgebraDualPoint,
    ncfg: &NewtonConfig,
) -> Result<(AlgebraDualPoint, StepDiagnostics)> {
    let (solve_leg, push_leg) = if ncfg.swap_legs {
        (MapSelector::Source, MapSelector::Target)
    } else {
        (MapSelector::Target, MapSelector::Source)
    };
    let residual = |p: &Vector3<f64>| -> Result<(Vector3<f64>, f64)> {
        let (mapped, x) = leg_value(net, h, p, solve_leg)?;
        Ok((mapped - mu, x.norm()))
    };

    let mut p = *mu;
    let (mut f, mut x_norm) = residual(&p)?;
    let mut res = f.amax();
    let mut chart_max_x_norm = x_norm;
    let mut iterations = 0;

    while res > ncfg.tolerance {
        if iterations >= ncfg.max_iterations {
            return Err(Error::NewtonDidNotConverge {
                iterations,
                residual: res,
            });
        }
        // Central-difference Jacobian of F in the three momentum unknowns.
        let mut jac = Matrix3::zeros();
        for j in 0..3 {
            let mut plus = p;
            let mut minus = p;
            plus[j] += ncfg.fd_step;
            minus[j] -= ncfg.fd_step;
            let (f_plus, _) = residual(&plus)?;
            let (f_minus, _) = residual(&minus)?;
            jac.set_column(j, &((f_plus - f_minus) / (2.0 * ncfg.fd_step)));
        }
        let full_step = jac.lu().solve(&f).ok_or(Error::SingularJacobian {
            residual: res,
        })?;

        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..=20 {
            let candidate = p - full_step * scale;
            let (f_try, x_try) = residual(&candidate)?;
            let res_try = f_try.amax();
            if res_try < res {
                p = candidate;
                f = f_try;
                res = res_try;
                x_norm = x_try;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        iterations += 1;
        if !accepted {
            return Err(Error::NewtonDidNotConverge {
                iterations,
                residual: res,
            });
        }
        chart_max_x_norm = chart_max_x_norm.max(x_norm);
    }

    let (mu_next, x_final) = leg_value(net, h, &p, push_leg)?;
    Ok((
        mu_next,
        StepDiagnostics {
            newton_iterations: iterations,
            final_residual: res,
            chart_max_x_norm: chart_max_x_norm.max(x_final.norm()),
        },
    ))
}

/// Iterates [`bisection_step`] `n` times from `mu0`, recording the state,
/// Hamiltonian, and Casimir after every step (step 0 included).
///
/// A solver failure aborts the rollout with the 1-based index of the
/// offending step; the diagnostics of completed steps are discarded with it
/// since the trajectory is unusable.
pub fn rollout(
    net: &GeneratingFunctionNet,
    h: f64,
    mu0: &AlgebraDualPoint,
    n: usize,
    hamiltonian: &QuadraticHamiltonian,
    ncfg: &NewtonConfig,
) -> Result<(TrajectoryRecord, Vec<StepDiagnostics>)> {
    let mut record = TrajectoryRecord::new(h);
    record.push(hamiltonian, *mu0);
    let mut diagnostics = Vec::with_capacity(n);
    let mut mu = *mu0;
    for step in 1..=n {
        let (next, diag) = bisection_step(net, h, &mu, ncfg).map_err(|e| Error::StepFailed {
            step,
            source: Box::new(e),
        })?;
        mu = next;
        record.push(hamiltonian, mu);
        diagnostics.push(diag);
    }
    Ok((record, diagnostics))
}

/// Learned trajectory lined up against a fine Runge-Kutta reference: the
/// per-state Euclidean error plus both invariant series for each side.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub step_size: f64,
    /// `|mu_model(k) - mu_oracle(k)|` per state, starting at exactly 0.
    pub error_norms: Vec<f64>,
    pub model_hamiltonian: Vec<f64>,
    pub oracle_hamiltonian: Vec<f64>,
    pub model_casimir: Vec<f64>,
    pub oracle_casimir: Vec<f64>,
}

impl CompareReport {
    pub fn max_error(&self) -> f64 {
        self.error_norms.iter().cloned().fold(0.0, f64::max)
    }

    fn max_drift(series: &[f64]) -> f64 {
        let first = series[0];
        series.iter().map(|v| (v - first).abs()).fold(0.0, f64::max)
    }

    /// Largest `|H(mu_k) - H(mu_0)|` along the learned trajectory.
    pub fn model_hamiltonian_drift(&self) -> f64 {
        Self::max_drift(&self.model_hamiltonian)
    }

    /// Largest `|C(mu_k) - C(mu_0)|` along the learned trajectory.
    pub fn model_casimir_drift(&self) -> f64 {
        Self::max_drift(&self.model_casimir)
    }
}

/// Recomputes the reference trajectory from `traj`'s initial state with
/// Runge-Kutta at `dt = h / oracle_substeps` and lines the two up.
///
/// Accuracy and structure preservation separate cleanly here: the error
/// series measures training quality, while the model Casimir series stays
/// flat regardless of it.
pub fn compare_with_oracle(
    traj: &TrajectoryRecord,
    hamiltonian: &QuadraticHamiltonian,
    oracle_substeps: usize,
) -> CompareReport {
    assert!(oracle_substeps >= 1, "oracle_substeps must be at least 1");
    assert!(!traj.states.is_empty(), "trajectory must contain a state");
    let n = traj.states.len() - 1;
    let dt = traj.step_size / oracle_substeps as f64;
    let oracle = rk4_rollout(hamiltonian, traj.states[0], dt, n * oracle_substeps);
    let oracle_states: Vec<_> = oracle
        .states
        .iter()
        .step_by(oracle_substeps)
        .cloned()
        .collect();
    let error_norms = traj
        .states
        .iter()
        .zip(&oracle_states)
        .map(|(a, b)| (a - b).norm())
        .collect();
    let invariants = |states: &[AlgebraDualPoint]| -> (Vec<f64>, Vec<f64>) {
        (
            states.iter().map(|mu| hamiltonian.value(mu)).collect(),
            states.iter().map(crate::lie_poisson::casimir).collect(),
        )
    };
    let (model_hamiltonian, model_casimir) = invariants(&traj.states);
    let (oracle_hamiltonian, oracle_casimir) = invariants(&oracle_states);
    CompareReport {
        step_size: traj.step_size,
        error_norms,
        model_hamiltonian,
        oracle_hamiltonian,
        model_casimir,
        oracle_casimir,
    }
}
