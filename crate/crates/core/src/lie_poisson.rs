//! so(3)/SO(3) primitives and the rigid-body system on the dual algebra.
//!
//! The dual of so(3) is identified with R^3; a state `mu` carries the
//! minus Lie-Poisson structure whose bivector matrix is `hat(mu)`. The
//! quadratic Hamiltonian `H(mu) = 1/2 (mu1^2/I1 + mu2^2/I2 + mu3^2/I3)`
//! generates the rigid-body Euler equations, here written
//! `mu_dot = grad H(mu) x mu` (the bracket sign convention is fixed once and
//! the bisection integrator is calibrated against it). A classical RK4
//! integrator at fine step serves as the reference trajectory in diagnostics.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// A point of the dual algebra so*(3): angular-momentum-like coordinates.
pub type AlgebraDualPoint = Vector3<f64>;

/// Largest chart-coordinate norm accepted by the exponential chart.
///
/// The rotation-vector chart is a diffeomorphism on the open ball of radius
/// pi; a small margin keeps every accepted point strictly inside, so `dexp`
/// and its transpose are always invertible on accepted inputs.
pub const CHART_LIMIT: f64 = std::f64::consts::PI - 1e-6;

/// Angle below which series expansions replace the closed-form Rodrigues
/// coefficients (avoids cancellation in `(theta - sin theta)/theta^3`).
const SERIES_THRESHOLD: f64 = 1e-4;

fn check_chart(x: &Vector3<f64>) -> Result<f64> {
    let norm = x.norm();
    if !norm.is_finite() || norm >= CHART_LIMIT {
        return Err(Error::ChartViolation {
            norm,
            limit: CHART_LIMIT,
        });
    }
    Ok(norm)
}

/// The skew-symmetric matrix `A` with `A w = v x w` for all `w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Rodrigues coefficients `(sin t/t, (1-cos t)/t^2, (t-sin t)/t^3)`.
///
/// The series branch is accurate through `t^4`, which keeps both branches in
/// agreement to well below 1e-12 around the switch point.
fn rodrigues_coeffs(theta: f64) -> (f64, f64, f64) {
    if theta < SERIES_THRESHOLD {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0,
        )
    } else {
        let s = theta.sin();
        let t2 = theta * theta;
        // 1 - cos t = 2 sin^2(t/2) avoids cancellation near zero, keeping
        // both branches within round-off of each other at the switch.
        let half_sin = (0.5 * theta).sin();
        let one_minus_cos = 2.0 * half_sin * half_sin;
        (s / theta, one_minus_cos / t2, (theta - s) / (t2 * theta))
    }
}

/// Exponential chart on SO(3): the rotation by angle `|x|` about axis `x`.
///
/// Fails with a chart violation when `|x|` reaches [`CHART_LIMIT`].
pub fn exp_so3(x: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let theta = check_chart(x)?;
    let (a, b, _) = rodrigues_coeffs(theta);
    let xh = hat(x);
    Ok(Matrix3::identity() + xh * a + xh * xh * b)
}

/// Inverse of the exponential chart for rotations with angle below the chart
/// limit. Used as the chart-coordinate extractor in finite-difference oracles.
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    // Antisymmetric part gives sin(theta) * axis; the trace gives cos(theta).
    let s = 0.5 * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let c = 0.5 * (r.trace() - 1.0);
    let theta = s.norm().atan2(c);
    if theta < 1e-7 {
        // x = s + O(theta^3); below this angle the correction is < 1e-21.
        s
    } else {
        s * (theta / theta.sin())
    }
}

/// Left-trivialized differential of `exp_so3`:
/// `d/dt exp(y(t)) = hat(dexp(y) y_dot) exp(y)`.
///
/// Closed form `I + (1-cos t)/t^2 hat(x) + (t-sin t)/t^3 hat(x)^2` with the
/// series branch below the small-angle threshold; invertible on the chart
/// domain.
pub fn dexp(x: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let theta = check_chart(x)?;
    let (_, c1, c2) = rodrigues_coeffs(theta);
    let xh = hat(x);
    Ok(Matrix3::identity() + xh * c1 + xh * xh * c2)
}

/// Partial derivative `d dexp(y) / d y_j` for `j` in `{0, 1, 2}`.
///
/// Writing `dexp(y) = I + c1 hat(y) + c2 hat(y)^2` with coefficients that are
/// functions of `theta = |y|`, the derivative combines the coefficient
/// derivatives (via `d theta/d y_j = y_j/theta`) with the derivatives of the
/// matrix powers. The ratios `c1'(theta)/theta` and `c2'(theta)/theta` are
/// smooth at zero and suffer severe cancellation in closed form, so they use
/// a series branch up to a larger threshold than the coefficients themselves.
pub fn dexp_partial(y: &Vector3<f64>, j: usize) -> Result<Matrix3<f64>> {
    assert!(j < 3, "component index out of range");
    let theta = check_chart(y)?;
    let (_, c1, c2) = rodrigues_coeffs(theta);
    // d1 = c1'(theta)/theta, d2 = c2'(theta)/theta. The closed forms lose
    // roughly theta^-4 digits to cancellation, so the series (error below
    // 1e-14 at the switch point) covers the whole small-angle range.
    let (d1, d2) = if theta < 1e-2 {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0,
            -1.0 / 60.0 + t2 / 1260.0 - t4 / 60480.0,
        )
    } else {
        let s = theta.sin();
        let half_sin = (0.5 * theta).sin();
        let one_minus_cos = 2.0 * half_sin * half_sin;
        let t4 = theta.powi(4);
        (
            (theta * s - 2.0 * one_minus_cos) / t4,
            (theta * one_minus_cos - 3.0 * (theta - s)) / (t4 * theta),
        )
    };
    let yh = hat(y);
    let eh = hat(&Vector3::ith(j, 1.0));
    Ok(yh * (d1 * y[j]) + eh * c1 + yh * yh * (d2 * y[j]) + (eh * yh + yh * eh) * c2)
}

/// Rigid-body kinetic energy on so*(3) with principal inertia `(I1, I2, I3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticHamiltonian {
    pub inertia: Vector3<f64>,
}

impl Default for QuadraticHamiltonian {
    /// The benchmark inertia tensor `(1.5, 2, 2.5)`.
    fn default() -> Self {
        Self {
            inertia: Vector3::new(1.5, 2.0, 2.5),
        }
    }
}

impl QuadraticHamiltonian {
    pub fn new(inertia: Vector3<f64>) -> Result<Self> {
        if !inertia.iter().all(|i| i.is_finite() && *i > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "inertia components must be positive and finite, got {inertia:?}"
            )));
        }
        Ok(Self { inertia })
    }

    /// `H(mu) = 1/2 sum_a mu_a^2 / I_a` together with its gradient
    /// `(mu1/I1, mu2/I2, mu3/I3)`.
    pub fn eval_with_grad(&self, mu: &AlgebraDualPoint) -> (f64, Vector3<f64>) {
        let grad = mu.component_div(&self.inertia);
        (0.5 * mu.dot(&grad), grad)
    }

    /// Hamiltonian value only.
    pub fn value(&self, mu: &AlgebraDualPoint) -> f64 {
        self.eval_with_grad(mu).0
    }
}

/// The distinguished conserved quantity `C(mu) = 1/2 |mu|^2`; its level sets
/// (spheres) are preserved by every Hamiltonian flow of the bracket.
pub fn casimir(mu: &AlgebraDualPoint) -> f64 {
    0.5 * mu.norm_squared()
}

/// Bivector matrix of the bracket: `Pi_ab = {mu_a, mu_b} = -eps_abc mu_c`,
/// which equals `hat(mu)`. Antisymmetric, and `Pi(mu) mu = 0` exactly.
pub fn lie_poisson_bivector(mu: &AlgebraDualPoint) -> Matrix3<f64> {
    hat(mu)
}

/// Right-hand side of the rigid-body Euler equations,
/// `mu_dot = grad H(mu) x mu`.
///
/// The sign is a fixed convention of this crate (equivalently
/// `mu_dot = Pi(mu)^T grad H`); the bisection integrator's direction test is
/// calibrated against this same function, so the two can never disagree.
pub fn euler_rhs(h: &QuadraticHamiltonian, mu: &AlgebraDualPoint) -> Vector3<f64> {
    let (_, grad) = h.eval_with_grad(mu);
    grad.cross(mu)
}

/// A time-indexed trajectory with per-state Hamiltonian and Casimir values.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// Time increment between consecutive states.
    pub step_size: f64,
    pub states: Vec<AlgebraDualPoint>,
    pub hamiltonian_values: Vec<f64>,
    pub casimir_values: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn new(step_size: f64) -> Self {
        Self {
            step_size,
            states: Vec::new(),
            hamiltonian_values: Vec::new(),
            casimir_values: Vec::new(),
        }
    }

    /// Appends a state along with its `H` and `C` evaluations.
    pub fn push(&mut self, h: &QuadraticHamiltonian, mu: AlgebraDualPoint) {
        self.hamiltonian_values.push(h.value(&mu));
        self.casimir_values.push(casimir(&mu));
        self.states.push(mu);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Classical fourth-order Runge-Kutta applied to [`euler_rhs`].
///
/// At fine step this is the "real trajectory" stand-in: its energy drift is
/// orders of magnitude below every tolerance used in the diagnostics, so it
/// serves as the accuracy oracle for the learned integrator.
pub fn rk4_rollout(
    h: &QuadraticHamiltonian,
    mu0: AlgebraDualPoint,
    dt: f64,
    n: usize,
) -> TrajectoryRecord {
    let mut record = TrajectoryRecord::new(dt);
    record.push(h, mu0);
    let mut mu = mu0;
    for _ in 0..n {
        let k1 = euler_rhs(h, &mu);
        let k2 = euler_rhs(h, &(mu + k1 * (0.5 * dt)));
        let k3 = euler_rhs(h, &(mu + k2 * (0.5 * dt)));
        let k4 = euler_rhs(h, &(mu + k3 * dt));
        mu += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        record.push(h, mu);
    }
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    #[test]
    fn hat_of_zero_is_zero() {
        assert_eq!(hat(&Vector3::zeros()), Matrix3::zeros());
    }

    #[test]
    fn hat_of_e3_matches_cross_product_matrix() {
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(hat(&Vector3::new(0.0, 0.0, 1.0)), expected);
    }

    #[test]
    fn hat_annihilates_its_argument() {
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(hat(&v) * v, Vector3::zeros());
    }

    #[test]
    fn hat_realizes_cross_product_antisymmetrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let v = random_vec(&mut rng, 4.0);
            let w = random_vec(&mut rng, 4.0);
            assert!((hat(&v) * w - v.cross(&w)).norm() < TOL);
            assert!((hat(&v) * w + hat(&w) * v).norm() < TOL);
        }
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(exp_so3(&Vector3::zeros()).unwrap(), Matrix3::identity());
    }

    #[test]
    fn exp_quarter_turn_about_e3() {
        let r = exp_so3(&Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2)).unwrap();
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - expected).norm() < TOL);
    }

    #[test]
    fn exp_is_orthogonal_with_unit_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let dir = random_vec(&mut rng, 1.0).normalize();
            let x = dir * rng.random_range(0.0..std::f64::consts::PI - 1e-3);
            let r = exp_so3(&x).unwrap();
            assert!((r * r.transpose() - Matrix3::identity()).norm() < TOL);
            assert!((r.determinant() - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn exp_rejects_chart_boundary() {
        let x = Vector3::new(std::f64::consts::PI, 0.0, 0.0);
        assert!(matches!(
            exp_so3(&x),
            Err(Error::ChartViolation { .. })
        ));
    }

    #[test]
    fn log_inverts_exp_across_the_chart() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let dir = random_vec(&mut rng, 1.0).normalize();
            let x = dir * rng.random_range(1e-9..std::f64::consts::PI - 0.1);
            let r = exp_so3(&x).unwrap();
            assert!((log_so3(&r) - x).norm() < 1e-11 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn dexp_of_zero_is_identity() {
        assert_eq!(dexp(&Vector3::zeros()).unwrap(), Matrix3::identity());
    }

    #[test]
    fn dexp_fixes_its_own_axis() {
        let x = Vector3::new(0.3, 0.0, 0.0);
        assert!((dexp(&x).unwrap() * x - x).norm() < TOL);
    }

    /// Differentiates the group identity exp(y(t)) = exp(t xi) exp(x) at t=0:
    /// the chart velocity y_dot must satisfy dexp(x) y_dot = xi.
    #[test]
    fn dexp_matches_group_finite_difference_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let delta = 1e-6;
        for _ in 0..100 {
            let x = random_vec(&mut rng, 0.57); // keeps |x| < 1
            let xi = random_vec(&mut rng, 1.0).normalize();
            let r = exp_so3(&x).unwrap();
            let y = |t: f64| log_so3(&(exp_so3(&(xi * t)).unwrap() * r));
            let y_dot = (y(delta) - y(-delta)) / (2.0 * delta);
            assert!((dexp(&x).unwrap() * y_dot - xi).norm() < 1e-6);
        }
    }

    #[test]
    fn dexp_branches_agree_around_the_switch() {
        // Straddle the series threshold and compare against the closed form
        // evaluated just above it by rescaling: both branches are smooth, so
        // agreement of the assembled matrices near the switch is the check.
        for &theta in &[0.3e-4_f64, 0.7e-4, 0.99e-4, 1.01e-4, 2e-4, 3e-4] {
            let x = Vector3::new(0.6, -0.48, 0.64).normalize() * theta;
            let t2 = theta * theta;
            let t4 = t2 * t2;
            let c1s = 0.5 - t2 / 24.0 + t4 / 720.0;
            let c2s = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0;
            let (c1c, c2c) = {
                let s = theta.sin();
                let half_sin = (0.5 * theta).sin();
                (2.0 * half_sin * half_sin / t2, (theta - s) / (t2 * theta))
            };
            let xh = hat(&x);
            let series = Matrix3::identity() + xh * c1s + xh * xh * c2s;
            let closed = Matrix3::identity() + xh * c1c + xh * xh * c2c;
            assert!((series - closed).norm() < 1e-12, "theta = {theta}");
        }
    }

    #[test]
    fn dexp_partial_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let delta = 1e-6;
        for &scale in &[1e-5, 1e-3, 0.03, 0.5, 1.9] {
            for _ in 0..20 {
                let y = random_vec(&mut rng, 1.0).normalize() * scale;
                for j in 0..3 {
                    let mut plus = y;
                    let mut minus = y;
                    plus[j] += delta;
                    minus[j] -= delta;
                    let fd = (dexp(&plus).unwrap() - dexp(&minus).unwrap()) / (2.0 * delta);
                    let analytic = dexp_partial(&y, j).unwrap();
                    assert!(
                        (fd - analytic).norm() < 1e-6,
                        "scale {scale}, component {j}"
                    );
                }
            }
        }
    }

    #[test]
    fn hamiltonian_frozen_values() {
        let h = QuadraticHamiltonian::default();
        let (v0, g0) = h.eval_with_grad(&Vector3::zeros());
        assert_eq!(v0, 0.0);
        assert_eq!(g0, Vector3::zeros());

        let (v1, g1) = h.eval_with_grad(&Vector3::new(1.0, 1.0, 2.0));
        assert!((v1 - 83.0 / 60.0).abs() < TOL); // 1/3 + 1/4 + 4/5
        assert!((g1 - Vector3::new(2.0 / 3.0, 0.5, 0.8)).norm() < TOL);

        let (v2, g2) = h.eval_with_grad(&Vector3::new(3.0, 2.0, 0.0));
        assert!((v2 - 4.0).abs() < TOL);
        assert!((g2 - Vector3::new(2.0, 1.0, 0.0)).norm() < TOL);
    }

    #[test]
    fn hamiltonian_rejects_nonpositive_inertia() {
        assert!(QuadraticHamiltonian::new(Vector3::new(1.0, 0.0, 1.0)).is_err());
        assert!(QuadraticHamiltonian::new(Vector3::new(1.0, -2.0, 1.0)).is_err());
        assert!(QuadraticHamiltonian::new(Vector3::new(1.0, f64::NAN, 1.0)).is_err());
    }

    #[test]
    fn casimir_frozen_value() {
        assert_eq!(casimir(&Vector3::zeros()), 0.0);
        assert!((casimir(&Vector3::new(1.0, 1.0, 2.0)) - 3.0).abs() < TOL);
    }

    #[test]
    fn bivector_matches_hand_entries_and_kernel() {
        assert_eq!(lie_poisson_bivector(&Vector3::zeros()), Matrix3::zeros());

        // Pi_ab = -eps_abc mu_c at mu = e3: only the (1,2)/(2,1) entries.
        let pi = lie_poisson_bivector(&Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(pi[(0, 1)], -1.0);
        assert_eq!(pi[(1, 0)], 1.0);
        assert_eq!(pi[(0, 2)], 0.0);
        assert_eq!(pi[(2, 0)], 0.0);
        assert_eq!(pi[(1, 2)], 0.0);
        assert_eq!(pi[(2, 1)], 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..50 {
            let mu = random_vec(&mut rng, 5.0);
            let pi = lie_poisson_bivector(&mu);
            assert!((pi + pi.transpose()).norm() == 0.0);
            // grad C = mu, and hat(mu) mu vanishes exactly in floating point.
            assert_eq!(pi * mu, Vector3::zeros());
        }
    }

    #[test]
    fn euler_rhs_frozen_value() {
        let h = QuadraticHamiltonian::default();
        let rhs = euler_rhs(&h, &Vector3::new(1.0, 1.0, 0.0));
        assert!((rhs - Vector3::new(0.0, 0.0, 1.0 / 6.0)).norm() < TOL);
    }

    #[test]
    fn euler_rhs_vanishes_on_principal_axes() {
        let h = QuadraticHamiltonian::default();
        for j in 0..3 {
            let mu = Vector3::ith(j, 2.0);
            assert_eq!(euler_rhs(&h, &mu), Vector3::zeros());
        }
    }

    #[test]
    fn euler_rhs_is_orthogonal_to_both_gradients() {
        let h = QuadraticHamiltonian::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let mu = random_vec(&mut rng, 10.0);
            let (_, grad) = h.eval_with_grad(&mu);
            let rhs = euler_rhs(&h, &mu);
            // Round-off scale: products of entries up to ~10 x ~7.
            assert!(grad.dot(&rhs).abs() < 1e-13);
            assert!(mu.dot(&rhs).abs() < 1e-13);
        }
    }

    #[test]
    fn rk4_zero_steps_returns_initial_state_only() {
        let h = QuadraticHamiltonian::default();
        let mu0 = Vector3::new(1.0, 1.0, 2.0);
        let record = rk4_rollout(&h, mu0, 0.01, 0);
        assert_eq!(record.len(), 1);
        assert_eq!(record.states[0], mu0);
        assert!((record.hamiltonian_values[0] - h.value(&mu0)).abs() < TOL);
        assert!((record.casimir_values[0] - casimir(&mu0)).abs() < TOL);
    }

    #[test]
    fn rk4_fixes_principal_axis_equilibria() {
        let h = QuadraticHamiltonian::default();
        let mu0 = Vector3::new(0.0, 0.0, 1.5);
        let record = rk4_rollout(&h, mu0, 0.05, 200);
        for state in &record.states {
            assert!((state - mu0).norm() < TOL);
        }
    }

    #[test]
    fn rk4_energy_drift_is_negligible_at_fine_step() {
        let h = QuadraticHamiltonian::default();
        let record = rk4_rollout(&h, Vector3::new(1.0, 1.0, 2.0), 1e-3, 1000);
        assert_eq!(record.len(), 1001);
        let h0 = record.hamiltonian_values[0];
        let hn = record.hamiltonian_values[1000];
        assert!((hn - h0).abs() <= 1e-9);
        let c0 = record.casimir_values[0];
        let cn = record.casimir_values[1000];
        assert!((cn - c0).abs() <= 1e-9);
    }
}
