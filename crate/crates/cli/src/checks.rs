//! The structure-preservation property suite behind `hjflow check`.
//!
//! Five properties, each reported exactly once with its measured value and
//! threshold. The first three are training-independent certifications of
//! the geometry/autodiff machinery; the last two exercise the integrator
//! itself on either a supplied model or a random-weight network — by
//! design they must pass either way.

use anyhow::Result;
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use hjflow::groupoid::{pushforward_check, GroupoidPoint, MapSelector};
use hjflow::integrator::{bisection_step, NewtonConfig};
use hjflow::lie_poisson::{casimir, QuadraticHamiltonian};
use hjflow::net::{loss_and_weight_grad, CollocationPoint, GeneratingFunctionNet};
use hjflow::train::HjResidual;
use hjflow::Error;

#[derive(Debug, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub tool_version: String,
    pub model: Option<String>,
    pub all_passed: bool,
    pub properties: Vec<PropertyResult>,
}

impl PropertyResult {
    fn new(name: &str, measured: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed: measured <= threshold,
            measured,
            threshold,
            detail,
        }
    }
}

fn ball(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-radius..radius),
            rng.random_range(-radius..radius),
            rng.random_range(-radius..radius),
        );
        if v.norm() < radius {
            return v;
        }
    }
}

/// Max pushforward residual of one momentum-map leg over 100 chart points.
fn pushforward_property(leg: MapSelector, name: &str) -> Result<PropertyResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_residual = 0.0f64;
    for _ in 0..100 {
        let g = GroupoidPoint::new(ball(&mut rng, 0.5), ball(&mut rng, 3.0));
        max_residual = max_residual.max(pushforward_check(leg, &g, 1e-6)?);
    }
    Ok(PropertyResult::new(
        name,
        max_residual,
        1e-5,
        "100 random chart points with |x|<0.5, |p|<3, finite-difference step 1e-6".into(),
    ))
}

/// Central-difference check of the weight gradient on a small net.
fn weight_gradient_property() -> Result<PropertyResult> {
    const DELTA: f64 = 1e-5;
    let reference = GeneratingFunctionNet::init_xavier(&[4, 8, 8, 1], 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let points: Vec<CollocationPoint> = (0..10)
        .map(|_| {
            let t = rng.random_range(0.0..0.15);
            let p = Vector3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            (t, p)
        })
        .collect();
    let residual = HjResidual::new(QuadraticHamiltonian::default());
    let base = loss_and_weight_grad(&reference, &points, &residual)?;
    let loss_of = |net: &GeneratingFunctionNet| -> Result<f64> {
        Ok(loss_and_weight_grad(net, &points, &residual)?.loss)
    };

    let mut net = reference.clone();
    let mut max_rel = 0.0f64;
    for l in 0..net.n_layers() {
        let (rows, cols) = net.weights()[l].dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = net.weights()[l][(i, j)];
                net.weights_mut()[l][(i, j)] = orig + DELTA;
                let plus = loss_of(&net)?;
                net.weights_mut()[l][(i, j)] = orig - DELTA;
                let minus = loss_of(&net)?;
                net.weights_mut()[l][(i, j)] = orig;
                let fd = (plus - minus) / (2.0 * DELTA);
                let rel = (base.grad.weights[l][(i, j)] - fd).abs() / (1.0 + fd.abs());
                max_rel = max_rel.max(rel);
            }
        }
        for i in 0..net.biases()[l].len() {
            let orig = net.biases()[l][i];
            net.biases_mut()[l][i] = orig + DELTA;
            let plus = loss_of(&net)?;
            net.biases_mut()[l][i] = orig - DELTA;
            let minus = loss_of(&net)?;
            net.biases_mut()[l][i] = orig;
            let fd = (plus - minus) / (2.0 * DELTA);
            let rel = (base.grad.biases[l][i] - fd).abs() / (1.0 + fd.abs());
            max_rel = max_rel.max(rel);
        }
    }
    Ok(PropertyResult::new(
        "weight_gradient_matches_finite_differences",
        max_rel,
        1e-6,
        "every parameter of a (4,8,8,1) net, 10 collocation points, central differences".into(),
    ))
}

/// `h = 0` must reproduce the state exactly, for any weights.
fn identity_property(net: &GeneratingFunctionNet) -> Result<PropertyResult> {
    let ncfg = NewtonConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut max_deviation = 0.0f64;
    for _ in 0..20 {
        let mu = ball(&mut rng, 3.0);
        let (next, _) = bisection_step(net, 0.0, &mu, &ncfg)?;
        max_deviation = max_deviation.max((next - mu).norm());
    }
    Ok(PropertyResult::new(
        "zero_step_is_identity",
        max_deviation,
        0.0,
        "20 random states, exact equality required".into(),
    ))
}

/// Casimir movement of converged steps, relative to `1 + |mu|^2`.
fn casimir_property(net: &GeneratingFunctionNet) -> Result<PropertyResult> {
    let ncfg = NewtonConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut max_rel = 0.0f64;
    let mut converged = 0usize;
    let mut attempted = 0usize;
    for h in [0.05, 0.1, 0.2] {
        for _ in 0..8 {
            let mu = ball(&mut rng, 4.0);
            attempted += 1;
            match bisection_step(net, h, &mu, &ncfg) {
                Ok((next, _)) => {
                    converged += 1;
                    let rel = (casimir(&next) - casimir(&mu)).abs() / (1.0 + mu.norm_squared());
                    max_rel = max_rel.max(rel);
                }
                // The property quantifies over converged steps only; a
                // Newton failure on a given (h, mu) is excluded, not a
                // violation.
                Err(Error::NewtonDidNotConverge { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(PropertyResult::new(
        "casimir_preserved_for_any_weights",
        max_rel,
        100.0 * ncfg.tolerance,
        format!("{converged}/{attempted} converged steps over h in {{0.05, 0.1, 0.2}}, random |mu| < 4"),
    ))
}

/// Runs the full suite. Integrator properties use `model` when given,
/// otherwise a random-weight network — they must hold for both.
pub fn run_checks(model: Option<&GeneratingFunctionNet>) -> Result<Vec<PropertyResult>> {
    let fallback;
    let net = match model {
        Some(net) => net,
        None => {
            fallback = GeneratingFunctionNet::init_xavier(&[4, 64, 64, 64, 1], 11)?;
            &fallback
        }
    };
    Ok(vec![
        pushforward_property(MapSelector::Source, "source_pushforward_is_poisson")?,
        pushforward_property(MapSelector::Target, "target_pushforward_is_anti_poisson")?,
        weight_gradient_property()?,
        identity_property(net)?,
        casimir_property(net)?,
    ])
}
