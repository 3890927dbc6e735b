//! The generating-function network `S(t, p; W)`.
//!
//! A plain tanh MLP `N` with inputs `(t, p1, p2, p3)` and scalar output,
//! wrapped in the structural factor `S = t * N(t, p; W)`. The factor makes
//! `S(0, ., W) = 0` for every weight configuration, so the induced one-step
//! map at step size zero is the identity by construction instead of by
//! training.
//!
//! Submodules: [`forward`] evaluates one point together with its four input
//! derivatives (forward-mode tangents); [`batch`] evaluates a whole
//! collocation batch and differentiates residual losses with respect to the
//! weights (reverse-mode over the forward-mode augmented pass, so the weight
//! gradient of an expression containing input derivatives is exact).

mod batch;
mod forward;

pub use batch::{
    loss_and_weight_grad, loss_and_weight_grad_serial, BatchEval, CollocationPoint, ResidualFn,
    ResidualPartials,
};

use std::io::Read;
use std::path::Path;

use nalgebra::Vector3;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network input dimension: `(t, p1, p2, p3)`.
pub const INPUT_DIM: usize = 4;

/// Value `S` and its exact derivatives with respect to the four inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputGradient {
    /// `S(t, p; W)`.
    pub value: f64,
    /// `dS/dt`.
    pub dt: f64,
    /// `dS/dp`.
    pub dp: Vector3<f64>,
}

/// Weights and biases of the MLP underlying `S(t, p; W) = t * N(t, p; W)`.
///
/// Hidden layers apply tanh; the scalar output layer is linear. Weight
/// matrices are stored `(fan_out, fan_in)` so a layer computes `W a + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingFunctionNet {
    pub(crate) layer_sizes: Vec<usize>,
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
    /// Initialization seed, if the net came from [`Self::init_xavier`].
    pub seed: Option<u64>,
    /// Digest of the training configuration that produced these weights, if
    /// the net came out of a training run.
    pub training_config_digest: Option<String>,
}

fn validate_layer_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "layer_sizes needs at least input and output entries, got {layer_sizes:?}"
        )));
    }
    if layer_sizes[0] != INPUT_DIM {
        return Err(Error::InvalidConfig(format!(
            "input layer must have size {INPUT_DIM} for (t, p), got {}",
            layer_sizes[0]
        )));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(Error::InvalidConfig(format!(
            "output layer must have size 1, got {}",
            layer_sizes.last().unwrap()
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl GeneratingFunctionNet {
    /// Uniform Xavier initialization: each weight entry of a layer with fan-in
    /// `n_in` and fan-out `n_out` is drawn uniformly from
    /// `[-sqrt(6/(n_in+n_out)), +sqrt(6/(n_in+n_out))]`; biases start at zero.
    /// Deterministic for a given seed (entries drawn layer by layer in
    /// row-major order).
    pub fn init_xavier(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        validate_layer_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            let w = Array2::from_shape_fn((n_out, n_in), |_| rng.random_range(-bound..=bound));
            weights.push(w);
            biases.push(Array1::zeros(n_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            seed: Some(seed),
            training_config_digest: None,
        })
    }

    /// Builds a net from explicit parameters (shapes must chain correctly).
    pub fn from_parameters(
        layer_sizes: Vec<usize>,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        validate_layer_sizes(&layer_sizes)?;
        let n_layers = layer_sizes.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::DimensionMismatch(format!(
                "expected {n_layers} weight matrices and bias vectors, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for (l, pair) in layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            if weights[l].dim() != (n_out, n_in) {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l} weights have shape {:?}, expected ({n_out}, {n_in})",
                    weights[l].dim()
                )));
            }
            if biases[l].len() != n_out {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l} bias has length {}, expected {n_out}",
                    biases[l].len()
                )));
            }
        }
        let finite = weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidConfig(
                "network parameters must all be finite".into(),
            ));
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            seed: None,
            training_config_digest: None,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Per-layer weight matrices, `(fan_out, fan_in)` each.
    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    /// Per-layer bias vectors.
    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    /// Mutable parameter access for optimizers and finite-difference probes.
    /// Shapes must be preserved; entries must stay finite.
    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    /// See [`Self::weights_mut`].
    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    /// Total number of trainable parameters (weights plus biases).
    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Number of weight layers (= `layer_sizes.len() - 1`).
    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Writes the weight file (see [`WeightsFile`]) with full round-trip
    /// float precision; loading it back reproduces the net bit for bit.
    pub fn save_weights(&self, path: &Path) -> Result<()> {
        let doc = WeightsFile {
            format_version: WEIGHTS_FORMAT_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            activation: "tanh".to_string(),
            structural_t_factor: true,
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: self.biases.iter().map(|b| b.to_vec()).collect(),
            seed: self.seed,
            training_config_digest: self.training_config_digest.clone(),
        };
        let file = std::fs::File::create(path)?;
        let mut writer = std::io::BufWriter::new(file);
        serde_json::to_writer_pretty(&mut writer, &doc)?;
        use std::io::Write;
        writeln!(writer)?;
        Ok(())
    }

    /// Reads a weight file, validating the format tag, activation, structural
    /// factor, and every array shape against `layer_sizes`.
    pub fn load_weights(path: &Path) -> Result<Self> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        let doc: WeightsFile = serde_json::from_str(&text)?;
        if doc.format_version != WEIGHTS_FORMAT_VERSION {
            return Err(Error::MalformedFile(format!(
                "unsupported weight file format_version {} (expected {WEIGHTS_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.activation != "tanh" {
            return Err(Error::MalformedFile(format!(
                "unsupported activation {:?} (only \"tanh\" is implemented)",
                doc.activation
            )));
        }
        if !doc.structural_t_factor {
            return Err(Error::MalformedFile(
                "weight file declares structural_t_factor = false; this \
                 implementation always evaluates S = t * N"
                    .into(),
            ));
        }
        validate_layer_sizes(&doc.layer_sizes)?;
        let n_layers = doc.layer_sizes.len() - 1;
        if doc.weights.len() != n_layers || doc.biases.len() != n_layers {
            return Err(Error::DimensionMismatch(format!(
                "weight file holds {} weight arrays and {} bias arrays for {n_layers} layers",
                doc.weights.len(),
                doc.biases.len()
            )));
        }
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for (l, pair) in doc.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let w = Array2::from_shape_vec((n_out, n_in), doc.weights[l].clone()).map_err(
                |_| {
                    Error::DimensionMismatch(format!(
                        "layer {l} weight array has {} entries, expected {}",
                        doc.weights[l].len(),
                        n_out * n_in
                    ))
                },
            )?;
            if doc.biases[l].len() != n_out {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l} bias array has {} entries, expected {n_out}",
                    doc.biases[l].len()
                )));
            }
            weights.push(w);
            biases.push(Array1::from_vec(doc.biases[l].clone()));
        }
        let mut net = Self::from_parameters(doc.layer_sizes, weights, biases)?;
        net.seed = doc.seed;
        net.training_config_digest = doc.training_config_digest;
        Ok(net)
    }
}

const WEIGHTS_FORMAT_VERSION: u32 = 1;

/// On-disk schema of the weight file: a self-describing JSON document with
/// row-major coefficient arrays.
#[derive(Serialize, Deserialize)]
struct WeightsFile {
    format_version: u32,
    layer_sizes: Vec<usize>,
    activation: String,
    structural_t_factor: bool,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training_config_digest: Option<String>,
}

/// Weight-shaped accumulator: the gradient of a scalar loss with respect to
/// every weight matrix and bias vector of a net.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrad {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl NetGrad {
    pub fn zeros_like(net: &GeneratingFunctionNet) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    /// Entrywise `self += other` (shapes must match).
    pub fn add_assign(&mut self, other: &NetGrad) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(1.0, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(1.0, b);
        }
    }

    /// Entrywise multiplication by a scalar.
    pub fn scale(&mut self, factor: f64) {
        for a in self.weights.iter_mut() {
            a.mapv_inplace(|v| v * factor);
        }
        for a in self.biases.iter_mut() {
            a.mapv_inplace(|v| v * factor);
        }
    }

    /// Maximum absolute entry (diagnostic).
    pub fn max_abs(&self) -> f64 {
        let w = self
            .weights
            .iter()
            .flat_map(|a| a.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        self.biases
            .iter()
            .flat_map(|a| a.iter())
            .fold(w, |m, v| m.max(v.abs()))
    }
}
