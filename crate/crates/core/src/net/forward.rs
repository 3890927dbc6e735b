//! Single-point evaluation of `S` and its input derivatives.
//!
//! Forward mode: alongside the activation vector, four tangent vectors (one
//! per network input) ride through every layer, so one pass yields `N` and
//! `dN/d(t, p)` exactly. The structural factor's product rule is applied at
//! the end: `S = t N`, `dS/dt = N + t dN/dt`, `dS/dp = t dN/dp`.
//!
//! This path is scalar code over `ndarray` vectors — fast enough for the
//! integrator's Newton solves, which evaluate a handful of points per step.
//! Training batches use the blocked GEMM path in [`super::batch`] instead.

use nalgebra::Vector3;
use ndarray::Array1;

use super::{GeneratingFunctionNet, InputGradient};

/// Raw MLP output `N` and its four input derivatives (no structural factor).
pub(crate) struct RawForward {
    pub value: f64,
    /// `[dN/dt, dN/dp1, dN/dp2, dN/dp3]`.
    pub tangents: [f64; 4],
}

impl GeneratingFunctionNet {
    pub(crate) fn raw_forward(&self, t: f64, p: &Vector3<f64>) -> RawForward {
        let mut value = Array1::from_vec(vec![t, p.x, p.y, p.z]);
        let mut tangents: [Array1<f64>; 4] = std::array::from_fn(|k| {
            let mut e = Array1::zeros(4);
            e[k] = 1.0;
            e
        });
        let last = self.n_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = w.dot(&value) + b;
            let u: [Array1<f64>; 4] = std::array::from_fn(|k| w.dot(&tangents[k]));
            if l == last {
                value = z;
                tangents = u;
            } else {
                value = z.mapv(f64::tanh);
                // tanh'(z) = 1 - tanh(z)^2, reusing the stored activation.
                for (k, u_k) in u.into_iter().enumerate() {
                    tangents[k] = &u_k * &value.mapv(|v| 1.0 - v * v);
                }
            }
        }
        RawForward {
            value: value[0],
            tangents: std::array::from_fn(|k| tangents[k][0]),
        }
    }

    /// `S(t, p; W) = t * N(t, p; W)`; exactly zero at `t = 0` for any weights.
    pub fn eval_s(&self, t: f64, p: &Vector3<f64>) -> f64 {
        t * self.raw_forward(t, p).value
    }

    /// Exact derivatives of [`Self::eval_s`] with respect to its four inputs.
    pub fn eval_input_grad(&self, t: f64, p: &Vector3<f64>) -> InputGradient {
        let raw = self.raw_forward(t, p);
        InputGradient {
            value: t * raw.value,
            dt: raw.value + t * raw.tangents[0],
            dp: Vector3::new(
                t * raw.tangents[1],
                t * raw.tangents[2],
                t * raw.tangents[3],
            ),
        }
    }
}
