//! Batched residual losses and their exact weight gradients.
//!
//! The training objective is `L(W) = mean_j r_j^2` where each residual
//! `r_j = residual_fn(eval_input_grad(W, t_j, p_j), t_j, p_j)` contains
//! *input derivatives* of the network. Differentiating `L` with respect to
//! `W` is therefore second-order differentiation. It is realized exactly:
//!
//! * forward: the value row and the four tangent rows of every point are
//!   stacked into one `(5n, width)` matrix per layer, so the whole
//!   augmented pass is a single GEMM per layer plus elementwise tanh
//!   bookkeeping;
//! * reverse: the adjoint of that augmented pass is transposed through the
//!   same stacks (two GEMMs per layer), with the `tanh''` term coupling the
//!   tangent adjoints back into the value rows.
//!
//! Chunking and determinism: the batch is split into fixed-size chunks;
//! chunks may be evaluated concurrently (the `parallel` feature), but their
//! partial sums are always combined in chunk order, so the result is
//! bit-identical across thread counts and across the parallel/serial entry
//! points. There is no non-deterministic mode.

use nalgebra::Vector3;
use ndarray::{s, Array2, Axis, Zip};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::{GeneratingFunctionNet, InputGradient, NetGrad};
use crate::error::{Error, Result};

/// One collocation point: time `t` and momentum coordinates `p`.
pub type CollocationPoint = (f64, Vector3<f64>);

/// Number of points evaluated per blocked forward/backward pass. Fixed (not
/// configurable) so that summation order, and hence every trained weight,
/// is reproducible across machines and thread counts.
const CHUNK_SIZE: usize = 512;

/// Partial derivatives of a residual with respect to the entries of the
/// [`InputGradient`] it was evaluated on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPartials {
    /// `dr / dS`.
    pub d_value: f64,
    /// `dr / d(dS/dt)`.
    pub d_dt: f64,
    /// `dr / d(dS/dp)`.
    pub d_dp: Vector3<f64>,
}

/// A pointwise residual of the trained equation.
///
/// Implementations must be pure: the same inputs yield the same outputs.
/// Returning [`Error::ChartViolation`] marks the point as unusable at the
/// current weights — the batch evaluator drops it from the mean and counts
/// it — while any other error aborts the whole evaluation.
pub trait ResidualFn: Sync {
    /// Residual together with its derivatives in the `InputGradient` slots
    /// (the data the reverse pass needs to seed the weight gradient).
    fn eval_with_partials(
        &self,
        grad: &InputGradient,
        t: f64,
        p: &Vector3<f64>,
    ) -> Result<(f64, ResidualPartials)>;

    /// Residual value only.
    fn eval(&self, grad: &InputGradient, t: f64, p: &Vector3<f64>) -> Result<f64> {
        Ok(self.eval_with_partials(grad, t, p)?.0)
    }
}

/// Result of one batched loss/gradient evaluation.
#[derive(Debug, Clone)]
pub struct BatchEval {
    /// `mean(r^2)` over the points that stayed in the chart.
    pub loss: f64,
    /// Exact gradient of `loss` with respect to all weights and biases.
    pub grad: NetGrad,
    /// Points that entered the mean.
    pub kept: usize,
    /// Points dropped for chart violations.
    pub dropped: usize,
}

struct ChunkOut {
    sum_sq: f64,
    /// Unscaled accumulator `sum_i r_i * d r_i / d theta`.
    grad: NetGrad,
    kept: usize,
    dropped: usize,
}

/// Forward + reverse pass over one chunk of points.
fn chunk_eval(
    net: &GeneratingFunctionNet,
    pts: &[CollocationPoint],
    residual: &(impl ResidualFn + ?Sized),
) -> Result<ChunkOut> {
    let n = pts.len();
    let rows = 5 * n;
    let last = net.n_layers() - 1;

    // Stacked input: n value rows [t, p1, p2, p3], then four n-row tangent
    // blocks holding the unit seed of each input coordinate.
    let mut a = Array2::<f64>::zeros((rows, net.layer_sizes[0]));
    for (i, (t, p)) in pts.iter().enumerate() {
        a[[i, 0]] = *t;
        a[[i, 1]] = p.x;
        a[[i, 2]] = p.y;
        a[[i, 3]] = p.z;
        for k in 0..4 {
            a[[(1 + k) * n + i, k]] = 1.0;
        }
    }

    // inputs[l] = stacked input of layer l; for hidden layers additionally
    // keep the pre-activation tangent rows (the tanh'' term needs them).
    let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(net.n_layers());
    let mut tangent_pre: Vec<Array2<f64>> = Vec::with_capacity(last);
    let mut output = None;
    for (l, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
        inputs.push(a);
        let mut z = inputs.last().unwrap().dot(&w.t());
        {
            // The bias feeds only the value rows; tangents are bias-free.
            let mut zv = z.slice_mut(s![0..n, ..]);
            zv += b;
        }
        if l == last {
            output = Some(z);
            break;
        }
        let (mut v_rows, mut t_rows) = z.view_mut().split_at(Axis(0), n);
        v_rows.mapv_inplace(f64::tanh);
        tangent_pre.push(t_rows.to_owned());
        let v = v_rows.view();
        for k in 0..4 {
            let mut block = t_rows.slice_mut(s![k * n..(k + 1) * n, ..]);
            Zip::from(&mut block)
                .and(&v)
                .for_each(|u, &vv| *u *= 1.0 - vv * vv);
        }
        a = z;
    }
    let output = output.expect("network has at least one layer");

    // Residuals and adjoint seeds. With S = t*N the raw outputs map to the
    // input gradient as S = t*v, dS/dt = v + t*d0, dS/dp_k = t*d_k, so the
    // residual partials pick up the same t factors on the way back.
    let mut seeds = Array2::<f64>::zeros((rows, 1));
    let mut sum_sq = 0.0;
    let mut kept = 0usize;
    let mut dropped = 0usize;
    for (i, (t, p)) in pts.iter().enumerate() {
        let v = output[[i, 0]];
        let d = [
            output[[n + i, 0]],
            output[[2 * n + i, 0]],
            output[[3 * n + i, 0]],
            output[[4 * n + i, 0]],
        ];
        let grad_in = InputGradient {
            value: t * v,
            dt: v + t * d[0],
            dp: Vector3::new(t * d[1], t * d[2], t * d[3]),
        };
        match residual.eval_with_partials(&grad_in, *t, p) {
            Ok((r, parts)) => {
                sum_sq += r * r;
                kept += 1;
                seeds[[i, 0]] = r * (parts.d_value * t + parts.d_dt);
                seeds[[n + i, 0]] = r * parts.d_dt * t;
                seeds[[2 * n + i, 0]] = r * parts.d_dp.x * t;
                seeds[[3 * n + i, 0]] = r * parts.d_dp.y * t;
                seeds[[4 * n + i, 0]] = r * parts.d_dp.z * t;
            }
            Err(Error::ChartViolation { .. }) => dropped += 1,
            Err(e) => return Err(e),
        }
    }

    // Reverse pass: push the seed adjoints back through the stacked layers.
    let mut grad = NetGrad::zeros_like(net);
    let mut out_bar = seeds;
    for l in (0..net.n_layers()).rev() {
        let z_bar = if l == last {
            out_bar
        } else {
            // out_bar is the adjoint of the activated stack. Value rows see
            // both their own tanh' factor and the tanh'' coupling from the
            // tangent rows; tangent rows see tanh' alone:
            //   z_bar_v = phi' * (a_bar_v - 2 v * sum_k a_bar_k * u_k)
            //   z_bar_k = phi' * a_bar_k,      phi' = 1 - v^2.
            let width = net.layer_sizes[l + 1];
            let v = inputs[l + 1].slice(s![0..n, ..]);
            let u = &tangent_pre[l];
            let (g_v, g_t) = out_bar.view().split_at(Axis(0), n);
            let mut coupling = Array2::<f64>::zeros((n, width));
            for k in 0..4 {
                let gk = g_t.slice(s![k * n..(k + 1) * n, ..]);
                let uk = u.slice(s![k * n..(k + 1) * n, ..]);
                Zip::from(&mut coupling)
                    .and(&gk)
                    .and(&uk)
                    .for_each(|c, &g, &uu| *c += g * uu);
            }
            let mut z_bar = Array2::<f64>::zeros((rows, width));
            {
                let (mut zv, mut zt) = z_bar.view_mut().split_at(Axis(0), n);
                Zip::from(&mut zv)
                    .and(&g_v)
                    .and(&v)
                    .and(&coupling)
                    .for_each(|z, &g, &vv, &c| {
                        *z = (1.0 - vv * vv) * (g - 2.0 * vv * c);
                    });
                for k in 0..4 {
                    let mut block = zt.slice_mut(s![k * n..(k + 1) * n, ..]);
                    let gk = g_t.slice(s![k * n..(k + 1) * n, ..]);
                    Zip::from(&mut block)
                        .and(&gk)
                        .and(&v)
                        .for_each(|z, &g, &vv| *z = g * (1.0 - vv * vv));
                }
            }
            z_bar
        };
        grad.weights[l] = z_bar.t().dot(&inputs[l]);
        grad.biases[l] = z_bar.slice(s![0..n, ..]).sum_axis(Axis(0));
        if l > 0 {
            out_bar = z_bar.dot(&net.weights[l]);
        } else {
            out_bar = z_bar; // unused; keeps the variable alive for the move
        }
    }

    Ok(ChunkOut {
        sum_sq,
        grad,
        kept,
        dropped,
    })
}

fn reduce(parts: Vec<ChunkOut>, total: usize) -> Result<BatchEval> {
    let mut sum_sq = 0.0;
    let mut kept = 0usize;
    let mut dropped = 0usize;
    let mut grad: Option<NetGrad> = None;
    // Fixed chunk order regardless of which thread produced which part.
    for part in parts {
        sum_sq += part.sum_sq;
        kept += part.kept;
        dropped += part.dropped;
        match grad.as_mut() {
            None => grad = Some(part.grad),
            Some(g) => g.add_assign(&part.grad),
        }
    }
    if kept == 0 {
        return Err(Error::EmptyBatch(format!(
            "all {total} points were dropped for chart violations"
        )));
    }
    let mut grad = grad.expect("at least one chunk");
    grad.scale(2.0 / kept as f64);
    Ok(BatchEval {
        loss: sum_sq / kept as f64,
        grad,
        kept,
        dropped,
    })
}

/// `mean(r^2)` over the batch and its exact weight gradient.
///
/// Chunks run concurrently when the `parallel` feature is active; the
/// result is bit-identical to [`loss_and_weight_grad_serial`] either way
/// (ordered reduction, fixed chunk size).
pub fn loss_and_weight_grad(
    net: &GeneratingFunctionNet,
    batch: &[CollocationPoint],
    residual: &(impl ResidualFn + ?Sized),
) -> Result<BatchEval> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch("batch contains no points".into()));
    }
    #[cfg(feature = "parallel")]
    let parts = batch
        .par_chunks(CHUNK_SIZE)
        .map(|chunk| chunk_eval(net, chunk, residual))
        .collect::<Result<Vec<_>>>()?;
    #[cfg(not(feature = "parallel"))]
    let parts = batch
        .chunks(CHUNK_SIZE)
        .map(|chunk| chunk_eval(net, chunk, residual))
        .collect::<Result<Vec<_>>>()?;
    reduce(parts, batch.len())
}

/// Single-threaded evaluation path; same chunking, same summation order,
/// and therefore bit-identical results to [`loss_and_weight_grad`].
pub fn loss_and_weight_grad_serial(
    net: &GeneratingFunctionNet,
    batch: &[CollocationPoint],
    residual: &(impl ResidualFn + ?Sized),
) -> Result<BatchEval> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch("batch contains no points".into()));
    }
    let parts = batch
        .chunks(CHUNK_SIZE)
        .map(|chunk| chunk_eval(net, chunk, residual))
        .collect::<Result<Vec<_>>>()?;
    reduce(parts, batch.len())
}
