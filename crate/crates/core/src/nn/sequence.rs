//! Stacked and bidirectional sequence passes with backpropagation through time.

use super::cell::{cell_backward, cell_forward, CellCache};
use super::{LstmCellParams, LstmParams, NnError, ParamGrads};
use crate::linalg::{matmul, matmul_transpose_b, transpose_a_matmul, Matrix};
use crate::scalar::Scalar;

/// A batch of equal-length windows, stored time-major: `steps[t]` is `batch x features`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch<T> {
    steps: Vec<Matrix<T>>,
}

impl<T: Scalar> SequenceBatch<T> {
    pub fn new(steps: Vec<Matrix<T>>) -> Result<Self, NnError> {
        let first = steps
            .first()
            .ok_or_else(|| NnError::Shape("sequence needs at least one timestep".into()))?;
        if steps.iter().any(|s| s.shape() != first.shape()) {
            return Err(NnError::Shape("timesteps disagree in shape".into()));
        }
        Ok(Self { steps })
    }

    /// Gathers windows out of a flat `samples x timesteps x features` row-major tensor.
    pub fn gather(
        tensor: &[f64],
        timesteps: usize,
        features: usize,
        indices: &[usize],
    ) -> Result<Self, NnError> {
        let stride = timesteps * features;
        if indices.is_empty() || indices.iter().any(|&i| (i + 1) * stride > tensor.len()) {
            return Err(NnError::Shape(format!(
                "window indices out of range for a tensor of {} windows",
                tensor.len() / stride.max(1)
            )));
        }
        let steps = (0..timesteps)
            .map(|t| {
                Matrix::from_fn(indices.len(), features, |b, f| {
                    T::of(tensor[indices[b] * stride + t * features + f])
                })
            })
            .collect();
        Self::new(steps)
    }

    pub fn timesteps(&self) -> usize {
        self.steps.len()
    }

    pub fn batch_size(&self) -> usize {
        self.steps[0].rows()
    }

    pub fn features(&self) -> usize {
        self.steps[0].cols()
    }

    pub fn steps(&self) -> &[Matrix<T>] {
        &self.steps
    }

    pub fn reversed(&self) -> Self {
        Self {
            steps: self.steps.iter().rev().cloned().collect(),
        }
    }
}

/// Cached activations of one forward pass: `[layer][step]` for each direction,
/// with steps in processing order (reverse time for the backward direction).
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub forward: Vec<Vec<CellCache<T>>>,
    pub backward: Option<Vec<Vec<CellCache<T>>>>,
    /// Input to the dense head, `batch x representation_width`.
    pub representation: Matrix<T>,
}

impl<T> ForwardTrace<T> {
    pub fn timesteps(&self) -> usize {
        self.forward.first().map_or(0, Vec::len)
    }
}

fn run_stack<T: Scalar>(
    layers: &[LstmCellParams<T>],
    steps: &[Matrix<T>],
) -> Result<Vec<Vec<CellCache<T>>>, NnError> {
    let batch = steps[0].rows();
    let mut inputs: Vec<Matrix<T>> = steps.to_vec();
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let hidden = layer.hidden_width();
        let mut h = Matrix::zeros(batch, hidden);
        let mut c = Matrix::zeros(batch, hidden);
        let mut layer_caches = Vec::with_capacity(inputs.len());
        for x in &inputs {
            let cache = cell_forward(layer, x, &h, &c)?;
            h = cache.h.clone();
            c = cache.c.clone();
            layer_caches.push(cache);
        }
        inputs = layer_caches.iter().map(|cc| cc.h.clone()).collect();
        caches.push(layer_caches);
    }
    Ok(caches)
}

/// BPTT through one stack, seeded with the gradient on the last layer's final `h`.
fn backprop_stack<T: Scalar>(
    layers: &[LstmCellParams<T>],
    caches: &[Vec<CellCache<T>>],
    d_final: &Matrix<T>,
    grads: &mut [LstmCellParams<T>],
) -> Result<(), NnError> {
    if caches.len() != layers.len() || grads.len() != layers.len() {
        return Err(NnError::TraceMismatch(format!(
            "trace has {} layers, parameters have {}",
            caches.len(),
            layers.len()
        )));
    }
    let steps = caches[0].len();
    let batch = d_final.rows();
    // Gradient arriving at each step's output from the layer above.
    let mut d_out: Vec<Option<Matrix<T>>> = vec![None; steps];
    d_out[steps - 1] = Some(d_final.clone());
    for l in (0..layers.len()).rev() {
        let hidden = layers[l].hidden_width();
        if caches[l].len() != steps || caches[l][0].h.shape() != (batch, hidden) {
            return Err(NnError::TraceMismatch(format!("layer {l} trace shape mismatch")));
        }
        let mut dh_next = Matrix::zeros(batch, hidden);
        let mut dc_next = Matrix::zeros(batch, hidden);
        let mut d_in = Vec::with_capacity(steps);
        for t in (0..steps).rev() {
            let mut dh = dh_next;
            if let Some(d) = &d_out[t] {
                dh.add_assign(d);
            }
            let (dx, dh_prev, dc_prev) =
                cell_backward(&layers[l], &caches[l][t], &dh, &dc_next, &mut grads[l])?;
            d_in.push(Some(dx));
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        d_in.reverse();
        d_out = d_in;
    }
    Ok(())
}

/// Runs the recurrent stack(s) and the dense head, returning raw logits
/// (`batch x classes`) and the trace needed by [`backward_sequence`].
pub fn forward_sequence<T: Scalar>(
    p: &LstmParams<T>,
    window: &SequenceBatch<T>,
) -> Result<(Matrix<T>, ForwardTrace<T>), NnError> {
    if window.features() != p.input_width() {
        return Err(NnError::Shape(format!(
            "window feature width {} does not match model input width {}",
            window.features(),
            p.input_width()
        )));
    }
    let forward = run_stack(&p.layers, window.steps())?;
    let h_fwd = &forward.last().expect("nonempty stack").last().expect("nonempty sequence").h;
    let (backward, representation) = match &p.backward_layers {
        Some(bwd_layers) => {
            let rev = window.reversed();
            let backward = run_stack(bwd_layers, rev.steps())?;
            let h_bwd = &backward.last().expect("nonempty stack").last().expect("nonempty sequence").h;
            let rep = Matrix::hconcat(h_fwd, h_bwd)?;
            (Some(backward), rep)
        }
        None => (None, h_fwd.clone()),
    };
    let logits = matmul_transpose_b(&representation, &p.dense_w)?.add_row_vector(&p.dense_b)?;
    Ok((
        logits,
        ForwardTrace {
            forward,
            backward,
            representation,
        },
    ))
}

/// Exact gradients of a scalar loss with respect to every parameter, given the
/// loss gradient on the logits.
pub fn backward_sequence<T: Scalar>(
    p: &LstmParams<T>,
    trace: &ForwardTrace<T>,
    dlogits: &Matrix<T>,
) -> Result<ParamGrads<T>, NnError> {
    let batch = trace.representation.rows();
    if dlogits.shape() != (batch, p.num_classes())
        || trace.representation.cols() != p.representation_width()
        || trace.backward.is_some() != p.is_bidirectional()
    {
        return Err(NnError::TraceMismatch(format!(
            "dlogits {:?} / trace representation {:?} do not fit a model with {} classes and width {}",
            dlogits.shape(),
            trace.representation.shape(),
            p.num_classes(),
            p.representation_width()
        )));
    }
    let mut grads = p.zeros_like();
    grads.dense_w = transpose_a_matmul(dlogits, &trace.representation)?;
    grads.dense_b = dlogits.column_sums();
    let d_rep = matmul(dlogits, &p.dense_w)?;

    let hidden = p.layers.last().map_or(0, LstmCellParams::hidden_width);
    let d_fwd = d_rep.column_block(0, hidden);
    backprop_stack(&p.layers, &trace.forward, &d_fwd, &mut grads.layers)?;
    if let (Some(bwd_layers), Some(bwd_trace), Some(bwd_grads)) =
        (&p.backward_layers, &trace.backward, grads.backward_layers.as_mut())
    {
        let d_bwd = d_rep.column_block(hidden, hidden);
        backprop_stack(bwd_layers, bwd_trace, &d_bwd, bwd_grads)?;
    }
    Ok(grads)
}
