use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::NnError;
use crate::linalg::{Matrix, Vector};
use crate::scalar::Scalar;

/// Weights of one LSTM cell. Gate order throughout the crate is
/// input (`i`), forget (`f`), candidate (`g`), output (`o`).
///
/// `w_*` are `hidden x input`, `u_*` are `hidden x hidden`, `b_*` have length `hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams<T> {
    pub w_i: Matrix<T>,
    pub w_f: Matrix<T>,
    pub w_g: Matrix<T>,
    pub w_o: Matrix<T>,
    pub u_i: Matrix<T>,
    pub u_f: Matrix<T>,
    pub u_g: Matrix<T>,
    pub u_o: Matrix<T>,
    pub b_i: Vector<T>,
    pub b_f: Vector<T>,
    pub b_g: Vector<T>,
    pub b_o: Vector<T>,
}

impl<T: Scalar> LstmCellParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_i: Matrix::zeros(hidden, input),
            w_f: Matrix::zeros(hidden, input),
            w_g: Matrix::zeros(hidden, input),
            w_o: Matrix::zeros(hidden, input),
            u_i: Matrix::zeros(hidden, hidden),
            u_f: Matrix::zeros(hidden, hidden),
            u_g: Matrix::zeros(hidden, hidden),
            u_o: Matrix::zeros(hidden, hidden),
            b_i: Vector::zeros(hidden),
            b_f: Vector::zeros(hidden),
            b_g: Vector::zeros(hidden),
            b_o: Vector::zeros(hidden),
        }
    }

    pub fn input_width(&self) -> usize {
        self.w_i.cols()
    }

    pub fn hidden_width(&self) -> usize {
        self.w_i.rows()
    }

    pub(crate) fn input_weights(&self) -> [&Matrix<T>; 4] {
        [&self.w_i, &self.w_f, &self.w_g, &self.w_o]
    }

    pub(crate) fn recurrent_weights(&self) -> [&Matrix<T>; 4] {
        [&self.u_i, &self.u_f, &self.u_g, &self.u_o]
    }

    pub(crate) fn biases(&self) -> [&Vector<T>; 4] {
        [&self.b_i, &self.b_f, &self.b_g, &self.b_o]
    }

    /// The twelve parameter blocks in serialization order:
    /// `W_i W_f W_g W_o U_i U_f U_g U_o b_i b_f b_g b_o`.
    pub fn tensors(&self) -> [&[T]; 12] {
        [
            self.w_i.as_slice(),
            self.w_f.as_slice(),
            self.w_g.as_slice(),
            self.w_o.as_slice(),
            self.u_i.as_slice(),
            self.u_f.as_slice(),
            self.u_g.as_slice(),
            self.u_o.as_slice(),
            self.b_i.as_slice(),
            self.b_f.as_slice(),
            self.b_g.as_slice(),
            self.b_o.as_slice(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 12] {
        [
            self.w_i.as_mut_slice(),
            self.w_f.as_mut_slice(),
            self.w_g.as_mut_slice(),
            self.w_o.as_mut_slice(),
            self.u_i.as_mut_slice(),
            self.u_f.as_mut_slice(),
            self.u_g.as_mut_slice(),
            self.u_o.as_mut_slice(),
            self.b_i.as_mut_slice(),
            self.b_f.as_mut_slice(),
            self.b_g.as_mut_slice(),
            self.b_o.as_mut_slice(),
        ]
    }

    fn check(&self) -> Result<(), NnError> {
        let (hidden, input) = self.w_i.shape();
        let w_ok = self.input_weights().iter().all(|m| m.shape() == (hidden, input));
        let u_ok = self.recurrent_weights().iter().all(|m| m.shape() == (hidden, hidden));
        let b_ok = self.biases().iter().all(|b| b.len() == hidden);
        if w_ok && u_ok && b_ok {
            Ok(())
        } else {
            Err(NnError::Params(format!(
                "gate blocks of a {input}->{hidden} cell disagree in shape"
            )))
        }
    }
}

/// Layer widths and head size; everything needed to allocate an [`LstmParams`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub layer_cells: Vec<usize>,
    pub bidirectional: bool,
    pub classes: usize,
}

impl Architecture {
    pub fn representation_width(&self) -> usize {
        let last = self.layer_cells.last().copied().unwrap_or(0);
        if self.bidirectional {
            2 * last
        } else {
            last
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        if self.input == 0 || self.classes == 0 || self.layer_cells.is_empty() {
            return Err(NnError::Params(format!("degenerate architecture {self:?}")));
        }
        if self.layer_cells.contains(&0) {
            return Err(NnError::Params("layer with zero cells".into()));
        }
        Ok(())
    }
}

/// Full trainable parameter set: a forward LSTM stack, an optional reverse-direction
/// stack of identical shape, and a dense head over the final representation.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    pub layers: Vec<LstmCellParams<T>>,
    pub backward_layers: Option<Vec<LstmCellParams<T>>>,
    /// `classes x representation_width`
    pub dense_w: Matrix<T>,
    pub dense_b: Vector<T>,
}

/// Gradients share the parameter layout.
pub type ParamGrads<T> = LstmParams<T>;

impl<T: Scalar> LstmParams<T> {
    pub fn zeros(arch: &Architecture) -> Result<Self, NnError> {
        arch.validate()?;
        let stack = || {
            let mut input = arch.input;
            arch.layer_cells
                .iter()
                .map(|&h| {
                    let cell = LstmCellParams::zeros(input, h);
                    input = h;
                    cell
                })
                .collect::<Vec<_>>()
        };
        Ok(Self {
            layers: stack(),
            backward_layers: arch.bidirectional.then(stack),
            dense_w: Matrix::zeros(arch.classes, arch.representation_width()),
            dense_b: Vector::zeros(arch.classes),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let zero_stack = |layers: &[LstmCellParams<T>]| {
            layers
                .iter()
                .map(|l| LstmCellParams::zeros(l.input_width(), l.hidden_width()))
                .collect::<Vec<_>>()
        };
        Self {
            layers: zero_stack(&self.layers),
            backward_layers: self.backward_layers.as_deref().map(zero_stack),
            dense_w: Matrix::zeros(self.dense_w.rows(), self.dense_w.cols()),
            dense_b: Vector::zeros(self.dense_b.len()),
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input: self.input_width(),
            layer_cells: self.layers.iter().map(LstmCellParams::hidden_width).collect(),
            bidirectional: self.is_bidirectional(),
            classes: self.num_classes(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn num_classes(&self) -> usize {
        self.dense_b.len()
    }

    pub fn is_bidirectional(&self) -> bool {
        self.backward_layers.is_some()
    }

    pub fn representation_width(&self) -> usize {
        let last = self.layers.last().map_or(0, LstmCellParams::hidden_width);
        if self.is_bidirectional() {
            2 * last
        } else {
            last
        }
    }

    /// Checks the chaining and mirroring invariants.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.layers.is_empty() {
            return Err(NnError::Params("no LSTM layers".into()));
        }
        let check_stack = |layers: &[LstmCellParams<T>]| -> Result<(), NnError> {
            for (k, pair) in layers.windows(2).enumerate() {
                if pair[1].input_width() != pair[0].hidden_width() {
                    return Err(NnError::Params(format!(
                        "layer {} input width {} does not match layer {} hidden width {}",
                        k + 1,
                        pair[1].input_width(),
                        k,
                        pair[0].hidden_width()
                    )));
                }
            }
            layers.iter().try_for_each(LstmCellParams::check)
        };
        check_stack(&self.layers)?;
        if let Some(bwd) = &self.backward_layers {
            check_stack(bwd)?;
            let mirrored = bwd.len() == self.layers.len()
                && bwd.iter().zip(&self.layers).all(|(b, f)| {
                    (b.input_width(), b.hidden_width()) == (f.input_width(), f.hidden_width())
                });
            if !mirrored {
                return Err(NnError::Params(
                    "backward layers do not mirror forward layer shapes".into(),
                ));
            }
        }
        if self.dense_w.shape() != (self.dense_b.len(), self.representation_width()) {
            return Err(NnError::Params(format!(
                "dense head {:?} does not fit representation width {} and {} classes",
                self.dense_w.shape(),
                self.representation_width(),
                self.dense_b.len()
            )));
        }
        Ok(())
    }

    /// All parameter blocks in the fixed traversal order used by the optimizer and
    /// the model file: forward layers, then backward layers, then `dense_w`, `dense_b`.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for layer in self.layers.iter().chain(self.backward_layers.iter().flatten()) {
            out.extend(layer.tensors());
        }
        out.push(self.dense_w.as_slice());
        out.push(self.dense_b.as_slice());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for layer in self.layers.iter_mut().chain(self.backward_layers.iter_mut().flatten()) {
            out.extend(layer.tensors_mut());
        }
        out.push(self.dense_w.as_mut_slice());
        out.push(self.dense_b.as_mut_slice());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Flattened copy of every parameter in traversal order.
    pub fn to_flat(&self) -> Vec<T> {
        self.tensors().concat()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + s;
            }
        }
    }

    pub fn scale_in_place(&mut self, k: T) {
        for t in self.tensors_mut() {
            for x in t {
                *x = *x * k;
            }
        }
    }

    pub fn global_norm(&self) -> T {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(T::zero(), |acc, &x| acc + x * x)
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

fn glorot<T: Scalar>(m: &mut Matrix<T>, rng: &mut ChaCha8Rng) {
    let (fan_out, fan_in) = m.shape();
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in m.as_mut_slice() {
        *w = T::of(rng.gen_range(-limit..=limit));
    }
}

/// Glorot-uniform weights, zero biases except the forget gate (1.0).
/// Deterministic for a given `(arch, seed)`.
pub fn init_params<T: Scalar>(arch: &Architecture, seed: u64) -> Result<LstmParams<T>, NnError> {
    let mut params = LstmParams::zeros(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let LstmParams {
        layers,
        backward_layers,
        dense_w,
        ..
    } = &mut params;
    for cell in layers.iter_mut().chain(backward_layers.iter_mut().flatten()) {
        for m in [
            &mut cell.w_i,
            &mut cell.w_f,
            &mut cell.w_g,
            &mut cell.w_o,
            &mut cell.u_i,
            &mut cell.u_f,
            &mut cell.u_g,
            &mut cell.u_o,
        ] {
            glorot(m, &mut rng);
        }
        cell.b_f = Vector::filled(cell.hidden_width(), T::one());
    }
    glorot(dense_w, &mut rng);
    Ok(params)
}
