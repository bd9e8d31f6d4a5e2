//! One LSTM time step over a batch, forward and backward.
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)   o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```
//! Batched inputs are `batch x width` matrices, one sample per row.

use super::{LstmCellParams, NnError};
use crate::linalg::{matmul, matmul_transpose_b, transpose_a_matmul, Matrix, Vector};
use crate::scalar::Scalar;

/// Activations of one step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache<T> {
    pub x: Matrix<T>,
    pub h_prev: Matrix<T>,
    pub c_prev: Matrix<T>,
    pub i: Matrix<T>,
    pub f: Matrix<T>,
    pub g: Matrix<T>,
    pub o: Matrix<T>,
    pub c: Matrix<T>,
    pub tanh_c: Matrix<T>,
    pub h: Matrix<T>,
}

fn gate<T: Scalar>(
    x: &Matrix<T>,
    h: &Matrix<T>,
    w: &Matrix<T>,
    u: &Matrix<T>,
    b: &Vector<T>,
    squash: fn(T) -> T,
) -> Result<Matrix<T>, NnError> {
    let mut z = matmul_transpose_b(x, w)?;
    z.add_assign(&matmul_transpose_b(h, u)?);
    Ok(z.add_row_vector(b)?.map(squash))
}

/// `(h_t, c_t, cache)` for a single sample.
pub type StepOutput<T> = (Vector<T>, Vector<T>, CellCache<T>);
/// `(dx, dh_prev, dc_prev)`.
pub type StepGrads<T> = (Matrix<T>, Matrix<T>, Matrix<T>);

pub fn cell_forward<T: Scalar>(
    p: &LstmCellParams<T>,
    x: &Matrix<T>,
    h_prev: &Matrix<T>,
    c_prev: &Matrix<T>,
) -> Result<CellCache<T>, NnError> {
    let batch = x.rows();
    let hidden = p.hidden_width();
    if x.cols() != p.input_width() {
        return Err(NnError::Shape(format!(
            "cell expects input width {}, got {}",
            p.input_width(),
            x.cols()
        )));
    }
    if h_prev.shape() != (batch, hidden) || c_prev.shape() != (batch, hidden) {
        return Err(NnError::Shape(format!(
            "cell state must be {batch}x{hidden}, got h {:?} and c {:?}",
            h_prev.shape(),
            c_prev.shape()
        )));
    }
    let i = gate(x, h_prev, &p.w_i, &p.u_i, &p.b_i, T::sigmoid)?;
    let f = gate(x, h_prev, &p.w_f, &p.u_f, &p.b_f, T::sigmoid)?;
    let g = gate(x, h_prev, &p.w_g, &p.u_g, &p.b_g, T::tanh)?;
    let o = gate(x, h_prev, &p.w_o, &p.u_o, &p.b_o, T::sigmoid)?;

    let n = batch * hidden;
    let mut c = Vec::with_capacity(n);
    let mut tanh_c = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for k in 0..n {
        let ck = f.as_slice()[k] * c_prev.as_slice()[k] + i.as_slice()[k] * g.as_slice()[k];
        let tk = ck.tanh();
        c.push(ck);
        tanh_c.push(tk);
        h.push(o.as_slice()[k] * tk);
    }
    Ok(CellCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        i,
        f,
        g,
        o,
        c: Matrix::new(batch, hidden, c)?,
        tanh_c: Matrix::new(batch, hidden, tanh_c)?,
        h: Matrix::new(batch, hidden, h)?,
    })
}

/// Single-sample step: returns `(h_t, c_t, cache)`.
pub fn cell_step<T: Scalar>(
    p: &LstmCellParams<T>,
    x_t: &Vector<T>,
    h_prev: &Vector<T>,
    c_prev: &Vector<T>,
) -> Result<StepOutput<T>, NnError> {
    if x_t.is_empty() || h_prev.is_empty() || c_prev.is_empty() {
        return Err(NnError::Shape("empty cell input".into()));
    }
    let cache = cell_forward(p, &x_t.to_row(), &h_prev.to_row(), &c_prev.to_row())?;
    let h = Vector::from(cache.h.as_slice().to_vec());
    let c = Vector::from(cache.c.as_slice().to_vec());
    Ok((h, c, cache))
}

/// Backpropagates one step.
///
/// `dh` is the total gradient reaching `h_t` (from above and from step t+1),
/// `dc_next` the gradient reaching `c_t` from step t+1. Parameter gradients are
/// accumulated into `grads`; returns `(dx, dh_prev, dc_prev)`.
pub fn cell_backward<T: Scalar>(
    p: &LstmCellParams<T>,
    cache: &CellCache<T>,
    dh: &Matrix<T>,
    dc_next: &Matrix<T>,
    grads: &mut LstmCellParams<T>,
) -> Result<StepGrads<T>, NnError> {
    let (batch, hidden) = cache.h.shape();
    if dh.shape() != (batch, hidden) || dc_next.shape() != (batch, hidden) {
        return Err(NnError::TraceMismatch(format!(
            "step gradient {:?} does not match cached state {:?}",
            dh.shape(),
            cache.h.shape()
        )));
    }
    let one = T::one();
    let n = batch * hidden;
    let mut dz_i = Vec::with_capacity(n);
    let mut dz_f = Vec::with_capacity(n);
    let mut dz_g = Vec::with_capacity(n);
    let mut dz_o = Vec::with_capacity(n);
    let mut dc_prev = Vec::with_capacity(n);
    for k in 0..n {
        let (i, f, g, o) = (
            cache.i.as_slice()[k],
            cache.f.as_slice()[k],
            cache.g.as_slice()[k],
            cache.o.as_slice()[k],
        );
        let tc = cache.tanh_c.as_slice()[k];
        let dhk = dh.as_slice()[k];
        let d_o = dhk * tc;
        let dc = dc_next.as_slice()[k] + dhk * o * (one - tc * tc);
        dz_i.push(dc * g * i * (one - i));
        dz_f.push(dc * cache.c_prev.as_slice()[k] * f * (one - f));
        dz_g.push(dc * i * (one - g * g));
        dz_o.push(d_o * o * (one - o));
        dc_prev.push(dc * f);
    }
    let dz = [
        Matrix::new(batch, hidden, dz_i)?,
        Matrix::new(batch, hidden, dz_f)?,
        Matrix::new(batch, hidden, dz_g)?,
        Matrix::new(batch, hidden, dz_o)?,
    ];

    let mut dx = Matrix::zeros(batch, p.input_width());
    let mut dh_prev = Matrix::zeros(batch, hidden);
    let LstmCellParams {
        w_i,
        w_f,
        w_g,
        w_o,
        u_i,
        u_f,
        u_g,
        u_o,
        b_i,
        b_f,
        b_g,
        b_o,
    } = grads;
    let gw = [w_i, w_f, w_g, w_o];
    let gu = [u_i, u_f, u_g, u_o];
    let gb = [b_i, b_f, b_g, b_o];
    for (k, ((dw, du), db)) in gw.into_iter().zip(gu).zip(gb).enumerate() {
        dw.add_assign(&transpose_a_matmul(&dz[k], &cache.x)?);
        du.add_assign(&transpose_a_matmul(&dz[k], &cache.h_prev)?);
        for (acc, s) in db.as_mut_slice().iter_mut().zip(dz[k].column_sums().as_slice()) {
            *acc = *acc + *s;
        }
        dx.add_assign(&matmul(&dz[k], p.input_weights()[k])?);
        dh_prev.add_assign(&matmul(&dz[k], p.recurrent_weights()[k])?);
    }
    Ok((dx, dh_prev, Matrix::new(batch, hidden, dc_prev)?))
}
