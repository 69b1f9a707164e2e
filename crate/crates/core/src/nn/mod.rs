//! Dense building blocks with explicit forward/backward pairs: parameters,
//! initialization, activations, softmax, dropout, Adam and the
//! finite-difference gradient checker.

mod activation;
mod adam;
mod gradcheck;
mod init;
mod params;

pub use activation::{
    activation, activation_backward, dropout_mask, log_softmax_rows, softmax_rows,
    softmax_rows_backward, Activation,
};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, GRAD_CHECK_FLOOR};
pub use init::{glorot_init, seeded_rng, Rng64};
pub use params::{Param, ParamId, ParamStore};

use crate::error::Result;
use crate::tensor::DenseMatrix;

/// `x · w (+ b)`.
pub fn affine(x: &DenseMatrix, w: &DenseMatrix, b: Option<&DenseMatrix>) -> Result<DenseMatrix> {
    let mut out = x.matmul(w)?;
    if let Some(b) = b {
        out.add_row_broadcast(b)?;
    }
    Ok(out)
}

/// Gradients of [`affine`].
#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub d_x: DenseMatrix,
    pub d_w: DenseMatrix,
    pub d_b: DenseMatrix,
}

pub fn affine_backward(
    x: &DenseMatrix,
    w: &DenseMatrix,
    d_out: &DenseMatrix,
) -> Result<AffineGrads> {
    Ok(AffineGrads {
        d_x: d_out.matmul_nt(w)?,
        d_w: x.matmul_tn(d_out)?,
        d_b: d_out.column_sum(),
    })
}
