//! Graph convolution `σ(S·X·W + b)` and its residual form
//! `σ(S̃·X·W0 + X·W1 + b)`.
//!
//! The product is evaluated as `S·(X·W)`: it has the same value as
//! `(S·X)·W` and is cheaper when `W` narrows the width.

use crate::error::{input_err, Result};
use crate::features::Features;
use crate::graph::{spmm, spmm_transpose, NormalizedAdjacency};
use crate::nn::{activation, activation_backward, Activation};
use crate::tensor::DenseMatrix;

/// Forward result; `pre` is kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GcnForward {
    pub out: DenseMatrix,
    pub pre: DenseMatrix,
}

#[derive(Debug, Clone)]
pub struct GcnGrads {
    pub d_x: Option<DenseMatrix>,
    pub d_w: DenseMatrix,
    pub d_w1: Option<DenseMatrix>,
    pub d_b: Option<DenseMatrix>,
}

fn check_shapes(s: &NormalizedAdjacency, x: &dyn Features, w: &DenseMatrix) -> Result<()> {
    if s.num_nodes() != x.rows() {
        return input_err(format!(
            "adjacency has {} nodes but features have {} rows",
            s.num_nodes(),
            x.rows()
        ));
    }
    if x.cols() != w.rows() {
        return input_err(format!(
            "features have {} columns but weight expects {}",
            x.cols(),
            w.rows()
        ));
    }
    Ok(())
}

pub fn gcn_forward(
    s: &NormalizedAdjacency,
    x: &dyn Features,
    w: &DenseMatrix,
    b: Option<&DenseMatrix>,
    act: Activation,
) -> Result<GcnForward> {
    check_shapes(s, x, w)?;
    let mut pre = spmm(s, &x.matmul(w)?)?;
    if let Some(b) = b {
        pre.add_row_broadcast(b)?;
    }
    Ok(GcnForward {
        out: activation(&pre, act),
        pre,
    })
}

pub fn gcn_backward(
    s: &NormalizedAdjacency,
    x: &dyn Features,
    w: &DenseMatrix,
    fwd: &GcnForward,
    act: Activation,
    d_out: &DenseMatrix,
    need_dx: bool,
) -> Result<GcnGrads> {
    let d_pre = activation_backward(&fwd.pre, d_out, act)?;
    let d_xw = spmm_transpose(s, &d_pre)?;
    Ok(GcnGrads {
        d_x: if need_dx {
            Some(d_xw.matmul_nt(w)?)
        } else {
            None
        },
        d_w: x.matmul_tn(&d_xw)?,
        d_w1: None,
        d_b: Some(d_pre.column_sum()),
    })
}

pub fn resgcn_forward(
    s_renorm: &NormalizedAdjacency,
    x: &dyn Features,
    w0: &DenseMatrix,
    w1: &DenseMatrix,
    b: Option<&DenseMatrix>,
    act: Activation,
) -> Result<GcnForward> {
    check_shapes(s_renorm, x, w0)?;
    if w1.shape() != w0.shape() {
        return input_err(format!(
            "w1 shape {:?} differs from w0 shape {:?}",
            w1.shape(),
            w0.shape()
        ));
    }
    let mut pre = spmm(s_renorm, &x.matmul(w0)?)?;
    pre.add_assign(&x.matmul(w1)?)?;
    if let Some(b) = b {
        pre.add_row_broadcast(b)?;
    }
    Ok(GcnForward {
        out: activation(&pre, act),
        pre,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn resgcn_backward(
    s_renorm: &NormalizedAdjacency,
    x: &dyn Features,
    w0: &DenseMatrix,
    w1: &DenseMatrix,
    fwd: &GcnForward,
    act: Activation,
    d_out: &DenseMatrix,
    need_dx: bool,
) -> Result<GcnGrads> {
    let d_pre = activation_backward(&fwd.pre, d_out, act)?;
    let d_xw0 = spmm_transpose(s_renorm, &d_pre)?;
    let d_x = if need_dx {
        let mut d_x = d_xw0.matmul_nt(w0)?;
        d_x.add_assign(&d_pre.matmul_nt(w1)?)?;
        Some(d_x)
    } else {
        None
    };
    Ok(GcnGrads {
        d_x,
        d_w: x.matmul_tn(&d_xw0)?,
        d_w1: Some(x.matmul_tn(&d_pre)?),
        d_b: Some(d_pre.column_sum()),
    })
}

/// Dense layer `σ(X·W + b)`.
pub fn linear_forward(
    x: &dyn Features,
    w: &DenseMatrix,
    b: Option<&DenseMatrix>,
    act: Activation,
) -> Result<GcnForward> {
    let mut pre = x.matmul(w)?;
    if let Some(b) = b {
        pre.add_row_broadcast(b)?;
    }
    Ok(GcnForward {
        out: activation(&pre, act),
        pre,
    })
}

pub fn linear_backward(
    x: &dyn Features,
    w: &DenseMatrix,
    fwd: &GcnForward,
    act: Activation,
    d_out: &DenseMatrix,
    need_dx: bool,
) -> Result<GcnGrads> {
    let d_pre = activation_backward(&fwd.pre, d_out, act)?;
    Ok(GcnGrads {
        d_x: if need_dx {
            Some(d_pre.matmul_nt(w)?)
        } else {
            None
        },
        d_w: x.matmul_tn(&d_pre)?,
        d_w1: None,
        d_b: Some(d_pre.column_sum()),
    })
}
