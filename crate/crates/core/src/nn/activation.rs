use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::tensor::DenseMatrix;

/// Elementwise nonlinearities. Derivatives at the kink of ReLU and LeakyReLU
/// take the left-hand value (0 and `slope`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    /// ELU with α = 1.
    Elu,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu(slope) => {
                if v > 0.0 {
                    v
                } else {
                    slope * v
                }
            }
            Activation::Elu => {
                if v > 0.0 {
                    v
                } else {
                    v.exp_m1()
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if v > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Elu => {
                if v > 0.0 {
                    1.0
                } else {
                    v.exp()
                }
            }
        }
    }

    /// Whether the derivative jumps at zero.
    pub fn has_kink(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu(_))
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" | "none" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            "elu" => Some(Activation::Elu),
            _ => {
                let slope = s.strip_prefix("leaky_relu")?;
                if slope.is_empty() {
                    return Some(Activation::LeakyRelu(0.2));
                }
                slope
                    .trim_start_matches(['(', ':'])
                    .trim_end_matches(')')
                    .parse()
                    .ok()
                    .filter(|v: &f64| *v >= 0.0)
                    .map(Activation::LeakyRelu)
            }
        }
    }

    pub fn name(self) -> String {
        match self {
            Activation::Identity => "identity".into(),
            Activation::Relu => "relu".into(),
            Activation::Elu => "elu".into(),
            Activation::LeakyRelu(s) => format!("leaky_relu({s})"),
        }
    }
}

pub fn activation(x: &DenseMatrix, kind: Activation) -> DenseMatrix {
    x.map(|v| kind.apply(v))
}

/// `d_in = d_out ⊙ σ'(pre)` where `pre` is the activation input.
pub fn activation_backward(
    pre: &DenseMatrix,
    d_out: &DenseMatrix,
    kind: Activation,
) -> Result<DenseMatrix> {
    if pre.shape() != d_out.shape() {
        return input_err("activation backward: shape mismatch");
    }
    if kind == Activation::Identity {
        return Ok(d_out.clone());
    }
    let data = pre
        .as_slice()
        .iter()
        .zip(d_out.as_slice())
        .map(|(&p, &g)| g * kind.derivative(p))
        .collect();
    DenseMatrix::from_vec(pre.rows(), pre.cols(), data)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

pub fn log_softmax_rows(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// Backward of [`softmax_rows`] given its output `y`:
/// `d_x = y ⊙ (d_y − ⟨d_y, y⟩)` per row.
pub fn softmax_rows_backward(y: &DenseMatrix, d_y: &DenseMatrix) -> Result<DenseMatrix> {
    if y.shape() != d_y.shape() {
        return input_err("softmax backward: shape mismatch");
    }
    let mut out = DenseMatrix::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let (yr, gr) = (y.row(r), d_y.row(r));
        let inner: f64 = crate::tensor::dot(yr, gr);
        for ((o, &yv), &gv) in out.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *o = yv * (gv - inner);
        }
    }
    Ok(out)
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rate: f64,
    rng: &mut R,
) -> DenseMatrix {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    DenseMatrix::from_fn(rows, cols, |_, _| {
        if rng.random::<f64>() < keep {
            scale
        } else {
            0.0
        }
    })
}
