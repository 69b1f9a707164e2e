//! Margin-based losses `φ_ρ(v) = ρ(φ_logit(v))` built from a non-decreasing
//! transform `ρ` of the logistic loss, and their multi-class forms
//! `ρ(−log softmax(ŷ)_class)`.
//!
//! | kind        | ρ(z)                    | ρ(φ_logit(v))                     |
//! |-------------|-------------------------|-----------------------------------|
//! | logistic    | z                       | log(1 + e^{−v})                   |
//! | exponential | e^z − 1                 | e^{−v}                            |
//! | sigmoid     | 1 − e^{−z}              | 1 / (1 + e^v)                     |
//! | savage      | (1 − e^{−z})²           | 1 / (1 + e^v)²                    |
//! | lq          | (1 − e^{−qz}) / q       | (1 − (1 + e^{−v})^{−q}) / q       |
//! | loge        | log(ε + z) − log ε      | log(ε + log(1 + e^{−v})) − log ε  |
//!
//! With `ε = 1 − log 2` the loge loss has zero curvature at `v = 0`, so its
//! gradient magnitude peaks on the decision boundary.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, input_err, Error, Result};
use crate::tensor::DenseMatrix;

/// `1 − log 2`.
pub const LOGE_EPSILON: f64 = 1.0 - std::f64::consts::LN_2;
pub const LQ_DEFAULT_Q: f64 = 0.5;
/// Margins below this are clamped for the exponential loss.
pub const EXP_MARGIN_FLOOR: f64 = -30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginLossKind {
    Logistic,
    Exponential,
    Sigmoid,
    Savage,
    Lq { q: f64 },
    Loge { epsilon: f64 },
}

impl MarginLossKind {
    pub const ALL_NAMES: [&'static str; 6] =
        ["logistic", "exponential", "sigmoid", "savage", "lq", "loge"];

    pub fn loge() -> Self {
        MarginLossKind::Loge {
            epsilon: LOGE_EPSILON,
        }
    }

    pub fn lq() -> Self {
        MarginLossKind::Lq { q: LQ_DEFAULT_Q }
    }

    /// Builds a kind from its name; `q` and `epsilon` apply to `lq` and `loge`.
    pub fn from_name(name: &str, q: Option<f64>, epsilon: Option<f64>) -> Result<Self> {
        let kind = match name {
            "logistic" => MarginLossKind::Logistic,
            "exponential" => MarginLossKind::Exponential,
            "sigmoid" => MarginLossKind::Sigmoid,
            "savage" => MarginLossKind::Savage,
            "lq" => MarginLossKind::Lq {
                q: q.unwrap_or(LQ_DEFAULT_Q),
            },
            "loge" => MarginLossKind::Loge {
                epsilon: epsilon.unwrap_or(LOGE_EPSILON),
            },
            other => {
                return config_err(format!(
                    "unknown loss kind {other:?}; expected one of {}",
                    Self::ALL_NAMES.join(", ")
                ))
            }
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(self) -> Result<()> {
        match self {
            MarginLossKind::Lq { q } if !(q > 0.0 && q.is_finite()) => {
                config_err(format!("lq loss needs q > 0, got {q}"))
            }
            MarginLossKind::Loge { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => {
                config_err(format!("loge loss needs epsilon > 0, got {epsilon}"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MarginLossKind::Logistic => "logistic",
            MarginLossKind::Exponential => "exponential",
            MarginLossKind::Sigmoid => "sigmoid",
            MarginLossKind::Savage => "savage",
            MarginLossKind::Lq { .. } => "lq",
            MarginLossKind::Loge { .. } => "loge",
        }
    }
}

/// `log(1 + e^u)` without overflow.
#[inline]
pub fn softplus(u: f64) -> f64 {
    if u <= 0.0 {
        u.exp().ln_1p()
    } else {
        u + (-u).exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// The transform `ρ(z)` for `z ≥ 0`.
pub fn rho(kind: MarginLossKind, z: f64) -> Result<f64> {
    if z.is_nan() || z < 0.0 {
        return Err(Error::Domain(format!("rho is defined for z >= 0, got {z}")));
    }
    Ok(match kind {
        MarginLossKind::Logistic => z,
        MarginLossKind::Exponential => z.exp_m1(),
        MarginLossKind::Sigmoid => -(-z).exp_m1(),
        MarginLossKind::Savage => (-z).exp_m1().powi(2),
        MarginLossKind::Lq { q } => -(-q * z).exp_m1() / q,
        MarginLossKind::Loge { epsilon } => (z / epsilon).ln_1p(),
    })
}

/// `ρ'(z)`.
pub fn rho_derivative(kind: MarginLossKind, z: f64) -> f64 {
    match kind {
        MarginLossKind::Logistic => 1.0,
        MarginLossKind::Exponential => z.exp(),
        MarginLossKind::Sigmoid => (-z).exp(),
        MarginLossKind::Savage => -2.0 * (-z).exp_m1() * (-z).exp(),
        MarginLossKind::Lq { q } => (-q * z).exp(),
        MarginLossKind::Loge { epsilon } => 1.0 / (epsilon + z),
    }
}

/// `φ(v)` through the direct closed forms (third table column).
pub fn margin_loss(kind: MarginLossKind, v: f64) -> f64 {
    match kind {
        MarginLossKind::Logistic => softplus(-v),
        MarginLossKind::Exponential => (-v.max(EXP_MARGIN_FLOOR)).exp(),
        MarginLossKind::Sigmoid => sigmoid(-v),
        MarginLossKind::Savage => sigmoid(-v).powi(2),
        MarginLossKind::Lq { q } => (1.0 - sigmoid(v).powf(q)) / q,
        MarginLossKind::Loge { epsilon } => (epsilon + softplus(-v)).ln() - epsilon.ln(),
    }
}

/// `dφ/dv`.
pub fn margin_loss_grad(kind: MarginLossKind, v: f64) -> f64 {
    match kind {
        MarginLossKind::Logistic => -sigmoid(-v),
        MarginLossKind::Exponential => {
            if v < EXP_MARGIN_FLOOR {
                0.0
            } else {
                -(-v).exp()
            }
        }
        MarginLossKind::Sigmoid => -sigmoid(v) * sigmoid(-v),
        MarginLossKind::Savage => -2.0 * sigmoid(v) * sigmoid(-v).powi(2),
        MarginLossKind::Lq { q } => -sigmoid(v).powf(q) * sigmoid(-v),
        MarginLossKind::Loge { epsilon } => -sigmoid(-v) / (epsilon + softplus(-v)),
    }
}

/// Mean loss over a mask together with its gradient w.r.t. the scores.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: DenseMatrix,
}

fn check_mask(mask: &[usize], rows: usize) -> Result<()> {
    if mask.is_empty() {
        return input_err("loss mask is empty");
    }
    if let Some(&bad) = mask.iter().find(|&&i| i >= rows) {
        return input_err(format!("mask index {bad} out of range for {rows} rows"));
    }
    Ok(())
}

/// Multi-class loss `mean_i ρ(ce_i)` with `ce_i = −log softmax(logits_i)[class_i]`.
///
/// For the logistic kind this is plain cross-entropy; its gradient is the
/// cross-entropy gradient scaled per node by `ρ'(ce_i)`.
pub fn multiclass_loss(
    kind: MarginLossKind,
    logits: &DenseMatrix,
    classes: &[usize],
    mask: &[usize],
) -> Result<LossOutput> {
    check_mask(mask, logits.rows())?;
    if classes.len() != logits.rows() {
        return input_err("one class per logit row required");
    }
    let c = logits.cols();
    let scale = 1.0 / mask.len() as f64;
    let mut grad = DenseMatrix::zeros(logits.rows(), c);
    let mut total = 0.0;
    for &i in mask {
        let class = classes[i];
        if class >= c {
            return input_err(format!(
                "class {class} of node {i} out of range for {c} classes"
            ));
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
        // log1p keeps tiny losses representable when the target holds the max
        let ce = if row[class] == max {
            let others: f64 = row
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != class)
                .map(|(_, v)| (v - max).exp())
                .sum();
            others.ln_1p()
        } else {
            max + sum_exp.ln() - row[class]
        }
        .max(0.0);
        let (loss, weight) = match kind {
            MarginLossKind::Exponential if ce > -EXP_MARGIN_FLOOR => {
                ((-EXP_MARGIN_FLOOR).exp_m1(), 0.0)
            }
            _ => (rho(kind, ce)?, rho_derivative(kind, ce)),
        };
        total += loss;
        let g = grad.row_mut(i);
        for (k, gv) in g.iter_mut().enumerate() {
            let p = (row[k] - max).exp() / sum_exp;
            let onehot = if k == class { 1.0 } else { 0.0 };
            *gv = scale * weight * (p - onehot);
        }
    }
    Ok(LossOutput {
        loss: total * scale,
        grad,
    })
}

/// Mean cross-entropy over the masked nodes.
pub fn ce_loss(logits: &DenseMatrix, classes: &[usize], mask: &[usize]) -> Result<LossOutput> {
    multiclass_loss(MarginLossKind::Logistic, logits, classes, mask)
}

/// Multi-class loge loss `log(ε − log softmax(ŷ)_class) − log ε`.
pub fn loge_multiclass(
    logits: &DenseMatrix,
    classes: &[usize],
    mask: &[usize],
    epsilon: f64,
) -> Result<LossOutput> {
    let kind = MarginLossKind::Loge { epsilon };
    kind.validate()?;
    multiclass_loss(kind, logits, classes, mask)
}

/// Mean of `φ(y · score)` over every column of the masked rows, for labels
/// in {−1, +1}.
pub fn binary_margin_batch(
    scores: &DenseMatrix,
    signs: &DenseMatrix,
    mask: &[usize],
    kind: MarginLossKind,
) -> Result<LossOutput> {
    check_mask(mask, scores.rows())?;
    if scores.shape() != signs.shape() {
        return input_err("scores and labels differ in shape");
    }
    let count = (mask.len() * scores.cols()) as f64;
    let mut grad = DenseMatrix::zeros(scores.rows(), scores.cols());
    let mut total = 0.0;
    for &i in mask {
        for t in 0..scores.cols() {
            let y = signs[(i, t)];
            if y != 1.0 && y != -1.0 {
                return input_err(format!("label {y} at ({i}, {t}) is not ±1"));
            }
            let v = y * scores[(i, t)];
            total += margin_loss(kind, v);
            grad[(i, t)] = y * margin_loss_grad(kind, v) / count;
        }
    }
    Ok(LossOutput {
        loss: total / count,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [MarginLossKind; 6] = [
        MarginLossKind::Logistic,
        MarginLossKind::Exponential,
        MarginLossKind::Sigmoid,
        MarginLossKind::Savage,
        MarginLossKind::Lq { q: LQ_DEFAULT_Q },
        MarginLossKind::Loge {
            epsilon: LOGE_EPSILON,
        },
    ];

    // −log(1 − log 2)
    const LOGE_AT_ZERO: f64 = 1.181_387_061_856_003_5;

    #[test]
    fn rho_vanishes_at_zero() {
        for kind in ALL {
            assert_eq!(rho(kind, 0.0).unwrap(), 0.0, "{kind:?}");
        }
    }

    #[test]
    fn rho_examples() {
        let v = rho(MarginLossKind::loge(), std::f64::consts::LN_2).unwrap();
        assert!((v - LOGE_AT_ZERO).abs() < 1e-12);
        let v = rho(MarginLossKind::Savage, 1.0).unwrap();
        assert!((v - 0.399_576_400_893_728_4).abs() < 1e-12);
        assert!(matches!(
            rho(MarginLossKind::Logistic, -1e-3),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn margin_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((margin_loss(MarginLossKind::Logistic, 0.0) - ln2).abs() < 1e-15);
        assert_eq!(margin_loss_grad(MarginLossKind::Logistic, 0.0), -0.5);
        assert_eq!(margin_loss(MarginLossKind::Sigmoid, 0.0), 0.5);
        assert_eq!(margin_loss_grad(MarginLossKind::Sigmoid, 0.0), -0.25);
        assert!((margin_loss(MarginLossKind::loge(), 0.0) - LOGE_AT_ZERO).abs() < 1e-12);
        assert!((margin_loss_grad(MarginLossKind::loge(), 0.0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn large_margins_do_not_overflow() {
        for kind in ALL {
            for v in [-1e3, 1e3] {
                assert!(margin_loss(kind, v).is_finite(), "{kind:?} at {v}");
                assert!(margin_loss_grad(kind, v).is_finite(), "{kind:?} at {v}");
            }
        }
        assert_eq!(margin_loss(MarginLossKind::Exponential, -1e3), 30f64.exp());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(MarginLossKind::from_name("lq", Some(0.0), None).is_err());
        assert!(MarginLossKind::from_name("loge", None, Some(-1.0)).is_err());
        assert!(MarginLossKind::from_name("hinge", None, None).is_err());
        assert_eq!(
            MarginLossKind::from_name("loge", None, None).unwrap(),
            MarginLossKind::Loge {
                epsilon: LOGE_EPSILON
            }
        );
    }

    #[test]
    fn ce_examples() {
        let logits = DenseMatrix::zeros(2, 4);
        let out = ce_loss(&logits, &[1, 3], &[0, 1]).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-15);

        let mut logits = DenseMatrix::zeros(1, 3);
        logits[(0, 2)] = 800.0;
        let out = ce_loss(&logits, &[2], &[0]).unwrap();
        assert!(out.loss < 1e-300);

        assert!(ce_loss(&logits, &[2], &[]).is_err());
    }

    #[test]
    fn ce_gradient_is_zero_off_mask() {
        let logits = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]]).unwrap();
        let out = ce_loss(&logits, &[0, 1], &[1]).unwrap();
        assert_eq!(out.grad.row(0), &[0.0, 0.0]);
        assert!(out.grad.row(1).iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn loge_multiclass_examples() {
        let out = loge_multiclass(
            &DenseMatrix::zeros(3, 2),
            &[0, 1, 0],
            &[0, 1, 2],
            LOGE_EPSILON,
        )
        .unwrap();
        assert!((out.loss - LOGE_AT_ZERO).abs() < 1e-12);

        // log(1 + log 2) − log(1 − log 2)
        let out = loge_multiclass(&DenseMatrix::zeros(1, 4), &[2], &[0], LOGE_EPSILON).unwrap();
        assert!(
            (out.loss - 1.707_976_095_995_048).abs() < 1e-12,
            "{}",
            out.loss
        );

        let mut logits = DenseMatrix::zeros(1, 3);
        logits[(0, 0)] = 60.0;
        let out = loge_multiclass(&logits, &[0], &[0], LOGE_EPSILON).unwrap();
        assert!(out.loss > 0.0 && out.loss < 1e-20);
    }

    #[test]
    fn binary_examples() {
        let scores = DenseMatrix::zeros(2, 3);
        let signs = DenseMatrix::filled(2, 3, 1.0);
        let out = binary_margin_batch(&scores, &signs, &[0, 1], MarginLossKind::Logistic).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-15);

        // loge decays as log1p(e^{-v}/ε), about 1.48e-4 at v = 10
        for kind in ALL {
            let s = DenseMatrix::filled(1, 1, 10.0);
            let y = DenseMatrix::filled(1, 1, 1.0);
            let out = binary_margin_batch(&s, &y, &[0], kind).unwrap();
            let bound = if matches!(kind, MarginLossKind::Loge { .. }) {
                1.5e-4
            } else {
                1e-4
            };
            assert!(out.loss < bound, "{kind:?}: {}", out.loss);
        }

        let bad = DenseMatrix::filled(2, 3, 0.0);
        assert!(binary_margin_batch(&scores, &bad, &[0], MarginLossKind::Logistic).is_err());
    }
}
