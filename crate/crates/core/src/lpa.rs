//! Label propagation: `Y ← λ·S·Y + (1 − λ)·Y0`, whose fixed point is
//! `Y* = (1 − λ)(I − λS)^{-1} Y0`.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::graph::{spmm, NormalizedAdjacency};
use crate::tensor::{solve, DenseMatrix};

/// Largest graph accepted by the dense closed-form solve.
pub const CLOSED_FORM_MAX_NODES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpaConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once the max-abs change of an update drops below this.
    pub tol: f64,
    /// Propagate with the renormalized adjacency instead of `D^-1/2 A D^-1/2`.
    pub renormalize: bool,
}

impl Default for LpaConfig {
    fn default() -> Self {
        Self {
            lambda: 0.9,
            max_iters: 1000,
            tol: 1e-9,
            renormalize: false,
        }
    }
}

impl LpaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return config_err(format!("lambda {} outside (0, 1)", self.lambda));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return config_err(format!("tolerance {} must be positive", self.tol));
        }
        Ok(())
    }
}

/// Runs the iteration from `Y0`; returns the last iterate and the number of
/// updates performed.
pub fn lpa_iterate(
    s: &NormalizedAdjacency,
    y0: &DenseMatrix,
    cfg: &LpaConfig,
) -> Result<(DenseMatrix, usize)> {
    cfg.validate()?;
    let mut y = y0.clone();
    for it in 1..=cfg.max_iters {
        let mut next = spmm(s, &y)?;
        next.scale(cfg.lambda);
        next.axpy(1.0 - cfg.lambda, y0)?;
        if !next.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite label propagation iterate at step {it}"
            )));
        }
        let change = next.max_abs_diff(&y);
        y = next;
        if change < cfg.tol {
            return Ok((y, it));
        }
    }
    Ok((y, cfg.max_iters))
}

/// Solves `(I − λS) Y* = (1 − λ) Y0` densely.
pub fn lpa_closed_form(
    s: &NormalizedAdjacency,
    y0: &DenseMatrix,
    lambda: f64,
) -> Result<DenseMatrix> {
    let n = s.num_nodes();
    if n > CLOSED_FORM_MAX_NODES {
        return Err(Error::Size(format!(
            "closed-form propagation is limited to {CLOSED_FORM_MAX_NODES} nodes, got {n}"
        )));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return config_err(format!("lambda {lambda} outside (0, 1)"));
    }
    let mut a = s.to_dense();
    a.scale(-lambda);
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    let mut rhs = y0.clone();
    rhs.scale(1.0 - lambda);
    solve(&a, &rhs)
}

/// Row argmax, ties to the lowest class.
pub fn lpa_predict(y: &DenseMatrix) -> Vec<usize> {
    (0..y.rows()).map(|i| y.argmax_row(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_csr, sym_norm_adj, BuildOptions};

    fn path2() -> NormalizedAdjacency {
        sym_norm_adj(
            &build_csr(&[(0, 1)], 2, BuildOptions::undirected()).unwrap(),
            false,
        )
        .unwrap()
    }

    #[test]
    fn two_node_path() {
        let y0 = DenseMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let cfg = LpaConfig {
            lambda: 0.5,
            max_iters: 10_000,
            tol: 1e-15,
            renormalize: false,
        };
        let (y, _) = lpa_iterate(&path2(), &y0, &cfg).unwrap();
        assert!((y[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
        assert!((y[(1, 0)] - 1.0 / 3.0).abs() < 1e-12);
        let yc = lpa_closed_form(&path2(), &y0, 0.5).unwrap();
        assert!((yc[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
        assert!((yc[(1, 0)] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_lambda_keeps_seed() {
        let y0 = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let cfg = LpaConfig {
            lambda: 1e-12,
            ..Default::default()
        };
        let (y, _) = lpa_iterate(&path2(), &y0, &cfg).unwrap();
        assert!(y.max_abs_diff(&y0) < 1e-11);
    }

    #[test]
    fn isolated_labeled_node() {
        let g = build_csr(&[(1, 2)], 3, BuildOptions::undirected()).unwrap();
        let s = sym_norm_adj(&g, false).unwrap();
        let y0 = DenseMatrix::from_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap();
        let cfg = LpaConfig {
            lambda: 0.8,
            ..Default::default()
        };
        let (y, _) = lpa_iterate(&s, &y0, &cfg).unwrap();
        assert!((y[(0, 0)] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_seed_gives_zero() {
        let y = lpa_closed_form(&path2(), &DenseMatrix::zeros(2, 3), 0.7).unwrap();
        assert_eq!(y.max_abs(), 0.0);
    }

    #[test]
    fn guards() {
        let big = NormalizedAdjacency::identity(CLOSED_FORM_MAX_NODES + 1);
        let y0 = DenseMatrix::zeros(CLOSED_FORM_MAX_NODES + 1, 1);
        assert!(matches!(
            lpa_closed_form(&big, &y0, 0.5),
            Err(Error::Size(_))
        ));
        let cfg = LpaConfig {
            lambda: 1.0,
            ..Default::default()
        };
        assert!(lpa_iterate(&path2(), &DenseMatrix::zeros(2, 1), &cfg)
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn prediction_ties_to_lowest() {
        let y = DenseMatrix::from_rows(&[vec![0.2, 0.2], vec![0.1, 0.3]]).unwrap();
        assert_eq!(lpa_predict(&y), vec![0, 1]);
    }
}
