use rand::seq::index::sample;

use super::{seeded_rng, ParamStore};
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so that coordinates whose true
/// gradient is (near) zero are judged on absolute error instead.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares the gradients currently stored in `params` with central
/// differences `(f(p + h) − f(p − h)) / 2h` of `loss_fn`.
///
/// With `sample_count = None` every coordinate is checked; otherwise that
/// many coordinates are drawn per parameter (deterministically from `seed`).
pub fn grad_check(
    params: &ParamStore,
    mut loss_fn: impl FnMut(&ParamStore) -> f64,
    h: f64,
    sample_count: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = seeded_rng(seed, 0x6772_6164);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in params.ids() {
        let n = params.value(id).len();
        let coords: Vec<usize> = match sample_count {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let original = params.value(id).as_slice()[c];
            probe.value_mut(id).as_mut_slice()[c] = original + h;
            let plus = loss_fn(&probe);
            probe.value_mut(id).as_mut_slice()[c] = original - h;
            let minus = loss_fn(&probe);
            probe.value_mut(id).as_mut_slice()[c] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Oracle(format!(
                    "non-finite loss while perturbing {}[{c}]",
                    params.name(id)
                )));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = params.grad(id).as_slice()[c];
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((params.name(id).to_owned(), c));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;
    use crate::tensor::DenseMatrix;
    use rand::Rng;

    #[test]
    fn quadratic_is_exact() {
        let mut rng = seeded_rng(3, 0);
        let mut ps = ParamStore::new();
        let p = DenseMatrix::from_fn(3, 4, |_, _| rng.random_range(-2.0..2.0));
        let id = ps.add("p", p.clone(), true).unwrap();
        ps.accumulate(id, &p).unwrap();
        let loss = |s: &ParamStore| 0.5 * s.value(id).as_slice().iter().map(|v| v * v).sum::<f64>();
        let report = grad_check(&ps, loss, 1e-5, None, 0).unwrap();
        assert_eq!(report.checked, 12);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }

    #[test]
    fn unused_parameter_has_zero_estimate() {
        let mut ps = ParamStore::new();
        let used = ps
            .add("used", DenseMatrix::filled(1, 1, 2.0), true)
            .unwrap();
        let unused = ps
            .add("unused", DenseMatrix::filled(2, 2, 1.0), true)
            .unwrap();
        ps.accumulate(used, &DenseMatrix::filled(1, 1, 4.0))
            .unwrap();
        let loss = |s: &ParamStore| s.value(used)[(0, 0)].powi(2);
        let report = grad_check(&ps, loss, 1e-5, None, 0).unwrap();
        assert!(report.max_rel_error < 1e-9);
        // FD estimate for the unused entries is exactly zero
        let mut probe = ps.clone();
        probe.value_mut(unused)[(0, 0)] += 1e-5;
        assert!((loss(&probe) - loss(&ps)).abs() < 1e-9);
    }

    #[test]
    fn non_finite_loss_is_an_oracle_error() {
        let mut ps = ParamStore::new();
        ps.add("p", DenseMatrix::filled(1, 1, 0.0), true).unwrap();
        let err = grad_check(&ps, |_| f64::NAN, 1e-5, None, 0).unwrap_err();
        assert!(matches!(err, Error::Oracle(_)));
    }

    #[test]
    fn sampling_limits_coordinates() {
        let mut ps = ParamStore::new();
        ps.add("p", DenseMatrix::zeros(10, 10), true).unwrap();
        let report = grad_check(&ps, |_| 0.0, 1e-5, Some(7), 0).unwrap();
        assert_eq!(report.checked, 7);
    }
}
