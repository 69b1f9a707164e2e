use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::tensor::DenseMatrix;

/// Fraction of masked rows whose argmax (ties to the lowest index) is the
/// true class.
pub fn accuracy(logits: &DenseMatrix, classes: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return input_err("accuracy over an empty mask");
    }
    let correct = mask
        .iter()
        .filter(|&&i| logits.argmax_row(i) == classes[i])
        .count();
    Ok(correct as f64 / mask.len() as f64)
}

/// Rank-based ROC-AUC with average ranks for ties.
pub fn roc_auc(scores: &[f64], positive: &[bool], mask: &[usize]) -> Result<f64> {
    let mut items: Vec<(f64, bool)> = mask.iter().map(|&i| (scores[i], positive[i])).collect();
    let n_pos = items.iter().filter(|x| x.1).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC-AUC needs both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < items.len() {
        let mut end = start;
        while end < items.len() && items[end].0 == items[start].0 {
            end += 1;
        }
        // ranks start..end (1-based start+1..=end) share their mean
        let avg = (start + 1 + end) as f64 / 2.0;
        rank_sum += avg * items[start..end].iter().filter(|x| x.1).count() as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Unweighted mean of per-column ROC-AUC. Columns lacking a positive or a
/// negative inside the mask are skipped.
pub fn roc_auc_multilabel(
    scores: &DenseMatrix,
    targets: &DenseMatrix,
    mask: &[usize],
) -> Result<f64> {
    if scores.shape() != targets.shape() {
        return input_err("scores and targets differ in shape");
    }
    let mut total = 0.0;
    let mut used = 0;
    for t in 0..scores.cols() {
        let col: Vec<f64> = (0..scores.rows()).map(|i| scores[(i, t)]).collect();
        let pos: Vec<bool> = (0..scores.rows()).map(|i| targets[(i, t)] > 0.5).collect();
        match roc_auc(&col, &pos, mask) {
            Ok(v) => {
                total += v;
                used += 1;
            }
            Err(Error::UndefinedMetric(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::UndefinedMetric(
            "no label column has both classes in the mask".into(),
        ));
    }
    Ok(total / used as f64)
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    if values.is_empty() {
        return MeanStd {
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        let onehot = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(accuracy(&onehot, &[0, 1], &[0, 1]).unwrap(), 1.0);
        let uniform = DenseMatrix::zeros(3, 4);
        assert_eq!(accuracy(&uniform, &[0, 0, 0], &[0, 1, 2]).unwrap(), 1.0);
        let logits = DenseMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(
            accuracy(&logits, &[0, 1, 0, 1], &[0, 1, 2, 3]).unwrap(),
            0.5
        );
        assert!(accuracy(&logits, &[0, 1, 0, 1], &[]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[true, false], &[0, 1]).unwrap(), 1.0);
        assert_eq!(
            roc_auc(&[0.3; 4], &[true, false, true, false], &[0, 1, 2, 3]).unwrap(),
            0.5
        );
        let v = roc_auc(
            &[0.8, 0.6, 0.4, 0.2],
            &[true, false, true, false],
            &[0, 1, 2, 3],
        )
        .unwrap();
        assert_eq!(v, 0.75);
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[true, true], &[0, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn multilabel_mean() {
        let scores =
            DenseMatrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.2], vec![0.5, 0.3]]).unwrap();
        let targets =
            DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        // column 0: AUC 1; column 1: positives {0.1, 0.2} vs negative 0.3 → 0
        assert_eq!(
            roc_auc_multilabel(&scores, &targets, &[0, 1, 2]).unwrap(),
            0.5
        );
    }

    #[test]
    fn mean_and_sample_std() {
        let s = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]).std, 0.0);
    }
}
