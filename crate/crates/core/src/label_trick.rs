//! Labels as model inputs.
//!
//! Each training epoch splits the training nodes into `dL`, whose labels are
//! fed as extra input columns, and `dU`, whose labels the model must predict.
//! Label reuse then replaces every non-`dL` row of that input by the model's
//! own predictions for `R` further passes. At inference all training labels
//! are fed.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, input_err, Error, Result};
use crate::nn::Rng64;
use crate::tensor::DenseMatrix;

/// Ground truth with its node splits.
///
/// `y` is one-hot (`N × C`) for multi-class tasks and a 0/1 indicator
/// matrix (`N × T`) for multi-label tasks; the ±1 form used by margin losses
/// is [`LabelSet::signs`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    y: DenseMatrix,
    classes: Option<Vec<usize>>,
    train_idx: Vec<usize>,
    valid_idx: Vec<usize>,
    test_idx: Vec<usize>,
}

fn check_splits(n: usize, splits: [&[usize]; 3]) -> Result<()> {
    let mut owner = vec![usize::MAX; n];
    for (s, idx) in splits.iter().enumerate() {
        for &i in *idx {
            if i >= n {
                return Err(Error::Validation(format!(
                    "split index {i} out of range for {n} nodes"
                )));
            }
            if owner[i] != usize::MAX {
                return Err(Error::Validation(format!(
                    "node {i} appears in more than one split entry"
                )));
            }
            owner[i] = s;
        }
    }
    Ok(())
}

impl LabelSet {
    pub fn multiclass(
        classes: Vec<usize>,
        num_classes: usize,
        train_idx: Vec<usize>,
        valid_idx: Vec<usize>,
        test_idx: Vec<usize>,
    ) -> Result<Self> {
        let n = classes.len();
        check_splits(n, [&train_idx, &valid_idx, &test_idx])?;
        let mut y = DenseMatrix::zeros(n, num_classes);
        for (i, &c) in classes.iter().enumerate() {
            if c >= num_classes {
                return Err(Error::Validation(format!(
                    "class {c} of node {i} out of range for {num_classes} classes"
                )));
            }
            y[(i, c)] = 1.0;
        }
        Ok(Self {
            y,
            classes: Some(classes),
            train_idx,
            valid_idx,
            test_idx,
        })
    }

    /// Multi-label targets given as ±1.
    pub fn multilabel(
        signs: &DenseMatrix,
        train_idx: Vec<usize>,
        valid_idx: Vec<usize>,
        test_idx: Vec<usize>,
    ) -> Result<Self> {
        check_splits(signs.rows(), [&train_idx, &valid_idx, &test_idx])?;
        if let Some(v) = signs.as_slice().iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(Error::Validation(format!(
                "multi-label entry {v} is not ±1"
            )));
        }
        Ok(Self {
            y: signs.map(|v| (v + 1.0) / 2.0),
            classes: None,
            train_idx,
            valid_idx,
            test_idx,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.y.rows()
    }

    /// `C` for multi-class tasks, `T` for multi-label tasks.
    pub fn num_classes(&self) -> usize {
        self.y.cols()
    }

    pub fn y(&self) -> &DenseMatrix {
        &self.y
    }

    pub fn classes(&self) -> Option<&[usize]> {
        self.classes.as_deref()
    }

    pub fn is_multilabel(&self) -> bool {
        self.classes.is_none()
    }

    pub fn signs(&self) -> DenseMatrix {
        self.y.map(|v| 2.0 * v - 1.0)
    }

    pub fn train_idx(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn valid_idx(&self) -> &[usize] {
        &self.valid_idx
    }

    pub fn test_idx(&self) -> &[usize] {
        &self.test_idx
    }

    pub fn is_train(&self, i: usize) -> bool {
        self.train_idx.contains(&i)
    }

    fn train_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_nodes()];
        for &i in &self.train_idx {
            mask[i] = true;
        }
        mask
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelTrickConfig {
    pub enabled: bool,
    pub split_ratio: f64,
    /// Number of label-reuse passes `R`.
    pub recycle: usize,
    pub reuse_soft: bool,
    /// Compute the training loss on `dU` only instead of all training nodes.
    #[serde(rename = "labels_on_dU_only")]
    pub labels_on_du_only: bool,
}

impl Default for LabelTrickConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            split_ratio: 0.5,
            recycle: 0,
            reuse_soft: true,
            labels_on_du_only: true,
        }
    }
}

impl LabelTrickConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return config_err(format!(
                "label_trick.split_ratio {} outside (0, 1)",
                self.split_ratio
            ));
        }
        Ok(())
    }
}

/// Random split of the training nodes into `(dL, dU)`, both sorted, with
/// `|dL| = round(ratio · M)`.
pub fn split_train(
    train_idx: &[usize],
    split_ratio: f64,
    rng: &mut Rng64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let m = train_idx.len();
    let k = (split_ratio * m as f64).round() as usize;
    if !(split_ratio > 0.0 && split_ratio < 1.0) || k == 0 || k >= m {
        return config_err(format!(
            "split ratio {split_ratio} over {m} training nodes leaves one side of the split empty"
        ));
    }
    let mut shuffled = train_idx.to_vec();
    shuffled.shuffle(rng);
    let mut d_u = shuffled.split_off(k);
    shuffled.sort_unstable();
    d_u.sort_unstable();
    Ok((shuffled, d_u))
}

/// Label rows of `dL`, zero elsewhere. Any non-training node in `dL` is
/// rejected.
pub fn build_label_input(labels: &LabelSet, d_l: &[usize]) -> Result<DenseMatrix> {
    let is_train = labels.train_mask();
    let mut out = DenseMatrix::zeros(labels.num_nodes(), labels.num_classes());
    for &i in d_l {
        if !is_train.get(i).copied().unwrap_or(false) {
            return Err(Error::Leakage(i));
        }
        out.row_mut(i).copy_from_slice(labels.y.row(i));
    }
    Ok(out)
}

/// `[x ∥ label_input]`.
pub fn augment_features(x: &DenseMatrix, label_input: &DenseMatrix) -> Result<DenseMatrix> {
    if x.rows() != label_input.rows() {
        return input_err(format!(
            "{} feature rows but {} label rows",
            x.rows(),
            label_input.rows()
        ));
    }
    x.hcat(label_input)
}

/// Next label input: labels on `dL`, the previous predictions everywhere
/// else (hardened to one-hot unless `reuse_soft`).
pub fn label_reuse_step(
    labels: &LabelSet,
    d_l: &[usize],
    y_hat_prev: &DenseMatrix,
    reuse_soft: bool,
) -> Result<DenseMatrix> {
    if y_hat_prev.shape() != labels.y.shape() {
        return input_err(format!(
            "predictions have shape {:?}, labels {:?}",
            y_hat_prev.shape(),
            labels.y.shape()
        ));
    }
    let mut out = DenseMatrix::zeros(labels.num_nodes(), labels.num_classes());
    for i in 0..labels.num_nodes() {
        let row = y_hat_prev.row(i);
        if labels.is_multilabel() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return input_err(format!("prediction row {i} is not a probability vector"));
            }
        } else if (row.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return input_err(format!("prediction row {i} does not sum to 1"));
        }
        let dst = out.row_mut(i);
        if reuse_soft {
            dst.copy_from_slice(row);
        } else if labels.is_multilabel() {
            for (d, p) in dst.iter_mut().zip(row) {
                *d = if *p > 0.5 { 1.0 } else { 0.0 };
            }
        } else {
            dst[y_hat_prev.argmax_row(i)] = 1.0;
        }
    }
    let is_train = labels.train_mask();
    for &i in d_l {
        if !is_train.get(i).copied().unwrap_or(false) {
            return Err(Error::Leakage(i));
        }
        out.row_mut(i).copy_from_slice(labels.y.row(i));
    }
    Ok(out)
}

/// All training labels, zero elsewhere.
pub fn inference_label_input(labels: &LabelSet) -> DenseMatrix {
    build_label_input(labels, &labels.train_idx).expect("training nodes are always admissible")
}

/// Where a label input is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Inference,
}

/// One label-input matrix as fed to the model. `pass` 0 is the initial
/// input; `pass` k ≥ 1 follows the k-th reuse step.
#[derive(Debug, Clone, Copy)]
pub struct LabelInputRecord<'a> {
    pub phase: Phase,
    pub epoch: usize,
    pub pass: usize,
    pub d_l: &'a [usize],
    pub input: &'a DenseMatrix,
}

/// Instrumentation hooks called by the trainer.
pub trait TrainObserver {
    fn label_input(&mut self, _record: &LabelInputRecord) {}

    /// Nodes whose labels enter the training loss at `epoch`.
    fn loss_mask(&mut self, _epoch: usize, _mask: &[usize]) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;

    fn labels() -> LabelSet {
        // 10 nodes, 3 classes; train 0..6, valid 6..8, test 8..10
        let classes = vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0];
        LabelSet::multiclass(classes, 3, (0..6).collect(), vec![6, 7], vec![8, 9]).unwrap()
    }

    #[test]
    fn split_sizes() {
        let mut rng = seeded_rng(0, 0);
        let (d_l, d_u) = split_train(&[3, 5, 7, 9], 0.5, &mut rng).unwrap();
        assert_eq!((d_l.len(), d_u.len()), (2, 2));
        let mut all = [d_l, d_u].concat();
        all.sort_unstable();
        assert_eq!(all, vec![3, 5, 7, 9]);

        let train: Vec<usize> = (0..10).collect();
        let (d_l, _) = split_train(&train, 0.37, &mut rng).unwrap();
        assert_eq!(d_l.len(), 4);
    }

    #[test]
    fn split_advances_and_reproduces() {
        let train: Vec<usize> = (0..40).collect();
        let run = || {
            let mut rng = seeded_rng(7, 3);
            let a = split_train(&train, 0.5, &mut rng).unwrap();
            let b = split_train(&train, 0.5, &mut rng).unwrap();
            (a, b)
        };
        let (a, b) = run();
        assert_ne!(a, b);
        assert_eq!(run(), (a, b));
    }

    #[test]
    fn degenerate_split_is_config_error() {
        let mut rng = seeded_rng(0, 0);
        assert!(split_train(&[1, 2], 0.1, &mut rng).unwrap_err().is_config());
        assert!(split_train(&[1, 2], 0.9, &mut rng).unwrap_err().is_config());
        assert!(split_train(&[1], 0.5, &mut rng).unwrap_err().is_config());
    }

    #[test]
    fn label_input_rows() {
        let l = labels();
        assert_eq!(build_label_input(&l, &[]).unwrap().max_abs(), 0.0);
        let full = build_label_input(&l, l.train_idx()).unwrap();
        for i in 0..10 {
            let expect = if i < 6 {
                l.y().row(i).to_vec()
            } else {
                vec![0.0; 3]
            };
            assert_eq!(full.row(i), expect.as_slice());
        }
        assert!(matches!(
            build_label_input(&l, &[1, 8]),
            Err(Error::Leakage(8))
        ));
    }

    #[test]
    fn augment_shapes() {
        let x = DenseMatrix::filled(10, 4, 1.0);
        let li = DenseMatrix::zeros(10, 3);
        let out = augment_features(&x, &li).unwrap();
        assert_eq!(out.shape(), (10, 7));
        assert_eq!(out.slice_cols(4, 7).max_abs(), 0.0);
        assert_eq!(
            augment_features(&DenseMatrix::zeros(10, 0), &li).unwrap(),
            li
        );
        assert!(augment_features(&DenseMatrix::zeros(9, 2), &li).is_err());
    }

    #[test]
    fn reuse_rows() {
        let l = labels();
        let uniform = DenseMatrix::filled(10, 3, 1.0 / 3.0);
        let out = label_reuse_step(&l, &[0, 2], &uniform, true).unwrap();
        assert_eq!(out.row(0), l.y().row(0));
        assert_eq!(out.row(2), l.y().row(2));
        for i in [1, 3, 6, 9] {
            assert_eq!(out.row(i), &[1.0 / 3.0; 3]);
        }
        let hard = label_reuse_step(&l, &[0], &uniform, false).unwrap();
        assert_eq!(hard.row(5), &[1.0, 0.0, 0.0]);

        let bad = DenseMatrix::filled(10, 3, 0.5);
        assert!(label_reuse_step(&l, &[0], &bad, true).is_err());
        assert!(matches!(
            label_reuse_step(&l, &[7], &uniform, true),
            Err(Error::Leakage(7))
        ));
    }

    #[test]
    fn inference_input_uses_only_train_labels() {
        let l = labels();
        let li = inference_label_input(&l);
        for i in 0..6 {
            assert_eq!(li.row(i), l.y().row(i));
        }
        for i in 6..10 {
            assert_eq!(li.row(i), &[0.0; 3]);
        }
        let none = LabelSet::multiclass(vec![0, 1], 2, vec![], vec![0], vec![1]).unwrap();
        assert_eq!(inference_label_input(&none).max_abs(), 0.0);
    }

    #[test]
    fn overlapping_splits_rejected() {
        let err = LabelSet::multiclass(vec![0, 1, 0], 2, vec![0, 1], vec![], vec![1]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn multilabel_round_trip() {
        let signs = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let l = LabelSet::multilabel(&signs, vec![0], vec![], vec![1]).unwrap();
        assert_eq!(l.y().as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(l.signs(), signs);
    }
}
