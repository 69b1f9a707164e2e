//! Training loop, evaluation, ablation grids and result files.

pub mod ablate;
pub mod config;
pub mod metrics;
pub mod output;
mod trainer;

pub use ablate::{run_ablation, AblationCell, AblationReport};
pub use config::{AblateConfig, DataConfig, ModelConfig, ModelKind, RunConfig, TrainConfig, KEYS};
pub use metrics::{accuracy, mean_std, roc_auc, roc_auc_multilabel, MeanStd};
pub use output::{write_ablation, write_lpa, write_run};
pub use trainer::{train, EpochLog, RunOutcome, SeedResult, SplitMetrics, Summary, Trainer};

use serde::{Deserialize, Serialize};

use crate::data::DatasetBundle;
use crate::error::Result;
use crate::graph::sym_norm_adj;
use crate::label_trick::inference_label_input;
use crate::lpa::{lpa_iterate, LpaConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpaOutcome {
    pub iterations: usize,
    pub metrics: SplitMetrics,
}

/// Propagates the training labels and scores the result on every split.
pub fn run_lpa(bundle: &DatasetBundle, cfg: &LpaConfig) -> Result<LpaOutcome> {
    cfg.validate()?;
    let labels = &bundle.labels;
    let s = sym_norm_adj(&bundle.graph, cfg.renormalize)?;
    let y0 = inference_label_input(labels);
    let (y, iterations) = lpa_iterate(&s, &y0, cfg)?;
    let on = |mask: &[usize]| -> Result<f64> {
        if mask.is_empty() {
            return Ok(f64::NAN);
        }
        match labels.classes() {
            Some(classes) => accuracy(&y, classes, mask),
            None => roc_auc_multilabel(&y, labels.y(), mask),
        }
    };
    let metrics = SplitMetrics {
        train: on(labels.train_idx())?,
        valid: on(labels.valid_idx())?,
        test: on(labels.test_idx())?,
    };
    Ok(LpaOutcome {
        iterations,
        metrics,
    })
}
