use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::{accuracy, mean_std, roc_auc_multilabel, MeanStd};
use crate::data::{DatasetBundle, Metric};
use crate::error::{Error, Result};
use crate::features::NodeFeatures;
use crate::label_trick::{
    build_label_input, label_reuse_step, split_train, LabelInputRecord, LabelSet, LabelTrickConfig,
    Phase, TrainObserver,
};
use crate::layers::{build_model, GraphContext, Mode, Model};
use crate::loss::{binary_margin_batch, multiclass_loss, sigmoid, LossOutput, MarginLossKind};
use crate::nn::{adam_step, seeded_rng, softmax_rows, AdamState, ParamStore, Rng64};
use crate::tensor::DenseMatrix;

/// Random stream ids, one per purpose, so that e.g. turning dropout off does
/// not change the initialization.
const STREAM_INIT: u64 = 1;
const STREAM_DROPOUT: u64 = 2;
const STREAM_SPLIT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_metric: f64,
    pub valid_loss: f64,
    pub test_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// 1-based epoch whose parameters were kept (0: the initialization).
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    #[serde(skip)]
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub train: MeanStd,
    pub valid: MeanStd,
    pub test: MeanStd,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metric: Metric,
    pub model: Model,
    pub seeds: Vec<SeedResult>,
    /// Restored (best-validation) parameters, one store per seed.
    pub params: Vec<ParamStore>,
    pub summary: Summary,
}

/// Metric values on the three splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

struct NullObserver;

impl TrainObserver for NullObserver {}

/// Everything a run needs besides the per-seed state.
pub struct Trainer<'a> {
    cfg: &'a RunConfig,
    bundle: &'a DatasetBundle,
    ctx: GraphContext,
    x: NodeFeatures<'static>,
    loss: MarginLossKind,
    signs: Option<DenseMatrix>,
    model: Model,
}

fn predictions(out: &DenseMatrix, labels: &LabelSet) -> DenseMatrix {
    if labels.is_multilabel() {
        out.map(sigmoid)
    } else {
        softmax_rows(out)
    }
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a RunConfig, bundle: &'a DatasetBundle) -> Result<Self> {
        cfg.validate()?;
        let loss = cfg.loss()?;
        let lt = &cfg.label_trick;
        let c = bundle.labels.num_classes();
        let input_dim = bundle.num_features() + if lt.enabled { c } else { 0 };
        let specs = cfg.model.layer_specs(c)?;
        let (model, _) = build_model(
            &specs,
            input_dim,
            bundle.graph.edge_feat_dim(),
            &mut seeded_rng(0, STREAM_INIT),
        )?;
        Ok(Self {
            cfg,
            bundle,
            ctx: GraphContext::new(bundle.graph.clone())?,
            x: NodeFeatures::auto(bundle.input_features()),
            loss,
            signs: bundle.labels.is_multilabel().then(|| bundle.labels.signs()),
            model,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    fn labels(&self) -> &LabelSet {
        &self.bundle.labels
    }

    fn lt(&self) -> &LabelTrickConfig {
        &self.cfg.label_trick
    }

    fn loss_on(&self, out: &DenseMatrix, mask: &[usize]) -> Result<LossOutput> {
        match (&self.signs, self.labels().classes()) {
            (Some(signs), _) => binary_margin_batch(out, signs, mask, self.loss),
            (None, Some(classes)) => multiclass_loss(self.loss, out, classes, mask),
            (None, None) => unreachable!("label sets are multi-class or multi-label"),
        }
    }

    fn metric_on(&self, out: &DenseMatrix, mask: &[usize]) -> Result<f64> {
        match self.labels().classes() {
            Some(classes) => accuracy(out, classes, mask),
            None => roc_auc_multilabel(out, self.labels().y(), mask),
        }
    }

    /// Forward pass following the label-trick schedule: the initial label
    /// input for `d_l`, then `R` reuse passes whose outputs are constants.
    /// Returns the model input of the final pass.
    fn label_trick_input(
        &self,
        params: &ParamStore,
        d_l: &[usize],
        phase: Phase,
        epoch: usize,
        mut rng: Option<&mut Rng64>,
        observer: &mut dyn TrainObserver,
    ) -> Result<NodeFeatures<'static>> {
        let labels = self.labels();
        let mut li = build_label_input(labels, d_l)?;
        observer.label_input(&LabelInputRecord {
            phase,
            epoch,
            pass: 0,
            d_l,
            input: &li,
        });
        let mut input = self.x.augment(&li)?;
        for pass in 1..=self.lt().recycle {
            let mode = match rng.as_mut() {
                Some(r) => Mode::Train(r),
                None => Mode::Eval,
            };
            let (out, _) = self.model.forward(&self.ctx, params, &input, mode)?;
            li = label_reuse_step(
                labels,
                d_l,
                &predictions(&out, labels),
                self.lt().reuse_soft,
            )?;
            observer.label_input(&LabelInputRecord {
                phase,
                epoch,
                pass,
                d_l,
                input: &li,
            });
            input = self.x.augment(&li)?;
        }
        Ok(input)
    }

    /// Model output at inference: all training labels as input when the
    /// label trick is on.
    pub fn infer(
        &self,
        params: &ParamStore,
        epoch: usize,
        observer: &mut dyn TrainObserver,
    ) -> Result<DenseMatrix> {
        if self.lt().enabled {
            let train = self.labels().train_idx();
            let input =
                self.label_trick_input(params, train, Phase::Inference, epoch, None, observer)?;
            self.model.predict(&self.ctx, params, &input)
        } else {
            self.model.predict(&self.ctx, params, &self.x)
        }
    }

    /// Loads saved parameters, checking them against this model's layout.
    pub fn load_params(&self, json: &str) -> Result<ParamStore> {
        let saved = ParamStore::from_json(json)?;
        let specs = self.cfg.model.layer_specs(self.labels().num_classes())?;
        let (_, mut params) = build_model(
            &specs,
            self.model.input_dim(),
            self.bundle.graph.edge_feat_dim(),
            &mut seeded_rng(0, STREAM_INIT),
        )?;
        params.copy_values_from(&saved).map_err(|e| {
            Error::Config(format!(
                "saved parameters do not fit the configured model: {e}"
            ))
        })?;
        Ok(params)
    }

    pub fn evaluate(&self, params: &ParamStore) -> Result<SplitMetrics> {
        let out = self.infer(params, 0, &mut NullObserver)?;
        let labels = self.labels();
        let on = |mask: &[usize]| {
            if mask.is_empty() {
                Ok(f64::NAN)
            } else {
                self.metric_on(&out, mask)
            }
        };
        Ok(SplitMetrics {
            train: on(labels.train_idx())?,
            valid: on(labels.valid_idx())?,
            test: on(labels.test_idx())?,
        })
    }

    /// Trains one seed and restores the best-validation parameters.
    pub fn train_seed(
        &self,
        seed: u64,
        observer: &mut dyn TrainObserver,
    ) -> Result<(SeedResult, ParamStore)> {
        let cfg = self.cfg;
        let labels = self.labels();
        let specs = cfg.model.layer_specs(labels.num_classes())?;
        let (_, mut params) = build_model(
            &specs,
            self.model.input_dim(),
            self.bundle.graph.edge_feat_dim(),
            &mut seeded_rng(seed, STREAM_INIT),
        )?;
        let mut dropout_rng = seeded_rng(seed, STREAM_DROPOUT);
        let mut split_rng = seeded_rng(seed, STREAM_SPLIT);
        let mut adam = AdamState::new(cfg.optim, &params);

        let valid = labels.valid_idx();
        let score = |out: &DenseMatrix| -> Result<(f64, f64)> {
            if valid.is_empty() {
                return Ok((f64::NAN, f64::NAN));
            }
            Ok((self.metric_on(out, valid)?, self.loss_on(out, valid)?.loss))
        };
        let initial = self.infer(&params, 0, observer)?;
        let (mut best_metric, mut best_loss) = score(&initial)?;
        let mut best_params = params.clone();
        let mut best_epoch = 0;
        let mut since_best = 0;
        let mut log = Vec::new();

        for epoch in 1..=cfg.train.epochs {
            let (input, mask): (NodeFeatures, Cow<[usize]>) = if self.lt().enabled {
                let (d_l, d_u) =
                    split_train(labels.train_idx(), self.lt().split_ratio, &mut split_rng)?;
                let input = self.label_trick_input(
                    &params,
                    &d_l,
                    Phase::Train,
                    epoch,
                    Some(&mut dropout_rng),
                    observer,
                )?;
                let mask = if self.lt().labels_on_du_only {
                    d_u
                } else {
                    labels.train_idx().to_vec()
                };
                (input, Cow::Owned(mask))
            } else {
                (self.x.view(), Cow::Borrowed(labels.train_idx()))
            };
            observer.loss_mask(epoch, &mask);

            let (out, trace) =
                self.model
                    .forward(&self.ctx, &params, &input, Mode::Train(&mut dropout_rng))?;
            let loss = self.loss_on(&out, &mask)?;
            if !loss.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    reason: format!("training loss is {}", loss.loss),
                });
            }
            params.zero_grads();
            self.model
                .backward(&self.ctx, &mut params, &trace, &loss.grad, false)?;
            adam_step(&mut params, &mut adam);

            let out = self.infer(&params, epoch, observer)?;
            let (valid_metric, valid_loss) = score(&out)?;
            let test_metric = if labels.test_idx().is_empty() {
                f64::NAN
            } else {
                self.metric_on(&out, labels.test_idx())?
            };
            log.push(EpochLog {
                epoch,
                train_loss: loss.loss,
                valid_metric,
                valid_loss,
                test_metric,
            });

            // Best validation metric, ties broken by lower validation loss;
            // without a validation split the last epoch is kept.
            let improved = valid.is_empty()
                || valid_metric > best_metric
                || (valid_metric == best_metric && valid_loss < best_loss);
            if improved {
                best_metric = valid_metric;
                best_loss = valid_loss;
                best_params.copy_values_from(&params)?;
                best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.train.patience {
                    break;
                }
            }
        }

        let m = self.evaluate(&best_params)?;
        let result = SeedResult {
            seed,
            best_epoch,
            epochs_run: log.len(),
            train: m.train,
            valid: m.valid,
            test: m.test,
            log,
        };
        Ok((result, best_params))
    }
}

/// Trains every configured seed (sequentially, in the listed order).
pub fn train(
    cfg: &RunConfig,
    bundle: &DatasetBundle,
    observer: Option<&mut dyn TrainObserver>,
) -> Result<RunOutcome> {
    let trainer = Trainer::new(cfg, bundle)?;
    let mut null = NullObserver;
    let observer: &mut dyn TrainObserver = match observer {
        Some(o) => o,
        None => &mut null,
    };
    let mut seeds = Vec::new();
    let mut params = Vec::new();
    for &seed in &cfg.train.seeds {
        let (r, p) = trainer.train_seed(seed, observer)?;
        seeds.push(r);
        params.push(p);
    }
    let collect = |f: fn(&SeedResult) -> f64| mean_std(&seeds.iter().map(f).collect::<Vec<_>>());
    let summary = Summary {
        train: collect(|s| s.train),
        valid: collect(|s| s.valid),
        test: collect(|s| s.test),
    };
    Ok(RunOutcome {
        metric: bundle.meta.metric,
        model: trainer.model.clone(),
        seeds,
        params,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_planted_partition, PlantedPartition};

    fn planted_cfg() -> (RunConfig, DatasetBundle) {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&[
            "data.generator=planted_partition",
            "data.n=120",
            "data.num_classes=3",
            "data.p_in=0.2",
            "data.p_out=0.0",
            "data.feat_noise=0.0",
            "data.feat_dim=4",
            "train.epochs=200",
            "model.dropout=0.0",
        ])
        .unwrap();
        let b = gen_planted_partition(&PlantedPartition { ..cfg.data.planted }, 0).unwrap();
        (cfg, b)
    }

    #[test]
    fn separable_graph_is_learned() {
        let (cfg, b) = planted_cfg();
        let out = train(&cfg, &b, None).unwrap();
        assert_eq!(out.seeds[0].test, 1.0);
    }

    #[test]
    fn zero_learning_rate_keeps_initial_metrics() {
        let (mut cfg, b) = planted_cfg();
        cfg.apply_overrides(&["optim.lr=0", "train.epochs=1", "model.dropout=0.5"])
            .unwrap();
        let out = train(&cfg, &b, None).unwrap();
        let trainer = Trainer::new(&cfg, &b).unwrap();
        let (_, init) = build_model(
            &cfg.model.layer_specs(3).unwrap(),
            4,
            0,
            &mut seeded_rng(0, STREAM_INIT),
        )
        .unwrap();
        let m = trainer.evaluate(&init).unwrap();
        assert_eq!(out.seeds[0].test, m.test);
    }

    #[test]
    fn reported_metrics_come_from_best_epoch() {
        let (mut cfg, b) = planted_cfg();
        cfg.apply_overrides(&[
            "data.feat_noise=3.0",
            "data.p_out=0.1",
            "train.patience=20",
            "model.dropout=0.5",
        ])
        .unwrap();
        let b2 = gen_planted_partition(&cfg.data.planted, 0).unwrap();
        let _ = b;
        let out = train(&cfg, &b2, None).unwrap();
        let s = &out.seeds[0];
        if s.best_epoch > 0 {
            let best = &s.log[s.best_epoch - 1];
            assert_eq!(best.test_metric, s.test);
            assert_eq!(best.valid_metric, s.valid);
            assert!(s.log.iter().all(|l| l.valid_metric <= s.valid));
        }
        assert!(s.epochs_run <= s.best_epoch + 20);
    }
}
