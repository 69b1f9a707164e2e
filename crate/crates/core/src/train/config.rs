//! Run configuration in a flat `section.key = value` text format.
//!
//! ```text
//! # comments and blank lines are ignored
//! data.path = data/cora
//! model.kind = gcn
//! loss.kind = loge
//! train.seeds = 0..10
//! ```

use std::fmt::Debug;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{gen_planted_partition, load_dataset, DatasetBundle, PlantedPartition};
use crate::error::{config_err, Error, Result};
use crate::label_trick::LabelTrickConfig;
use crate::layers::{AggregationMode, AttentionVariant, LayerKind, LayerSpec};
use crate::loss::{MarginLossKind, LOGE_EPSILON, LQ_DEFAULT_Q};
use crate::nn::{Activation, AdamConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gcn,
    Resgcn,
    Gat,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Resgcn => "resgcn",
            ModelKind::Gat => "gat",
            ModelKind::Mlp => "mlp",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            ModelKind::Gcn,
            ModelKind::Resgcn,
            ModelKind::Gat,
            ModelKind::Mlp,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    /// `planted_partition` selects the synthetic generator.
    pub generator: Option<String>,
    pub seed: u64,
    pub planted: PlantedPartition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub out_heads: usize,
    pub variant: AttentionVariant,
    pub aggregation: AggregationMode,
    pub dropout: f64,
    pub attn_dropout: f64,
    pub activation: Activation,
    pub negative_slope: f64,
    pub renormalize: bool,
    pub bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Gcn,
            layers: 2,
            hidden: 16,
            heads: 8,
            out_heads: 1,
            variant: AttentionVariant::Original,
            aggregation: AggregationMode::SoftmaxAttention,
            dropout: 0.5,
            attn_dropout: 0.0,
            activation: Activation::Relu,
            negative_slope: 0.2,
            renormalize: true,
            bias: true,
        }
    }
}

impl ModelConfig {
    /// Hidden layers use the configured activation; the output layer is
    /// linear. Attention layers concatenate heads except the output layer,
    /// which averages `out_heads` heads.
    pub fn layer_specs(&self, num_outputs: usize) -> Result<Vec<LayerSpec>> {
        if self.layers == 0 {
            return config_err("model.layers must be at least 1");
        }
        let specs = (0..self.layers)
            .map(|l| {
                let last = l + 1 == self.layers;
                let kind = match self.kind {
                    ModelKind::Gcn => LayerKind::Gcn {
                        renormalize: self.renormalize,
                    },
                    ModelKind::Resgcn => LayerKind::ResGcn,
                    ModelKind::Mlp => LayerKind::Linear,
                    ModelKind::Gat => LayerKind::Gat {
                        heads: if last { self.out_heads } else { self.heads },
                        variant: self.variant,
                        mode: self.aggregation,
                        concat: !last,
                        negative_slope: self.negative_slope,
                        attn_dropout: self.attn_dropout,
                    },
                };
                LayerSpec {
                    kind,
                    out_dim: if last { num_outputs } else { self.hidden },
                    act: if last {
                        Activation::Identity
                    } else {
                        self.activation
                    },
                    dropout: self.dropout,
                    bias: self.bias,
                }
            })
            .collect();
        Ok(specs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
}

/// Axes of an ablation; each non-empty list is one axis of the grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AblateConfig {
    pub loss: Vec<String>,
    pub label_trick: Vec<String>,
    pub variant: Vec<String>,
    pub aggregation: Vec<String>,
    pub model: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub loss_kind: String,
    pub loss_q: f64,
    pub loss_epsilon: f64,
    pub label_trick: LabelTrickConfig,
    pub optim: AdamConfig,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    pub ablate: AblateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig {
                path: None,
                generator: None,
                seed: 0,
                planted: PlantedPartition::default(),
            },
            model: ModelConfig::default(),
            loss_kind: "logistic".into(),
            loss_q: LQ_DEFAULT_Q,
            loss_epsilon: LOGE_EPSILON,
            label_trick: LabelTrickConfig::default(),
            optim: AdamConfig::default(),
            train: TrainConfig {
                epochs: 1000,
                patience: 100,
                seeds: vec![0],
            },
            output_dir: PathBuf::from("out"),
            ablate: AblateConfig::default(),
        }
    }
}

/// Every accepted key, in the order used by [`RunConfig::effective`].
pub const KEYS: &[&str] = &[
    "data.path",
    "data.generator",
    "data.seed",
    "data.n",
    "data.num_classes",
    "data.p_in",
    "data.p_out",
    "data.feat_dim",
    "data.feat_noise",
    "data.label_rate",
    "data.valid_share",
    "model.kind",
    "model.layers",
    "model.hidden",
    "model.heads",
    "model.out_heads",
    "model.variant",
    "model.aggregation",
    "model.dropout",
    "model.attn_dropout",
    "model.activation",
    "model.negative_slope",
    "model.renormalize",
    "model.bias",
    "loss.kind",
    "loss.q",
    "loss.epsilon",
    "label_trick.enabled",
    "label_trick.split_ratio",
    "label_trick.recycle",
    "label_trick.reuse_soft",
    "label_trick.labels_on_dU_only",
    "optim.lr",
    "optim.beta1",
    "optim.beta2",
    "optim.eps",
    "optim.weight_decay",
    "train.epochs",
    "train.patience",
    "train.seeds",
    "output.dir",
    "ablate.loss",
    "ablate.label_trick",
    "ablate.variant",
    "ablate.aggregation",
    "ablate.model",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// `0..10`, `3` or `1, 4, 9`.
fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in parse_list(value) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (
                parse("train.seeds", a.trim())?,
                parse("train.seeds", b.trim())?,
            );
            seeds.extend(a..b);
        } else {
            seeds.push(parse("train.seeds", &part)?);
        }
    }
    Ok(seeds)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return config_err(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    k + 1
                ));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let Some((key, value)) = o.split_once('=') else {
                return config_err(format!("override {o:?} is not key=value"));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.data.planted;
        match key {
            "data.path" => self.data.path = (!value.is_empty()).then(|| PathBuf::from(value)),
            "data.generator" => {
                if !value.is_empty() && value != "planted_partition" {
                    return config_err(format!("unknown data.generator {value:?}; expected planted_partition"));
                }
                self.data.generator = (!value.is_empty()).then(|| value.to_string());
            }
            "data.seed" => self.data.seed = parse(key, value)?,
            "data.n" => p.n = parse(key, value)?,
            "data.num_classes" => p.num_classes = parse(key, value)?,
            "data.p_in" => p.p_in = parse(key, value)?,
            "data.p_out" => p.p_out = parse(key, value)?,
            "data.feat_dim" => p.feat_dim = parse(key, value)?,
            "data.feat_noise" => p.feat_noise = parse(key, value)?,
            "data.label_rate" => p.label_rate = parse(key, value)?,
            "data.valid_share" => p.valid_share = parse(key, value)?,
            "model.kind" => {
                self.model.kind = ModelKind::parse(value)
                    .ok_or_else(|| Error::Config(format!("unknown model.kind {value:?}; expected gcn, resgcn, gat or mlp")))?
            }
            "model.layers" => self.model.layers = parse(key, value)?,
            "model.hidden" => self.model.hidden = parse(key, value)?,
            "model.heads" => self.model.heads = parse(key, value)?,
            "model.out_heads" => self.model.out_heads = parse(key, value)?,
            "model.variant" => {
                self.model.variant = AttentionVariant::parse(value).ok_or_else(|| {
                    Error::Config(format!(
                        "unknown model.variant {value:?}; expected original, simplified, non_interactive or edge_feature"
                    ))
                })?
            }
            "model.aggregation" => {
                self.model.aggregation = AggregationMode::parse(value).ok_or_else(|| {
                    Error::Config(format!("unknown model.aggregation {value:?}; expected softmax or norm_adj"))
                })?
            }
            "model.dropout" => self.model.dropout = parse(key, value)?,
            "model.attn_dropout" => self.model.attn_dropout = parse(key, value)?,
            "model.activation" => {
                self.model.activation = Activation::parse(value)
                    .ok_or_else(|| Error::Config(format!("unknown model.activation {value:?}")))?
            }
            "model.negative_slope" => self.model.negative_slope = parse(key, value)?,
            "model.renormalize" => self.model.renormalize = parse(key, value)?,
            "model.bias" => self.model.bias = parse(key, value)?,
            "loss.kind" => {
                MarginLossKind::from_name(value, None, None)?;
                self.loss_kind = value.to_string();
            }
            "loss.q" => self.loss_q = parse(key, value)?,
            "loss.epsilon" => self.loss_epsilon = parse(key, value)?,
            "label_trick.enabled" => self.label_trick.enabled = parse(key, value)?,
            "label_trick.split_ratio" => self.label_trick.split_ratio = parse(key, value)?,
            "label_trick.recycle" => self.label_trick.recycle = parse(key, value)?,
            "label_trick.reuse_soft" => self.label_trick.reuse_soft = parse(key, value)?,
            "label_trick.labels_on_dU_only" => self.label_trick.labels_on_du_only = parse(key, value)?,
            "optim.lr" => self.optim.lr = parse(key, value)?,
            "optim.beta1" => self.optim.beta1 = parse(key, value)?,
            "optim.beta2" => self.optim.beta2 = parse(key, value)?,
            "optim.eps" => self.optim.eps = parse(key, value)?,
            "optim.weight_decay" => self.optim.weight_decay = parse(key, value)?,
            "train.epochs" => self.train.epochs = parse(key, value)?,
            "train.patience" => self.train.patience = parse(key, value)?,
            "train.seeds" => self.train.seeds = parse_seeds(value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            "ablate.loss" => self.ablate.loss = parse_list(value),
            "ablate.label_trick" => self.ablate.label_trick = parse_list(value),
            "ablate.variant" => self.ablate.variant = parse_list(value),
            "ablate.aggregation" => self.ablate.aggregation = parse_list(value),
            "ablate.model" => self.ablate.model = parse_list(value),
            _ => {
                return config_err(format!("unknown key {key:?}; valid keys: {}", KEYS.join(", ")));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let p = &self.data.planted;
        let m = &self.model;
        let lt = &self.label_trick;
        let o = &self.optim;
        let join = |v: &[String]| v.join(",");
        Some(match key {
            "data.path" => self
                .data
                .path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "data.generator" => self.data.generator.clone().unwrap_or_default(),
            "data.seed" => self.data.seed.to_string(),
            "data.n" => p.n.to_string(),
            "data.num_classes" => p.num_classes.to_string(),
            "data.p_in" => fmt_f64(p.p_in),
            "data.p_out" => fmt_f64(p.p_out),
            "data.feat_dim" => p.feat_dim.to_string(),
            "data.feat_noise" => fmt_f64(p.feat_noise),
            "data.label_rate" => fmt_f64(p.label_rate),
            "data.valid_share" => fmt_f64(p.valid_share),
            "model.kind" => m.kind.name().to_string(),
            "model.layers" => m.layers.to_string(),
            "model.hidden" => m.hidden.to_string(),
            "model.heads" => m.heads.to_string(),
            "model.out_heads" => m.out_heads.to_string(),
            "model.variant" => m.variant.name().to_string(),
            "model.aggregation" => m.aggregation.name().to_string(),
            "model.dropout" => fmt_f64(m.dropout),
            "model.attn_dropout" => fmt_f64(m.attn_dropout),
            "model.activation" => m.activation.name(),
            "model.negative_slope" => fmt_f64(m.negative_slope),
            "model.renormalize" => m.renormalize.to_string(),
            "model.bias" => m.bias.to_string(),
            "loss.kind" => self.loss_kind.clone(),
            "loss.q" => fmt_f64(self.loss_q),
            "loss.epsilon" => fmt_f64(self.loss_epsilon),
            "label_trick.enabled" => lt.enabled.to_string(),
            "label_trick.split_ratio" => fmt_f64(lt.split_ratio),
            "label_trick.recycle" => lt.recycle.to_string(),
            "label_trick.reuse_soft" => lt.reuse_soft.to_string(),
            "label_trick.labels_on_dU_only" => lt.labels_on_du_only.to_string(),
            "optim.lr" => fmt_f64(o.lr),
            "optim.beta1" => fmt_f64(o.beta1),
            "optim.beta2" => fmt_f64(o.beta2),
            "optim.eps" => fmt_f64(o.eps),
            "optim.weight_decay" => fmt_f64(o.weight_decay),
            "train.epochs" => self.train.epochs.to_string(),
            "train.patience" => self.train.patience.to_string(),
            "train.seeds" => self
                .train
                .seeds
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "output.dir" => self.output_dir.display().to_string(),
            "ablate.loss" => join(&self.ablate.loss),
            "ablate.label_trick" => join(&self.ablate.label_trick),
            "ablate.variant" => join(&self.ablate.variant),
            "ablate.aggregation" => join(&self.ablate.aggregation),
            "ablate.model" => join(&self.ablate.model),
            _ => return None,
        })
    }

    /// Every key with its current value, in [`KEYS`] order.
    pub fn effective(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|k| (k.to_string(), self.get(k).expect("listed keys resolve")))
            .collect()
    }

    pub fn loss(&self) -> Result<MarginLossKind> {
        MarginLossKind::from_name(&self.loss_kind, Some(self.loss_q), Some(self.loss_epsilon))
    }

    /// Checks everything that can be checked without the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.train.seeds.is_empty() {
            return config_err("train.seeds is empty");
        }
        if self.train.epochs == 0 {
            return config_err("train.epochs must be at least 1");
        }
        if self.train.patience == 0 {
            return config_err("train.patience must be at least 1");
        }
        if [self.optim.lr, self.optim.weight_decay]
            .iter()
            .any(|v| v.is_nan() || *v < 0.0)
        {
            return config_err("optim.lr and optim.weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.optim.beta1) || !(0.0..1.0).contains(&self.optim.beta2) {
            return config_err("optim.beta1 and optim.beta2 must lie in [0, 1)");
        }
        if self.model.hidden == 0 || self.model.heads == 0 || self.model.out_heads == 0 {
            return config_err("model.hidden, model.heads and model.out_heads must be positive");
        }
        self.loss()?;
        if self.label_trick.enabled {
            self.label_trick.validate()?;
        }
        match (&self.data.path, &self.data.generator) {
            (None, None) => config_err("no dataset: set data.path or data.generator"),
            (Some(_), Some(_)) => config_err("set only one of data.path and data.generator"),
            _ => Ok(()),
        }
    }

    /// Loads or generates the configured dataset.
    pub fn load_data(&self) -> Result<DatasetBundle> {
        match (&self.data.path, &self.data.generator) {
            (Some(path), None) => {
                if !path.is_dir() {
                    return Err(Error::Load {
                        path: path.clone(),
                        reason: "dataset directory not found".into(),
                    });
                }
                load_dataset(path)
            }
            (None, Some(_)) => gen_planted_partition(&self.data.planted, self.data.seed),
            _ => {
                self.validate()?;
                unreachable!("validate rejects the remaining cases")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_text_and_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# run\n data.path = data/cora \nloss.kind = loge # inline\ntrain.seeds = 0..3, 7\n",
        )
        .unwrap();
        assert_eq!(cfg.data.path.as_deref(), Some(Path::new("data/cora")));
        assert_eq!(cfg.train.seeds, vec![0, 1, 2, 7]);
        assert_eq!(cfg.loss().unwrap(), MarginLossKind::loge());
        cfg.apply_overrides(&["model.kind=gat", "model.variant = simplified"])
            .unwrap();
        assert_eq!(cfg.model.kind, ModelKind::Gat);
        assert_eq!(cfg.model.variant, AttentionVariant::Simplified);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = RunConfig::default().set("model.depth", "3").unwrap_err();
        assert!(err.is_config());
        let msg = err.to_string();
        assert!(
            msg.contains("model.layers") && msg.contains("label_trick.recycle"),
            "{msg}"
        );
    }

    #[test]
    fn bad_values_are_config_errors() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("train.epochs", "many").unwrap_err().is_config());
        assert!(cfg.set("loss.kind", "hinge").unwrap_err().is_config());
        assert!(cfg.apply_text("no equals sign").unwrap_err().is_config());
    }

    #[test]
    fn effective_round_trips_through_set() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&[
            "data.generator=planted_partition",
            "loss.kind=lq",
            "ablate.loss=logistic,loge",
        ])
        .unwrap();
        let mut copy = RunConfig::default();
        for (k, v) in cfg.effective() {
            copy.set(&k, &v).unwrap();
        }
        assert_eq!(copy, cfg);
    }

    #[test]
    fn missing_dataset_is_config_error() {
        assert!(RunConfig::default().validate().unwrap_err().is_config());
        let mut cfg = RunConfig::default();
        cfg.set("data.path", "/nonexistent/dataset").unwrap();
        assert!(cfg.load_data().unwrap_err().is_config());
    }

    #[test]
    fn gat_layer_specs() {
        let m = ModelConfig {
            kind: ModelKind::Gat,
            heads: 8,
            out_heads: 1,
            ..Default::default()
        };
        let specs = m.layer_specs(7).unwrap();
        assert!(matches!(
            specs[0].kind,
            LayerKind::Gat {
                heads: 8,
                concat: true,
                ..
            }
        ));
        assert!(matches!(
            specs[1].kind,
            LayerKind::Gat {
                heads: 1,
                concat: false,
                ..
            }
        ));
        assert_eq!(specs[1].out_dim, 7);
    }
}
