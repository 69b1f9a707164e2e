//! Semi-supervised node classification on graphs.
//!
//! The crate covers sparse graph handling and normalized adjacencies, GCN,
//! residual GCN and GAT layers with hand-written backward passes, a family
//! of margin-based losses, the label-as-input and label-reuse training
//! schedules, label propagation, and the training and ablation drivers used
//! by the `graphtricks` command-line tool.

pub mod data;
pub mod error;
pub mod features;
pub mod gradcheck_suite;
pub mod graph;
pub mod label_trick;
pub mod layers;
pub mod loss;
pub mod lpa;
pub mod nn;
pub mod tensor;
pub mod train;

pub use data::{load_dataset, save_bundle, DatasetBundle, Meta, Metric};
pub use error::{Error, Result};
pub use graph::{build_csr, sym_norm_adj, BuildOptions, CsrGraph, NormalizedAdjacency};
pub use label_trick::{LabelSet, LabelTrickConfig, TrainObserver};
pub use layers::{AggregationMode, AttentionVariant, GraphContext, LayerKind, LayerSpec, Model};
pub use loss::MarginLossKind;
pub use lpa::LpaConfig;
pub use nn::{AdamConfig, ParamStore};
pub use tensor::DenseMatrix;
pub use train::{RunConfig, RunOutcome};
