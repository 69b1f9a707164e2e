//! Graph layers with paired forward and backward passes, and the layer
//! stacks built from them.

pub mod gat;
pub mod gcn;
pub mod model;

pub use gat::{
    gat_aggregate, gat_attention, gat_backward, gat_forward, AggregationMode, AttentionVariant,
    GatAttention, GatConfig, GatForward, GatGrads, GatWeights,
};
pub use gcn::{
    gcn_backward, gcn_forward, linear_backward, linear_forward, resgcn_backward, resgcn_forward,
    GcnForward, GcnGrads,
};
pub use model::{build_model, ForwardTrace, GraphContext, LayerKind, LayerSpec, Mode, Model};
