//! Layer stacks: construction, forward passes with dropout, and backward
//! passes that accumulate into a [`ParamStore`].

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use super::gat::{
    gat_backward, gat_forward, AggregationMode, AttentionVariant, GatConfig, GatForward, GatWeights,
};
use super::gcn::{
    gcn_backward, gcn_forward, linear_backward, linear_forward, resgcn_backward, resgcn_forward,
    GcnForward, GcnGrads,
};
use crate::error::{config_err, input_err, Result};
use crate::features::{DropMask, NodeFeatures};
use crate::graph::{sym_norm_adj, with_self_loops, CsrGraph, NormalizedAdjacency};
use crate::nn::{glorot_init, Activation, ParamId, ParamStore, Rng64};
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    /// `σ(S·X·W + b)`, with `S` renormalized when flagged.
    Gcn {
        renormalize: bool,
    },
    /// `σ(S̃·X·W0 + X·W1 + b)`.
    ResGcn,
    Gat {
        heads: usize,
        variant: AttentionVariant,
        mode: AggregationMode,
        concat: bool,
        negative_slope: f64,
        attn_dropout: f64,
    },
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Output width; per head for attention layers.
    pub out_dim: usize,
    pub act: Activation,
    /// Dropout rate on the layer input.
    pub dropout: f64,
    pub bias: bool,
}

/// Propagation operators derived once from a symmetric graph.
#[derive(Debug, Clone)]
pub struct GraphContext {
    graph: CsrGraph,
    looped: CsrGraph,
    s: NormalizedAdjacency,
    s_renorm: NormalizedAdjacency,
}

impl GraphContext {
    pub fn new(graph: CsrGraph) -> Result<Self> {
        Ok(Self {
            s: sym_norm_adj(&graph, false)?,
            s_renorm: sym_norm_adj(&graph, true)?,
            looped: with_self_loops(&graph)?,
            graph,
        })
    }

    pub fn graph(&self) -> &CsrGraph {
        &self.graph
    }

    /// The graph with one self-loop per node, used by softmax attention.
    pub fn looped(&self) -> &CsrGraph {
        &self.looped
    }

    pub fn s(&self) -> &NormalizedAdjacency {
        &self.s
    }

    pub fn s_renorm(&self) -> &NormalizedAdjacency {
        &self.s_renorm
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    fn attention_graph(&self, mode: AggregationMode) -> &CsrGraph {
        match mode {
            AggregationMode::SoftmaxAttention => &self.looped,
            AggregationMode::NormAdjAttention => &self.graph,
        }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    spec: LayerSpec,
    in_dim: usize,
    w: ParamId,
    attn: Option<ParamId>,
    w1: Option<ParamId>,
    b: Option<ParamId>,
}

impl Layer {
    fn gat_config(&self) -> Option<GatConfig> {
        match self.spec.kind {
            LayerKind::Gat {
                heads,
                variant,
                mode,
                concat,
                negative_slope,
                attn_dropout,
            } => Some(GatConfig {
                f_in: self.in_dim,
                f_out: self.spec.out_dim,
                heads,
                variant,
                mode,
                concat,
                act: self.spec.act,
                negative_slope,
                attn_dropout,
            }),
            _ => None,
        }
    }

    fn out_dim(&self) -> usize {
        self.gat_config().map_or(self.spec.out_dim, |c| c.out_dim())
    }

    fn gat_weights<'a>(&self, params: &'a ParamStore) -> GatWeights<'a> {
        GatWeights {
            w: params.value(self.w),
            attn: params.value(self.attn.expect("attention layers own attention vectors")),
            w1: self.w1.map(|id| params.value(id)),
            bias: self.b.map(|id| params.value(id)),
        }
    }
}

/// Whether a forward pass samples dropout masks.
pub enum Mode<'a> {
    Train(&'a mut Rng64),
    Eval,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Dense(GcnForward),
    Gat(GatForward),
}

/// Values saved by [`Model::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<'a> {
    inputs: Vec<NodeFeatures<'a>>,
    masks: Vec<Option<DropMask>>,
    caches: Vec<LayerCache>,
}

#[derive(Debug, Clone)]
pub struct Model {
    layers: Vec<Layer>,
    input_dim: usize,
}

/// Creates the layers and their initialized parameters. Weights and
/// attention vectors are Glorot-initialized and decayed; biases start at 0.
pub fn build_model(
    specs: &[LayerSpec],
    input_dim: usize,
    edge_feat_dim: usize,
    rng: &mut Rng64,
) -> Result<(Model, ParamStore)> {
    let mut params = ParamStore::new();
    let mut layers = Vec::with_capacity(specs.len());
    let mut dim = input_dim;
    for (l, spec) in specs.iter().enumerate() {
        if spec.out_dim == 0 {
            return config_err(format!("layer {l} has zero output width"));
        }
        if !(0.0..1.0).contains(&spec.dropout) {
            return config_err(format!("layer {l} dropout {} outside [0, 1)", spec.dropout));
        }
        let probe = Layer {
            spec: *spec,
            in_dim: dim,
            w: ParamId::placeholder(),
            attn: None,
            w1: None,
            b: None,
        };
        let (w, attn, w1, width) = match probe.gat_config() {
            Some(cfg) => {
                cfg.validate()?;
                if cfg.variant == AttentionVariant::EdgeFeature && edge_feat_dim == 0 {
                    return config_err(format!(
                        "layer {l}: edge_feature attention needs edge features"
                    ));
                }
                let w = params.add(
                    format!("layer{l}.w"),
                    glorot_init(dim, cfg.heads * cfg.f_out, rng),
                    true,
                )?;
                let len = cfg.attn_len(edge_feat_dim);
                let mut attn = DenseMatrix::zeros(cfg.heads, len);
                for k in 0..cfg.heads {
                    attn.row_mut(k)
                        .copy_from_slice(glorot_init(1, len, rng).as_slice());
                }
                let attn = params.add(format!("layer{l}.attn"), attn, true)?;
                let w1 = if cfg.mode == AggregationMode::NormAdjAttention {
                    Some(params.add(
                        format!("layer{l}.w1"),
                        glorot_init(dim, cfg.out_dim(), rng),
                        true,
                    )?)
                } else {
                    None
                };
                (w, Some(attn), w1, cfg.out_dim())
            }
            None => {
                let w = params.add(
                    format!("layer{l}.w"),
                    glorot_init(dim, spec.out_dim, rng),
                    true,
                )?;
                let w1 = if spec.kind == LayerKind::ResGcn {
                    Some(params.add(
                        format!("layer{l}.w1"),
                        glorot_init(dim, spec.out_dim, rng),
                        true,
                    )?)
                } else {
                    None
                };
                (w, None, w1, spec.out_dim)
            }
        };
        let b = if spec.bias {
            Some(params.add(format!("layer{l}.b"), DenseMatrix::zeros(1, width), false)?)
        } else {
            None
        };
        let layer = Layer {
            w,
            attn,
            w1,
            b,
            ..probe
        };
        layers.push(layer);
        dim = width;
    }
    Ok((Model { layers, input_dim }, params))
}

impl Model {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Layer::out_dim)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn forward<'a>(
        &self,
        ctx: &GraphContext,
        params: &ParamStore,
        x: impl Into<NodeFeatures<'a>>,
        mut mode: Mode,
    ) -> Result<(DenseMatrix, ForwardTrace<'a>)> {
        let x = x.into();
        if x.shape() != (ctx.num_nodes(), self.input_dim) {
            return input_err(format!(
                "model expects input ({}, {}), got {:?}",
                ctx.num_nodes(),
                self.input_dim,
                x.shape()
            ));
        }
        let mut trace = ForwardTrace {
            inputs: Vec::new(),
            masks: Vec::new(),
            caches: Vec::new(),
        };
        let mut h = x;
        for layer in &self.layers {
            let mut mask = None;
            if let Mode::Train(rng) = &mut mode {
                if layer.spec.dropout > 0.0 {
                    let (dropped, m) = h.dropout(layer.spec.dropout, &mut **rng)?;
                    h = dropped;
                    mask = Some(m);
                }
            }
            let xin = h.as_features();
            let w = params.value(layer.w);
            let b = layer.b.map(|id| params.value(id));
            let act = layer.spec.act;
            let cache = match layer.spec.kind {
                LayerKind::Gcn { renormalize } => {
                    let s = if renormalize { ctx.s_renorm() } else { ctx.s() };
                    LayerCache::Dense(gcn_forward(s, xin, w, b, act)?)
                }
                LayerKind::ResGcn => {
                    let w1 = params.value(layer.w1.expect("residual layers own w1"));
                    LayerCache::Dense(resgcn_forward(ctx.s_renorm(), xin, w, w1, b, act)?)
                }
                LayerKind::Linear => LayerCache::Dense(linear_forward(xin, w, b, act)?),
                LayerKind::Gat { mode: agg, .. } => {
                    let cfg = layer.gat_config().expect("attention layer");
                    let rng = match &mut mode {
                        Mode::Train(rng) => Some(&mut **rng),
                        Mode::Eval => None,
                    };
                    let g = ctx.attention_graph(agg);
                    LayerCache::Gat(gat_forward(g, xin, &cfg, &layer.gat_weights(params), rng)?)
                }
            };
            let out = match &cache {
                LayerCache::Dense(f) => f.out.clone(),
                LayerCache::Gat(f) => f.out.clone(),
            };
            trace.inputs.push(std::mem::replace(
                &mut h,
                NodeFeatures::Dense(Cow::Owned(out)),
            ));
            trace.masks.push(mask);
            trace.caches.push(cache);
        }
        Ok((h.to_dense_owned(), trace))
    }

    /// Accumulates parameter gradients for `d_out`, the gradient of the loss
    /// with respect to the model output. Returns the input gradient.
    pub fn backward(
        &self,
        ctx: &GraphContext,
        params: &mut ParamStore,
        trace: &ForwardTrace<'_>,
        d_out: &DenseMatrix,
        need_input_grad: bool,
    ) -> Result<Option<DenseMatrix>> {
        let mut grad = d_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let x = trace.inputs[l].as_features();
            let x_pattern = &trace.inputs[l];
            let need_dx = l > 0 || need_input_grad;
            let w = params.value(layer.w);
            let act = layer.spec.act;
            let (d_x, d_w, d_attn, d_w1, d_b) = match (&trace.caches[l], layer.spec.kind) {
                (LayerCache::Dense(fwd), kind) => {
                    let g: GcnGrads = match kind {
                        LayerKind::Gcn { renormalize } => {
                            let s = if renormalize { ctx.s_renorm() } else { ctx.s() };
                            gcn_backward(s, x, w, fwd, act, &grad, need_dx)?
                        }
                        LayerKind::ResGcn => {
                            let w1 = params.value(layer.w1.expect("residual layers own w1"));
                            resgcn_backward(ctx.s_renorm(), x, w, w1, fwd, act, &grad, need_dx)?
                        }
                        _ => linear_backward(x, w, fwd, act, &grad, need_dx)?,
                    };
                    (g.d_x, g.d_w, None, g.d_w1, g.d_b)
                }
                (LayerCache::Gat(fwd), LayerKind::Gat { mode: agg, .. }) => {
                    let cfg = layer.gat_config().expect("attention layer");
                    let g = ctx.attention_graph(agg);
                    let gr =
                        gat_backward(g, x, &cfg, &layer.gat_weights(params), fwd, &grad, need_dx)?;
                    (gr.d_x, gr.d_w, Some(gr.d_attn), gr.d_w1, gr.d_b)
                }
                _ => unreachable!("cache kind follows layer kind"),
            };
            params.accumulate(layer.w, &d_w)?;
            if let (Some(id), Some(d)) = (layer.attn, d_attn) {
                params.accumulate(id, &d)?;
            }
            if let (Some(id), Some(d)) = (layer.w1, d_w1) {
                params.accumulate(id, &d)?;
            }
            if let (Some(id), Some(d)) = (layer.b, d_b) {
                params.accumulate(id, &d)?;
            }
            match (d_x, &trace.masks[l]) {
                (Some(d_x), Some(DropMask::Dense(mask))) => grad = d_x.hadamard(mask)?,
                (Some(d_x), Some(DropMask::Sparse(mask))) => match x_pattern {
                    NodeFeatures::Sparse(sp) => grad = sp.scale_dense_at_pattern(&d_x, mask),
                    NodeFeatures::Dense(_) => unreachable!("sparse masks come from sparse inputs"),
                },
                (Some(d_x), None) => grad = d_x,
                (None, _) => return Ok(None),
            }
        }
        Ok(Some(grad))
    }

    /// Forward pass without dropout, returning only the output.
    pub fn predict<'a>(
        &self,
        ctx: &GraphContext,
        params: &ParamStore,
        x: impl Into<NodeFeatures<'a>>,
    ) -> Result<DenseMatrix> {
        Ok(self.forward(ctx, params, x, Mode::Eval)?.0)
    }
}
