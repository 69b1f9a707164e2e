//! Multi-head graph attention.
//!
//! Per head `k` and edge `e = (i, j)` with `j ∈ N(i)` the attention logit is
//! `el_i + er_j + ee_e`, where the terms depend on the variant:
//!
//! | variant          | el_i        | er_j        | ee_e        |
//! |------------------|-------------|-------------|-------------|
//! | original         | a_l · W x_i | a_r · W x_j | 0           |
//! | simplified       | a_l · x_i   | a_r · x_j   | 0           |
//! | non_interactive  | 0           | a · x_j     | 0           |
//! | edge_feature     | a_l · x_i   | a_r · x_j   | a_e · x^E_e |
//!
//! `α = softmax_{N(i)}(LeakyReLU(logit))`. Softmax aggregation computes
//! `Σ_j α_ij W x_j`; norm-adj aggregation propagates through
//! `D̃^{-1/2}(I + Dα)D̃^{-1/2}` and adds a free linear term `X·W1`.
//!
//! Weights of all heads are stacked: `w` is `F_in × (heads·F_out)` and `attn`
//! holds one attention vector per row.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, input_err, Result};
use crate::features::Features;
use crate::graph::CsrGraph;
use crate::nn::{activation, activation_backward, dropout_mask, Activation, Rng64};
use crate::tensor::{dot, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    Original,
    Simplified,
    NonInteractive,
    EdgeFeature,
}

impl AttentionVariant {
    pub const ALL: [AttentionVariant; 4] = [
        AttentionVariant::Original,
        AttentionVariant::Simplified,
        AttentionVariant::NonInteractive,
        AttentionVariant::EdgeFeature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttentionVariant::Original => "original",
            AttentionVariant::Simplified => "simplified",
            AttentionVariant::NonInteractive => "non_interactive",
            AttentionVariant::EdgeFeature => "edge_feature",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    SoftmaxAttention,
    NormAdjAttention,
}

impl AggregationMode {
    pub fn name(self) -> &'static str {
        match self {
            AggregationMode::SoftmaxAttention => "softmax_attention",
            AggregationMode::NormAdjAttention => "norm_adj_attention",
        }
    }

    /// Accepts the full names and the short forms `softmax` and `norm_adj`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "softmax" | "softmax_attention" => Some(AggregationMode::SoftmaxAttention),
            "norm_adj" | "norm_adj_attention" => Some(AggregationMode::NormAdjAttention),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatConfig {
    pub f_in: usize,
    pub f_out: usize,
    pub heads: usize,
    pub variant: AttentionVariant,
    pub mode: AggregationMode,
    /// Concatenate heads (hidden layers) or average them (output layer).
    pub concat: bool,
    pub act: Activation,
    pub negative_slope: f64,
    pub attn_dropout: f64,
}

impl GatConfig {
    pub fn attn_len(&self, edge_feat_dim: usize) -> usize {
        match self.variant {
            AttentionVariant::Original => 2 * self.f_out,
            AttentionVariant::Simplified => 2 * self.f_in,
            AttentionVariant::NonInteractive => self.f_in,
            AttentionVariant::EdgeFeature => 2 * self.f_in + edge_feat_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        if self.concat {
            self.heads * self.f_out
        } else {
            self.f_out
        }
    }

    fn head_scale(&self) -> f64 {
        if self.concat {
            1.0
        } else {
            1.0 / self.heads as f64
        }
    }

    fn out_offset(&self, k: usize) -> usize {
        if self.concat {
            k * self.f_out
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 {
            return config_err("attention needs at least one head");
        }
        if self.f_out == 0 {
            return config_err("attention output width must be positive");
        }
        if !(0.0..1.0).contains(&self.attn_dropout) {
            return config_err(format!(
                "attention dropout {} outside [0, 1)",
                self.attn_dropout
            ));
        }
        if self.negative_slope < 0.0 {
            return config_err("LeakyReLU slope must be non-negative");
        }
        Ok(())
    }
}

/// Borrowed layer parameters.
#[derive(Debug, Clone, Copy)]
pub struct GatWeights<'a> {
    pub w: &'a DenseMatrix,
    pub attn: &'a DenseMatrix,
    pub w1: Option<&'a DenseMatrix>,
    pub bias: Option<&'a DenseMatrix>,
}

#[derive(Debug, Clone)]
pub struct GatAttention {
    /// `num_edges × heads`, rows of each neighborhood sum to one.
    pub alpha: DenseMatrix,
    /// Logits before LeakyReLU, same layout as `alpha`.
    pub logits: DenseMatrix,
    /// Projected features `X·W`, `N × (heads·F_out)`.
    pub h: DenseMatrix,
}

#[derive(Debug, Clone)]
pub struct GatForward {
    pub out: DenseMatrix,
    pub pre: DenseMatrix,
    pub attention: GatAttention,
    /// Dropout multipliers applied to `alpha`, when attention dropout ran.
    pub drop_mask: Option<DenseMatrix>,
}

#[derive(Debug, Clone)]
pub struct GatGrads {
    pub d_x: Option<DenseMatrix>,
    pub d_w: DenseMatrix,
    pub d_attn: DenseMatrix,
    pub d_w1: Option<DenseMatrix>,
    pub d_b: Option<DenseMatrix>,
}

fn check_inputs(g: &CsrGraph, x: &dyn Features, cfg: &GatConfig, p: &GatWeights) -> Result<()> {
    cfg.validate()?;
    if x.rows() != g.num_nodes() {
        return input_err(format!(
            "graph has {} nodes but features have {} rows",
            g.num_nodes(),
            x.rows()
        ));
    }
    if x.cols() != cfg.f_in {
        return input_err(format!(
            "features have {} columns, layer expects {}",
            x.cols(),
            cfg.f_in
        ));
    }
    if p.w.shape() != (cfg.f_in, cfg.heads * cfg.f_out) {
        return input_err(format!("attention weight has shape {:?}", p.w.shape()));
    }
    if cfg.variant == AttentionVariant::EdgeFeature && g.edge_feats().is_none() {
        return config_err("edge_feature attention needs edge features on the graph");
    }
    let len = cfg.attn_len(g.edge_feat_dim());
    if p.attn.shape() != (cfg.heads, len) {
        return input_err(format!(
            "attention vectors have shape {:?}, expected ({}, {len})",
            p.attn.shape(),
            cfg.heads
        ));
    }
    match (cfg.mode, p.w1) {
        (AggregationMode::NormAdjAttention, None) => {
            return config_err("norm_adj attention needs the linear weight w1")
        }
        (AggregationMode::SoftmaxAttention, Some(_)) => {
            return config_err("softmax attention takes no linear weight w1")
        }
        (AggregationMode::NormAdjAttention, Some(w1))
            if w1.shape() != (cfg.f_in, cfg.out_dim()) =>
        {
            return input_err(format!("w1 has shape {:?}", w1.shape()))
        }
        _ => {}
    }
    if cfg.mode == AggregationMode::SoftmaxAttention {
        if let Some(i) = (0..g.num_nodes()).find(|&i| g.row_range(i).is_empty()) {
            return config_err(format!(
                "node {i} has an empty neighborhood; softmax attention needs self-loops on every node"
            ));
        }
    }
    Ok(())
}

/// Per-node terms `el`, `er` (each `N × heads`).
fn node_terms(
    x: &dyn Features,
    h: &DenseMatrix,
    cfg: &GatConfig,
    attn: &DenseMatrix,
) -> (DenseMatrix, DenseMatrix) {
    let n = x.rows();
    let mut el = DenseMatrix::zeros(n, cfg.heads);
    let mut er = DenseMatrix::zeros(n, cfg.heads);
    for k in 0..cfg.heads {
        let a = attn.row(k);
        for i in 0..n {
            match cfg.variant {
                AttentionVariant::Original => {
                    let hi = &h.row(i)[k * cfg.f_out..(k + 1) * cfg.f_out];
                    el[(i, k)] = dot(&a[..cfg.f_out], hi);
                    er[(i, k)] = dot(&a[cfg.f_out..], hi);
                }
                AttentionVariant::Simplified | AttentionVariant::EdgeFeature => {
                    el[(i, k)] = x.row_dot(i, &a[..cfg.f_in]);
                    er[(i, k)] = x.row_dot(i, &a[cfg.f_in..2 * cfg.f_in]);
                }
                AttentionVariant::NonInteractive => {
                    er[(i, k)] = x.row_dot(i, a);
                }
            }
        }
    }
    (el, er)
}

/// Attention coefficients over each neighborhood of `g`.
pub fn gat_attention(
    g: &CsrGraph,
    x: &dyn Features,
    cfg: &GatConfig,
    p: &GatWeights,
) -> Result<GatAttention> {
    check_inputs(g, x, cfg, p)?;
    let h = x.matmul(p.w)?;
    let (el, er) = node_terms(x, &h, cfg, p.attn);
    let num_edges = g.num_edges();
    let heads = cfg.heads;
    let mut logits = DenseMatrix::zeros(num_edges, heads);
    let mut alpha = DenseMatrix::zeros(num_edges, heads);
    let leaky = Activation::LeakyRelu(cfg.negative_slope);
    let edge_feats = match cfg.variant {
        AttentionVariant::EdgeFeature => Some(g.edge_feats().expect("checked above")),
        _ => None,
    };
    let col = g.col_idx();
    let mut max = vec![0.0; heads];
    let mut total = vec![0.0; heads];
    for i in 0..g.num_nodes() {
        let range = g.row_range(i);
        max.fill(f64::NEG_INFINITY);
        total.fill(0.0);
        let eli = el.row(i);
        for e in range.clone() {
            let erj = er.row(col[e]);
            let (lrow, arow) = (logits.row_mut(e), alpha.row_mut(e));
            for k in 0..heads {
                let mut v = eli[k] + erj[k];
                if let Some(feats) = edge_feats {
                    v += dot(&p.attn.row(k)[2 * cfg.f_in..], feats.row(e));
                }
                lrow[k] = v;
                let z = leaky.apply(v);
                arow[k] = z;
                max[k] = max[k].max(z);
            }
        }
        for e in range.clone() {
            for (k, a) in alpha.row_mut(e).iter_mut().enumerate() {
                *a = (*a - max[k]).exp();
                total[k] += *a;
            }
        }
        for e in range {
            for (a, t) in alpha.row_mut(e).iter_mut().zip(&total) {
                *a /= t;
            }
        }
    }
    Ok(GatAttention { alpha, logits, h })
}

/// Per-edge factor multiplying `α_ij`, including the head-averaging scale:
/// 1 for softmax aggregation, `d_i / sqrt((d_i + 1)(d_j + 1))` for norm-adj
/// aggregation.
fn edge_coefficients(g: &CsrGraph, cfg: &GatConfig) -> Vec<f64> {
    let scale = cfg.head_scale();
    if cfg.mode == AggregationMode::SoftmaxAttention {
        return vec![scale; g.num_edges()];
    }
    let deg: Vec<f64> = (0..g.num_nodes())
        .map(|i| g.row_range(i).len() as f64)
        .collect();
    g.edges()
        .map(|(i, j)| scale * deg[i] / ((deg[i] + 1.0) * (deg[j] + 1.0)).sqrt())
        .collect()
}

fn aggregate_pre(
    g: &CsrGraph,
    x: &dyn Features,
    alpha: &DenseMatrix,
    h: &DenseMatrix,
    cfg: &GatConfig,
    p: &GatWeights,
) -> Result<DenseMatrix> {
    let n = g.num_nodes();
    let f = cfg.f_out;
    let scale = cfg.head_scale();
    let norm = cfg.mode == AggregationMode::NormAdjAttention;
    let col = g.col_idx();
    let coef = edge_coefficients(g, cfg);
    let mut pre = DenseMatrix::zeros(n, cfg.out_dim());
    for i in 0..n {
        let range = g.row_range(i);
        let di = range.len() as f64;
        let out = pre.row_mut(i);
        for e in range {
            let (a, hj) = (alpha.row(e), h.row(col[e]));
            for k in 0..cfg.heads {
                let c = coef[e] * a[k];
                let o = &mut out[cfg.out_offset(k)..cfg.out_offset(k) + f];
                for (ov, hv) in o.iter_mut().zip(&hj[k * f..(k + 1) * f]) {
                    *ov += c * hv;
                }
            }
        }
        if norm {
            let c = scale / (di + 1.0);
            let hi = h.row(i);
            for k in 0..cfg.heads {
                let o = &mut out[cfg.out_offset(k)..cfg.out_offset(k) + f];
                for (ov, hv) in o.iter_mut().zip(&hi[k * f..(k + 1) * f]) {
                    *ov += c * hv;
                }
            }
        }
    }
    if let Some(w1) = p.w1 {
        pre.add_assign(&x.matmul(w1)?)?;
    }
    if let Some(b) = p.bias {
        pre.add_row_broadcast(b)?;
    }
    Ok(pre)
}

/// Aggregates with given attention coefficients and applies the activation.
pub fn gat_aggregate(
    g: &CsrGraph,
    x: &dyn Features,
    alpha: &DenseMatrix,
    cfg: &GatConfig,
    p: &GatWeights,
) -> Result<DenseMatrix> {
    check_inputs(g, x, cfg, p)?;
    if alpha.shape() != (g.num_edges(), cfg.heads) {
        return input_err(format!("alpha has shape {:?}", alpha.shape()));
    }
    let h = x.matmul(p.w)?;
    Ok(activation(
        &aggregate_pre(g, x, alpha, &h, cfg, p)?,
        cfg.act,
    ))
}

/// Attention followed by aggregation. `rng` enables attention dropout.
pub fn gat_forward(
    g: &CsrGraph,
    x: &dyn Features,
    cfg: &GatConfig,
    p: &GatWeights,
    rng: Option<&mut Rng64>,
) -> Result<GatForward> {
    let attention = gat_attention(g, x, cfg, p)?;
    let drop_mask = match rng {
        Some(rng) if cfg.attn_dropout > 0.0 => Some(dropout_mask(
            g.num_edges(),
            cfg.heads,
            cfg.attn_dropout,
            rng,
        )),
        _ => None,
    };
    let pre = match &drop_mask {
        Some(mask) => aggregate_pre(g, x, &attention.alpha.hadamard(mask)?, &attention.h, cfg, p)?,
        None => aggregate_pre(g, x, &attention.alpha, &attention.h, cfg, p)?,
    };
    Ok(GatForward {
        out: activation(&pre, cfg.act),
        pre,
        attention,
        drop_mask,
    })
}

pub fn gat_backward(
    g: &CsrGraph,
    x: &dyn Features,
    cfg: &GatConfig,
    p: &GatWeights,
    fwd: &GatForward,
    d_out: &DenseMatrix,
    need_dx: bool,
) -> Result<GatGrads> {
    let n = g.num_nodes();
    let f = cfg.f_out;
    let heads = cfg.heads;
    let scale = cfg.head_scale();
    let norm = cfg.mode == AggregationMode::NormAdjAttention;
    let col = g.col_idx();
    let GatAttention { alpha, logits, h } = &fwd.attention;

    let d_pre = activation_backward(&fwd.pre, d_out, cfg.act)?;
    let mut d_x = if need_dx {
        Some(DenseMatrix::zeros(n, cfg.f_in))
    } else {
        None
    };
    let d_w1 = match p.w1 {
        Some(w1) => {
            if let Some(d_x) = d_x.as_mut() {
                d_x.add_assign(&d_pre.matmul_nt(w1)?)?;
            }
            Some(x.matmul_tn(&d_pre)?)
        }
        None => None,
    };

    // Aggregation: gradients w.r.t. projected features and attention.
    let mut d_h = DenseMatrix::zeros(n, heads * f);
    let mut d_alpha = DenseMatrix::zeros(g.num_edges(), heads);
    let coef = edge_coefficients(g, cfg);
    for i in 0..n {
        let range = g.row_range(i);
        let di = range.len() as f64;
        let gi = d_pre.row(i);
        for e in range {
            let j = col[e];
            let keep = fwd.drop_mask.as_ref().map(|m| m.row(e));
            let (a, d_a) = (alpha.row(e), d_alpha.row_mut(e));
            let (hj, d_hj) = (h.row(j), d_h.row_mut(j));
            for k in 0..heads {
                let keep = keep.map_or(1.0, |m| m[k]);
                let c = coef[e] * keep;
                let ca = c * a[k];
                let gk = &gi[cfg.out_offset(k)..cfg.out_offset(k) + f];
                for (dv, gv) in d_hj[k * f..(k + 1) * f].iter_mut().zip(gk) {
                    *dv += ca * gv;
                }
                d_a[k] = c * dot(gk, &hj[k * f..(k + 1) * f]);
            }
        }
        if norm {
            let c = scale / (di + 1.0);
            let d_hi = d_h.row_mut(i);
            for k in 0..heads {
                let gk = &gi[cfg.out_offset(k)..cfg.out_offset(k) + f];
                for (dv, gv) in d_hi[k * f..(k + 1) * f].iter_mut().zip(gk) {
                    *dv += c * gv;
                }
            }
        }
    }

    // Softmax and LeakyReLU: gradients w.r.t. the logit terms.
    let mut d_el = DenseMatrix::zeros(n, heads);
    let mut d_er = DenseMatrix::zeros(n, heads);
    let mut d_logit = DenseMatrix::zeros(g.num_edges(), heads);
    let leaky = Activation::LeakyRelu(cfg.negative_slope);
    let mut s = vec![0.0; heads];
    for i in 0..n {
        let range = g.row_range(i);
        s.fill(0.0);
        for e in range.clone() {
            for ((sk, a), da) in s.iter_mut().zip(alpha.row(e)).zip(d_alpha.row(e)) {
                *sk += a * da;
            }
        }
        for e in range {
            let (a, da, z) = (alpha.row(e), d_alpha.row(e), logits.row(e));
            let dl_row = d_logit.row_mut(e);
            for k in 0..heads {
                dl_row[k] = a[k] * (da[k] - s[k]) * leaky.derivative(z[k]);
            }
            for (k, &dl) in dl_row.iter().enumerate() {
                d_el[(i, k)] += dl;
                d_er[(col[e], k)] += dl;
            }
        }
    }

    let mut d_attn = DenseMatrix::zeros(heads, p.attn.cols());
    for k in 0..heads {
        let a = p.attn.row(k);
        let da = d_attn.row_mut(k);
        for i in 0..n {
            let (l, r) = (d_el[(i, k)], d_er[(i, k)]);
            match cfg.variant {
                AttentionVariant::Original => {
                    let hi = &h.row(i)[k * f..(k + 1) * f];
                    for t in 0..f {
                        da[t] += l * hi[t];
                        da[f + t] += r * hi[t];
                    }
                    for (t, dv) in d_h.row_mut(i)[k * f..(k + 1) * f].iter_mut().enumerate() {
                        *dv += l * a[t] + r * a[f + t];
                    }
                }
                AttentionVariant::Simplified | AttentionVariant::EdgeFeature => {
                    let fi = cfg.f_in;
                    x.row_axpy(i, l, &mut da[..fi]);
                    x.row_axpy(i, r, &mut da[fi..2 * fi]);
                    if let Some(d_x) = d_x.as_mut() {
                        for (t, dv) in d_x.row_mut(i).iter_mut().enumerate() {
                            *dv += l * a[t] + r * a[fi + t];
                        }
                    }
                }
                AttentionVariant::NonInteractive => {
                    x.row_axpy(i, r, &mut da[..cfg.f_in]);
                    if let Some(d_x) = d_x.as_mut() {
                        for (t, dv) in d_x.row_mut(i).iter_mut().enumerate() {
                            *dv += r * a[t];
                        }
                    }
                }
            }
        }
        if cfg.variant == AttentionVariant::EdgeFeature {
            let feats = g.edge_feats().expect("checked in forward");
            let off = 2 * cfg.f_in;
            for e in 0..g.num_edges() {
                let dl = d_logit[(e, k)];
                for (t, fv) in feats.row(e).iter().enumerate() {
                    da[off + t] += dl * fv;
                }
            }
        }
    }

    let d_w = x.matmul_tn(&d_h)?;
    if let Some(d_x) = d_x.as_mut() {
        d_x.add_assign(&d_h.matmul_nt(p.w)?)?;
    }
    Ok(GatGrads {
        d_x,
        d_w,
        d_attn,
        d_w1,
        d_b: p.bias.map(|_| d_pre.column_sum()),
    })
}
