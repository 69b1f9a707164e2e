//! Finite-difference checks of every backward pass, run as one suite.
//!
//! Each case packs its differentiable inputs into a [`ParamStore`], computes
//! the analytic gradient once and compares it with central differences.
//! Matrix-valued outputs are reduced to a scalar with a fixed random
//! projection `Σ R ⊙ out`, so `R` itself is the upstream gradient.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::graph::{build_csr_with_features, BuildOptions, CsrGraph};
use crate::layers::{
    build_model, AggregationMode, AttentionVariant, GraphContext, LayerKind, LayerSpec, Mode,
};
use crate::loss::{binary_margin_batch, multiclass_loss, MarginLossKind};
use crate::nn::{
    activation, activation_backward, affine, affine_backward, grad_check, seeded_rng, softmax_rows,
    softmax_rows_backward, Activation, ParamStore,
};
use crate::tensor::DenseMatrix;

/// A suite passes when every case stays below this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
const STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCase {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub cases: Vec<GradCase>,
}

impl SuiteReport {
    pub fn worst(&self) -> f64 {
        self.cases
            .iter()
            .map(|c| c.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() < GRADCHECK_TOLERANCE
    }
}

fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Entries at least 0.1 away from zero, clear of activation kinks.
fn off_kink(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    random(rows, cols, rng).map(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 })
}

fn project(out: &DenseMatrix, r: &DenseMatrix) -> f64 {
    out.hadamard(r).expect("projection shapes match").sum()
}

/// `f` returns the loss and the gradient of every stored matrix, in order.
fn run_case(
    name: impl Into<String>,
    inputs: Vec<(&str, DenseMatrix)>,
    f: impl Fn(&ParamStore) -> Result<(f64, Vec<DenseMatrix>)>,
) -> Result<GradCase> {
    let mut params = ParamStore::new();
    for (n, v) in inputs {
        params.add(n, v, false)?;
    }
    let (_, grads) = f(&params)?;
    let ids: Vec<_> = params.ids().collect();
    for (id, g) in ids.into_iter().zip(&grads) {
        params.accumulate(id, g)?;
    }
    let report = grad_check(&params, |p| f(p).map_or(f64::NAN, |r| r.0), STEP, None, 0)?;
    Ok(GradCase {
        name: name.into(),
        max_rel_error: report.max_rel_error,
        checked: report.checked,
    })
}

/// Six nodes, a cycle plus two chords, with two-dimensional edge features.
pub fn suite_graph() -> Result<CsrGraph> {
    let edges = [
        (0, 1),
        (1, 2),
        (2, 3),
        (3, 4),
        (4, 5),
        (5, 0),
        (0, 3),
        (1, 4),
    ];
    let mut rng = seeded_rng(11, 0);
    let feats = random(edges.len(), 2, &mut rng);
    build_csr_with_features(&edges, Some(&feats), 6, BuildOptions::undirected())
}

fn dense_cases(cases: &mut Vec<GradCase>) -> Result<()> {
    let mut rng = seeded_rng(1, 0);
    let (x, w, b) = (
        random(5, 3, &mut rng),
        random(3, 4, &mut rng),
        random(1, 4, &mut rng),
    );
    let r = random(5, 4, &mut rng);
    cases.push(run_case(
        "affine",
        vec![("x", x), ("w", w), ("b", b)],
        |p| {
            let ids: Vec<_> = p.ids().collect();
            let (x, w, b) = (p.value(ids[0]), p.value(ids[1]), p.value(ids[2]));
            let out = affine(x, w, Some(b))?;
            let g = affine_backward(x, w, &r)?;
            Ok((project(&out, &r), vec![g.d_x, g.d_w, g.d_b]))
        },
    )?);

    let acts = [
        Activation::Identity,
        Activation::Relu,
        Activation::LeakyRelu(0.2),
        Activation::Elu,
    ];
    for act in acts {
        let x = off_kink(4, 3, &mut rng);
        let r = random(4, 3, &mut rng);
        cases.push(run_case(
            format!("activation/{}", act.name()),
            vec![("x", x)],
            |p| {
                let x = p.value(p.ids().next().expect("one input"));
                let out = activation(x, act);
                Ok((project(&out, &r), vec![activation_backward(x, &r, act)?]))
            },
        )?);
    }

    let x = random(4, 5, &mut rng);
    let r = random(4, 5, &mut rng);
    cases.push(run_case("softmax", vec![("x", x)], |p| {
        let x = p.value(p.ids().next().expect("one input"));
        let y = softmax_rows(x);
        Ok((project(&y, &r), vec![softmax_rows_backward(&y, &r)?]))
    })?);
    Ok(())
}

fn loss_cases(cases: &mut Vec<GradCase>) -> Result<()> {
    let mut rng = seeded_rng(2, 0);
    let kinds = [
        MarginLossKind::Logistic,
        MarginLossKind::Exponential,
        MarginLossKind::Sigmoid,
        MarginLossKind::Savage,
        MarginLossKind::lq(),
        MarginLossKind::loge(),
    ];
    let classes = [0, 2, 1, 3, 0, 1];
    let mask = [0, 1, 3, 4, 5];
    let signs = DenseMatrix::from_fn(6, 3, |i, k| if (i + k) % 3 == 0 { 1.0 } else { -1.0 });
    for kind in kinds {
        let logits = random(6, 4, &mut rng).map(|v| 2.0 * v);
        cases.push(run_case(
            format!("loss/multiclass/{}", kind.name()),
            vec![("logits", logits)],
            |p| {
                let out = multiclass_loss(
                    kind,
                    p.value(p.ids().next().expect("one input")),
                    &classes,
                    &mask,
                )?;
                Ok((out.loss, vec![out.grad]))
            },
        )?);
        let scores = random(6, 3, &mut rng).map(|v| 2.0 * v);
        cases.push(run_case(
            format!("loss/binary/{}", kind.name()),
            vec![("scores", scores)],
            |p| {
                let out = binary_margin_batch(
                    p.value(p.ids().next().expect("one input")),
                    &signs,
                    &mask,
                    kind,
                )?;
                Ok((out.loss, vec![out.grad]))
            },
        )?);
    }
    Ok(())
}

/// Builds a model and appends the input features as the last stored matrix,
/// so the case covers parameter and input gradients alike.
fn model_case(
    name: String,
    ctx: &GraphContext,
    specs: &[LayerSpec],
    seed: u64,
) -> Result<GradCase> {
    let mut rng = seeded_rng(seed, 0);
    let in_dim = 3;
    let (model, mut params) = build_model(specs, in_dim, ctx.graph().edge_feat_dim(), &mut rng)?;
    let x = random(ctx.num_nodes(), in_dim, &mut rng);
    let x_id = params.add("input", x, false)?;
    let r = random(ctx.num_nodes(), model.output_dim(), &mut rng);
    let eval =
        |p: &ParamStore, with_grad: bool| -> Result<(f64, Option<DenseMatrix>, ParamStore)> {
            let mut drop_rng = seeded_rng(seed, 1);
            let (out, trace) = model.forward(ctx, p, p.value(x_id), Mode::Train(&mut drop_rng))?;
            let loss = project(&out, &r);
            if !with_grad {
                return Ok((loss, None, ParamStore::new()));
            }
            let mut q = p.clone();
            q.zero_grads();
            let dx = model.backward(ctx, &mut q, &trace, &r, true)?;
            Ok((loss, dx, q))
        };
    let (_, dx, with_grads) = eval(&params, true)?;
    params.zero_grads();
    for id in params.ids().filter(|&id| id != x_id).collect::<Vec<_>>() {
        params.accumulate(id, with_grads.grad(id))?;
    }
    if let Some(dx) = dx {
        params.accumulate(x_id, &dx)?;
    }
    let report = grad_check(
        &params,
        |p| eval(p, false).map_or(f64::NAN, |r| r.0),
        STEP,
        None,
        0,
    )?;
    Ok(GradCase {
        name,
        max_rel_error: report.max_rel_error,
        checked: report.checked,
    })
}

fn gat_kind(variant: AttentionVariant, mode: AggregationMode, concat: bool) -> LayerKind {
    LayerKind::Gat {
        heads: 2,
        variant,
        mode,
        concat,
        negative_slope: 0.2,
        attn_dropout: 0.0,
    }
}

fn spec(kind: LayerKind, out_dim: usize, act: Activation, dropout: f64) -> LayerSpec {
    LayerSpec {
        kind,
        out_dim,
        act,
        dropout,
        bias: true,
    }
}

fn layer_cases(cases: &mut Vec<GradCase>, ctx: &GraphContext) -> Result<()> {
    let single = [
        ("gcn", LayerKind::Gcn { renormalize: false }),
        ("gcn/renormalized", LayerKind::Gcn { renormalize: true }),
        ("resgcn", LayerKind::ResGcn),
        ("linear", LayerKind::Linear),
    ];
    for (k, (name, kind)) in single.into_iter().enumerate() {
        let s = spec(kind, 4, Activation::Elu, 0.0);
        cases.push(model_case(
            format!("layer/{name}"),
            ctx,
            &[s],
            20 + k as u64,
        )?);
    }
    let modes = [
        AggregationMode::SoftmaxAttention,
        AggregationMode::NormAdjAttention,
    ];
    let mut seed = 40;
    for variant in AttentionVariant::ALL {
        for mode in modes {
            for concat in [true, false] {
                let s = spec(gat_kind(variant, mode, concat), 3, Activation::Elu, 0.0);
                let name = format!(
                    "layer/gat/{}/{}/{}",
                    variant.name(),
                    mode.name(),
                    if concat { "concat" } else { "mean" }
                );
                cases.push(model_case(name, ctx, &[s], seed)?);
                seed += 1;
            }
        }
    }
    Ok(())
}

fn full_model_cases(cases: &mut Vec<GradCase>, ctx: &GraphContext) -> Result<()> {
    let gcn = [
        spec(
            LayerKind::Gcn { renormalize: true },
            4,
            Activation::Relu,
            0.5,
        ),
        spec(
            LayerKind::Gcn { renormalize: true },
            3,
            Activation::Identity,
            0.5,
        ),
    ];
    cases.push(model_case("model/gcn-2".into(), ctx, &gcn, 70)?);
    let gat = [
        spec(
            gat_kind(
                AttentionVariant::Original,
                AggregationMode::SoftmaxAttention,
                true,
            ),
            4,
            Activation::Elu,
            0.5,
        ),
        spec(
            gat_kind(
                AttentionVariant::Original,
                AggregationMode::SoftmaxAttention,
                false,
            ),
            3,
            Activation::Identity,
            0.5,
        ),
    ];
    cases.push(model_case("model/gat-2".into(), ctx, &gat, 71)?);
    Ok(())
}

/// Runs every case on the six-node suite graph.
pub fn run_gradcheck_suite() -> Result<SuiteReport> {
    let ctx = GraphContext::new(suite_graph()?)?;
    let mut cases = Vec::new();
    dense_cases(&mut cases)?;
    loss_cases(&mut cases)?;
    layer_cases(&mut cases, &ctx)?;
    full_model_cases(&mut cases, &ctx)?;
    Ok(SuiteReport { cases })
}
