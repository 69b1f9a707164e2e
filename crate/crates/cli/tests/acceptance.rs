//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N PASS|FAIL` line before asserting.
//!
//! Run with `cargo test -p graphtricks-cli --test acceptance -- --nocapture`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use graphtricks::gradcheck_suite::run_gradcheck_suite;
use graphtricks::graph::{build_csr, build_csr_with_features};
use graphtricks::label_trick::{
    build_label_input, label_reuse_step, LabelInputRecord, Phase, TrainObserver,
};
use graphtricks::layers::{gat_attention, gat_forward, resgcn_forward, GatConfig, GatWeights};
use graphtricks::loss::{margin_loss, margin_loss_grad, rho, softplus};
use graphtricks::lpa::{lpa_closed_form, lpa_iterate};
use graphtricks::nn::{seeded_rng, Activation, Rng64};
use graphtricks::train::{run_ablation, train, AblationReport};
use graphtricks::{
    sym_norm_adj, AggregationMode, AttentionVariant, BuildOptions, DenseMatrix, Error, LpaConfig,
    MarginLossKind, RunConfig,
};

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n} {verdict}: {name}: {detail}");
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn load_config(name: &str) -> RunConfig {
    let root = workspace_root();
    let mut cfg = RunConfig::from_file(&root.join("configs").join(name)).unwrap();
    if let Some(path) = cfg.get("data.path").filter(|p| !p.is_empty()) {
        cfg.set("data.path", root.join(path).to_str().unwrap())
            .unwrap();
    }
    cfg
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Erdős–Rényi edge list with edge probability `p`.
fn random_edges(n: usize, p: f64, rng: &mut Rng64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

#[test]
fn criterion_1_gradient_suite() {
    let start = Instant::now();
    let suite = run_gradcheck_suite().unwrap();
    let elapsed = start.elapsed();
    let worst = suite
        .cases
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    let has_model = suite.cases.iter().any(|c| c.name.starts_with("model/"));
    let pass = suite.cases.iter().all(|c| c.max_rel_error < 1e-5)
        && has_model
        && elapsed < Duration::from_secs(30);
    report(
        1,
        "gradient suite",
        pass,
        &format!(
            "{} cases, worst {:.2e} ({}), {:.1}s",
            suite.cases.len(),
            worst.max_rel_error,
            worst.name,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_loss_identities() {
    let kinds = [
        MarginLossKind::Logistic,
        MarginLossKind::Exponential,
        MarginLossKind::Sigmoid,
        MarginLossKind::Savage,
        MarginLossKind::lq(),
        MarginLossKind::loge(),
    ];
    let mut worst: f64 = 0.0;
    for kind in kinds {
        for k in 0..=6000 {
            let v = -30.0 + k as f64 * 0.01;
            let composed = rho(kind, softplus(-v)).unwrap();
            let direct = margin_loss(kind, v);
            worst = worst.max((composed - direct).abs() / direct.abs().max(1.0));
        }
    }

    let loge = MarginLossKind::loge();
    let value_err = (margin_loss(loge, 0.0) + (1.0 - std::f64::consts::LN_2).ln()).abs();
    let grad_err = (margin_loss_grad(loge, 0.0) + 0.5).abs();
    let h = 1e-5;
    let curvature = (margin_loss_grad(loge, h) - margin_loss_grad(loge, -h)) / (2.0 * h);

    let pass = worst < 1e-10 && value_err <= 1e-12 && grad_err <= 1e-9 && curvature.abs() <= 1e-6;
    report(
        2,
        "loss identities",
        pass,
        &format!(
            "column gap {worst:.1e}, loge(0) err {value_err:.1e}, loge'(0) err {grad_err:.1e}, \
             loge''(0) {curvature:.1e}"
        ),
    );
}

#[test]
fn criterion_3_lpa_oracle() {
    let mut rng = seeded_rng(3, 0);
    let cfg = LpaConfig {
        lambda: 0.9,
        max_iters: 100_000,
        tol: 1e-13,
        renormalize: false,
    };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..=50);
        let g = build_csr(
            &random_edges(n, rng.random_range(0.05..0.4), &mut rng),
            n,
            BuildOptions::undirected(),
        )
        .unwrap();
        let s = sym_norm_adj(&g, false).unwrap();
        let c = 3;
        let y0 = DenseMatrix::from_fn(n, c, |i, k| {
            if i % 2 == 0 && (i / 2) % c == k {
                1.0
            } else {
                0.0
            }
        });
        let (it, _) = lpa_iterate(&s, &y0, &cfg).unwrap();
        let exact = lpa_closed_form(&s, &y0, cfg.lambda).unwrap();
        worst = worst.max(it.max_abs_diff(&exact));
    }

    let g = build_csr(&[(0, 1)], 2, BuildOptions::undirected()).unwrap();
    let s = sym_norm_adj(&g, false).unwrap();
    let y0 = DenseMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
    let two = LpaConfig { lambda: 0.5, ..cfg };
    let (y, _) = lpa_iterate(&s, &y0, &two).unwrap();
    let closed = lpa_closed_form(&s, &y0, 0.5).unwrap();
    let expect = [2.0 / 3.0, 1.0 / 3.0];
    let two_err = (0..2)
        .map(|i| {
            (y[(i, 0)] - expect[i])
                .abs()
                .max((closed[(i, 0)] - expect[i]).abs())
        })
        .fold(0.0, f64::max);

    let pass = worst < 1e-9 && two_err <= 1e-12;
    report(
        3,
        "label propagation oracle",
        pass,
        &format!("20 graphs worst {worst:.1e}, 2-node error {two_err:.1e}"),
    );
}

#[test]
fn criterion_4_norm_adj_equivalence() {
    let mut rng = seeded_rng(4, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.random_range(3..=30);
        let edges = random_edges(n, 0.2, &mut rng);
        let efeats = random_matrix(edges.len(), 2, &mut rng);
        let g =
            build_csr_with_features(&edges, Some(&efeats), n, BuildOptions::undirected()).unwrap();
        let s = sym_norm_adj(&g, true).unwrap();
        let (f_in, f_out) = (4, 3);
        let x = random_matrix(n, f_in, &mut rng);
        let w0 = random_matrix(f_in, f_out, &mut rng);
        let w1 = random_matrix(f_in, f_out, &mut rng);
        let expect = resgcn_forward(&s, &x, &w0, &w1, None, Activation::Relu)
            .unwrap()
            .out;
        for variant in AttentionVariant::ALL {
            let cfg = GatConfig {
                f_in,
                f_out,
                heads: 1,
                variant,
                mode: AggregationMode::NormAdjAttention,
                concat: true,
                act: Activation::Relu,
                negative_slope: 0.2,
                attn_dropout: 0.0,
            };
            let attn = DenseMatrix::zeros(1, cfg.attn_len(g.edge_feat_dim()));
            let p = GatWeights {
                w: &w0,
                attn: &attn,
                w1: Some(&w1),
                bias: None,
            };
            let out = gat_forward(&g, &x, &cfg, &p, None).unwrap().out;
            worst = worst.max(out.max_abs_diff(&expect));
        }
    }
    report(
        4,
        "zero attention with norm_adj equals residual GCN",
        worst <= 1e-12,
        &format!("10 graphs x 4 variants, worst {worst:.1e}"),
    );
}

#[test]
fn criterion_5_attention_properties() {
    let mut rng = seeded_rng(5, 0);
    let n = 8;
    let (f_in, f_out, heads) = (3, 2, 2);
    let mut stochastic: f64 = 0.0;
    let mut equivariant: f64 = 0.0;
    for variant in AttentionVariant::ALL {
        for _ in 0..5 {
            let edges = random_edges(n, 0.35, &mut rng);
            let efeats = random_matrix(edges.len(), 2, &mut rng);
            let opts = BuildOptions {
                add_self_loops: true,
                ..BuildOptions::undirected()
            };
            let g = build_csr_with_features(&edges, Some(&efeats), n, opts).unwrap();
            let cfg = GatConfig {
                f_in,
                f_out,
                heads,
                variant,
                mode: AggregationMode::SoftmaxAttention,
                concat: true,
                act: Activation::Elu,
                negative_slope: 0.2,
                attn_dropout: 0.0,
            };
            let x = random_matrix(n, f_in, &mut rng);
            let w = random_matrix(f_in, heads * f_out, &mut rng);
            let mut attn = random_matrix(heads, cfg.attn_len(g.edge_feat_dim()), &mut rng);
            attn.scale(3.0);
            let p = GatWeights {
                w: &w,
                attn: &attn,
                w1: None,
                bias: None,
            };

            let att = gat_attention(&g, &x, &cfg, &p).unwrap();
            for i in 0..n {
                for k in 0..heads {
                    let sum: f64 = g.row_range(i).map(|e| att.alpha[(e, k)]).sum();
                    stochastic = stochastic.max((sum - 1.0).abs());
                }
            }

            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let pg = g.permuted(&perm).unwrap();
            let mut px = DenseMatrix::zeros(n, f_in);
            for i in 0..n {
                px.row_mut(perm[i]).copy_from_slice(x.row(i));
            }
            let out = gat_forward(&g, &x, &cfg, &p, None).unwrap().out;
            let pout = gat_forward(&pg, &px, &cfg, &p, None).unwrap().out;
            for i in 0..n {
                for (a, b) in out.row(i).iter().zip(pout.row(perm[i])) {
                    equivariant = equivariant.max((a - b).abs());
                }
            }
        }
    }
    report(
        5,
        "attention row-stochastic and permutation-equivariant",
        stochastic <= 1e-12 && equivariant <= 1e-12,
        &format!("4 variants x 5 graphs, row-sum error {stochastic:.1e}, permutation error {equivariant:.1e}"),
    );
}

#[derive(Default)]
struct LeakageProbe {
    train: BTreeSet<usize>,
    epochs: BTreeSet<usize>,
    violations: Vec<String>,
}

impl TrainObserver for LeakageProbe {
    fn label_input(&mut self, r: &LabelInputRecord) {
        if r.phase != Phase::Train || r.pass != 0 {
            return;
        }
        self.epochs.insert(r.epoch);
        let d_l: BTreeSet<usize> = r.d_l.iter().copied().collect();
        if let Some(i) = d_l.iter().find(|i| !self.train.contains(i)) {
            self.violations
                .push(format!("epoch {}: non-training node {i} in dL", r.epoch));
        }
        for i in 0..r.input.rows() {
            if !d_l.contains(&i) && r.input.row(i).iter().any(|&v| v != 0.0) {
                self.violations
                    .push(format!("epoch {}: label content on row {i}", r.epoch));
            }
        }
    }
}

#[test]
fn criterion_6_label_leakage() {
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("data.generator", "planted_partition"),
        ("data.n", "300"),
        ("label_trick.enabled", "true"),
        ("label_trick.recycle", "1"),
        ("train.epochs", "50"),
        ("train.patience", "1000"),
        ("train.seeds", "0"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.validate().unwrap();
    let bundle = cfg.load_data().unwrap();
    let labels = &bundle.labels;
    let mut probe = LeakageProbe {
        train: labels.train_idx().iter().copied().collect(),
        ..Default::default()
    };
    train(&cfg, &bundle, Some(&mut probe)).unwrap();

    let outsider = [labels.valid_idx()[0], labels.test_idx()[0]];
    let y_hat = DenseMatrix::from_fn(labels.num_nodes(), labels.num_classes(), |_, _| {
        1.0 / labels.num_classes() as f64
    });
    let rejected = outsider.iter().all(|&i| {
        matches!(build_label_input(labels, &[i]), Err(Error::Leakage(j)) if j == i)
            && matches!(label_reuse_step(labels, &[i], &y_hat, true), Err(Error::Leakage(j)) if j == i)
    });

    let pass = probe.epochs.len() == 50 && probe.violations.is_empty() && rejected;
    report(
        6,
        "label input leakage",
        pass,
        &format!(
            "{} epochs observed, {} violations{}, non-training dL rejected: {rejected}",
            probe.epochs.len(),
            probe.violations.len(),
            probe
                .violations
                .first()
                .map(|v| format!(" (first: {v})"))
                .unwrap_or_default()
        ),
    );
}

fn timed_test_mean(cfg: &RunConfig) -> (f64, Duration) {
    let bundle = cfg.load_data().unwrap();
    let start = Instant::now();
    let outcome = train(cfg, &bundle, None).unwrap();
    (100.0 * outcome.summary.test.mean, start.elapsed())
}

#[test]
fn criterion_7_cora_accuracy() {
    let limit = Duration::from_secs(120);
    let gcn = load_config("cora_gcn.conf");
    let mut loge = gcn.clone();
    loge.set("loss.kind", "loge").unwrap();
    let gat = load_config("cora_gat.conf");
    let mut norm_adj = gat.clone();
    norm_adj.set("model.aggregation", "norm_adj").unwrap();

    let (gcn_acc, t_gcn) = timed_test_mean(&gcn);
    let (loge_acc, t_loge) = timed_test_mean(&loge);
    let (gat_acc, t_gat) = timed_test_mean(&gat);
    let (norm_acc, t_norm) = timed_test_mean(&norm_adj);

    let checks = [
        (
            "GCN logistic in [80.3, 84.3]",
            (80.3..=84.3).contains(&gcn_acc),
        ),
        ("GAT norm_adj >= GAT - 0.5", norm_acc >= gat_acc - 0.5),
        ("GCN loge >= GCN logistic - 0.3", loge_acc >= gcn_acc - 0.3),
        (
            "each run < 120 s",
            [t_gcn, t_loge, t_gat, t_norm].iter().all(|t| *t < limit),
        ),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    report(
        7,
        "Cora accuracy",
        failed.is_empty(),
        &format!(
            "GCN {gcn_acc:.2} ({:.0}s), loge {loge_acc:.2} ({:.0}s), GAT {gat_acc:.2} ({:.0}s), \
             GAT norm_adj {norm_acc:.2} ({:.0}s); failed: {failed:?}",
            t_gcn.as_secs_f64(),
            t_loge.as_secs_f64(),
            t_gat.as_secs_f64(),
            t_norm.as_secs_f64()
        ),
    );
}

/// Runs a committed ablation config and checks it reproduces the committed
/// `metrics.json` byte for byte.
fn committed_ablation(name: &str) -> (AblationReport, bool) {
    let cfg = load_config(name);
    let grid = run_ablation(&cfg).unwrap();
    let committed = workspace_root().join(&cfg.output_dir).join("metrics.json");
    let text = std::fs::read_to_string(&committed).unwrap();
    let fresh = serde_json::to_string(&grid).unwrap() + "\n";
    let same = fresh == text;
    (grid, same)
}

fn cell_mean(
    grid: &AblationReport,
    pick: impl Fn(&graphtricks::train::AblationCell) -> bool,
) -> (f64, f64) {
    let cell = grid.cells.iter().find(|c| pick(c)).expect("cell present");
    let s = cell.summary.as_ref().expect("cell trained");
    (100.0 * s.test.mean, 100.0 * s.train.mean)
}

#[test]
fn criterion_8_label_trick_direction() {
    let (grid, reproduced) = committed_ablation("planted_label_trick.conf");
    let cfg = load_config("planted_label_trick.conf");
    let (base, base_train) = cell_mean(&grid, |c| c.label_trick == "off");
    let (input, _) = cell_mean(&grid, |c| c.label_trick == "input");
    let (reuse, _) = cell_mean(&grid, |c| c.label_trick == "reuse");
    let pass = cfg.get("data.label_rate").as_deref() == Some("0.6")
        && base_train < 100.0
        && input >= base - 0.5
        && reuse >= input - 0.5
        && reproduced;
    report(
        8,
        "label trick direction on planted partition",
        pass,
        &format!(
            "generator seed {}, baseline {base:.2} (train {base_train:.2}), input {input:.2}, \
             reuse {reuse:.2}, committed results reproduced: {reproduced}",
            cfg.get("data.seed").unwrap()
        ),
    );
}

#[test]
fn criterion_9_savage_on_large_planted_partition() {
    let (grid, reproduced) = committed_ablation("planted_savage.conf");
    let cfg = load_config("planted_savage.conf");
    let (logistic, _) = cell_mean(&grid, |c| c.loss == "logistic");
    let (savage, _) = cell_mean(&grid, |c| c.loss == "savage");
    let pass = cfg.get("data.n").as_deref() == Some("5000") && savage <= logistic && reproduced;
    report(
        9,
        "savage does not beat logistic at n = 5000",
        pass,
        &format!("logistic {logistic:.2}, savage {savage:.2}, committed results reproduced: {reproduced}"),
    );
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let status = Command::new(env!("CARGO_BIN_EXE_graphtricks"))
            .args(["train", "--out"])
            .arg(&out)
            .args([
                "--set",
                "data.generator=planted_partition",
                "--set",
                "data.n=300",
                "--set",
                "label_trick.enabled=true",
                "--set",
                "label_trick.recycle=1",
                "--set",
                "train.epochs=60",
                "--set",
                "train.seeds=0..3",
            ])
            .output()
            .unwrap();
        assert!(status.status.success(), "{status:?}");
        std::fs::read(out.join("metrics.json")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    report(
        10,
        "byte-identical metrics.json",
        a == b,
        &format!("{} bytes, identical: {}", a.len(), a == b),
    );
}
