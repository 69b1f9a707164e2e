//! Result files: `metrics.json`, `table.md` and `log.txt`.
//!
//! Every file is a pure function of the configuration and the results, so
//! two runs with the same seeds produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::ablate::AblationReport;
use super::config::RunConfig;
use super::trainer::{RunOutcome, SeedResult, Summary};
use super::LpaOutcome;
use crate::data::{DatasetBundle, Metric};
use crate::error::Result;
use crate::label_trick::LabelTrickConfig;
use crate::loss::MarginLossKind;
use crate::lpa::LpaConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// The output directory itself is left out so that results do not depend
/// on where they are written.
pub(crate) fn config_map(cfg: &RunConfig) -> BTreeMap<String, String> {
    cfg.effective()
        .into_iter()
        .filter(|(k, _)| k != "output.dir")
        .collect()
}

#[derive(Serialize)]
struct RunFile<'a> {
    schema: u32,
    dataset: &'a str,
    metric: Metric,
    model: &'static str,
    loss: MarginLossKind,
    label_trick: &'a LabelTrickConfig,
    per_seed: &'a [SeedResult],
    summary: &'a Summary,
    config: BTreeMap<String, String>,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes") + "\n"
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

pub(crate) fn pct(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{:.2}", 100.0 * v)
    }
}

pub(crate) fn pct_pm(m: super::MeanStd) -> String {
    if m.mean.is_nan() {
        "n/a".into()
    } else {
        format!("{:.2} ± {:.2}", 100.0 * m.mean, 100.0 * m.std)
    }
}

pub(crate) fn label_trick_mode(lt: &LabelTrickConfig) -> &'static str {
    match (lt.enabled, lt.recycle) {
        (false, _) => "off",
        (true, 0) => "input",
        (true, _) => "reuse",
    }
}

fn log_text(seeds: &[SeedResult]) -> String {
    let mut s = String::from("epoch,train_loss,valid_metric\n");
    for r in seeds {
        let _ = writeln!(s, "# seed {}", r.seed);
        for l in &r.log {
            let _ = writeln!(s, "{},{:?},{:?}", l.epoch, l.train_loss, l.valid_metric);
        }
    }
    s
}

pub fn write_run(
    dir: &Path,
    cfg: &RunConfig,
    bundle: &DatasetBundle,
    out: &RunOutcome,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = RunFile {
        schema: SCHEMA_VERSION,
        dataset: &bundle.meta.name,
        metric: out.metric,
        model: cfg.model.kind.name(),
        loss: cfg.loss()?,
        label_trick: &cfg.label_trick,
        per_seed: &out.seeds,
        summary: &out.summary,
        config: config_map(cfg),
    };
    write(dir, "metrics.json", &json(&file))?;

    let mut table =
        String::from("| dataset | model | label trick | loss | train | valid | test |\n");
    table.push_str("|---|---|---|---|---|---|---|\n");
    let _ = writeln!(
        table,
        "| {} | {} | {} | {} | {} | {} | {} |",
        bundle.meta.name,
        cfg.model.kind.name(),
        label_trick_mode(&cfg.label_trick),
        cfg.loss()?.name(),
        pct_pm(out.summary.train),
        pct_pm(out.summary.valid),
        pct_pm(out.summary.test)
    );
    write(dir, "table.md", &table)?;
    write(dir, "log.txt", &log_text(&out.seeds))?;
    if let Some(p) = out.params.first() {
        write(dir, "params.json", &p.to_json())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LpaFile<'a> {
    schema: u32,
    dataset: &'a str,
    metric: Metric,
    lambda: f64,
    max_iters: usize,
    tol: f64,
    renormalize: bool,
    iterations: usize,
    train: f64,
    valid: f64,
    test: f64,
}

pub fn write_lpa(
    dir: &Path,
    cfg: &LpaConfig,
    bundle: &DatasetBundle,
    out: &LpaOutcome,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = LpaFile {
        schema: SCHEMA_VERSION,
        dataset: &bundle.meta.name,
        metric: bundle.meta.metric,
        lambda: cfg.lambda,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        renormalize: cfg.renormalize,
        iterations: out.iterations,
        train: out.metrics.train,
        valid: out.metrics.valid,
        test: out.metrics.test,
    };
    write(dir, "metrics.json", &json(&file))?;
    let table = format!(
        "| dataset | method | λ | iterations | train | valid | test |\n|---|---|---|---|---|---|---|\n| {} | lpa | {} | {} | {} | {} | {} |\n",
        bundle.meta.name,
        cfg.lambda,
        out.iterations,
        pct(out.metrics.train),
        pct(out.metrics.valid),
        pct(out.metrics.test)
    );
    write(dir, "table.md", &table)?;
    write(dir, "log.txt", &format!("iterations,{}\n", out.iterations))
}

pub fn write_ablation(dir: &Path, report: &AblationReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write(dir, "metrics.json", &json(report))?;
    write(dir, "table.md", &report.table())?;
    let mut log = String::new();
    for (k, cell) in report.cells.iter().enumerate() {
        let _ = writeln!(log, "# cell {k} {}", cell.label());
        match &cell.seeds {
            Some(seeds) => log.push_str(&log_text(seeds)),
            None => {
                let _ = writeln!(log, "# error: {}", cell.error.as_deref().unwrap_or(""));
            }
        }
    }
    write(dir, "log.txt", &log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_are_named() {
        let mut lt = LabelTrickConfig {
            enabled: false,
            ..Default::default()
        };
        assert_eq!(label_trick_mode(&lt), "off");
        lt.enabled = true;
        assert_eq!(label_trick_mode(&lt), "input");
        lt.recycle = 2;
        assert_eq!(label_trick_mode(&lt), "reuse");
    }

    #[test]
    fn loss_serializes_with_epsilon() {
        let s = serde_json::to_string(&MarginLossKind::loge()).unwrap();
        assert!(
            s.starts_with(r#"{"kind":"loge","epsilon":0.3068528194400"#),
            "{s}"
        );
    }
}
