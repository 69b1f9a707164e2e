//! Cartesian ablation grids over model, attention, label-trick and loss axes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::config::{ModelKind, RunConfig};
use super::output::{config_map, label_trick_mode, pct_pm};
use super::trainer::{train, SeedResult, Summary};
use crate::error::{config_err, Result};

/// Axis order of the grid; the last axis varies fastest.
const AXES: [&str; 5] = [
    "model.kind",
    "model.variant",
    "model.aggregation",
    "label_trick",
    "loss.kind",
];

#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    /// `(axis, value)` for every active axis.
    pub overrides: Vec<(String, String)>,
    pub dataset: String,
    pub model: String,
    pub label_trick: String,
    pub loss: String,
    /// Keys whose effective value differs from the base configuration.
    pub changed: Vec<String>,
    pub summary: Option<Summary>,
    pub seeds: Option<Vec<SeedResult>>,
    pub error: Option<String>,
    pub config: BTreeMap<String, String>,
}

impl AblationCell {
    pub fn label(&self) -> String {
        self.overrides
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub schema: u32,
    pub loss_axis: Vec<String>,
    pub cells: Vec<AblationCell>,
}

/// Applies one label-trick mode: `off`, `input` (label as input) or `reuse`
/// (label reuse, keeping the base recycle count when it is positive).
fn apply_label_trick(cfg: &mut RunConfig, mode: &str) -> Result<()> {
    match mode {
        "off" => cfg.label_trick.enabled = false,
        "input" => {
            cfg.label_trick.enabled = true;
            cfg.label_trick.recycle = 0;
        }
        "reuse" => {
            cfg.label_trick.enabled = true;
            cfg.label_trick.recycle = cfg.label_trick.recycle.max(1);
        }
        other => {
            return config_err(format!(
                "ablate.label_trick value {other:?} is not one of off, input, reuse"
            ))
        }
    }
    Ok(())
}

fn model_label(cfg: &RunConfig) -> String {
    match cfg.model.kind {
        ModelKind::Gat => format!(
            "gat/{}/{}",
            cfg.model.variant.name(),
            cfg.model.aggregation.name()
        ),
        k => k.name().to_string(),
    }
}

/// One grid cell: its `(axis, value)` labels and the resulting configuration.
pub type CellConfig = (Vec<(String, String)>, RunConfig);

/// Builds every cell configuration without training anything, so that a bad
/// axis value fails before any work is done.
pub fn ablation_configs(base: &RunConfig) -> Result<Vec<CellConfig>> {
    let a = &base.ablate;
    let lists = [
        &a.model,
        &a.variant,
        &a.aggregation,
        &a.label_trick,
        &a.loss,
    ];
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (axis, values) in AXES.iter().zip(lists) {
        if values.is_empty() {
            continue;
        }
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((axis.to_string(), v.clone()));
                    c
                })
            })
            .collect();
    }
    let mut out = Vec::with_capacity(combos.len());
    for combo in combos {
        let mut cfg = base.clone();
        cfg.ablate = Default::default();
        for (axis, value) in &combo {
            if axis == "label_trick" {
                apply_label_trick(&mut cfg, value)?;
            } else {
                cfg.set(axis, value)?;
            }
        }
        cfg.validate()?;
        out.push((combo, cfg));
    }
    Ok(out)
}

/// Runs the grid. Configuration problems abort the whole ablation; failures
/// during training (such as divergence) are recorded in their cell.
pub fn run_ablation(base: &RunConfig) -> Result<AblationReport> {
    let configs = ablation_configs(base)?;
    let bundle = base.load_data()?;
    let base_map = config_map(base);
    let mut cells = Vec::with_capacity(configs.len());
    for (overrides, cfg) in configs {
        let config = config_map(&cfg);
        let changed = config
            .iter()
            .filter(|(k, v)| !k.starts_with("ablate.") && base_map.get(*k) != Some(v))
            .map(|(k, _)| k.clone())
            .collect();
        let (summary, seeds, error) = match train(&cfg, &bundle, None) {
            Ok(o) => (Some(o.summary), Some(o.seeds), None),
            Err(e) if e.is_config() => return Err(e),
            Err(e) => (None, None, Some(e.to_string())),
        };
        cells.push(AblationCell {
            overrides,
            dataset: bundle.meta.name.clone(),
            model: model_label(&cfg),
            label_trick: label_trick_mode(&cfg.label_trick).to_string(),
            loss: cfg.loss()?.name().to_string(),
            changed,
            summary,
            seeds,
            error,
            config,
        });
    }
    Ok(AblationReport {
        schema: super::output::SCHEMA_VERSION,
        loss_axis: base.ablate.loss.clone(),
        cells,
    })
}

impl AblationReport {
    /// Rows are dataset × model × label-trick mode; columns are the loss
    /// axis when present, otherwise a single test column.
    pub fn table(&self) -> String {
        let columns: Vec<String> = if self.loss_axis.is_empty() {
            vec!["test".into()]
        } else {
            self.loss_axis.clone()
        };
        let mut rows: Vec<(String, String, String)> = Vec::new();
        for c in &self.cells {
            let key = (c.dataset.clone(), c.model.clone(), c.label_trick.clone());
            if !rows.contains(&key) {
                rows.push(key);
            }
        }
        let mut s = format!(
            "| dataset | model | label trick | {} |\n",
            columns.join(" | ")
        );
        let _ = writeln!(s, "|---|---|---|{}", "---|".repeat(columns.len()));
        for (d, m, l) in &rows {
            let values: Vec<String> = columns
                .iter()
                .map(|col| {
                    let cell = self.cells.iter().find(|c| {
                        &c.dataset == d
                            && &c.model == m
                            && &c.label_trick == l
                            && (self.loss_axis.is_empty()
                                || c.overrides
                                    .iter()
                                    .any(|(k, v)| k == "loss.kind" && v == col))
                    });
                    match cell {
                        Some(AblationCell {
                            summary: Some(s), ..
                        }) => pct_pm(s.test),
                        Some(_) => "error".into(),
                        None => String::new(),
                    }
                })
                .collect();
            let _ = writeln!(s, "| {d} | {m} | {l} | {} |", values.join(" | "));
        }
        s
    }
}
