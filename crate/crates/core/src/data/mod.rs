//! Datasets on disk and in memory.
//!
//! A bundle directory holds:
//!
//! - `edges.tsv`: `src<TAB>dst` per line, 0-based;
//! - `features.csv`: one comma-separated row per node;
//! - `labels.csv`: an integer class per node, or comma-separated ±1 rows
//!   when the metric is `rocauc`;
//! - `splits.json`: `{"train": [...], "valid": [...], "test": [...]}`;
//! - `meta.json`: `{"name", "num_classes", "metric", "normalize_features"}`;
//! - `edge_feats.tsv` (optional): one row per line of `edges.tsv`.

mod linqs;
mod synthetic;

pub use linqs::{import_linqs, LinqsSplit};
pub use synthetic::{gen_planted_partition, PlantedPartition};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    build_csr_with_features, read_edge_features, read_edge_list, write_edge_features,
    write_edge_list, BuildOptions, CsrGraph,
};
use crate::label_trick::LabelSet;
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Rocauc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Rocauc => "rocauc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub num_classes: usize,
    pub metric: Metric,
    #[serde(default)]
    pub normalize_features: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    /// Edge list as stored on disk; `graph` is its symmetrized form.
    pub edges: Vec<(usize, usize)>,
    pub edge_feats: Option<DenseMatrix>,
    pub graph: CsrGraph,
    /// Raw features; see [`DatasetBundle::input_features`].
    pub features: DenseMatrix,
    pub labels: LabelSet,
    pub meta: Meta,
}

#[derive(Serialize, Deserialize)]
struct Splits {
    train: Vec<usize>,
    valid: Vec<usize>,
    test: Vec<usize>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

impl DatasetBundle {
    /// Assembles and validates a bundle, building the symmetric graph.
    pub fn new(
        edges: Vec<(usize, usize)>,
        edge_feats: Option<DenseMatrix>,
        features: DenseMatrix,
        labels: LabelSet,
        meta: Meta,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.num_nodes() != n {
            return Err(invalid(format!(
                "{} label rows for {n} feature rows",
                labels.num_nodes()
            )));
        }
        if labels.num_classes() != meta.num_classes {
            return Err(invalid(format!(
                "labels have {} classes, meta declares {}",
                labels.num_classes(),
                meta.num_classes
            )));
        }
        if labels.is_multilabel() != (meta.metric == Metric::Rocauc) {
            return Err(invalid(
                "multi-label targets go with the rocauc metric, class labels with accuracy",
            ));
        }
        if !features.all_finite() {
            return Err(invalid("features contain non-finite values"));
        }
        let graph =
            build_csr_with_features(&edges, edge_feats.as_ref(), n, BuildOptions::undirected())
                .map_err(|e| invalid(e.to_string()))?;
        Ok(Self {
            edges,
            edge_feats,
            graph,
            features,
            labels,
            meta,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    /// Features as fed to models: row-L1-normalized when the metadata asks
    /// for it (all-zero rows stay zero).
    pub fn input_features(&self) -> DenseMatrix {
        let mut x = self.features.clone();
        if self.meta.normalize_features {
            for r in 0..x.rows() {
                let row = x.row_mut(r);
                let total: f64 = row.iter().map(|v| v.abs()).sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|v| *v /= total);
                }
            }
        }
        x
    }
}

fn load_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| load_err(path, e.to_string()))
}

fn parse_rows(path: &Path, text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, line)| {
            line.split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| load_err(path, format!("line {}: {e}", k + 1)))
        })
        .collect()
}

fn rows_to_matrix(path: &Path, rows: Vec<Vec<f64>>) -> Result<DenseMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(k) = rows.iter().position(|r| r.len() != cols) {
        return Err(load_err(
            path,
            format!(
                "line {} has {} values, expected {cols}",
                k + 1,
                rows[k].len()
            ),
        ));
    }
    let n = rows.len();
    DenseMatrix::from_vec(n, cols, rows.into_iter().flatten().collect())
}

/// Loads and validates a bundle directory.
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let file = |name: &str| -> PathBuf { dir.join(name) };
    let meta_path = file("meta.json");
    let meta: Meta = serde_json::from_str(&read_text(&meta_path)?)
        .map_err(|e| load_err(&meta_path, e.to_string()))?;

    let feat_path = file("features.csv");
    let features = rows_to_matrix(&feat_path, parse_rows(&feat_path, &read_text(&feat_path)?)?)?;
    let n = features.rows();

    let edges_path = file("edges.tsv");
    if !edges_path.exists() {
        return Err(load_err(&edges_path, "file not found"));
    }
    let edges = read_edge_list(&edges_path)?;
    let efeat_path = file("edge_feats.tsv");
    let edge_feats = if efeat_path.exists() {
        Some(read_edge_features(&efeat_path)?)
    } else {
        None
    };

    let splits_path = file("splits.json");
    let splits: Splits = serde_json::from_str(&read_text(&splits_path)?)
        .map_err(|e| load_err(&splits_path, e.to_string()))?;

    let labels_path = file("labels.csv");
    let label_text = read_text(&labels_path)?;
    let labels = match meta.metric {
        Metric::Accuracy => {
            let classes = label_text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(k, l)| {
                    l.trim()
                        .parse::<usize>()
                        .map_err(|e| load_err(&labels_path, format!("line {}: {e}", k + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            LabelSet::multiclass(
                classes,
                meta.num_classes,
                splits.train,
                splits.valid,
                splits.test,
            )?
        }
        Metric::Rocauc => {
            let signs = rows_to_matrix(&labels_path, parse_rows(&labels_path, &label_text)?)?;
            LabelSet::multilabel(&signs, splits.train, splits.valid, splits.test)?
        }
    };
    if labels.num_nodes() != n {
        return Err(invalid(format!(
            "{} label rows for {n} feature rows",
            labels.num_nodes()
        )));
    }
    DatasetBundle::new(edges, edge_feats, features, labels, meta)
}

/// Shortest text that parses back to the same value; integral values are
/// written without a fractional part.
fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:?}")
    }
}

fn write_rows(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut out = String::with_capacity(m.len() * 4);
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|&v| format_value(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes a bundle directory that [`load_dataset`] reads back unchanged.
pub fn save_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_edge_list(&dir.join("edges.tsv"), &bundle.edges)?;
    if let Some(f) = &bundle.edge_feats {
        write_edge_features(&dir.join("edge_feats.tsv"), f)?;
    }
    write_rows(&dir.join("features.csv"), &bundle.features)?;
    match bundle.labels.classes() {
        Some(classes) => {
            let text: String = classes.iter().map(|c| format!("{c}\n")).collect();
            fs::write(dir.join("labels.csv"), text)?;
        }
        None => write_rows(&dir.join("labels.csv"), &bundle.labels.signs())?,
    }
    let splits = Splits {
        train: bundle.labels.train_idx().to_vec(),
        valid: bundle.labels.valid_idx().to_vec(),
        test: bundle.labels.test_idx().to_vec(),
    };
    fs::write(
        dir.join("splits.json"),
        serde_json::to_string(&splits).expect("plain data serializes"),
    )?;
    fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&bundle.meta).expect("plain data serializes") + "\n",
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DatasetBundle {
        let labels = LabelSet::multiclass(vec![0, 1], 2, vec![0], vec![], vec![1]).unwrap();
        let features = DenseMatrix::from_rows(&[vec![1e-17, 0.1], vec![-3.0, 2.5e300]]).unwrap();
        let meta = Meta {
            name: "tiny".into(),
            num_classes: 2,
            metric: Metric::Accuracy,
            normalize_features: false,
        };
        DatasetBundle::new(vec![(0, 1)], None, features, labels, meta).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let b = tiny();
        save_bundle(&b, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), b);
    }

    #[test]
    fn value_formatting_round_trips() {
        for v in [
            0.0,
            -0.0,
            1.0,
            1e-17,
            0.1,
            1.0 / 3.0,
            2.5e300,
            -7.0,
            1e15,
            123456.5,
        ] {
            let parsed: f64 = format_value(v).parse().unwrap();
            assert_eq!(parsed.to_bits(), v.to_bits(), "{v}");
        }
        assert_eq!(format_value(1.0), "1");
    }

    #[test]
    fn missing_file_is_load_error() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&tiny(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("edges.tsv")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Load { .. })));
    }

    #[test]
    fn overlapping_splits_are_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&tiny(), dir.path()).unwrap();
        fs::write(
            dir.path().join("splits.json"),
            r#"{"train":[0],"valid":[],"test":[0]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn out_of_range_edge_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&tiny(), dir.path()).unwrap();
        fs::write(dir.path().join("edges.tsv"), "0\t5\n").unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn normalization_is_applied_on_use() {
        let mut b = tiny();
        b.features = DenseMatrix::from_rows(&[vec![1.0, 3.0], vec![0.0, 0.0]]).unwrap();
        b.meta.normalize_features = true;
        let x = b.input_features();
        assert_eq!(x.row(0), &[0.25, 0.75]);
        assert_eq!(x.row(1), &[0.0, 0.0]);
    }
}
