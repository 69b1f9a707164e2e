//! Adapter for the LINQS citation files (`<name>.content`, `<name>.cites`).
//!
//! `.content` lines are `paper_id <TAB> f_1 … f_F <TAB> class_name`;
//! `.cites` lines are `cited_id <TAB> citing_id`. Nodes keep the order of the
//! `.content` file, class names are indexed in sorted order, and citations
//! naming an unknown paper are dropped.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;

use super::{DatasetBundle, Meta, Metric};
use crate::error::{Error, Result};
use crate::label_trick::LabelSet;
use crate::nn::seeded_rng;
use crate::tensor::DenseMatrix;

/// Class-balanced random split: `per_class` training nodes per class, then
/// `valid` and `test` nodes drawn from the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinqsSplit {
    pub per_class: usize,
    pub valid: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for LinqsSplit {
    fn default() -> Self {
        Self {
            per_class: 20,
            valid: 500,
            test: 1000,
            seed: 0,
        }
    }
}

fn load_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn import_linqs(
    content: &Path,
    cites: &Path,
    name: &str,
    split: &LinqsSplit,
) -> Result<DatasetBundle> {
    let text = std::fs::read_to_string(content).map_err(|e| load_err(content, e.to_string()))?;
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    for (k, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(load_err(
                content,
                format!("line {} has {} fields", k + 1, fields.len()),
            ));
        }
        let feats = fields[1..fields.len() - 1]
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| load_err(content, format!("line {}: {e}", k + 1)))?;
        if ids.insert(fields[0].to_string(), rows.len()).is_some() {
            return Err(load_err(
                content,
                format!("duplicate paper id {}", fields[0]),
            ));
        }
        rows.push(feats);
        class_names.push(fields[fields.len() - 1].trim().to_string());
    }
    let n = rows.len();
    let f = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != f) {
        return Err(load_err(content, "rows have differing feature counts"));
    }
    let features = DenseMatrix::from_vec(n, f, rows.into_iter().flatten().collect())?;

    let mut names: Vec<String> = class_names.clone();
    names.sort();
    names.dedup();
    let classes: Vec<usize> = class_names
        .iter()
        .map(|c| names.binary_search(c).expect("name collected above"))
        .collect();

    let cite_text = std::fs::read_to_string(cites).map_err(|e| load_err(cites, e.to_string()))?;
    let mut edges = Vec::new();
    for (k, line) in cite_text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
            return Err(load_err(cites, format!("line {} is not a pair", k + 1)));
        };
        if let (Some(&i), Some(&j)) = (ids.get(a), ids.get(b)) {
            edges.push((i, j));
        }
    }

    let mut rng = seeded_rng(split.seed, 0x6c69);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); names.len()];
    for (i, &c) in classes.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for members in &mut by_class {
        members.shuffle(&mut rng);
        let take = split.per_class.min(members.len());
        train.extend_from_slice(&members[..take]);
        rest.extend_from_slice(&members[take..]);
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    if split.valid + split.test > rest.len() {
        return Err(Error::Config(format!(
            "{} validation and {} test nodes requested but only {} remain",
            split.valid,
            split.test,
            rest.len()
        )));
    }
    let mut valid = rest[..split.valid].to_vec();
    let mut test = rest[split.valid..split.valid + split.test].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();

    let labels = LabelSet::multiclass(classes, names.len(), train, valid, test)?;
    let meta = Meta {
        name: name.to_string(),
        num_classes: names.len(),
        metric: Metric::Accuracy,
        normalize_features: true,
    };
    DatasetBundle::new(edges, None, features, labels, meta)
}
