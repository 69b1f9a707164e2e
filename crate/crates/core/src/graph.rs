//! Compressed sparse row graphs, symmetric normalization and sparse-dense
//! products.
//!
//! Row `i` of a [`CsrGraph`] lists the neighborhood `N(i)`: the nodes whose
//! messages node `i` aggregates. Undirected graphs store both arcs.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{input_err, Error, Result};
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrGraph {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    edge_values: Option<Vec<f64>>,
    edge_feats: Option<DenseMatrix>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    pub symmetrize: bool,
    pub dedup: bool,
    pub add_self_loops: bool,
}

impl BuildOptions {
    /// Symmetrize and deduplicate, no self-loops.
    pub fn undirected() -> Self {
        Self {
            symmetrize: true,
            dedup: true,
            add_self_loops: false,
        }
    }
}

impl CsrGraph {
    /// Assembles a graph from raw CSR arrays, checking every structural
    /// invariant.
    pub fn from_parts(
        num_nodes: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        edge_values: Option<Vec<f64>>,
        edge_feats: Option<DenseMatrix>,
    ) -> Result<Self> {
        if row_ptr.len() != num_nodes + 1 {
            return input_err(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                num_nodes + 1
            ));
        }
        if row_ptr[0] != 0 || row_ptr[num_nodes] != col_idx.len() {
            return input_err("row_ptr must start at 0 and end at num_edges");
        }
        for i in 0..num_nodes {
            if row_ptr[i] > row_ptr[i + 1] {
                return input_err(format!("row_ptr decreases at row {i}"));
            }
            let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            for (k, &j) in row.iter().enumerate() {
                if j >= num_nodes {
                    return input_err(format!("column index {j} out of range in row {i}"));
                }
                if k > 0 && row[k - 1] >= j {
                    return input_err(format!("row {i} is not strictly increasing"));
                }
            }
        }
        if let Some(v) = &edge_values {
            if v.len() != col_idx.len() {
                return input_err("edge_values length differs from num_edges");
            }
        }
        if let Some(f) = &edge_feats {
            if f.rows() != col_idx.len() {
                return input_err(format!(
                    "edge features have {} rows for {} edges",
                    f.rows(),
                    col_idx.len()
                ));
            }
        }
        Ok(Self {
            num_nodes,
            row_ptr,
            col_idx,
            edge_values,
            edge_feats,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn edge_values(&self) -> Option<&[f64]> {
        self.edge_values.as_deref()
    }

    pub fn edge_feats(&self) -> Option<&DenseMatrix> {
        self.edge_feats.as_ref()
    }

    pub fn edge_feat_dim(&self) -> usize {
        self.edge_feats.as_ref().map_or(0, DenseMatrix::cols)
    }

    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_range(i)]
    }

    /// Position of edge `(i, j)` in `col_idx`, if stored.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.neighbors(i).binary_search(&j).ok().map(|k| start + k)
    }

    /// All stored `(row, col)` pairs in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |i| self.neighbors(i).iter().map(move |&j| (i, j)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges().all(|(i, j)| self.edge_index(j, i).is_some())
    }

    pub fn has_self_loop(&self, i: usize) -> bool {
        self.edge_index(i, i).is_some()
    }

    /// Relabels node `i` as `perm[i]`, carrying edge features along.
    pub fn permuted(&self, perm: &[usize]) -> Result<CsrGraph> {
        if perm.len() != self.num_nodes {
            return input_err("permutation length differs from num_nodes");
        }
        let edges: Vec<_> = self.edges().map(|(i, j)| (perm[i], perm[j])).collect();
        build_csr_with_features(
            &edges,
            self.edge_feats.as_ref(),
            self.num_nodes,
            BuildOptions::default(),
        )
    }

    pub fn with_edge_values(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.num_edges() {
            return input_err("edge_values length differs from num_edges");
        }
        self.edge_values = Some(values);
        Ok(self)
    }

    /// Dense `num_nodes x num_nodes` matrix of the stored weights (1 when the
    /// graph carries no edge values).
    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.num_nodes, self.num_nodes);
        for (e, (i, j)) in self.edges().enumerate() {
            m[(i, j)] = self.edge_values.as_ref().map_or(1.0, |v| v[e]);
        }
        m
    }
}

/// Builds a CSR graph from an edge list.
pub fn build_csr(
    edges: &[(usize, usize)],
    num_nodes: usize,
    opts: BuildOptions,
) -> Result<CsrGraph> {
    build_csr_with_features(edges, None, num_nodes, opts)
}

/// Like [`build_csr`], carrying one feature row per input edge. Reverse arcs
/// added by symmetrization copy the feature row of their source edge; added
/// self-loops get a zero feature row.
pub fn build_csr_with_features(
    edges: &[(usize, usize)],
    edge_feats: Option<&DenseMatrix>,
    num_nodes: usize,
    opts: BuildOptions,
) -> Result<CsrGraph> {
    if let Some(f) = edge_feats {
        if f.rows() != edges.len() {
            return input_err(format!(
                "{} edge feature rows for {} edges",
                f.rows(),
                edges.len()
            ));
        }
    }
    // (src, dst, index of the feature row, if any)
    let mut arcs: Vec<(usize, usize, Option<usize>)> = Vec::with_capacity(edges.len() * 2);
    for (k, &(s, d)) in edges.iter().enumerate() {
        if s >= num_nodes || d >= num_nodes {
            return input_err(format!(
                "edge ({s}, {d}) out of range for {num_nodes} nodes"
            ));
        }
        arcs.push((s, d, Some(k)));
        if opts.symmetrize && s != d {
            arcs.push((d, s, Some(k)));
        }
    }
    arcs.sort_by_key(|&(s, d, _)| (s, d));

    let mut kept: Vec<(usize, usize, Option<usize>)> = Vec::with_capacity(arcs.len() + num_nodes);
    for arc in arcs {
        if let Some(last) = kept.last() {
            if (last.0, last.1) == (arc.0, arc.1) {
                if opts.dedup {
                    continue;
                }
                return Err(Error::DuplicateEdge(arc.0, arc.1));
            }
        }
        kept.push(arc);
    }

    if opts.add_self_loops {
        let mut has_loop = vec![false; num_nodes];
        for &(s, d, _) in &kept {
            if s == d {
                if !opts.dedup {
                    return Err(Error::DuplicateSelfLoop(s));
                }
                has_loop[s] = true;
            }
        }
        kept.extend(
            (0..num_nodes)
                .filter(|&i| !has_loop[i])
                .map(|i| (i, i, None)),
        );
        kept.sort_by_key(|&(s, d, _)| (s, d));
    }

    let mut row_ptr = vec![0usize; num_nodes + 1];
    for &(s, _, _) in &kept {
        row_ptr[s + 1] += 1;
    }
    for i in 0..num_nodes {
        row_ptr[i + 1] += row_ptr[i];
    }
    let col_idx: Vec<usize> = kept.iter().map(|&(_, d, _)| d).collect();
    let feats = edge_feats.map(|f| {
        let mut out = DenseMatrix::zeros(kept.len(), f.cols());
        for (e, &(_, _, src)) in kept.iter().enumerate() {
            if let Some(k) = src {
                out.row_mut(e).copy_from_slice(f.row(k));
            }
        }
        out
    });
    CsrGraph::from_parts(num_nodes, row_ptr, col_idx, None, feats)
}

/// Copy of `g` with exactly one self-loop per node; added loops get zero
/// edge-feature rows. Edge values are dropped.
pub fn with_self_loops(g: &CsrGraph) -> Result<CsrGraph> {
    let edges: Vec<(usize, usize)> = g.edges().collect();
    let opts = BuildOptions {
        symmetrize: false,
        dedup: true,
        add_self_loops: true,
    };
    build_csr_with_features(&edges, g.edge_feats(), g.num_nodes(), opts)
}

/// Out-degree (row length) of every node.
pub fn degrees(g: &CsrGraph) -> Vec<usize> {
    (0..g.num_nodes())
        .map(|i| g.row_ptr[i + 1] - g.row_ptr[i])
        .collect()
}

/// A sparse operator sharing the topology of a [`CsrGraph`], with one value
/// per stored edge.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    structure: CsrGraph,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_parts(structure: CsrGraph, values: Vec<f64>) -> Result<Self> {
        if values.len() != structure.num_edges() {
            return input_err("one value per stored edge required");
        }
        Ok(Self { structure, values })
    }

    pub fn identity(n: usize) -> Self {
        let g = build_csr(
            &[],
            n,
            BuildOptions {
                add_self_loops: true,
                ..Default::default()
            },
        )
        .expect("identity graph is valid");
        Self {
            structure: g,
            values: vec![1.0; n],
        }
    }

    pub fn structure(&self) -> &CsrGraph {
        &self.structure
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_nodes(&self) -> usize {
        self.structure.num_nodes()
    }

    pub fn value_at(&self, i: usize, j: usize) -> f64 {
        self.structure
            .edge_index(i, j)
            .map_or(0.0, |e| self.values[e])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.num_nodes(), self.num_nodes());
        for (e, (i, j)) in self.structure.edges().enumerate() {
            m[(i, j)] = self.values[e];
        }
        m
    }
}

/// `D^{-1/2} A D^{-1/2}`, or with `renormalize` the self-looped
/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃ = D + I`.
///
/// Isolated nodes without renormalization keep an all-zero row.
pub fn sym_norm_adj(g: &CsrGraph, renormalize: bool) -> Result<NormalizedAdjacency> {
    if !g.is_symmetric() {
        return input_err("symmetric normalization requires a symmetric graph");
    }
    let n = g.num_nodes();
    let weight = |e: usize| g.edge_values().map_or(1.0, |v| v[e]);

    let (structure, weights) = if renormalize {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(g.num_edges() + n);
        let mut weights = Vec::with_capacity(g.num_edges() + n);
        row_ptr.push(0);
        for i in 0..n {
            let mut placed = false;
            for e in g.row_range(i) {
                let j = g.col_idx[e];
                if !placed && j >= i {
                    if j == i {
                        // existing self-loop: Ã = A + I adds one to it
                        col_idx.push(i);
                        weights.push(weight(e) + 1.0);
                        placed = true;
                        continue;
                    }
                    col_idx.push(i);
                    weights.push(1.0);
                    placed = true;
                }
                col_idx.push(j);
                weights.push(weight(e));
            }
            if !placed {
                col_idx.push(i);
                weights.push(1.0);
            }
            row_ptr.push(col_idx.len());
        }
        (
            CsrGraph::from_parts(n, row_ptr, col_idx, None, None)?,
            weights,
        )
    } else {
        let structure = CsrGraph {
            edge_values: None,
            edge_feats: None,
            ..g.clone()
        };
        (
            structure,
            (0..g.num_edges()).map(weight).collect::<Vec<_>>(),
        )
    };

    let deg: Vec<f64> = (0..n)
        .map(|i| structure.row_range(i).map(|e| weights[e]).sum::<f64>())
        .collect();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut values = Vec::with_capacity(weights.len());
    for i in 0..n {
        for e in structure.row_range(i) {
            let j = structure.col_idx[e];
            values.push(weights[e] * inv_sqrt[i] * inv_sqrt[j]);
        }
    }
    Ok(NormalizedAdjacency { structure, values })
}

/// `out[i] = Σ_{e ∈ row i} values[e] · x[col(e)]` over an arbitrary CSR
/// topology. Rows are reduced in storage order, so results are bit-stable.
pub fn spmm_with(structure: &CsrGraph, values: &[f64], x: &DenseMatrix) -> Result<DenseMatrix> {
    if structure.num_nodes() != x.rows() {
        return input_err(format!(
            "spmm: operator over {} nodes applied to {} rows",
            structure.num_nodes(),
            x.rows()
        ));
    }
    debug_assert_eq!(values.len(), structure.num_edges());
    let f = x.cols();
    let mut out = DenseMatrix::zeros(x.rows(), f);
    for i in 0..structure.num_nodes() {
        let out_row = out.row_mut(i);
        for e in structure.row_range(i) {
            let v = values[e];
            for (o, &xv) in out_row.iter_mut().zip(x.row(structure.col_idx[e])) {
                *o += v * xv;
            }
        }
    }
    Ok(out)
}

/// Transposed product `out[col(e)] += values[e] · x[row(e)]`, the backward of
/// [`spmm_with`].
pub fn spmm_transpose_with(
    structure: &CsrGraph,
    values: &[f64],
    x: &DenseMatrix,
) -> Result<DenseMatrix> {
    if structure.num_nodes() != x.rows() {
        return input_err(format!(
            "spmm_transpose: operator over {} nodes applied to {} rows",
            structure.num_nodes(),
            x.rows()
        ));
    }
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for i in 0..structure.num_nodes() {
        let x_row = x.row(i);
        for e in structure.row_range(i) {
            let v = values[e];
            for (o, &xv) in out.row_mut(structure.col_idx[e]).iter_mut().zip(x_row) {
                *o += v * xv;
            }
        }
    }
    Ok(out)
}

pub fn spmm(adj: &NormalizedAdjacency, x: &DenseMatrix) -> Result<DenseMatrix> {
    spmm_with(&adj.structure, &adj.values, x)
}

pub fn spmm_transpose(adj: &NormalizedAdjacency, x: &DenseMatrix) -> Result<DenseMatrix> {
    spmm_transpose_with(&adj.structure, &adj.values, x)
}

fn parse_line_fields(line: &str) -> Option<impl Iterator<Item = &str>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return None;
    }
    Some(trimmed.split('\t').map(str::trim))
}

/// Reads a `src<TAB>dst` edge list. Lines starting with `#` are ignored.
pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Load {
        path: path.to_owned(),
        reason: e.to_string(),
    })?;
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let Some(mut fields) = parse_line_fields(&line) else {
            continue;
        };
        let mut next = || -> Result<usize> {
            let field = fields.next().unwrap_or("");
            field.parse().map_err(|_| Error::Load {
                path: path.to_owned(),
                reason: format!("line {}: bad node index {field:?}", lineno + 1),
            })
        };
        let (s, d) = (next()?, next()?);
        edges.push((s, d));
    }
    Ok(edges)
}

/// Reads tab-separated edge features, one line per edge of the matching edge
/// list (comment lines skipped the same way).
pub fn read_edge_features(path: &Path) -> Result<DenseMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::Load {
        path: path.to_owned(),
        reason: e.to_string(),
    })?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let Some(fields) = parse_line_fields(&line) else {
            continue;
        };
        let row = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Load {
                path: path.to_owned(),
                reason: format!("line {}: {e}", lineno + 1),
            })?;
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows).map_err(|e| Error::Load {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

pub fn write_edge_list(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for &(s, d) in edges {
        writeln!(out, "{s}\t{d}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_edge_features(path: &Path, feats: &DenseMatrix) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in 0..feats.rows() {
        let line: Vec<String> = feats.row(r).iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join("\t"))?;
    }
    out.flush()?;
    Ok(())
}
