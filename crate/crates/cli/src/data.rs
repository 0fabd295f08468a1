//! Edge-list and vertex-label files.
//!
//! Edge lists hold one `u v` pair per line (whitespace separated); blank
//! lines and lines starting with `#` or `%` are skipped. A label file next
//! to `graph.edges` is looked up as `graph.labels`, `graph.node_labels` or
//! `graph.vertex_labels`. Its lines are either `label` (vertex order) or
//! `vertex label`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use sigpost::model::ObservedMatrix;

#[derive(Debug, Clone)]
pub struct LabeledGraph {
    pub adjacency: ObservedMatrix,
    pub labels: Option<Vec<String>>,
}

impl LabeledGraph {
    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn edge_count(&self) -> usize {
        let a = self.adjacency.matrix();
        let mut count = 0;
        for i in 0..a.nrows() {
            for j in i..a.ncols() {
                count += (a[(i, j)] != 0.0) as usize;
            }
        }
        count
    }

    /// Labels as dense class indices plus the sorted class names.
    pub fn label_indices(&self) -> Option<(Vec<usize>, Vec<String>)> {
        let labels = self.labels.as_ref()?;
        let names: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let idx = labels
            .iter()
            .map(|l| names.binary_search(l).expect("label present"))
            .collect();
        Some((idx, names))
    }
}

fn skip(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#') || t.starts_with('%')
}

fn parse_index(tok: &str, base: usize, line: usize) -> Result<usize> {
    let raw: usize = tok
        .parse()
        .map_err(|_| anyhow!("line {line}: `{tok}` is not a vertex index"))?;
    raw.checked_sub(base)
        .ok_or_else(|| anyhow!("line {line}: vertex {raw} is below the index base {base}"))
}

/// Symmetric 0/1 adjacency from an edge list. `n_hint` fixes the vertex
/// count; otherwise it is the largest index seen.
pub fn load_edge_list(path: &Path, n_hint: Option<usize>, index_base: usize) -> Result<LabeledGraph> {
    if index_base > 1 {
        bail!("index base must be 0 or 1, got {index_base}");
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut edges = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if skip(line) {
            continue;
        }
        let toks: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
        if toks.len() < 2 {
            bail!("line {}: expected two vertex indices", k + 1);
        }
        edges.push((parse_index(toks[0], index_base, k + 1)?, parse_index(toks[1], index_base, k + 1)?, k + 1));
    }
    let seen = edges.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0);
    let n = match n_hint {
        Some(n) => {
            if let Some(&(u, v, line)) = edges.iter().find(|&&(u, v, _)| u.max(v) >= n) {
                bail!(
                    "line {line}: vertex {} out of range for n = {n}",
                    u.max(v) + index_base
                );
            }
            n
        }
        None => seen,
    };
    if n == 0 {
        bail!("{} contains no edges", path.display());
    }
    let mut a = DMatrix::zeros(n, n);
    for (u, v, _) in edges {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    let labels = match label_path(path) {
        Some(lp) => Some(load_labels(&lp, n, index_base)?),
        None => None,
    };
    Ok(LabeledGraph {
        adjacency: ObservedMatrix::new(a)?,
        labels,
    })
}

fn label_path(edges: &Path) -> Option<PathBuf> {
    ["labels", "node_labels", "vertex_labels"]
        .iter()
        .map(|ext| edges.with_extension(ext))
        .find(|p| p.is_file())
}

pub fn load_labels(path: &Path, n: usize, index_base: usize) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut labels: Vec<Option<String>> = vec![None; n];
    let mut next = 0;
    for (k, line) in text.lines().enumerate() {
        if skip(line) {
            continue;
        }
        let toks: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
        let (vertex, label) = match toks.as_slice() {
            [label] => (next, *label),
            [vertex, label, ..] => (parse_index(vertex, index_base, k + 1)?, *label),
            [] => unreachable!(),
        };
        if vertex >= n {
            bail!("{} line {}: vertex out of range for n = {n}", path.display(), k + 1);
        }
        labels[vertex] = Some(label.to_string());
        next = vertex + 1;
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| anyhow!("{}: vertex {} has no label", path.display(), v + index_base)))
        .collect()
}

/// Writes `graph` as a 1-based edge list plus a `.labels` sibling.
pub fn write_edge_list(graph: &LabeledGraph, path: &Path) -> Result<()> {
    use std::fmt::Write;
    let a = graph.adjacency.matrix();
    let mut out = String::new();
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            if a[(i, j)] != 0.0 {
                writeln!(out, "{} {}", i + 1, j + 1)?;
            }
        }
    }
    std::fs::write(path, out)?;
    if let Some(labels) = &graph.labels {
        std::fs::write(path.with_extension("labels"), labels.join("\n") + "\n")?;
    }
    Ok(())
}
