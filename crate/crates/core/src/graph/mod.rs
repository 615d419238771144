//! Knowledge graphs: loading, validation, link splits and propagation matrices.

mod laplacian;
mod split;
pub mod synthetic;

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{check_node, Error, Result};

pub use laplacian::{renormalized_laplacian, Operator, SparseMatrix};
pub use split::{split_links, LinkSplit};

/// Canonical undirected edge, smaller endpoint first.
pub type Edge = (usize, usize);

#[inline]
pub fn canonical(u: usize, v: usize) -> Edge {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Undirected simple graph over densely indexed semantic terms.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeGraph {
    node_count: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
    labels: Option<Vec<String>>,
}

impl KnowledgeGraph {
    /// Builds a graph from arbitrary-order edges. Duplicates (in either
    /// orientation) collapse; self-loops and out-of-range endpoints are errors.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut canon = Vec::new();
        for (u, v) in edges {
            check_node(u, node_count)?;
            check_node(v, node_count)?;
            if u == v {
                return Err(Error::InvalidArgument(format!("self-loop on node {u}")));
            }
            canon.push(canonical(u, v));
        }
        canon.sort_unstable();
        canon.dedup();
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in &canon {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        adjacency.iter_mut().for_each(|a| a.sort_unstable());
        Ok(KnowledgeGraph { node_count, edges: canon, adjacency, labels: None })
    }

    /// Attaches external identifiers, one per node index.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.node_count {
            return Err(Error::Dimension(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.node_count
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical order (`u < v`, sorted).
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.node_count && v < self.node_count && self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// External identifier of a node; the index itself when unlabeled.
    pub fn label(&self, u: usize) -> String {
        match &self.labels {
            Some(l) => l[u].clone(),
            None => u.to_string(),
        }
    }

    /// Index lookup by external identifier.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        match &self.labels {
            Some(l) => l.iter().position(|x| x == label),
            None => label.parse().ok().filter(|&i: &usize| i < self.node_count),
        }
    }

    /// Label-to-index map, built on demand.
    pub fn label_map(&self) -> HashMap<String, usize> {
        (0..self.node_count).map(|i| (self.label(i), i)).collect()
    }

    /// Nodes reachable in at most `hops` steps, excluding `u` itself, ascending.
    pub fn k_hop(&self, u: usize, hops: usize) -> Vec<usize> {
        let mut seen = vec![false; self.node_count];
        seen[u] = true;
        let mut frontier = vec![u];
        let mut out = Vec::new();
        for _ in 0..hops {
            let mut next = Vec::new();
            for &x in &frontier {
                for &y in &self.adjacency[x] {
                    if !seen[y] {
                        seen[y] = true;
                        next.push(y);
                        out.push(y);
                    }
                }
            }
            frontier = next;
        }
        out.sort_unstable();
        out
    }

    /// Canonical export: one `label<TAB>label` line per edge in canonical order.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# nodes {} edges {}", self.node_count, self.edges.len())?;
        for &(u, v) in &self.edges {
            writeln!(out, "{}\t{}", self.label(u), self.label(v))?;
        }
        Ok(())
    }
}

/// Field separators accepted by [`load_edge_list`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EdgeListDialect {
    /// SNAP style: `#` comments, whitespace (space or tab) separated.
    #[default]
    Whitespace,
    /// Comma separated; `#` comments.
    Csv,
}

/// Counters reported by [`load_edge_list`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub lines: usize,
    pub self_loops_dropped: usize,
    pub duplicates_collapsed: usize,
}

/// Reads an edge list, densely re-indexing external ids from 0 in order of
/// first appearance.
pub fn load_edge_list<R: BufRead>(
    source: R,
    dialect: EdgeListDialect,
) -> Result<(KnowledgeGraph, LoadStats)> {
    let mut stats = LoadStats::default();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut raw = Vec::new();

    let mut intern = |id: &str, labels: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(id) {
            return i;
        }
        let i = labels.len();
        index.insert(id.to_string(), i);
        labels.push(id.to_string());
        i
    };

    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        stats.lines += 1;
        let fields: Vec<&str> = match dialect {
            EdgeListDialect::Whitespace => trimmed.split_whitespace().collect(),
            EdgeListDialect::Csv => trimmed.split(',').map(str::trim).collect(),
        };
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected two node ids, found {:?}", trimmed),
            });
        }
        let u = intern(fields[0], &mut labels);
        let v = intern(fields[1], &mut labels);
        if u == v {
            stats.self_loops_dropped += 1;
            continue;
        }
        raw.push(canonical(u, v));
    }
    if stats.self_loops_dropped > 0 {
        log::warn!("dropped {} self-loop line(s)", stats.self_loops_dropped);
    }
    let before = raw.len();
    let graph = KnowledgeGraph::from_edges(labels.len(), raw)?.with_labels(labels)?;
    stats.duplicates_collapsed = before - graph.edge_count();
    Ok((graph, stats))
}
