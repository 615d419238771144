use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{canonical, Edge, KnowledgeGraph};
use crate::error::{Error, Result};
use crate::numerics::RngState;

/// Partition of a graph's edges into evaluator-visible expert samples and a
/// held-out test set, plus an equal number of sampled non-edges.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSplit {
    pub expert_edges: Vec<Edge>,
    pub test_positives: Vec<Edge>,
    pub test_negatives: Vec<Edge>,
    pub expert_fraction: f64,
}

/// Randomly selects `round(expert_fraction·|E|)` expert edges; the remaining
/// edges become test positives, matched by as many non-edges drawn uniformly
/// without replacement.
pub fn split_links(g: &KnowledgeGraph, expert_fraction: f64, seed: u64) -> Result<LinkSplit> {
    if !(expert_fraction > 0.0 && expert_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "expert fraction {expert_fraction} outside (0, 1)"
        )));
    }
    let mut rng = RngState::new(seed);
    let mut edges = g.edges().to_vec();
    edges.shuffle(&mut rng);
    let k = (expert_fraction * edges.len() as f64).round() as usize;
    let test_positives = edges.split_off(k);
    let mut expert_edges = edges;
    expert_edges.sort_unstable();

    let n = g.node_count();
    let needed = test_positives.len();
    let available = n * n.saturating_sub(1) / 2 - g.edge_count();
    if needed > available {
        return Err(Error::TooDense { needed, available });
    }
    let mut test_negatives = if needed * 2 <= available {
        let mut chosen = HashSet::with_capacity(needed);
        let mut out = Vec::with_capacity(needed);
        while out.len() < needed {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v || g.has_edge(u, v) {
                continue;
            }
            let e = canonical(u, v);
            if chosen.insert(e) {
                out.push(e);
            }
        }
        out
    } else {
        let mut all: Vec<Edge> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !g.has_edge(u, v))
            .collect();
        let (picked, _) = all.partial_shuffle(&mut rng, needed);
        picked.to_vec()
    };
    test_negatives.sort_unstable();
    let mut test_positives = test_positives;
    test_positives.sort_unstable();

    Ok(LinkSplit { expert_edges, test_positives, test_negatives, expert_fraction })
}

impl LinkSplit {
    /// Expert neighbors of every node (both orientations), ascending.
    pub fn expert_neighbors(&self, node_count: usize) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); node_count];
        for &(u, v) in &self.expert_edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj.iter_mut().for_each(|a| a.sort_unstable());
        adj
    }

    /// Checks the split's invariants against the graph it came from.
    pub fn validate(&self, g: &KnowledgeGraph) -> Result<()> {
        let experts: HashSet<Edge> = self.expert_edges.iter().copied().collect();
        for &(u, v) in self.expert_edges.iter().chain(&self.test_positives) {
            if !g.has_edge(u, v) {
                return Err(Error::InvalidArgument(format!("split edge ({u},{v}) not in graph")));
            }
        }
        if self.test_positives.iter().any(|e| experts.contains(e)) {
            return Err(Error::InvalidArgument("expert and test positives overlap".into()));
        }
        if self.expert_edges.len() + self.test_positives.len() != g.edge_count() {
            return Err(Error::InvalidArgument("split does not cover the edge set".into()));
        }
        if let Some(&(u, v)) = self.test_negatives.iter().find(|&&(u, v)| g.has_edge(u, v)) {
            return Err(Error::InvalidArgument(format!("negative ({u},{v}) is an edge")));
        }
        if self.test_negatives.len() != self.test_positives.len() {
            return Err(Error::InvalidArgument("unbalanced test set".into()));
        }
        Ok(())
    }

    /// Tab-separated export: `kind<TAB>u<TAB>v` with kind in
    /// `expert | test_pos | test_neg`, preceded by a fraction header.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# expert_fraction {}", self.expert_fraction)?;
        for (kind, list) in [
            ("expert", &self.expert_edges),
            ("test_pos", &self.test_positives),
            ("test_neg", &self.test_negatives),
        ] {
            for &(u, v) in list {
                writeln!(out, "{kind}\t{u}\t{v}")?;
            }
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(source: R) -> Result<Self> {
        let mut split = LinkSplit {
            expert_edges: Vec::new(),
            test_positives: Vec::new(),
            test_negatives: Vec::new(),
            expert_fraction: f64::NAN,
        };
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
            if let Some(rest) = line.strip_prefix("# expert_fraction ") {
                split.expert_fraction =
                    rest.trim().parse().map_err(|e| parse_err(format!("fraction: {e}")))?;
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, got {}", f.len())));
            }
            let u: usize = f[1].parse().map_err(|e| parse_err(format!("{e}")))?;
            let v: usize = f[2].parse().map_err(|e| parse_err(format!("{e}")))?;
            let list = match f[0] {
                "expert" => &mut split.expert_edges,
                "test_pos" => &mut split.test_positives,
                "test_neg" => &mut split.test_negatives,
                other => return Err(parse_err(format!("unknown kind {other:?}"))),
            };
            list.push(canonical(u, v));
        }
        Ok(split)
    }
}
