//! Seeded synthetic graphs with collaboration-network structure.
//!
//! Nodes are grouped into communities; edges come from small "teams" whose
//! members are pairwise connected, mostly inside one community with occasional
//! outside members. This yields the high clustering and heavy community
//! structure typical of co-authorship graphs.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{canonical, Edge, KnowledgeGraph};
use crate::error::{Error, Result};
use crate::numerics::RngState;

/// Probability that a team member is drawn from outside the team's community.
const BRIDGE_PROB: f64 = 0.05;

/// Collaboration-style graph with exactly `node_count` nodes (none isolated)
/// and exactly `edge_count` edges.
pub fn collaboration_graph(node_count: usize, edge_count: usize, seed: u64) -> Result<KnowledgeGraph> {
    if node_count < 2 {
        return Err(Error::InvalidArgument("need at least two nodes".into()));
    }
    let max_edges = node_count * (node_count - 1) / 2;
    if edge_count > max_edges / 2 {
        return Err(Error::InvalidArgument(format!(
            "{edge_count} edges is too dense for {node_count} nodes"
        )));
    }
    let mut rng = RngState::new(seed);

    let mut order: Vec<usize> = (0..node_count).collect();
    order.shuffle(&mut rng);
    let mut communities: Vec<Vec<usize>> = Vec::new();
    let mut rest = &order[..];
    while !rest.is_empty() {
        let size = rng.random_range(8..=40).min(rest.len());
        let size = if rest.len() - size < 4 { rest.len() } else { size };
        communities.push(rest[..size].to_vec());
        rest = &rest[size..];
    }

    let mut set: HashSet<Edge> = HashSet::with_capacity(edge_count);
    let mut edges: Vec<Edge> = Vec::with_capacity(edge_count);
    let add = |u: usize, v: usize, set: &mut HashSet<Edge>, edges: &mut Vec<Edge>| {
        if u != v && edges.len() < edge_count && set.insert(canonical(u, v)) {
            edges.push(canonical(u, v));
        }
    };

    // every node joins at least one pair inside its community
    for c in &communities {
        let mut members = c.clone();
        members.shuffle(&mut rng);
        for chunk in members.chunks(2) {
            let v = if chunk.len() == 2 { chunk[1] } else { members[0] };
            add(chunk[0], v, &mut set, &mut edges);
        }
    }
    if edges.len() >= edge_count && set.len() > edge_count {
        return Err(Error::InvalidArgument(format!("{edge_count} edges cannot cover {node_count} nodes")));
    }

    let weights: Vec<usize> = communities.iter().map(Vec::len).collect();
    let total: usize = weights.iter().sum();
    let mut stalls = 0usize;
    while edges.len() < edge_count {
        let mut pick = rng.random_range(0..total);
        let ci = weights.iter().position(|&w| {
            if pick < w {
                true
            } else {
                pick -= w;
                false
            }
        });
        let c = &communities[ci.unwrap_or(0)];
        let r: f64 = rng.random();
        let size = match r {
            r if r < 0.5 => 2,
            r if r < 0.8 => 3,
            r if r < 0.95 => 4,
            _ => 5,
        }
        .min(c.len());
        let mut team: Vec<usize> = c.choose_multiple(&mut rng, size).copied().collect();
        for m in team.iter_mut() {
            if rng.random::<f64>() < BRIDGE_PROB {
                *m = rng.random_range(0..node_count);
            }
        }
        let before = edges.len();
        for i in 0..team.len() {
            for j in i + 1..team.len() {
                add(team[i], team[j], &mut set, &mut edges);
            }
        }
        if edges.len() == before {
            stalls += 1;
            if stalls > 1_000_000 {
                return Err(Error::InvalidArgument("edge target unreachable".into()));
            }
        }
    }
    KnowledgeGraph::from_edges(node_count, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_counts_and_no_isolated_nodes() {
        let g = collaboration_graph(300, 800, 5).unwrap();
        assert_eq!(g.node_count(), 300);
        assert_eq!(g.edge_count(), 800);
        assert!((0..300).all(|u| g.degree(u) > 0));
    }

    #[test]
    fn seeded() {
        assert_eq!(collaboration_graph(50, 120, 1).unwrap(), collaboration_graph(50, 120, 1).unwrap());
    }

    #[test]
    fn clustered() {
        let g = collaboration_graph(500, 1400, 2).unwrap();
        let mut closed = 0usize;
        let mut wedges = 0usize;
        for u in 0..g.node_count() {
            let nb = g.neighbors(u);
            for i in 0..nb.len() {
                for j in i + 1..nb.len() {
                    wedges += 1;
                    if g.has_edge(nb[i], nb[j]) {
                        closed += 1;
                    }
                }
            }
        }
        assert!(closed as f64 / wedges as f64 > 0.2);
    }
}
