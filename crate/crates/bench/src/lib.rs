//! Shared fixtures for the benchmarks.

use isac_core::graph::{split_links, synthetic, SparseMatrix};
use isac_core::{KnowledgeGraph, LinkSplit};

/// GrQc-sized collaboration graph (5242 nodes, 14496 edges), its
/// renormalized Laplacian and a 5% expert split.
pub fn grqc_like() -> (KnowledgeGraph, SparseMatrix, LinkSplit) {
    let g = synthetic::collaboration_graph(5242, 14496, 7).expect("valid sizes");
    let phi = SparseMatrix::renormalized_laplacian(&g);
    let split = split_links(&g, 0.05, 0).expect("valid fraction");
    (g, phi, split)
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_has_reference_size() {
        let (g, phi, split) = super::grqc_like();
        assert_eq!((g.node_count(), g.edge_count()), (5242, 14496));
        assert_eq!(phi.nnz(), 5242 + 2 * 14496);
        assert_eq!(split.expert_edges.len(), 725);
    }
}
