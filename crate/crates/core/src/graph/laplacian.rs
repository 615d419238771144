use super::KnowledgeGraph;
use crate::error::{Error, Result};
use crate::numerics::{axpy, Matrix};

/// Linear operator applied on the left of a node-indexed matrix (`Φ·M`).
pub trait Operator {
    fn dim(&self) -> usize;

    fn apply(&self, m: &Matrix) -> Result<Matrix>;

    /// `Φᵀ·M`; the renormalized Laplacian is symmetric, so the default
    /// delegates to [`Operator::apply`].
    fn apply_transpose(&self, m: &Matrix) -> Result<Matrix> {
        self.apply(m)
    }
}

impl Operator for Matrix {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, m: &Matrix) -> Result<Matrix> {
        self.matmul(m)
    }

    fn apply_transpose(&self, m: &Matrix) -> Result<Matrix> {
        self.t_matmul(m)
    }
}

/// Square matrix in compressed sparse row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// `D̃^{-1/2}(A + I)D̃^{-1/2}` for `g`, stored sparsely.
    pub fn renormalized_laplacian(g: &KnowledgeGraph) -> Self {
        let n = g.node_count();
        let inv_sqrt: Vec<f64> = (0..n).map(|u| 1.0 / ((g.degree(u) + 1) as f64).sqrt()).collect();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(n + 2 * g.edge_count());
        let mut values = Vec::with_capacity(n + 2 * g.edge_count());
        indptr.push(0);
        for u in 0..n {
            let mut self_done = false;
            for &v in g.neighbors(u) {
                if !self_done && v > u {
                    indices.push(u);
                    values.push(inv_sqrt[u] * inv_sqrt[u]);
                    self_done = true;
                }
                indices.push(v);
                values.push(inv_sqrt[u] * inv_sqrt[v]);
            }
            if !self_done {
                indices.push(u);
                values.push(inv_sqrt[u] * inv_sqrt[u]);
            }
            indptr.push(indices.len());
        }
        SparseMatrix { n, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                m.set(i, self.indices[k], self.values[k]);
            }
        }
        m
    }
}

impl Operator for SparseMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, m: &Matrix) -> Result<Matrix> {
        if m.rows() != self.n {
            return Err(Error::Dimension(format!(
                "operator of dim {} applied to {}x{}",
                self.n,
                m.rows(),
                m.cols()
            )));
        }
        let mut out = Matrix::zeros(self.n, m.cols());
        for i in 0..self.n {
            let dst = out.row_mut(i);
            for k in self.indptr[i]..self.indptr[i + 1] {
                axpy(self.values[k], m.row(self.indices[k]), dst);
            }
        }
        Ok(out)
    }
}

/// Dense `Φ = D̃^{-1/2} Ã D̃^{-1/2}` with `Ã = A + I` and `D̃_ii = Σ_j Ã_ij`.
pub fn renormalized_laplacian(g: &KnowledgeGraph) -> Matrix {
    SparseMatrix::renormalized_laplacian(g).to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge() {
        let g = KnowledgeGraph::from_edges(2, [(0, 1)]).unwrap();
        let phi = renormalized_laplacian(&g);
        assert!(phi.max_abs_diff(&Matrix::filled(2, 2, 0.5)).unwrap() < 1e-15);
    }

    #[test]
    fn isolated_node() {
        let g = KnowledgeGraph::from_edges(1, []).unwrap();
        assert_eq!(renormalized_laplacian(&g), Matrix::identity(1));
    }

    #[test]
    fn sparse_and_dense_products_agree() {
        let g = KnowledgeGraph::from_edges(5, [(0, 1), (1, 2), (2, 0), (3, 4), (1, 4)]).unwrap();
        let sp = SparseMatrix::renormalized_laplacian(&g);
        assert_eq!(sp.nnz(), 5 + 10);
        let dense = sp.to_dense();
        let m = Matrix::from_fn(5, 3, |i, j| (i as f64 - j as f64).sin());
        let a = sp.apply(&m).unwrap();
        let b = dense.apply(&m).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-15);
        assert!(sp.apply(&Matrix::zeros(4, 1)).is_err());
    }
}
