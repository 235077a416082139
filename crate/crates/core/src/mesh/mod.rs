//! Triangle meshes, their connectivity graphs, and graph Laplacians.

mod generators;
mod laplacian;
mod obj;

pub use generators::{icosphere, plate};
pub use laplacian::{
    estimate_lambda_max, estimate_lambda_max_with, normalized_laplacian, scaled_laplacian,
    PowerIteration,
};
pub use obj::{load_mesh, parse_obj, save_mesh};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub type Point = [f64; 3];

/// Node positions and triangle faces.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(nodes: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Argument("mesh needs at least one node".into()));
        }
        let n = nodes.len();
        for (i, p) in nodes.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("node {i}")));
            }
        }
        for f in &faces {
            for &v in f {
                if v >= n {
                    return Err(Error::IndexOutOfRange { index: v, size: n });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Argument(format!("degenerate face {f:?}")));
            }
        }
        Ok(Self { nodes, faces })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Sorted, deduplicated undirected edges `(a, b)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

/// Undirected graph given by a symmetric adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: CsrMatrix,
}

impl Graph {
    /// Unweighted graph from an edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::from_weighted_edges(n, edges.iter().map(|&(a, b)| (a, b, 1.0)))
    }

    /// Graph with user-supplied positive edge weights.
    pub fn from_weighted_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut triplets = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (a, b, w) in edges {
            if a == b {
                return Err(Error::Argument(format!("self loop at node {a}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Argument(format!("edge ({a}, {b}) weight {w} must be positive")));
            }
            if seen.insert((a.min(b), a.max(b))) {
                triplets.push((a, b, w));
                triplets.push((b, a, w));
            }
        }
        Ok(Self {
            adjacency: CsrMatrix::from_triplets(n, n, triplets)?,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.row_sums()
    }
}

/// Adjacency of the mesh: nodes are connected when they share a face edge.
pub fn build_graph(mesh: &Mesh) -> Graph {
    Graph::from_edges(mesh.n_nodes(), &mesh.edges()).expect("mesh edges are valid")
}
