//! Mesh coarsening by quadric-error simplification, the selection and
//! upsampling operators between levels, and multi-level hierarchies.

mod hierarchy;
mod quadric;
mod simplify;
mod upsample;

pub use hierarchy::{downsample_states, Hierarchy, HierarchyOptions, Level, Manifest, Transition};
pub use quadric::{compute_quadrics, face_plane, Quadric};
pub use simplify::{simplify, SimplifyOptions, Simplified};
pub use upsample::{build_upsampler, closest_point_barycentric};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Binary row-selection operator `D` (`n_down x n_fine`), stored as the
/// ascending list of kept fine indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMatrix {
    kept: Vec<usize>,
    n_fine: usize,
}

impl SelectionMatrix {
    pub fn new(kept: Vec<usize>, n_fine: usize) -> Result<Self> {
        let mut seen = vec![false; n_fine];
        for &p in &kept {
            if p >= n_fine {
                return Err(Error::IndexOutOfRange {
                    index: p,
                    size: n_fine,
                });
            }
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::Argument(format!("node {p} selected twice")));
            }
        }
        Ok(Self { kept, n_fine })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            kept: (0..n).collect(),
            n_fine: n,
        }
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    pub fn n_coarse(&self) -> usize {
        self.kept.len()
    }

    /// `self` applied after `first`: selects from the nodes `first` kept.
    pub fn compose(&self, first: &SelectionMatrix) -> Result<Self> {
        if self.n_fine != first.n_coarse() {
            return Err(Error::Shape(format!(
                "cannot compose selections {}x{} after {}x{}",
                self.n_coarse(),
                self.n_fine,
                first.n_coarse(),
                first.n_fine
            )));
        }
        Self::new(self.kept.iter().map(|&q| first.kept[q]).collect(), first.n_fine)
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(
            self.kept.len(),
            self.n_fine,
            self.kept.iter().enumerate().map(|(r, &c)| (r, c, 1.0)),
        )
        .expect("selection indices in range")
    }

    /// Recovers a selection from its matrix form, checking it is one.
    pub fn from_csr(m: &CsrMatrix) -> Result<Self> {
        let mut kept = Vec::with_capacity(m.rows());
        for r in 0..m.rows() {
            match m.row(r) {
                (&[c], &[v]) if v == 1.0 => kept.push(c),
                _ => return Err(Error::Format(format!("row {r} of selection is not one-hot"))),
            }
        }
        Self::new(kept, m.cols())
    }
}

/// Sparse lifting operator `U` (`n_fine x n_coarse`) whose rows are convex
/// combinations of at most three coarse nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsamplingMatrix(CsrMatrix);

impl UpsamplingMatrix {
    /// Wraps a matrix, checking rows sum to one and entries are finite.
    pub fn new(m: CsrMatrix) -> Result<Self> {
        for (r, s) in m.row_sums().into_iter().enumerate() {
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Argument(format!("upsampling row {r} sums to {s}")));
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CsrMatrix {
        self.0
    }
}
