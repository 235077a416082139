use super::Graph;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// `L = I - D^{-1/2} A D^{-1/2}`. Isolated nodes get `L(p, p) = 1`.
pub fn normalized_laplacian(graph: &Graph) -> CsrMatrix {
    let n = graph.n_nodes();
    let inv_sqrt: Vec<f64> = graph
        .degrees()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let a = graph.adjacency();
    let diag = (0..n).map(|p| (p, p, 1.0));
    // s_p * s_q is formed first so the (p, q) and (q, p) entries are bitwise equal
    let off = a
        .triplets()
        .map(|(p, q, w)| (p, q, -w * (inv_sqrt[p] * inv_sqrt[q])));
    CsrMatrix::from_triplets(n, n, diag.chain(off)).expect("laplacian entries in range")
}

/// Iteration settings for [`estimate_lambda_max_with`].
#[derive(Debug, Clone, Copy)]
pub struct PowerIteration {
    pub max_iterations: usize,
    /// Stop once the residual bound of the top Ritz value is below this,
    /// relative to the value.
    pub tolerance: f64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            tolerance: 1e-10,
        }
    }
}

pub fn estimate_lambda_max(l: &CsrMatrix) -> Result<f64> {
    estimate_lambda_max_with(l, PowerIteration::default())
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
///
/// Power iteration accelerated by Lanczos: the Krylov space spanned by the
/// power iterates is kept (fully reorthogonalized) and the top Ritz value
/// of its projection is the estimate. Plain power iteration stalls when
/// the two largest eigenvalues nearly coincide; the Ritz value does not.
/// Converged when `beta_k |s_k|`, a bound on the distance from the Ritz
/// value to the spectrum, drops below `tolerance * value`, or when the
/// space becomes invariant.
///
/// The start vector is fixed (`1 + frac(0.618 * i)`, normalized). A constant
/// start vector is an exact eigenvector of the Laplacian of any regular graph
/// and would lock the iteration onto eigenvalue 0.
pub fn estimate_lambda_max_with(l: &CsrMatrix, cfg: PowerIteration) -> Result<f64> {
    let n = l.rows();
    if n != l.cols() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", n, l.cols())));
    }
    if l.nnz() == 0 || n == 0 {
        return Ok(0.0);
    }
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + (0.618_033_988_749_894_9 * i as f64).fract())
        .collect();
    normalize(&mut v);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut theta = 0.0;
    for k in 1..=cfg.max_iterations {
        let mut w = l.matvec(&v);
        let a = dot(&v, &w);
        basis.push(v);
        alpha.push(a);
        // twice is enough to keep the basis orthogonal to working precision
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dot(&w, &w).sqrt();
        // checking every step is cubic in k; past a few dozen steps check sparsely
        let exhausted = k == n || k == cfg.max_iterations || b == 0.0;
        if k <= 32 || k % 8 == 0 || exhausted {
            let (top, last) = top_ritz(&alpha, &beta);
            theta = top;
            let invariant = b <= 1e-14 * theta.abs().max(f64::MIN_POSITIVE);
            if invariant || k == n || b * last.abs() <= cfg.tolerance * theta.abs() {
                return Ok(theta);
            }
        }
        beta.push(b);
        v = w.into_iter().map(|x| x / b).collect();
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iterations,
        last: theta,
    })
}

/// Largest eigenvalue of the symmetric tridiagonal `(alpha, beta)` and the
/// last component of its unit eigenvector.
fn top_ritz(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let k = alpha.len();
    let t = nalgebra::DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = t.symmetric_eigen();
    let top = eig.eigenvalues.imax();
    (eig.eigenvalues[top], eig.eigenvectors[(k - 1, top)])
}

/// `L~ = 2 L / lambda_max - I`.
pub fn scaled_laplacian(l: &CsrMatrix, lambda_max: f64) -> Result<CsrMatrix> {
    if !(lambda_max > 0.0) {
        return Err(Error::Argument(format!("lambda_max must be positive, got {lambda_max}")));
    }
    l.add_scaled(2.0 / lambda_max, &CsrMatrix::identity(l.rows()), -1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigen;
    use crate::mesh::{build_graph, icosphere, plate, Graph};

    fn k3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn sorted_eigs(m: &CsrMatrix) -> Vec<f64> {
        let mut e = symmetric_eigen(&m.to_dense()).unwrap().values;
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn single_edge() {
        let l = normalized_laplacian(&Graph::from_edges(2, &[(0, 1)]).unwrap());
        assert_eq!(l.to_dense(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        assert!((estimate_lambda_max(&l).unwrap() - 2.0).abs() < 1e-6);
        let s = scaled_laplacian(&l, 2.0).unwrap();
        assert_eq!(s.to_dense(), vec![vec![0.0, -1.0], vec![-1.0, 0.0]]);
    }

    #[test]
    fn triangle_spectrum() {
        let l = normalized_laplacian(&k3());
        let e = sorted_eigs(&l);
        for (got, want) in e.iter().zip([0.0, 1.5, 1.5]) {
            assert!((got - want).abs() < 1e-12, "{e:?}");
        }
        assert!((estimate_lambda_max(&l).unwrap() - 1.5).abs() < 1e-6);
        let s = scaled_laplacian(&l, 1.5).unwrap();
        for (got, want) in sorted_eigs(&s).iter().zip([-1.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_node_convention() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let l = normalized_laplacian(&g);
        assert_eq!(l.get(3, 3), 1.0);
        assert!((0..3).all(|p| l.get(p, 3) == 0.0 && l.get(3, p) == 0.0));
    }

    #[test]
    fn zero_matrix_has_zero_lambda() {
        assert_eq!(estimate_lambda_max(&CsrMatrix::zeros(4, 4)).unwrap(), 0.0);
        let s = scaled_laplacian(&CsrMatrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(s.to_dense(), vec![vec![-1.0, 0.0], vec![0.0, -1.0]]);
    }

    #[test]
    fn nonpositive_lambda_rejected() {
        let l = normalized_laplacian(&k3());
        assert!(matches!(scaled_laplacian(&l, 0.0), Err(Error::Argument(_))));
        assert!(matches!(scaled_laplacian(&l, -1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        let l = normalized_laplacian(&build_graph(&plate(6, 5, 1.0)));
        let cfg = PowerIteration {
            max_iterations: 2,
            tolerance: 0.0,
        };
        match estimate_lambda_max_with(&l, cfg) {
            Err(Error::NonConvergence { iterations: 2, last }) => assert!(last > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mesh_laplacians_are_symmetric_and_bounded() {
        for mesh in [icosphere(1), icosphere(2), plate(7, 5, 1.0), plate(12, 9, 0.5)] {
            let l = normalized_laplacian(&build_graph(&mesh));
            assert!(l.is_symmetric());
            let lmax = estimate_lambda_max(&l).unwrap();
            let exact = *sorted_eigs(&l).last().unwrap();
            assert!((lmax - exact).abs() <= 1e-6 * exact, "{lmax} vs {exact}");
            let s = scaled_laplacian(&l, lmax).unwrap();
            let radius = sorted_eigs(&s).iter().fold(0.0f64, |m, e| m.max(e.abs()));
            assert!(radius <= 1.0 + 1e-6);
        }
    }
}
