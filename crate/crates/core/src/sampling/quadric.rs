use std::ops::{Add, AddAssign};

use crate::mesh::{Mesh, Point};

/// Symmetric 4x4 matrix whose quadratic form `[p, 1]^T Q [p, 1]` is the sum
/// of squared distances from `p` to a set of planes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quadric(pub [[f64; 4]; 4]);

impl Quadric {
    /// Quadric of the plane `a x + b y + c z + d = 0` with unit normal.
    pub fn from_plane(plane: [f64; 4]) -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = plane[i] * plane[j];
            }
        }
        Self(m)
    }

    pub fn evaluate(&self, p: Point) -> f64 {
        let v = [p[0], p[1], p[2], 1.0];
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                s += v[i] * self.0[i][j] * v[j];
            }
        }
        s
    }
}

impl Add for Quadric {
    type Output = Quadric;

    fn add(mut self, rhs: Quadric) -> Quadric {
        self += rhs;
        self
    }
}

impl AddAssign for Quadric {
    fn add_assign(&mut self, rhs: Quadric) {
        for i in 0..4 {
            for j in 0..4 {
                self.0[i][j] += rhs.0[i][j];
            }
        }
    }
}

/// Unit-normal plane through a triangle, or `None` when it has zero area.
pub fn face_plane(a: Point, b: Point, c: Point) -> Option<[f64; 4]> {
    let u = sub(b, a);
    let v = sub(c, a);
    let n = cross(u, v);
    let len = dot(n, n).sqrt();
    let scale = dot(u, u).max(dot(v, v));
    if len == 0.0 || len <= 1e-14 * scale {
        return None;
    }
    let n = [n[0] / len, n[1] / len, n[2] / len];
    Some([n[0], n[1], n[2], -dot(n, a)])
}

/// Per-node quadrics summed over incident faces, plus the number of
/// zero-area faces that were skipped.
pub fn compute_quadrics(mesh: &Mesh) -> (Vec<Quadric>, usize) {
    let mut q = vec![Quadric::default(); mesh.n_nodes()];
    let mut degenerate = 0;
    let nodes = mesh.nodes();
    for f in mesh.faces() {
        match face_plane(nodes[f[0]], nodes[f[1]], nodes[f[2]]) {
            Some(plane) => {
                let fq = Quadric::from_plane(plane);
                for &v in f {
                    q[v] += fq;
                }
            }
            None => degenerate += 1,
        }
    }
    (q, degenerate)
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
