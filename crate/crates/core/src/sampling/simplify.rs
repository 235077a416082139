//! Quadric-error vertex-pair contraction restricted to node selection.
//!
//! A contraction `(p, q) -> q` never moves the survivor, so the coarse mesh
//! is a subset of the fine nodes and the result is a selection operator.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use super::quadric::{compute_quadrics, Quadric};
use super::SelectionMatrix;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplifyOptions {
    /// Node pairs closer than this are valid contraction pairs in addition to
    /// mesh edges. Zero means edges only.
    pub pair_distance: f64,
}

impl Default for SimplifyOptions {
    fn default() -> Self {
        Self { pair_distance: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Simplified {
    pub selection: SelectionMatrix,
    pub coarse: Mesh,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    length: f64,
    a: usize,
    b: usize,
    keep: usize,
    version_a: u32,
    version_b: u32,
}

impl Candidate {
    fn key(&self) -> (f64, f64, usize, usize) {
        (self.cost, self.length, self.a, self.b)
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // cost, then pair length, then node indices
    fn cmp(&self, other: &Self) -> Ordering {
        let (c0, l0, a0, b0) = self.key();
        let (c1, l1, a1, b1) = other.key();
        c0.total_cmp(&c1)
            .then(l0.total_cmp(&l1))
            .then(a0.cmp(&a1))
            .then(b0.cmp(&b1))
    }
}

struct State<'m> {
    positions: &'m [Point],
    quadrics: Vec<Quadric>,
    partners: Vec<BTreeSet<usize>>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    node_faces: Vec<Vec<usize>>,
    alive: Vec<bool>,
    version: Vec<u32>,
    heap: BinaryHeap<Reverse<Candidate>>,
}

impl State<'_> {
    fn candidate(&self, p: usize, q: usize) -> Candidate {
        let (a, b) = (p.min(q), p.max(q));
        let sum = self.quadrics[a] + self.quadrics[b];
        let cost_a = sum.evaluate(self.positions[a]);
        let cost_b = sum.evaluate(self.positions[b]);
        // keep the endpoint with the lower cost; ties keep the smaller index
        let (keep, cost) = if cost_b < cost_a { (b, cost_b) } else { (a, cost_a) };
        let d = super::quadric::sub(self.positions[a], self.positions[b]);
        Candidate {
            cost,
            length: super::quadric::dot(d, d).sqrt(),
            a,
            b,
            keep,
            version_a: self.version[a],
            version_b: self.version[b],
        }
    }

    fn push_pairs_of(&mut self, p: usize) {
        let partners: Vec<usize> = self.partners[p].iter().copied().collect();
        for q in partners {
            let c = self.candidate(p, q);
            self.heap.push(Reverse(c));
        }
    }

    fn is_current(&self, c: &Candidate) -> bool {
        self.alive[c.a]
            && self.alive[c.b]
            && self.version[c.a] == c.version_a
            && self.version[c.b] == c.version_b
    }

    /// Contracts `remove` into `keep`; returns the number of faces removed.
    fn contract(&mut self, remove: usize, keep: usize) -> usize {
        let qr = self.quadrics[remove];
        self.quadrics[keep] += qr;

        let moved: Vec<usize> = std::mem::take(&mut self.partners[remove]).into_iter().collect();
        for w in moved {
            self.partners[w].remove(&remove);
            if w != keep {
                self.partners[w].insert(keep);
                self.partners[keep].insert(w);
            }
        }
        self.partners[keep].remove(&remove);

        let mut killed = 0;
        for f in std::mem::take(&mut self.node_faces[remove]) {
            if !self.face_alive[f] {
                continue;
            }
            let face = &mut self.faces[f];
            for v in face.iter_mut() {
                if *v == remove {
                    *v = keep;
                }
            }
            let face = *face;
            let degenerate = face[0] == face[1] || face[1] == face[2] || face[0] == face[2];
            let duplicate = !degenerate && {
                let key = sorted(face);
                self.node_faces[keep]
                    .iter()
                    .any(|&g| g != f && self.face_alive[g] && sorted(self.faces[g]) == key)
            };
            if degenerate || duplicate {
                self.face_alive[f] = false;
                killed += 1;
            } else {
                self.node_faces[keep].push(f);
            }
        }
        self.node_faces[keep].retain(|&g| self.face_alive[g]);

        self.alive[remove] = false;
        self.version[keep] += 1;
        self.push_pairs_of(keep);
        killed
    }
}

fn sorted(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

/// Removes nodes by least-cost pair contraction until `target_n` remain.
///
/// Pair cost is `min(v^T (Q_p + Q_q) v)` over the two endpoints `v`; the
/// survivor is that endpoint and inherits `Q_p + Q_q`. Ties are broken by
/// shorter pair length, then by smaller node index.
pub fn simplify(mesh: &Mesh, target_n: usize, opts: SimplifyOptions) -> Result<Simplified> {
    let n = mesh.n_nodes();
    if target_n == 0 || target_n >= n {
        return Err(Error::Argument(format!(
            "target node count {target_n} must be in 1..{n}"
        )));
    }
    if !(opts.pair_distance >= 0.0) {
        return Err(Error::Argument("pair_distance must be non-negative".into()));
    }
    let positions = mesh.nodes();
    let (quadrics, _) = compute_quadrics(mesh);
    let mut partners = vec![BTreeSet::new(); n];
    for (a, b) in mesh.edges() {
        partners[a].insert(b);
        partners[b].insert(a);
    }
    if opts.pair_distance > 0.0 {
        let r2 = opts.pair_distance * opts.pair_distance;
        for a in 0..n {
            for b in a + 1..n {
                let d = super::quadric::sub(positions[a], positions[b]);
                if super::quadric::dot(d, d) < r2 {
                    partners[a].insert(b);
                    partners[b].insert(a);
                }
            }
        }
    }
    let faces = mesh.faces().to_vec();
    let mut node_faces = vec![Vec::new(); n];
    for (i, f) in faces.iter().enumerate() {
        for &v in f {
            node_faces[v].push(i);
        }
    }
    let mut st = State {
        positions,
        quadrics,
        partners,
        face_alive: vec![true; faces.len()],
        faces,
        node_faces,
        alive: vec![true; n],
        version: vec![0; n],
        heap: BinaryHeap::new(),
    };
    for a in 0..n {
        let higher: Vec<usize> = st.partners[a].range(a + 1..).copied().collect();
        for b in higher {
            let c = st.candidate(a, b);
            st.heap.push(Reverse(c));
        }
    }

    let mut remaining = n;
    let mut live_faces = st.faces.len();
    let had_faces = live_faces > 0;
    while remaining > target_n {
        let Some(Reverse(c)) = st.heap.pop() else {
            return Err(Error::SimplifyStalled {
                reachable: remaining,
                target: target_n,
            });
        };
        if !st.is_current(&c) {
            continue;
        }
        let remove = if c.keep == c.a { c.b } else { c.a };
        live_faces -= st.contract(remove, c.keep);
        remaining -= 1;
        if had_faces && live_faces == 0 && remaining > target_n {
            return Err(Error::SimplifyStalled {
                reachable: remaining,
                target: target_n,
            });
        }
    }

    let kept: Vec<usize> = (0..n).filter(|&p| st.alive[p]).collect();
    let mut coarse_index = vec![usize::MAX; n];
    for (i, &p) in kept.iter().enumerate() {
        coarse_index[p] = i;
    }
    let coarse_nodes = kept.iter().map(|&p| positions[p]).collect();
    let coarse_faces = st
        .faces
        .iter()
        .zip(&st.face_alive)
        .filter(|(_, &alive)| alive)
        .map(|(f, _)| [coarse_index[f[0]], coarse_index[f[1]], coarse_index[f[2]]])
        .collect();
    Ok(Simplified {
        selection: SelectionMatrix::new(kept, n)?,
        coarse: Mesh::new(coarse_nodes, coarse_faces)?,
    })
}
