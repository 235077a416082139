use super::quadric::{cross, dot, sub};
use super::{SelectionMatrix, UpsamplingMatrix};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::sparse::CsrMatrix;

/// Closest point on triangle `abc` to `p`, as barycentric weights.
///
/// Region-based search; the weights are those of the projection onto the
/// triangle, so they are already clamped to `[0, 1]` and sum to one.
pub fn closest_point_barycentric(p: Point, a: Point, b: Point, c: Point) -> [f64; 3] {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let area2 = dot(cross(ab, ac), cross(ab, ac));
    let scale = dot(ab, ab).max(dot(ac, ac));
    if area2 <= 1e-28 * scale * scale {
        return closest_on_segments(p, [a, b, c]);
    }
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return [1.0 - v, v, 0.0];
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return [1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [0.0, 1.0 - w, w];
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [1.0 - v - w, v, w]
}

fn closest_on_segments(p: Point, t: [Point; 3]) -> [f64; 3] {
    let mut best = ([1.0, 0.0, 0.0], f64::INFINITY);
    for (i, j) in [(0, 1), (1, 2), (0, 2)] {
        let d = sub(t[j], t[i]);
        let len2 = dot(d, d);
        let s = if len2 > 0.0 {
            (dot(sub(p, t[i]), d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [t[i][0] + s * d[0], t[i][1] + s * d[1], t[i][2] + s * d[2]];
        let e = sub(p, q);
        let dist = dot(e, e);
        if dist < best.1 {
            let mut w = [0.0; 3];
            w[i] = 1.0 - s;
            w[j] += s;
            best = (w, dist);
        }
    }
    best.0
}

fn evaluate(w: [f64; 3], t: [Point; 3]) -> Point {
    let mut q = [0.0; 3];
    for k in 0..3 {
        q[k] = w[0] * t[0][k] + w[1] * t[1][k] + w[2] * t[2][k];
    }
    q
}

/// Barycentric upsampler from `coarse` back to `fine`.
///
/// Kept nodes map one-to-one; each discarded node takes the clamped
/// barycentric weights of its projection onto the closest coarse triangle
/// (brute force over all coarse faces, first face wins ties).
pub fn build_upsampler(fine: &Mesh, coarse: &Mesh, sel: &SelectionMatrix) -> Result<UpsamplingMatrix> {
    if sel.n_fine() != fine.n_nodes() || sel.kept().len() != coarse.n_nodes() {
        return Err(Error::Shape(format!(
            "selection {}x{} does not match meshes ({} fine, {} coarse)",
            sel.kept().len(),
            sel.n_fine(),
            fine.n_nodes(),
            coarse.n_nodes()
        )));
    }
    if coarse.faces().is_empty() {
        return Err(Error::Argument("coarse mesh has no faces to project onto".into()));
    }
    let mut coarse_of = vec![None; fine.n_nodes()];
    for (q, &p) in sel.kept().iter().enumerate() {
        coarse_of[p] = Some(q);
    }
    let cn = coarse.nodes();
    let mut triplets = Vec::new();
    for (p, &pos) in fine.nodes().iter().enumerate() {
        if let Some(q) = coarse_of[p] {
            triplets.push((p, q, 1.0));
            continue;
        }
        let mut best: Option<([usize; 3], [f64; 3], f64)> = None;
        for f in coarse.faces() {
            let tri = [cn[f[0]], cn[f[1]], cn[f[2]]];
            let w = closest_point_barycentric(pos, tri[0], tri[1], tri[2]);
            let e = sub(pos, evaluate(w, tri));
            let d = dot(e, e);
            if best.as_ref().is_none_or(|b| d < b.2) {
                best = Some((*f, w, d));
            }
        }
        let (face, w, _) = best.expect("coarse mesh has faces");
        let w = w.map(|x| x.clamp(0.0, 1.0));
        let total: f64 = w.iter().sum();
        for k in 0..3 {
            let wk = w[k] / total;
            if wk > 0.0 {
                triplets.push((p, face[k], wk));
            }
        }
    }
    UpsamplingMatrix::new(CsrMatrix::from_triplets(fine.n_nodes(), coarse.n_nodes(), triplets)?)
}
