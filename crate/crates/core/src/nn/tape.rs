//! Reverse-mode differentiation over a recorded list of matrix operations.
//!
//! Every value is a row-major `rows x cols` matrix. Batched node signals are
//! stored as `(batch * nodes) x channels`; [`Tape::reshape`] reinterprets the
//! same buffer as `batch x (nodes * channels)` for dense layers.

use std::collections::HashMap;
use std::sync::Arc;

use super::gemm::gemm;
use super::ParamStore;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A fixed sparse node operator together with its transpose.
#[derive(Debug, Clone)]
pub struct NodeMap {
    forward: CsrMatrix,
    adjoint: CsrMatrix,
}

impl NodeMap {
    pub fn new(m: CsrMatrix) -> Self {
        let adjoint = m.transpose();
        Self { forward: m, adjoint }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.forward
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Affine {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    SparseAffine {
        x: Var,
        pattern: Arc<CsrMatrix>,
        values: Var,
        b: Option<Var>,
    },
    Cheb {
        x: Var,
        lap: Arc<CsrMatrix>,
        thetas: Vec<Var>,
        bias: Option<Var>,
        // T_0 X .. T_{K-1} X in node-major layout, kept only for backward:
        // either separately or interleaved row-wise into `cat`
        basis: Vec<Vec<f64>>,
        cat: Vec<f64>,
    },
    Elu {
        x: Var,
    },
    LinComb {
        terms: Vec<(Var, f64)>,
    },
    Reshape {
        x: Var,
    },
    Map {
        x: Var,
        map: Arc<NodeMap>,
    },
    Concat {
        parts: Vec<Var>,
    },
    Mse {
        x: Var,
        target: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Gradients of a scalar with respect to every parameter of a store, in
/// store order. Frozen or unused parameters get exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    values: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, index: usize) -> &[f64] {
        &self.values[index]
    }

    pub fn by_name<'a>(&'a self, store: &ParamStore, name: &str) -> Result<&'a [f64]> {
        let i = store
            .index_of(name)
            .ok_or_else(|| Error::Argument(format!("unknown parameter {name:?}")))?;
        Ok(&self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.iter().map(Vec::as_slice)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Records operations for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<usize, Var>,
    inference: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape on which parameters enter as constants; nothing is retained
    /// for a backward pass.
    pub fn inference() -> Self {
        Self {
            inference: true,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        match self.dims(v) {
            (1, 1) => Ok(self.value(v)[0]),
            d => Err(Error::Shape(format!("expected a scalar, got {d:?}"))),
        }
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<Var> {
        if value.len() != rows * cols {
            return Err(Error::Shape(format!(
                "constant {rows}x{cols} needs {} values, got {}",
                rows * cols,
                value.len()
            )));
        }
        Ok(self.push(rows, cols, value, Op::Leaf, false))
    }

    /// Records a parameter (once per tape). Frozen parameters, and all
    /// parameters on an inference tape, enter as constants.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let i = store
            .index_of(name)
            .ok_or_else(|| Error::Argument(format!("unknown parameter {name:?}")))?;
        if let Some(&v) = self.params.get(&i) {
            return Ok(v);
        }
        let t = store.tensor(i);
        let (rows, cols) = t.as_matrix_dims();
        let trainable = !self.inference && !store.is_frozen_at(i);
        let v = self.push(rows, cols, t.data().to_vec(), Op::Leaf, trainable);
        self.params.insert(i, v);
        Ok(v)
    }

    /// Values of same-width matrices stacked vertically.
    fn stack_values(&self, vars: &[Var]) -> Vec<f64> {
        vars.iter().flat_map(|&v| self.value(v).iter().copied()).collect()
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn check_bias(&self, b: Option<Var>, cols: usize) -> Result<()> {
        if let Some(b) = b {
            let (br, bc) = self.dims(b);
            if br * bc != cols {
                return Err(Error::Shape(format!("bias has {} values, expected {cols}", br * bc)));
            }
        }
        Ok(())
    }

    /// `x W + b` with `x: m x k`, `W: k x n`, `b` of length `n`.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (m, k) = self.dims(x);
        let (wk, n) = self.dims(w);
        if wk != k {
            return Err(Error::Shape(format!("affine: input has {k} columns, weight has {wk} rows")));
        }
        self.check_bias(b, n)?;
        let mut out = vec![0.0; m * n];
        if let Some(b) = b {
            let bv = self.value(b);
            for row in out.chunks_exact_mut(n) {
                row.copy_from_slice(bv);
            }
        }
        gemm(m, k, n, 1.0, self.value(x), false, self.value(w), false, 1.0, &mut out);
        let rg = self.any_grad(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(m, n, out, Op::Affine { x, w, b }, rg))
    }

    /// Affine map whose weight is sparse with a fixed pattern.
    ///
    /// `pattern` is `n_out x n_in`; `values` holds one trainable weight per
    /// stored entry, in CSR order. `x` is `batch x n_in`.
    pub fn sparse_affine(&mut self, x: Var, pattern: &Arc<CsrMatrix>, values: Var, b: Option<Var>) -> Result<Var> {
        let (m, k) = self.dims(x);
        let (vr, vc) = self.dims(values);
        if pattern.cols() != k || vr * vc != pattern.nnz() {
            return Err(Error::Shape(format!(
                "sparse affine: pattern {}x{} with {} entries, input width {k}, {} values",
                pattern.rows(),
                pattern.cols(),
                pattern.nnz(),
                vr * vc
            )));
        }
        let n = pattern.rows();
        self.check_bias(b, n)?;
        let xv = self.value(x);
        let wv = self.value(values);
        let mut out = vec![0.0; m * n];
        for (xb, ob) in xv.chunks_exact(k.max(1)).zip(out.chunks_exact_mut(n.max(1))) {
            let mut e = 0;
            for (r, o) in ob.iter_mut().enumerate() {
                let (idx, _) = pattern.row(r);
                for &c in idx {
                    *o += wv[e] * xb[c];
                    e += 1;
                }
            }
        }
        if let Some(b) = b {
            let bv = self.value(b);
            for row in out.chunks_exact_mut(n.max(1)) {
                row.iter_mut().zip(bv).for_each(|(o, bi)| *o += bi);
            }
        }
        let rg = self.any_grad(&[x, values]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(
            m,
            n,
            out,
            Op::SparseAffine {
                x,
                pattern: Arc::clone(pattern),
                values,
                b,
            },
            rg,
        ))
    }

    /// Chebyshev graph convolution `sum_k T_k(lap) X theta_k + bias`.
    ///
    /// `x` is `(batch * n) x c_in` for the `n x n` operator `lap`, which must
    /// be symmetric (its transpose is used in the backward pass).
    pub fn cheb_conv(&mut self, x: Var, lap: &Arc<CsrMatrix>, thetas: &[Var], bias: Option<Var>) -> Result<Var> {
        let (rows, c_in) = self.dims(x);
        let n = lap.rows();
        if lap.cols() != n || n == 0 || rows % n != 0 {
            return Err(Error::Shape(format!(
                "cheb_conv: operator {}x{} does not fit {rows} input rows",
                lap.rows(),
                lap.cols()
            )));
        }
        let Some(&first) = thetas.first() else {
            return Err(Error::Argument("cheb_conv needs at least one coefficient".into()));
        };
        let c_out = self.dims(first).1;
        for &t in thetas {
            if self.dims(t) != (c_in, c_out) {
                return Err(Error::Shape(format!(
                    "cheb_conv: coefficient {:?}, expected {c_in}x{c_out}",
                    self.dims(t)
                )));
            }
        }
        self.check_bias(bias, c_out)?;
        let batch = rows / n;
        // Work node-major, `n x (batch * c)`, so each sparse product runs over
        // wide rows; the coefficient products are row-order agnostic.
        let mut basis = Vec::with_capacity(thetas.len());
        basis.push(to_node_major(self.value(x), batch, n, c_in));
        for k in 1..thetas.len() {
            let mut t = vec![0.0; rows * c_in];
            if k == 1 {
                lap.apply_blocks(&basis[0], batch * c_in, &mut t, 1.0, true);
            } else {
                lap.apply_blocks(&basis[k - 1], batch * c_in, &mut t, 2.0, true);
                t.iter_mut().zip(&basis[k - 2]).for_each(|(a, b)| *a -= b);
            }
            basis.push(t);
        }
        let mut out_n = vec![0.0; rows * c_out];
        if let Some(b) = bias {
            let bv = self.value(b);
            for row in out_n.chunks_exact_mut(c_out) {
                row.copy_from_slice(bv);
            }
        }
        let merged = merge_orders(thetas.len(), c_in);
        let mut cat = Vec::new();
        if merged {
            // one product against the stacked coefficients
            cat = interleave(&basis, c_in);
            let stack = self.stack_values(thetas);
            gemm(rows, thetas.len() * c_in, c_out, 1.0, &cat, false, &stack, false, 1.0, &mut out_n);
            basis.clear();
        } else {
            for (tk, &t) in basis.iter().zip(thetas) {
                gemm(rows, c_in, c_out, 1.0, tk, false, self.value(t), false, 1.0, &mut out_n);
            }
        }
        let out = from_node_major(&out_n, batch, n, c_out);
        let rg = self.any_grad(thetas) || self.requires_grad(x) || bias.is_some_and(|b| self.requires_grad(b));
        if !rg {
            basis.clear();
            cat.clear();
        }
        let op = Op::Cheb {
            x,
            lap: Arc::clone(lap),
            thetas: thetas.to_vec(),
            bias,
            basis,
            cat,
        };
        Ok(self.push(rows, c_out, out, op, rg))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let out = elu_slice(self.value(x));
        let rg = self.requires_grad(x);
        self.push(r, c, out, Op::Elu { x }, rg)
    }

    /// `sum_i c_i x_i` over same-shaped operands.
    pub fn lincomb(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let Some(&(first, _)) = terms.first() else {
            return Err(Error::Argument("empty linear combination".into()));
        };
        let (r, c) = self.dims(first);
        let mut out = vec![0.0; r * c];
        for &(v, coef) in terms {
            if self.dims(v) != (r, c) {
                return Err(Error::Shape(format!("lincomb: {:?} vs {:?}", self.dims(v), (r, c))));
            }
            out.iter_mut().zip(self.value(v)).for_each(|(o, x)| *o += coef * x);
        }
        let rg = terms.iter().any(|&(v, _)| self.requires_grad(v));
        Ok(self.push(r, c, out, Op::LinComb { terms: terms.to_vec() }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.lincomb(&[(a, 1.0), (b, 1.0)])
    }

    /// Reinterprets the row-major buffer with a new shape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.dims(x);
        if r * c != rows * cols {
            return Err(Error::Shape(format!("cannot reshape {r}x{c} to {rows}x{cols}")));
        }
        let rg = self.requires_grad(x);
        let v = self.value(x).to_vec();
        Ok(self.push(rows, cols, v, Op::Reshape { x }, rg))
    }

    /// Applies a node operator to every batch block of a node signal.
    pub fn node_map(&mut self, x: Var, map: &Arc<NodeMap>) -> Result<Var> {
        let (rows, c) = self.dims(x);
        let m = &map.forward;
        if m.cols() == 0 || rows % m.cols() != 0 {
            return Err(Error::Shape(format!(
                "node_map: {rows} rows is not a multiple of {} nodes",
                m.cols()
            )));
        }
        let out_rows = rows / m.cols() * m.rows();
        let mut out = vec![0.0; out_rows * c];
        m.apply_blocks(self.value(x), c, &mut out, 1.0, false);
        let rg = self.requires_grad(x);
        Ok(self.push(
            out_rows,
            c,
            out,
            Op::Map {
                x,
                map: Arc::clone(map),
            },
            rg,
        ))
    }

    /// Column-wise concatenation of operands with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Argument("nothing to concatenate".into()));
        };
        let rows = self.dims(first).0;
        if parts.iter().any(|&p| self.dims(p).0 != rows) {
            return Err(Error::Shape("concat_cols: row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let c = self.dims(p).1;
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(rows, cols, out, Op::Concat { parts: parts.to_vec() }, rg))
    }

    /// Mean squared difference to a fixed target, as a `1 x 1` value.
    pub fn mse(&mut self, x: Var, target: &[f64]) -> Result<Var> {
        let xv = self.value(x);
        if xv.len() != target.len() || xv.is_empty() {
            return Err(Error::Shape(format!(
                "mse: {} predictions vs {} targets",
                xv.len(),
                target.len()
            )));
        }
        let s: f64 = xv.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        let out = vec![s / xv.len() as f64];
        let rg = self.requires_grad(x);
        let target = if rg { target.to_vec() } else { Vec::new() };
        Ok(self.push(1, 1, out, Op::Mse { x, target }, rg))
    }

    /// Gradients of the scalar `loss` with respect to the parameters of
    /// `store` recorded on this tape.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        self.scalar(loss)?;
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => grads[i] = Some(g),
                Op::Affine { x, w, b } => {
                    let (m, k) = self.dims(*x);
                    let n = node.cols;
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        gemm(m, n, k, 1.0, &g, false, self.value(*w), true, 1.0, dx);
                    }
                    if let Some(dw) = self.slot(&mut grads, *w) {
                        gemm(k, m, n, 1.0, self.value(*x), true, &g, false, 1.0, dw);
                    }
                    if let Some(db) = b.and_then(|b| self.slot(&mut grads, b)) {
                        add_column_sums(&g, n, db);
                    }
                }
                Op::SparseAffine { x, pattern, values, b } => {
                    let k = pattern.cols();
                    let n = node.cols;
                    let xv = self.value(*x);
                    if let Some(dv) = self.slot(&mut grads, *values) {
                        for (xb, gb) in xv.chunks_exact(k.max(1)).zip(g.chunks_exact(n.max(1))) {
                            let mut e = 0;
                            for (r, &gr) in gb.iter().enumerate() {
                                for &c in pattern.row(r).0 {
                                    dv[e] += gr * xb[c];
                                    e += 1;
                                }
                            }
                        }
                    }
                    let wv = self.value(*values);
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        for (dxb, gb) in dx.chunks_exact_mut(k.max(1)).zip(g.chunks_exact(n.max(1))) {
                            let mut e = 0;
                            for (r, &gr) in gb.iter().enumerate() {
                                for &c in pattern.row(r).0 {
                                    dxb[c] += wv[e] * gr;
                                    e += 1;
                                }
                            }
                        }
                    }
                    if let Some(db) = b.and_then(|b| self.slot(&mut grads, b)) {
                        add_column_sums(&g, n, db);
                    }
                }
                Op::Cheb {
                    x,
                    lap,
                    thetas,
                    bias,
                    basis,
                    cat,
                } => {
                    let (rows, c_in) = self.dims(*x);
                    let c_out = node.cols;
                    let n = lap.rows();
                    let batch = rows / n;
                    if let Some(db) = bias.and_then(|b| self.slot(&mut grads, b)) {
                        add_column_sums(&g, c_out, db);
                    }
                    let gn = to_node_major(&g, batch, n, c_out);
                    let wide = thetas.len() * c_in;
                    if !cat.is_empty() && self.any_grad(thetas) {
                        let mut ds = vec![0.0; wide * c_out];
                        gemm(wide, rows, c_out, 1.0, cat, true, &gn, false, 0.0, &mut ds);
                        for (k, &t) in thetas.iter().enumerate() {
                            if let Some(dt) = self.slot(&mut grads, t) {
                                let part = &ds[k * c_in * c_out..(k + 1) * c_in * c_out];
                                dt.iter_mut().zip(part).for_each(|(d, v)| *d += v);
                            }
                        }
                    }
                    for (tk, &t) in basis.iter().zip(thetas) {
                        if let Some(dt) = self.slot(&mut grads, t) {
                            gemm(c_in, rows, c_out, 1.0, tk, true, &gn, false, 1.0, dt);
                        }
                    }
                    if self.requires_grad(*x) {
                        // adjoint of the three-term recursion, run backwards
                        let w = batch * c_in;
                        let mut gk: Vec<Vec<f64>> = if cat.is_empty() {
                            thetas
                                .iter()
                                .map(|&t| {
                                    let mut d = vec![0.0; rows * c_in];
                                    gemm(rows, c_out, c_in, 1.0, &gn, false, self.value(t), true, 0.0, &mut d);
                                    d
                                })
                                .collect()
                        } else {
                            let stack = self.stack_values(thetas);
                            let mut dcat = vec![0.0; rows * wide];
                            gemm(rows, c_out, wide, 1.0, &gn, false, &stack, true, 0.0, &mut dcat);
                            deinterleave(&dcat, thetas.len(), c_in)
                        };
                        for k in (2..gk.len()).rev() {
                            let (lo, hi) = gk.split_at_mut(k);
                            lap.apply_blocks(&hi[0], w, &mut lo[k - 1], 2.0, true);
                            lo[k - 2].iter_mut().zip(&hi[0]).for_each(|(a, b)| *a -= b);
                        }
                        if gk.len() > 1 {
                            let (lo, hi) = gk.split_at_mut(1);
                            lap.apply_blocks(&hi[0], w, &mut lo[0], 1.0, true);
                        }
                        let dx = self.slot(&mut grads, *x).expect("requires grad");
                        add_from_node_major(&gk[0], batch, n, c_in, dx);
                    }
                }
                Op::Elu { x } => {
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        for ((d, &gi), &y) in dx.iter_mut().zip(&g).zip(&node.value) {
                            *d += gi * if y > 0.0 { 1.0 } else { y + 1.0 };
                        }
                    }
                }
                Op::LinComb { terms } => {
                    for &(v, c) in terms {
                        if let Some(dv) = self.slot(&mut grads, v) {
                            dv.iter_mut().zip(&g).for_each(|(d, gi)| *d += c * gi);
                        }
                    }
                }
                Op::Reshape { x } => {
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        dx.iter_mut().zip(&g).for_each(|(d, gi)| *d += gi);
                    }
                }
                Op::Map { x, map } => {
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        map.adjoint.apply_blocks(&g, node.cols, dx, 1.0, true);
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.dims(p).1;
                        if let Some(dp) = self.slot(&mut grads, p) {
                            for (dr, gr) in dp.chunks_exact_mut(c.max(1)).zip(g.chunks_exact(node.cols.max(1))) {
                                dr.iter_mut().zip(&gr[offset..offset + c]).for_each(|(d, gi)| *d += gi);
                            }
                        }
                        offset += c;
                    }
                }
                Op::Mse { x, target } => {
                    let scale = 2.0 * g[0] / target.len() as f64;
                    let xv = self.value(*x);
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        for ((d, a), b) in dx.iter_mut().zip(xv).zip(target) {
                            *d += scale * (a - b);
                        }
                    }
                }
            }
        }
        let mut values: Vec<Vec<f64>> = store.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        for (&pi, &v) in &self.params {
            if pi >= values.len() {
                return Err(Error::Argument("tape was recorded against a different store".into()));
            }
            if let Some(g) = grads[v.0].take() {
                if g.len() != values[pi].len() {
                    return Err(Error::Argument("tape was recorded against a different store".into()));
                }
                values[pi] = g;
            }
        }
        Ok(Gradients { values })
    }

    /// Gradient accumulator of `v`, created on first use; `None` when `v`
    /// does not need a gradient.
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut [f64]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
    }
}

fn add_column_sums(g: &[f64], cols: usize, out: &mut [f64]) {
    for row in g.chunks_exact(cols.max(1)) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
}

/// Elementwise [`elu`]; uses AVX2 when the CPU has it (same results, as no
/// operations are fused).
fn elu_slice(x: &[f64]) -> Vec<f64> {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the required CPU feature was detected at run time.
            return unsafe { elu_slice_avx2(x) };
        }
    }
    x.iter().map(|&v| elu(v)).collect()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn elu_slice_avx2(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| elu(v)).collect()
}

/// Exponential linear unit.
#[inline]
pub fn elu(x: f64) -> f64 {
    // both branches are evaluated so that loops over slices vectorize
    let e = exp_m1_nonpositive(x.min(0.0));
    if x > 0.0 {
        x
    } else {
        e
    }
}

/// `exp(x) - 1` for `x <= 0` without libm calls or branches, accurate to a
/// few ulp. Inputs below -700 saturate at -1.
#[inline]
fn exp_m1_nonpositive(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // adding 1.5 * 2^52 rounds to an integer held in the low mantissa bits
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    // 1/2!, ..., 1/13!
    const C: [f64; 12] = [
        0.5,
        1.666_666_666_666_666_6e-1,
        4.166_666_666_666_666_4e-2,
        8.333_333_333_333_333e-3,
        1.388_888_888_888_889e-3,
        1.984_126_984_126_984e-4,
        2.480_158_730_158_730_2e-5,
        2.755_731_922_398_589e-6,
        2.755_731_922_398_589e-7,
        2.505_210_838_544_172e-8,
        2.087_675_698_786_81e-9,
        1.605_904_383_682_161_3e-10,
    ];
    let x = x.max(-700.0);
    let t = x * LOG2E + SHIFTER;
    let k = t - SHIFTER;
    let r = x - k * LN2_HI - k * LN2_LO;
    // q = exp(r) - 1 on |r| <= ln2 / 2
    let mut p = C[11];
    for &c in C[..11].iter().rev() {
        p = p * r + c;
    }
    let q = r + r * r * p;
    let bits = t.to_bits().wrapping_sub(SHIFTER.to_bits()).wrapping_add(1023) << 52;
    let s = f64::from_bits(bits);
    s * q + (s - 1.0)
}

/// Whether the coefficient products of a convolution with `order` terms
/// over `c_in` channels run as one product against the stacked
/// coefficients; that pays off while the stacked inner dimension is small.
fn merge_orders(order: usize, c_in: usize) -> bool {
    order > 1 && order * c_in <= 36
}

/// Row-wise concatenation `[B_0 | B_1 | ..]` of same-shaped blocks with
/// `c` columns each.
fn interleave(blocks: &[Vec<f64>], c: usize) -> Vec<f64> {
    let rows = blocks.first().map_or(0, |b| b.len() / c);
    let wide = blocks.len() * c;
    let mut out = vec![0.0; rows * wide];
    for (k, b) in blocks.iter().enumerate() {
        for (dst, src) in out.chunks_exact_mut(wide).zip(b.chunks_exact(c)) {
            dst[k * c..(k + 1) * c].copy_from_slice(src);
        }
    }
    out
}

fn deinterleave(x: &[f64], order: usize, c: usize) -> Vec<Vec<f64>> {
    let wide = order * c;
    (0..order)
        .map(|k| x.chunks_exact(wide).flat_map(|row| row[k * c..(k + 1) * c].iter().copied()).collect())
        .collect()
}

/// `(batch, n, c)` to `(n, batch, c)`.
fn to_node_major(x: &[f64], batch: usize, n: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for p in 0..n {
            let src = (b * n + p) * c;
            let dst = (p * batch + b) * c;
            out[dst..dst + c].copy_from_slice(&x[src..src + c]);
        }
    }
    out
}

fn from_node_major(x: &[f64], batch: usize, n: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for p in 0..n {
            let src = (p * batch + b) * c;
            let dst = (b * n + p) * c;
            out[dst..dst + c].copy_from_slice(&x[src..src + c]);
        }
    }
    out
}

fn add_from_node_major(x: &[f64], batch: usize, n: usize, c: usize, out: &mut [f64]) {
    for b in 0..batch {
        for p in 0..n {
            let src = (p * batch + b) * c;
            let dst = (b * n + p) * c;
            out[dst..dst + c].iter_mut().zip(&x[src..src + c]).for_each(|(o, v)| *o += v);
        }
    }
}

/// `T_1 X .. T_{order-1} X` for a batched signal with `channels` columns,
/// by the three-term recursion on `lap` (never forming `T_k`).
fn chebyshev_recursion(lap: &CsrMatrix, x: &[f64], channels: usize, order: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order.saturating_sub(1));
    for k in 1..order {
        let mut t = vec![0.0; x.len()];
        if k == 1 {
            lap.apply_blocks(x, channels, &mut t, 1.0, false);
        } else {
            lap.apply_blocks(&basis[k - 2], channels, &mut t, 2.0, false);
            let prev2 = if k == 2 { x } else { &basis[k - 3] };
            t.iter_mut().zip(prev2).for_each(|(a, b)| *a -= b);
        }
        basis.push(t);
    }
    basis
}

/// `[T_0 X, .., T_{order-1} X]` for a batched node signal.
pub fn chebyshev_basis(lap: &CsrMatrix, x: &[f64], channels: usize, order: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(order);
    if order > 0 {
        out.push(x.to_vec());
        out.extend(chebyshev_recursion(lap, x, channels, order));
    }
    out
}
