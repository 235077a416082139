//! Compressed sparse row matrices and Matrix Market I/O.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Real CSR matrix. Construction drops explicit zeros and sums duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for (r, c, v) in triplets {
            if r >= rows {
                return Err(Error::IndexOutOfRange { index: r, size: rows });
            }
            if c >= cols {
                return Err(Error::IndexOutOfRange { index: c, size: cols });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("entry ({r}, {c})")));
            }
            per_row[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in per_row {
            row.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut acc = 0.0;
                while i < row.len() && row[i].0 == c {
                    acc += row[i].1;
                    i += 1;
                }
                if acc != 0.0 {
                    indices.push(c);
                    values.push(acc);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (idx, val) = self.row(r);
        match idx.binary_search(&c) {
            Ok(k) => val[k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (idx, val) = self.row(r);
            idx.iter().zip(val).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn transpose(&self) -> Self {
        let mut t: Vec<(usize, usize, f64)> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        t.sort_by_key(|&(r, c, _)| (r, c));
        Self::from_triplets(self.cols, self.rows, t).expect("transpose of a valid matrix")
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self::from_triplets(self.rows, self.cols, self.triplets().map(|(r, c, v)| (r, c, alpha * v)))
            .expect("scaled matrix")
    }

    /// `alpha * self + beta * other`.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot add {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let a = self.triplets().map(|(r, c, v)| (r, c, alpha * v));
        let b = other.triplets().map(|(r, c, v)| (r, c, beta * v));
        Self::from_triplets(self.rows, self.cols, a.chain(b))
    }

    /// Sparse-sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut triplets = Vec::new();
        let mut acc = vec![0.0; other.cols];
        let mut mark = vec![false; other.cols];
        let mut touched = Vec::new();
        for r in 0..self.rows {
            let (ia, va) = self.row(r);
            for (&k, &a) in ia.iter().zip(va) {
                let (ib, vb) = other.row(k);
                for (&c, &b) in ib.iter().zip(vb) {
                    if !mark[c] {
                        mark[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                triplets.push((r, c, acc[c]));
                acc[c] = 0.0;
                mark[c] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.rows, other.cols, triplets)
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows)
            .map(|r| {
                let (idx, val) = self.row(r);
                idx.iter().zip(val).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    /// Applies the matrix to every block of a batched node signal.
    ///
    /// `x` is row-major `(batch * cols) x channels`; the result is
    /// `(batch * rows) x channels`. The product is scaled by `alpha`; it is
    /// added into `out` when `accumulate` is set and overwrites it otherwise.
    pub fn apply_blocks(
        &self,
        x: &[f64],
        channels: usize,
        out: &mut [f64],
        alpha: f64,
        accumulate: bool,
    ) {
        let in_block = self.cols * channels;
        let out_block = self.rows * channels;
        assert_eq!(x.len() % in_block.max(1), 0, "apply_blocks input size");
        let batch = if in_block == 0 { 0 } else { x.len() / in_block };
        assert_eq!(out.len(), batch * out_block, "apply_blocks output size");
        if !accumulate {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
        for b in 0..batch {
            let xb = &x[b * in_block..(b + 1) * in_block];
            let ob = &mut out[b * out_block..(b + 1) * out_block];
            for r in 0..self.rows {
                let (idx, val) = self.row(r);
                let orow = &mut ob[r * channels..(r + 1) * channels];
                for (&c, &v) in idx.iter().zip(val) {
                    let w = alpha * v;
                    let xrow = &xb[c * channels..(c + 1) * channels];
                    for (o, &xi) in orow.iter_mut().zip(xrow) {
                        *o += w * xi;
                    }
                }
            }
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    /// True when the matrix equals its transpose entry by entry.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.triplets().all(|(r, c, v)| self.get(c, r) == v)
    }

    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.rows, self.cols, self.nnz());
        for (r, c, v) in self.triplets() {
            let _ = writeln!(s, "{} {} {:.17e}", r + 1, c + 1, v);
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_matrix_market(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let parse_err = |line: usize, msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = BufReader::new(file).lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l?,
            None => return Err(parse_err(1, "empty file")),
        };
        let h = header.to_ascii_lowercase();
        if !h.starts_with("%%matrixmarket matrix coordinate real") {
            return Err(parse_err(1, "expected coordinate real Matrix Market header"));
        }
        let mut dims: Option<(usize, usize, usize)> = None;
        let mut triplets = Vec::new();
        for (i, line) in lines {
            let line = line?;
            let lineno = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            if dims.is_none() {
                if parts.len() != 3 {
                    return Err(parse_err(lineno, "expected 'rows cols nnz'"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| parse_err(lineno, "bad size"));
                dims = Some((p(parts[0])?, p(parts[1])?, p(parts[2])?));
                continue;
            }
            if parts.len() != 3 {
                return Err(parse_err(lineno, "expected 'row col value'"));
            }
            let r: usize = parts[0].parse().map_err(|_| parse_err(lineno, "bad row index"))?;
            let c: usize = parts[1].parse().map_err(|_| parse_err(lineno, "bad column index"))?;
            let v: f64 = parts[2].parse().map_err(|_| parse_err(lineno, "bad value"))?;
            if r == 0 || c == 0 {
                return Err(parse_err(lineno, "indices are 1-based"));
            }
            triplets.push((r - 1, c - 1, v));
        }
        let (rows, cols, nnz) = dims.ok_or_else(|| parse_err(1, "missing size line"))?;
        if triplets.len() != nnz {
            return Err(parse_err(0, &format!("expected {nnz} entries, found {}", triplets.len())));
        }
        Self::from_triplets(rows, cols, triplets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = CsrMatrix::from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 2.0), (1, 1, 1.0), (1, 1, -1.0)])
            .unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn out_of_range_triplet_rejected() {
        assert!(matches!(
            CsrMatrix::from_triplets(2, 2, [(2, 0, 1.0)]),
            Err(Error::IndexOutOfRange { index: 2, size: 2 })
        ));
    }

    #[test]
    fn matmul_matches_dense() {
        let a = CsrMatrix::from_triplets(2, 3, [(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]).unwrap();
        let b = CsrMatrix::from_triplets(3, 2, [(0, 1, 4.0), (1, 0, 5.0), (2, 0, 6.0)]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.to_dense(), vec![vec![12.0, 4.0], vec![15.0, 0.0]]);
    }

    #[test]
    fn apply_blocks_matches_matvec_per_channel() {
        let a = CsrMatrix::from_triplets(2, 3, [(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]).unwrap();
        // two batches, three nodes, two channels
        let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let mut out = vec![0.0; 8];
        a.apply_blocks(&x, 2, &mut out, 1.0, false);
        for b in 0..2 {
            for ch in 0..2 {
                let col: Vec<f64> = (0..3).map(|p| x[b * 6 + p * 2 + ch]).collect();
                let y = a.matvec(&col);
                for r in 0..2 {
                    assert_eq!(out[b * 4 + r * 2 + ch], y[r]);
                }
            }
        }
    }

    #[test]
    fn matrix_market_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mtx");
        let m = CsrMatrix::from_triplets(3, 2, [(0, 1, 0.1), (2, 0, 1.0 / 3.0), (1, 1, -2.5e-7)])
            .unwrap();
        m.write_matrix_market(&path).unwrap();
        let back = CsrMatrix::read_matrix_market(&path).unwrap();
        assert_eq!(back, m);
    }
}
