use super::{Gradients, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;

/// Largest graph the dense spectral oracle accepts.
pub const SPECTRAL_ORACLE_MAX_NODES: usize = 64;

/// Graph filter evaluated in the Fourier basis of `lap`:
/// `V diag(g(lambda)) V^T x` with `g(l) = sum_k coeffs[k] T_k(l)`.
///
/// Dense and cubic in `n`; meant as a test reference for the Chebyshev
/// recursion.
pub fn spectral_oracle(x: &[f64], coeffs: &[f64], lap: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = lap.len();
    if n > SPECTRAL_ORACLE_MAX_NODES {
        return Err(Error::Argument(format!(
            "spectral oracle limited to {SPECTRAL_ORACLE_MAX_NODES} nodes, got {n}"
        )));
    }
    if x.len() != n {
        return Err(Error::Shape(format!("signal has {} entries for {n} nodes", x.len())));
    }
    let eig = symmetric_eigen(lap)?;
    let v = &eig.vectors;
    let mut out = vec![0.0; n];
    for (i, &lambda) in eig.values.iter().enumerate() {
        let xhat: f64 = (0..n).map(|r| v[r][i] * x[r]).sum();
        let gain = chebyshev_series(coeffs, lambda);
        for (r, o) in out.iter_mut().enumerate() {
            *o += v[r][i] * gain * xhat;
        }
    }
    Ok(out)
}

/// `sum_k coeffs[k] T_k(a)` via the scalar three-term recursion.
pub fn chebyshev_series(coeffs: &[f64], a: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, a);
    let mut s = 0.0;
    for (k, &c) in coeffs.iter().enumerate() {
        let t = match k {
            0 => 1.0,
            1 => a,
            _ => {
                let next = 2.0 * a * cur - prev;
                prev = cur;
                cur = next;
                next
            }
        };
        s += c * t;
    }
    s
}

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`
    /// over all trainable entries.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Reverse-mode gradients, including the exact zeros of frozen entries.
    pub gradients: Gradients,
    pub checked: usize,
}

/// Denominator floor for the relative error: below this gradient
/// magnitude the comparison is effectively absolute, so that finite-difference
/// round-off on near-zero entries is not amplified.
pub const GRAD_CHECK_FLOOR: f64 = 1e-2;

/// Checks the gradient of the scalar built by `loss` against central
/// differences with step `epsilon`, for every trainable parameter entry.
///
/// `loss` must build the same computation on each tape it is handed.
pub fn grad_check<F>(store: &ParamStore, epsilon: f64, loss: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Argument(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut tape = Tape::new();
    let l = loss(&mut tape, store)?;
    let gradients = tape.backward(l, store)?;
    drop(tape);

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::inference();
        let v = loss(&mut t, s)?;
        t.scalar(v)
    };
    let mut probe = store.clone();
    let mut max_rel_error = 0.0;
    let mut worst = None;
    let mut checked = 0;
    for i in 0..store.len() {
        if store.is_frozen_at(i) {
            continue;
        }
        for j in 0..store.tensor(i).len() {
            let orig = store.tensor(i).data()[j];
            probe.tensor_mut(i).data_mut()[j] = orig + epsilon;
            let up = eval(&probe)?;
            probe.tensor_mut(i).data_mut()[j] = orig - epsilon;
            let down = eval(&probe)?;
            probe.tensor_mut(i).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let analytic = gradients.get(i)[j];
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            if !err.is_finite() {
                return Err(Error::NonFinite(format!("gradient check of {} produced {err}", store.name(i))));
            }
            if err > max_rel_error || worst.is_none() {
                max_rel_error = err.max(max_rel_error);
                worst = Some((store.name(i).to_string(), j));
            }
            checked += 1;
        }
    }
    Ok(GradCheck {
        max_rel_error,
        worst,
        gradients,
        checked,
    })
}
