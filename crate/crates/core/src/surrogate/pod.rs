use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use super::{LatentModel, Mlp};
use crate::error::{Error, Result};
use crate::nn::{Dense, ParamStore, Tape, Tensor, Var};

/// Stored entries of a rank-`rank` basis over `dim` values: the basis
/// itself is the whole parametrization.
pub fn pod_params(dim: usize, rank: usize) -> usize {
    dim * rank
}

/// Leading left singular vectors of a centred snapshot matrix.
#[derive(Debug, Clone)]
pub struct PodBasis {
    pub mean: Vec<f64>,
    /// `dim x rank`, row-major; columns are orthonormal.
    pub modes: Vec<f64>,
    /// Singular values of the centred snapshots, descending, all of them.
    pub singular_values: Vec<f64>,
    pub dim: usize,
    pub rank: usize,
    pub n_snapshots: usize,
}

/// POD of `snapshots` (`n x dim`, one snapshot per row) truncated to `rank`.
///
/// Works on the smaller of the two Gram matrices, so the cost is cubic in
/// `min(n, dim)`.
pub fn pod_fit(snapshots: &[f64], dim: usize, rank: usize) -> Result<PodBasis> {
    if dim == 0 || snapshots.is_empty() || snapshots.len() % dim != 0 {
        return Err(Error::Shape("snapshots do not divide into rows of the given size".into()));
    }
    let n = snapshots.len() / dim;
    if rank == 0 || rank > n.min(dim) {
        return Err(Error::Argument(format!("rank {rank} outside 1..={}", n.min(dim))));
    }
    let mut mean = vec![0.0; dim];
    for row in snapshots.chunks_exact(dim) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    // X: dim x n, centred
    let x = DMatrix::from_fn(dim, n, |i, j| snapshots[j * dim + i] - mean[i]);
    let (gram, left) = if dim <= n { (&x * x.transpose(), true) } else { (x.transpose() * &x, false) };
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let mut modes = vec![0.0; dim * rank];
    for (k, &i) in order.iter().take(rank).enumerate() {
        let col = eig.eigenvectors.column(i);
        let u: Vec<f64> = if left {
            col.iter().copied().collect()
        } else {
            // u = X v / sigma
            let s = singular_values[k];
            if s <= 0.0 {
                return Err(Error::Argument(format!("snapshots have rank below {rank}")));
            }
            (&x * col).iter().map(|v| v / s).collect()
        };
        for (r, v) in u.into_iter().enumerate() {
            modes[r * rank + k] = v;
        }
    }
    Ok(PodBasis {
        mean,
        modes,
        singular_values,
        dim,
        rank,
        n_snapshots: n,
    })
}

impl PodBasis {
    /// Modal coordinates `V^T (x - mean)` of one snapshot.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.rank];
        for (r, (v, m)) in x.iter().zip(&self.mean).enumerate() {
            let row = &self.modes[r * self.rank..(r + 1) * self.rank];
            c.iter_mut().zip(row).for_each(|(a, w)| *a += w * (v - m));
        }
        c
    }

    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|r| {
                let row = &self.modes[r * self.rank..(r + 1) * self.rank];
                self.mean[r] + row.iter().zip(coeffs).map(|(w, c)| w * c).sum::<f64>()
            })
            .collect()
    }

    /// Per-mode scale `sigma_i / sqrt(n)`, the standard deviation of each
    /// modal coordinate over the snapshots.
    fn coordinate_scales(&self) -> Vec<f64> {
        let n = (self.n_snapshots as f64).sqrt();
        self.singular_values[..self.rank]
            .iter()
            .map(|s| if *s > 0.0 { s / n } else { 1.0 })
            .collect()
    }
}

/// Linear-subspace baseline: a fixed POD encoder/decoder with a trainable
/// MLP regressing the whitened modal coordinates.
#[derive(Debug, Clone)]
pub struct PodSurrogate {
    encoder: Dense,
    decoder: Dense,
    mlp: Mlp,
    n_nodes: usize,
    channels: usize,
    n_inputs: usize,
    latent: usize,
}

impl PodSurrogate {
    /// Structure only; parameters live under `<prefix>.`.
    pub fn new(prefix: &str, n_nodes: usize, channels: usize, latent: usize, n_inputs: usize, mlp_hidden: &[usize]) -> Self {
        let dim = n_nodes * channels;
        Self {
            encoder: Dense::new(&format!("{prefix}.enc"), dim, latent, true),
            decoder: Dense::new(&format!("{prefix}.dec"), latent, dim, true),
            mlp: Mlp::new(&format!("{prefix}.mlp"), n_inputs, mlp_hidden, latent),
            n_nodes,
            channels,
            n_inputs,
            latent,
        }
    }

    /// Writes the basis as frozen encoder/decoder weights and initializes
    /// the MLP.
    pub fn init(&self, basis: &PodBasis, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        let dim = self.n_nodes * self.channels;
        if basis.dim != dim || basis.rank != self.latent {
            return Err(Error::Shape(format!(
                "basis is {}x{}, model needs {dim}x{}",
                basis.dim, basis.rank, self.latent
            )));
        }
        let scales = basis.coordinate_scales();
        let r = self.latent;
        // encoder: z = (x - mean) V / s
        let enc_w: Vec<f64> = (0..dim * r).map(|e| basis.modes[e] / scales[e % r]).collect();
        let enc_b: Vec<f64> = (0..r)
            .map(|k| -(0..dim).map(|i| basis.mean[i] * enc_w[i * r + k]).sum::<f64>())
            .collect();
        // decoder: x = mean + z (V s)^T
        let mut dec_w = vec![0.0; r * dim];
        for i in 0..dim {
            for k in 0..r {
                dec_w[k * dim + i] = basis.modes[i * r + k] * scales[k];
            }
        }
        let fixed = [
            (&self.encoder, enc_w, enc_b),
            (&self.decoder, dec_w, basis.mean.clone()),
        ];
        for (layer, w, b) in fixed {
            store.insert(&layer.weight, Tensor::matrix(layer.inputs, layer.outputs, w)?)?;
            store.freeze(&layer.weight)?;
            let bias = layer.bias.as_ref().expect("biased");
            store.insert(bias, Tensor::vector(b)?)?;
            store.freeze(bias)?;
        }
        self.mlp.init(store, rng, false)
    }
}

impl LatentModel for PodSurrogate {
    fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn latent_dim(&self) -> usize {
        self.latent
    }

    fn encode(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let batch = tape.dims(x).0 / self.n_nodes;
        let flat = tape.reshape(x, batch, self.n_nodes * self.channels)?;
        self.encoder.forward(tape, store, flat)
    }

    fn decode(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        let batch = tape.dims(z).0;
        let flat = self.decoder.forward(tape, store, z)?;
        tape.reshape(flat, batch * self.n_nodes, self.channels)
    }

    fn mlp(&self, tape: &mut Tape, store: &ParamStore, inputs: Var) -> Result<Var> {
        self.mlp.forward(tape, store, inputs)
    }
}
