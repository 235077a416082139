//! Level-to-level refinement: a frozen coarse surrogate plus trainable
//! residual networks and an adaptive upsampler on a finer level.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Trajectory;
use crate::nn::{Dense, NodeMap, ParamStore, Tape, Tensor, Var};
use crate::sampling::{Hierarchy, SelectionMatrix};
use crate::sparse::CsrMatrix;
use crate::surrogate::{level_prefix, predict, LatentModel, Normalizer, Surrogate, SurrogateArch, SurrogateLevel};

/// Trainable linear lift of coarse node states to a finer level, initialized
/// from the static upsampling operator. Each channel is lifted separately
/// with the same node weights at initialization.
#[derive(Debug, Clone)]
pub struct AdaptiveUpsampler {
    kind: UpsamplerKind,
    bias: String,
    n_coarse: usize,
    n_fine: usize,
    channels: usize,
}

#[derive(Debug, Clone)]
enum UpsamplerKind {
    Dense(Dense),
    /// Restricted to the entries of the static operator; `pattern` is the
    /// `(n_fine * c) x (n_coarse * c)` channel-wise expansion.
    Sparse { values: String, pattern: Arc<CsrMatrix> },
}

impl AdaptiveUpsampler {
    /// Structure only. `upsampling` is `n_fine x n_coarse`.
    pub fn new(prefix: &str, upsampling: &CsrMatrix, channels: usize, sparse: bool) -> Result<Self> {
        let (n_fine, n_coarse) = (upsampling.rows(), upsampling.cols());
        if channels == 0 || n_fine == 0 || n_coarse == 0 {
            return Err(Error::Argument("upsampler needs nodes and channels".into()));
        }
        let kind = if sparse {
            UpsamplerKind::Sparse {
                values: format!("{prefix}.values"),
                pattern: Arc::new(expand_channels(upsampling, channels)?),
            }
        } else {
            UpsamplerKind::Dense(Dense::new(prefix, n_coarse * channels, n_fine * channels, false))
        };
        Ok(Self {
            kind,
            bias: format!("{prefix}.bias"),
            n_coarse,
            n_fine,
            channels,
        })
    }

    /// Sets the weights to reproduce `upsampling` exactly, with zero bias.
    pub fn init(&self, upsampling: &CsrMatrix, store: &mut ParamStore) -> Result<()> {
        if upsampling.rows() != self.n_fine || upsampling.cols() != self.n_coarse {
            return Err(Error::Shape("upsampling operator does not match the upsampler".into()));
        }
        let c = self.channels;
        match &self.kind {
            UpsamplerKind::Dense(d) => {
                let mut w = vec![0.0; d.inputs * d.outputs];
                for (p, q, v) in upsampling.triplets() {
                    for ch in 0..c {
                        w[(q * c + ch) * d.outputs + p * c + ch] = v;
                    }
                }
                store.insert(&d.weight, Tensor::matrix(d.inputs, d.outputs, w)?)?;
            }
            UpsamplerKind::Sparse { values, pattern } => {
                let expanded = expand_channels(upsampling, c)?;
                let v: Vec<f64> = expanded.triplets().map(|(_, _, v)| v).collect();
                debug_assert_eq!(v.len(), pattern.nnz());
                store.insert(values, Tensor::vector(v)?)?;
            }
        }
        store.insert(&self.bias, Tensor::vector(vec![0.0; self.n_fine * c])?)?;
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        let w = match &self.kind {
            UpsamplerKind::Dense(d) => d.inputs * d.outputs,
            UpsamplerKind::Sparse { pattern, .. } => pattern.nnz(),
        };
        w + self.n_fine * self.channels
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.kind, UpsamplerKind::Sparse { .. })
    }

    /// Lifts `(batch * n_coarse) x c` to `(batch * n_fine) x c`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let (rows, c) = tape.dims(x);
        if c != self.channels || rows % self.n_coarse != 0 {
            return Err(Error::Shape(format!(
                "upsampler expects (batch*{}) x {} input, got {rows} x {c}",
                self.n_coarse, self.channels
            )));
        }
        let batch = rows / self.n_coarse;
        let flat = tape.reshape(x, batch, self.n_coarse * c)?;
        let b = tape.param(store, &self.bias)?;
        let y = match &self.kind {
            UpsamplerKind::Dense(d) => {
                let w = tape.param(store, &d.weight)?;
                tape.affine(flat, w, Some(b))?
            }
            UpsamplerKind::Sparse { values, pattern } => {
                let v = tape.param(store, values)?;
                tape.sparse_affine(flat, pattern, v, Some(b))?
            }
        };
        tape.reshape(y, batch * self.n_fine, c)
    }
}

/// `(p, q, v)` becomes `(p*c + ch, q*c + ch, v)` for every channel.
fn expand_channels(m: &CsrMatrix, c: usize) -> Result<CsrMatrix> {
    CsrMatrix::from_triplets(
        m.rows() * c,
        m.cols() * c,
        m.triplets().flat_map(|(p, q, v)| (0..c).map(move |ch| (p * c + ch, q * c + ch, v))),
    )
}

/// Selection and upsampling between two levels of a hierarchy, composed
/// through the levels in between.
pub fn operators_between(h: &Hierarchy, fine: usize, coarse: usize) -> Result<(SelectionMatrix, CsrMatrix)> {
    if fine >= coarse || coarse >= h.n_levels() {
        return Err(Error::Argument(format!(
            "cannot refine from level {coarse} to {fine} in a {}-level hierarchy",
            h.n_levels()
        )));
    }
    let mut sel = h.transition(fine)?.selection.clone();
    let mut up = h.transition(fine)?.upsampling.matrix().clone();
    for l in fine + 1..coarse {
        let t = h.transition(l)?;
        sel = t.selection.compose(&sel)?;
        up = up.matmul(t.upsampling.matrix())?;
    }
    Ok((sel, up))
}

/// A surrogate on a finer level built around a frozen coarser one:
///
/// * encoder: `coarse.encode(D x) + residual.encode(x)`
/// * decoder: `upsampler(coarse.decode(z)) + residual.decode(z)`
/// * MLP: `zc + residual.mlp([inputs, zc])` with `zc = coarse.mlp(inputs)`
///
/// The residual networks start with zeroed output layers and the upsampler
/// with the static operator, so a fresh refinement reproduces the coarse
/// surrogate lifted to the finer level.
#[derive(Debug, Clone)]
pub struct RefinedSurrogate {
    level: usize,
    coarse: Surrogate,
    residual: SurrogateLevel,
    selection: Arc<NodeMap>,
    upsampler: AdaptiveUpsampler,
}

impl RefinedSurrogate {
    /// Structure only.
    pub fn new(coarse: Surrogate, h: &Hierarchy, level: usize, sparse_theta: bool) -> Result<Self> {
        let (sel, up) = operators_between(h, level, coarse.level())?;
        let arch = coarse.arch().clone();
        let prefix = level_prefix(level);
        let lap = Arc::clone(&h.level(level)?.scaled_laplacian);
        let residual = SurrogateLevel::new(&prefix, level, &lap, &arch, coarse.n_inputs() + arch.latent)?;
        let upsampler = AdaptiveUpsampler::new(&format!("{prefix}.up"), &up, arch.state_channels(), sparse_theta)?;
        Ok(Self {
            level,
            coarse,
            residual,
            selection: Arc::new(NodeMap::new(sel.to_csr())),
            upsampler,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coarse(&self) -> &Surrogate {
        &self.coarse
    }

    pub fn residual(&self) -> &SurrogateLevel {
        &self.residual
    }

    pub fn upsampler(&self) -> &AdaptiveUpsampler {
        &self.upsampler
    }

    pub fn n_nodes(&self) -> usize {
        self.residual.n_nodes()
    }

    pub fn channels(&self) -> usize {
        self.residual.channels()
    }

    pub fn n_inputs(&self) -> usize {
        self.coarse.n_inputs()
    }

    pub fn latent_dim(&self) -> usize {
        self.residual.latent_dim()
    }

    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let xc = tape.node_map(x, &self.selection)?;
        let zc = self.coarse.encode(tape, store, xc)?;
        let zr = self.residual.encode(tape, store, x)?;
        tape.add(zc, zr)
    }

    pub fn decode(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        let yc = self.coarse.decode(tape, store, z)?;
        let lifted = self.upsampler.forward(tape, store, yc)?;
        let yr = self.residual.decode(tape, store, z)?;
        tape.add(lifted, yr)
    }

    pub fn mlp(&self, tape: &mut Tape, store: &ParamStore, inputs: Var) -> Result<Var> {
        let zc = self.coarse.mlp(tape, store, inputs)?;
        let cat = tape.concat_cols(&[inputs, zc])?;
        let r = self.residual.mlp(tape, store, cat)?;
        tape.add(zc, r)
    }
}

/// Freezes every existing parameter, then adds and initializes the networks
/// of `level` on top of `coarse`.
pub fn refine(
    coarse: Surrogate,
    h: &Hierarchy,
    level: usize,
    store: &mut ParamStore,
    rng: &mut impl Rng,
    sparse_theta: bool,
) -> Result<Surrogate> {
    store.freeze_all();
    let r = RefinedSurrogate::new(coarse, h, level, sparse_theta)?;
    r.residual.init(store, rng, true)?;
    let (_, up) = operators_between(h, level, r.coarse.level())?;
    r.upsampler.init(&up, store)?;
    Ok(Surrogate::Refined(Box::new(r)))
}

/// Rebuilds the structure of a chain (levels coarsest first) without
/// touching any parameters.
pub fn build_chain(h: &Hierarchy, levels: &[usize], arch: &SurrogateArch, sparse_theta: bool) -> Result<Surrogate> {
    let (&base, rest) = levels
        .split_first()
        .ok_or_else(|| Error::Argument("empty level chain".into()))?;
    let lap = Arc::clone(&h.level(base)?.scaled_laplacian);
    let mut s = Surrogate::Base(SurrogateLevel::new(&level_prefix(base), base, &lap, arch, arch.n_inputs)?);
    for &l in rest {
        s = Surrogate::Refined(Box::new(RefinedSurrogate::new(s, h, l, sparse_theta)?));
    }
    Ok(s)
}

/// Freezes everything except the networks owned by the finest member of
/// `model`; used before continuing training of a loaded checkpoint.
pub fn freeze_all_but_finest(model: &Surrogate, store: &mut ParamStore) {
    let own = format!("{}.", level_prefix(model.level()));
    let names: Vec<String> = store.names().iter().filter(|n| !n.starts_with(&own)).cloned().collect();
    for n in names {
        store.freeze(&n).expect("name from store");
    }
}

/// Lifts a level-`level` trajectory to the full mesh with the composed
/// static upsampling operators.
pub fn lift_to_full(traj: &Trajectory, h: &Hierarchy, level: usize) -> Result<Trajectory> {
    traj.map_nodes(h.lift_to_0(level)?)
}

/// What `fine` adds on top of `coarse`: the difference of their predictions
/// for `(mu, times)`, both lifted to the full mesh.
pub fn level_contribution(
    fine: &Surrogate,
    coarse: &Surrogate,
    store: &ParamStore,
    norm: &Normalizer,
    h: &Hierarchy,
    mu: &[f64],
    times: &[f64],
) -> Result<Trajectory> {
    let lifted = |m: &Surrogate| lift_to_full(&predict(m, store, norm, mu, times)?, h, m.level());
    let (a, b) = (lifted(fine)?, lifted(coarse)?);
    let delta = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    Trajectory::new(a.times(), a.nodes(), a.channels(), delta)
}

/// Everything needed besides the weights to rebuild a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub arch: SurrogateArch,
    /// Levels of the chain, coarsest first.
    pub levels: Vec<usize>,
    #[serde(default)]
    pub sparse_theta: bool,
    /// Hierarchy manifest; relative paths resolve against the metadata file.
    pub hierarchy: PathBuf,
}

impl ModelMeta {
    /// Metadata file accompanying a weight file: `<weights>.json`.
    pub fn sidecar(weights: &Path) -> PathBuf {
        let mut s = weights.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut m: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if m.hierarchy.is_relative() {
            if let Some(dir) = path.parent() {
                m.hierarchy = dir.join(&m.hierarchy);
            }
        }
        m.arch.validate()?;
        Ok(m)
    }

    pub fn build(&self, h: &Hierarchy) -> Result<Surrogate> {
        build_chain(h, &self.levels, &self.arch, self.sparse_theta)
    }
}
